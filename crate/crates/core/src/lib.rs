//! Whole-body motion control for fully actuated legged robots.
//!
//! Contact forces are tracked by per-channel Internal Model Control after
//! feedback linearization of the contact subsystem. The remaining degrees of
//! freedom are split into a centre-of-mass task (driven only through the
//! contact forces, distributed by a QP) and a non-contact task (swing legs),
//! and the subsystem torques are recombined so that the contact and
//! non-contact controllers do not disturb each other.
//!
//! The numerical modules are generic over the scalar type ([`Real`]); the
//! aliases below fix them to `f64` or `f32`. The simulator and configuration
//! layer work in `f64`.

// negated comparisons are used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod com_qp;
pub mod decomposition;
pub mod error;
pub mod imc_force;
pub mod rigid_body;
pub mod robustness;
pub mod scalar;
pub mod simulator;
pub mod swing_ctrl;

pub use error::{Error, Result};
pub use scalar::Real;

macro_rules! scalar_aliases {
    ($($f64:ident, $f32:ident => $m:ident::$t:ident;)*) => {
        $(
            pub type $f64 = $m::$t<f64>;
            pub type $f32 = $m::$t<f32>;
        )*
    };
}

scalar_aliases! {
    RobotModel, RobotModelF32 => rigid_body::RobotModel;
    GeneralizedState, GeneralizedStateF32 => rigid_body::GeneralizedState;
    JointSpaceDynamics, JointSpaceDynamicsF32 => rigid_body::JointSpaceDynamics;
    TaskSpaceModel, TaskSpaceModelF32 => rigid_body::TaskSpaceModel;
    Decomposition, DecompositionF32 => decomposition::Decomposition;
    DecouplingConfig, DecouplingConfigF32 => decomposition::DecouplingConfig;
    NominalActuatorModel, NominalActuatorModelF32 => imc_force::NominalActuatorModel;
    ImcFilterConfig, ImcFilterConfigF32 => imc_force::ImcFilterConfig;
    ImcChannel, ImcChannelF32 => imc_force::ImcChannel;
    ImcBank, ImcBankF32 => imc_force::ImcBank;
    UncertaintySpec, UncertaintySpecF32 => robustness::UncertaintySpec;
    PerformanceWeight, PerformanceWeightF32 => robustness::PerformanceWeight;
    PdGains, PdGainsF32 => com_qp::PdGains;
    FrictionPyramid, FrictionPyramidF32 => com_qp::FrictionPyramid;
    ForceDistributor, ForceDistributorF32 => com_qp::ForceDistributor;
    QpProblem, QpProblemF32 => com_qp::QpProblem;
    QpSolver, QpSolverF32 => com_qp::QpSolver;
    SwingReference, SwingReferenceF32 => swing_ctrl::SwingReference;
    SwingGains, SwingGainsF32 => swing_ctrl::SwingGains;
}
