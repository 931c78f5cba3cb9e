//! Rigid-body dynamics of planar legged robots and task-space projection.

pub mod dynamics;
pub mod model;
pub mod spatial;
pub mod task;

pub use dynamics::{
    centroidal, compute_dynamics, foot_bias_acceleration, foot_jacobian, foot_positions, inverse_dynamics, mass_matrix,
    mechanical_energy, selection_matrix, Centroidal, JointSpaceDynamics, Kinematics,
};
pub use model::{
    wrap_angle, Foot, GeneralizedState, Joint, JointKind, Link, PlanarQuadrupedParams, RobotModel, LEG_NAMES,
};
pub use task::{dyn_consistent_pinv, numerical_rank, project_to_task, singular_values, TaskSpaceModel, RANK_TOLERANCE};
