//! Fixed-step planar simulation of the quadruped on spring-damper ground,
//! with scripted scenarios and an inverse-dynamics baseline controller.
//! Works in `f64` only.

pub mod actuator;
pub mod control;
pub mod ground;
pub mod log;
pub mod scenario;
pub mod world;

use std::fmt;

use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use actuator::{ActuatorBank, ActuatorParams};
pub use control::{make_controller, Baseline, ControlOutput, Controller, ControllerConfig, ImcStack};
pub use ground::{default_damping, GroundModel, GroundProfile};
pub use log::{LogRow, SimLog, SimSummary};
pub use scenario::{
    scripted_com_reference, ComSample, ComTrajectory, ControllerKind, Disturbance, GaitParams, GaitPlan, Scenario,
    StanceEvent, StandingPose, SwingPlan, CRAWL_ORDER, SCENARIOS,
};
pub use world::{step_world, SimWorld};

use crate::error::{Error, Result};
use crate::rigid_body::{centroidal, PlanarQuadrupedParams};

/// Control and simulation period, s.
pub const DEFAULT_DT: f64 = 0.0025;

/// Run settings that are not part of the scenario script.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub substeps: usize,
    /// Ground parameters; the profile comes from the scenario.
    pub ground: GroundModel,
    pub actuator: ActuatorParams,
    /// Standard deviation of the white noise on sensed contact forces, N.
    pub noise_std: f64,
    pub seed: u64,
    pub controller: ControllerConfig,
}

impl SimConfig {
    /// Defaults on flat ground of stiffness `ground_k`.
    pub fn new(ground_k: f64, params: &PlanarQuadrupedParams) -> Self {
        Self {
            dt: DEFAULT_DT,
            substeps: 1,
            ground: GroundModel::new(ground_k, 0.8, params.total_mass()),
            actuator: ActuatorParams::default(),
            noise_std: 0.0,
            seed: 0,
            controller: ControllerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.substeps == 0 || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter("need dt > 0, substeps >= 1, noise std >= 0".into()));
        }
        self.ground.validate()?;
        self.actuator.validate()?;
        self.controller.validate()
    }
}

/// A run that stopped early, with everything logged up to the fault.
#[derive(Debug, Clone)]
pub struct SimFault {
    pub error: Error,
    pub log: SimLog,
}

impl fmt::Display for SimFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} steps)", self.error, self.log.len())
    }
}

impl std::error::Error for SimFault {}

/// Runs the scenario's controller in closed loop for the scenario duration.
pub fn run_scenario(
    scenario: &Scenario,
    config: &SimConfig,
    params: &PlanarQuadrupedParams,
) -> std::result::Result<SimLog, SimFault> {
    let mut log = SimLog::new(&scenario.name, scenario.controller, config.dt);
    let setup = || -> Result<_> {
        scenario.validate()?;
        config.validate()?;
        let model = params.build::<f64>()?;
        let bank = ActuatorBank::uniform(model.actuated(), config.actuator, config.dt)?;
        let ground = config.ground.with_profile(scenario.ground);
        let world =
            SimWorld::new(model, scenario.initial.clone(), ground, bank, config.dt)?.with_substeps(config.substeps);
        let ctrl = make_controller(scenario.controller, &config.controller, params, config.dt)?;
        let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok((world, ctrl, noise))
    };
    let (mut world, mut ctrl, noise) = match setup() {
        Ok(v) => v,
        Err(error) => return Err(SimFault { error, log }),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let steps = (scenario.duration / config.dt).round() as usize;
    for k in 0..steps {
        let t = k as f64 * config.dt;
        world.external = scenario.external_wrench(t);
        let truth = world.contact_forces().to_vec();
        let sensed: Vec<_> = if config.noise_std > 0.0 {
            truth.iter().map(|f| f + nalgebra::Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng))).collect()
        } else {
            truth.clone()
        };
        let state = world.state.clone();
        let com = match centroidal(&world.model, &state) {
            Ok(c) => Vector3::new(c.com.x, c.com.y, state.q[2]),
            Err(error) => return Err(SimFault { error, log }),
        };
        let out = match ctrl.compute(t, &state, &sensed, scenario) {
            Ok(o) => o,
            Err(error) => return Err(SimFault { error, log }),
        };
        if let Err(error) = world.step(&out.tau) {
            return Err(SimFault { error, log });
        }
        log.rows.push(LogRow {
            t,
            q: state.q,
            qd: state.qd,
            com,
            com_ref: out.com_ref.x,
            contact: truth.iter().map(|f| f.y > 0.0).collect(),
            force: truth,
            force_ref: out.lambda_ref,
            tau_cmd: out.tau,
            tau_applied: world.actuators.applied().clone(),
            qp_time_us: out.qp_time.as_secs_f64() * 1e6,
        });
    }
    Ok(log)
}

/// Zero torque for every actuated joint.
pub fn zero_torque(world: &SimWorld) -> DVector<f64> {
    DVector::zeros(world.model.actuated())
}
