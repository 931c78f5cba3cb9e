use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector2};

use super::scenario::{ComSample, ControllerKind, Scenario};
use crate::com_qp::{com_control, pd_correct, ComReference, ComState, ForceDistributor, FrictionPyramid, PdGains};
use crate::decomposition::{decompose, map_subsystem_torques, Decomposition, DecouplingConfig};
use crate::error::{Error, Result};
use crate::imc_force::{ImcBank, ImcFilterConfig, NominalActuatorModel};
use crate::rigid_body::{foot_bias_acceleration, GeneralizedState, PlanarQuadrupedParams, RobotModel};
use crate::swing_ctrl::{swing_track, SwingGains, SwingSample, SwingTarget};

/// Settings shared by both controllers; the joint gains are used by the
/// baseline only, the IMC settings by the IMC stack only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub com_gains: PdGains<f64>,
    pub swing_gains: SwingGains<f64>,
    /// Friction coefficient assumed by the force distribution.
    pub friction: f64,
    pub nominal: NominalActuatorModel<f64>,
    pub filters: ImcFilterConfig<f64>,
    pub deadzone: f64,
    /// N m/rad
    pub joint_kp: f64,
    /// N m s/rad
    pub joint_kd: f64,
    /// Foot unloading time before lift-off and loading time after
    /// touchdown, s.
    pub load_transition: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            com_gains: PdGains::default(),
            swing_gains: SwingGains::default(),
            friction: 0.6,
            nominal: NominalActuatorModel::default_hyq(),
            filters: ImcFilterConfig::default(),
            deadzone: 0.0,
            joint_kp: 300.0,
            joint_kd: 8.0,
            load_transition: 0.15,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.com_gains.validate()?;
        self.nominal.validate()?;
        self.filters.validate()?;
        let s = &self.swing_gains;
        if !(s.kp >= 0.0 && s.kd >= 0.0 && self.joint_kp >= 0.0 && self.joint_kd >= 0.0) {
            return Err(Error::InvalidParameter("controller gains must be non-negative".into()));
        }
        if !(self.friction > 0.0) || !(self.deadzone >= 0.0) || !(self.load_transition >= 0.0) {
            return Err(Error::InvalidParameter("friction must be positive and deadzone non-negative".into()));
        }
        Ok(())
    }
}

/// One control period's output.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub tau: DVector<f64>,
    /// Reference contact force per foot, zero for swing feet.
    pub lambda_ref: Vec<Vector2<f64>>,
    pub com_ref: ComSample,
    pub qp_time: Duration,
}

pub trait Controller {
    /// `measured` holds the sensed ground force of every foot.
    fn compute(
        &mut self,
        t: f64,
        state: &GeneralizedState<f64>,
        measured: &[Vector2<f64>],
        scenario: &Scenario,
    ) -> Result<ControlOutput>;
}

pub fn make_controller(
    kind: ControllerKind,
    config: &ControllerConfig,
    params: &PlanarQuadrupedParams,
    dt: f64,
) -> Result<Box<dyn Controller>> {
    config.validate()?;
    let model = params.build::<f64>()?;
    Ok(match kind {
        ControllerKind::Imc => Box::new(ImcStack::new(model, config, dt)?),
        ControllerKind::Baseline => Box::new(Baseline::new(model, params.clone(), config)),
    })
}

/// CoM PD plus force distribution; common front end of both controllers.
struct ComStage {
    gains: PdGains<f64>,
    friction: f64,
    transition: f64,
    distributor: ForceDistributor<f64>,
}

struct ComOutput {
    dec: Decomposition<f64>,
    lambda: DVector<f64>,
    state: ComState<f64>,
    reference: ComReference<f64>,
    sample: ComSample,
    qp_time: Duration,
}

impl ComStage {
    fn run(
        &mut self,
        model: &RobotModel<f64>,
        t: f64,
        state: &GeneralizedState<f64>,
        scenario: &Scenario,
    ) -> Result<ComOutput> {
        let stance = scenario.stance_at(t);
        let dec = decompose(model, state, &stance)?;
        let com_state = ComState::from_subsystem(&dec.com, state.q[2]);
        let sample = scenario.plan.com.sample(t);
        let reference = ComReference::Acceleration { x: sample.x, xd: sample.xd, xdd: sample.xdd };
        let weight = dec.com.mass * model.gravity().norm();
        let mut pyramid = FrictionPyramid::planar(self.friction, stance.len());
        for (c, &f) in stance.iter().enumerate() {
            let share = scenario.plan.load_factor(f, t, self.transition);
            if share < 1.0 {
                pyramid = pyramid.with_normal_limit(c, share * weight);
            }
        }
        let start = Instant::now();
        let dist = com_control(&reference, &dec.com, &com_state, &self.gains, &pyramid, &mut self.distributor)?;
        let qp_time = start.elapsed();
        Ok(ComOutput { dec, lambda: dist.lambda, state: com_state, reference, sample, qp_time })
    }
}

fn per_foot(stance: &[usize], stacked: &DVector<f64>, feet: usize) -> Vec<Vector2<f64>> {
    let mut out = vec![Vector2::zeros(); feet];
    for (r, &f) in stance.iter().enumerate() {
        out[f] = Vector2::new(stacked[2 * r], stacked[2 * r + 1]);
    }
    out
}

/// Swing references of the swing feet; feet without a scripted swing hold
/// their position.
fn swing_samples(dec: &Decomposition<f64>, scenario: &Scenario, t: f64) -> Vec<SwingSample<f64>> {
    dec.swing
        .iter()
        .enumerate()
        .map(|(r, &f)| {
            scenario.plan.swing_at(f, t).unwrap_or(SwingSample {
                p: Vector2::new(dec.swing_position[2 * r], dec.swing_position[2 * r + 1]),
                v: Vector2::zeros(),
                a: Vector2::zeros(),
            })
        })
        .collect()
}

/// Contact forces under IMC, swing legs under inverse dynamics, recombined
/// as coequal tasks.
pub struct ImcStack {
    model: RobotModel<f64>,
    com: ComStage,
    bank: ImcBank<f64>,
    swing_gains: SwingGains<f64>,
    coupling: DecouplingConfig<f64>,
}

impl ImcStack {
    pub fn new(model: RobotModel<f64>, config: &ControllerConfig, dt: f64) -> Result<Self> {
        let feet = model.feet().len();
        let bank = ImcBank::new(feet, config.nominal, &config.filters, dt, config.deadzone)?;
        let coupling = DecouplingConfig::coequal(model.actuated());
        Ok(Self {
            model,
            com: ComStage {
                gains: config.com_gains,
                friction: config.friction,
                transition: config.load_transition,
                distributor: ForceDistributor::new(),
            },
            bank,
            swing_gains: config.swing_gains,
            coupling,
        })
    }
}

impl Controller for ImcStack {
    fn compute(
        &mut self,
        t: f64,
        state: &GeneralizedState<f64>,
        measured: &[Vector2<f64>],
        scenario: &Scenario,
    ) -> Result<ControlOutput> {
        let c = self.com.run(&self.model, t, state, scenario)?;
        let dec = &c.dec;
        let meas = DVector::from_iterator(
            2 * dec.stance.len(),
            dec.stance.iter().flat_map(|&f| [measured[f].x, measured[f].y]),
        );
        let cmd = self.bank.command(&dec.contact, &dec.stance, &c.lambda, &meas)?;
        let target = SwingTarget::from_samples(&swing_samples(dec, scenario, t));
        let tau_nc = swing_track(
            &dec.noncontact,
            &target,
            &dec.swing_position,
            &dec.swing_velocity,
            &self.swing_gains,
            &c.lambda,
        )?;
        let tau = map_subsystem_torques(&cmd.tau_c, &tau_nc, &dec.contact.sc, &dec.noncontact.snc, &self.coupling)?;
        Ok(ControlOutput {
            tau,
            lambda_ref: per_foot(&dec.stance, &c.lambda, self.model.feet().len()),
            com_ref: c.sample,
            qp_time: c.qp_time,
        })
    }
}

/// Rigid-contact inverse dynamics with joint-space PD: the comparison
/// controller. Uses the same CoM controller and force distribution.
pub struct Baseline {
    model: RobotModel<f64>,
    params: PlanarQuadrupedParams,
    com: ComStage,
    swing_gains: SwingGains<f64>,
    kp: f64,
    kd: f64,
}

impl Baseline {
    pub fn new(model: RobotModel<f64>, params: PlanarQuadrupedParams, config: &ControllerConfig) -> Self {
        Self {
            model,
            params,
            com: ComStage {
                gains: config.com_gains,
                friction: config.friction,
                transition: config.load_transition,
                distributor: ForceDistributor::new(),
            },
            swing_gains: config.swing_gains,
            kp: config.joint_kp,
            kd: config.joint_kd,
        }
    }
}

impl Controller for Baseline {
    fn compute(
        &mut self,
        t: f64,
        state: &GeneralizedState<f64>,
        _measured: &[Vector2<f64>],
        scenario: &Scenario,
    ) -> Result<ControlOutput> {
        let c = self.com.run(&self.model, t, state, scenario)?;
        let dec = &c.dec;
        let n = self.model.dof();
        let nb = self.model.base_dof();
        let base_acc = pd_correct(&c.reference, &c.state, &self.com.gains);
        let swings = swing_samples(dec, scenario, t);
        let g = &self.swing_gains;

        // stance feet fixed, base and swing feet on their references
        let nc = dec.contact.jc.nrows();
        let nsw = dec.noncontact.jnc.nrows();
        let mut a = DMatrix::zeros(nc + nb + nsw, n);
        a.rows_mut(0, nc).copy_from(&dec.contact.jc);
        for i in 0..nb {
            a[(nc + i, i)] = 1.0;
        }
        a.rows_mut(nc + nb, nsw).copy_from(&dec.noncontact.jnc);
        let mut acc = DVector::zeros(a.nrows());
        let mut vel = DVector::zeros(a.nrows());
        if !dec.stance.is_empty() {
            acc.rows_mut(0, nc).copy_from(&(-foot_bias_acceleration(&self.model, state, &dec.stance)?));
        }
        acc.rows_mut(nc, nb).copy_from(&DVector::from_column_slice(base_acc.as_slice()));
        vel.rows_mut(nc, nb).copy_from(&DVector::from_column_slice(c.sample.xd.as_slice()));
        if !dec.swing.is_empty() {
            let bias = foot_bias_acceleration(&self.model, state, &dec.swing)?;
            for (r, s) in swings.iter().enumerate() {
                let p = Vector2::new(dec.swing_position[2 * r], dec.swing_position[2 * r + 1]);
                let v = Vector2::new(dec.swing_velocity[2 * r], dec.swing_velocity[2 * r + 1]);
                let want = s.a + (s.p - p) * g.kp + (s.v - v) * g.kd;
                for k in 0..2 {
                    acc[nc + nb + 2 * r + k] = want[k] - bias[2 * r + k];
                    vel[nc + nb + 2 * r + k] = s.v[k];
                }
            }
        }
        let lu = a.lu();
        let singular = || Error::IllPosedDecomposition("baseline task Jacobian is singular".into());
        let qdd = lu.solve(&acc).ok_or_else(singular)?;
        let qd_des = lu.solve(&vel).ok_or_else(singular)?;

        let d = &dec.dynamics;
        let full = &d.m * qdd + &d.c + &d.g - dec.contact.jc.transpose() * &c.lambda;
        let mut tau = &d.s * full;

        // joint targets from the plan: base on the CoM reference, feet on
        // the planned footholds
        let com_now = c.state.x;
        let base = (state.q[0] + c.sample.x.x - com_now.x, state.q[1] + c.sample.x.y - com_now.y, c.sample.x.z);
        let feet: [Vector2<f64>; 4] = std::array::from_fn(|f| scenario.plan.foothold(f, t));
        let q_des = self.params.stance_configuration(base, &feet);
        let na = self.model.actuated();
        for i in 0..na {
            let j = nb + i;
            tau[i] += self.kp * (q_des[j] - state.q[j]) + self.kd * (qd_des[j] - state.qd[j]);
        }
        Ok(ControlOutput {
            tau,
            lambda_ref: per_foot(&dec.stance, &c.lambda, self.model.feet().len()),
            com_ref: c.sample,
            qp_time: c.qp_time,
        })
    }
}
