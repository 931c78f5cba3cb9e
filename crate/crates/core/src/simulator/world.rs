use nalgebra::{DMatrix, DVector, RowDVector, Vector2, Vector3};

use super::actuator::ActuatorBank;
use super::ground::GroundModel;
use crate::error::{Error, Result};
use crate::rigid_body::dynamics::{dynamics_kin, foot_jacobian_kin, foot_position};
use crate::rigid_body::{GeneralizedState, Kinematics, RobotModel};

/// Coordinates beyond this magnitude count as divergence.
const STATE_LIMIT: f64 = 1e4;
const MAX_MODE_PASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Off,
    Stick,
    /// Sliding with the friction force along `+-x`.
    Slide(f64),
}

/// Contact force of one foot, affine in the end-of-step velocity:
/// `lambda = e - B v`.
struct Linearized {
    foot: usize,
    e_n: f64,
    e_t: f64,
    jx: RowDVector<f64>,
    jz: RowDVector<f64>,
    d_n: f64,
    d_t: f64,
    x_mid: f64,
    mode: Mode,
}

impl Linearized {
    fn rows(&self, mu: f64) -> (f64, RowDVector<f64>, f64, RowDVector<f64>) {
        let (en, bn) = (self.e_n, &self.jz * self.d_n);
        match self.mode {
            Mode::Off => (0.0, RowDVector::zeros(self.jx.len()), 0.0, RowDVector::zeros(self.jx.len())),
            Mode::Stick => (self.e_t, &self.jx * self.d_t, en, bn),
            Mode::Slide(s) => (s * mu * en, &bn * (s * mu), en, bn),
        }
    }

    fn force(&self, mu: f64, v: &DVector<f64>) -> Vector2<f64> {
        let (et, bt, en, bn) = self.rows(mu);
        Vector2::new(et - (bt * v)[0], en - (bn * v)[0])
    }
}

/// Robot, actuators and ground advanced at a fixed period.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub model: RobotModel<f64>,
    pub state: GeneralizedState<f64>,
    pub time: f64,
    pub dt: f64,
    /// Physics substeps per period; the applied torque is held across them.
    pub substeps: usize,
    pub actuators: ActuatorBank,
    pub ground: GroundModel,
    /// External wrench `(fx, fz, my)` on the base origin.
    pub external: Vector3<f64>,
    anchors: Vec<Option<f64>>,
    forces: Vec<Vector2<f64>>,
}

impl SimWorld {
    pub fn new(
        model: RobotModel<f64>,
        state: GeneralizedState<f64>,
        ground: GroundModel,
        actuators: ActuatorBank,
        dt: f64,
    ) -> Result<Self> {
        model.check_state(&state)?;
        ground.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("simulation period must be positive".into()));
        }
        if actuators.len() != model.actuated() {
            return Err(Error::DimensionMismatch {
                what: "actuator bank",
                expected: model.actuated(),
                found: actuators.len(),
            });
        }
        let feet = model.feet().len();
        Ok(Self {
            model,
            state,
            time: 0.0,
            dt,
            substeps: 1,
            actuators,
            ground,
            external: Vector3::zeros(),
            anchors: vec![None; feet],
            forces: vec![Vector2::zeros(); feet],
        })
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    /// Ground force on each foot at the end of the last step, world `(x, z)`.
    pub fn contact_forces(&self) -> &[Vector2<f64>] {
        &self.forces
    }

    pub fn in_contact(&self, foot: usize) -> bool {
        self.forces[foot].y > 0.0
    }

    pub fn foot_positions(&self) -> Vec<Vector2<f64>> {
        // the state is checked on construction and after every step
        let kin = Kinematics::new(&self.model, &self.state).expect("valid state");
        (0..self.model.feet().len()).map(|f| foot_position(&self.model, &kin, f)).collect()
    }

    /// Ground height below each foot minus the foot height.
    pub fn penetrations(&self) -> Vec<f64> {
        self.foot_positions().iter().map(|p| self.ground.profile.height(p.x, self.time) - p.y).collect()
    }

    /// Filters the command through the actuators and advances one period.
    /// On divergence the state of the last good step is kept.
    pub fn step(&mut self, tau_cmd: &DVector<f64>) -> Result<()> {
        let nb = self.model.base_dof();
        let joint_velocity = self.state.qd.rows(nb, self.model.actuated()).into_owned();
        let tau = self.actuators.step(tau_cmd, &joint_velocity)?.clone();
        let h = self.dt / self.substeps as f64;
        let backup = (self.state.clone(), self.anchors.clone(), self.forces.clone(), self.time);
        for _ in 0..self.substeps {
            let ok = self.substep(&tau, h).is_ok_and(|_| self.state_is_sane());
            if !ok {
                let time = self.time;
                (self.state, self.anchors, self.forces, self.time) = backup;
                return Err(Error::SimulationDiverged { time });
            }
            self.time += h;
        }
        Ok(())
    }

    fn state_is_sane(&self) -> bool {
        self.state.q.iter().chain(self.state.qd.iter()).all(|v| v.is_finite() && v.abs() < STATE_LIMIT)
    }

    /// Explicit midpoint for the smooth terms; contact forces are taken at
    /// the end of the step, linearized in the new velocity.
    fn substep(&mut self, tau: &DVector<f64>, h: f64) -> Result<()> {
        let model = &self.model;
        let n = model.dof();
        let nb = model.base_dof();
        let (q, v) = (&self.state.q, &self.state.qd);

        let mut generalized = DVector::zeros(n);
        generalized.rows_mut(nb, tau.len()).copy_from(tau);
        for i in 0..nb.min(3) {
            generalized[i] += self.external[i];
        }

        // predictor with the previous contact forces
        let kin0 = Kinematics::new(model, &self.state)?;
        let d0 = dynamics_kin(model, &kin0, v);
        let mut f0 = &generalized - &d0.c - &d0.g;
        for (foot, lam) in self.forces.iter().enumerate() {
            if lam.y > 0.0 {
                f0 += foot_jacobian_kin(model, &kin0, &[foot]).transpose() * DVector::from_column_slice(lam.as_slice());
            }
        }
        let a0 = solve_spd(&d0.m, &f0)?;
        let mid = GeneralizedState::new(q + v * (0.5 * h), v + a0 * (0.5 * h));

        let kin = Kinematics::new(model, &mid)?;
        let dm = dynamics_kin(model, &kin, &mid.qd);
        let t_end = self.time + h;
        let g = &self.ground;
        let (k, d, mu) = (g.stiffness, g.damping, g.friction);
        let mut contacts = Vec::new();
        for foot in 0..model.feet().len() {
            let p = foot_position(model, &kin, foot);
            let j = foot_jacobian_kin(model, &kin, &[foot]);
            let (jx, jz) = (j.row(0).into_owned(), j.row(1).into_owned());
            let ground_z = g.profile.height(p.x, t_end);
            let z_pred = p.y + 0.5 * h * (&jz * &mid.qd)[0];
            if z_pred >= ground_z {
                self.anchors[foot] = None;
                continue;
            }
            let anchor = *self.anchors[foot].get_or_insert(p.x);
            contacts.push(Linearized {
                foot,
                e_n: k * (ground_z - p.y) + d * g.profile.height_rate(p.x, t_end),
                e_t: -k * (p.x - anchor),
                jx,
                jz,
                d_n: 0.5 * k * h + d,
                d_t: 0.5 * k * h + d,
                x_mid: p.x,
                mode: Mode::Stick,
            });
        }

        let base_rhs = &dm.m * v + (&generalized - &dm.c - &dm.g) * h;
        let mut v_new = DVector::zeros(n);
        for _ in 0..MAX_MODE_PASSES {
            let mut a = dm.m.clone();
            let mut rhs = base_rhs.clone();
            for c in &contacts {
                let (et, bt, en, bn) = c.rows(mu);
                a += (c.jx.transpose() * bt + c.jz.transpose() * bn) * h;
                rhs += (c.jx.transpose() * et + c.jz.transpose() * en) * h;
            }
            v_new = a.lu().solve(&rhs).ok_or(Error::SimulationDiverged { time: self.time })?;
            let mut changed = false;
            for c in &mut contacts {
                let lam = c.force(mu, &v_new);
                match c.mode {
                    Mode::Off => {}
                    _ if lam.y < 0.0 => {
                        c.mode = Mode::Off;
                        changed = true;
                    }
                    Mode::Stick if lam.x.abs() > mu * lam.y => {
                        c.mode = Mode::Slide(lam.x.signum());
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }

        self.forces.iter_mut().for_each(|f| *f = Vector2::zeros());
        for c in &contacts {
            let lam = c.force(mu, &v_new);
            match c.mode {
                Mode::Off => self.anchors[c.foot] = None,
                Mode::Stick => self.forces[c.foot] = lam,
                Mode::Slide(_) => {
                    self.forces[c.foot] = lam;
                    let x_end = c.x_mid + 0.5 * h * (&c.jx * &v_new)[0];
                    self.anchors[c.foot] = Some(x_end + lam.x / k);
                }
            }
        }
        self.state.q += (v + &v_new) * (0.5 * h);
        self.state.qd = v_new;
        Ok(())
    }
}

fn solve_spd(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| Error::InvalidModel("mass matrix is not positive definite".into()))
}

/// Free-function form of [`SimWorld::step`].
pub fn step_world(world: &mut SimWorld, tau_cmd: &DVector<f64>) -> Result<()> {
    world.step(tau_cmd)
}
