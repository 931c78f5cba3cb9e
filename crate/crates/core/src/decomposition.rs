//! Contact, centre-of-mass and non-contact subsystems, and the map that
//! recombines subsystem torques into joint torques.
//!
//! The contact subsystem lives in the range of the stance-foot Jacobian,
//! where the projected contact Jacobian is the identity and, for fixed
//! contacts, `C_c + G_c = S_c^T tau + lambda`. The non-contact subsystem uses
//! swing-foot Cartesian coordinates. The centre-of-mass subsystem is driven
//! only by the contact wrench.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::rigid_body::dynamics::{centroidal_kin, dynamics_kin, foot_bias_kin, foot_jacobian_kin, Kinematics};
use crate::rigid_body::task::{project_with_inverse, spd_inverse};
use crate::rigid_body::{numerical_rank, GeneralizedState, JointSpaceDynamics, RobotModel, RANK_TOLERANCE};
use crate::scalar::{lit, to_f64, Real};

/// Number of centre-of-mass coordinates of the planar model
/// (`x`, `z`, pitch).
pub const COM_DIM: usize = 3;

/// Contact-space dynamics with the contact acceleration constrained to zero.
#[derive(Debug, Clone)]
pub struct ContactSubsystem<T: Real> {
    pub cc: DVector<T>,
    pub gc: DVector<T>,
    /// Projected selection matrix (actuated x contact dim).
    pub sc: DMatrix<T>,
    /// Contact-space inertia, unused by the controller but kept for analysis.
    pub mc: DMatrix<T>,
    pub jc: DMatrix<T>,
    pub jc_dagger: DMatrix<T>,
}

impl<T: Real> ContactSubsystem<T> {
    fn empty(dof: usize, actuated: usize) -> Self {
        Self {
            cc: DVector::zeros(0),
            gc: DVector::zeros(0),
            sc: DMatrix::zeros(actuated, 0),
            mc: DMatrix::zeros(0, 0),
            jc: DMatrix::zeros(0, dof),
            jc_dagger: DMatrix::zeros(dof, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.cc.len()
    }

    /// Contact force implied by `tau_c` for rigid, non-slipping contacts.
    pub fn implied_force(&self, tau_c: &DVector<T>) -> DVector<T> {
        &self.cc + &self.gc - tau_c
    }

    pub fn sc_rank(&self) -> usize {
        numerical_rank(&self.sc, lit(1e-10))
    }
}

/// Builds the contact subsystem from the stacked stance Jacobian `jc` and its
/// bias acceleration `jc_dot_qd`.
pub fn build_contact_subsystem<T: Real>(
    dynamics: &JointSpaceDynamics<T>,
    jc: &DMatrix<T>,
    jc_dot_qd: &DVector<T>,
) -> Result<ContactSubsystem<T>> {
    let m_inv = spd_inverse(&dynamics.m)?;
    contact_with_inverse(dynamics, &m_inv, jc, jc_dot_qd)
}

fn contact_with_inverse<T: Real>(
    dynamics: &JointSpaceDynamics<T>,
    m_inv: &DMatrix<T>,
    jc: &DMatrix<T>,
    jc_dot_qd: &DVector<T>,
) -> Result<ContactSubsystem<T>> {
    if jc.nrows() == 0 {
        return Ok(ContactSubsystem::empty(dynamics.m.nrows(), dynamics.s.nrows()));
    }
    let t = project_with_inverse(dynamics, m_inv, jc, jc_dot_qd, jc).map_err(|e| match e {
        Error::SingularTask { sigma_min } => Error::SingularContact { sigma_min },
        other => other,
    })?;
    let n = jc.nrows();
    let err = (&t.jcx - DMatrix::<T>::identity(n, n)).norm();
    if !(err < lit(1e-9)) {
        return Err(Error::SingularContact { sigma_min: to_f64(err) });
    }
    Ok(ContactSubsystem { cc: t.cx, gc: t.gx, sc: t.sx, mc: t.mx, jc: t.jx, jc_dagger: t.jx_dagger })
}

/// Centre-of-mass dynamics
/// `M_com xdd_com + C_com + G_com = J_c,com^T lambda`
/// with coordinates `(x, z, pitch)`. The angular coordinate is the average
/// angular velocity `L_G / I_G`.
#[derive(Debug, Clone)]
pub struct ComSubsystem<T: Real> {
    pub mass: T,
    /// Centroidal rotational inertia `I_G`.
    pub inertia: T,
    pub inertia_rate: T,
    pub com: Vector2<T>,
    pub com_velocity: Vector2<T>,
    pub angular_velocity: T,
    pub m_com: DMatrix<T>,
    pub c_com: DVector<T>,
    pub g_com: DVector<T>,
    /// Contact dim x 3; the net wrench of `lambda` is `jc_com^T lambda`.
    pub jc_com: DMatrix<T>,
    /// Contact points the wrench map was built for.
    pub contact_points: Vec<Vector2<T>>,
}

impl<T: Real> ComSubsystem<T> {
    pub fn wrench(&self, lambda: &DVector<T>) -> DVector<T> {
        self.jc_com.transpose() * lambda
    }
}

/// Centre-of-mass subsystem with the wrench map of the feet in `feet`.
pub fn build_com_subsystem<T: Real>(
    model: &RobotModel<T>,
    state: &GeneralizedState<T>,
    feet: &[usize],
) -> Result<ComSubsystem<T>> {
    check_foot_ids(model, feet)?;
    let kin = Kinematics::new(model, state)?;
    Ok(com_from_kin(model, &kin, feet))
}

fn com_from_kin<T: Real>(model: &RobotModel<T>, kin: &Kinematics<T>, feet: &[usize]) -> ComSubsystem<T> {
    let cen = centroidal_kin(model, kin);
    let m = cen.mass;
    let omega = cen.average_angular_velocity();
    let z = T::zero();
    let mut m_com = DMatrix::zeros(COM_DIM, COM_DIM);
    m_com[(0, 0)] = m;
    m_com[(1, 1)] = m;
    m_com[(2, 2)] = cen.inertia;
    let c_com = DVector::from_vec(vec![z, z, cen.inertia_rate * omega]);
    let g = model.gravity();
    let g_com = DVector::from_vec(vec![-m * g.x, -m * g.y, z]);
    let mut jc_com = DMatrix::zeros(2 * feet.len(), COM_DIM);
    let mut points = Vec::with_capacity(feet.len());
    for (r, &f) in feet.iter().enumerate() {
        let foot = &model.feet()[f];
        let p = kin.point(foot.link, &foot.offset);
        let rel = p - cen.com;
        jc_com[(2 * r, 0)] = T::one();
        jc_com[(2 * r, 2)] = -rel.y;
        jc_com[(2 * r + 1, 1)] = T::one();
        jc_com[(2 * r + 1, 2)] = rel.x;
        points.push(p);
    }
    ComSubsystem {
        mass: m,
        inertia: cen.inertia,
        inertia_rate: cen.inertia_rate,
        com: cen.com,
        com_velocity: cen.com_velocity,
        angular_velocity: omega,
        m_com,
        c_com,
        g_com,
        jc_com,
        contact_points: points,
    }
}

/// Task-space dynamics of the swing-foot coordinates
/// `M_nc xdd_nc + C_nc + G_nc = tau_nc + J_c,nc^T lambda`.
#[derive(Debug, Clone)]
pub struct NoncontactSubsystem<T: Real> {
    pub mnc: DMatrix<T>,
    pub cnc: DVector<T>,
    pub gnc: DVector<T>,
    pub snc: DMatrix<T>,
    pub jc_nc: DMatrix<T>,
    pub jnc: DMatrix<T>,
}

impl<T: Real> NoncontactSubsystem<T> {
    pub fn dim(&self) -> usize {
        self.cnc.len()
    }
}

pub fn build_noncontact_subsystem<T: Real>(
    dynamics: &JointSpaceDynamics<T>,
    jnc: &DMatrix<T>,
    jnc_dot_qd: &DVector<T>,
    jc: &DMatrix<T>,
) -> Result<NoncontactSubsystem<T>> {
    let m_inv = spd_inverse(&dynamics.m)?;
    noncontact_with_inverse(dynamics, &m_inv, jnc, jnc_dot_qd, jc)
}

fn noncontact_with_inverse<T: Real>(
    dynamics: &JointSpaceDynamics<T>,
    m_inv: &DMatrix<T>,
    jnc: &DMatrix<T>,
    jnc_dot_qd: &DVector<T>,
    jc: &DMatrix<T>,
) -> Result<NoncontactSubsystem<T>> {
    let n = dynamics.m.nrows();
    if jnc.nrows() == 0 {
        return Ok(NoncontactSubsystem {
            mnc: DMatrix::zeros(0, 0),
            cnc: DVector::zeros(0),
            gnc: DVector::zeros(0),
            snc: DMatrix::zeros(dynamics.s.nrows(), 0),
            jc_nc: DMatrix::zeros(jc.nrows(), 0),
            jnc: DMatrix::zeros(0, n),
        });
    }
    let t = project_with_inverse(dynamics, m_inv, jnc, jnc_dot_qd, jc)?;
    Ok(NoncontactSubsystem { mnc: t.mx, cnc: t.cx, gnc: t.gx, snc: t.sx, jc_nc: t.jcx, jnc: t.jx })
}

/// All three subsystems at one state, for a given stance set. Feet not in
/// stance form the non-contact task.
#[derive(Debug, Clone)]
pub struct Decomposition<T: Real> {
    pub stance: Vec<usize>,
    pub swing: Vec<usize>,
    pub dynamics: JointSpaceDynamics<T>,
    pub contact: ContactSubsystem<T>,
    pub com: ComSubsystem<T>,
    pub noncontact: NoncontactSubsystem<T>,
    /// Swing-foot positions and velocities, stacked like the task Jacobian.
    pub swing_position: DVector<T>,
    pub swing_velocity: DVector<T>,
}

pub fn decompose<T: Real>(
    model: &RobotModel<T>,
    state: &GeneralizedState<T>,
    stance: &[usize],
) -> Result<Decomposition<T>> {
    check_foot_ids(model, stance)?;
    let mut stance: Vec<usize> = stance.to_vec();
    stance.sort_unstable();
    stance.dedup();
    let swing: Vec<usize> = (0..model.feet().len()).filter(|f| !stance.contains(f)).collect();

    let kin = Kinematics::new(model, state)?;
    let dynamics = dynamics_kin(model, &kin, &state.qd);
    let m_inv = spd_inverse(&dynamics.m)?;

    let jc = foot_jacobian_kin(model, &kin, &stance);
    let jc_bias = foot_bias_kin(model, &kin, &state.qd, &stance);
    let contact = contact_with_inverse(&dynamics, &m_inv, &jc, &jc_bias)?;

    let jnc = foot_jacobian_kin(model, &kin, &swing);
    let jnc_bias = foot_bias_kin(model, &kin, &state.qd, &swing);
    let noncontact = noncontact_with_inverse(&dynamics, &m_inv, &jnc, &jnc_bias, &jc)?;

    let expected = model.dof().saturating_sub(contact.dim() + COM_DIM);
    if noncontact.dim() != expected {
        return Err(Error::DimensionMismatch { what: "non-contact task dimension", expected, found: noncontact.dim() });
    }

    let mut swing_position = DVector::zeros(2 * swing.len());
    for (r, &f) in swing.iter().enumerate() {
        let foot = &model.feet()[f];
        let p = kin.point(foot.link, &foot.offset);
        swing_position[2 * r] = p.x;
        swing_position[2 * r + 1] = p.y;
    }
    let swing_velocity = &jnc * &state.qd;
    let com = com_from_kin(model, &kin, &stance);
    Ok(Decomposition { stance, swing, dynamics, contact, com, noncontact, swing_position, swing_velocity })
}

fn check_foot_ids<T: Real>(model: &RobotModel<T>, feet: &[usize]) -> Result<()> {
    match feet.iter().find(|&&f| f >= model.feet().len()) {
        Some(&f) => Err(Error::UnknownFoot(f)),
        None => Ok(()),
    }
}

/// Weighting and priorities of the torque map. `alpha_c = alpha_nc = true`
/// gives coequal tasks; setting only one gives that task precedence.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingConfig<T: Real> {
    pub w: DMatrix<T>,
    pub alpha_c: bool,
    pub alpha_nc: bool,
}

impl<T: Real> DecouplingConfig<T> {
    pub fn new(w: DMatrix<T>, alpha_c: bool, alpha_nc: bool) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::IllPosedDecomposition(format!("weighting matrix is {}x{}", w.nrows(), w.ncols())));
        }
        let rank = numerical_rank(&w, lit(RANK_TOLERANCE));
        if rank < w.nrows() {
            return Err(Error::IllPosedDecomposition(format!("weighting matrix has rank {rank} < {}", w.nrows())));
        }
        Ok(Self { w, alpha_c, alpha_nc })
    }

    pub fn coequal(actuated: usize) -> Self {
        Self { w: DMatrix::identity(actuated, actuated), alpha_c: true, alpha_nc: true }
    }

    /// Ratio of the extreme singular values of `W`.
    pub fn condition_number(&self) -> T {
        let sv = crate::rigid_body::singular_values(&self.w);
        match (sv.first(), sv.last()) {
            (Some(&hi), Some(&lo)) if lo > T::zero() => hi / lo,
            _ => T::max_value().unwrap_or(lit(f64::MAX)),
        }
    }
}

/// `W S (S^T W S)^-1 S^T W`, zero for an empty `S`.
fn weighted_projector<T: Real>(w: &DMatrix<T>, s: &DMatrix<T>, name: &str) -> Result<DMatrix<T>> {
    let n = w.nrows();
    if s.ncols() == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let ws = w * s;
    let swt = s.transpose() * w;
    let inner = s.transpose() * &ws;
    let sol =
        inner.lu().solve(&swt).ok_or_else(|| Error::IllPosedDecomposition(format!("{name}^T W {name} is singular")))?;
    Ok(ws * sol)
}

/// `W_x S (S^T W_x S)^-1 t`, zero for an empty `S`.
fn task_torque<T: Real>(wx: &DMatrix<T>, s: &DMatrix<T>, t: &DVector<T>, name: &str) -> Result<DVector<T>> {
    if s.ncols() == 0 {
        return Ok(DVector::zeros(wx.nrows()));
    }
    let ws = wx * s;
    let inner = s.transpose() * &ws;
    let y = inner
        .lu()
        .solve(t)
        .ok_or_else(|| Error::IllPosedDecomposition(format!("{name}^T W_{name} {name} is singular")))?;
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::IllPosedDecomposition(format!("{name}^T W_{name} {name} is singular")));
    }
    Ok(ws * y)
}

/// Maps contact and non-contact subsystem torques to actuated joint torques.
pub fn map_subsystem_torques<T: Real>(
    tau_c: &DVector<T>,
    tau_nc: &DVector<T>,
    sc: &DMatrix<T>,
    snc: &DMatrix<T>,
    cfg: &DecouplingConfig<T>,
) -> Result<DVector<T>> {
    let n = cfg.w.nrows();
    for (what, found) in [("S_c rows", sc.nrows()), ("S_nc rows", snc.nrows())] {
        if found != n {
            return Err(Error::DimensionMismatch { what, expected: n, found });
        }
    }
    if tau_c.len() != sc.ncols() {
        return Err(Error::DimensionMismatch { what: "contact torque", expected: sc.ncols(), found: tau_c.len() });
    }
    if tau_nc.len() != snc.ncols() {
        return Err(Error::DimensionMismatch {
            what: "non-contact torque",
            expected: snc.ncols(),
            found: tau_nc.len(),
        });
    }
    let w = &cfg.w;
    let w_c = if cfg.alpha_nc { w - weighted_projector(w, snc, "S_nc")? } else { w.clone() };
    let w_nc = if cfg.alpha_c { w - weighted_projector(w, sc, "S_c")? } else { w.clone() };
    Ok(task_torque(&w_c, sc, tau_c, "S_c")? + task_torque(&w_nc, snc, tau_nc, "S_nc")?)
}
