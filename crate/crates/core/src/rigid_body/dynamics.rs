//! Forward kinematics, composite-rigid-body inertia, recursive Newton-Euler
//! bias forces and point-foot kinematics for planar trees.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use super::model::{GeneralizedState, JointKind, RobotModel};
use super::spatial::{body_inertia, crf, crm, cross, omega_cross, point_velocity, revolute_axis, rotation};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Joint-space equation of motion terms:
/// `M qdd + c + g = S^T tau + J^T lambda`.
#[derive(Debug, Clone)]
pub struct JointSpaceDynamics<T: Real> {
    pub m: DMatrix<T>,
    pub c: DVector<T>,
    pub g: DVector<T>,
    pub s: DMatrix<T>,
}

/// Per-link world quantities for one state.
#[derive(Debug, Clone)]
pub struct Kinematics<T: Real> {
    pub origin: Vec<Vector2<T>>,
    pub angle: Vec<T>,
    /// Motion subspace columns of each joint, world coordinates.
    pub axes: Vec<Vec<Vector3<T>>>,
    pub velocity: Vec<Vector3<T>>,
    pub com: Vec<Vector2<T>>,
    pub inertia: Vec<Matrix3<T>>,
}

impl<T: Real> Kinematics<T> {
    pub fn new(model: &RobotModel<T>, state: &GeneralizedState<T>) -> Result<Self> {
        model.check_state(state)?;
        let n = model.links().len();
        let mut origin = Vec::with_capacity(n);
        let mut angle = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        let mut velocity: Vec<Vector3<T>> = Vec::with_capacity(n);
        let mut com = Vec::with_capacity(n);
        let mut inertia = Vec::with_capacity(n);
        for (i, (joint, link)) in model.joints().iter().zip(model.links()).enumerate() {
            let off = model.offset(i);
            let (o, a, s) = match joint.kind {
                JointKind::Floating => {
                    let o = Vector2::new(state.q[off], state.q[off + 1]);
                    let z = T::zero();
                    let one = T::one();
                    (o, state.q[off + 2], vec![Vector3::new(z, one, z), Vector3::new(z, z, one), revolute_axis(&o)])
                }
                JointKind::Revolute => {
                    let p = joint.parent.expect("validated tree");
                    let o = origin[p] + rotation(angle[p]) * joint.origin;
                    (o, angle[p] + state.q[off], vec![revolute_axis(&o)])
                }
            };
            let mut v = match joint.parent {
                Some(p) => velocity[p],
                None => Vector3::zeros(),
            };
            for (k, axis) in s.iter().enumerate() {
                v += axis * state.qd[off + k];
            }
            let c = o + rotation(a) * link.com;
            inertia.push(body_inertia(link.mass, &c, link.inertia));
            com.push(c);
            origin.push(o);
            angle.push(a);
            axes.push(s);
            velocity.push(v);
        }
        Ok(Self { origin, angle, axes, velocity, com, inertia })
    }

    pub fn point(&self, link: usize, offset: &Vector2<T>) -> Vector2<T> {
        self.origin[link] + rotation(self.angle[link]) * offset
    }

    /// Spatial accelerations of all links for `qdd`, optionally offset by
    /// gravity (the root is given an upward acceleration of `-g`).
    fn accelerations(
        &self,
        model: &RobotModel<T>,
        qd: &DVector<T>,
        qdd: Option<&DVector<T>>,
        gravity: bool,
        velocity_terms: bool,
    ) -> Vec<Vector3<T>> {
        let g = model.gravity();
        let root = if gravity { Vector3::new(T::zero(), -g.x, -g.y) } else { Vector3::zeros() };
        let mut acc: Vec<Vector3<T>> = Vec::with_capacity(self.origin.len());
        for (i, joint) in model.joints().iter().enumerate() {
            let off = model.offset(i);
            let mut a = match joint.parent {
                Some(p) => acc[p],
                None => root,
            };
            // floating-base translation axes are fixed in the world
            let fixed = if joint.kind == JointKind::Floating { 2 } else { 0 };
            for (k, axis) in self.axes[i].iter().enumerate() {
                if let Some(qdd) = qdd {
                    a += axis * qdd[off + k];
                }
                if velocity_terms && k >= fixed {
                    a += crm(&self.velocity[i]) * axis * qd[off + k];
                }
            }
            acc.push(a);
        }
        acc
    }
}

/// Recursive Newton-Euler: returns `M qdd + c + g` (terms selected by the
/// flags).
pub fn inverse_dynamics<T: Real>(
    model: &RobotModel<T>,
    state: &GeneralizedState<T>,
    qdd: Option<&DVector<T>>,
    gravity: bool,
    velocity_terms: bool,
) -> Result<DVector<T>> {
    let kin = Kinematics::new(model, state)?;
    if let Some(a) = qdd {
        if a.len() != model.dof() {
            return Err(Error::DimensionMismatch {
                what: "generalized accelerations",
                expected: model.dof(),
                found: a.len(),
            });
        }
    }
    Ok(rnea(model, &kin, &state.qd, qdd, gravity, velocity_terms))
}

fn rnea<T: Real>(
    model: &RobotModel<T>,
    kin: &Kinematics<T>,
    qd: &DVector<T>,
    qdd: Option<&DVector<T>>,
    gravity: bool,
    velocity_terms: bool,
) -> DVector<T> {
    let acc = kin.accelerations(model, qd, qdd, gravity, velocity_terms);
    let n = kin.origin.len();
    let mut force: Vec<Vector3<T>> = (0..n)
        .map(|i| {
            let mut f = kin.inertia[i] * acc[i];
            if velocity_terms {
                let v = &kin.velocity[i];
                f += crf(v) * (kin.inertia[i] * v);
            }
            f
        })
        .collect();
    let mut tau = DVector::zeros(model.dof());
    for i in (0..n).rev() {
        let off = model.offset(i);
        for (k, axis) in kin.axes[i].iter().enumerate() {
            tau[off + k] = axis.dot(&force[i]);
        }
        if let Some(p) = model.joints()[i].parent {
            let f = force[i];
            force[p] += f;
        }
    }
    tau
}

/// Composite inertias of every subtree, world coordinates.
fn composite_inertias<T: Real>(model: &RobotModel<T>, kin: &Kinematics<T>) -> Vec<Matrix3<T>> {
    let mut ic = kin.inertia.clone();
    for i in (0..ic.len()).rev() {
        if let Some(p) = model.joints()[i].parent {
            let child = ic[i];
            ic[p] += child;
        }
    }
    ic
}

/// Composite-rigid-body algorithm for the joint-space inertia matrix.
pub fn mass_matrix<T: Real>(model: &RobotModel<T>, kin: &Kinematics<T>) -> DMatrix<T> {
    let ic = composite_inertias(model, kin);
    let n = model.dof();
    let mut m = DMatrix::zeros(n, n);
    for (i, ici) in ic.iter().enumerate() {
        let oi = model.offset(i);
        for &j in &model.chain(i) {
            let oj = model.offset(j);
            for (a, si) in kin.axes[i].iter().enumerate() {
                let f = ici * si;
                for (b, sj) in kin.axes[j].iter().enumerate() {
                    let v = sj.dot(&f);
                    m[(oi + a, oj + b)] = v;
                    m[(oj + b, oi + a)] = v;
                }
            }
        }
    }
    m
}

/// Selection matrix mapping actuated torques to generalized forces
/// (`S^T tau`); actuated joints follow the floating base.
pub fn selection_matrix<T: Real>(model: &RobotModel<T>) -> DMatrix<T> {
    let nb = model.base_dof();
    let na = model.actuated();
    let mut s = DMatrix::zeros(na, model.dof());
    for i in 0..na {
        s[(i, nb + i)] = T::one();
    }
    s
}

/// Inertia, Coriolis/centrifugal and gravity terms at `state`.
pub fn compute_dynamics<T: Real>(model: &RobotModel<T>, state: &GeneralizedState<T>) -> Result<JointSpaceDynamics<T>> {
    let kin = Kinematics::new(model, state)?;
    Ok(dynamics_kin(model, &kin, &state.qd))
}

pub(crate) fn dynamics_kin<T: Real>(
    model: &RobotModel<T>,
    kin: &Kinematics<T>,
    qd: &DVector<T>,
) -> JointSpaceDynamics<T> {
    let m = mass_matrix(model, kin);
    let cg = rnea(model, kin, qd, None, true, true);
    let g = rnea(model, kin, qd, None, true, false);
    JointSpaceDynamics { m, c: cg - &g, g, s: selection_matrix(model) }
}

fn check_feet<T: Real>(model: &RobotModel<T>, feet: &[usize]) -> Result<()> {
    if feet.is_empty() {
        return Err(Error::DimensionMismatch { what: "foot set", expected: 1, found: 0 });
    }
    match feet.iter().find(|&&f| f >= model.feet().len()) {
        Some(&f) => Err(Error::UnknownFoot(f)),
        None => Ok(()),
    }
}

pub fn foot_position<T: Real>(model: &RobotModel<T>, kin: &Kinematics<T>, foot: usize) -> Vector2<T> {
    let f = &model.feet()[foot];
    kin.point(f.link, &f.offset)
}

pub fn foot_positions<T: Real>(model: &RobotModel<T>, state: &GeneralizedState<T>) -> Result<Vec<Vector2<T>>> {
    let kin = Kinematics::new(model, state)?;
    Ok((0..model.feet().len()).map(|f| foot_position(model, &kin, f)).collect())
}

/// Jacobian of an arbitrary point attached to `link`.
pub fn point_jacobian<T: Real>(
    model: &RobotModel<T>,
    kin: &Kinematics<T>,
    link: usize,
    point: &Vector2<T>,
) -> DMatrix<T> {
    let mut j = DMatrix::zeros(2, model.dof());
    for &l in &model.chain(link) {
        let off = model.offset(l);
        for (k, axis) in kin.axes[l].iter().enumerate() {
            let v = point_velocity(axis, point);
            j[(0, off + k)] = v.x;
            j[(1, off + k)] = v.y;
        }
    }
    j
}

/// Stacked translational foot Jacobian, two rows `(x, z)` per foot in the
/// order given.
pub fn foot_jacobian<T: Real>(
    model: &RobotModel<T>,
    state: &GeneralizedState<T>,
    feet: &[usize],
) -> Result<DMatrix<T>> {
    check_feet(model, feet)?;
    let kin = Kinematics::new(model, state)?;
    Ok(foot_jacobian_kin(model, &kin, feet))
}

pub(crate) fn foot_jacobian_kin<T: Real>(model: &RobotModel<T>, kin: &Kinematics<T>, feet: &[usize]) -> DMatrix<T> {
    let mut j = DMatrix::zeros(2 * feet.len(), model.dof());
    for (r, &f) in feet.iter().enumerate() {
        let foot = &model.feet()[f];
        let p = kin.point(foot.link, &foot.offset);
        let jf = point_jacobian(model, kin, foot.link, &p);
        j.rows_mut(2 * r, 2).copy_from(&jf);
    }
    j
}

/// Foot acceleration at zero joint acceleration, `Jdot * qd`, stacked like
/// [`foot_jacobian`].
pub fn foot_bias_acceleration<T: Real>(
    model: &RobotModel<T>,
    state: &GeneralizedState<T>,
    feet: &[usize],
) -> Result<DVector<T>> {
    check_feet(model, feet)?;
    let kin = Kinematics::new(model, state)?;
    Ok(foot_bias_kin(model, &kin, &state.qd, feet))
}

pub(crate) fn foot_bias_kin<T: Real>(
    model: &RobotModel<T>,
    kin: &Kinematics<T>,
    qd: &DVector<T>,
    feet: &[usize],
) -> DVector<T> {
    let acc = kin.accelerations(model, qd, None, false, true);
    let mut out = DVector::zeros(2 * feet.len());
    for (r, &f) in feet.iter().enumerate() {
        let foot = &model.feet()[f];
        let p = kin.point(foot.link, &foot.offset);
        let v = kin.velocity[foot.link];
        let a = acc[foot.link];
        let vp = point_velocity(&v, &p);
        let ap = Vector2::new(a.y, a.z) + omega_cross(a.x, &p) + omega_cross(v.x, &vp);
        out[2 * r] = ap.x;
        out[2 * r + 1] = ap.y;
    }
    out
}

/// Whole-body centroidal quantities.
#[derive(Debug, Clone)]
pub struct Centroidal<T: Real> {
    pub mass: T,
    pub com: Vector2<T>,
    pub com_velocity: Vector2<T>,
    /// Rotational inertia of the locked robot about its centre of mass.
    pub inertia: T,
    pub inertia_rate: T,
    /// Angular momentum about the centre of mass.
    pub angular_momentum: T,
    /// Centroidal momentum matrix: rows `(m cx_dot, m cz_dot, L_G)`.
    pub momentum_matrix: DMatrix<T>,
}

impl<T: Real> Centroidal<T> {
    /// Average angular velocity `L_G / I_G`.
    pub fn average_angular_velocity(&self) -> T {
        self.angular_momentum / self.inertia
    }

    /// Jacobian of the centre-of-mass position.
    pub fn com_jacobian(&self) -> DMatrix<T> {
        self.momentum_matrix.rows(0, 2) / self.mass
    }
}

pub fn centroidal<T: Real>(model: &RobotModel<T>, state: &GeneralizedState<T>) -> Result<Centroidal<T>> {
    let kin = Kinematics::new(model, state)?;
    Ok(centroidal_kin(model, &kin))
}

pub(crate) fn centroidal_kin<T: Real>(model: &RobotModel<T>, kin: &Kinematics<T>) -> Centroidal<T> {
    let ic = composite_inertias(model, kin);
    let total = ic[0];
    let mass = total[(1, 1)];
    let com = Vector2::new(total[(2, 0)] / mass, -total[(1, 0)] / mass);
    let inertia = total[(0, 0)] - mass * com.norm_squared();

    let mut h = Vector3::zeros();
    for (i, v) in kin.inertia.iter().zip(&kin.velocity) {
        h += i * v;
    }
    let momentum = Vector2::new(h.y, h.z);
    let com_velocity = momentum / mass;
    let angular_momentum = h.x - cross(&com, &momentum);

    let mut inertia_rate = T::zero();
    for ((link, c), v) in model.links().iter().zip(&kin.com).zip(&kin.velocity) {
        let vc = point_velocity(v, c);
        let two = T::one() + T::one();
        inertia_rate += two * link.mass * (c - com).dot(&(vc - com_velocity));
    }

    let n = model.dof();
    let mut a = DMatrix::zeros(3, n);
    for (l, axes) in kin.axes.iter().enumerate() {
        let off = model.offset(l);
        for (k, s) in axes.iter().enumerate() {
            let col = ic[l] * s;
            let lin = Vector2::new(col.y, col.z);
            a[(0, off + k)] = col.y;
            a[(1, off + k)] = col.z;
            a[(2, off + k)] = col.x - cross(&com, &lin);
        }
    }
    Centroidal { mass, com, com_velocity, inertia, inertia_rate, angular_momentum, momentum_matrix: a }
}

/// Total mechanical energy (kinetic plus gravitational potential, zero at
/// `z = 0`).
pub fn mechanical_energy<T: Real>(model: &RobotModel<T>, state: &GeneralizedState<T>) -> Result<T> {
    let kin = Kinematics::new(model, state)?;
    let g = model.gravity();
    let half = T::one() / (T::one() + T::one());
    let mut e = T::zero();
    for ((link, c), (i, v)) in model.links().iter().zip(&kin.com).zip(kin.inertia.iter().zip(&kin.velocity)) {
        e += half * v.dot(&(i * v)) - link.mass * g.dot(c);
    }
    Ok(e)
}
