//! Planar spatial vectors expressed in world coordinates about the world
//! origin. Motion vectors are `(omega, vx, vz)`, force vectors
//! `(moment, fx, fz)`; angles are counter-clockwise in the x-z plane.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::scalar::Real;

/// 2D cross product `a x b` (scalar moment).
#[inline]
pub fn cross<T: Real>(a: &Vector2<T>, b: &Vector2<T>) -> T {
    a.x * b.y - a.y * b.x
}

/// `omega x r` for a scalar angular rate.
#[inline]
pub fn omega_cross<T: Real>(omega: T, r: &Vector2<T>) -> Vector2<T> {
    Vector2::new(-omega * r.y, omega * r.x)
}

#[inline]
pub fn rotation<T: Real>(angle: T) -> Matrix2<T> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Motion cross-product operator: `crm(v) * m = v x m`.
pub fn crm<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, z, z, v.z, z, -v.x, -v.y, v.x, z)
}

/// Force cross-product operator: `crf(v) = -crm(v)^T`.
pub fn crf<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    -crm(v).transpose()
}

/// Motion subspace of a revolute joint located at world point `p`.
#[inline]
pub fn revolute_axis<T: Real>(p: &Vector2<T>) -> Vector3<T> {
    Vector3::new(T::one(), p.y, -p.x)
}

/// Velocity of the body-fixed point `p` for body motion `v`.
#[inline]
pub fn point_velocity<T: Real>(v: &Vector3<T>, p: &Vector2<T>) -> Vector2<T> {
    Vector2::new(v.y, v.z) + omega_cross(v.x, p)
}

/// World-frame spatial inertia of a body with mass `m`, world centre of mass
/// `c` and rotational inertia `i` about its centre of mass.
pub fn body_inertia<T: Real>(m: T, c: &Vector2<T>, i: T) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(i + m * c.norm_squared(), -m * c.y, m * c.x, -m * c.y, m, z, m * c.x, z, m)
}
