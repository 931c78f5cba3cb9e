//! Projection of the joint-space dynamics into task spaces.

use nalgebra::{DMatrix, DVector};

use super::dynamics::JointSpaceDynamics;
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Smallest admissible singular value of `J M^-1 J^T`.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Task-space equation of motion
/// `Mx xdd + Cx + Gx = Sx^T tau + Jcx^T lambda`.
#[derive(Debug, Clone)]
pub struct TaskSpaceModel<T: Real> {
    pub mx: DMatrix<T>,
    pub cx: DVector<T>,
    pub gx: DVector<T>,
    pub sx: DMatrix<T>,
    pub jcx: DMatrix<T>,
    pub jx: DMatrix<T>,
    pub jx_dagger: DMatrix<T>,
}

/// Singular values of `j` in decreasing order.
pub fn singular_values<T: Real>(j: &DMatrix<T>) -> Vec<T> {
    if j.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<T> = j.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Numerical rank: singular values above `tol` times the largest one.
pub fn numerical_rank<T: Real>(j: &DMatrix<T>, tol: T) -> usize {
    let sv = singular_values(j);
    match sv.first() {
        Some(&max) if max > T::zero() => sv.iter().filter(|&&s| s > tol * max).count(),
        _ => 0,
    }
}

pub(crate) fn spd_inverse<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::IllPosedDecomposition("matrix is not positive definite".into()))
}

/// Dynamically consistent right pseudo-inverse
/// `J^+ = M^-1 J^T (J M^-1 J^T)^-1`.
pub fn dyn_consistent_pinv<T: Real>(j: &DMatrix<T>, m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let m_inv = spd_inverse(m)?;
    pinv_with_inverse(j, &m_inv).map(|(p, _)| p)
}

/// Returns the pseudo-inverse together with `(J M^-1 J^T)^-1`.
pub(crate) fn pinv_with_inverse<T: Real>(j: &DMatrix<T>, m_inv: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if j.ncols() != m_inv.nrows() {
        return Err(Error::DimensionMismatch {
            what: "task Jacobian columns",
            expected: m_inv.nrows(),
            found: j.ncols(),
        });
    }
    let mj = m_inv * j.transpose();
    let lambda_inv = j * &mj;
    let eig = lambda_inv.clone().symmetric_eigen();
    let sigma_min = eig.eigenvalues.iter().fold(T::max_value().unwrap_or(lit(1e300)), |a, &b| a.min(b));
    if !(sigma_min > lit(RANK_TOLERANCE)) {
        return Err(Error::SingularTask { sigma_min: to_f64(sigma_min) });
    }
    let lambda = lambda_inv.cholesky().ok_or(Error::SingularTask { sigma_min: to_f64(sigma_min) })?.inverse();
    Ok((&mj * &lambda, lambda))
}

/// Projects the joint-space dynamics onto the task with Jacobian `jx`;
/// `jx_dot_qd` is the task bias acceleration and `jc` the contact Jacobian.
pub fn project_to_task<T: Real>(
    dynamics: &JointSpaceDynamics<T>,
    jx: &DMatrix<T>,
    jx_dot_qd: &DVector<T>,
    jc: &DMatrix<T>,
) -> Result<TaskSpaceModel<T>> {
    let m_inv = spd_inverse(&dynamics.m)?;
    project_with_inverse(dynamics, &m_inv, jx, jx_dot_qd, jc)
}

pub(crate) fn project_with_inverse<T: Real>(
    dynamics: &JointSpaceDynamics<T>,
    m_inv: &DMatrix<T>,
    jx: &DMatrix<T>,
    jx_dot_qd: &DVector<T>,
    jc: &DMatrix<T>,
) -> Result<TaskSpaceModel<T>> {
    if jx_dot_qd.len() != jx.nrows() {
        return Err(Error::DimensionMismatch {
            what: "task bias acceleration",
            expected: jx.nrows(),
            found: jx_dot_qd.len(),
        });
    }
    if jc.ncols() != dynamics.m.ncols() {
        return Err(Error::DimensionMismatch {
            what: "contact Jacobian columns",
            expected: dynamics.m.ncols(),
            found: jc.ncols(),
        });
    }
    let (pinv, mx) = pinv_with_inverse(jx, m_inv)?;
    let pinv_t = pinv.transpose();
    let cx = &pinv_t * &dynamics.c - &mx * jx_dot_qd;
    let gx = &pinv_t * &dynamics.g;
    Ok(TaskSpaceModel { sx: &dynamics.s * &pinv, jcx: jc * &pinv, mx, cx, gx, jx: jx.clone(), jx_dagger: pinv })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_jacobian_identity_inertia() {
        let i = DMatrix::<f64>::identity(4, 4);
        let p = dyn_consistent_pinv(&i, &i).unwrap();
        assert!((p - &i).norm() < 1e-14);
    }

    #[test]
    fn square_jacobian_cancels_inertia() {
        let j = DMatrix::<f64>::identity(3, 3);
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.0, 1.5, -0.2, 0.4, 0.0, 1.0]);
        let m = &a * a.transpose() + DMatrix::identity(3, 3);
        let p = dyn_consistent_pinv(&j, &m).unwrap();
        assert!((p - j).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_task_reports_singular_value() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let m = DMatrix::<f64>::identity(3, 3);
        match dyn_consistent_pinv(&j, &m) {
            Err(Error::SingularTask { sigma_min }) => assert!(sigma_min.abs() < 1e-8),
            other => panic!("expected singular task, got {other:?}"),
        }
        assert_eq!(numerical_rank(&j, 1e-10), 1);
    }
}
