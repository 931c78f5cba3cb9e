#![allow(dead_code)]

use imc_wbc::com_qp::QpProblem;
use imc_wbc::rigid_body::{
    compute_dynamics, foot_bias_acceleration, foot_jacobian, GeneralizedState, PlanarQuadrupedParams, RobotModel,
};
use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn quadruped() -> RobotModel<f64> {
    PlanarQuadrupedParams::default().build().unwrap()
}

/// A standing-like state: bent knees, moderate base motion.
pub fn random_stance_state(rng: &mut ChaCha8Rng) -> GeneralizedState<f64> {
    let p = PlanarQuadrupedParams::default();
    let mut q = DVector::zeros(11);
    q[0] = rng.random_range(-0.2..0.2);
    q[1] = rng.random_range(0.45..0.6);
    q[2] = rng.random_range(-0.2..0.2);
    for leg in 0..4 {
        q[3 + 2 * leg] = rng.random_range(-0.6..0.6);
        q[4 + 2 * leg] = p.knee_sign(leg) * rng.random_range(0.4..1.6);
    }
    let qd = DVector::from_fn(11, |_, _| rng.random_range(-1.0..1.0));
    GeneralizedState::new(q, qd)
}

pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

/// Forward dynamics with the feet in `stance` held fixed: solves
/// `M qdd + c + g = S^T tau + J^T lambda`, `J qdd + Jdot qd = 0`.
pub fn constrained_forward(
    model: &RobotModel<f64>,
    s: &GeneralizedState<f64>,
    tau: &DVector<f64>,
    stance: &[usize],
) -> (DVector<f64>, DVector<f64>) {
    let d = compute_dynamics(model, s).unwrap();
    let n = model.dof();
    let rhs_q = d.s.transpose() * tau - &d.c - &d.g;
    if stance.is_empty() {
        return (d.m.clone().lu().solve(&rhs_q).unwrap(), DVector::zeros(0));
    }
    let j = foot_jacobian(model, s, stance).unwrap();
    let b = foot_bias_acceleration(model, s, stance).unwrap();
    let k = j.nrows();
    let mut a = DMatrix::zeros(n + k, n + k);
    a.view_mut((0, 0), (n, n)).copy_from(&d.m);
    a.view_mut((0, n), (n, k)).copy_from(&(-j.transpose()));
    a.view_mut((n, 0), (k, n)).copy_from(&j);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&rhs_q);
    rhs.rows_mut(n, k).copy_from(&(-b));
    let x = a.lu().solve(&rhs).unwrap();
    (x.rows(0, n).into_owned(), x.rows(n, k).into_owned())
}

pub fn vec2(v: &DVector<f64>, i: usize) -> Vector2<f64> {
    Vector2::new(v[2 * i], v[2 * i + 1])
}

/// Accelerated projected gradient ascent on the dual with adaptive restart.
pub fn dual_projected_gradient(p: &QpProblem<f64>) -> DVector<f64> {
    let hinv = p.h.clone().try_inverse().unwrap();
    let primal = |u: &DVector<f64>| &hinv * (p.a.transpose() * u - &p.g);
    let q = &p.a * &hinv * p.a.transpose();
    let lip = q.symmetric_eigenvalues().max();
    let m = p.num_rows();
    let (mut u, mut y) = (DVector::zeros(m), DVector::zeros(m));
    let mut t: f64 = 1.0;
    for _ in 0..200_000 {
        let grad = &p.b - &p.a * primal(&y);
        let next = (&y + grad / lip).map(|v| v.max(0.0));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let restart = (&next - &u).dot(&(&y - &next)) > 0.0;
        let momentum = if restart { 0.0 } else { (t - 1.0) / t_next };
        y = &next + (&next - &u) * momentum;
        let done = (&next - &u).amax() < 1e-13;
        u = next;
        t = if restart { 1.0 } else { t_next };
        if done {
            break;
        }
    }
    primal(&u)
}
