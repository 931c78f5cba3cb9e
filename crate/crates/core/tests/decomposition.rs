//! Subsystem dynamics checked against constrained forward dynamics, and the
//! torque map checked against the closed-form coupling terms.

mod common;

use common::{constrained_forward, quadruped, random_spd, random_stance_state};
use imc_wbc::decomposition::{
    build_com_subsystem, build_contact_subsystem, decompose, map_subsystem_torques, DecouplingConfig,
};
use imc_wbc::rigid_body::{centroidal, compute_dynamics, foot_bias_acceleration, foot_jacobian, GeneralizedState};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

fn random_stance(rng: &mut ChaCha8Rng) -> Vec<usize> {
    loop {
        let s: Vec<usize> = (0..4).filter(|_| rng.random_bool(0.6)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

#[test]
fn contact_equation_reproduces_constrained_forces() {
    let model = quadruped();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let s = random_stance_state(&mut rng);
        let stance = random_stance(&mut rng);
        let d = compute_dynamics(&model, &s).unwrap();
        let jc = foot_jacobian(&model, &s, &stance).unwrap();
        let b = foot_bias_acceleration(&model, &s, &stance).unwrap();
        let cs = build_contact_subsystem(&d, &jc, &b).unwrap();
        assert!((&jc * &cs.jc_dagger - DMatrix::identity(jc.nrows(), jc.nrows())).norm() < 1e-9);
        let tau = DVector::from_fn(8, |_, _| rng.random_range(-40.0..40.0));
        let (_, lambda) = constrained_forward(&model, &s, &tau, &stance);
        let implied = cs.implied_force(&(cs.sc.transpose() * &tau));
        assert!((implied - &lambda).norm() < 1e-8 * lambda.norm().max(1.0));
    }
}

#[test]
fn contact_bias_vanishes_at_rest() {
    let model = quadruped();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = random_stance_state(&mut rng);
    s.qd.fill(0.0);
    let dec = decompose(&model, &s, &[0, 1, 2, 3]).unwrap();
    assert!(dec.contact.cc.norm() < 1e-12);
    assert_eq!(dec.contact.sc_rank(), 8);
}

/// Statics: the minimum-norm `(tau, lambda)` with `S^T tau + J^T lambda = g`.
fn static_equilibrium(
    model: &imc_wbc::RobotModel,
    s: &GeneralizedState<f64>,
    stance: &[usize],
) -> (DVector<f64>, DVector<f64>) {
    let d = compute_dynamics(model, s).unwrap();
    let j = foot_jacobian(model, s, stance).unwrap();
    let na = d.s.nrows();
    let k = j.nrows();
    let mut a = DMatrix::zeros(model.dof(), na + k);
    a.view_mut((0, 0), (model.dof(), na)).copy_from(&d.s.transpose());
    a.view_mut((0, na), (model.dof(), k)).copy_from(&j.transpose());
    let x = a.clone().svd(true, true).solve(&d.g, 1e-12).unwrap();
    assert!((&a * &x - &d.g).norm() < 1e-9);
    (x.rows(0, na).into_owned(), x.rows(na, k).into_owned())
}

#[test]
fn static_stance_carries_the_weight() {
    let model = quadruped();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let mut s = random_stance_state(&mut rng);
        s.qd.fill(0.0);
        let stance = [0, 1, 2, 3];
        let (tau, lambda) = static_equilibrium(&model, &s, &stance);
        let dec = decompose(&model, &s, &stance).unwrap();
        let implied = dec.contact.implied_force(&(dec.contact.sc.transpose() * &tau));
        assert!((&implied - &lambda).norm() < 1e-8);
        let vertical: f64 = (0..4).map(|f| lambda[2 * f + 1]).sum();
        assert!((vertical - 80.0 * 9.81).abs() < 1e-8);
        // the net contact wrench balances gravity in the CoM space
        let w = dec.com.wrench(&lambda);
        assert!((w - &dec.com.g_com).norm() < 1e-8);
    }
}

#[test]
fn com_inertia_has_two_blocks() {
    let model = quadruped();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = random_stance_state(&mut rng);
    let com = build_com_subsystem(&model, &s, &[0, 3]).unwrap();
    let mass: f64 = model.links().iter().map(|l| l.mass).sum();
    assert_eq!(com.m_com[(0, 0)], mass);
    assert_eq!(com.m_com[(1, 1)], mass);
    assert!(com.m_com[(2, 2)] > 0.0);
    for (i, j) in [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)] {
        assert_eq!(com.m_com[(i, j)], 0.0);
    }
}

/// CoM state `(c, omega_bar)` velocities at a perturbed state.
fn com_rates(model: &imc_wbc::RobotModel, q: DVector<f64>, qd: DVector<f64>) -> DVector<f64> {
    let c = centroidal(model, &GeneralizedState::new(q, qd)).unwrap();
    DVector::from_vec(vec![c.com_velocity.x, c.com_velocity.y, c.average_angular_velocity()])
}

fn com_acceleration(model: &imc_wbc::RobotModel, s: &GeneralizedState<f64>, qdd: &DVector<f64>) -> DVector<f64> {
    let p = com_rates(model, &s.q + &s.qd * H, &s.qd + qdd * H);
    let m = com_rates(model, &s.q - &s.qd * H, &s.qd - qdd * H);
    (p - m) / (2.0 * H)
}

#[test]
fn com_equation_holds_along_constrained_motion() {
    let model = quadruped();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let s = random_stance_state(&mut rng);
        let stance = random_stance(&mut rng);
        let tau = DVector::from_fn(8, |_, _| rng.random_range(-40.0..40.0));
        let (qdd, lambda) = constrained_forward(&model, &s, &tau, &stance);
        let com = build_com_subsystem(&model, &s, &stance).unwrap();
        let xdd = com_acceleration(&model, &s, &qdd);
        let lhs = &com.m_com * &xdd + &com.c_com + &com.g_com;
        let rhs = com.wrench(&lambda);
        assert!((&lhs - &rhs).norm() < 1e-5 * rhs.norm().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn free_fall_com_follows_gravity() {
    let model = quadruped();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = random_stance_state(&mut rng);
    let (qdd, _) = constrained_forward(&model, &s, &DVector::zeros(8), &[]);
    let xdd = com_acceleration(&model, &s, &qdd);
    assert!(xdd[0].abs() < 1e-5 && (xdd[1] + 9.81).abs() < 1e-5);
    // no external moment: centroidal angular momentum is conserved
    let com = build_com_subsystem(&model, &s, &[]).unwrap();
    assert!((com.m_com[(2, 2)] * xdd[2] + com.c_com[2]).abs() < 1e-5);
}

#[test]
fn internal_forces_do_not_move_the_com() {
    let model = quadruped();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let stance = [0, 1, 2, 3];
    for _ in 0..10 {
        let s = random_stance_state(&mut rng);
        let dec = decompose(&model, &s, &stance).unwrap();
        let tau1 = DVector::from_fn(8, |_, _| rng.random_range(-40.0..40.0));
        // internal force: zero net wrench
        let eig = (&dec.com.jc_com * dec.com.jc_com.transpose()).symmetric_eigen();
        let mut internal = DVector::zeros(8);
        for k in 0..8 {
            if eig.eigenvalues[k].abs() < 1e-9 {
                internal += eig.eigenvectors.column(k) * rng.random_range(-30.0..30.0);
            }
        }
        assert!(internal.norm() > 1.0);
        assert!(dec.com.wrench(&internal).norm() < 1e-9);
        // S_c is square here: shift tau so that lambda changes by `internal`
        let shift = dec.contact.sc.transpose().lu().solve(&internal).unwrap();
        let tau2 = &tau1 - shift;
        let (qdd1, l1) = constrained_forward(&model, &s, &tau1, &stance);
        let (qdd2, l2) = constrained_forward(&model, &s, &tau2, &stance);
        assert!(((&l2 - &l1) - &internal).norm() < 1e-7);
        let a1 = com_acceleration(&model, &s, &qdd1);
        let a2 = com_acceleration(&model, &s, &qdd2);
        assert!((a1 - a2).norm() < 1e-5);
    }
}

/// `(S_c, S_nc, tau_c, tau_nc, W)`
type Draw = (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>, DMatrix<f64>);

fn decoupling_draw(rng: &mut ChaCha8Rng) -> Draw {
    let model = quadruped();
    loop {
        let s = random_stance_state(rng);
        let stance: Vec<usize> = (0..4).filter(|_| rng.random_bool(0.5)).collect();
        if stance.is_empty() || stance.len() == 4 {
            continue;
        }
        let dec = decompose(&model, &s, &stance).unwrap();
        let sc = dec.contact.sc;
        let snc = dec.noncontact.snc;
        let tc = DVector::from_fn(sc.ncols(), |_, _| rng.random_range(-100.0..100.0));
        let tnc = DVector::from_fn(snc.ncols(), |_, _| rng.random_range(-100.0..100.0));
        return (sc, snc, tc, tnc, random_spd(8, rng));
    }
}

/// `S_a^T W S_b (S_b^T W S_b)^-1 t`
fn coupling(w: &DMatrix<f64>, sa: &DMatrix<f64>, sb: &DMatrix<f64>, t: &DVector<f64>) -> DVector<f64> {
    let inner = sb.transpose() * w * sb;
    sa.transpose() * w * sb * inner.lu().solve(t).unwrap()
}

#[test]
fn coequal_map_decouples_over_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (sc, snc, tc, tnc, w) = decoupling_draw(&mut rng);
        let cfg = DecouplingConfig::new(w, true, true).unwrap();
        let tau = map_subsystem_torques(&tc, &tnc, &sc, &snc, &cfg).unwrap();
        worst = worst.max((sc.transpose() * &tau - &tc).amax()).max((snc.transpose() * &tau - &tnc).amax());
    }
    assert!(worst < 1e-8, "worst projection error {worst:e}");
}

#[test]
fn hierarchical_map_matches_closed_form_cross_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let (sc, snc, tc, tnc, w) = decoupling_draw(&mut rng);
        let cfg = DecouplingConfig::new(w.clone(), true, false).unwrap();
        let tau = map_subsystem_torques(&tc, &tnc, &sc, &snc, &cfg).unwrap();
        assert!((sc.transpose() * &tau - &tc).amax() < 1e-8);
        let cross = snc.transpose() * &tau - &tnc;
        assert!((&cross - coupling(&w, &snc, &sc, &tc)).amax() < 1e-8);
        assert!(cross.amax() > 1e-6, "lower-priority task is generically disturbed");

        let cfg = DecouplingConfig::new(w.clone(), false, true).unwrap();
        let tau = map_subsystem_torques(&tc, &tnc, &sc, &snc, &cfg).unwrap();
        let cross = sc.transpose() * &tau - &tc;
        assert!((&cross - coupling(&w, &sc, &snc, &tnc)).amax() < 1e-8);
        assert!((snc.transpose() * &tau - &tnc).amax() < 1e-8);
    }
}

#[test]
fn coequal_projections_do_not_depend_on_weighting() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let (sc, snc, tc, tnc, w1) = decoupling_draw(&mut rng);
        let w2 = random_spd(8, &mut rng);
        let t1 = map_subsystem_torques(&tc, &tnc, &sc, &snc, &DecouplingConfig::new(w1, true, true).unwrap()).unwrap();
        let t2 = map_subsystem_torques(&tc, &tnc, &sc, &snc, &DecouplingConfig::new(w2, true, true).unwrap()).unwrap();
        assert!((sc.transpose() * (&t1 - &t2)).amax() < 1e-8);
        assert!((snc.transpose() * (&t1 - &t2)).amax() < 1e-8);
    }
}

#[test]
fn zero_noncontact_torque_leaves_only_contact_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (sc, snc, tc, _, w) = decoupling_draw(&mut rng);
    let zero = DVector::zeros(snc.ncols());
    for (ac, anc) in [(true, true), (true, false), (false, true), (false, false)] {
        let cfg = DecouplingConfig::new(w.clone(), ac, anc).unwrap();
        let tau = map_subsystem_torques(&tc, &zero, &sc, &snc, &cfg).unwrap();
        let w_c = if anc {
            let inner = snc.transpose() * &w * &snc;
            &w - &w * &snc * inner.try_inverse().unwrap() * snc.transpose() * &w
        } else {
            w.clone()
        };
        let expected = &w_c * &sc * (sc.transpose() * &w_c * &sc).try_inverse().unwrap() * &tc;
        assert!((tau - expected).amax() < 1e-8);
    }
}

#[test]
fn rank_deficient_stance_is_reported() {
    let model = quadruped();
    let mut s = GeneralizedState::zeros(11);
    s.q[1] = 0.7;
    // stretched legs: the foot Jacobian loses rank in the leg columns only,
    // so stack a duplicated foot to force a singular contact set
    let d = compute_dynamics(&model, &s).unwrap();
    let j = foot_jacobian(&model, &s, &[0, 0]).unwrap();
    let b = DVector::zeros(4);
    assert!(matches!(build_contact_subsystem(&d, &j, &b), Err(imc_wbc::Error::SingularContact { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn coequal_decoupling_on_random_partitions(
        seed in any::<u64>(),
        nc in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let s = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(n, n) * 2.0;
        let sc = s.columns(0, nc).into_owned();
        let snc = s.columns(nc, n - nc).into_owned();
        let w = random_spd(n, &mut rng);
        let tc = DVector::from_fn(nc, |_, _| rng.random_range(-10.0..10.0));
        let tnc = DVector::from_fn(n - nc, |_, _| rng.random_range(-10.0..10.0));
        let tau = map_subsystem_torques(&tc, &tnc, &sc, &snc, &DecouplingConfig::new(w, true, true).unwrap()).unwrap();
        prop_assert!((sc.transpose() * &tau - tc).amax() < 1e-8);
        prop_assert!((snc.transpose() * &tau - tnc).amax() < 1e-8);
    }
}
