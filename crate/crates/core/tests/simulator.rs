//! Physics harness, scenarios and closed-loop runs.

use imc_wbc::rigid_body::{
    centroidal, foot_jacobian, foot_positions, mechanical_energy, GeneralizedState, PlanarQuadrupedParams,
};
use imc_wbc::simulator::*;
use imc_wbc::Error;
use nalgebra::{DVector, Vector2, Vector3};
use proptest::prelude::*;

const DT: f64 = DEFAULT_DT;

fn params() -> PlanarQuadrupedParams {
    PlanarQuadrupedParams::default()
}

fn world(state: GeneralizedState<f64>, k: f64, actuator: ActuatorParams) -> SimWorld {
    let p = params();
    let model = p.build::<f64>().unwrap();
    let bank = ActuatorBank::uniform(8, actuator, DT).unwrap();
    SimWorld::new(model, state, GroundModel::new(k, 0.8, p.total_mass()), bank, DT).unwrap()
}

fn airborne(height: f64) -> GeneralizedState<f64> {
    let p = params();
    let mut s = StandingPose::nominal(&p).state(&p);
    s.q[1] += height;
    s
}

fn run(name: &str, controller: ControllerKind, k: f64) -> (Scenario, SimLog) {
    let p = params();
    let sc = Scenario::named(name, controller, &p, k).unwrap();
    let log = run_scenario(&sc, &SimConfig::new(k, &p), &p).unwrap();
    (sc, log)
}

#[test]
fn free_fall_matches_closed_form() {
    let mut w = world(airborne(5.0), GroundModel::STIFF, ActuatorParams::passthrough());
    let z0 = centroidal(&w.model, &w.state).unwrap().com.y;
    let x0 = centroidal(&w.model, &w.state).unwrap().com.x;
    let tau = zero_torque(&w);
    for k in 1..=200 {
        w.step(&tau).unwrap();
        let t = k as f64 * DT;
        let c = centroidal(&w.model, &w.state).unwrap();
        assert!((c.com.y - (z0 - 0.5 * 9.81 * t * t)).abs() < 1e-6, "t {t}");
        assert!((c.com.x - x0).abs() < 1e-6);
    }
    assert!(w.contact_forces().iter().all(|f| *f == Vector2::zeros()));
}

#[test]
fn torque_free_flight_conserves_energy() {
    let mut s = airborne(50.0);
    s.qd = DVector::from_fn(11, |i, _| ((i * 7 % 5) as f64 - 2.0) * 0.8);
    let mut w = world(s, GroundModel::STIFF, ActuatorParams::passthrough());
    let e0 = mechanical_energy(&w.model, &w.state).unwrap();
    let tau = zero_torque(&w);
    // one simulated second
    for _ in 0..400 {
        w.step(&tau).unwrap();
    }
    let e1 = mechanical_energy(&w.model, &w.state).unwrap();
    assert!((e1 - e0).abs() / e0.abs() < 1e-3, "{e0} -> {e1}");
}

#[test]
fn resting_penetration_matches_spring_equilibrium() {
    let p = params();
    let k = GroundModel::SOFT;
    let sc = Scenario::named("stand", ControllerKind::Imc, &p, k).unwrap();
    let cfg = SimConfig::new(k, &p);
    let mut w = world(sc.initial.clone(), k, cfg.actuator);
    let mut ctrl = make_controller(ControllerKind::Imc, &cfg.controller, &p, DT).unwrap();
    for i in 0..800 {
        let measured = w.contact_forces().to_vec();
        let out = ctrl.compute(i as f64 * DT, &w.state.clone(), &measured, &sc).unwrap();
        w.step(&out.tau).unwrap();
    }
    let expect = p.total_mass() * p.gravity / k;
    let total: f64 = w.penetrations().iter().sum();
    assert!((total - expect).abs() < 0.01 * expect, "{total} vs {expect}");
    // split across the four stance feet
    for pen in w.penetrations() {
        assert!(pen > 0.0 && pen < expect);
    }
}

#[test]
fn actuator_lag_reaches_63_percent_after_delay_plus_time_constant() {
    let mut bank = ActuatorBank::uniform(1, ActuatorParams::default(), DT).unwrap();
    let (u, w) = (DVector::from_element(1, 1.0), DVector::zeros(1));
    let mut prev = 0.0;
    let mut crossing = None;
    for k in 1..=100 {
        let y = bank.step(&u, &w).unwrap()[0];
        let t = k as f64 * DT;
        if crossing.is_none() && y >= 1.0 - (-1.0f64).exp() {
            // linear interpolation between samples
            let target = 1.0 - (-1.0f64).exp();
            crossing = Some(t - DT + DT * (target - prev) / (y - prev));
        }
        prev = y;
    }
    let t63 = crossing.unwrap();
    assert!((t63 - (0.02 + DT)).abs() < DT, "{t63}");
}

#[test]
fn zero_command_gives_zero_torque() {
    let mut bank = ActuatorBank::uniform(8, ActuatorParams { stiction: 2.0, ..Default::default() }, DT).unwrap();
    for k in 0..400 {
        let w = DVector::from_fn(8, |i, _| ((i + k) as f64).sin());
        assert_eq!(bank.step(&DVector::zeros(8), &w).unwrap(), &DVector::zeros(8));
    }
}

#[test]
fn high_gain_plant_settles_at_its_gain() {
    let mut bank = ActuatorBank::uniform(1, ActuatorParams { gain: 1.4, ..Default::default() }, DT).unwrap();
    let mut y = 0.0;
    for _ in 0..400 {
        y = bank.step(&DVector::from_element(1, 1.0), &DVector::zeros(1)).unwrap()[0];
    }
    assert!((y - 1.4).abs() < 1e-9);
}

#[test]
fn stiction_only_acts_near_zero_velocity() {
    let params = ActuatorParams { stiction: 0.5, ..ActuatorParams::passthrough() };
    let mut bank = ActuatorBank::uniform(1, params, DT).unwrap();
    let u = DVector::from_element(1, 2.0);
    assert!((bank.step(&u, &DVector::zeros(1)).unwrap()[0] - 1.5).abs() < 1e-12);
    assert!((bank.step(&u, &DVector::from_element(1, 0.5)).unwrap()[0] - 2.0).abs() < 1e-12);
    let small = DVector::from_element(1, 0.3);
    assert_eq!(bank.step(&small, &DVector::zeros(1)).unwrap()[0], 0.0);
}

#[test]
fn stand_reference_is_static() {
    let plan =
        scripted_com_reference("stand", &GaitParams::default(), Vector3::new(0.0, 0.5, 0.0), &[Vector2::zeros(); 4])
            .unwrap();
    for k in 0..100 {
        let s = plan.com.sample(k as f64 * 0.1);
        assert_eq!((s.xd, s.xdd), (Vector3::zeros(), Vector3::zeros()));
    }
    assert!(plan.swings.is_empty());
}

#[test]
fn crawl_plan_walks_a_metre_on_three_feet() {
    let p = params();
    let pose = StandingPose::nominal(&p);
    let gp = GaitParams::default();
    let plan = scripted_com_reference("crawl", &gp, Vector3::new(0.0, 0.5, 0.0), &pose.feet).unwrap();
    let end = plan.com.end_time();
    assert!((plan.com.sample(end + 1.0).x.x - 1.0).abs() < 1e-9);
    let mut t = 0.0;
    while t < end + 1.0 {
        assert!(plan.stance_at(t).iter().filter(|&&s| s).count() >= 3, "t {t}");
        t += 1e-3;
    }
    assert_eq!(plan.swings.len(), 4 * gp.steps);
    for foot in 0..4 {
        assert!((plan.foothold(foot, end + 1.0).x - pose.feet[foot].x - 1.0).abs() < 1e-9);
    }
    // the CoM reference velocity is continuous
    let h = 1e-7;
    let mut t = 0.0;
    while t < end + 0.5 {
        let (a, b) = (plan.com.sample(t - h), plan.com.sample(t + h));
        assert!((a.xd - b.xd).norm() < 1e-5, "t {t}");
        t += 1e-3;
    }
}

#[test]
fn unknown_gait_is_rejected() {
    let r = scripted_com_reference("gallop", &GaitParams::default(), Vector3::zeros(), &[Vector2::zeros(); 4]);
    assert!(matches!(r, Err(Error::UnknownGait(_))));
}

#[test]
fn scenario_validation() {
    let p = params();
    for name in SCENARIOS {
        Scenario::named(name, ControllerKind::Imc, &p, GroundModel::STIFF).unwrap();
    }
    assert!(Scenario::named("hop", ControllerKind::Imc, &p, GroundModel::STIFF).is_err());
    let mut sc = Scenario::named("crawl", ControllerKind::Imc, &p, GroundModel::STIFF).unwrap();
    sc.duration = 3.0;
    assert!(sc.validate().is_err());
    let mut sc = Scenario::named("crawl", ControllerKind::Imc, &p, GroundModel::STIFF).unwrap();
    sc.plan.schedule.swap(1, 2);
    assert!(sc.validate().is_err());
}

#[test]
fn runs_are_deterministic_with_noise() {
    let p = params();
    let sc = Scenario::named("stand+force-step", ControllerKind::Imc, &p, GroundModel::SOFT).unwrap();
    let mut cfg = SimConfig::new(GroundModel::SOFT, &p);
    cfg.noise_std = 2.0;
    cfg.seed = 7;
    let a = run_scenario(&sc, &cfg, &p).unwrap();
    let b = run_scenario(&sc, &cfg, &p).unwrap();
    assert!(a.same_trajectory(&b));
    cfg.seed = 8;
    let c = run_scenario(&sc, &cfg, &p).unwrap();
    assert!(!a.same_trajectory(&c));
}

#[test]
fn crawl_keeps_contact_consistent_and_ground_never_pulls() {
    let p = params();
    let model = p.build::<f64>().unwrap();
    for controller in [ControllerKind::Imc, ControllerKind::Baseline] {
        let (sc, log) = run("crawl", controller, GroundModel::STIFF);
        assert!(log.rows.iter().all(|r| r.force.iter().all(|f| f.y >= 0.0)));
        let final_x = log.rows.last().unwrap().com.x - log.rows[0].com.x;
        assert!((final_x - 1.0).abs() < 0.02, "{controller}: {final_x}");
        for (k, r) in log.rows.iter().enumerate() {
            let stance = sc.plan.stance_at(r.t);
            let s = GeneralizedState::new(r.q.clone(), r.qd.clone());
            let feet = foot_positions(&model, &s).unwrap();
            for f in 0..4 {
                if !(stance[f] && feet[f].y < 0.0) {
                    continue;
                }
                // the baseline bounces its feet on touchdown; a foot leaving
                // the ground gets no force from a non-adhesive contact
                let vz = (foot_jacobian(&model, &s, &[f]).unwrap() * &r.qd)[1];
                if controller == ControllerKind::Baseline && vz > 0.0 {
                    continue;
                }
                let window = &log.rows[k..(k + 4).min(log.rows.len())];
                assert!(window.iter().any(|w| w.force[f].y > 0.0), "{controller} foot {f} at {}", r.t);
            }
        }
    }
}

#[test]
fn swing_feet_land_on_the_planned_footholds() {
    let p = params();
    let model = p.build::<f64>().unwrap();
    let sc = Scenario::named("crawl", ControllerKind::Imc, &p, GroundModel::STIFF).unwrap();
    let mut cfg = SimConfig::new(GroundModel::STIFF, &p);
    cfg.actuator = ActuatorParams::passthrough();
    let log = run_scenario(&sc, &cfg, &p).unwrap();
    for sw in &sc.plan.swings {
        let r = &log.rows[(sw.reference.touchdown_time() / DT).round() as usize];
        let foot = foot_positions(&model, &GeneralizedState::new(r.q.clone(), r.qd.clone())).unwrap()[sw.foot];
        assert!((foot - sw.reference.end).norm() < 5e-3, "foot {} at {}: {foot:?}", sw.foot, r.t);
    }
}

#[test]
fn both_controllers_hold_a_stand_on_stiff_ground() {
    for controller in [ControllerKind::Imc, ControllerKind::Baseline] {
        let (sc, log) = run("stand", controller, GroundModel::STIFF);
        let s = log.summary(sc.settle, sc.duration);
        assert!(s.rms_com_error < 1e-3, "{controller}: {}", s.rms_com_error);
    }
}

#[test]
fn imc_rejects_a_force_step_better_on_soft_ground() {
    let (sc, imc) = run("stand+force-step", ControllerKind::Imc, GroundModel::SOFT);
    let (_, base) = run("stand+force-step", ControllerKind::Baseline, GroundModel::SOFT);
    let (a, b) = (imc.summary(sc.settle, sc.duration), base.summary(sc.settle, sc.duration));
    assert!(a.rms_com_error <= 0.7 * b.rms_com_error, "{} vs {}", a.rms_com_error, b.rms_com_error);
}

#[test]
fn imc_keeps_pitch_on_a_rising_plank() {
    let (sc, log) = run("plank", ControllerKind::Imc, GroundModel::STIFF);
    let s = log.summary(0.0, sc.duration);
    assert!(s.max_pitch_deg < 2.0, "{}", s.max_pitch_deg);
    assert!(s.min_normal_force >= 0.0);
}

#[test]
fn seesaw_run_completes_upright() {
    let (sc, log) = run("seesaw", ControllerKind::Imc, GroundModel::STIFF);
    assert!(log.summary(sc.settle, sc.duration).max_pitch_deg < 5.0);
}

#[test]
fn csv_has_the_documented_layout() {
    let (_, log) = run("stand", ControllerKind::Imc, GroundModel::STIFF);
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "t");
    for col in [
        "q0",
        "qd10",
        "com_x",
        "com_z",
        "com_pitch",
        "LF_fx",
        "RH_fz_ref",
        "LH_contact",
        "RF_knee_tau_applied",
        "qp_time_us",
    ] {
        assert!(header.contains(&col), "missing {col}");
    }
    assert_eq!(*header.last().unwrap(), "qp_time_us");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), log.len());
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), header.len());
        assert!((r[0] - k as f64 * DT).abs() < 1e-9);
    }
}

#[test]
fn divergence_keeps_the_last_good_state() {
    let mut w = world(airborne(1.0), GroundModel::STIFF, ActuatorParams::passthrough());
    let before = w.state.clone();
    let r = w.step(&DVector::from_element(8, f64::NAN));
    assert!(matches!(r, Err(Error::SimulationDiverged { .. })), "{r:?}");
    assert_eq!(w.state, before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ground_never_pulls(pen in -0.1f64..0.1, rate in -10.0f64..10.0, k in 1e3f64..1e6) {
        let g = GroundModel::new(k, 0.8, 80.0);
        prop_assert!(g.normal_force(pen, rate) >= 0.0);
    }

    #[test]
    fn dropped_robot_never_sees_adhesive_forces(height in 0.0f64..0.1, pitch in -0.2f64..0.2, vx in -0.5f64..0.5) {
        let mut s = airborne(height);
        s.q[2] = pitch;
        s.qd[0] = vx;
        let mut w = world(s, GroundModel::SOFT, ActuatorParams::passthrough());
        let tau = zero_torque(&w);
        for _ in 0..120 {
            if w.step(&tau).is_err() {
                break;
            }
            for f in w.contact_forces() {
                prop_assert!(f.y >= 0.0);
                prop_assert!(f.x.abs() <= 0.8 * f.y + 1e-9);
            }
        }
    }
}
