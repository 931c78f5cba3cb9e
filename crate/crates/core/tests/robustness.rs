//! Uncertainty envelope, robustness margins and filter tuning.

use imc_wbc::imc_force::{ImcChannel, ImcFilterConfig, LagDelay, Lowpass, NominalActuatorModel};
use imc_wbc::robustness::{
    default_frequency_grid, log_grid, margin_profile, robust_performance_margin, robust_stability_check,
    robust_stability_peak, tune_eta_f, uncertainty_bound, PerformanceWeight, UncertaintyBound, UncertaintySpec,
};
use imc_wbc::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ETA_D: f64 = 0.003;
const DT: f64 = 0.0025;

fn filters(eta_f: f64) -> ImcFilterConfig<f64> {
    ImcFilterConfig { eta_f_dist: eta_f, ..ImcFilterConfig::default() }
}

fn default_bound() -> UncertaintyBound<f64> {
    uncertainty_bound(&UncertaintySpec::hyq_default()).unwrap()
}

/// |H/H~ - 1| for k e^{-s d}/(eta s + 1) against the nominal 1, 0.02.
fn rel_err(k: f64, eta: f64, w: f64) -> f64 {
    // (k (0.02 i w + 1) - (eta i w + 1)) / (eta i w + 1)
    let (nr, ni) = (k - 1.0, (0.02 * k - eta) * w);
    ((nr * nr + ni * ni) / (1.0 + eta * eta * w * w)).sqrt()
}

/// Eq-free restatement of the robust performance criterion in plain f64.
fn margin_oracle(lbar: &UncertaintyBound<f64>, eta_f: f64, ratio: f64, gain: f64) -> f64 {
    lbar.omega
        .iter()
        .zip(&lbar.lbar)
        .map(|(&w, &l)| {
            let f_mag = 1.0 / ((1.0 + (eta_f * w).powi(2)) * (1.0 + (eta_f / ratio * w).powi(2))).sqrt();
            let f_arg = -(eta_f * w).atan() - (eta_f / ratio * w).atan();
            let phase = f_arg - ETA_D * w;
            let s_re = 1.0 - f_mag * phase.cos();
            let s_im = -f_mag * phase.sin();
            let w_mag = gain / (1.0 + (w / 50.0).powi(2)).sqrt();
            l * f_mag + (s_re * s_re + s_im * s_im).sqrt() * w_mag
        })
        .fold(0.0, f64::max)
}

#[test]
fn dc_value_is_the_gain_ratio() {
    let mut omega = vec![0.0];
    omega.extend(log_grid(1e-6, 1e4, 100));
    let spec =
        UncertaintySpec::new(NominalActuatorModel::<f64>::default_hyq(), (0.6, 1.4), (0.01, 0.03), omega).unwrap();
    let b = uncertainty_bound(&spec).unwrap();
    assert!((b.lbar[0] - 0.4).abs() < 1e-12);
    assert!((b.lbar[1] - 0.4).abs() < 1e-6);
}

#[test]
fn no_uncertainty_gives_zero_bound() {
    let n = NominalActuatorModel::default_hyq();
    let b = uncertainty_bound(&UncertaintySpec::symmetric(n, 0.0, 0.0).unwrap()).unwrap();
    assert!(b.lbar.iter().all(|&l| l < 1e-15));
}

#[test]
fn bound_grows_with_frequency_and_exceeds_one() {
    let b = default_bound();
    assert!(b.lbar.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!(b.lbar[0] < 0.41);
    let high = b.interpolate(1e4);
    // eta = 0.01 against 0.02 with k = 1.4 gives 1.4 * 2 - 1 as omega grows
    assert!(high > 1.0 && (high - 1.8).abs() < 1e-3, "{high}");
}

#[test]
fn bound_dominates_random_family_members() {
    let b = default_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5000 {
        let i = rng.random_range(0..b.len());
        let k = rng.random_range(0.6..=1.4);
        let eta = rng.random_range(0.01..=0.03);
        let e = rel_err(k, eta, b.omega[i]);
        assert!(e <= b.lbar[i] * (1.0 + 1e-3) + 1e-12, "w {} k {k} eta {eta}: {e} > {}", b.omega[i], b.lbar[i]);
    }
    // the envelope is attained by some member
    for (&w, &l) in b.omega.iter().zip(&b.lbar) {
        let corner = [(0.6, 0.01), (0.6, 0.03), (1.4, 0.01), (1.4, 0.03)]
            .iter()
            .map(|&(k, e)| rel_err(k, e, w))
            .fold(0.0, f64::max);
        assert!(corner <= l + 1e-12);
    }
}

#[test]
fn doubling_parameter_grid_changes_little() {
    let coarse = default_bound();
    let fine = uncertainty_bound(&UncertaintySpec::<f64>::hyq_default().with_samples(81)).unwrap();
    for (a, b) in coarse.lbar.iter().zip(&fine.lbar) {
        assert!(b >= a);
        assert!((b - a) / b < 0.01);
    }
}

#[test]
fn margins_match_plain_evaluation() {
    let b = default_bound();
    for &ef in &[0.01, 0.03, 0.1, 0.3, 1.0] {
        for &gain in &[0.0, 0.5, 1.0] {
            let weight = PerformanceWeight { gain, ..PerformanceWeight::default() };
            let m = robust_performance_margin(&b, &filters(ef), &weight, ETA_D);
            let oracle = margin_oracle(&b, ef, 10.0, gain);
            assert!((m.value - oracle).abs() < 1e-12, "eta_f {ef} gain {gain}");
            let p = margin_profile(&b, &filters(ef), &weight, ETA_D);
            let i = b.omega.iter().position(|&w| w == m.omega).unwrap();
            assert_eq!(p.total(i), m.value);
        }
    }
}

#[test]
fn fast_filter_violates_the_performance_criterion() {
    let m = robust_performance_margin(&default_bound(), &filters(0.01), &PerformanceWeight::default(), ETA_D);
    assert!(m.value > 1.0);
    assert!(m.omega > 10.0 && m.omega < 500.0, "{}", m.omega);
}

#[test]
fn trivial_problem_has_zero_margin() {
    let b = UncertaintyBound::zero(default_frequency_grid());
    let m = robust_performance_margin(&b, &filters(0.05), &PerformanceWeight::zero(), ETA_D);
    assert_eq!(m.value, 0.0);
}

#[test]
fn margin_is_monotone_in_eta_f() {
    let b = default_bound();
    let w = PerformanceWeight::default();
    let m: Vec<f64> = log_grid(0.01, 1.0, 60)
        .into_iter()
        .map(|ef| robust_performance_margin(&b, &filters(ef), &w, ETA_D).value)
        .collect();
    assert!(m.windows(2).all(|p| p[1] <= p[0] + 1e-12), "{m:?}");
}

#[test]
fn frequency_grid_converges() {
    let spec = UncertaintySpec::hyq_default();
    let fine_spec = UncertaintySpec { omega: log_grid(1e-2, 1e4, 800), ..spec.clone() };
    let (coarse, fine) = (uncertainty_bound(&spec).unwrap(), uncertainty_bound(&fine_spec).unwrap());
    let w = PerformanceWeight::default();
    for &ef in &[0.01, 0.03, 0.3] {
        let a = robust_performance_margin(&coarse, &filters(ef), &w, ETA_D).value;
        let b = robust_performance_margin(&fine, &filters(ef), &w, ETA_D).value;
        assert!((a - b).abs() / b < 0.005, "eta_f {ef}: {a} vs {b}");
    }
}

#[test]
fn stability_check() {
    let b = default_bound();
    assert!(robust_stability_peak(&b, &Lowpass::unity()).value > 1.0);
    assert!(!robust_stability_check(&b, &filters(0.0)));
    assert!(robust_stability_check(&b, &filters(0.3)));
    assert!(robust_stability_check(&b, &ImcFilterConfig::default()));
    let zero = UncertaintyBound::zero(default_frequency_grid());
    for &ef in &[0.0, 1e-3, 0.03, 1.0] {
        assert!(robust_stability_check(&zero, &filters(ef)));
    }
}

#[test]
fn tuning_lands_inside_the_bracket() {
    let b = default_bound();
    let w = PerformanceWeight { gain: 0.5, ..PerformanceWeight::default() };
    let ef = tune_eta_f(&b, &w, ETA_D, (0.01, 0.3), &ImcFilterConfig::default()).unwrap();
    assert!(ef > 0.01 && ef < 0.3);
    assert!(robust_performance_margin(&b, &filters(ef), &w, ETA_D).value < 1.0);
    let below = ef / (1.0 + 2e-3);
    assert!(robust_performance_margin(&b, &filters(below), &w, ETA_D).value >= 1.0);
}

#[test]
fn less_gain_uncertainty_allows_a_faster_filter() {
    let n = NominalActuatorModel::default_hyq();
    let w = PerformanceWeight { gain: 0.5, ..PerformanceWeight::default() };
    let range = (0.002, 0.3);
    let full = uncertainty_bound(&UncertaintySpec::symmetric(n, 0.4, 0.01).unwrap()).unwrap();
    let half = uncertainty_bound(&UncertaintySpec::symmetric(n, 0.2, 0.01).unwrap()).unwrap();
    let ef_full = tune_eta_f(&full, &w, ETA_D, range, &ImcFilterConfig::default()).unwrap();
    let ef_half = tune_eta_f(&half, &w, ETA_D, range, &ImcFilterConfig::default()).unwrap();
    assert!(ef_half < ef_full, "{ef_half} vs {ef_full}");

    // sweep oracle: first grid point that satisfies the criterion
    let sweep = |b: &UncertaintyBound<f64>| {
        log_grid(range.0, range.1, 400)
            .into_iter()
            .find(|&ef| robust_performance_margin(b, &filters(ef), &w, ETA_D).value < 1.0)
            .unwrap()
    };
    let step = (range.1 / range.0).powf(1.0 / 399.0);
    for (ef, b) in [(ef_full, &full), (ef_half, &half)] {
        let s = sweep(b);
        assert!(ef <= s * 1.001 && ef >= s / step / 1.001, "{ef} vs sweep {s}");
    }
}

#[test]
fn tuning_without_uncertainty_returns_lower_end() {
    let zero = UncertaintyBound::zero(default_frequency_grid());
    let ef = tune_eta_f(&zero, &PerformanceWeight::default(), ETA_D, (0.01, 0.3), &ImcFilterConfig::default()).unwrap();
    assert_eq!(ef, 0.01);
}

#[test]
fn tuning_without_bracket_fails() {
    let b = default_bound();
    let err =
        tune_eta_f(&b, &PerformanceWeight::default(), ETA_D, (0.01, 1.0), &ImcFilterConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InfeasibleTuning(_)), "{err}");
    let err =
        tune_eta_f(&b, &PerformanceWeight::default(), ETA_D, (0.3, 0.01), &ImcFilterConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InfeasibleTuning(_)));
}

/// Closed loop of one force channel against a sampled family member;
/// returns the measured force.
fn run_channel(filters: &ImcFilterConfig<f64>, k: f64, eta: f64) -> Vec<f64> {
    let nominal = NominalActuatorModel::default_hyq();
    let mut ch = ImcChannel::new(0, nominal, filters, DT, false, 0.0).unwrap();
    let mut plant = LagDelay::new(k, eta, nominal.delay_samples(DT), DT);
    (0..4000)
        .map(|j| {
            let d = if j >= 2000 { -40.0 } else { 0.0 };
            let meas = plant.output() + d;
            let u = ch.step(200.0, meas).unwrap();
            plant.step(u);
            meas
        })
        .collect()
}

#[test]
fn certified_filters_are_sound_on_sampled_plants() {
    let b = default_bound();
    let tuned = tune_eta_f(
        &b,
        &PerformanceWeight { gain: 0.5, ..PerformanceWeight::default() },
        ETA_D,
        (0.01, 0.3),
        &ImcFilterConfig::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for cfg in [ImcFilterConfig::default(), filters(tuned), filters(0.3)] {
        assert!(robust_stability_check(&b, &cfg));
        for _ in 0..50 {
            let k = rng.random_range(0.6..=1.4);
            let eta = rng.random_range(0.01..=0.03);
            let y = run_channel(&cfg, k, eta);
            assert!(y.iter().all(|v| v.is_finite() && v.abs() < 1e3));
            assert!((y[1999] - 200.0).abs() < 0.5, "k {k} eta {eta} eta_f {}: {} {}", cfg.eta_f_dist, y[1999], y[3999]);
            assert!((y[3999] - 200.0).abs() < 0.5, "k {k} eta {eta} eta_f {}", cfg.eta_f_dist);
        }
    }
}

#[test]
fn single_precision_agrees() {
    let spec = UncertaintySpec::<f32>::hyq_default();
    let b32 = uncertainty_bound(&spec).unwrap();
    let b64 = default_bound();
    for (a, b) in b32.lbar.iter().zip(&b64.lbar) {
        assert!((*a as f64 - b).abs() < 1e-4 * b.max(1.0));
    }
    let cfg = ImcFilterConfig::<f32>::default();
    let m32 = robust_performance_margin(&b32, &cfg, &PerformanceWeight::default(), 0.003f32).value;
    let m64 = robust_performance_margin(&b64, &ImcFilterConfig::default(), &PerformanceWeight::default(), ETA_D).value;
    assert!((m32 as f64 - m64).abs() < 1e-4);
}

#[test]
fn csv_has_one_row_per_frequency() {
    let b = default_bound();
    let p = margin_profile(&b, &ImcFilterConfig::default(), &PerformanceWeight::default(), ETA_D);
    let mut buf = Vec::new();
    p.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "omega,lbar,stability,performance,total");
    assert_eq!(lines.len(), b.len() + 1);
    let cols: Vec<f64> = lines[1].split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(cols.len(), 5);
    assert!((cols[4] - cols[2] - cols[3]).abs() < 1e-12);
}
