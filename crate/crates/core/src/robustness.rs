//! Frequency-domain robustness of the IMC force loop against actuator
//! uncertainty.
//!
//! The actuator family is `k e^{-eta_d s} / (eta s + 1)` with `k` and `eta`
//! in intervals around the nominal values and a fixed delay. Its relative
//! error envelope `lbar(omega)` feeds a robust stability test
//! (`|lbar f| < 1`) and a robust performance test
//! (`|lbar f| + |(1 - e^{-i eta_d omega} f) w| < 1`).

use std::io::{self, Write};

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::imc_force::{modulus, ImcFilterConfig, Lowpass, NominalActuatorModel};
use crate::scalar::{lit, to_f64, Real};

/// Bisection stops once `hi / lo - 1` falls below this.
pub const TUNING_REL_TOL: f64 = 1e-3;

/// Points in the monotonicity scan done before bisecting.
const MONOTONICITY_SAMPLES: usize = 24;

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    assert!(n >= 2 && lo > T::zero() && hi > lo, "invalid log grid");
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / lit::<T>((n - 1) as f64);
    (0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            i => (a + step * lit::<T>(i as f64)).exp(),
        })
        .collect()
}

/// 400 points over `[1e-2, 1e4]` rad/s.
pub fn default_frequency_grid<T: Real>() -> Vec<T> {
    log_grid(lit(1e-2), lit(1e4), 400)
}

fn linspace<T: Real>(lo: T, hi: T, n: usize) -> impl Iterator<Item = T> {
    let step = if n > 1 { (hi - lo) / lit::<T>((n - 1) as f64) } else { T::zero() };
    (0..n).map(move |i| lo + step * lit::<T>(i as f64))
}

/// Interval description of the actuator family around a nominal model.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySpec<T: Real> {
    pub nominal: NominalActuatorModel<T>,
    pub k_range: (T, T),
    pub eta_range: (T, T),
    /// Frequencies in rad/s, strictly increasing.
    pub omega: Vec<T>,
    /// Samples per parameter axis used to bound the family.
    pub samples: usize,
}

impl<T: Real> UncertaintySpec<T> {
    /// Symmetric intervals `k ± dk`, `eta ± d_eta` on the default grid.
    pub fn symmetric(nominal: NominalActuatorModel<T>, dk: T, d_eta: T) -> Result<Self> {
        Self::new(
            nominal,
            (nominal.k - dk, nominal.k + dk),
            (nominal.eta - d_eta, nominal.eta + d_eta),
            default_frequency_grid(),
        )
    }

    pub fn new(nominal: NominalActuatorModel<T>, k_range: (T, T), eta_range: (T, T), omega: Vec<T>) -> Result<Self> {
        let spec = Self { nominal, k_range, eta_range, omega, samples: 41 };
        spec.validate()?;
        Ok(spec)
    }

    /// `k in [0.6, 1.4]`, `eta in [0.01, 0.03]` s around the default actuator.
    pub fn hyq_default() -> Self {
        Self::symmetric(NominalActuatorModel::default_hyq(), lit(0.4), lit(0.01)).expect("default spec is valid")
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.nominal.validate()?;
        let bad = |msg: &str| Err(Error::InvalidUncertainty(msg.into()));
        let (k0, k1) = self.k_range;
        let (e0, e1) = self.eta_range;
        // checked first: a gain interval reaching zero also violates it
        let lbar0 = self.dc_bound();
        if !(lbar0 < T::one()) {
            return Err(Error::TheoremHypothesis { lbar0: to_f64(lbar0) });
        }
        if !(k0 > T::zero() && e0 > T::zero()) {
            return bad("lower bounds of k and eta must be positive");
        }
        if !(k1 >= k0 && e1 >= e0) {
            return bad("interval upper bound below lower bound");
        }
        if !(self.nominal.k >= k0 && self.nominal.k <= k1 && self.nominal.eta >= e0 && self.nominal.eta <= e1) {
            return bad("nominal model outside the uncertainty intervals");
        }
        if self.samples < 2 {
            return bad("need at least two samples per parameter");
        }
        if self.omega.is_empty() || !(self.omega[0] >= T::zero()) {
            return bad("frequency grid must be non-empty and non-negative");
        }
        if self.omega.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("frequency grid must be strictly increasing");
        }
        Ok(())
    }

    /// `lbar(0)`: delay and lag drop out, leaving the gain ratio.
    pub fn dc_bound(&self) -> T {
        let k = self.nominal.k;
        ((self.k_range.0 - k).abs()).max((self.k_range.1 - k).abs()) / k
    }

    /// Relative error `H_p / H~_p - 1` of one family member at `omega`.
    /// The common delay cancels.
    pub fn relative_error(&self, k: T, eta: T, omega: T) -> Complex<T> {
        let n = &self.nominal;
        let ratio = Complex::new(k, k * n.eta * omega) / Complex::new(n.k, n.k * eta * omega);
        ratio - Complex::new(T::one(), T::zero())
    }
}

/// `lbar` sampled on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyBound<T: Real> {
    pub omega: Vec<T>,
    pub lbar: Vec<T>,
}

impl<T: Real> UncertaintyBound<T> {
    /// `lbar = 0` everywhere (no uncertainty).
    pub fn zero(omega: Vec<T>) -> Self {
        let lbar = vec![T::zero(); omega.len()];
        Self { omega, lbar }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn max(&self) -> T {
        self.lbar.iter().fold(T::zero(), |m, &v| m.max(v))
    }

    /// Linear interpolation in `log omega`, clamped at the grid ends.
    pub fn interpolate(&self, omega: T) -> T {
        let i = self.omega.partition_point(|&w| w < omega);
        if i == 0 {
            return self.lbar[0];
        }
        if i == self.omega.len() {
            return self.lbar[i - 1];
        }
        let (w0, w1) = (self.omega[i - 1], self.omega[i]);
        let t = if w0 > T::zero() { (omega / w0).ln() / (w1 / w0).ln() } else { (omega - w0) / (w1 - w0) };
        self.lbar[i - 1] + (self.lbar[i] - self.lbar[i - 1]) * t
    }
}

/// Upper envelope of the relative plant error over a `samples x samples`
/// grid of `(k, eta)`. The DC entry is exact.
pub fn uncertainty_bound<T: Real>(spec: &UncertaintySpec<T>) -> Result<UncertaintyBound<T>> {
    spec.validate()?;
    let ks: Vec<T> = linspace(spec.k_range.0, spec.k_range.1, spec.samples).collect();
    let etas: Vec<T> = linspace(spec.eta_range.0, spec.eta_range.1, spec.samples).collect();
    let lbar = spec
        .omega
        .iter()
        .map(|&w| {
            if w == T::zero() {
                return spec.dc_bound();
            }
            let mut m = T::zero();
            for &k in &ks {
                for &eta in &etas {
                    m = m.max(modulus(spec.relative_error(k, eta, w)));
                }
            }
            m
        })
        .collect();
    Ok(UncertaintyBound { omega: spec.omega.clone(), lbar })
}

/// Performance weight `w(s) = gain / (s / bandwidth + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceWeight<T: Real> {
    /// rad/s
    pub bandwidth: T,
    pub gain: T,
}

impl<T: Real> Default for PerformanceWeight<T> {
    fn default() -> Self {
        Self { bandwidth: lit(50.0), gain: T::one() }
    }
}

impl<T: Real> PerformanceWeight<T> {
    /// `w = 0`: only robust stability is required.
    pub fn zero() -> Self {
        Self { gain: T::zero(), ..Self::default() }
    }

    pub fn time_constant(&self) -> T {
        T::one() / self.bandwidth
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > T::zero()) || !(self.gain >= T::zero()) {
            return Err(Error::InvalidParameter(
                "performance weight needs positive bandwidth and non-negative gain".into(),
            ));
        }
        Ok(())
    }

    pub fn eval(&self, omega: T) -> Complex<T> {
        Complex::new(self.gain, T::zero()) / Complex::new(T::one(), omega / self.bandwidth)
    }
}

/// Supremum of a criterion over the grid and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin<T: Real> {
    pub value: T,
    /// rad/s
    pub omega: T,
}

impl<T: Real> Margin<T> {
    pub fn certified(&self) -> bool {
        self.value < T::one()
    }
}

/// Per-frequency terms of the robustness criteria.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginProfile<T: Real> {
    pub omega: Vec<T>,
    pub lbar: Vec<T>,
    /// `|lbar f|`
    pub stability: Vec<T>,
    /// `|(1 - e^{-i eta_d omega} f) w|`
    pub performance: Vec<T>,
}

impl<T: Real> MarginProfile<T> {
    pub fn total(&self, i: usize) -> T {
        self.stability[i] + self.performance[i]
    }

    pub fn margin(&self) -> Margin<T> {
        sup(&self.omega, (0..self.omega.len()).map(|i| self.total(i)))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "omega,lbar,stability,performance,total")?;
        for i in 0..self.omega.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                to_f64(self.omega[i]),
                to_f64(self.lbar[i]),
                to_f64(self.stability[i]),
                to_f64(self.performance[i]),
                to_f64(self.total(i))
            )?;
        }
        Ok(())
    }
}

fn sup<T: Real>(omega: &[T], values: impl Iterator<Item = T>) -> Margin<T> {
    let mut best = Margin { value: T::zero(), omega: omega.first().copied().unwrap_or_else(T::zero) };
    for (v, &w) in values.zip(omega) {
        if v > best.value {
            best = Margin { value: v, omega: w };
        }
    }
    best
}

fn check_coverage<T: Real>(omega: &[T]) {
    let covers = omega.first().is_some_and(|&w| w <= lit(1e-2)) && omega.last().is_some_and(|&w| w >= lit(1e4));
    if !covers {
        log::warn!("frequency grid does not cover [1e-2, 1e4] rad/s; margin may be optimistic");
    }
}

fn profile_with<T: Real>(
    lbar: &UncertaintyBound<T>,
    f: &Lowpass<T>,
    weight: &PerformanceWeight<T>,
    eta_d: T,
) -> MarginProfile<T> {
    let one = Complex::new(T::one(), T::zero());
    let mut stability = Vec::with_capacity(lbar.len());
    let mut performance = Vec::with_capacity(lbar.len());
    for (&w, &l) in lbar.omega.iter().zip(&lbar.lbar) {
        let fw = f.eval(w);
        stability.push(l * modulus(fw));
        let (s, c) = (eta_d * w).sin_cos();
        let sensitivity = one - Complex::new(c, -s) * fw;
        performance.push(modulus(sensitivity * weight.eval(w)));
    }
    MarginProfile { omega: lbar.omega.clone(), lbar: lbar.lbar.clone(), stability, performance }
}

/// Both robustness terms at every grid frequency, for the disturbance filter
/// of `filter`.
pub fn margin_profile<T: Real>(
    lbar: &UncertaintyBound<T>,
    filter: &ImcFilterConfig<T>,
    weight: &PerformanceWeight<T>,
    eta_d: T,
) -> MarginProfile<T> {
    profile_with(lbar, &filter.disturbance_filter(), weight, eta_d)
}

/// Supremum over the grid of `|lbar f| + |(1 - e^{-i eta_d omega} f) w|`.
/// A value below one certifies robust performance for the whole family.
pub fn robust_performance_margin<T: Real>(
    lbar: &UncertaintyBound<T>,
    filter: &ImcFilterConfig<T>,
    weight: &PerformanceWeight<T>,
    eta_d: T,
) -> Margin<T> {
    check_coverage(&lbar.omega);
    margin_profile(lbar, filter, weight, eta_d).margin()
}

/// Supremum over the grid of `|lbar f|`.
pub fn robust_stability_peak<T: Real>(lbar: &UncertaintyBound<T>, f: &Lowpass<T>) -> Margin<T> {
    sup(&lbar.omega, lbar.omega.iter().zip(&lbar.lbar).map(|(&w, &l)| l * modulus(f.eval(w))))
}

/// Robust stability of the family under the disturbance filter of `filter`.
pub fn robust_stability_check<T: Real>(lbar: &UncertaintyBound<T>, filter: &ImcFilterConfig<T>) -> bool {
    robust_stability_peak(lbar, &filter.disturbance_filter()).certified()
}

/// Smallest disturbance-filter time constant in `range` whose robust
/// performance margin is below one. The remaining fields of `template` are
/// kept. Returns `range.0` if it already satisfies the criterion.
pub fn tune_eta_f<T: Real>(
    lbar: &UncertaintyBound<T>,
    weight: &PerformanceWeight<T>,
    eta_d: T,
    range: (T, T),
    template: &ImcFilterConfig<T>,
) -> Result<T> {
    let (lo, hi) = range;
    if !(lo > T::zero() && hi > lo) {
        return Err(Error::InfeasibleTuning("search range must satisfy 0 < low < high".into()));
    }
    weight.validate()?;
    check_coverage(&lbar.omega);
    let margin = |eta_f: T| {
        let cfg = ImcFilterConfig { eta_f_dist: eta_f, ..*template };
        margin_profile(lbar, &cfg, weight, eta_d).margin().value
    };
    let m_lo = margin(lo);
    if m_lo < T::one() {
        return Ok(lo);
    }
    let m_hi = margin(hi);
    if !(m_hi < T::one()) {
        return Err(Error::InfeasibleTuning(format!(
            "margin at the upper end ({}) is {:.4}, not below 1",
            to_f64(hi),
            to_f64(m_hi)
        )));
    }
    let scan: Vec<T> = log_grid(lo, hi, MONOTONICITY_SAMPLES).into_iter().map(margin).collect();
    let slack: T = lit(1e-9);
    if let Some(i) = scan.windows(2).position(|w| w[1] > w[0] + slack) {
        return Err(Error::InfeasibleTuning(format!(
            "margin is not monotone in eta_f over the bracket (increases after sample {i})"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    let tol: T = lit(TUNING_REL_TOL);
    let half: T = lit(0.5);
    while b / a - T::one() > tol {
        let mid = ((a.ln() + b.ln()) * half).exp();
        if margin(mid) < T::one() {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(b)
}
