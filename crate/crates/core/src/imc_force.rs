//! Contact-force control by Internal Model Control.
//!
//! After feedback linearization (`tau_c = F + C_c + G_c`, so that
//! `lambda = -F` for rigid contacts) each contact-force component is treated
//! as a SISO first-order-plus-deadtime plant. Channels work with a
//! force-positive command `u = -F`: the nominal plant is then
//! `lambda / u = k e^{-eta_d s} / (eta s + 1)`.
//!
//! Per step a channel compares the measured force with the output of its
//! internal model, filters the mismatch through `q_d` and subtracts it from
//! the reference filtered through `q_r`. The deadtime lives only in the
//! internal model; `q_r` and `q_d` invert the lag part.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{Complex, DVector};

use crate::decomposition::ContactSubsystem;
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Nominal actuator dynamics `k e^{-eta_d s} / (eta s + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalActuatorModel<T: Real> {
    pub k: T,
    pub eta: T,
    pub eta_d: T,
}

impl<T: Real> NominalActuatorModel<T> {
    pub fn new(k: T, eta: T, eta_d: T) -> Result<Self> {
        let m = Self { k, eta, eta_d };
        m.validate()?;
        Ok(m)
    }

    /// Unit gain, 20 ms lag, 3 ms deadtime.
    pub fn default_hyq() -> Self {
        Self { k: T::one(), eta: lit(0.02), eta_d: lit(0.003) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > T::zero()) || !(self.eta > T::zero()) || !(self.eta_d >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "nominal actuator needs k > 0, eta > 0, eta_d >= 0 (got {}, {}, {})",
                self.k, self.eta, self.eta_d
            )));
        }
        Ok(())
    }

    /// Deadtime rounded to whole control periods.
    pub fn delay_samples(&self, dt: T) -> usize {
        delay_samples(self.eta_d, dt)
    }
}

pub(crate) fn delay_samples<T: Real>(eta_d: T, dt: T) -> usize {
    to_f64(eta_d / dt).round().max(0.0) as usize
}

/// Filter time constants of the two IMC controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImcFilterConfig<T: Real> {
    pub eta_f_dist: T,
    pub eta_f_track: T,
    /// The disturbance filter gets an extra pole at `eta_f_dist / ratio`.
    pub fast_pole_ratio: T,
}

impl<T: Real> Default for ImcFilterConfig<T> {
    fn default() -> Self {
        Self { eta_f_dist: lit(0.03), eta_f_track: lit(0.05), fast_pole_ratio: lit(10.0) }
    }
}

impl<T: Real> ImcFilterConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_f_dist > T::zero()) || !(self.eta_f_track > T::zero()) {
            return Err(Error::InvalidParameter("IMC filter time constants must be positive".into()));
        }
        if !(self.fast_pole_ratio >= T::one()) {
            return Err(Error::InvalidParameter("fast_pole_ratio must be at least 1".into()));
        }
        Ok(())
    }

    pub fn disturbance_filter(&self) -> Lowpass<T> {
        Lowpass { eta_f: self.eta_f_dist, fast_pole_ratio: Some(self.fast_pole_ratio) }
    }

    pub fn tracking_filter(&self) -> Lowpass<T> {
        Lowpass::first_order(self.eta_f_track)
    }
}

/// Low-pass `f(s) = 1/(eta_f s + 1)`, optionally times
/// `1/((eta_f / r) s + 1)`. `eta_f = 0` is the unity filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lowpass<T: Real> {
    pub eta_f: T,
    pub fast_pole_ratio: Option<T>,
}

impl<T: Real> Lowpass<T> {
    pub fn unity() -> Self {
        Self { eta_f: T::zero(), fast_pole_ratio: None }
    }

    pub fn first_order(eta_f: T) -> Self {
        Self { eta_f, fast_pole_ratio: None }
    }

    pub fn with_fast_pole(eta_f: T, ratio: T) -> Self {
        Self { eta_f, fast_pole_ratio: Some(ratio) }
    }

    pub fn eval(&self, omega: T) -> Complex<T> {
        let one = Complex::new(T::one(), T::zero());
        let mut f = one / Complex::new(T::one(), self.eta_f * omega);
        if let Some(r) = self.fast_pole_ratio {
            f /= Complex::new(T::one(), self.eta_f / r * omega);
        }
        f
    }
}

/// Modulus of a complex number without requiring `Float`.
pub(crate) fn modulus<T: Real>(z: Complex<T>) -> T {
    z.re.hypot(z.im)
}

/// Continuous lead-lag `gain (zero_tc s + 1) / (pole_tc s + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadLag<T: Real> {
    pub zero_tc: T,
    pub pole_tc: T,
    pub gain: T,
}

impl<T: Real> LeadLag<T> {
    pub fn eval(&self, omega: T) -> Complex<T> {
        Complex::new(self.gain, self.gain * self.zero_tc * omega) / Complex::new(T::one(), self.pole_tc * omega)
    }

    pub fn dc_gain(&self) -> T {
        self.gain
    }

    /// Zero location in rad/s (`None` for a pure lag).
    pub fn zero(&self) -> Option<T> {
        (self.zero_tc > T::zero()).then(|| -T::one() / self.zero_tc)
    }

    pub fn pole(&self) -> T {
        -T::one() / self.pole_tc
    }
}

/// H2-optimal IMC controller for a first-order-deadtime plant and step
/// inputs, detuned by a first-order filter: `q = (eta s + 1) / k * f`. The
/// deadtime is not inverted.
pub fn h2_optimal_q<T: Real>(nominal: &NominalActuatorModel<T>, f_time_constant: T) -> Result<LeadLag<T>> {
    if !(f_time_constant > T::zero()) {
        return Err(Error::InvalidParameter("filter time constant must be positive".into()));
    }
    nominal.validate()?;
    Ok(LeadLag { zero_tc: nominal.eta, pole_tc: f_time_constant, gain: T::one() / nominal.k })
}

/// First-order difference equation `y = b0 u + b1 u[-1] - a1 y[-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFirstOrder<T: Real> {
    pub b0: T,
    pub b1: T,
    pub a1: T,
    u_prev: T,
    y_prev: T,
}

impl<T: Real> DiscreteFirstOrder<T> {
    pub fn step(&mut self, u: T) -> T {
        let y = self.b0 * u + self.b1 * self.u_prev - self.a1 * self.y_prev;
        self.u_prev = u;
        self.y_prev = y;
        y
    }

    pub fn reset(&mut self) {
        self.u_prev = T::zero();
        self.y_prev = T::zero();
    }

    pub fn dc_gain(&self) -> T {
        (self.b0 + self.b1) / (T::one() + self.a1)
    }
}

// warn once per process, not once per channel
static UNDER_RESOLVED_WARNED: AtomicBool = AtomicBool::new(false);

/// Tustin discretization of `gain (zero_tc s + 1) / (pole_tc s + 1)`.
pub fn discretize_first_order<T: Real>(zero_tc: T, pole_tc: T, gain: T, dt: T) -> Result<DiscreteFirstOrder<T>> {
    if !(dt > T::zero()) || !(pole_tc > T::zero()) || !(zero_tc >= T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "discretization needs dt > 0, pole > 0, zero >= 0 (got dt {dt}, pole {pole_tc}, zero {zero_tc})"
        )));
    }
    let two = lit::<T>(2.0);
    if dt > pole_tc / two && !UNDER_RESOLVED_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("filter pole {pole_tc} s is under-resolved at dt = {dt} s");
    }
    let kz = two * zero_tc / dt;
    let kp = two * pole_tc / dt;
    let a0 = kp + T::one();
    Ok(DiscreteFirstOrder {
        b0: gain * (kz + T::one()) / a0,
        b1: gain * (T::one() - kz) / a0,
        a1: (T::one() - kp) / a0,
        u_prev: T::zero(),
        y_prev: T::zero(),
    })
}

pub fn hinge<T: Real>(y: T) -> T {
    y.max(T::zero())
}

pub fn deadzone<T: Real>(d: T, width: T) -> T {
    if d.abs() <= width {
        T::zero()
    } else {
        d - width * d.signum()
    }
}

/// Sampled first-order lag with an integer-sample input delay, exact for
/// piecewise-constant inputs: `y_j = a y_{j-1} + (1 - a) k u_{j-n}` with
/// `a = exp(-dt / eta)`. Used for the internal model and the simulated
/// actuators.
#[derive(Debug, Clone, PartialEq)]
pub struct LagDelay<T: Real> {
    a: T,
    gain: T,
    buffer: VecDeque<T>,
    y: T,
}

impl<T: Real> LagDelay<T> {
    pub fn new(gain: T, eta: T, delay: usize, dt: T) -> Self {
        let a = if eta > T::zero() { (-dt / eta).exp() } else { T::zero() };
        Self { a, gain, buffer: std::iter::repeat_n(T::zero(), delay).collect(), y: T::zero() }
    }

    pub fn delay(&self) -> usize {
        self.buffer.len()
    }

    pub fn output(&self) -> T {
        self.y
    }

    pub fn step(&mut self, u: T) -> T {
        let old = if self.buffer.is_empty() {
            u
        } else {
            self.buffer.push_back(u);
            self.buffer.pop_front().unwrap_or(u)
        };
        self.y = self.a * self.y + (T::one() - self.a) * self.gain * old;
        self.y
    }

    pub fn reset(&mut self) {
        self.buffer.iter_mut().for_each(|v| *v = T::zero());
        self.y = T::zero();
    }
}

/// Cascade of discrete first-order sections.
#[derive(Debug, Clone, PartialEq)]
struct Cascade<T: Real>(Vec<DiscreteFirstOrder<T>>);

impl<T: Real> Cascade<T> {
    fn step(&mut self, u: T) -> T {
        self.0.iter_mut().fold(u, |x, s| s.step(x))
    }

    fn reset(&mut self) {
        self.0.iter_mut().for_each(DiscreteFirstOrder::reset);
    }
}

fn controller<T: Real>(nominal: &NominalActuatorModel<T>, filter: &Lowpass<T>, dt: T) -> Result<Cascade<T>> {
    let q = h2_optimal_q(nominal, filter.eta_f)?;
    let mut sections = vec![discretize_first_order(q.zero_tc, q.pole_tc, q.gain, dt)?];
    if let Some(r) = filter.fast_pole_ratio {
        sections.push(discretize_first_order(T::zero(), filter.eta_f / r, T::one(), dt)?);
    }
    Ok(Cascade(sections))
}

/// One contact-force component under IMC.
#[derive(Debug, Clone)]
pub struct ImcChannel<T: Real> {
    pub id: usize,
    pub nominal: NominalActuatorModel<T>,
    pub dt: T,
    /// Applies `max(., 0)` to the internal-model output (normal channels).
    pub hinge_enabled: bool,
    pub deadzone_width: T,
    model: LagDelay<T>,
    q_r: Cascade<T>,
    q_d: Cascade<T>,
    u: T,
    y_tilde: T,
    d_tilde: T,
    faulted: bool,
}

impl<T: Real> ImcChannel<T> {
    pub fn new(
        id: usize,
        nominal: NominalActuatorModel<T>,
        filters: &ImcFilterConfig<T>,
        dt: T,
        hinge_enabled: bool,
        deadzone_width: T,
    ) -> Result<Self> {
        nominal.validate()?;
        filters.validate()?;
        if !(deadzone_width >= T::zero()) {
            return Err(Error::InvalidParameter("deadzone width must be non-negative".into()));
        }
        Ok(Self {
            id,
            nominal,
            dt,
            hinge_enabled,
            deadzone_width,
            model: LagDelay::new(nominal.k, nominal.eta, nominal.delay_samples(dt), dt),
            q_r: controller(&nominal, &filters.tracking_filter(), dt)?,
            q_d: controller(&nominal, &filters.disturbance_filter(), dt)?,
            u: T::zero(),
            y_tilde: T::zero(),
            d_tilde: T::zero(),
            faulted: false,
        })
    }

    /// Advances the channel by one period and returns the command `u`. On
    /// non-finite input the state is left untouched, the previous command
    /// stays latched and the channel is marked faulted.
    pub fn step(&mut self, lambda_ref: T, lambda_meas: T) -> Result<T> {
        if !lambda_ref.is_finite() || !lambda_meas.is_finite() {
            self.faulted = true;
            return Err(Error::NonFiniteInput { channel: self.id });
        }
        let y = self.model.output();
        self.y_tilde = if self.hinge_enabled { hinge(y) } else { y };
        self.d_tilde = lambda_meas - self.y_tilde;
        let d = deadzone(self.d_tilde, self.deadzone_width);
        let u = self.q_r.step(lambda_ref) - self.q_d.step(d);
        self.model.step(u);
        self.u = u;
        Ok(u)
    }

    /// Clears filters and internal model, e.g. on touchdown or lift-off.
    pub fn reset(&mut self) {
        self.model.reset();
        self.q_r.reset();
        self.q_d.reset();
        self.u = T::zero();
        self.y_tilde = T::zero();
        self.d_tilde = T::zero();
        self.faulted = false;
    }

    pub fn output(&self) -> T {
        self.u
    }

    pub fn model_output(&self) -> T {
        self.y_tilde
    }

    pub fn disturbance_estimate(&self) -> T {
        self.d_tilde
    }

    pub fn is_faulted(&self) -> bool {
        self.faulted
    }

    pub fn delay_samples(&self) -> usize {
        self.model.delay()
    }
}

/// `tau_c = F + C_c + G_c`.
pub fn feedback_linearize<T: Real>(cs: &ContactSubsystem<T>, f: &DVector<T>) -> Result<DVector<T>> {
    if f.len() != cs.dim() {
        return Err(Error::DimensionMismatch {
            what: "feedback-linearized command",
            expected: cs.dim(),
            found: f.len(),
        });
    }
    Ok(f + &cs.cc + &cs.gc)
}

/// Output of one control period of the contact-force controller, stacked
/// like the stance Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactForceCommand<T: Real> {
    pub u: DVector<T>,
    pub tau_c: DVector<T>,
    pub d_tilde: DVector<T>,
}

/// Two channels (tangential `x`, normal `z`) per foot; channels of feet
/// leaving or entering stance are reset.
#[derive(Debug, Clone)]
pub struct ImcBank<T: Real> {
    channels: Vec<ImcChannel<T>>,
    active: Vec<bool>,
}

impl<T: Real> ImcBank<T> {
    pub fn new(
        feet: usize,
        nominal: NominalActuatorModel<T>,
        filters: &ImcFilterConfig<T>,
        dt: T,
        deadzone_width: T,
    ) -> Result<Self> {
        let mut channels = Vec::with_capacity(2 * feet);
        for f in 0..feet {
            channels.push(ImcChannel::new(2 * f, nominal, filters, dt, false, deadzone_width)?);
            channels.push(ImcChannel::new(2 * f + 1, nominal, filters, dt, true, deadzone_width)?);
        }
        Ok(Self { channels, active: vec![false; feet] })
    }

    pub fn channel(&self, foot: usize, axis: usize) -> &ImcChannel<T> {
        &self.channels[2 * foot + axis]
    }

    /// Runs the stance channels on stacked references and measurements and
    /// assembles `tau_c`. A faulted channel keeps its previous command.
    pub fn command(
        &mut self,
        cs: &ContactSubsystem<T>,
        stance: &[usize],
        lambda_ref: &DVector<T>,
        lambda_meas: &DVector<T>,
    ) -> Result<ContactForceCommand<T>> {
        let n = 2 * stance.len();
        for (what, found) in [("force reference", lambda_ref.len()), ("force measurement", lambda_meas.len())] {
            if found != n {
                return Err(Error::DimensionMismatch { what, expected: n, found });
            }
        }
        for foot in 0..self.active.len() {
            let now = stance.contains(&foot);
            if now != self.active[foot] {
                self.channels[2 * foot].reset();
                self.channels[2 * foot + 1].reset();
                self.active[foot] = now;
            }
        }
        let mut u = DVector::zeros(n);
        let mut d = DVector::zeros(n);
        for (r, &foot) in stance.iter().enumerate() {
            for axis in 0..2 {
                let ch = &mut self.channels[2 * foot + axis];
                let i = 2 * r + axis;
                u[i] = match ch.step(lambda_ref[i], lambda_meas[i]) {
                    Ok(v) => v,
                    Err(e) => {
                        log::warn!("{e}; holding previous command");
                        ch.output()
                    }
                };
                d[i] = ch.disturbance_estimate();
            }
        }
        let tau_c = feedback_linearize(cs, &(-&u))?;
        Ok(ContactForceCommand { u, tau_c, d_tilde: d })
    }
}
