use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::imc_force::LagDelay;

/// Joint velocity below which stiction is active, rad/s.
pub const STICTION_VELOCITY: f64 = 1e-3;

/// First-order-plus-deadtime torque actuator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorParams {
    pub gain: f64,
    /// Lag time constant, s.
    pub eta: f64,
    /// Deadtime in control periods.
    pub delay: usize,
    /// Breakaway torque, N m.
    pub stiction: f64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self { gain: 1.0, eta: 0.02, delay: 1, stiction: 0.0 }
    }
}

impl ActuatorParams {
    pub fn passthrough() -> Self {
        Self { gain: 1.0, eta: 0.0, delay: 0, stiction: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0 && self.gain.is_finite()) || !(self.eta >= 0.0) || !(self.stiction >= 0.0) {
            return Err(Error::InvalidParameter(format!("bad actuator parameters {self:?}")));
        }
        Ok(())
    }
}

/// One lag/delay line per actuated joint.
#[derive(Debug, Clone)]
pub struct ActuatorBank {
    params: Vec<ActuatorParams>,
    lines: Vec<LagDelay<f64>>,
    applied: DVector<f64>,
}

impl ActuatorBank {
    pub fn new(params: Vec<ActuatorParams>, dt: f64) -> Result<Self> {
        for p in &params {
            p.validate()?;
        }
        let lines = params.iter().map(|p| LagDelay::new(p.gain, p.eta, p.delay, dt)).collect();
        let n = params.len();
        Ok(Self { params, lines, applied: DVector::zeros(n) })
    }

    pub fn uniform(joints: usize, params: ActuatorParams, dt: f64) -> Result<Self> {
        Self::new(vec![params; joints], dt)
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn params(&self) -> &[ActuatorParams] {
        &self.params
    }

    /// Torque applied during the current period.
    pub fn applied(&self) -> &DVector<f64> {
        &self.applied
    }

    /// Feeds one command sample and returns the applied torque. Near zero
    /// joint velocity the torque magnitude is reduced by the stiction bound.
    pub fn step(&mut self, tau_cmd: &DVector<f64>, joint_velocity: &DVector<f64>) -> Result<&DVector<f64>> {
        let n = self.lines.len();
        for (what, found) in [("actuator command", tau_cmd.len()), ("joint velocity", joint_velocity.len())] {
            if found != n {
                return Err(Error::DimensionMismatch { what, expected: n, found });
            }
        }
        for i in 0..n {
            let mut tau = self.lines[i].step(tau_cmd[i]);
            let s = self.params[i].stiction;
            if s > 0.0 && joint_velocity[i].abs() < STICTION_VELOCITY {
                tau = tau.signum() * (tau.abs() - s).max(0.0);
            }
            self.applied[i] = tau;
        }
        Ok(&self.applied)
    }

    pub fn reset(&mut self) {
        self.lines.iter_mut().for_each(LagDelay::reset);
        self.applied.fill(0.0);
    }
}
