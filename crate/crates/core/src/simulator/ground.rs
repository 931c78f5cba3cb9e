use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Terrain height as a function of horizontal position and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroundProfile {
    Flat,
    /// Everything beyond `x_start` rises by `rise` over `[t0, t0 + ramp]`.
    Plank {
        x_start: f64,
        rise: f64,
        t0: f64,
        ramp: f64,
    },
    /// Board hinged at `pivot` covering `x > pivot`, tilting by
    /// `amplitude sin(2 pi f (t - t0))` rad from `t0` on.
    Seesaw {
        pivot: f64,
        amplitude: f64,
        frequency: f64,
        t0: f64,
    },
}

impl GroundProfile {
    pub fn height(&self, x: f64, t: f64) -> f64 {
        match *self {
            Self::Flat => 0.0,
            Self::Plank { x_start, rise, t0, ramp } => {
                if x > x_start {
                    rise * ((t - t0) / ramp).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
            Self::Seesaw { pivot, amplitude, frequency, t0 } => {
                if x > pivot && t > t0 {
                    (x - pivot) * (amplitude * (2.0 * PI * frequency * (t - t0)).sin()).tan()
                } else {
                    0.0
                }
            }
        }
    }

    /// Partial derivative of the height with respect to time.
    pub fn height_rate(&self, x: f64, t: f64) -> f64 {
        match *self {
            Self::Flat => 0.0,
            Self::Plank { x_start, rise, t0, ramp } => {
                if x > x_start && t > t0 && t < t0 + ramp {
                    rise / ramp
                } else {
                    0.0
                }
            }
            Self::Seesaw { pivot, amplitude, frequency, t0 } => {
                if x > pivot && t > t0 {
                    let w = 2.0 * PI * frequency;
                    let th = amplitude * (w * (t - t0)).sin();
                    let c = th.cos();
                    (x - pivot) * amplitude * w * (w * (t - t0)).cos() / (c * c)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Flat => true,
            Self::Plank { rise, ramp, t0, x_start } => {
                ramp > 0.0 && rise.is_finite() && t0.is_finite() && x_start.is_finite()
            }
            Self::Seesaw { amplitude, frequency, t0, pivot } => {
                amplitude.abs() < 0.5 && frequency >= 0.0 && t0.is_finite() && pivot.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad ground profile {self:?}")))
        }
    }
}

/// Spring-damper ground with Coulomb friction. Normals are taken vertical
/// on every profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundModel {
    /// N/m, also used tangentially.
    pub stiffness: f64,
    /// N s/m, also used tangentially.
    pub damping: f64,
    pub friction: f64,
    pub profile: GroundProfile,
}

/// Near-critical damping for a foot carrying `mass_share`.
pub fn default_damping(stiffness: f64, mass_share: f64) -> f64 {
    2.0 * (stiffness * mass_share).sqrt()
}

impl GroundModel {
    pub const STIFF: f64 = 6.0e5;
    pub const SOFT: f64 = 1.0e4;

    /// Flat ground damped for a quarter of `robot_mass` per foot.
    pub fn new(stiffness: f64, friction: f64, robot_mass: f64) -> Self {
        Self {
            stiffness,
            damping: default_damping(stiffness, robot_mass / 4.0),
            friction,
            profile: GroundProfile::Flat,
        }
    }

    pub fn with_profile(mut self, profile: GroundProfile) -> Self {
        self.profile = profile;
        self
    }

    /// `max(0, k p + d pdot)`.
    pub fn normal_force(&self, penetration: f64, rate: f64) -> f64 {
        if penetration <= 0.0 {
            return 0.0;
        }
        (self.stiffness * penetration + self.damping * rate).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > 0.0 && self.stiffness.is_finite()) || !(self.damping >= 0.0) || !(self.friction >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ground needs k > 0, d >= 0, mu >= 0 (got {}, {}, {})",
                self.stiffness, self.damping, self.friction
            )));
        }
        self.profile.validate()
    }
}
