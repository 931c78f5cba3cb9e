//! Swing-leg control: Cartesian foot trajectories to the next foothold and
//! inverse dynamics with a low-impedance PD correction in the non-contact
//! task space.

use nalgebra::{DVector, Vector2};

use crate::decomposition::NoncontactSubsystem;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Position, velocity and acceleration of one foot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingSample<T: Real> {
    pub p: Vector2<T>,
    pub v: Vector2<T>,
    pub a: Vector2<T>,
}

/// Foot trajectory from lift-off to touchdown. Horizontally a quintic
/// rest-to-rest blend; vertically two such blends meeting at the apex at
/// mid-swing, which keeps the curve C2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingReference<T: Real> {
    pub start: Vector2<T>,
    pub end: Vector2<T>,
    /// Apex height, absolute.
    pub apex_z: T,
    pub start_time: T,
    pub duration: T,
}

/// Quintic rest-to-rest blend on `s in [0, 1]`: value, first and second
/// derivative with respect to `s`.
fn blend<T: Real>(s: T) -> (T, T, T) {
    let c = |x: f64| lit::<T>(x);
    let s2 = s * s;
    let s3 = s2 * s;
    (
        s3 * (c(10.0) - c(15.0) * s + c(6.0) * s2),
        s2 * (c(30.0) - c(60.0) * s + c(30.0) * s2),
        s * (c(60.0) - c(180.0) * s + c(120.0) * s2),
    )
}

impl<T: Real> SwingReference<T> {
    pub fn touchdown_time(&self) -> T {
        self.start_time + self.duration
    }

    pub fn touchdown_location(&self) -> Vector2<T> {
        self.end
    }

    /// Trajectory at absolute time `t`; held at the end points outside the
    /// swing interval.
    pub fn sample(&self, t: T) -> SwingSample<T> {
        let tau = ((t - self.start_time) / self.duration).max(T::zero()).min(T::one());
        let inside = t > self.start_time && t < self.touchdown_time();
        let d = self.duration;
        let (bx, bxd, bxdd) = blend(tau);
        let dx = self.end.x - self.start.x;
        let (mut px, mut vx, mut ax) = (self.start.x + dx * bx, dx * bxd / d, dx * bxdd / (d * d));

        let half: T = lit(0.5);
        let hd = d * half;
        let (z0, z1, s) = if tau <= half {
            (self.start.y, self.apex_z, tau / half)
        } else {
            (self.apex_z, self.end.y, (tau - half) / half)
        };
        let (bz, bzd, bzdd) = blend(s);
        let dz = z1 - z0;
        let (pz, mut vz, mut az) = (z0 + dz * bz, dz * bzd / hd, dz * bzdd / (hd * hd));
        if !inside {
            px = if tau <= T::zero() { self.start.x } else { self.end.x };
            vx = T::zero();
            ax = T::zero();
            vz = T::zero();
            az = T::zero();
        }
        SwingSample { p: Vector2::new(px, pz), v: Vector2::new(vx, vz), a: Vector2::new(ax, az) }
    }
}

/// Swing from `start` to `end` starting at `start_time`, peaking
/// `apex_height` above the higher end point.
pub fn make_swing_trajectory<T: Real>(
    start: Vector2<T>,
    end: Vector2<T>,
    apex_height: T,
    duration: T,
    start_time: T,
) -> Result<SwingReference<T>> {
    if !(duration > T::zero()) {
        return Err(Error::InvalidParameter("swing duration must be positive".into()));
    }
    if !(apex_height >= T::zero()) {
        return Err(Error::InvalidParameter("swing apex height must be non-negative".into()));
    }
    Ok(SwingReference { start, end, apex_z: start.y.max(end.y) + apex_height, start_time, duration })
}

/// Stacked swing-task reference for all swing feet, ordered like the
/// non-contact task.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingTarget<T: Real> {
    pub position: DVector<T>,
    pub velocity: DVector<T>,
    pub acceleration: DVector<T>,
}

impl<T: Real> SwingTarget<T> {
    pub fn from_samples(samples: &[SwingSample<T>]) -> Self {
        let n = 2 * samples.len();
        let pick = |f: &dyn Fn(&SwingSample<T>) -> Vector2<T>| {
            DVector::from_iterator(
                n,
                samples.iter().flat_map(|s| {
                    let v = f(s);
                    [v.x, v.y]
                }),
            )
        };
        Self { position: pick(&|s| s.p), velocity: pick(&|s| s.v), acceleration: pick(&|s| s.a) }
    }

    /// Hold the current position.
    pub fn hold(position: DVector<T>) -> Self {
        let n = position.len();
        Self { position, velocity: DVector::zeros(n), acceleration: DVector::zeros(n) }
    }
}

/// Isotropic swing PD gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingGains<T: Real> {
    /// 1/s^2
    pub kp: T,
    /// 1/s
    pub kd: T,
}

impl<T: Real> Default for SwingGains<T> {
    fn default() -> Self {
        Self { kp: lit(50.0), kd: lit(10.0) }
    }
}

/// `M_nc (xdd_ref + Kp e + Kd ed) + C_nc + G_nc - J_c,nc^T lambda_hat` with
/// `e = x_ref - x`. `lambda_hat` are the commanded contact forces.
pub fn swing_track<T: Real>(
    nc: &NoncontactSubsystem<T>,
    target: &SwingTarget<T>,
    x: &DVector<T>,
    xd: &DVector<T>,
    gains: &SwingGains<T>,
    lambda_hat: &DVector<T>,
) -> Result<DVector<T>> {
    let n = nc.dim();
    for (what, v) in [
        ("swing reference position", &target.position),
        ("swing reference velocity", &target.velocity),
        ("swing reference acceleration", &target.acceleration),
        ("swing position", x),
        ("swing velocity", xd),
    ] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { what, expected: n, found: v.len() });
        }
    }
    if lambda_hat.len() != nc.jc_nc.nrows() {
        return Err(Error::DimensionMismatch {
            what: "commanded contact forces",
            expected: nc.jc_nc.nrows(),
            found: lambda_hat.len(),
        });
    }
    let e = &target.position - x;
    let ed = &target.velocity - xd;
    let acc = &target.acceleration + e * gains.kp + ed * gains.kd;
    Ok(&nc.mnc * acc + &nc.cnc + &nc.gnc - nc.jc_nc.transpose() * lambda_hat)
}
