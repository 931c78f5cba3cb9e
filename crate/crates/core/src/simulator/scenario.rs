use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};

use super::ground::GroundProfile;
use crate::error::{Error, Result};
use crate::rigid_body::{centroidal, GeneralizedState, PlanarQuadrupedParams};
use crate::swing_ctrl::{make_swing_trajectory, SwingReference, SwingSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    Imc,
    Baseline,
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imc" => Ok(Self::Imc),
            "baseline" => Ok(Self::Baseline),
            _ => Err(Error::InvalidParameter(format!("unknown controller '{s}' (imc | baseline)"))),
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Imc => "imc",
            Self::Baseline => "baseline",
        })
    }
}

/// CoM reference `(x, z, pitch)` moving `distance` along `x`: smooth
/// acceleration over `ramp`, cruise at `speed`, smooth stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComTrajectory {
    pub origin: Vector3<f64>,
    pub distance: f64,
    pub speed: f64,
    pub t0: f64,
    pub ramp: f64,
}

/// Position, velocity and acceleration of the CoM reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComSample {
    pub x: Vector3<f64>,
    pub xd: Vector3<f64>,
    pub xdd: Vector3<f64>,
}

impl ComTrajectory {
    pub fn hold(origin: Vector3<f64>) -> Self {
        Self { origin, distance: 0.0, speed: 1.0, t0: 0.0, ramp: 0.0 }
    }

    pub fn end_time(&self) -> f64 {
        if self.distance == 0.0 {
            self.t0
        } else {
            self.t0 + self.distance / self.speed + self.ramp
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance >= 0.0) {
            return Err(Error::InvalidScenario("CoM travel must be forward".into()));
        }
        if self.distance != 0.0 && !(self.speed > 0.0 && self.ramp >= 0.0 && self.distance / self.speed >= self.ramp) {
            return Err(Error::InvalidScenario(
                "CoM trajectory needs speed > 0 and a cruise phase at least as long as the ramp".into(),
            ));
        }
        Ok(())
    }

    pub fn sample(&self, t: f64) -> ComSample {
        let (v, r) = (self.speed, self.ramp);
        let t1 = self.end_time();
        // travelled distance, speed and acceleration along x
        let (s, sd, sdd) = if self.distance == 0.0 || t <= self.t0 {
            (0.0, 0.0, 0.0)
        } else if t >= t1 {
            (self.distance, 0.0, 0.0)
        } else if t < self.t0 + r {
            let u = (t - self.t0) / r;
            (v * r * (u.powi(3) - 0.5 * u.powi(4)), v * u * u * (3.0 - 2.0 * u), 6.0 * v * u * (1.0 - u) / r)
        } else if t > t1 - r {
            let u = (t1 - t) / r;
            (
                self.distance - v * r * (u.powi(3) - 0.5 * u.powi(4)),
                v * u * u * (3.0 - 2.0 * u),
                -6.0 * v * u * (1.0 - u) / r,
            )
        } else {
            (0.5 * v * r + v * (t - self.t0 - r), v, 0.0)
        };
        ComSample {
            x: self.origin + Vector3::new(s, 0.0, 0.0),
            xd: Vector3::new(sd, 0.0, 0.0),
            xdd: Vector3::new(sdd, 0.0, 0.0),
        }
    }
}

/// Stance flags that hold from `time` until the next event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StanceEvent {
    pub time: f64,
    pub stance: [bool; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingPlan {
    pub foot: usize,
    pub reference: SwingReference<f64>,
}

/// Scripted stand-in for a motion planner.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitPlan {
    pub com: ComTrajectory,
    pub schedule: Vec<StanceEvent>,
    pub swings: Vec<SwingPlan>,
    /// Initial foot positions.
    pub footholds: [Vector2<f64>; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitParams {
    pub step_length: f64,
    /// Gait cycles; every foot steps once per cycle.
    pub steps: usize,
    /// Time allotted to each foot per cycle, s.
    pub leg_period: f64,
    pub swing_duration: f64,
    pub apex_height: f64,
    pub start: f64,
    /// CoM acceleration ramp, s.
    pub ramp: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            step_length: 0.1,
            steps: 10,
            leg_period: 0.5,
            swing_duration: 0.35,
            apex_height: 0.05,
            start: 1.0,
            ramp: 0.5,
        }
    }
}

/// Hind before front on each side, one foot at a time.
pub const CRAWL_ORDER: [usize; 4] = [3, 1, 2, 0];

/// CoM trajectory and stance schedule for `gait` (`stand` or `crawl`)
/// starting from CoM pose `com0` with feet at `feet`.
pub fn scripted_com_reference(
    gait: &str,
    params: &GaitParams,
    com0: Vector3<f64>,
    feet: &[Vector2<f64>; 4],
) -> Result<GaitPlan> {
    let all = StanceEvent { time: 0.0, stance: [true; 4] };
    match gait {
        "stand" => {
            Ok(GaitPlan { com: ComTrajectory::hold(com0), schedule: vec![all], swings: Vec::new(), footholds: *feet })
        }
        "crawl" => {
            let p = params;
            if !(p.step_length > 0.0 && p.leg_period > 0.0 && p.swing_duration > 0.0 && p.swing_duration < p.leg_period)
            {
                return Err(Error::InvalidScenario("crawl needs 0 < swing duration < leg period".into()));
            }
            let cycle = 4.0 * p.leg_period;
            let com = ComTrajectory {
                origin: com0,
                distance: p.step_length * p.steps as f64,
                speed: p.step_length / cycle,
                t0: p.start,
                ramp: p.ramp,
            };
            let mut schedule = vec![all];
            let mut swings = Vec::new();
            let mut placed = *feet;
            let lead = 0.5 * (p.leg_period - p.swing_duration);
            for cyc in 0..p.steps {
                for (slot, &foot) in CRAWL_ORDER.iter().enumerate() {
                    let t_lift = p.start + cyc as f64 * cycle + slot as f64 * p.leg_period + lead;
                    let target = placed[foot] + Vector2::new(p.step_length, 0.0);
                    let reference =
                        make_swing_trajectory(placed[foot], target, p.apex_height, p.swing_duration, t_lift)?;
                    swings.push(SwingPlan { foot, reference });
                    placed[foot] = target;
                    let mut stance = [true; 4];
                    stance[foot] = false;
                    schedule.push(StanceEvent { time: t_lift, stance });
                    schedule.push(StanceEvent { time: t_lift + p.swing_duration, stance: [true; 4] });
                }
            }
            Ok(GaitPlan { com, schedule, swings, footholds: *feet })
        }
        other => Err(Error::UnknownGait(other.to_string())),
    }
}

impl GaitPlan {
    pub fn stance_at(&self, t: f64) -> [bool; 4] {
        let i = self.schedule.partition_point(|e| e.time <= t);
        self.schedule[i.saturating_sub(1)].stance
    }

    /// Planned position of `foot` at `t`: the last foothold, or the swing
    /// reference while swinging.
    pub fn foothold(&self, foot: usize, t: f64) -> Vector2<f64> {
        if let Some(s) = self.swing_at(foot, t) {
            return s.p;
        }
        self.swings
            .iter()
            .rev()
            .find(|s| s.foot == foot && s.reference.touchdown_time() <= t)
            .map_or(self.footholds[foot], |s| s.reference.end)
    }

    /// Share of full load `foot` may carry at `t`: ramps to zero over
    /// `transition`, finishing half a transition before each lift-off so
    /// lagging force loops can follow, and back up after touchdown.
    pub fn load_factor(&self, foot: usize, t: f64, transition: f64) -> f64 {
        if transition <= 0.0 {
            return 1.0;
        }
        self.swings
            .iter()
            .filter(|s| s.foot == foot)
            .map(|s| {
                let before = (s.reference.start_time - t) / transition - 0.5;
                let after = (t - s.reference.touchdown_time()) / transition;
                before.max(after)
            })
            .fold(1.0, f64::min)
            .clamp(0.0, 1.0)
    }

    /// Swing of `foot` in progress at `t`, if any.
    pub fn swing_plan_at(&self, foot: usize, t: f64) -> Option<&SwingPlan> {
        self.swings.iter().find(|s| s.foot == foot && t >= s.reference.start_time && t <= s.reference.touchdown_time())
    }

    pub fn swing_at(&self, foot: usize, t: f64) -> Option<SwingSample<f64>> {
        self.swing_plan_at(foot, t).map(|s| s.reference.sample(t))
    }
}

/// External wrench `(fx, fz, my)` on the base over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub start: f64,
    pub end: f64,
    pub wrench: Vector3<f64>,
}

/// Standing posture: base pose `(x, z, pitch)` and world foot positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandingPose {
    pub base: (f64, f64, f64),
    pub feet: [Vector2<f64>; 4],
}

impl StandingPose {
    pub const BASE_HEIGHT: f64 = 0.55;

    /// Feet under the hips, base at [`Self::BASE_HEIGHT`].
    pub fn nominal(params: &PlanarQuadrupedParams) -> Self {
        Self {
            base: (0.0, Self::BASE_HEIGHT, 0.0),
            feet: std::array::from_fn(|leg| Vector2::new(params.hip_x(leg), 0.0)),
        }
    }

    /// Lowered by the static spring deflection of ground with stiffness `k`.
    pub fn settled(mut self, params: &PlanarQuadrupedParams, k: f64) -> Self {
        let sink = params.total_mass() * params.gravity / (4.0 * k);
        self.base.1 -= sink;
        self.feet.iter_mut().for_each(|f| f.y -= sink);
        self
    }

    pub fn state(&self, params: &PlanarQuadrupedParams) -> GeneralizedState<f64> {
        let q = params.stance_configuration(self.base, &self.feet);
        GeneralizedState::new(q, nalgebra::DVector::zeros(11))
    }
}

/// Everything a run needs besides the robot and the controller settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    /// Metrics ignore everything before this time.
    pub settle: f64,
    pub initial: GeneralizedState<f64>,
    pub plan: GaitPlan,
    pub ground: GroundProfile,
    pub disturbances: Vec<Disturbance>,
    pub controller: ControllerKind,
}

/// Names accepted by [`Scenario::named`].
pub const SCENARIOS: [&str; 5] = ["stand", "stand+force-step", "plank", "seesaw", "crawl"];

impl Scenario {
    /// Built-in scenario on ground of stiffness `ground_k` (used only to
    /// start the robot at its static sinkage).
    pub fn named(
        name: &str,
        controller: ControllerKind,
        params: &PlanarQuadrupedParams,
        ground_k: f64,
    ) -> Result<Self> {
        // the plan assumes rigid ground; the robot starts at its static sinkage
        let pose = StandingPose::nominal(params);
        let initial = pose.settled(params, ground_k).state(params);
        let model = params.build::<f64>()?;
        let c = centroidal(&model, &pose.state(params))?;
        let com0 = Vector3::new(c.com.x, c.com.y, 0.0);
        let gait = if name == "crawl" { "crawl" } else { "stand" };
        let gp = GaitParams::default();
        let plan = scripted_com_reference(gait, &gp, com0, &pose.feet)?;
        let mut s = Self {
            name: name.to_string(),
            duration: 3.0,
            settle: 1.0,
            initial,
            plan,
            ground: GroundProfile::Flat,
            disturbances: Vec::new(),
            controller,
        };
        match name {
            "stand" => {}
            "stand+force-step" => {
                s.duration = 4.0;
                s.disturbances.push(Disturbance { start: 1.5, end: 4.0, wrench: Vector3::new(40.0, -120.0, 0.0) });
            }
            "plank" => {
                s.duration = 5.0;
                s.ground = GroundProfile::Plank { x_start: 0.0, rise: 0.1, t0: 1.5, ramp: 2.0 };
            }
            "seesaw" => {
                s.duration = 6.0;
                s.ground = GroundProfile::Seesaw { pivot: 0.0, amplitude: 0.05, frequency: 0.5, t0: 1.5 };
            }
            "crawl" => {
                s.duration = s.plan.com.end_time() + 1.0;
            }
            other => return Err(Error::InvalidScenario(format!("unknown scenario '{other}'"))),
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !(self.settle >= 0.0) {
            return Err(Error::InvalidScenario("duration must be positive".into()));
        }
        let times: Vec<f64> = self.plan.schedule.iter().map(|e| e.time).collect();
        if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidScenario("stance schedule must start at 0 and strictly increase".into()));
        }
        let last = times.last().copied().unwrap_or(0.0);
        let swing_end = self.plan.swings.iter().map(|s| s.reference.touchdown_time()).fold(0.0, f64::max);
        let dist_end = self.disturbances.iter().map(|d| d.start).fold(0.0, f64::max);
        if last.max(swing_end).max(dist_end).max(self.plan.com.end_time()) > self.duration {
            return Err(Error::InvalidScenario("duration does not cover all events".into()));
        }
        if self.disturbances.iter().any(|d| !(d.end >= d.start)) {
            return Err(Error::InvalidScenario("disturbance ends before it starts".into()));
        }
        if self.plan.schedule.iter().any(|e| e.stance.iter().all(|s| !s)) {
            return Err(Error::InvalidScenario("every phase needs a stance foot".into()));
        }
        self.plan.com.validate()?;
        self.ground.validate()
    }

    pub fn stance_at(&self, t: f64) -> Vec<usize> {
        let flags = self.plan.stance_at(t);
        (0..4).filter(|&f| flags[f]).collect()
    }

    pub fn external_wrench(&self, t: f64) -> Vector3<f64> {
        self.disturbances.iter().filter(|d| t >= d.start && t < d.end).map(|d| d.wrench).sum()
    }
}
