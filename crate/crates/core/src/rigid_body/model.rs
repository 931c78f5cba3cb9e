use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Joint connecting a link to its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointKind {
    /// Planar floating base: `(x, z, pitch)` in world coordinates.
    Floating,
    /// Revolute joint about the axis normal to the sagittal plane.
    Revolute,
}

impl JointKind {
    pub fn dof(self) -> usize {
        match self {
            JointKind::Floating => 3,
            JointKind::Revolute => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Link<T: Real> {
    pub name: String,
    pub mass: T,
    /// Centre of mass in the link frame.
    pub com: Vector2<T>,
    /// Rotational inertia about the centre of mass.
    pub inertia: T,
}

#[derive(Debug, Clone)]
pub struct Joint<T: Real> {
    pub name: String,
    pub parent: Option<usize>,
    pub kind: JointKind,
    /// Joint location in the parent link frame.
    pub origin: Vector2<T>,
    pub lower: T,
    pub upper: T,
}

/// Point foot rigidly attached to a link.
#[derive(Debug, Clone)]
pub struct Foot<T: Real> {
    pub name: String,
    pub link: usize,
    pub offset: Vector2<T>,
}

/// Kinematic tree of a planar legged robot. Link `i` is attached to its
/// parent by joint `i`; link 0 is the floating base.
#[derive(Debug, Clone)]
pub struct RobotModel<T: Real> {
    links: Vec<Link<T>>,
    joints: Vec<Joint<T>>,
    feet: Vec<Foot<T>>,
    gravity: Vector2<T>,
    offsets: Vec<usize>,
    dof: usize,
}

impl<T: Real> RobotModel<T> {
    pub fn new(links: Vec<Link<T>>, joints: Vec<Joint<T>>, feet: Vec<Foot<T>>, gravity: Vector2<T>) -> Result<Self> {
        if links.is_empty() || links.len() != joints.len() {
            return Err(Error::InvalidModel(format!("{} links but {} joints", links.len(), joints.len())));
        }
        if joints[0].kind != JointKind::Floating || joints[0].parent.is_some() {
            return Err(Error::InvalidModel("link 0 must be the floating base root".into()));
        }
        for (i, (link, joint)) in links.iter().zip(&joints).enumerate() {
            if !(link.mass > T::zero()) {
                return Err(Error::InvalidModel(format!("link {} has non-positive mass", link.name)));
            }
            if !(link.inertia > T::zero()) {
                return Err(Error::InvalidModel(format!("link {} has non-positive rotational inertia", link.name)));
            }
            if i > 0 {
                match joint.parent {
                    // parents precede children, which rules out cycles
                    Some(p) if p < i => {}
                    _ => {
                        return Err(Error::InvalidModel(format!(
                            "joint {} must have a parent with a smaller index",
                            joint.name
                        )))
                    }
                }
                if joint.kind == JointKind::Floating {
                    return Err(Error::InvalidModel("only the root may float".into()));
                }
            }
            if joint.lower > joint.upper {
                return Err(Error::InvalidModel(format!("joint {} has inverted limits", joint.name)));
            }
        }
        for foot in &feet {
            if foot.link >= links.len() {
                return Err(Error::InvalidModel(format!("foot {} on unknown link", foot.name)));
            }
        }
        let mut offsets = Vec::with_capacity(joints.len());
        let mut dof = 0;
        for j in &joints {
            offsets.push(dof);
            dof += j.kind.dof();
        }
        Ok(Self { links, joints, feet, gravity, offsets, dof })
    }

    pub fn links(&self) -> &[Link<T>] {
        &self.links
    }

    pub fn joints(&self) -> &[Joint<T>] {
        &self.joints
    }

    pub fn feet(&self) -> &[Foot<T>] {
        &self.feet
    }

    pub fn gravity(&self) -> Vector2<T> {
        self.gravity
    }

    /// First velocity index of joint `i`.
    pub fn offset(&self, joint: usize) -> usize {
        self.offsets[joint]
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn base_dof(&self) -> usize {
        self.joints[0].kind.dof()
    }

    pub fn actuated(&self) -> usize {
        self.dof - self.base_dof()
    }

    pub fn total_mass(&self) -> T {
        self.links.iter().fold(T::zero(), |acc, l| acc + l.mass)
    }

    /// Links from `link` up to the root, `link` first.
    pub fn chain(&self, link: usize) -> Vec<usize> {
        let mut out = vec![link];
        let mut cur = link;
        while let Some(p) = self.joints[cur].parent {
            out.push(p);
            cur = p;
        }
        out
    }

    pub fn check_state(&self, state: &GeneralizedState<T>) -> Result<()> {
        if state.q.len() != self.dof {
            return Err(Error::DimensionMismatch {
                what: "generalized coordinates",
                expected: self.dof,
                found: state.q.len(),
            });
        }
        if state.qd.len() != self.dof {
            return Err(Error::DimensionMismatch {
                what: "generalized velocities",
                expected: self.dof,
                found: state.qd.len(),
            });
        }
        Ok(())
    }

    /// Converts the model to another scalar type.
    pub fn cast<U: Real>(&self) -> RobotModel<U> {
        let c = |x: T| lit::<U>(crate::scalar::to_f64(x));
        let v = |x: Vector2<T>| Vector2::new(c(x.x), c(x.y));
        RobotModel {
            links: self
                .links
                .iter()
                .map(|l| Link { name: l.name.clone(), mass: c(l.mass), com: v(l.com), inertia: c(l.inertia) })
                .collect(),
            joints: self
                .joints
                .iter()
                .map(|j| Joint {
                    name: j.name.clone(),
                    parent: j.parent,
                    kind: j.kind,
                    origin: v(j.origin),
                    lower: c(j.lower),
                    upper: c(j.upper),
                })
                .collect(),
            feet: self.feet.iter().map(|f| Foot { name: f.name.clone(), link: f.link, offset: v(f.offset) }).collect(),
            gravity: v(self.gravity),
            offsets: self.offsets.clone(),
            dof: self.dof,
        }
    }
}

/// Generalized coordinates and velocities. For the planar base the
/// coordinates are `(x, z, pitch)` followed by the joint angles.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState<T: Real> {
    pub q: DVector<T>,
    pub qd: DVector<T>,
}

impl<T: Real> GeneralizedState<T> {
    pub fn new(q: DVector<T>, qd: DVector<T>) -> Self {
        Self { q, qd }
    }

    pub fn zeros(dof: usize) -> Self {
        Self { q: DVector::zeros(dof), qd: DVector::zeros(dof) }
    }

    /// Wraps the base pitch into `(-pi, pi]`.
    pub fn normalize(&mut self) {
        if self.q.len() >= 3 {
            self.q[2] = wrap_angle(self.q[2]);
        }
    }
}

pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut r = a % two_pi;
    if r > T::pi() {
        r -= two_pi;
    } else if r <= -T::pi() {
        r += two_pi;
    }
    r
}

/// Leg identifiers of the planar quadruped, in foot-id order.
pub const LEG_NAMES: [&str; 4] = ["LF", "RF", "LH", "RH"];

/// Parameters of the default planar quadruped: a base with four two-link
/// legs (hip and knee), point feet, 11 degrees of freedom in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanarQuadrupedParams {
    pub base_mass: f64,
    pub base_inertia: f64,
    pub hip_x_front: f64,
    pub hip_x_hind: f64,
    pub thigh_length: f64,
    pub shank_length: f64,
    pub thigh_mass: f64,
    pub shank_mass: f64,
    /// Fraction of the link length at which the link centre of mass sits.
    pub com_fraction: f64,
    pub gravity: f64,
    pub hip_limit: f64,
    pub knee_limit: f64,
}

impl Default for PlanarQuadrupedParams {
    fn default() -> Self {
        Self {
            base_mass: 60.0,
            base_inertia: 4.25,
            hip_x_front: 0.4,
            hip_x_hind: -0.4,
            thigh_length: 0.35,
            shank_length: 0.35,
            thigh_mass: 3.5,
            shank_mass: 1.5,
            com_fraction: 0.5,
            gravity: 9.81,
            hip_limit: 2.0,
            knee_limit: 2.8,
        }
    }
}

impl PlanarQuadrupedParams {
    pub fn total_mass(&self) -> f64 {
        self.base_mass + 4.0 * (self.thigh_mass + self.shank_mass)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("base_mass", self.base_mass),
            ("base_inertia", self.base_inertia),
            ("thigh_length", self.thigh_length),
            ("shank_length", self.shank_length),
            ("thigh_mass", self.thigh_mass),
            ("shank_mass", self.shank_mass),
            ("gravity", self.gravity),
            ("hip_limit", self.hip_limit),
            ("knee_limit", self.knee_limit),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.com_fraction) {
            return Err(Error::InvalidModel("com_fraction must lie in [0, 1]".into()));
        }
        if self.hip_x_front <= self.hip_x_hind {
            return Err(Error::InvalidModel("front hips must be ahead of hind hips".into()));
        }
        Ok(())
    }

    /// Knee bending direction per leg: front knees point backward, hind
    /// knees forward.
    pub fn knee_sign(&self, leg: usize) -> f64 {
        if leg < 2 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn hip_x(&self, leg: usize) -> f64 {
        if leg < 2 {
            self.hip_x_front
        } else {
            self.hip_x_hind
        }
    }

    pub fn build<T: Real>(&self) -> Result<RobotModel<T>> {
        self.validate()?;
        let l1 = self.thigh_length;
        let l2 = self.shank_length;
        let slender = |m: f64, l: f64| m * l * l / 12.0;
        let mut links = vec![Link {
            name: "base".into(),
            mass: lit(self.base_mass),
            com: Vector2::zeros(),
            inertia: lit(self.base_inertia),
        }];
        let mut joints = vec![Joint {
            name: "base".into(),
            parent: None,
            kind: JointKind::Floating,
            origin: Vector2::zeros(),
            lower: lit(-1e9),
            upper: lit(1e9),
        }];
        let mut feet = Vec::new();
        for (leg, name) in LEG_NAMES.iter().enumerate() {
            let thigh = links.len();
            links.push(Link {
                name: format!("{name}_thigh"),
                mass: lit(self.thigh_mass),
                com: Vector2::new(T::zero(), lit(-l1 * self.com_fraction)),
                inertia: lit(slender(self.thigh_mass, l1)),
            });
            joints.push(Joint {
                name: format!("{name}_hip"),
                parent: Some(0),
                kind: JointKind::Revolute,
                origin: Vector2::new(lit(self.hip_x(leg)), T::zero()),
                lower: lit(-self.hip_limit),
                upper: lit(self.hip_limit),
            });
            let shank = links.len();
            links.push(Link {
                name: format!("{name}_shank"),
                mass: lit(self.shank_mass),
                com: Vector2::new(T::zero(), lit(-l2 * self.com_fraction)),
                inertia: lit(slender(self.shank_mass, l2)),
            });
            joints.push(Joint {
                name: format!("{name}_knee"),
                parent: Some(thigh),
                kind: JointKind::Revolute,
                origin: Vector2::new(T::zero(), lit(-l1)),
                lower: lit(-self.knee_limit),
                upper: lit(self.knee_limit),
            });
            feet.push(Foot { name: (*name).to_string(), link: shank, offset: Vector2::new(T::zero(), lit(-l2)) });
        }
        RobotModel::new(links, joints, feet, Vector2::new(T::zero(), lit(-self.gravity)))
    }

    /// Analytic inverse kinematics of one leg: joint angles placing the foot
    /// at `foot - hip`, both expressed in the base frame. Targets beyond
    /// reach are clamped to the workspace boundary.
    pub fn leg_ik(&self, leg: usize, rel: Vector2<f64>) -> (f64, f64) {
        let l1 = self.thigh_length;
        let l2 = self.shank_length;
        let r = rel.norm().clamp((l1 - l2).abs() + 1e-9, l1 + l2 - 1e-9);
        let cos_knee = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
        let knee = self.knee_sign(leg) * cos_knee.acos();
        let phi = rel.x.atan2(-rel.y);
        let hip = phi - (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
        (hip, knee)
    }

    /// Generalized coordinates for a base pose and per-leg foot positions
    /// given in world coordinates.
    pub fn stance_configuration(&self, base: (f64, f64, f64), feet: &[Vector2<f64>; 4]) -> DVector<f64> {
        let (bx, bz, pitch) = base;
        let (s, c) = pitch.sin_cos();
        let mut q = DVector::zeros(11);
        q[0] = bx;
        q[1] = bz;
        q[2] = pitch;
        for leg in 0..4 {
            let hip_world = Vector2::new(bx + c * self.hip_x(leg), bz + s * self.hip_x(leg));
            let d = feet[leg] - hip_world;
            // rotate into the base frame
            let rel = Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y);
            let (h, k) = self.leg_ik(leg, rel);
            q[3 + 2 * leg] = h;
            q[4 + 2 * leg] = k;
        }
        q
    }
}
