//! Centre-of-mass control: PD correction of the reference, the net wrench it
//! requires, and distribution of that wrench over the stance feet by a QP
//! with unilateral and friction-pyramid constraints.

pub mod qp;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::decomposition::{ComSubsystem, COM_DIM};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

pub use qp::{qp_solve, KktReport, QpProblem, QpSolution, QpSolver};

/// Weight of the `|lambda|^2` tie-break term.
pub const TIE_BREAK: f64 = 1e-6;

/// Proximal passes used to remove the tie-break bias from the wrench match.
const MAX_REFINEMENTS: usize = 4;

/// Diagonal PD gains over `(x, z, pitch)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdGains<T: Real> {
    /// 1/s^2
    pub kp: Vector3<T>,
    /// 1/s
    pub kd: Vector3<T>,
}

impl<T: Real> Default for PdGains<T> {
    fn default() -> Self {
        Self::uniform(lit(100.0), lit(20.0))
    }
}

impl<T: Real> PdGains<T> {
    pub fn new(kp: Vector3<T>, kd: Vector3<T>) -> Result<Self> {
        let g = Self { kp, kd };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform(kp: T, kd: T) -> Self {
        Self { kp: Vector3::repeat(kp), kd: Vector3::repeat(kd) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kp.iter().chain(self.kd.iter()).all(|&k| k >= T::zero()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("PD gains must be non-negative".into()))
        }
    }
}

/// Centre-of-mass coordinates `(x, z, pitch)` and their rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComState<T: Real> {
    pub x: Vector3<T>,
    pub xd: Vector3<T>,
}

impl<T: Real> ComState<T> {
    /// Pitch is taken from the base; its rate is the centroidal average.
    pub fn from_subsystem(com: &ComSubsystem<T>, pitch: T) -> Self {
        Self {
            x: Vector3::new(com.com.x, com.com.y, pitch),
            xd: Vector3::new(com.com_velocity.x, com.com_velocity.y, com.angular_velocity),
        }
    }
}

/// What the planner supplies besides the CoM trajectory: the desired CoM
/// acceleration or the desired contact forces.
#[derive(Debug, Clone, PartialEq)]
pub enum ComReference<T: Real> {
    Acceleration { x: Vector3<T>, xd: Vector3<T>, xdd: Vector3<T> },
    Forces { x: Vector3<T>, xd: Vector3<T>, lambda: DVector<T> },
}

impl<T: Real> ComReference<T> {
    /// Hold `x` with zero velocity and acceleration.
    pub fn hold(x: Vector3<T>) -> Self {
        Self::Acceleration { x, xd: Vector3::zeros(), xdd: Vector3::zeros() }
    }

    pub fn x(&self) -> &Vector3<T> {
        match self {
            Self::Acceleration { x, .. } | Self::Forces { x, .. } => x,
        }
    }

    pub fn xd(&self) -> &Vector3<T> {
        match self {
            Self::Acceleration { xd, .. } | Self::Forces { xd, .. } => xd,
        }
    }

    /// Feed-forward acceleration; zero when forces are supplied instead.
    pub fn xdd(&self) -> Vector3<T> {
        match self {
            Self::Acceleration { xdd, .. } => *xdd,
            Self::Forces { .. } => Vector3::zeros(),
        }
    }
}

/// `xdd_ref - Kd (xd - xd_ref) - Kp (x - x_ref)`: the correction opposes the
/// tracking error. For a force reference only the correction is returned.
pub fn pd_correct<T: Real>(reference: &ComReference<T>, state: &ComState<T>, gains: &PdGains<T>) -> Vector3<T> {
    let e = state.x - reference.x();
    let ed = state.xd - reference.xd();
    reference.xdd() - gains.kd.component_mul(&ed) - gains.kp.component_mul(&e)
}

/// `M_com xdd + C_com + G_com`.
pub fn desired_net_wrench<T: Real>(com: &ComSubsystem<T>, xdd: &Vector3<T>) -> DVector<T> {
    let a = DVector::from_column_slice(xdd.as_slice());
    &com.m_com * a + &com.c_com + &com.g_com
}

/// Surface normal of one contact, in the plane or in space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceNormal<T: Real> {
    Planar(Vector2<T>),
    Spatial(Vector3<T>),
}

/// Friction pyramids of all active contacts, expressed in each contact's
/// local frame. In the plane the cone has two edges and is represented
/// exactly; in space it is replaced by an inscribed pyramid with `sides`
/// facets, the first facet normal along the local tangent `t1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionPyramid<T: Real> {
    pub mu: T,
    pub sides: usize,
    pub normals: Vec<SurfaceNormal<T>>,
    /// Optional upper bounds on the normal force, per contact.
    pub normal_limits: Vec<Option<T>>,
}

impl<T: Real> FrictionPyramid<T> {
    /// Planar contacts on flat ground.
    pub fn planar(mu: T, contacts: usize) -> Self {
        Self::planar_with_normals(mu, vec![Vector2::new(T::zero(), T::one()); contacts])
    }

    pub fn planar_with_normals(mu: T, normals: Vec<Vector2<T>>) -> Self {
        Self {
            mu,
            sides: 2,
            normal_limits: vec![None; normals.len()],
            normals: normals.into_iter().map(|n| SurfaceNormal::Planar(n.normalize())).collect(),
        }
    }

    /// Twelve-sided pyramids around the given normals.
    pub fn spatial(mu: T, normals: Vec<Vector3<T>>) -> Self {
        Self {
            mu,
            sides: 12,
            normal_limits: vec![None; normals.len()],
            normals: normals.into_iter().map(|n| SurfaceNormal::Spatial(n.normalize())).collect(),
        }
    }

    /// Caps the normal force of contact `c`, e.g. to unload a foot before
    /// lift-off.
    pub fn with_normal_limit(mut self, c: usize, limit: T) -> Self {
        self.normal_limits.resize(self.normals.len(), None);
        self.normal_limits[c] = Some(limit);
        self
    }

    pub fn contacts(&self) -> usize {
        self.normals.len()
    }

    pub fn is_planar(&self) -> bool {
        matches!(self.normals.first(), Some(SurfaceNormal::Planar(_)) | None)
    }

    /// Force components per contact.
    pub fn force_dim(&self) -> usize {
        if self.is_planar() {
            2
        } else {
            3
        }
    }

    /// Friction rows plus one unilateral row.
    pub fn rows_per_contact(&self) -> usize {
        if self.is_planar() {
            3
        } else {
            self.sides + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > T::zero()) {
            return Err(Error::InvalidParameter("friction coefficient must be positive".into()));
        }
        let planar = self.is_planar();
        let tol: T = lit(1e-9);
        for n in &self.normals {
            let (unit, kind) = match n {
                SurfaceNormal::Planar(v) => ((v.norm() - T::one()).abs() < tol, true),
                SurfaceNormal::Spatial(v) => ((v.norm() - T::one()).abs() < tol, false),
            };
            if kind != planar {
                return Err(Error::InvalidParameter("mixed planar and spatial contacts".into()));
            }
            if !unit {
                return Err(Error::InvalidParameter("surface normal must be a unit vector".into()));
            }
        }
        if !planar && self.sides < 3 {
            return Err(Error::InvalidParameter("a spatial pyramid needs at least 3 sides".into()));
        }
        if self.normal_limits.len() > self.normals.len()
            || self.normal_limits.iter().flatten().any(|l| !(*l >= T::zero()))
        {
            return Err(Error::InvalidParameter("normal force limits must be non-negative, one per contact".into()));
        }
        Ok(())
    }

    /// Rows `A` of `A lambda >= 0` for the stacked contact forces.
    pub fn constraint_matrix(&self) -> DMatrix<T> {
        let (nf, rows) = (self.force_dim(), self.rows_per_contact());
        let mut a = DMatrix::zeros(rows * self.contacts(), nf * self.contacts());
        for (c, n) in self.normals.iter().enumerate() {
            let (r0, c0) = (rows * c, nf * c);
            match n {
                SurfaceNormal::Planar(n) => {
                    let t = planar_tangent(n);
                    let lo = n * self.mu - t;
                    let hi = n * self.mu + t;
                    a.view_mut((r0, c0), (1, 2)).copy_from(&lo.transpose());
                    a.view_mut((r0 + 1, c0), (1, 2)).copy_from(&hi.transpose());
                    a.view_mut((r0 + 2, c0), (1, 2)).copy_from(&n.transpose());
                }
                SurfaceNormal::Spatial(n) => {
                    let (t1, t2) = tangent_basis(n);
                    let apothem = self.mu * (T::pi() / lit((self.sides) as f64)).cos();
                    for j in 0..self.sides {
                        let psi = T::two_pi() * lit::<T>(j as f64) / lit((self.sides) as f64);
                        let row = n * apothem - t1 * psi.cos() - t2 * psi.sin();
                        a.view_mut((r0 + j, c0), (1, 3)).copy_from(&row.transpose());
                    }
                    a.view_mut((r0 + self.sides, c0), (1, 3)).copy_from(&n.transpose());
                }
            }
        }
        a
    }

    /// All QP rows `A lambda >= b`: the pyramids followed by one row per
    /// normal force limit.
    pub fn constraints(&self) -> (DMatrix<T>, DVector<T>) {
        let cone = self.constraint_matrix();
        let nf = self.force_dim();
        let limited: Vec<(usize, T)> =
            self.normal_limits.iter().enumerate().filter_map(|(c, l)| l.map(|l| (c, l))).collect();
        let mut a = DMatrix::zeros(cone.nrows() + limited.len(), cone.ncols());
        a.rows_mut(0, cone.nrows()).copy_from(&cone);
        let mut b = DVector::zeros(a.nrows());
        for (i, &(c, limit)) in limited.iter().enumerate() {
            let r = cone.nrows() + i;
            let n: Vec<T> = match &self.normals[c] {
                SurfaceNormal::Planar(n) => vec![n.x, n.y],
                SurfaceNormal::Spatial(n) => vec![n.x, n.y, n.z],
            };
            for (k, v) in n.into_iter().enumerate() {
                a[(r, nf * c + k)] = -v;
            }
            b[r] = -limit;
        }
        (a, b)
    }

    /// Edge directions of the pyramid of contact `c` (unit normal component).
    pub fn generators(&self, c: usize) -> Vec<DVector<T>> {
        match &self.normals[c] {
            SurfaceNormal::Planar(n) => {
                let t = planar_tangent(n);
                [T::one(), -T::one()]
                    .iter()
                    .map(|&s| DVector::from_column_slice((n + t * (self.mu * s)).as_slice()))
                    .collect()
            }
            SurfaceNormal::Spatial(n) => {
                let (t1, t2) = tangent_basis(n);
                let sides = lit::<T>(self.sides as f64);
                (0..self.sides)
                    .map(|j| {
                        let th = T::two_pi() * (lit::<T>(j as f64) + lit(0.5)) / sides;
                        let v = n + (t1 * th.cos() + t2 * th.sin()) * self.mu;
                        DVector::from_column_slice(v.as_slice())
                    })
                    .collect()
            }
        }
    }

    /// Normal and tangential magnitude of the force on contact `c`.
    pub fn decompose(&self, c: usize, force: &[T]) -> (T, T) {
        match &self.normals[c] {
            SurfaceNormal::Planar(n) => {
                let f = Vector2::new(force[0], force[1]);
                (f.dot(n), f.dot(&planar_tangent(n)).abs())
            }
            SurfaceNormal::Spatial(n) => {
                let f = Vector3::new(force[0], force[1], force[2]);
                let fn_ = f.dot(n);
                (fn_, (f - n * fn_).norm())
            }
        }
    }

    /// Exact friction cone test `|lambda_t| <= mu lambda_n` for every contact.
    pub fn in_cone(&self, lambda: &DVector<T>, tol: T) -> bool {
        let nf = self.force_dim();
        (0..self.contacts()).all(|c| {
            let (fn_, ft) = self.decompose(c, &lambda.as_slice()[nf * c..nf * (c + 1)]);
            fn_ >= -tol && ft <= self.mu * fn_ + tol
        })
    }
}

/// In-plane tangent, `(1, 0)` for the upward normal `(0, 1)`.
fn planar_tangent<T: Real>(n: &Vector2<T>) -> Vector2<T> {
    Vector2::new(n.y, -n.x)
}

/// Local frame: `t1` is world x projected onto the contact plane (world y
/// if x is nearly normal), `t2 = n x t1`.
pub fn tangent_basis<T: Real>(n: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
    let ex = Vector3::x();
    let seed = if n.dot(&ex).abs() < lit(0.9) { ex } else { Vector3::y() };
    let t1 = (seed - n * n.dot(&seed)).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Wrench map of spatial point contacts about `com`: rows are contact force
/// components, columns `(force, moment)`, so the net wrench is `map^T lambda`.
pub fn spatial_wrench_map<T: Real>(points: &[Vector3<T>], com: &Vector3<T>) -> DMatrix<T> {
    let mut m = DMatrix::zeros(3 * points.len(), 6);
    for (i, p) in points.iter().enumerate() {
        let r = p - com;
        for k in 0..3 {
            m[(3 * i + k, k)] = T::one();
        }
        // moment = r x f, transposed into rows of f
        let skew = r.cross_matrix();
        m.view_mut((3 * i, 3), (3, 3)).copy_from(&skew.transpose());
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceDistribution<T: Real> {
    pub lambda: DVector<T>,
    /// `|Jc_com^T lambda - F_r|`
    pub wrench_residual: T,
    /// The last QP solved.
    pub qp: QpSolution<T>,
    pub solves: usize,
}

/// Distributes net wrenches over contacts; reuses its QP workspace and the
/// previous active set between calls.
#[derive(Debug, Clone)]
pub struct ForceDistributor<T: Real> {
    solver: QpSolver<T>,
    pub tie_break: T,
    pub warm_start: bool,
    last: Option<(usize, usize, Vec<usize>)>,
}

impl<T: Real> Default for ForceDistributor<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ForceDistributor<T> {
    pub fn new() -> Self {
        Self { solver: QpSolver::new(), tie_break: lit(TIE_BREAK), warm_start: true, last: None }
    }

    /// QP for `min |Jc_com^T lambda - F_r|^2 + eps |lambda - center|^2`
    /// subject to the pyramid rows.
    pub fn problem(
        &self,
        f_r: &DVector<T>,
        jc_com: &DMatrix<T>,
        pyramid: &FrictionPyramid<T>,
        center: &DVector<T>,
    ) -> QpProblem<T> {
        let n = jc_com.nrows();
        let two: T = lit(2.0);
        let h = (jc_com * jc_com.transpose() + DMatrix::identity(n, n) * self.tie_break) * two;
        let g = -(jc_com * f_r + center * self.tie_break) * two;
        let (a, b) = pyramid.constraints();
        QpProblem { h, g, a, b }
    }

    /// The tie-break term makes the solution unique. Its bias on the wrench
    /// match is removed by re-centring the term on the previous solution a
    /// few times, which converges to the least-norm exact distribution when
    /// one exists.
    pub fn distribute(
        &mut self,
        f_r: &DVector<T>,
        jc_com: &DMatrix<T>,
        pyramid: &FrictionPyramid<T>,
    ) -> Result<ForceDistribution<T>> {
        if pyramid.contacts() == 0 || jc_com.nrows() == 0 {
            return Err(Error::NoContact);
        }
        pyramid.validate()?;
        let nvar = pyramid.force_dim() * pyramid.contacts();
        if jc_com.nrows() != nvar {
            return Err(Error::DimensionMismatch {
                what: "contact wrench map rows",
                expected: nvar,
                found: jc_com.nrows(),
            });
        }
        if f_r.len() != jc_com.ncols() {
            return Err(Error::DimensionMismatch {
                what: "desired wrench",
                expected: jc_com.ncols(),
                found: f_r.len(),
            });
        }
        let limits = pyramid.normal_limits.iter().flatten().count();
        let shape = (nvar, pyramid.rows_per_contact() * pyramid.contacts() + limits);
        let mut guess = match &self.last {
            Some((n, m, set)) if self.warm_start && (*n, *m) == shape => set.clone(),
            _ => Vec::new(),
        };
        let mut center = DVector::zeros(nvar);
        let mut solves = 0;
        let mut sol;
        loop {
            let p = self.problem(f_r, jc_com, pyramid, &center);
            sol = self.solver.solve_warm(&p, &guess).map_err(|e| Error::InfeasibleDistribution {
                reason: e.to_string(),
                last_iterate: self.solver.last_iterate().iter().map(|&v| to_f64(v)).collect(),
            })?;
            solves += 1;
            let step = (&sol.x - &center).norm();
            center = sol.x.clone();
            guess = sol.active_set.clone();
            if solves >= MAX_REFINEMENTS || step <= lit::<T>(1e-12) * (T::one() + sol.x.norm()) {
                break;
            }
        }
        self.last = Some((shape.0, shape.1, sol.active_set.clone()));
        let residual = (jc_com.transpose() * &sol.x - f_r).norm();
        Ok(ForceDistribution { lambda: sol.x.clone(), wrench_residual: residual, qp: sol, solves })
    }

    pub fn reset(&mut self) {
        self.last = None;
    }
}

/// One-shot [`ForceDistributor::distribute`].
pub fn distribute_forces<T: Real>(
    f_r: &DVector<T>,
    jc_com: &DMatrix<T>,
    pyramid: &FrictionPyramid<T>,
) -> Result<ForceDistribution<T>> {
    ForceDistributor::new().distribute(f_r, jc_com, pyramid)
}

/// Adds the PD correction to the net wrench of planner forces and
/// redistributes it.
pub fn correct_planner_forces<T: Real>(
    reference: &ComReference<T>,
    com: &ComSubsystem<T>,
    state: &ComState<T>,
    gains: &PdGains<T>,
    pyramid: &FrictionPyramid<T>,
    distributor: &mut ForceDistributor<T>,
) -> Result<ForceDistribution<T>> {
    let ComReference::Forces { lambda, .. } = reference else {
        return Err(Error::InvalidParameter("planner force correction needs a force reference".into()));
    };
    if lambda.len() != com.jc_com.nrows() {
        return Err(Error::DimensionMismatch {
            what: "planner contact forces",
            expected: com.jc_com.nrows(),
            found: lambda.len(),
        });
    }
    let corr = pd_correct(reference, state, gains);
    let f_r = com.wrench(lambda) + &com.m_com * DVector::from_column_slice(corr.as_slice());
    distributor.distribute(&f_r, &com.jc_com, pyramid)
}

/// Full CoM controller for either kind of reference.
pub fn com_control<T: Real>(
    reference: &ComReference<T>,
    com: &ComSubsystem<T>,
    state: &ComState<T>,
    gains: &PdGains<T>,
    pyramid: &FrictionPyramid<T>,
    distributor: &mut ForceDistributor<T>,
) -> Result<ForceDistribution<T>> {
    debug_assert_eq!(com.m_com.nrows(), COM_DIM);
    match reference {
        ComReference::Acceleration { .. } => {
            let xdd = pd_correct(reference, state, gains);
            distributor.distribute(&desired_net_wrench(com, &xdd), &com.jc_com, pyramid)
        }
        ComReference::Forces { .. } => correct_planner_forces(reference, com, state, gains, pyramid, distributor),
    }
}
