//! Dense strictly convex QP with inequality rows, solved by the
//! Goldfarb-Idnani dual active-set method.
//!
//! ```text
//! minimize   1/2 x^T H x + g^T x
//! subject to A x >= b
//! ```
//!
//! The factorization follows the usual scheme: with `H = L L^T`, the solver
//! keeps `J = L^{-T} Q` and an upper triangular `R` such that
//! `J^T N = [R; 0]` for the matrix `N` of active constraint normals. Adding
//! or dropping a constraint updates both with Givens rotations.

use std::io::{self, Write};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Relative diagonal shift used when `H` is not numerically positive definite.
pub const REGULARIZATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T: Real> {
    pub h: DMatrix<T>,
    pub g: DVector<T>,
    pub a: DMatrix<T>,
    pub b: DVector<T>,
}

impl<T: Real> QpProblem<T> {
    /// Problem without constraints.
    pub fn unconstrained(h: DMatrix<T>, g: DVector<T>) -> Self {
        let n = g.len();
        Self { h, g, a: DMatrix::zeros(0, n), b: DVector::zeros(0) }
    }

    pub fn num_vars(&self) -> usize {
        self.g.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.g.len();
        if self.h.shape() != (n, n) {
            return Err(Error::DimensionMismatch { what: "QP Hessian", expected: n, found: self.h.nrows() });
        }
        if self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return Err(Error::DimensionMismatch {
                what: "QP constraint matrix",
                expected: self.b.len(),
                found: self.a.nrows(),
            });
        }
        let finite = |m: &[T]| m.iter().all(|v| v.is_finite());
        if !(finite(self.h.as_slice())
            && finite(self.g.as_slice())
            && finite(self.a.as_slice())
            && finite(self.b.as_slice()))
        {
            return Err(Error::InvalidQp("non-finite problem data".into()));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<T>) -> T {
        (x.dot(&(&self.h * x))) * lit(0.5) + self.g.dot(x)
    }

    /// Writes the dimensions, then `H`, `g`, `A`, `b` row-major in decimal.
    pub fn dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        let (n, m) = (self.num_vars(), self.num_rows());
        writeln!(out, "qp {n} {m}")?;
        let line = |v: &mut dyn Iterator<Item = T>| v.map(|x| to_f64(x).to_string()).collect::<Vec<_>>().join(" ");
        writeln!(out, "H")?;
        for i in 0..n {
            writeln!(out, "{}", line(&mut self.h.row(i).iter().copied()))?;
        }
        writeln!(out, "g")?;
        writeln!(out, "{}", line(&mut self.g.iter().copied()))?;
        writeln!(out, "A")?;
        for i in 0..m {
            writeln!(out, "{}", line(&mut self.a.row(i).iter().copied()))?;
        }
        writeln!(out, "b")?;
        writeln!(out, "{}", line(&mut self.b.iter().copied()))?;
        Ok(())
    }

    /// Reads the format written by [`QpProblem::dump`].
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidQp(format!("dump parse error: {msg}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty input".into()))?.split_whitespace().collect();
        if header.len() != 3 || header[0] != "qp" {
            return Err(bad("missing 'qp n m' header".into()));
        }
        let n: usize = header[1].parse().map_err(|e| bad(format!("{e}")))?;
        let m: usize = header[2].parse().map_err(|e| bad(format!("{e}")))?;
        let mut numbers = |tag: &str, rows: usize, cols: usize| -> Result<Vec<T>> {
            match lines.next() {
                Some(t) if t == tag => {}
                other => return Err(bad(format!("expected '{tag}', found {other:?}"))),
            }
            let mut out = Vec::with_capacity(rows * cols);
            for _ in 0..if cols == 0 { 0 } else { rows } {
                let l = lines.next().ok_or_else(|| bad(format!("truncated block {tag}")))?;
                for tok in l.split_whitespace() {
                    out.push(lit(tok.parse::<f64>().map_err(|e| bad(format!("{e}")))?));
                }
            }
            if out.len() != rows * cols {
                return Err(bad(format!("block {tag} has {} numbers, expected {}", out.len(), rows * cols)));
            }
            Ok(out)
        };
        let h = numbers("H", n, n)?;
        let g = numbers("g", 1, n)?;
        let a = numbers("A", m, n)?;
        let b = numbers("b", 1, m)?;
        let p = Self {
            h: DMatrix::from_row_slice(n, n, &h),
            g: DVector::from_vec(g),
            a: DMatrix::from_row_slice(m, n, &a),
            b: DVector::from_vec(b),
        };
        p.validate()?;
        Ok(p)
    }
}

/// KKT residuals of a candidate solution, each scaled by the magnitude of
/// the terms it is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport<T: Real> {
    /// `|H x + g - A^T u|_inf`, relative.
    pub stationarity: T,
    /// `min_i (a_i x - b_i)`, relative; negative means violated.
    pub primal_feasibility: T,
    pub min_multiplier: T,
    /// `max_i |u_i (a_i x - b_i)|`, relative.
    pub complementarity: T,
}

impl<T: Real> KktReport<T> {
    pub fn evaluate(p: &QpProblem<T>, x: &DVector<T>, u: &DVector<T>) -> Self {
        let one = T::one();
        let inf = |v: &DVector<T>| v.amax();
        let hx = &p.h * x;
        let atu = p.a.transpose() * u;
        let scale = one.max(inf(&p.g)).max(inf(&hx)).max(inf(&atu));
        let stationarity = inf(&(&hx + &p.g - &atu)) / scale;
        let xn = inf(x);
        let mut primal = T::max_value().unwrap_or_else(|| lit(f64::MAX));
        let mut comp = T::zero();
        for i in 0..p.num_rows() {
            let row = p.a.row(i);
            let slack = row.dot(&x.transpose()) - p.b[i];
            let s = one.max(p.b[i].abs()).max(row.amax() * xn);
            primal = primal.min(slack / s);
            comp = comp.max((u[i] * slack).abs() / (s * one.max(u[i].abs())));
        }
        if p.num_rows() == 0 {
            primal = T::zero();
        }
        Self {
            stationarity,
            primal_feasibility: primal,
            min_multiplier: u.iter().fold(T::zero(), |m, &v| m.min(v)),
            complementarity: comp,
        }
    }

    /// Thresholds are `1e-8` (stationarity, complementarity) and `1e-10`
    /// (feasibility, multiplier sign), floored at the scalar's precision.
    pub fn certified(&self) -> bool {
        let eps = to_f64(T::default_epsilon());
        let tight = 1e-10f64.max(1e3 * eps);
        let loose = 1e-8f64.max(1e4 * eps);
        to_f64(self.stationarity) < loose
            && to_f64(self.primal_feasibility) >= -tight
            && to_f64(self.min_multiplier) >= -tight
            && to_f64(self.complementarity) < loose
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T: Real> {
    pub x: DVector<T>,
    /// Active rows in the order they were added.
    pub active_set: Vec<usize>,
    /// One multiplier per row, zero for inactive rows.
    pub multipliers: DVector<T>,
    pub objective: T,
    pub iterations: usize,
    pub solve_time: Duration,
    /// Diagonal shift added to `H`, zero if none was needed.
    pub regularization: T,
    pub kkt: KktReport<T>,
}

/// Reusable solver; keeps its factorization workspace between solves.
#[derive(Debug, Clone)]
pub struct QpSolver<T: Real> {
    n: usize,
    j: DMatrix<T>,
    r: DMatrix<T>,
    x: DVector<T>,
    active: Vec<usize>,
    u: Vec<T>,
    d: DVector<T>,
    z: DVector<T>,
    rv: Vec<T>,
    iterations: usize,
}

impl<T: Real> Default for QpSolver<T> {
    fn default() -> Self {
        Self::new()
    }
}

enum Added {
    Yes,
    Dependent,
}

impl<T: Real> QpSolver<T> {
    pub fn new() -> Self {
        Self {
            n: 0,
            j: DMatrix::zeros(0, 0),
            r: DMatrix::zeros(0, 0),
            x: DVector::zeros(0),
            active: Vec::new(),
            u: Vec::new(),
            d: DVector::zeros(0),
            z: DVector::zeros(0),
            rv: Vec::new(),
            iterations: 0,
        }
    }

    /// The last primal iterate, also after a failed solve.
    pub fn last_iterate(&self) -> &DVector<T> {
        &self.x
    }

    pub fn solve(&mut self, p: &QpProblem<T>) -> Result<QpSolution<T>> {
        self.solve_warm(p, &[])
    }

    /// Starts from the rows in `guess` (typically the previous active set).
    /// Rows that are not active at the optimum are dropped along the way, so
    /// the answer does not depend on the guess.
    pub fn solve_warm(&mut self, p: &QpProblem<T>, guess: &[usize]) -> Result<QpSolution<T>> {
        let start = Instant::now();
        p.validate()?;
        if let Some(&bad) = guess.iter().find(|&&i| i >= p.num_rows()) {
            return Err(Error::InvalidQp(format!("warm-start row {bad} out of range")));
        }
        let (chol, reg) = factor(&p.h)?;
        self.iterations = 0;
        let max_iter = 10 * p.num_rows();

        let mut working: Vec<usize> = Vec::new();
        for &i in guess {
            if !working.contains(&i) {
                working.push(i);
            }
        }
        // Solve on the guessed working set as equalities; drop the row with
        // the most negative multiplier until the start is dual feasible.
        loop {
            self.init(p, &chol);
            for &i in &working {
                self.add_equality(p, i);
            }
            match (0..self.active.len())
                .filter(|&k| self.u[k] < T::zero())
                .min_by(|&a, &b| self.u[a].partial_cmp(&self.u[b]).unwrap_or(std::cmp::Ordering::Equal))
            {
                Some(k) => {
                    let row = self.active[k];
                    working.retain(|&w| w != row);
                }
                None => break,
            }
        }

        let hreg =
            if reg > T::zero() { &p.h + DMatrix::identity(p.num_vars(), p.num_vars()) * reg } else { p.h.clone() };
        while let Some((row, _)) = self.most_violated(p) {
            self.iterations += 1;
            if self.iterations > max_iter {
                return Err(Error::SolverFailure { iterations: self.iterations });
            }
            self.add_violated(p, row, max_iter)?;
        }

        let mut multipliers = DVector::zeros(p.num_rows());
        for (k, &i) in self.active.iter().enumerate() {
            multipliers[i] = self.u[k];
        }
        let hp = QpProblem { h: hreg, g: p.g.clone(), a: p.a.clone(), b: p.b.clone() };
        let kkt = KktReport::evaluate(&hp, &self.x, &multipliers);
        if !kkt.certified() {
            log::warn!("QP solution failed its KKT certificate: {kkt:?}");
        }
        Ok(QpSolution {
            x: self.x.clone(),
            active_set: self.active.clone(),
            multipliers,
            objective: p.objective(&self.x),
            iterations: self.iterations,
            solve_time: start.elapsed(),
            regularization: reg,
            kkt,
        })
    }

    fn init(&mut self, p: &QpProblem<T>, chol: &DMatrix<T>) {
        let n = p.num_vars();
        self.n = n;
        // J = L^{-T}
        let linv = chol
            .clone()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("Cholesky factor has a positive diagonal");
        self.j = linv.transpose();
        self.r = DMatrix::zeros(n, n);
        // x = -H^{-1} g = -J J^T g
        self.x = -(&self.j * (self.j.transpose() * &p.g));
        self.active.clear();
        self.u.clear();
        self.d = DVector::zeros(n);
        self.z = DVector::zeros(n);
    }

    fn slack(p: &QpProblem<T>, x: &DVector<T>, i: usize) -> T {
        p.a.row(i).dot(&x.transpose()) - p.b[i]
    }

    fn violation_tol(p: &QpProblem<T>, x: &DVector<T>, i: usize) -> T {
        let eps = T::default_epsilon() * lit(100.0);
        eps * (T::one() + p.b[i].abs() + p.a.row(i).amax() * x.amax())
    }

    /// Most violated inactive row by normalized slack.
    fn most_violated(&self, p: &QpProblem<T>) -> Option<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        for i in 0..p.num_rows() {
            if self.active.contains(&i) {
                continue;
            }
            let s = Self::slack(p, &self.x, i);
            if s >= -Self::violation_tol(p, &self.x, i) {
                continue;
            }
            let norm = p.a.row(i).norm();
            let scaled = if norm > T::zero() { s / norm } else { s };
            if best.is_none_or(|(_, b)| scaled < b) {
                best = Some((i, scaled));
            }
        }
        best
    }

    /// `d = J^T a_p`, `z = J_2 d_2`, `r = R^{-1} d_1`.
    fn directions(&mut self, p: &QpProblem<T>, row: usize) {
        let q = self.active.len();
        let n = self.n;
        self.d = self.j.transpose() * p.a.row(row).transpose();
        self.z.fill(T::zero());
        for k in q..n {
            let dk = self.d[k];
            for i in 0..n {
                self.z[i] += self.j[(i, k)] * dk;
            }
        }
        self.rv.clear();
        self.rv.resize(q, T::zero());
        for i in (0..q).rev() {
            let mut s = self.d[i];
            for k in i + 1..q {
                s -= self.r[(i, k)] * self.rv[k];
            }
            self.rv[i] = s / self.r[(i, i)];
        }
    }

    fn z_is_zero(&self) -> bool {
        let q = self.active.len();
        let d2 = self.d.rows(q, self.n - q).norm();
        d2 <= T::default_epsilon() * lit(1e3) * self.d.norm().max(tiny())
    }

    /// Adds row `i` as an equality with a full step of either sign.
    fn add_equality(&mut self, p: &QpProblem<T>, i: usize) {
        self.directions(p, i);
        if self.z_is_zero() {
            return;
        }
        let t = -Self::slack(p, &self.x, i) / self.z.dot(&p.a.row(i).transpose());
        self.x += &self.z * t;
        for k in 0..self.active.len() {
            self.u[k] -= t * self.rv[k];
        }
        // a dependent row is already implied by the working set
        let _ = self.push_active(i, t);
    }

    /// One outer iteration: moves until row `row` becomes active.
    fn add_violated(&mut self, p: &QpProblem<T>, row: usize, max_iter: usize) -> Result<()> {
        let mut up = T::zero();
        loop {
            self.directions(p, row);
            let q = self.active.len();
            let mut t1: Option<(T, usize)> = None;
            for k in 0..q {
                if self.rv[k] > T::zero() {
                    let ratio = self.u[k] / self.rv[k];
                    if t1.is_none_or(|(t, _)| ratio < t) {
                        t1 = Some((ratio, k));
                    }
                }
            }
            let t2 = if self.z_is_zero() {
                None
            } else {
                Some(-Self::slack(p, &self.x, row) / self.z.dot(&p.a.row(row).transpose()))
            };
            match (t1, t2) {
                (None, None) => return Err(Error::InfeasibleQp),
                (Some((t, l)), None) => {
                    // dual step only
                    for k in 0..q {
                        self.u[k] -= t * self.rv[k];
                    }
                    up += t;
                    self.drop_active(l);
                }
                (t1, Some(t2)) => {
                    let partial = t1.filter(|&(t, _)| t < t2);
                    let t = partial.map_or(t2, |(t, _)| t);
                    self.x += &self.z * t;
                    for k in 0..q {
                        self.u[k] -= t * self.rv[k];
                    }
                    up += t;
                    match partial {
                        None => {
                            return match self.push_active(row, up) {
                                Added::Yes => Ok(()),
                                Added::Dependent => Err(Error::InfeasibleQp),
                            };
                        }
                        Some((_, l)) => self.drop_active(l),
                    }
                }
            }
            self.iterations += 1;
            if self.iterations > max_iter {
                return Err(Error::SolverFailure { iterations: self.iterations });
            }
        }
    }

    /// Rotates `d` so that only its first `q + 1` entries are nonzero and
    /// appends it as a new column of `R`.
    fn push_active(&mut self, row: usize, u: T) -> Added {
        let q = self.active.len();
        let n = self.n;
        for jj in (q + 1..n).rev() {
            let (a, b) = (self.d[jj - 1], self.d[jj]);
            if b == T::zero() {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            self.d[jj - 1] = h;
            self.d[jj] = T::zero();
            rotate_columns(&mut self.j, jj - 1, jj, c, s);
        }
        if self.d[q].abs() <= T::default_epsilon() * lit(1e3) * self.d.norm().max(tiny()) {
            return Added::Dependent;
        }
        for i in 0..=q {
            self.r[(i, q)] = self.d[i];
        }
        self.active.push(row);
        self.u.push(u);
        Added::Yes
    }

    fn drop_active(&mut self, l: usize) {
        let q = self.active.len();
        self.active.remove(l);
        self.u.remove(l);
        for col in l..q - 1 {
            for i in 0..q {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = T::zero();
        }
        // restore triangularity: zero the subdiagonal left by the shift
        for jj in l..q - 1 {
            let (a, b) = (self.r[(jj, jj)], self.r[(jj + 1, jj)]);
            if b == T::zero() {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for col in jj..q - 1 {
                let (x, y) = (self.r[(jj, col)], self.r[(jj + 1, col)]);
                self.r[(jj, col)] = c * x + s * y;
                self.r[(jj + 1, col)] = c * y - s * x;
            }
            self.r[(jj + 1, jj)] = T::zero();
            rotate_columns(&mut self.j, jj, jj + 1, c, s);
        }
    }
}

/// Floor for norms used as relative scales.
fn tiny<T: Real>() -> T {
    T::default_epsilon() * T::default_epsilon()
}

fn rotate_columns<T: Real>(m: &mut DMatrix<T>, a: usize, b: usize, c: T, s: T) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, a)], m[(i, b)]);
        m[(i, a)] = c * x + s * y;
        m[(i, b)] = c * y - s * x;
    }
}

/// Cholesky factor of `H`, shifting the diagonal if `H` is not numerically
/// positive definite.
fn factor<T: Real>(h: &DMatrix<T>) -> Result<(DMatrix<T>, T)> {
    let n = h.nrows();
    if n == 0 {
        return Ok((DMatrix::zeros(0, 0), T::zero()));
    }
    let scale = (0..n).fold(T::one(), |m, i| m.max(h[(i, i)].abs()));
    let ok = |c: &DMatrix<T>| (0..n).all(|i| c[(i, i)] * c[(i, i)] > scale * T::default_epsilon() * lit(10.0));
    if let Some(c) = h.clone().cholesky() {
        let l = c.unpack();
        if ok(&l) {
            return Ok((l, T::zero()));
        }
    }
    let reg = scale * lit(REGULARIZATION);
    let shifted = h + DMatrix::identity(n, n) * reg;
    match shifted.cholesky() {
        Some(c) => {
            log::debug!("QP Hessian regularized by {}", to_f64(reg));
            Ok((c.unpack(), reg))
        }
        None => Err(Error::InvalidQp("Hessian is not positive semidefinite".into())),
    }
}

/// Convenience wrapper around a fresh [`QpSolver`].
pub fn qp_solve<T: Real>(p: &QpProblem<T>) -> Result<QpSolution<T>> {
    QpSolver::new().solve(p)
}

impl<T: Real> std::fmt::Display for KktReport<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "stationarity {:.2e}, feasibility {:.2e}, min multiplier {:.2e}, complementarity {:.2e}",
            to_f64(self.stationarity),
            to_f64(self.primal_feasibility),
            to_f64(self.min_multiplier),
            to_f64(self.complementarity)
        )
    }
}
