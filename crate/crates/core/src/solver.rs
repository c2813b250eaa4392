//! Small dense log-barrier interior-point method.
//!
//! Maximizes a linear objective over
//! * box bounds `lo <= x <= hi` (infinite sides allowed, `lo == hi` fixes a variable),
//! * sparse linear inequalities `a.x <= b`,
//! * linear equalities `a.x = b`,
//! * smooth concave constraints `g(x) >= rhs`.
//!
//! A phase-I problem finds a strictly feasible point when the start is not
//! one; bounds are never relaxed, so the start must lie strictly inside
//! them.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// A concave function with a convex open domain. `value` returns `None`
/// outside the domain.
pub trait SmoothConcave: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> Option<f64>;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// `sum_k log2(a_k . x + c_k) + l . x + const`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSumAffine {
    terms: Vec<(DVector<f64>, f64)>,
    linear: DVector<f64>,
    constant: f64,
}

impl LogSumAffine {
    pub fn new(dim: usize) -> Self {
        Self { terms: Vec::new(), linear: DVector::zeros(dim), constant: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn add_log_term(&mut self, a: DVector<f64>, c: f64) {
        assert_eq!(a.len(), self.dim());
        self.terms.push((a, c));
    }

    pub fn add_linear(&mut self, index: usize, coef: f64) {
        self.linear[index] += coef;
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }
}

impl SmoothConcave for LogSumAffine {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        let mut v = self.linear.dot(x) + self.constant;
        for (a, c) in &self.terms {
            let arg = a.dot(x) + c;
            if !(arg > 0.0) {
                return None;
            }
            v += arg.log2();
        }
        v.is_finite().then_some(v)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.linear.clone();
        for (a, c) in &self.terms {
            g.axpy(1.0 / (LN_2 * (a.dot(x) + c)), a, 1.0);
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for (a, c) in &self.terms {
            let arg = a.dot(x) + c;
            h.ger(-1.0 / (LN_2 * arg * arg), a, a, 1.0);
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    terms: Vec<(usize, f64)>,
    rhs: f64,
}

impl Linear {
    fn eval(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum()
    }
}

/// Maximize `c . x` subject to the registered constraints.
pub struct Problem {
    objective: DVector<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    inequalities: Vec<Linear>,
    equalities: Vec<Linear>,
    concave: Vec<(Box<dyn SmoothConcave>, f64)>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("variables", &self.dim())
            .field("inequalities", &self.inequalities.len())
            .field("equalities", &self.equalities.len())
            .field("concave", &self.concave.len())
            .finish()
    }
}

impl Problem {
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective: DVector::from_vec(objective),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            inequalities: Vec::new(),
            equalities: Vec::new(),
            concave: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn set_bounds(&mut self, index: usize, lo: f64, hi: f64) -> &mut Self {
        self.lower[index] = lo;
        self.upper[index] = hi;
        self
    }

    /// `sum a_i x_i <= rhs`.
    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        self.inequalities.push(Linear { terms, rhs });
        self
    }

    /// `sum a_i x_i >= rhs`.
    pub fn add_ge(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        let terms = terms.into_iter().map(|(i, a)| (i, -a)).collect();
        self.inequalities.push(Linear { terms, rhs: -rhs });
        self
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        self.equalities.push(Linear { terms, rhs });
        self
    }

    /// `g(x) >= rhs`.
    pub fn add_concave(&mut self, g: Box<dyn SmoothConcave>, rhs: f64) -> &mut Self {
        self.concave.push((g, rhs));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when the barrier duality gap `m / t` falls below this, relative
    /// to `1 + |objective|`.
    pub gap_tol: f64,
    pub newton_tol: f64,
    pub max_newton_steps: usize,
    pub t0: f64,
    pub mu: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-9, newton_tol: 1e-10, max_newton_steps: 3000, t0: 1.0, mu: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_equality: f64,
    pub primal_inequality: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub newton_steps: usize,
    pub kkt: KktResiduals,
    pub inequality_duals: Vec<f64>,
    pub concave_duals: Vec<f64>,
    pub equality_duals: Vec<f64>,
}

impl Solution {
    pub fn require_optimal(self, context: &str) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::Infeasible => Err(Error::Infeasible(context.to_string())),
            status => Err(Error::Solver { status, context: context.to_string() }),
        }
    }
}

/// Which constraint a slack belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Lower(usize),
    Upper(usize),
    PhaseFloor,
    Ineq(usize),
    Concave(usize),
}

type SparseGrad = Vec<(usize, f64)>;

fn sparse_dot(g: &SparseGrad, v: &DVector<f64>) -> f64 {
    g.iter().map(|&(i, a)| a * v[i]).sum()
}

fn sparse_axpy(alpha: f64, g: &SparseGrad, y: &mut DVector<f64>) {
    for &(i, a) in g {
        y[i] += alpha * a;
    }
}

struct Work<'a> {
    p: &'a Problem,
    free: Vec<usize>,
    /// Position of each original variable among the free ones.
    pos: Vec<Option<usize>>,
    base: DVector<f64>,
    phase1: bool,
    kinds: Vec<Kind>,
}

/// Lower bound on the phase-I slack variable, keeping phase I bounded.
const PHASE1_FLOOR: f64 = -1.0;

impl<'a> Work<'a> {
    fn new(p: &'a Problem, free: Vec<usize>, base: DVector<f64>, phase1: bool) -> Self {
        let mut kinds = Vec::new();
        for (zi, &xi) in free.iter().enumerate() {
            if p.lower[xi].is_finite() {
                kinds.push(Kind::Lower(zi));
            }
            if p.upper[xi].is_finite() {
                kinds.push(Kind::Upper(zi));
            }
        }
        if phase1 {
            kinds.push(Kind::PhaseFloor);
        }
        kinds.extend((0..p.inequalities.len()).map(Kind::Ineq));
        kinds.extend((0..p.concave.len()).map(Kind::Concave));
        let mut pos = vec![None; p.dim()];
        for (zi, &xi) in free.iter().enumerate() {
            pos[xi] = Some(zi);
        }
        Self { p, free, pos, base, phase1, kinds }
    }

    fn nz(&self) -> usize {
        self.free.len() + usize::from(self.phase1)
    }

    fn full(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut x = self.base.clone();
        for (zi, &xi) in self.free.iter().enumerate() {
            x[xi] = z[zi];
        }
        x
    }

    fn relax(&self, z: &DVector<f64>) -> f64 {
        if self.phase1 {
            z[self.nz() - 1]
        } else {
            0.0
        }
    }

    fn objective(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.nz());
        if self.phase1 {
            c[self.nz() - 1] = -1.0;
        } else {
            for (zi, &xi) in self.free.iter().enumerate() {
                c[zi] = self.p.objective[xi];
            }
        }
        c
    }

    /// Equality rows in reduced coordinates.
    fn equalities(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.p.equalities.len();
        let mut a = DMatrix::zeros(m, self.nz());
        let mut b = DVector::zeros(m);
        for (r, eq) in self.p.equalities.iter().enumerate() {
            b[r] = eq.rhs;
            for &(i, coef) in &eq.terms {
                match self.pos[i] {
                    Some(zi) => a[(r, zi)] += coef,
                    None => b[r] -= coef * self.base[i],
                }
            }
        }
        (a, b)
    }

    /// All slacks, or `None` if any is non-positive or out of domain.
    fn slacks(&self, z: &DVector<f64>) -> Option<Vec<f64>> {
        let x = self.full(z);
        let s = self.relax(z);
        let mut out = Vec::with_capacity(self.kinds.len());
        for k in &self.kinds {
            let v = match *k {
                Kind::Lower(zi) => z[zi] - self.p.lower[self.free[zi]],
                Kind::Upper(zi) => self.p.upper[self.free[zi]] - z[zi],
                Kind::PhaseFloor => s - PHASE1_FLOOR,
                Kind::Ineq(i) => {
                    let l = &self.p.inequalities[i];
                    l.rhs - l.eval(&x) + s
                }
                Kind::Concave(i) => {
                    let (g, rhs) = &self.p.concave[i];
                    g.value(&x)? - rhs + s
                }
            };
            if !(v > 0.0) || !v.is_finite() {
                return None;
            }
            out.push(v);
        }
        Some(out)
    }

    /// Raw slacks without the domain check (phase-I initialization).
    fn raw_soft_slacks(&self, x: &DVector<f64>) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for l in &self.p.inequalities {
            out.push(l.rhs - l.eval(x));
        }
        for (g, rhs) in &self.p.concave {
            out.push(g.value(x)? - rhs);
        }
        Some(out)
    }

    /// Gradient of every slack with respect to `z` and the barrier curvature
    /// `-sum_i hess(s_i) / s_i` from the concave constraints.
    fn derivatives(&self, z: &DVector<f64>, slacks: &[f64]) -> (Vec<SparseGrad>, DMatrix<f64>) {
        let nz = self.nz();
        let x = self.full(z);
        let mut grads = Vec::with_capacity(self.kinds.len());
        let mut curv = DMatrix::zeros(nz, nz);
        for (k, &s_i) in self.kinds.iter().zip(slacks) {
            let mut g: SparseGrad = Vec::new();
            match *k {
                Kind::Lower(zi) => g.push((zi, 1.0)),
                Kind::Upper(zi) => g.push((zi, -1.0)),
                Kind::PhaseFloor => g.push((nz - 1, 1.0)),
                Kind::Ineq(i) => {
                    for &(xi, a) in &self.p.inequalities[i].terms {
                        if let Some(zi) = self.pos[xi] {
                            g.push((zi, -a));
                        }
                    }
                }
                Kind::Concave(i) => {
                    let f = &self.p.concave[i].0;
                    let gx = f.gradient(&x);
                    let hx = f.hessian(&x);
                    for (zi, &xi) in self.free.iter().enumerate() {
                        if gx[xi] != 0.0 {
                            g.push((zi, gx[xi]));
                        }
                        for (zj, &xj) in self.free.iter().enumerate() {
                            curv[(zi, zj)] -= hx[(xi, xj)] / s_i;
                        }
                    }
                }
            }
            if self.phase1 && matches!(k, Kind::Ineq(_) | Kind::Concave(_)) {
                g.push((nz - 1, 1.0));
            }
            grads.push(g);
        }
        (grads, curv)
    }

    fn barrier(&self, z: &DVector<f64>, c: &DVector<f64>, t: f64) -> Option<f64> {
        let s = self.slacks(z)?;
        Some(-t * c.dot(z) - s.iter().map(|v| v.ln()).sum::<f64>())
    }
}

/// Newton steps per centering before the point is taken as centred.
const MAX_CENTERING_STEPS: usize = 80;

enum Centering {
    Done,
    Budget,
    Diverged,
}

/// Newton centering for `min -t c.z - sum log s_i(z)` on `A z = b`.
fn center(
    w: &Work<'_>,
    z: &mut DVector<f64>,
    t: f64,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    opts: &SolverOptions,
    steps: &mut usize,
) -> Centering {
    let c = w.objective();
    let restore = equality_restorer(a_eq);
    for _ in 0..MAX_CENTERING_STEPS {
        if *steps >= opts.max_newton_steps {
            return Centering::Budget;
        }
        let Some((g, mut dz, _)) = newton_step(w, z, t, a_eq) else { return Centering::Diverged };
        let mut drift = DVector::zeros(z.len());
        if let Some(r) = &restore {
            // Keep iterates on the affine set despite round-off in the KKT solve.
            dz -= r * (a_eq * &dz);
            drift = r * (a_eq * &*z - b_eq);
        }
        let decrement = -g.dot(&dz);
        if decrement / 2.0 <= opts.newton_tol {
            return Centering::Done;
        }
        *steps += 1;
        let phi0 = w.barrier(z, &c, t).unwrap_or(f64::INFINITY);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..200 {
            let trial = &*z + alpha * &dz - &drift;
            if let Some(phi) = w.barrier(&trial, &c, t) {
                if phi <= phi0 - 0.01 * alpha * decrement {
                    *z = trial;
                    accepted = phi0 - phi > 1e-15 * phi0.abs();
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Numerical floor: the point is as centred as floating point allows.
            return Centering::Done;
        }
        if z.amax() > 1e13 {
            return Centering::Diverged;
        }
    }
    Centering::Done
}

/// Barrier gradient, Newton direction and equality multipliers at `z`.
fn newton_step(
    w: &Work<'_>,
    z: &DVector<f64>,
    t: f64,
    a_eq: &DMatrix<f64>,
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let nz = w.nz();
    let me = a_eq.nrows();
    let slacks = w.slacks(z)?;
    let (grads, curv) = w.derivatives(z, &slacks);
    let mut g = -t * w.objective();
    let mut h = curv;
    for (gi, si) in grads.iter().zip(&slacks) {
        sparse_axpy(-1.0 / si, gi, &mut g);
        let w2 = 1.0 / (si * si);
        for &(i, a) in gi {
            for &(j, b) in gi {
                h[(i, j)] += w2 * a * b;
            }
        }
    }
    let scale = h.diagonal().amax().max(1e-300);
    let mut kkt = DMatrix::zeros(nz + me, nz + me);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(&h);
    for i in 0..nz {
        kkt[(i, i)] += 1e-14 * scale;
    }
    for r in 0..me {
        for j in 0..nz {
            kkt[(nz + r, j)] = a_eq[(r, j)];
            kkt[(j, nz + r)] = a_eq[(r, j)];
        }
    }
    let mut rhs = DVector::zeros(nz + me);
    rhs.rows_mut(0, nz).copy_from(&(-&g));
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(sol) if sol.iter().all(|v| v.is_finite()) => sol,
        _ => {
            // Redundant equality rows: regularize the multiplier block.
            for r in 0..me {
                kkt[(nz + r, nz + r)] = -1e-12;
            }
            kkt.lu().solve(&rhs)?
        }
    };
    let dz = sol.rows(0, nz).into_owned();
    if dz.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((g, dz, sol.rows(nz, me).into_owned()))
}

/// `A^T (A A^T)^+`, the minimum-norm right inverse of the equality rows.
fn equality_restorer(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return None;
    }
    let pinv = (a * a.transpose()).pseudo_inverse(1e-12).ok()?;
    Some(a.transpose() * pinv)
}

fn project_onto_equalities(z: &mut DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let r = a * &*z - b;
    let aat = a * a.transpose();
    if let Ok(pinv) = aat.pseudo_inverse(1e-12) {
        let corr = a.transpose() * (pinv * &r);
        *z -= corr;
    }
    (a * &*z - b).amax()
}

/// Solve from start `x0`, which must lie strictly inside the bounds of the
/// free variables (fixed variables are taken from their bound).
pub fn solve(problem: &Problem, x0: &[f64], opts: &SolverOptions) -> Result<Solution> {
    let n = problem.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("start has {} entries, problem has {n} variables", x0.len())));
    }
    let mut base = DVector::from_column_slice(x0);
    let mut free = Vec::new();
    for i in 0..n {
        let (lo, hi) = (problem.lower[i], problem.upper[i]);
        if lo > hi {
            return Ok(failed(problem, base, SolveStatus::Infeasible, 0));
        }
        if lo == hi {
            base[i] = lo;
        } else {
            free.push(i);
        }
    }
    let phase2 = Work::new(problem, free.clone(), base.clone(), false);
    let (a_eq, b_eq) = phase2.equalities();
    let mut z = DVector::from_iterator(free.len(), free.iter().map(|&i| base[i]));
    let eq_scale = 1.0 + b_eq.amax();
    if project_onto_equalities(&mut z, &a_eq, &b_eq) > 1e-9 * eq_scale {
        return Ok(failed(problem, phase2.full(&z), SolveStatus::Infeasible, 0));
    }
    for (zi, &xi) in free.iter().enumerate() {
        if !(z[zi] > problem.lower[xi] && z[zi] < problem.upper[xi]) {
            return Err(Error::Domain(format!(
                "start coordinate {xi} = {} is not strictly inside [{}, {}]",
                z[zi], problem.lower[xi], problem.upper[xi]
            )));
        }
    }
    let mut steps = 0usize;

    if phase2.slacks(&z).is_none() {
        let Some(soft) = phase2.raw_soft_slacks(&phase2.full(&z)) else {
            return Err(Error::Domain("start point lies outside a concave constraint's domain".into()));
        };
        let s0 = soft.iter().fold(0.0f64, |m, &v| m.max(-v)) + 1.0;
        let w1 = Work::new(problem, free.clone(), base.clone(), true);
        let mut z1 = DVector::from_iterator(free.len() + 1, z.iter().copied().chain([s0]));
        let a1 = a_eq.clone().insert_column(free.len(), 0.0);
        let m = w1.kinds.len() as f64;
        let mut t = opts.t0;
        loop {
            match center(&w1, &mut z1, t, &a1, &b_eq, opts, &mut steps) {
                Centering::Done => {}
                Centering::Budget => {
                    return Ok(failed(problem, w1.full(&z1), SolveStatus::MaxIterations, steps));
                }
                Centering::Diverged => {
                    return Ok(failed(problem, w1.full(&z1), SolveStatus::Infeasible, steps));
                }
            }
            let s = z1[free.len()];
            if s < 0.0 {
                break;
            }
            let gap = m / t;
            if s - gap > 0.0 || gap < opts.gap_tol {
                return Ok(failed(problem, w1.full(&z1), SolveStatus::Infeasible, steps));
            }
            t *= opts.mu;
        }
        z = z1.rows(0, free.len()).into_owned();
    }

    let m = phase2.kinds.len() as f64;
    let mut t = opts.t0;
    let status = loop {
        match center(&phase2, &mut z, t, &a_eq, &b_eq, opts, &mut steps) {
            Centering::Done => {}
            Centering::Budget => break SolveStatus::MaxIterations,
            Centering::Diverged => {
                break if z.amax() > 1e12 { SolveStatus::Unbounded } else { SolveStatus::MaxIterations };
            }
        }
        if m == 0.0 {
            // No inequality at all: a non-zero objective is unbounded on the affine set.
            let c = phase2.objective();
            let proj = if a_eq.nrows() > 0 {
                let aat = &a_eq * a_eq.transpose();
                match aat.pseudo_inverse(1e-12) {
                    Ok(pinv) => &c - a_eq.transpose() * (pinv * (&a_eq * &c)),
                    Err(_) => c.clone(),
                }
            } else {
                c.clone()
            };
            break if proj.amax() > 1e-12 { SolveStatus::Unbounded } else { SolveStatus::Optimal };
        }
        if m / t < opts.gap_tol * (1.0 + phase2.objective().dot(&z).abs()) {
            break SolveStatus::Optimal;
        }
        t *= opts.mu;
    };
    Ok(finish(&phase2, &z, t, &a_eq, &b_eq, status, steps))
}

fn failed(problem: &Problem, x: DVector<f64>, status: SolveStatus, steps: usize) -> Solution {
    Solution {
        status,
        objective: problem.objective.dot(&x),
        x: x.iter().copied().collect(),
        newton_steps: steps,
        kkt: KktResiduals::default(),
        inequality_duals: vec![0.0; problem.inequalities.len()],
        concave_duals: vec![0.0; problem.concave.len()],
        equality_duals: vec![0.0; problem.equalities.len()],
    }
}

fn finish(
    w: &Work<'_>,
    z: &DVector<f64>,
    t: f64,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    status: SolveStatus,
    steps: usize,
) -> Solution {
    let p = w.p;
    let x = w.full(z);
    let mut sol = failed(p, x.clone(), status, steps);
    let Some(slacks) = w.slacks(z) else { return sol };
    let (grads, curv) = w.derivatives(z, &slacks);
    let nz = w.nz();
    let (dz, nu) = match newton_step(w, z, t, a_eq) {
        Some((_, dz, nu)) => (dz, nu / t),
        None => (DVector::zeros(nz), DVector::zeros(a_eq.nrows())),
    };
    // Dual estimates from the last Newton system; exact stationarity for
    // linear constraints, curvature-weighted residual otherwise.
    let mut r = w.objective() - &curv * &dz / t;
    let mut comp = 0.0f64;
    for ((k, g), s) in w.kinds.iter().zip(&grads).zip(&slacks) {
        let lambda = ((1.0 - sparse_dot(g, &dz) / s) / (t * s)).max(0.0);
        sparse_axpy(lambda, g, &mut r);
        comp = comp.max(lambda * s);
        match *k {
            Kind::Ineq(i) => sol.inequality_duals[i] = lambda,
            Kind::Concave(i) => sol.concave_duals[i] = lambda,
            _ => {}
        }
    }
    if a_eq.nrows() > 0 {
        r -= a_eq.transpose() * &nu;
        sol.equality_duals = nu.iter().copied().collect();
    }
    let mut infeas = 0.0f64;
    for l in &p.inequalities {
        infeas = infeas.max(l.eval(&x) - l.rhs);
    }
    for (g, rhs) in &p.concave {
        infeas = infeas.max(g.value(&x).map_or(f64::INFINITY, |v| rhs - v));
    }
    for i in 0..p.dim() {
        infeas = infeas.max(p.lower[i] - x[i]).max(x[i] - p.upper[i]);
    }
    sol.kkt = KktResiduals {
        stationarity: r.amax(),
        primal_equality: if a_eq.nrows() > 0 { (a_eq * z - b_eq).amax() } else { 0.0 },
        primal_inequality: infeas.max(0.0),
        complementarity: comp,
    };
    sol
}
