//! Alternating optimization of group powers and factor graphs: maximize the
//! strong group's sum rate subject to a weak-group rate floor, per-user power
//! caps and degree constraints.
//!
//! The power block and the relaxed assignment block are each solved by
//! successive convex approximation of the difference-of-concave objective;
//! the assignment block adds a reweighted l1 penalty that drives the relaxed
//! entries towards 0/1. After convergence the assignments are rounded to
//! regular binary graphs and the powers re-optimized once.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rate::{column_loads, dc_parts_f, sum_rate_scma, sum_rate_strong, Allocation, GainTable};
use crate::scma::{validate_factor_graph, FactorGraph, RelaxedFactorGraph};
use crate::solver::{solve, LogSumAffine, Problem, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Per-user transmit power budget `P` in watts.
    pub max_power_w: f64,
    /// Reweighting offset.
    pub epsilon: f64,
    /// l1 penalty weight; `None` selects [`default_penalty`].
    pub penalty_weight: Option<f64>,
    /// Weak-group sum-rate floor in bits/s/Hz; `None` selects [`default_qos`].
    pub qos_threshold: Option<f64>,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    /// Reweighting rounds per assignment block.
    pub max_reweight_rounds: usize,
    pub solver: SolverOptions,
}

impl OptimizerConfig {
    pub fn new(max_power_w: f64) -> Self {
        Self {
            max_power_w,
            epsilon: 1e-3,
            penalty_weight: None,
            qos_threshold: None,
            inner_tol: 1e-4,
            outer_tol: 1e-4,
            max_inner_iters: 30,
            max_outer_iters: 20,
            max_reweight_rounds: 10,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_power_w", self.max_power_w),
            ("epsilon", self.epsilon),
            ("inner_tol", self.inner_tol),
            ("outer_tol", self.outer_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite (got {v})")));
            }
        }
        if let Some(l) = self.penalty_weight {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("penalty weight must be non-negative (got {l})")));
            }
        }
        if let Some(q) = self.qos_threshold {
            if !(q >= 0.0 && q.is_finite()) {
                return Err(Error::Config(format!("QoS threshold must be non-negative (got {q})")));
            }
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 || self.max_reweight_rounds == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Degrees {
    pub d_f: usize,
    pub d_v: usize,
}

impl From<&FactorGraph> for Degrees {
    fn from(g: &FactorGraph) -> Self {
        Self { d_f: g.d_f(), d_v: g.d_v() }
    }
}

/// Everything the two block subproblems share.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub gains: &'a GainTable,
    pub strong: Degrees,
    pub weak: Degrees,
    pub qos: f64,
    pub cfg: &'a OptimizerConfig,
}

/// Half the weak-group rate at full per-user power on `weak_graph`.
pub fn default_qos(gains: &GainTable, weak_graph: &FactorGraph, max_power_w: f64) -> f64 {
    let p = max_power_w / weak_graph.d_f() as f64;
    0.5 * sum_rate_scma(p, &RelaxedFactorGraph::from_binary(weak_graph), &gains.weak, gains.noise_var)
}

/// `0.1 |t2| / (number of assignment entries)`.
pub fn default_penalty(initial_objective: f64, entries: usize) -> f64 {
    0.1 * initial_objective.abs() / entries.max(1) as f64
}

/// Elementwise `1 / (|f| + epsilon)`.
pub fn update_weights(f: &RelaxedFactorGraph, epsilon: f64) -> DMatrix<f64> {
    f.entries().map(|v| 1.0 / (v.abs() + epsilon))
}

fn weak_rate(p_weak: f64, loads: &[f64], noise: f64) -> f64 {
    loads.iter().map(|w| (1.0 + p_weak * w / noise).log2()).sum()
}

fn strong_rate(p: [f64; 2], s: &[f64], w: &[f64], noise: f64) -> f64 {
    s.iter().zip(w).map(|(s, w)| (1.0 + p[0] * s / (p[1] * w + noise)).log2()).sum()
}

/// Smallest weak power meeting the QoS floor (feasible side of a bisection).
fn min_weak_power(loads: &[f64], noise: f64, qos: f64, cap: f64) -> Result<f64> {
    if qos <= 0.0 {
        return Ok(0.0);
    }
    if weak_rate(cap, loads, noise) < qos {
        return Err(Error::Infeasible(format!(
            "weak-group QoS {qos:.6} bits/s/Hz unattainable: {:.6} at the power cap",
            weak_rate(cap, loads, noise)
        )));
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if weak_rate(mid, loads, noise) >= qos {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn power_cap(max_power_w: f64, f: &RelaxedFactorGraph) -> f64 {
    let r = f.max_row_sum();
    if r > 0.0 {
        max_power_w / r
    } else {
        max_power_w
    }
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerStep {
    pub p_strong: f64,
    pub p_weak: f64,
    /// Epigraph value of the last convexified program.
    pub t1: f64,
    /// Strong sum rate at the returned powers.
    pub objective: f64,
    /// Strong sum rate at the start and after each accepted SCA iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// SCA on the group powers at fixed assignments.
pub fn solve_p_subproblem(
    ctx: &Context<'_>,
    f_strong: &RelaxedFactorGraph,
    f_weak: &RelaxedFactorGraph,
    p0: [f64; 2],
) -> Result<PowerStep> {
    let g = ctx.gains;
    let noise = g.noise_var;
    let s = column_loads(&g.strong, f_strong.entries());
    let w = column_loads(&g.weak, f_weak.entries());
    let cap_s = power_cap(ctx.cfg.max_power_w, f_strong);
    let cap_w = power_cap(ctx.cfg.max_power_w, f_weak);
    let pw_min = min_weak_power(&w, noise, ctx.qos, cap_w)?;
    let pin_w = cap_w - pw_min <= 1e-9 * cap_w;

    let mut p = [p0[0].clamp(0.0, cap_s), p0[1].clamp(pw_min, cap_w)];
    let mut objective = strong_rate(p, &s, &w, noise);
    let mut t1_prev = objective;
    let mut history = vec![objective];
    let mut t1 = objective;
    let mut iterations = 0;
    for _ in 0..ctx.cfg.max_inner_iters {
        let mut prob = Problem::maximize(vec![0.0, 0.0, 1.0]);
        prob.set_bounds(0, 0.0, cap_s);
        if pin_w {
            prob.set_bounds(1, pw_min, pw_min);
        } else {
            prob.set_bounds(1, 0.0, cap_w);
        }
        // u1(p) - v1(p^n) - dv1/dp_w (p_w - p_w^n) - t1 >= 0
        let mut lin = LogSumAffine::new(3);
        let (mut v1, mut grad) = (0.0, 0.0);
        for (sk, wk) in s.iter().zip(&w) {
            lin.add_log_term(DVector::from_vec(vec![*sk, *wk, 0.0]), noise);
            let interf = p[1] * wk + noise;
            v1 += interf.log2();
            grad += wk / (std::f64::consts::LN_2 * interf);
        }
        lin.add_linear(1, -grad);
        lin.add_constant(-v1 + grad * p[1]);
        let ps0 = p[0].clamp(0.01 * cap_s, 0.99 * cap_s);
        let pw0 = if pin_w {
            pw_min
        } else {
            let span = cap_w - pw_min;
            p[1].clamp(pw_min + 0.01 * span, cap_w - 0.01 * span)
        };
        use crate::solver::SmoothConcave;
        let t_start = lin.value(&DVector::from_vec(vec![ps0, pw0, 0.0])).unwrap_or(0.0) - 1.0;
        lin.add_linear(2, -1.0);
        prob.add_concave(Box::new(lin), 0.0);
        if ctx.qos > 0.0 && !pin_w {
            let mut q = LogSumAffine::new(3);
            for wk in &w {
                q.add_log_term(DVector::from_vec(vec![0.0, wk / noise, 0.0]), 1.0);
            }
            prob.add_concave(Box::new(q), ctx.qos);
        }
        let sol = solve(&prob, &[ps0, pw0, t_start], &ctx.cfg.solver)?.require_optimal("power subproblem")?;
        let p_new = [sol.x[0].clamp(0.0, cap_s), sol.x[1].clamp(0.0, cap_w)];
        let obj_new = strong_rate(p_new, &s, &w, noise);
        if obj_new < objective - 1e-12 * objective.abs().max(1.0) {
            break;
        }
        iterations += 1;
        p = p_new;
        objective = obj_new;
        t1 = sol.x[2];
        history.push(objective);
        if relative_change(t1, t1_prev) < ctx.cfg.inner_tol {
            break;
        }
        t1_prev = t1;
    }
    Ok(PowerStep { p_strong: p[0], p_weak: p[1], t1, objective, history, iterations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentStep {
    pub f_strong: RelaxedFactorGraph,
    pub f_weak: RelaxedFactorGraph,
    pub t2: f64,
    /// `t2 - penalty * sum(w f)` at the returned point.
    pub objective: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Adds the box, degree and power constraints of one group; returns the
/// strictly interior start for its entries.
#[allow(clippy::too_many_arguments)]
fn add_group(
    prob: &mut Problem,
    offset: usize,
    f0: &RelaxedFactorGraph,
    deg: Degrees,
    power: f64,
    max_power_w: f64,
    group: &str,
) -> Result<DMatrix<f64>> {
    let (users, k) = (f0.users(), f0.subcarriers());
    let idx = |j: usize, kk: usize| offset + j * k + kk;
    if deg.d_f > k || deg.d_v > users {
        return Err(Error::Infeasible(format!("{group} degrees d_f={} d_v={} exceed the graph", deg.d_f, deg.d_v)));
    }
    let row_cap = if power > 0.0 { max_power_w / power } else { f64::INFINITY };
    if row_cap < deg.d_f as f64 * (1.0 - 1e-9) {
        return Err(Error::Infeasible(format!("{group} power {power} W cannot cover d_f = {} subcarriers", deg.d_f)));
    }
    if deg.d_f == k {
        if row_cap < k as f64 * (1.0 - 1e-9) {
            return Err(Error::Infeasible(format!("{group} power {power} W cannot cover all subcarriers")));
        }
        for j in 0..users {
            for kk in 0..k {
                prob.set_bounds(idx(j, kk), 1.0, 1.0);
            }
        }
        return Ok(DMatrix::from_element(users, k, 1.0));
    }
    let pinned = row_cap <= deg.d_f as f64 * (1.0 + 1e-7);
    for j in 0..users {
        for kk in 0..k {
            prob.set_bounds(idx(j, kk), 0.0, 1.0);
        }
        let row: Vec<(usize, f64)> = (0..k).map(|kk| (idx(j, kk), 1.0)).collect();
        if pinned {
            prob.add_eq(row, deg.d_f as f64);
        } else {
            prob.add_ge(row.clone(), deg.d_f as f64);
            if row_cap < k as f64 {
                prob.add_le(row, row_cap);
            }
        }
    }
    let balanced = users * deg.d_f == k * deg.d_v;
    for kk in 0..k {
        let col: Vec<(usize, f64)> = (0..users).map(|j| (idx(j, kk), 1.0)).collect();
        if pinned && balanced {
            // Row equalities already fix the total; the last column is implied.
            if kk + 1 < k {
                prob.add_eq(col, deg.d_v as f64);
            }
        } else {
            prob.add_ge(col, deg.d_v as f64);
        }
    }
    let r = if pinned { deg.d_f as f64 } else { 0.5 * (deg.d_f as f64 + row_cap.min(k as f64)) };
    Ok(f0.entries().map(|v| 0.95 * v + 0.05 * r / k as f64))
}

/// SCA on the relaxed assignments at fixed powers and fixed weights.
#[allow(clippy::too_many_arguments)]
pub fn solve_f_subproblem(
    ctx: &Context<'_>,
    p: [f64; 2],
    f0_strong: &RelaxedFactorGraph,
    f0_weak: &RelaxedFactorGraph,
    w_strong: &DMatrix<f64>,
    w_weak: &DMatrix<f64>,
    penalty: f64,
) -> Result<AssignmentStep> {
    let g = ctx.gains;
    let (js, jw, k) = (f0_strong.users(), f0_weak.users(), f0_strong.subcarriers());
    if f0_weak.subcarriers() != k || w_strong.shape() != (js, k) || w_weak.shape() != (jw, k) {
        return Err(Error::DimensionMismatch("assignment, weight and gain shapes disagree".into()));
    }
    let n = (js + jw) * k + 1;
    let tv = n - 1;
    let ws = |i: usize, kk: usize| i * k + kk;
    let ww = |j: usize, kk: usize| js * k + j * k + kk;
    let noise = g.noise_var;
    let pen = |fs: &DMatrix<f64>, fw: &DMatrix<f64>| penalty * (w_strong.component_mul(fs).sum() + w_weak.component_mul(fw).sum());

    let mut fs = f0_strong.clone();
    let mut fw = f0_weak.clone();
    let alloc = Allocation::new(p[0], p[1], fs.clone(), fw.clone())?;
    let mut t2 = sum_rate_strong(&alloc, g);
    let mut objective = t2 - pen(fs.entries(), fw.entries());
    let mut history = vec![objective];
    let mut iterations = 0;
    for _ in 0..ctx.cfg.max_inner_iters {
        let mut c = vec![0.0; n];
        c[tv] = 1.0;
        for i in 0..js {
            for kk in 0..k {
                c[ws(i, kk)] = -penalty * w_strong[(i, kk)];
            }
        }
        for j in 0..jw {
            for kk in 0..k {
                c[ww(j, kk)] = -penalty * w_weak[(j, kk)];
            }
        }
        let mut prob = Problem::maximize(c);
        let start_s = add_group(&mut prob, 0, &fs, ctx.strong, p[0], ctx.cfg.max_power_w, "strong")?;
        let start_w = add_group(&mut prob, js * k, &fw, ctx.weak, p[1], ctx.cfg.max_power_w, "weak")?;

        // u2(F) - v2(F^n) - <grad v2(F^n), F_w - F_w^n> - t2 >= 0
        let split = dc_parts_f(&fs, &fw, p[0], p[1], g);
        let mut lin = LogSumAffine::new(n);
        for kk in 0..k {
            let mut a = DVector::zeros(n);
            for i in 0..js {
                a[ws(i, kk)] = p[0] * g.strong[(i, kk)];
            }
            for j in 0..jw {
                a[ww(j, kk)] = p[1] * g.weak[(j, kk)];
            }
            lin.add_log_term(a, noise);
        }
        let mut offset = -split.v;
        for j in 0..jw {
            for kk in 0..k {
                let gv = split.grad_v_weak[(j, kk)];
                lin.add_linear(ww(j, kk), -gv);
                offset += gv * fw.get(j, kk);
            }
        }
        lin.add_constant(offset);
        let mut x0 = vec![0.0; n];
        for i in 0..js {
            for kk in 0..k {
                x0[ws(i, kk)] = start_s[(i, kk)];
            }
        }
        for j in 0..jw {
            for kk in 0..k {
                x0[ww(j, kk)] = start_w[(j, kk)];
            }
        }
        use crate::solver::SmoothConcave;
        x0[tv] = lin.value(&DVector::from_column_slice(&x0)).unwrap_or(0.0) - 1.0;
        lin.add_linear(tv, -1.0);
        prob.add_concave(Box::new(lin), 0.0);
        if ctx.qos > 0.0 {
            let mut q = LogSumAffine::new(n);
            for kk in 0..k {
                let mut a = DVector::zeros(n);
                for j in 0..jw {
                    a[ww(j, kk)] = p[1] * g.weak[(j, kk)] / noise;
                }
                q.add_log_term(a, 1.0);
            }
            prob.add_concave(Box::new(q), ctx.qos);
        }
        let sol = solve(&prob, &x0, &ctx.cfg.solver)?.require_optimal("assignment subproblem")?;
        let new_s = RelaxedFactorGraph::new(DMatrix::from_fn(js, k, |i, kk| sol.x[ws(i, kk)]))?;
        let new_w = RelaxedFactorGraph::new(DMatrix::from_fn(jw, k, |j, kk| sol.x[ww(j, kk)]))?;
        let new_t2 = sol.x[tv];
        let new_obj = new_t2 - pen(new_s.entries(), new_w.entries());
        if new_obj < objective - 1e-9 * objective.abs().max(1.0) {
            break;
        }
        iterations += 1;
        let change = relative_change(new_obj, objective);
        fs = new_s;
        fw = new_w;
        t2 = new_t2;
        objective = new_obj;
        history.push(objective);
        if change < ctx.cfg.inner_tol {
            break;
        }
    }
    Ok(AssignmentStep { f_strong: fs, f_weak: fw, t2, objective, history, iterations })
}

/// Rounds a relaxed assignment to a regular binary graph: keep each user's
/// `d_f` largest entries, then move assignments from over-full to
/// under-full subcarriers, each time picking the user that loses the least
/// relaxed mass.
pub fn round_and_repair(f: &RelaxedFactorGraph, d_f: usize, d_v: usize) -> Result<FactorGraph> {
    let (users, k) = (f.users(), f.subcarriers());
    if d_f == 0 || d_f > k || users * d_f != k * d_v {
        return Err(Error::Repair(format!("degrees d_f={d_f}, d_v={d_v} are not realizable with J={users}, K={k}")));
    }
    let mut rows = vec![vec![0u8; k]; users];
    for (j, row) in rows.iter_mut().enumerate() {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| f.get(j, b).total_cmp(&f.get(j, a)).then(a.cmp(&b)));
        for &kk in &order[..d_f] {
            row[kk] = 1;
        }
    }
    let col = |rows: &[Vec<u8>], kk: usize| rows.iter().map(|r| r[kk] as usize).sum::<usize>();
    while let Some(over) = (0..k).find(|&kk| col(&rows, kk) > d_v) {
        let under = (0..k)
            .find(|&kk| col(&rows, kk) < d_v)
            .ok_or_else(|| Error::Repair("column sums inconsistent with degrees".into()))?;
        let mut best: Option<(usize, f64)> = None;
        for (j, r) in rows.iter().enumerate() {
            if r[over] == 1 && r[under] == 0 {
                let gain = f.get(j, under) - f.get(j, over);
                if best.is_none_or(|(_, g)| gain > g) {
                    best = Some((j, gain));
                }
            }
        }
        let (j, _) = best.ok_or_else(|| Error::Repair(format!("no user can move from {over} to {under}")))?;
        rows[j][over] = 0;
        rows[j][under] = 1;
    }
    let v = validate_factor_graph(&rows, d_f, d_v);
    if !v.passed() {
        return Err(Error::Repair(format!("{} violations after repair", v.violations.len())));
    }
    FactorGraph::with_degrees(rows, d_f, d_v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Init,
    Power,
    Assignment,
    Final,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Init => "init",
            Stage::Power => "p",
            Stage::Assignment => "F",
            Stage::Final => "final",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    /// Strong-group sum rate after this stage.
    pub objective: f64,
    pub stage: Stage,
}

/// One block solve inside an outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerRecord {
    pub outer: usize,
    pub stage: Stage,
    pub round: usize,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerTrace {
    pub entries: Vec<TraceEntry>,
    pub inner: Vec<InnerRecord>,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl OptimizerTrace {
    /// Objective values of the relaxed iterations (rounding excluded).
    pub fn outer_objectives(&self) -> Vec<f64> {
        self.entries.iter().filter(|e| e.stage != Stage::Final).map(|e| e.objective).collect()
    }

    pub fn is_non_decreasing(&self, tol: f64) -> bool {
        self.outer_objectives().windows(2).all(|w| w[1] >= w[0] - tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoResult {
    pub p_strong: f64,
    pub p_weak: f64,
    pub strong_graph: FactorGraph,
    pub weak_graph: FactorGraph,
    /// Strong sum rate at the returned binary allocation.
    pub objective: f64,
    pub weak_rate: f64,
    /// Last relaxed objective before rounding.
    pub relaxed_objective: f64,
    pub relaxed_strong: RelaxedFactorGraph,
    pub relaxed_weak: RelaxedFactorGraph,
    pub qos: f64,
    pub penalty: f64,
    /// The rounded AO result lost to the initial graphs with optimized powers.
    pub kept_initial_graphs: bool,
    pub trace: OptimizerTrace,
}

impl AoResult {
    pub fn allocation(&self) -> Allocation {
        Allocation {
            p_strong: self.p_strong,
            p_weak: self.p_weak,
            f_strong: RelaxedFactorGraph::from_binary(&self.strong_graph),
            f_weak: RelaxedFactorGraph::from_binary(&self.weak_graph),
        }
    }
}

fn max_abs_diff(a: &RelaxedFactorGraph, b: &RelaxedFactorGraph) -> f64 {
    (a.entries() - b.entries()).amax()
}

/// Full alternating optimization starting from the given binary graphs and
/// half the per-user power budget.
pub fn alternating_optimize(
    gains: &GainTable,
    strong0: &FactorGraph,
    weak0: &FactorGraph,
    cfg: &OptimizerConfig,
) -> Result<AoResult> {
    cfg.validate()?;
    if gains.strong.shape() != (strong0.users(), strong0.subcarriers())
        || gains.weak.shape() != (weak0.users(), weak0.subcarriers())
    {
        return Err(Error::DimensionMismatch("gain tables do not match the factor graphs".into()));
    }
    let big_p = cfg.max_power_w;
    let qos = cfg.qos_threshold.unwrap_or_else(|| default_qos(gains, weak0, big_p));
    let ctx = Context { gains, strong: strong0.into(), weak: weak0.into(), qos, cfg };
    let f0s = RelaxedFactorGraph::from_binary(strong0);
    let f0w = RelaxedFactorGraph::from_binary(weak0);
    let p0 = [0.5 * big_p / strong0.d_f() as f64, 0.5 * big_p / weak0.d_f() as f64];

    let (mut fs, mut fw, mut p) = (f0s.clone(), f0w.clone(), p0);
    let rate = |p: [f64; 2], fs: &RelaxedFactorGraph, fw: &RelaxedFactorGraph| {
        sum_rate_strong(&Allocation { p_strong: p[0], p_weak: p[1], f_strong: fs.clone(), f_weak: fw.clone() }, gains)
    };
    let init = rate(p, &fs, &fw);
    let entries = (strong0.users() + weak0.users()) * strong0.subcarriers();
    let mut penalty = cfg.penalty_weight;
    let mut trace = OptimizerTrace::default();
    trace.entries.push(TraceEntry { iter: 0, objective: init, stage: Stage::Init });

    let mut prev = init;
    for n in 1..=cfg.max_outer_iters {
        trace.outer_iterations = n;
        let ps = solve_p_subproblem(&ctx, &fs, &fw, p)?;
        p = [ps.p_strong, ps.p_weak];
        let obj_p = ps.objective;
        trace.inner.push(InnerRecord { outer: n, stage: Stage::Power, round: 0, history: ps.history });
        trace.entries.push(TraceEntry { iter: n, objective: obj_p, stage: Stage::Power });

        // Scale-matched to t2 where the first assignment subproblem starts.
        let lambda = *penalty.get_or_insert_with(|| default_penalty(obj_p, entries));
        let (mut cs, mut cw) = (fs.clone(), fw.clone());
        let mut w_s = DMatrix::from_element(cs.users(), cs.subcarriers(), 1.0);
        let mut w_w = DMatrix::from_element(cw.users(), cw.subcarriers(), 1.0);
        for round in 0..cfg.max_reweight_rounds {
            let st = solve_f_subproblem(&ctx, p, &cs, &cw, &w_s, &w_w, lambda)?;
            let delta = max_abs_diff(&st.f_strong, &cs).max(max_abs_diff(&st.f_weak, &cw));
            trace.inner.push(InnerRecord { outer: n, stage: Stage::Assignment, round, history: st.history });
            cs = st.f_strong;
            cw = st.f_weak;
            w_s = update_weights(&cs, cfg.epsilon);
            w_w = update_weights(&cw, cfg.epsilon);
            if delta <= 1e-3 {
                break;
            }
        }
        let obj_f = rate(p, &cs, &cw);
        let obj = if obj_f >= obj_p - 1e-12 * obj_p.abs().max(1.0) {
            fs = cs;
            fw = cw;
            obj_f
        } else {
            obj_p
        };
        trace.entries.push(TraceEntry { iter: n, objective: obj, stage: Stage::Assignment });
        let change = relative_change(obj, prev);
        prev = obj;
        if change < cfg.outer_tol {
            trace.converged = true;
            break;
        }
    }

    let relaxed_objective = prev;
    let final_ao = round_and_repair(&fs, ctx.strong.d_f, ctx.strong.d_v).and_then(|bs| {
        let bw = round_and_repair(&fw, ctx.weak.d_f, ctx.weak.d_v)?;
        let st = solve_p_subproblem(&ctx, &(&bs).into(), &(&bw).into(), p)?;
        Ok((bs, bw, st))
    });
    let canonical = solve_p_subproblem(&ctx, &f0s, &f0w, p0)?;
    let (strong_graph, weak_graph, step, kept_initial_graphs) = match final_ao {
        Ok((bs, bw, st)) if st.objective >= canonical.objective => (bs, bw, st, false),
        _ => (strong0.clone(), weak0.clone(), canonical, true),
    };
    trace.entries.push(TraceEntry { iter: trace.outer_iterations + 1, objective: step.objective, stage: Stage::Final });
    let weak_rate = sum_rate_scma(step.p_weak, &(&weak_graph).into(), &gains.weak, gains.noise_var);
    Ok(AoResult {
        p_strong: step.p_strong,
        p_weak: step.p_weak,
        strong_graph,
        weak_graph,
        objective: step.objective,
        weak_rate,
        relaxed_objective,
        relaxed_strong: fs,
        relaxed_weak: fw,
        qos,
        penalty: penalty.unwrap_or(0.0),
        kept_initial_graphs,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{dbm_to_watts, draw_channel, LinkBudget};
    use crate::rate::sum_rate_weak;
    use crate::scma::canonical_factor_graph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64) -> GainTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GainTable::from_channel(&draw_channel(&mut rng, &LinkBudget::default(), 6, 6, 4).unwrap())
    }

    fn canon() -> FactorGraph {
        canonical_factor_graph(6, 4, 2).unwrap()
    }

    #[test]
    fn weights() {
        let f = RelaxedFactorGraph::new(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.5])).unwrap();
        let w = update_weights(&f, 1e-3);
        assert!((w[(0, 0)] - 1.0 / 1.001).abs() < 1e-15);
        assert!((w[(0, 1)] - 1000.0).abs() < 1e-9);
        assert!(w[(0, 1)] > w[(0, 2)] && w[(0, 2)] > w[(0, 0)]);
    }

    #[test]
    fn single_user_closed_form() {
        let one = canonical_factor_graph(1, 1, 1).unwrap();
        let g = GainTable {
            strong: DMatrix::from_element(1, 1, 2e-13),
            weak: DMatrix::from_element(1, 1, 5e-15),
            noise_var: 1e-15,
        };
        let big_p = 10.0;
        let qos = 2.0;
        let cfg = OptimizerConfig { qos_threshold: Some(qos), ..OptimizerConfig::new(big_p) };
        let r = alternating_optimize(&g, &one, &one, &cfg).unwrap();
        let pw = (2f64.powf(qos) - 1.0) * 1e-15 / 5e-15;
        assert!((r.p_weak - pw).abs() <= 1e-6 * pw, "{} vs {pw}", r.p_weak);
        assert!((r.p_strong - big_p).abs() <= 1e-6 * big_p, "{}", r.p_strong);
    }

    #[test]
    fn zero_qos_matches_grid_oracle() {
        let g = instance(7);
        let big_p = dbm_to_watts(40.0);
        let cfg = OptimizerConfig { qos_threshold: Some(0.0), ..OptimizerConfig::new(big_p) };
        let ctx = Context { gains: &g, strong: (&canon()).into(), weak: (&canon()).into(), qos: 0.0, cfg: &cfg };
        let f = RelaxedFactorGraph::from_binary(&canon());
        let st = solve_p_subproblem(&ctx, &f, &f, [0.25 * big_p, 0.25 * big_p]).unwrap();
        let cap = big_p / 2.0;
        let (mut best, mut best_pw) = (f64::NEG_INFINITY, 0.0);
        for a in 0..200 {
            for b in 0..200 {
                let (ps, pw) = (cap * a as f64 / 199.0, cap * b as f64 / 199.0);
                let v = sum_rate_strong(&Allocation::new(ps, pw, f.clone(), f.clone()).unwrap(), &g);
                if v > best {
                    best = v;
                    best_pw = pw;
                }
            }
        }
        assert!(st.objective >= best - 1e-6, "{} < {best}", st.objective);
        assert!(st.p_weak <= best_pw + cap / 199.0);
        assert!(st.history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn binding_qos_collapses_to_cap() {
        let g = instance(8);
        let big_p = dbm_to_watts(35.0);
        let f = RelaxedFactorGraph::from_binary(&canon());
        let cap = big_p / 2.0;
        let qos = sum_rate_scma(cap, &f, &g.weak, g.noise_var) - 1e-9;
        let cfg = OptimizerConfig::new(big_p);
        let ctx = Context { gains: &g, strong: (&canon()).into(), weak: (&canon()).into(), qos, cfg: &cfg };
        let st = solve_p_subproblem(&ctx, &f, &f, [0.25 * big_p, 0.25 * big_p]).unwrap();
        assert!((st.p_weak - cap).abs() <= 1e-6 * cap, "{} vs {cap}", st.p_weak);
        let alloc = Allocation::new(st.p_strong, st.p_weak, f.clone(), f.clone()).unwrap();
        assert!(sum_rate_weak(&alloc, &g) >= qos - 1e-8);
    }

    #[test]
    fn unattainable_qos_is_reported() {
        let g = instance(9);
        let big_p = dbm_to_watts(30.0);
        let f = RelaxedFactorGraph::from_binary(&canon());
        let cfg = OptimizerConfig::new(big_p);
        let qos = sum_rate_scma(big_p / 2.0, &f, &g.weak, g.noise_var) + 0.1;
        let ctx = Context { gains: &g, strong: (&canon()).into(), weak: (&canon()).into(), qos, cfg: &cfg };
        assert!(matches!(solve_p_subproblem(&ctx, &f, &f, [1.0, 1.0]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn full_degree_zero_penalty_fills_strong_block() {
        let g = GainTable { strong: instance(10).strong.rows(0, 3).into_owned(), weak: instance(10).weak.rows(0, 3).into_owned(), noise_var: 1e-15 };
        let full = FactorGraph::from_rows(vec![vec![1u8; 4]; 3]).unwrap();
        let big_p = dbm_to_watts(40.0);
        let cfg = OptimizerConfig::new(big_p);
        let ctx = Context { gains: &g, strong: (&full).into(), weak: (&full).into(), qos: 0.0, cfg: &cfg };
        let f = RelaxedFactorGraph::from_binary(&full);
        let ones = DMatrix::from_element(3, 4, 1.0);
        let st = solve_f_subproblem(&ctx, [big_p / 4.0, big_p / 4.0], &f, &f, &ones, &ones, 0.0).unwrap();
        assert!(st.f_strong.entries().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn huge_penalty_keeps_canonical_graph() {
        let g = instance(11);
        let big_p = dbm_to_watts(40.0);
        let cfg = OptimizerConfig { max_inner_iters: 1, ..OptimizerConfig::new(big_p) };
        let qos = default_qos(&g, &canon(), big_p);
        let ctx = Context { gains: &g, strong: (&canon()).into(), weak: (&canon()).into(), qos, cfg: &cfg };
        let f = RelaxedFactorGraph::from_binary(&canon());
        let w = update_weights(&f, 1e-3);
        let st = solve_f_subproblem(&ctx, [0.25 * big_p, 0.25 * big_p], &f, &f, &w, &w, 1e6).unwrap();
        assert!(max_abs_diff(&st.f_strong, &f) < 1e-6, "{}", st.f_strong.entries());
        assert!(max_abs_diff(&st.f_weak, &f) < 1e-6, "{}", st.f_weak.entries());
    }

    #[test]
    fn f_step_history_is_monotone() {
        let g = instance(12);
        let big_p = dbm_to_watts(40.0);
        let cfg = OptimizerConfig::new(big_p);
        let qos = default_qos(&g, &canon(), big_p);
        let ctx = Context { gains: &g, strong: (&canon()).into(), weak: (&canon()).into(), qos, cfg: &cfg };
        let f = RelaxedFactorGraph::from_binary(&canon());
        let ones = DMatrix::from_element(6, 4, 1.0);
        let st = solve_f_subproblem(&ctx, [0.25 * big_p, 0.25 * big_p], &f, &f, &ones, &ones, 0.01).unwrap();
        assert!(st.history.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{:?}", st.history);
        for j in 0..6 {
            assert!(st.f_strong.row_sum(j) >= 2.0 - 1e-9 && st.f_weak.row_sum(j) >= 2.0 - 1e-9);
        }
    }

    #[test]
    fn repair_examples() {
        let c = canon();
        assert_eq!(round_and_repair(&(&c).into(), 2, 3).unwrap(), c);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let noisy = c.to_matrix().map(|v| if v == 0.0 { rng.random::<f64>() * 0.4 } else { v });
        assert_eq!(round_and_repair(&RelaxedFactorGraph::new(noisy).unwrap(), 2, 3).unwrap(), c);
        let half = RelaxedFactorGraph::filled(6, 4, 0.5).unwrap();
        let r = round_and_repair(&half, 2, 3).unwrap();
        assert!(validate_factor_graph(r.rows(), 2, 3).passed());
        assert!(matches!(round_and_repair(&half, 2, 4), Err(Error::Repair(_))));
        assert!(matches!(round_and_repair(&half, 5, 3), Err(Error::Repair(_))));
    }

    #[test]
    fn ao_runs_and_is_monotone() {
        let g = instance(14);
        let cfg = OptimizerConfig::new(dbm_to_watts(40.0));
        let r = alternating_optimize(&g, &canon(), &canon(), &cfg).unwrap();
        assert!(r.trace.converged);
        assert!(r.trace.is_non_decreasing(1e-8), "{:?}", r.trace.entries);
        assert!(r.weak_rate >= r.qos - 1e-8);
        assert!(r.p_strong * 2.0 <= cfg.max_power_w * (1.0 + 1e-12));
        assert!(r.p_weak * 2.0 <= cfg.max_power_w * (1.0 + 1e-12));
        assert!(validate_factor_graph(r.strong_graph.rows(), 2, 3).passed());
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::new(1.0).validate().is_ok());
        assert!(OptimizerConfig { epsilon: 0.0, ..OptimizerConfig::new(1.0) }.validate().is_err());
        assert!(OptimizerConfig::new(-1.0).validate().is_err());
        assert!(OptimizerConfig { penalty_weight: Some(-1.0), ..OptimizerConfig::new(1.0) }.validate().is_err());
    }
}
