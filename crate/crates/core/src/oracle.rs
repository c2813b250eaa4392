//! Brute-force reference: every regular binary factor-graph pair and a power
//! grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rate::{column_loads, GainTable};
use crate::scma::{binomial, FactorGraph, LexSubsets};

pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1 << 24;

fn check_budget(users: usize, subcarriers: usize, d_f: usize, budget: u128) -> Result<()> {
    let bound = binomial(subcarriers, d_f).checked_pow(users as u32).unwrap_or(u128::MAX);
    if bound > budget {
        return Err(Error::EnumerationBudget { count: bound, budget });
    }
    Ok(())
}

/// All binary `J x K` matrices with row sums `d_f` and column sums `d_v`, in
/// lexicographic order of the per-row supports.
pub fn enumerate_feasible_f(
    users: usize,
    subcarriers: usize,
    d_f: usize,
    d_v: usize,
    budget: u128,
) -> Result<Vec<FactorGraph>> {
    check_budget(users, subcarriers, d_f, budget)?;
    if users == 0 || d_f == 0 || d_f > subcarriers || users * d_f != subcarriers * d_v {
        return Ok(Vec::new());
    }
    let supports: Vec<Vec<usize>> = LexSubsets::new(subcarriers, d_f).collect();
    let mut out = Vec::new();
    let mut cols = vec![0usize; subcarriers];
    let mut chosen = Vec::with_capacity(users);
    dfs(&supports, users, d_v, &mut cols, &mut chosen, &mut out, subcarriers);
    Ok(out)
}

fn dfs(
    supports: &[Vec<usize>],
    users: usize,
    d_v: usize,
    cols: &mut [usize],
    chosen: &mut Vec<usize>,
    out: &mut Vec<FactorGraph>,
    subcarriers: usize,
) {
    let row = chosen.len();
    if row == users {
        if cols.iter().all(|&c| c == d_v) {
            let rows = chosen
                .iter()
                .map(|&s| {
                    let mut r = vec![0u8; subcarriers];
                    for &k in &supports[s] {
                        r[k] = 1;
                    }
                    r
                })
                .collect();
            out.push(FactorGraph::from_rows(rows).expect("enumerated graph is regular"));
        }
        return;
    }
    let remaining = users - row - 1;
    for (si, s) in supports.iter().enumerate() {
        if s.iter().any(|&k| cols[k] >= d_v) {
            continue;
        }
        for &k in s {
            cols[k] += 1;
        }
        // Every column must still be completable by the remaining rows.
        if cols.iter().all(|&c| c + remaining >= d_v) {
            chosen.push(si);
            dfs(supports, users, d_v, cols, chosen, out, subcarriers);
            chosen.pop();
        }
        for &k in s {
            cols[k] -= 1;
        }
    }
}

/// Independent count: walk every tuple of per-row supports and keep those
/// whose column sums all equal `d_v`.
pub fn count_by_filtering(users: usize, subcarriers: usize, d_f: usize, d_v: usize, budget: u128) -> Result<u128> {
    check_budget(users, subcarriers, d_f, budget)?;
    if d_f > subcarriers {
        return Ok(0);
    }
    let supports: Vec<Vec<usize>> = LexSubsets::new(subcarriers, d_f).collect();
    let radix = supports.len();
    let total = (radix as u128).pow(users as u32);
    let mut count = 0u128;
    let mut digits = vec![0usize; users];
    for _ in 0..total {
        let mut cols = vec![0usize; subcarriers];
        for &d in &digits {
            for &k in &supports[d] {
                cols[k] += 1;
            }
        }
        if cols.iter().all(|&c| c == d_v) {
            count += 1;
        }
        for d in digits.iter_mut() {
            *d += 1;
            if *d < radix {
                break;
            }
            *d = 0;
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub max_power_w: f64,
    /// Weak-group sum-rate floor.
    pub qos: f64,
    /// Grid points per power axis, endpoints included.
    pub p_grid: usize,
    pub budget: u128,
}

impl OracleConfig {
    pub fn new(max_power_w: f64, qos: f64) -> Self {
        Self { max_power_w, qos, p_grid: 100, budget: DEFAULT_ENUMERATION_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub p_strong: f64,
    pub p_weak: f64,
    pub strong_graph: FactorGraph,
    pub weak_graph: FactorGraph,
    pub objective: f64,
    /// Number of feasible graphs per group.
    pub strong_candidates: usize,
    pub weak_candidates: usize,
}

fn grid(cap: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![cap];
    }
    (0..n).map(|i| cap * i as f64 / (n - 1) as f64).collect()
}

fn strong_rate(ps: f64, pw: f64, s: &[f64], w: &[f64], noise: f64) -> f64 {
    s.iter().zip(w).map(|(s, w)| (1.0 + ps * s / (pw * w + noise)).log2()).sum()
}

fn weak_rate(pw: f64, w: &[f64], noise: f64) -> f64 {
    w.iter().map(|w| (1.0 + pw * w / noise).log2()).sum()
}

struct Candidates {
    strong: Vec<FactorGraph>,
    weak: Vec<FactorGraph>,
    s_loads: Vec<Vec<f64>>,
    w_loads: Vec<Vec<f64>>,
}

fn candidates(gains: &GainTable, strong: (usize, usize), weak: (usize, usize), budget: u128) -> Result<Candidates> {
    let k = gains.subcarriers();
    let fs = enumerate_feasible_f(gains.strong_users(), k, strong.0, strong.1, budget)?;
    let fw = enumerate_feasible_f(gains.weak_users(), k, weak.0, weak.1, budget)?;
    if fs.is_empty() || fw.is_empty() {
        return Err(Error::Infeasible("no regular factor graph with the requested degrees".into()));
    }
    let s_loads = fs.iter().map(|f| column_loads(&gains.strong, &f.to_matrix())).collect();
    let w_loads = fw.iter().map(|f| column_loads(&gains.weak, &f.to_matrix())).collect();
    Ok(Candidates { strong: fs, weak: fw, s_loads, w_loads })
}

/// `(value, strong index, weak index, p_s, p_w)`; larger value wins, ties go
/// to the earlier pair in enumeration order.
type Best = (f64, usize, usize, f64, f64);

fn better(a: Best, b: Best) -> Best {
    if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
        b
    } else {
        a
    }
}

const NONE: Best = (f64::NEG_INFINITY, usize::MAX, usize::MAX, 0.0, 0.0);

fn finish(c: Candidates, best: Best) -> Result<OracleResult> {
    if best.1 == usize::MAX {
        return Err(Error::Infeasible("no grid point satisfies the weak-group QoS".into()));
    }
    Ok(OracleResult {
        p_strong: best.3,
        p_weak: best.4,
        strong_graph: c.strong[best.1].clone(),
        weak_graph: c.weak[best.2].clone(),
        objective: best.0,
        strong_candidates: c.strong.len(),
        weak_candidates: c.weak.len(),
    })
}

/// Best `(p, F_s, F_w)` over all feasible graph pairs and the power grid.
///
/// The strong rate increases in `p_s` and decreases in `p_w`, so for each
/// pair only the largest `p_s` grid value and the smallest `p_w` grid value
/// meeting the QoS floor need evaluating; [`exhaustive_best_full_grid`]
/// checks the whole grid instead.
pub fn exhaustive_best(
    gains: &GainTable,
    strong: (usize, usize),
    weak: (usize, usize),
    cfg: &OracleConfig,
) -> Result<OracleResult> {
    let c = candidates(gains, strong, weak, cfg.budget)?;
    let noise = gains.noise_var;
    let ps = *grid(cfg.max_power_w / strong.0 as f64, cfg.p_grid).last().unwrap();
    let pw_grid = grid(cfg.max_power_w / weak.0 as f64, cfg.p_grid);
    let pw_choice: Vec<Option<f64>> = c
        .w_loads
        .iter()
        .map(|w| {
            let i = pw_grid.partition_point(|&p| weak_rate(p, w, noise) < cfg.qos);
            pw_grid.get(i).copied()
        })
        .collect();
    let best = (0..c.strong.len())
        .into_par_iter()
        .map(|is| {
            let mut best = NONE;
            for (iw, pw) in pw_choice.iter().enumerate() {
                if let Some(pw) = *pw {
                    let v = strong_rate(ps, pw, &c.s_loads[is], &c.w_loads[iw], noise);
                    best = better(best, (v, is, iw, ps, pw));
                }
            }
            best
        })
        .reduce(|| NONE, better);
    finish(c, best)
}

/// Same search without the monotonicity shortcut: every grid point of every
/// pair. Quadratic in the grid size; for small instances and cross-checks.
pub fn exhaustive_best_full_grid(
    gains: &GainTable,
    strong: (usize, usize),
    weak: (usize, usize),
    cfg: &OracleConfig,
) -> Result<OracleResult> {
    let c = candidates(gains, strong, weak, cfg.budget)?;
    let noise = gains.noise_var;
    let ps_grid = grid(cfg.max_power_w / strong.0 as f64, cfg.p_grid);
    let pw_grid = grid(cfg.max_power_w / weak.0 as f64, cfg.p_grid);
    let mut best = NONE;
    for is in 0..c.strong.len() {
        for iw in 0..c.weak.len() {
            for &pw in &pw_grid {
                if weak_rate(pw, &c.w_loads[iw], noise) < cfg.qos {
                    continue;
                }
                for &ps in &ps_grid {
                    let v = strong_rate(ps, pw, &c.s_loads[is], &c.w_loads[iw], noise);
                    best = better(best, (v, is, iw, ps, pw));
                }
            }
        }
    }
    finish(c, best)
}
