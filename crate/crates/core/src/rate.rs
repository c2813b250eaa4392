//! Gaussian-signalling sum rates of the two groups and their
//! difference-of-concave splits.
//!
//! Rates are in bits/s/Hz summed over subcarriers. With
//! `S_k = sum_i |h^s_{i,k}|^2 f^s_{i,k}` and `W_k = sum_j |h^w_{j,k}|^2 f^w_{j,k}`:
//!
//! * strong: `sum_k log2(1 + p_s S_k / (p_w W_k + sigma^2))`
//! * weak (after SIC): `sum_k log2(1 + p_w W_k / sigma^2)`
//! * `u = sum_k log2(p_s S_k + p_w W_k + sigma^2)`, `v = sum_k log2(p_w W_k + sigma^2)`,
//!   so that strong = `u - v` with both parts concave.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::scma::RelaxedFactorGraph;

/// Channel power gains `|h|^2` of both groups plus the noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub strong: DMatrix<f64>,
    pub weak: DMatrix<f64>,
    pub noise_var: f64,
}

impl GainTable {
    pub fn from_channel(ch: &ChannelState) -> Self {
        let k = ch.subcarriers();
        let mat = |rows: Vec<Vec<f64>>| DMatrix::from_fn(rows.len(), k, |j, kk| rows[j][kk]);
        Self { strong: mat(ch.strong_power_gains()), weak: mat(ch.weak_power_gains()), noise_var: ch.noise_variance }
    }

    pub fn subcarriers(&self) -> usize {
        self.strong.ncols().max(self.weak.ncols())
    }

    pub fn strong_users(&self) -> usize {
        self.strong.nrows()
    }

    pub fn weak_users(&self) -> usize {
        self.weak.nrows()
    }
}

/// Group powers (watts per occupied subcarrier) and assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub p_strong: f64,
    pub p_weak: f64,
    pub f_strong: RelaxedFactorGraph,
    pub f_weak: RelaxedFactorGraph,
}

impl Allocation {
    pub fn new(p_strong: f64, p_weak: f64, f_strong: RelaxedFactorGraph, f_weak: RelaxedFactorGraph) -> Result<Self> {
        if !(p_strong >= 0.0) || !(p_weak >= 0.0) {
            return Err(Error::Domain(format!("powers must be non-negative (p_s={p_strong}, p_w={p_weak})")));
        }
        Ok(Self { p_strong, p_weak, f_strong, f_weak })
    }

    pub fn with_powers(&self, p_strong: f64, p_weak: f64) -> Self {
        Self { p_strong, p_weak, ..self.clone() }
    }
}

/// `sum_j |h_{j,k}|^2 f_{j,k}` for every subcarrier.
pub fn column_loads(gains: &DMatrix<f64>, f: &DMatrix<f64>) -> Vec<f64> {
    (0..f.ncols()).map(|k| (0..f.nrows()).map(|j| gains[(j, k)] * f[(j, k)]).sum()).collect()
}

fn check_shape(gains: &DMatrix<f64>, f: &RelaxedFactorGraph) {
    assert_eq!(gains.shape(), f.entries().shape(), "gain and assignment matrices disagree");
}

/// Single-group SCMA sum rate with a common per-user power.
pub fn sum_rate_scma(power: f64, f: &RelaxedFactorGraph, gains: &DMatrix<f64>, noise_var: f64) -> f64 {
    check_shape(gains, f);
    column_loads(gains, f.entries()).iter().map(|l| (1.0 + power * l / noise_var).log2()).sum()
}

pub fn sum_rate_strong(alloc: &Allocation, g: &GainTable) -> f64 {
    check_shape(&g.strong, &alloc.f_strong);
    check_shape(&g.weak, &alloc.f_weak);
    let s = column_loads(&g.strong, alloc.f_strong.entries());
    let w = column_loads(&g.weak, alloc.f_weak.entries());
    s.iter()
        .zip(&w)
        .map(|(s, w)| (1.0 + alloc.p_strong * s / (alloc.p_weak * w + g.noise_var)).log2())
        .sum()
}

pub fn sum_rate_weak(alloc: &Allocation, g: &GainTable) -> f64 {
    sum_rate_scma(alloc.p_weak, &alloc.f_weak, &g.weak, g.noise_var)
}

/// Power-block split `u1(p) - v1(p)` at the allocation's assignments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    pub u: f64,
    pub v: f64,
    /// `[dv/dp_s, dv/dp_w]`; the first entry is identically zero.
    pub grad_v: [f64; 2],
}

pub fn dc_parts_p(p: [f64; 2], alloc: &Allocation, g: &GainTable) -> Result<PowerSplit> {
    if !(p[0] >= 0.0 && p[1] >= 0.0) {
        return Err(Error::Domain(format!("powers must be non-negative: {p:?}")));
    }
    let s = column_loads(&g.strong, alloc.f_strong.entries());
    let w = column_loads(&g.weak, alloc.f_weak.entries());
    let mut out = PowerSplit { u: 0.0, v: 0.0, grad_v: [0.0, 0.0] };
    for (s, w) in s.iter().zip(&w) {
        let interf = p[1] * w + g.noise_var;
        out.u += (p[0] * s + interf).log2();
        out.v += interf.log2();
        out.grad_v[1] += w / (LN_2 * interf);
    }
    Ok(out)
}

/// Assignment-block split `u2(F) - v2(F)` at the allocation's powers.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentSplit {
    pub u: f64,
    pub v: f64,
    /// `dv/df^s`, identically zero.
    pub grad_v_strong: DMatrix<f64>,
    /// `dv/df^w_{j,k} = p_w |h^w_{j,k}|^2 / (ln2 (p_w W_k + sigma^2))`.
    pub grad_v_weak: DMatrix<f64>,
}

pub fn dc_parts_f(
    f_strong: &RelaxedFactorGraph,
    f_weak: &RelaxedFactorGraph,
    p_strong: f64,
    p_weak: f64,
    g: &GainTable,
) -> AssignmentSplit {
    check_shape(&g.strong, f_strong);
    check_shape(&g.weak, f_weak);
    let s = column_loads(&g.strong, f_strong.entries());
    let w = column_loads(&g.weak, f_weak.entries());
    let mut u = 0.0;
    let mut v = 0.0;
    let mut denom = Vec::with_capacity(s.len());
    for (s, w) in s.iter().zip(&w) {
        let interf = p_weak * w + g.noise_var;
        u += (p_strong * s + interf).log2();
        v += interf.log2();
        denom.push(LN_2 * interf);
    }
    let grad_v_weak = DMatrix::from_fn(g.weak.nrows(), g.weak.ncols(), |j, k| p_weak * g.weak[(j, k)] / denom[k]);
    AssignmentSplit { u, v, grad_v_strong: DMatrix::zeros(g.strong.nrows(), g.strong.ncols()), grad_v_weak }
}
