use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{in_pool, trial_rng, Metric, Scheme, SimConfig, SweepRow};
use crate::channel::{dbm_to_watts, draw_channel};
use crate::error::Result;
use crate::optimizer::{alternating_optimize, OptimizerConfig};
use crate::oracle::{exhaustive_best, OracleConfig};
use crate::rate::{sum_rate_scma, sum_rate_strong, sum_rate_weak, Allocation, GainTable};
use crate::scma::{FactorGraph, RelaxedFactorGraph};

/// Both-group total and the strong-group objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdRates {
    pub sum_rate: f64,
    pub objective: f64,
}

impl HdRates {
    fn of(alloc: &Allocation, g: &GainTable) -> Self {
        let objective = sum_rate_strong(alloc, g);
        Self { sum_rate: objective + sum_rate_weak(alloc, g), objective }
    }
}

/// Rates of one channel draw; schemes that were not selected stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateDraw {
    /// Alternating optimization.
    pub hd_opt: Option<HdRates>,
    /// Equal power `P/d_f`, the codebook's own graph in both groups.
    pub hd_eq: Option<HdRates>,
    pub hd_oracle: Option<HdRates>,
    /// Strong group alone as a six-user SCMA system at equal power.
    pub scma6: Option<f64>,
    pub scma12: Option<f64>,
    pub pd_noma12: Option<f64>,
}

impl RateDraw {
    /// `(scheme label, metric, value)` in CSV order.
    pub fn entries(&self) -> Vec<(&'static str, Metric, f64)> {
        let mut out = Vec::new();
        for (label, r) in [("hd-noma", self.hd_opt), ("hd-noma-eq", self.hd_eq), ("hd-noma-oracle", self.hd_oracle)] {
            if let Some(r) = r {
                out.push((label, Metric::SumRate, r.sum_rate));
                out.push((label, Metric::Objective, r.objective));
            }
        }
        for (label, r) in [("scma6", self.scma6), ("scma12", self.scma12), ("pd-noma12", self.pd_noma12)] {
            if let Some(r) = r {
                out.push((label, Metric::SumRate, r));
            }
        }
        out
    }
}

fn stacked_gains(g: &GainTable) -> DMatrix<f64> {
    let (js, k) = g.strong.shape();
    DMatrix::from_fn(js + g.weak.nrows(), k, |j, kk| if j < js { g.strong[(j, kk)] } else { g.weak[(j - js, kk)] })
}

/// All sum-rate figures for channel draw `trial` at `power_dbm`.
pub fn sumrate_trial(cfg: &SimConfig, power_dbm: f64, trial: usize) -> Result<RateDraw> {
    let graph: &FactorGraph = cfg.codebook.graph();
    let (j, k, d_f) = (graph.users(), graph.subcarriers(), graph.d_f());
    let big_p = dbm_to_watts(power_dbm);
    let p_eq = big_p / d_f as f64;
    let mut rng = trial_rng(cfg.seed, trial);
    let g = GainTable::from_channel(&draw_channel(&mut rng, &cfg.budget, j, j, k)?);
    let f = RelaxedFactorGraph::from(graph);
    let mut out = RateDraw::default();

    for scheme in &cfg.schemes {
        match scheme {
            Scheme::HdNoma => {
                out.hd_eq = Some(HdRates::of(&Allocation::new(p_eq, p_eq, f.clone(), f.clone())?, &g));
                let opt_cfg = OptimizerConfig { max_power_w: big_p, ..cfg.optimizer };
                let ao = alternating_optimize(&g, graph, graph, &opt_cfg)?;
                out.hd_opt = Some(HdRates { sum_rate: ao.objective + ao.weak_rate, objective: ao.objective });
                if cfg.oracle {
                    let degrees = (d_f, graph.d_v());
                    let ocfg = OracleConfig { p_grid: cfg.oracle_p_grid, budget: cfg.oracle_budget, ..OracleConfig::new(big_p, ao.qos) };
                    let o = exhaustive_best(&g, degrees, degrees, &ocfg)?;
                    let alloc = Allocation::new(
                        o.p_strong,
                        o.p_weak,
                        RelaxedFactorGraph::from(&o.strong_graph),
                        RelaxedFactorGraph::from(&o.weak_graph),
                    )?;
                    out.hd_oracle = Some(HdRates::of(&alloc, &g));
                }
            }
            Scheme::Scma6 => out.scma6 = Some(sum_rate_scma(p_eq, &f, &g.strong, g.noise_var)),
            Scheme::Scma12 => {
                let stacked = RelaxedFactorGraph::from(&graph.stack(graph)?);
                out.scma12 = Some(sum_rate_scma(p_eq, &stacked, &stacked_gains(&g), g.noise_var));
            }
            Scheme::PdNoma12 => {
                // every user on every subcarrier, the budget spread evenly
                let ones = RelaxedFactorGraph::filled(2 * j, k, 1.0)?;
                out.pd_noma12 = Some(sum_rate_scma(big_p / k as f64, &ones, &stacked_gains(&g), g.noise_var));
            }
        }
    }
    Ok(out)
}

/// Mean rates over `cfg.trials` draws at each power point.
pub fn run_sumrate_sweep(cfg: &SimConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for power in cfg.sweep.points() {
        let draws: Vec<RateDraw> = in_pool(cfg.workers, || {
            (0..cfg.trials).into_par_iter().map(|t| sumrate_trial(cfg, power, t)).collect::<Result<Vec<_>>>()
        })??;
        let mut sums: Vec<(&'static str, Metric, f64)> = draws[0].entries().iter().map(|&(s, m, _)| (s, m, 0.0)).collect();
        for d in &draws {
            for (acc, (_, _, v)) in sums.iter_mut().zip(d.entries()) {
                acc.2 += v;
            }
        }
        rows.extend(sums.into_iter().map(|(scheme, metric, total)| SweepRow {
            scheme: scheme.into(),
            power_dbm: power,
            metric,
            value: total / cfg.trials as f64,
            trials: cfg.trials,
            seed: cfg.seed,
        }));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PowerSweep;

    #[test]
    fn equal_power_hd_total_matches_twelve_user_scma() {
        // SR^s + SR^w telescopes to the stacked single-group rate
        let cfg = SimConfig::default();
        let d = sumrate_trial(&SimConfig { schemes: vec![Scheme::Scma12, Scheme::HdNoma], ..cfg }, 34.0, 3).unwrap();
        let (eq, s12) = (d.hd_eq.unwrap().sum_rate, d.scma12.unwrap());
        assert!((eq - s12).abs() <= 1e-12 * s12);
        assert!(d.scma6.is_none() && d.hd_oracle.is_none());
    }

    #[test]
    fn rows_per_point() {
        let cfg = SimConfig { trials: 3, sweep: PowerSweep::single(30.0), ..SimConfig::default() };
        let rows = run_sumrate_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4 + 3);
        assert!(rows.iter().all(|r| r.value.is_finite() && r.value > 0.0));
    }
}
