use rayon::prelude::*;

use super::{format_value, in_pool, trial_rng, Metric, SimConfig};
use crate::channel::{dbm_to_watts, draw_channel};
use crate::error::Result;
use crate::optimizer::{alternating_optimize, OptimizerConfig, OptimizerTrace, Stage};
use crate::rate::GainTable;

/// The sweep header plus the draw index and the optimizer's own trace columns.
pub const TRACE_HEADER: &str = "scheme,power_dbm,metric,value,trials,seed,draw,iter,stage";

/// One objective sample of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub power_dbm: f64,
    pub draw: usize,
    pub iter: usize,
    pub stage: Stage,
    pub objective: f64,
    pub trials: usize,
    pub seed: u64,
}

impl TraceRow {
    pub fn csv_line(&self) -> String {
        format!(
            "hd-noma,{},{},{},{},{},{},{},{}",
            format_value(self.power_dbm),
            Metric::Objective,
            format_value(self.objective),
            self.trials,
            self.seed,
            self.draw,
            self.iter,
            self.stage
        )
    }
}

pub fn trace_rows_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Runs the allocator on draws `0..trials` at every power point and returns
/// the traces, power-major then draw order.
pub fn run_convergence_trace(cfg: &SimConfig) -> Result<Vec<(f64, usize, OptimizerTrace)>> {
    cfg.validate()?;
    let graph = cfg.codebook.graph();
    let (j, k) = (graph.users(), graph.subcarriers());
    let mut out = Vec::new();
    for power in cfg.sweep.points() {
        let opt_cfg = OptimizerConfig { max_power_w: dbm_to_watts(power), ..cfg.optimizer };
        let traces: Vec<OptimizerTrace> = in_pool(cfg.workers, || {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(cfg.seed, t);
                    let g = GainTable::from_channel(&draw_channel(&mut rng, &cfg.budget, j, j, k)?);
                    Ok(alternating_optimize(&g, graph, graph, &opt_cfg)?.trace)
                })
                .collect::<Result<Vec<_>>>()
        })??;
        out.extend(traces.into_iter().enumerate().map(|(d, tr)| (power, d, tr)));
    }
    Ok(out)
}

impl SimConfig {
    /// Flattens [`run_convergence_trace`] output into CSV rows.
    pub fn trace_rows(&self, traces: &[(f64, usize, OptimizerTrace)]) -> Vec<TraceRow> {
        traces
            .iter()
            .flat_map(|(power, draw, tr)| {
                tr.entries.iter().map(move |e| TraceRow {
                    power_dbm: *power,
                    draw: *draw,
                    iter: e.iter,
                    stage: e.stage,
                    objective: e.objective,
                    trials: self.trials,
                    seed: self.seed,
                })
            })
            .collect()
    }
}
