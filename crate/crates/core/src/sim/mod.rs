//! Monte Carlo experiment drivers, baselines and CSV output.
//!
//! Every channel draw gets its own ChaCha8 stream keyed by the master seed and
//! the draw index, and per-draw results are summed in draw order, so output
//! does not depend on the worker count. Draw `t` sees the same channel at
//! every power point.

pub mod baselines;
mod ber;
mod config;
mod converge;
mod sumrate;

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use ber::{ber_trial, run_ber_experiment, BerCounts};
pub use config::{parse_config_text, PowerSweep, Scheme, SimConfig};
pub use converge::{run_convergence_trace, trace_rows_to_csv, TraceRow, TRACE_HEADER};
pub use sumrate::{run_sumrate_sweep, sumrate_trial, HdRates, RateDraw};

pub const CSV_HEADER: &str = "scheme,power_dbm,metric,value,trials,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    BerStrong,
    BerWeak,
    BerAll,
    SumRate,
    Objective,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::BerStrong => "ber_strong",
            Metric::BerWeak => "ber_weak",
            Metric::BerAll => "ber_all",
            Metric::SumRate => "sum_rate",
            Metric::Objective => "objective",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheme: String,
    pub power_dbm: f64,
    pub metric: Metric,
    pub value: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.scheme,
            format_value(self.power_dbm),
            self.metric,
            format_value(self.value),
            self.trials,
            self.seed
        )
    }
}

/// Rounds to 10 significant digits and prints the shortest text that reads
/// back to the rounded value.
pub fn format_value(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let r: f64 = format!("{v:.9e}").parse().expect("formatted float parses");
    if (1e-6..1e15).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn write_rows<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    w.write_all(rows_to_csv(rows).as_bytes())
        .map_err(|source| Error::Io { path: "<output>".into(), source })
}

/// Independent stream for channel draw `trial`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub(crate) fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(30.0), "30");
        assert_eq!(format_value(1.0 / 3.0), "0.3333333333");
        assert_eq!(format_value(36.33212345678), "36.33212346");
        assert_eq!(format_value(2.5e-7), "2.5e-7");
        assert_eq!(format_value(-1234.5), "-1234.5");
    }

    #[test]
    fn csv_layout() {
        let row = SweepRow { scheme: "scma6".into(), power_dbm: 30.0, metric: Metric::BerAll, value: 0.125, trials: 10, seed: 3 };
        assert_eq!(rows_to_csv(&[row]), "scheme,power_dbm,metric,value,trials,seed\nscma6,30,ber_all,0.125,10,3\n");
    }

    #[test]
    fn trial_streams_differ_and_repeat() {
        let a: u64 = trial_rng(1, 0).random();
        let b: u64 = trial_rng(1, 1).random();
        let c: u64 = trial_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
