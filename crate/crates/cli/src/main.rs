//! `hdnoma ber|sumrate|converge`: runs one experiment and writes CSV.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use hdnoma::channel::LinkBudget;
use hdnoma::scma::load_codebook;
use hdnoma::sim::{
    parse_config_text, rows_to_csv, run_ber_experiment, run_convergence_trace, run_sumrate_sweep, trace_rows_to_csv,
    PowerSweep, Scheme, SimConfig,
};
use hdnoma::Error;

#[derive(Parser, Debug)]
#[command(name = "hdnoma", version, about = "Hybrid power/code-domain NOMA uplink experiments", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Uncoded BER against transmit power.
    Ber(Opts),
    /// Mean sum rate against transmit power.
    Sumrate(Opts),
    /// Allocator objective traces.
    Converge(Opts),
}

#[derive(Args, Debug)]
struct Opts {
    /// Flat `key = value` file of these same flags; command-line flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated: hd-noma, scma6, scma12, pd-noma12 or all.
    #[arg(long)]
    scheme: Option<String>,
    /// Single power point; overrides the range flags.
    #[arg(long)]
    power_dbm: Option<f64>,
    #[arg(long)]
    power_dbm_min: Option<f64>,
    #[arg(long)]
    power_dbm_max: Option<f64>,
    #[arg(long)]
    power_dbm_step: Option<f64>,
    /// Channel draws per power point.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Codewords per user per channel draw (ber).
    #[arg(long)]
    words_per_trial: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add the exhaustive-search reference to the sum-rate sweep.
    #[arg(long)]
    oracle: bool,
    /// Power grid size of the exhaustive search.
    #[arg(long)]
    p_grid: Option<usize>,
    /// Largest number of candidate graphs the exhaustive search may visit.
    #[arg(long)]
    enum_budget: Option<u128>,
    /// Drop receiver noise (decoders still assume it).
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    bw_hz: Option<f64>,
    #[arg(long)]
    d_strong_km: Option<f64>,
    #[arg(long)]
    d_weak_km: Option<f64>,
    /// Codebook file; the embedded six-user codebook when absent.
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[arg(long)]
    mpa_iters: Option<usize>,
    /// sumprod or maxlog.
    #[arg(long)]
    mpa_variant: Option<String>,
    /// Cancel the true strong codewords before weak-group detection.
    #[arg(long)]
    genie_sic: bool,
    /// Strong-group detection ignores the weak group's interference power.
    #[arg(long)]
    ignore_weak_interference: bool,
    /// Reweighted-l1 penalty weight.
    #[arg(long)]
    penalty: Option<f64>,
    /// Weak-group sum-rate floor.
    #[arg(long)]
    qos_bps_hz: Option<f64>,
    /// Relative change that ends the outer loop.
    #[arg(long)]
    tol: Option<f64>,
    /// Outer iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Reweighting offset.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Worker threads; the result does not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

enum Kind {
    Ber,
    Sumrate,
    Converge,
}

fn build_config(kind: &Kind, o: &Opts) -> Result<SimConfig, Error> {
    let mut cfg = SimConfig::default();
    let (trials, step) = match kind {
        Kind::Ber => (2000, 2.0),
        Kind::Sumrate => (50, 2.0),
        Kind::Converge => (3, 5.0),
    };
    cfg.trials = o.trials.unwrap_or(trials);
    cfg.sweep = match o.power_dbm {
        Some(p) => PowerSweep::single(p),
        None => PowerSweep {
            min_dbm: o.power_dbm_min.unwrap_or(30.0),
            max_dbm: o.power_dbm_max.unwrap_or(40.0),
            step_db: o.power_dbm_step.unwrap_or(step),
        },
    };
    if let Some(s) = &o.scheme {
        cfg.schemes = Scheme::parse_list(s)?;
    }
    cfg.seed = o.seed.unwrap_or(cfg.seed);
    cfg.words_per_trial = o.words_per_trial.unwrap_or(cfg.words_per_trial);
    cfg.noise = !o.no_noise;
    cfg.budget = LinkBudget {
        bandwidth_hz: o.bw_hz.unwrap_or(cfg.budget.bandwidth_hz),
        strong_distance_km: o.d_strong_km.unwrap_or(cfg.budget.strong_distance_km),
        weak_distance_km: o.d_weak_km.unwrap_or(cfg.budget.weak_distance_km),
        max_power_w: hdnoma::channel::dbm_to_watts(cfg.sweep.max_dbm),
    };
    cfg.codebook = load_codebook(o.codebook.as_deref())?;
    cfg.mpa.iterations = o.mpa_iters.unwrap_or(cfg.mpa.iterations);
    if let Some(v) = &o.mpa_variant {
        cfg.mpa.variant = v.parse()?;
    }
    cfg.genie_sic = o.genie_sic;
    cfg.ignore_weak_interference = o.ignore_weak_interference;
    cfg.optimizer.max_power_w = cfg.budget.max_power_w;
    cfg.optimizer.penalty_weight = o.penalty.or(cfg.optimizer.penalty_weight);
    cfg.optimizer.qos_threshold = o.qos_bps_hz.or(cfg.optimizer.qos_threshold);
    cfg.optimizer.outer_tol = o.tol.unwrap_or(cfg.optimizer.outer_tol);
    cfg.optimizer.max_outer_iters = o.max_iters.unwrap_or(cfg.optimizer.max_outer_iters);
    cfg.optimizer.epsilon = o.epsilon.unwrap_or(cfg.optimizer.epsilon);
    cfg.oracle = o.oracle;
    cfg.oracle_p_grid = o.p_grid.unwrap_or(cfg.oracle_p_grid);
    cfg.oracle_budget = o.enum_budget.unwrap_or(cfg.oracle_budget);
    cfg.workers = o.workers;
    cfg.validate()?;
    Ok(cfg)
}

fn run(kind: Kind, o: &Opts) -> Result<(), Error> {
    let cfg = build_config(&kind, o)?;
    let csv = match kind {
        Kind::Ber => rows_to_csv(&run_ber_experiment(&cfg)?),
        Kind::Sumrate => rows_to_csv(&run_sumrate_sweep(&cfg)?),
        Kind::Converge => trace_rows_to_csv(&cfg.trace_rows(&run_convergence_trace(&cfg)?)),
    };
    match &o.out {
        Some(path) => fs::write(path, csv).map_err(|source| Error::Io { path: path.clone(), source }),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => 3,
        Error::Solver { .. } | Error::Repair(_) => 1,
        _ => 2,
    }
}

/// Splices the config file's flags in right after the subcommand so that
/// later command-line occurrences override them.
fn with_config_args(args: Vec<OsString>, path: &PathBuf) -> Result<Vec<OsString>, Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
    let sub = args.get(1).and_then(|s| s.to_str()).unwrap_or_default().to_string();
    let cmd = Cli::command();
    let sub_cmd = cmd
        .find_subcommand(&sub)
        .ok_or_else(|| Error::Config(format!("unknown subcommand `{sub}`")))?;
    let mut spliced = Vec::new();
    for (key, value) in parse_config_text(&text)? {
        if key == "config" {
            return Err(Error::Config("config files cannot include other config files".into()));
        }
        let arg = sub_cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" | "yes" | "1" => spliced.push(OsString::from(format!("--{key}"))),
                "false" | "no" | "0" => {}
                other => return Err(Error::Config(format!("config key `{key}` expects true/false, got `{other}`"))),
            }
        } else {
            spliced.push(OsString::from(format!("--{key}")));
            spliced.push(OsString::from(value));
        }
    }
    let mut out = args[..2].to_vec();
    out.extend(spliced);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

fn parse(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(args)?;
    Cli::from_arg_matches(&matches)
}

fn opts(cli: &Cli) -> &Opts {
    match &cli.cmd {
        Cmd::Ber(o) | Cmd::Sumrate(o) | Cmd::Converge(o) => o,
    }
}

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let mut cli = parse(args.clone()).unwrap_or_else(|e| e.exit());
    if let Some(path) = opts(&cli).config.clone() {
        match with_config_args(args, &path) {
            Ok(spliced) => cli = parse(spliced).unwrap_or_else(|e| e.exit()),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit_code(&e));
            }
        }
    }
    let result = match &cli.cmd {
        Cmd::Ber(o) => run(Kind::Ber, o),
        Cmd::Sumrate(o) => run(Kind::Sumrate, o),
        Cmd::Converge(o) => run(Kind::Converge, o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
