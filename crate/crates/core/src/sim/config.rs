use std::fmt;
use std::str::FromStr;

use crate::channel::LinkBudget;
use crate::error::{Error, Result};
use crate::mpa::MpaConfig;
use crate::optimizer::OptimizerConfig;
use crate::oracle::DEFAULT_ENUMERATION_BUDGET;
use crate::scma::CodebookSet;

/// Multiple-access scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    HdNoma,
    Scma6,
    Scma12,
    PdNoma12,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::HdNoma, Scheme::Scma6, Scheme::Scma12, Scheme::PdNoma12];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::HdNoma => "hd-noma",
            Scheme::Scma6 => "scma6",
            Scheme::Scma12 => "scma12",
            Scheme::PdNoma12 => "pd-noma12",
        }
    }

    /// Parses a comma-separated list; `all` selects every scheme. Duplicates
    /// collapse and the result is in canonical order.
    pub fn parse_list(s: &str) -> Result<Vec<Scheme>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(Scheme::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("empty scheme list".into()));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}` (hd-noma|scma6|scma12|pd-noma12|all)")))
    }
}

/// Inclusive power grid in dBm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSweep {
    pub min_dbm: f64,
    pub max_dbm: f64,
    pub step_db: f64,
}

impl PowerSweep {
    pub fn single(dbm: f64) -> Self {
        Self { min_dbm: dbm, max_dbm: dbm, step_db: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_dbm.is_finite() && self.max_dbm.is_finite()) {
            return Err(Error::Config("power range must be finite".into()));
        }
        if !(self.step_db > 0.0) || !self.step_db.is_finite() {
            return Err(Error::Config(format!("power step must be positive, got {}", self.step_db)));
        }
        if self.min_dbm > self.max_dbm {
            return Err(Error::Config(format!("power min {} > max {}", self.min_dbm, self.max_dbm)));
        }
        Ok(())
    }

    /// `min + i * step` up to `max`, with a little slack for round-off.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.max_dbm - self.min_dbm) / self.step_db + 1e-9).floor() as usize;
        (0..=n).map(|i| self.min_dbm + i as f64 * self.step_db).collect()
    }
}

/// Everything an experiment needs.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub schemes: Vec<Scheme>,
    pub sweep: PowerSweep,
    /// Channel draws per power point.
    pub trials: usize,
    pub seed: u64,
    /// Codewords sent by every user per channel draw (BER only).
    pub words_per_trial: usize,
    pub noise: bool,
    pub budget: LinkBudget,
    /// Per-group codebook; the twelve-user SCMA baseline builds its own from
    /// the stacked graph.
    pub codebook: CodebookSet,
    pub mpa: MpaConfig,
    pub genie_sic: bool,
    pub ignore_weak_interference: bool,
    /// Allocator settings; `max_power_w` is overwritten at every power point.
    pub optimizer: OptimizerConfig,
    pub oracle: bool,
    pub oracle_p_grid: usize,
    pub oracle_budget: u128,
    /// Rayon worker count; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let budget = LinkBudget::default();
        Self {
            schemes: Scheme::ALL.to_vec(),
            sweep: PowerSweep { min_dbm: 30.0, max_dbm: 40.0, step_db: 2.0 },
            trials: 2000,
            seed: 1,
            words_per_trial: 1,
            noise: true,
            budget,
            codebook: CodebookSet::default_six_user(),
            mpa: MpaConfig::default(),
            genie_sic: false,
            ignore_weak_interference: false,
            optimizer: OptimizerConfig::new(budget.max_power_w),
            oracle: false,
            oracle_p_grid: 100,
            oracle_budget: DEFAULT_ENUMERATION_BUDGET,
            workers: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.words_per_trial < 1 {
            return Err(Error::Config("words per trial must be >= 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no scheme selected".into()));
        }
        if self.mpa.iterations == 0 {
            return Err(Error::Config("MPA needs at least one iteration".into()));
        }
        if self.oracle_p_grid < 1 {
            return Err(Error::Config("oracle power grid needs at least one point".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("worker count must be >= 1".into()));
        }
        if self.codebook.subcarriers() < 1 {
            return Err(Error::Config("codebook has no subcarriers".into()));
        }
        self.sweep.validate()?;
        self.budget.validate()?;
        self.optimizer.validate()
    }

    pub fn bits_per_word(&self) -> usize {
        self.codebook.bits_per_word()
    }

    /// Bits sent by one group in one channel draw.
    pub fn group_bits_per_trial(&self) -> usize {
        self.words_per_trial * self.codebook.users() * self.bits_per_word()
    }
}

/// Reads a flat `key = value` document. Keys are CLI flag names without the
/// leading dashes; `#` starts a comment. Returns the pairs in file order.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Config(format!("config line {}: bad key `{key}`", i + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_lists() {
        assert_eq!(Scheme::parse_list("all").unwrap(), Scheme::ALL.to_vec());
        assert_eq!(Scheme::parse_list("scma12, hd-noma,scma12").unwrap(), vec![Scheme::HdNoma, Scheme::Scma12]);
        assert!(Scheme::parse_list("ofdma").is_err());
        assert!(Scheme::parse_list(" , ").is_err());
    }

    #[test]
    fn power_points_inclusive() {
        let s = PowerSweep { min_dbm: 30.0, max_dbm: 40.0, step_db: 2.0 };
        assert_eq!(s.points(), vec![30.0, 32.0, 34.0, 36.0, 38.0, 40.0]);
        let s = PowerSweep { min_dbm: 0.0, max_dbm: 0.3, step_db: 0.1 };
        assert_eq!(s.points().len(), 4);
        assert_eq!(PowerSweep::single(35.0).points(), vec![35.0]);
        assert!(PowerSweep { min_dbm: 0.0, max_dbm: 1.0, step_db: 0.0 }.validate().is_err());
        assert!(PowerSweep { min_dbm: 2.0, max_dbm: 1.0, step_db: 1.0 }.validate().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { trials: 0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { workers: Some(0), ..SimConfig::default() }.validate().is_err());
        assert_eq!(SimConfig::default().group_bits_per_trial(), 12);
    }

    #[test]
    fn config_text() {
        let kv = parse_config_text("# sweep\ntrials = 10\n--seed=7 # inline\n\nscheme = hd-noma,scma6\n").unwrap();
        assert_eq!(
            kv,
            vec![
                ("trials".into(), "10".into()),
                ("seed".into(), "7".into()),
                ("scheme".into(), "hd-noma,scma6".into())
            ]
        );
        assert!(parse_config_text("trials 10").is_err());
        assert!(parse_config_text("bad key = 1").is_err());
    }
}
