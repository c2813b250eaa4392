use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::baselines::{baseline_pd_noma_decode, baseline_scma_decode, pd_noma_codeword, scma12_codebooks, superpose};
use super::{in_pool, trial_rng, Metric, Scheme, SimConfig, SweepRow};
use crate::channel::{complex_gaussian, dbm_to_watts, draw_channel};
use crate::error::Result;
use crate::hd_receiver::{decode_hd, HdOptions};
use crate::scma::CodebookSet;

/// Bit errors of one scheme, split by group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BerCounts {
    pub strong_errors: u64,
    pub weak_errors: u64,
}

struct Setup {
    scma12: Option<CodebookSet>,
}

impl Setup {
    fn new(cfg: &SimConfig) -> Result<Self> {
        let scma12 = if cfg.schemes.contains(&Scheme::Scma12) {
            Some(scma12_codebooks(cfg.codebook.graph(), cfg.codebook.alphabet())?)
        } else {
            None
        };
        Ok(Self { scma12 })
    }
}

fn bit_errors(sent: &[usize], decided: &[usize]) -> u64 {
    sent.iter().zip(decided).map(|(a, b)| u64::from((a ^ b).count_ones())).sum()
}

fn encode_all(set: &CodebookSet, words: &[usize]) -> Result<Vec<Vec<Complex64>>> {
    words.iter().enumerate().map(|(j, &w)| set.encode(j, w).map(<[_]>::to_vec)).collect()
}

/// Error counts of every configured scheme (in `cfg.schemes` order) for one
/// channel draw at `power_dbm`. Every user transmits at `P / d_f` per
/// occupied subcarrier.
pub fn ber_trial(cfg: &SimConfig, power_dbm: f64, trial: usize) -> Result<Vec<BerCounts>> {
    trial_counts(cfg, &Setup::new(cfg)?, power_dbm, trial)
}

fn trial_counts(cfg: &SimConfig, setup: &Setup, power_dbm: f64, trial: usize) -> Result<Vec<BerCounts>> {
    let book = &cfg.codebook;
    let (j, k, m) = (book.users(), book.subcarriers(), book.alphabet());
    let p = dbm_to_watts(power_dbm) / book.graph().d_f() as f64;
    let mut rng = trial_rng(cfg.seed, trial);
    let ch = draw_channel(&mut rng, &cfg.budget, j, j, k)?;
    let nv = ch.noise_variance;
    let all_channels: Vec<Vec<Complex64>> = ch.strong.iter().chain(&ch.weak).cloned().collect();
    let mut counts = vec![BerCounts::default(); cfg.schemes.len()];

    for _ in 0..cfg.words_per_trial {
        let words: Vec<usize> = (0..2 * j).map(|_| rng.random_range(0..m)).collect();
        let mut noise = || -> Vec<Complex64> {
            let n: Vec<Complex64> = (0..k).map(|_| complex_gaussian(&mut rng, nv)).collect();
            if cfg.noise {
                n
            } else {
                vec![Complex64::new(0.0, 0.0); k]
            }
        };
        let (n1, n2) = (noise(), noise());
        let (ws, ww) = words.split_at(j);

        for (scheme, c) in cfg.schemes.iter().zip(counts.iter_mut()) {
            let decided: Vec<usize> = match scheme {
                Scheme::HdNoma => {
                    let mut y = n1.clone();
                    superpose(&mut y, &encode_all(book, ws)?, &ch.strong, p);
                    superpose(&mut y, &encode_all(book, ww)?, &ch.weak, p);
                    let opts = HdOptions {
                        ignore_weak_interference: cfg.ignore_weak_interference,
                        genie_strong_words: cfg.genie_sic.then_some(ws),
                    };
                    decode_hd(&y, &ch, book, Some(book), p, p, &cfg.mpa, &opts)?.decisions()
                }
                Scheme::Scma6 => {
                    let mut ys = n1.clone();
                    superpose(&mut ys, &encode_all(book, ws)?, &ch.strong, p);
                    let mut yw = n2.clone();
                    superpose(&mut yw, &encode_all(book, ww)?, &ch.weak, p);
                    let mut d = baseline_scma_decode(&ys, book, &ch.strong, p, nv, &cfg.mpa)?.decisions;
                    d.extend(baseline_scma_decode(&yw, book, &ch.weak, p, nv, &cfg.mpa)?.decisions);
                    d
                }
                Scheme::Scma12 => {
                    let set = setup.scma12.as_ref().expect("built when scma12 is selected");
                    let mut y = n1.clone();
                    superpose(&mut y, &encode_all(set, &words)?, &all_channels, p);
                    baseline_scma_decode(&y, set, &all_channels, p, nv, &cfg.mpa)?.decisions
                }
                Scheme::PdNoma12 => {
                    let cws: Vec<Vec<Complex64>> = words.iter().map(|&w| pd_noma_codeword(w, m, k)).collect();
                    let mut y = n1.clone();
                    superpose(&mut y, &cws, &all_channels, p);
                    baseline_pd_noma_decode(&y, &all_channels, p, m)?
                }
            };
            c.strong_errors += bit_errors(ws, &decided[..j]);
            c.weak_errors += bit_errors(ww, &decided[j..]);
        }
    }
    Ok(counts)
}

/// Uncoded BER against transmit power. Rows per scheme and power:
/// `ber_strong`, `ber_weak`, `ber_all`, each errors / bits.
pub fn run_ber_experiment(cfg: &SimConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    let group_bits = (cfg.trials * cfg.group_bits_per_trial()) as f64;
    let mut rows = Vec::new();
    for power in cfg.sweep.points() {
        let per_trial: Vec<Vec<BerCounts>> = in_pool(cfg.workers, || {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| trial_counts(cfg, &setup, power, t))
                .collect::<Result<Vec<_>>>()
        })??;
        for (i, scheme) in cfg.schemes.iter().enumerate() {
            let (s, w) = per_trial
                .iter()
                .fold((0u64, 0u64), |(s, w), c| (s + c[i].strong_errors, w + c[i].weak_errors));
            for (metric, value) in [
                (Metric::BerStrong, s as f64 / group_bits),
                (Metric::BerWeak, w as f64 / group_bits),
                (Metric::BerAll, (s + w) as f64 / (2.0 * group_bits)),
            ] {
                rows.push(SweepRow {
                    scheme: scheme.label().into(),
                    power_dbm: power,
                    metric,
                    value,
                    trials: cfg.trials,
                    seed: cfg.seed,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PowerSweep;

    #[test]
    fn bit_error_count() {
        assert_eq!(bit_errors(&[0, 3, 2], &[0, 0, 3]), 3);
    }

    #[test]
    fn small_run_shape_and_range() {
        let cfg = SimConfig { trials: 20, sweep: PowerSweep { min_dbm: 30.0, max_dbm: 32.0, step_db: 2.0 }, ..SimConfig::default() };
        let rows = run_ber_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 4 * 3);
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.value)));
    }
}
