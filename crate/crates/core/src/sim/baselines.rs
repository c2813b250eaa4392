//! Reference receivers: plain SCMA (six or twelve users) and power-domain
//! NOMA with per-user SIC.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mpa::{mpa_decode, Detection, DetectionProblem, MpaConfig};
use crate::scma::{rotated_codebooks, CodebookSet, FactorGraph};

/// Twelve users on the six supports of `base`, each support used twice. The
/// two users of a support get distinct rotations, so every subcarrier hosts
/// `2 d_v` users.
pub fn scma12_codebooks(base: &FactorGraph, alphabet: usize) -> Result<CodebookSet> {
    rotated_codebooks(&base.stack(base)?, alphabet)
}

/// Joint MPA over every user of `books`.
pub fn baseline_scma_decode(
    y: &[Complex64],
    books: &CodebookSet,
    channels: &[Vec<Complex64>],
    power: f64,
    noise_var: f64,
    mpa: &MpaConfig,
) -> Result<Detection> {
    let nv = vec![noise_var; y.len()];
    mpa_decode(&DetectionProblem { y, books: books.books(), channels, power, noise_var: &nv }, mpa)
}

/// Gray-labelled unit-modulus `M`-PSK point.
pub fn psk_symbol(word: usize, alphabet: usize) -> Complex64 {
    let sector = 2.0 * PI / alphabet as f64;
    Complex64::from_polar(1.0, sector / 2.0 + sector * (word ^ (word >> 1)) as f64)
}

fn psk_nearest(z: Complex64, alphabet: usize) -> usize {
    (0..alphabet)
        .min_by(|&a, &b| {
            let (da, db) = ((z - psk_symbol(a, alphabet)).norm_sqr(), (z - psk_symbol(b, alphabet)).norm_sqr());
            da.total_cmp(&db)
        })
        .unwrap_or(0)
}

/// A power-domain user repeats one PSK symbol on all `K` subcarriers, scaled
/// by `1/sqrt(K)` so the spread word has unit energy like an SCMA codeword.
pub fn pd_noma_codeword(word: usize, alphabet: usize, subcarriers: usize) -> Vec<Complex64> {
    let s = psk_symbol(word, alphabet) / (subcarriers as f64).sqrt();
    vec![s; subcarriers]
}

/// `sum_u sqrt(p) diag(h_u) x_u` added onto `y`.
pub fn superpose(y: &mut [Complex64], codewords: &[Vec<Complex64>], channels: &[Vec<Complex64>], power: f64) {
    let amp = power.sqrt();
    for (x, h) in codewords.iter().zip(channels) {
        for ((y, x), h) in y.iter_mut().zip(x).zip(h) {
            *y += amp * h * x;
        }
    }
}

/// Per-user SIC in descending `sum_k |h_{u,k}|^2`: matched-filter the
/// residual over all subcarriers, slice to the nearest PSK point, subtract the
/// reconstruction, move on. Decisions are returned in user order.
pub fn baseline_pd_noma_decode(
    y: &[Complex64],
    channels: &[Vec<Complex64>],
    power: f64,
    alphabet: usize,
) -> Result<Vec<usize>> {
    let k = y.len();
    if k == 0 || channels.iter().any(|h| h.len() != k) {
        return Err(Error::DimensionMismatch(format!("PD-NOMA channels must all have K = {k} > 0 entries")));
    }
    if !(power > 0.0) {
        return Err(Error::Domain(format!("PD-NOMA power must be positive, got {power}")));
    }
    let gain = |u: usize| channels[u].iter().map(|h| h.norm_sqr()).sum::<f64>();
    let mut order: Vec<usize> = (0..channels.len()).collect();
    order.sort_by(|&a, &b| gain(b).total_cmp(&gain(a)).then(a.cmp(&b)));

    let scale = power.sqrt() / (k as f64).sqrt();
    let mut residual = y.to_vec();
    let mut decisions = vec![0; channels.len()];
    for u in order {
        let h = &channels[u];
        let g = gain(u);
        if g == 0.0 {
            continue;
        }
        let z: Complex64 = h.iter().zip(&residual).map(|(h, r)| h.conj() * r).sum::<Complex64>() / (scale * g);
        let w = psk_nearest(z, alphabet);
        decisions[u] = w;
        let s = psk_symbol(w, alphabet);
        for (r, h) in residual.iter_mut().zip(h) {
            *r -= scale * h * s;
        }
    }
    Ok(decisions)
}
