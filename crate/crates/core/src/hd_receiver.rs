//! Two-stage hybrid-domain receiver: strong-group MPA with the weak group
//! folded into the noise, hard SIC of the reconstructed strong signal, then
//! weak-group MPA on the residual.

use num_complex::Complex64;

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::mpa::{effective_noise_for_strong, mpa_decode, Detection, DetectionProblem, MpaConfig};
use crate::scma::CodebookSet;

/// `y - sum_i sqrt(p_s) diag(h_i^s) x_i`.
pub fn sic_subtract(
    y: &[Complex64],
    decoded: &[&[Complex64]],
    strong_channels: &[Vec<Complex64>],
    p_strong: f64,
) -> Result<Vec<Complex64>> {
    if decoded.len() != strong_channels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} decoded codewords for {} strong users",
            decoded.len(),
            strong_channels.len()
        )));
    }
    let amp = p_strong.sqrt();
    let mut out = y.to_vec();
    for (x, h) in decoded.iter().zip(strong_channels) {
        if x.len() != y.len() || h.len() != y.len() {
            return Err(Error::DimensionMismatch(format!("codeword/channel length != K = {}", y.len())));
        }
        for ((o, x), h) in out.iter_mut().zip(x.iter()).zip(h) {
            *o -= amp * h * x;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HdOptions<'a> {
    /// Decode the strong group against `sigma^2` only, ignoring the weak
    /// group's interference power.
    pub ignore_weak_interference: bool,
    /// Cancel these (true) strong words instead of the decisions.
    pub genie_strong_words: Option<&'a [usize]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdDetection {
    pub strong: Detection,
    pub weak: Option<Detection>,
}

impl HdDetection {
    /// Strong decisions followed by weak decisions.
    pub fn decisions(&self) -> Vec<usize> {
        let mut d = self.strong.decisions.clone();
        if let Some(w) = &self.weak {
            d.extend_from_slice(&w.decisions);
        }
        d
    }
}

/// Group-level SIC receiver.
#[allow(clippy::too_many_arguments)]
pub fn decode_hd(
    y: &[Complex64],
    channels: &ChannelState,
    strong: &CodebookSet,
    weak: Option<&CodebookSet>,
    p_strong: f64,
    p_weak: f64,
    mpa: &MpaConfig,
    opts: &HdOptions<'_>,
) -> Result<HdDetection> {
    let k = y.len();
    let noise = vec![channels.noise_variance; k];
    let stage1_noise = match weak {
        Some(w) if !opts.ignore_weak_interference => {
            effective_noise_for_strong(channels.noise_variance, &channels.weak, p_weak, w.graph())?
        }
        _ => noise.clone(),
    };
    let strong_det = mpa_decode(
        &DetectionProblem {
            y,
            books: strong.books(),
            channels: &channels.strong,
            power: p_strong,
            noise_var: &stage1_noise,
        },
        mpa,
    )?;
    let Some(weak) = weak else {
        return Ok(HdDetection { strong: strong_det, weak: None });
    };
    let cancel = opts.genie_strong_words.unwrap_or(&strong_det.decisions);
    if cancel.len() != strong.users() {
        return Err(Error::DimensionMismatch(format!("{} genie words for {} strong users", cancel.len(), strong.users())));
    }
    let codewords: Vec<&[Complex64]> =
        cancel.iter().enumerate().map(|(i, &w)| strong.encode(i, w)).collect::<Result<_>>()?;
    let y_sic = sic_subtract(y, &codewords, &channels.strong, p_strong)?;
    let weak_det = mpa_decode(
        &DetectionProblem { y: &y_sic, books: weak.books(), channels: &channels.weak, power: p_weak, noise_var: &noise },
        mpa,
    )?;
    Ok(HdDetection { strong: strong_det, weak: Some(weak_det) })
}
