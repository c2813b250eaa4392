//! Path loss, Rayleigh block fading, thermal noise and the superposed
//! uplink received signal of a strong and a weak user group.
//!
//! All internal quantities are linear watts; dBm/dBW only appear in the
//! conversion helpers used at the CLI boundary.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Thermal noise density in dBW/Hz (-174 dBm/Hz).
pub const NOISE_DENSITY_DBW_HZ: f64 = -204.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Distance-dependent path loss in dB for a distance in kilometres.
pub fn path_loss_db(distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0) || !distance_km.is_finite() {
        return Err(Error::Domain(format!("path loss needs a positive distance, got {distance_km} km")));
    }
    Ok(145.4 + 37.5 * distance_km.log10())
}

/// Per-subcarrier noise variance in watts for bandwidth `bw_hz` split over
/// `subcarriers` subcarriers.
pub fn noise_variance_w(bw_hz: f64, subcarriers: usize) -> Result<f64> {
    if !(bw_hz > 0.0) || subcarriers == 0 {
        return Err(Error::Domain(format!("noise variance needs bw > 0 and K >= 1 (bw={bw_hz}, K={subcarriers})")));
    }
    Ok(db_to_linear(NOISE_DENSITY_DBW_HZ + 10.0 * (bw_hz / subcarriers as f64).log10()))
}

/// Bandwidth, group distances and the per-user power budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub bandwidth_hz: f64,
    pub strong_distance_km: f64,
    pub weak_distance_km: f64,
    pub max_power_w: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            bandwidth_hz: 1e6,
            strong_distance_km: 0.3,
            weak_distance_km: 0.8,
            max_power_w: dbm_to_watts(40.0),
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.bandwidth_hz, self.strong_distance_km, self.weak_distance_km, self.max_power_w]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("link budget entries must be positive: {self:?}")))
        }
    }

    /// Mean channel power gain `10^(-PL/10)` of the strong group.
    pub fn strong_gain(&self) -> Result<f64> {
        Ok(db_to_linear(-path_loss_db(self.strong_distance_km)?))
    }

    pub fn weak_gain(&self) -> Result<f64> {
        Ok(db_to_linear(-path_loss_db(self.weak_distance_km)?))
    }
}

/// Block-stationary channel realisation of both groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    /// `J_s` rows of `K` complex gains.
    pub strong: Vec<Vec<Complex64>>,
    /// `J_w` rows of `K` complex gains.
    pub weak: Vec<Vec<Complex64>>,
    pub noise_variance: f64,
}

impl ChannelState {
    pub fn new(strong: Vec<Vec<Complex64>>, weak: Vec<Vec<Complex64>>, noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0) || !noise_variance.is_finite() {
            return Err(Error::Domain(format!("noise variance must be positive, got {noise_variance}")));
        }
        let k = strong.first().or(weak.first()).map_or(0, Vec::len);
        for row in strong.iter().chain(&weak) {
            if row.len() != k {
                return Err(Error::DimensionMismatch(format!("channel row of length {} != K = {k}", row.len())));
            }
            if row.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
                return Err(Error::Domain("non-finite channel gain".into()));
            }
        }
        Ok(Self { strong, weak, noise_variance })
    }

    pub fn subcarriers(&self) -> usize {
        self.strong.first().or(self.weak.first()).map_or(0, Vec::len)
    }

    /// `|h|^2` of the strong group, `J_s x K`.
    pub fn strong_power_gains(&self) -> Vec<Vec<f64>> {
        power_gains(&self.strong)
    }

    pub fn weak_power_gains(&self) -> Vec<Vec<f64>> {
        power_gains(&self.weak)
    }

    /// The same realisation with the group labels exchanged.
    pub fn swapped(&self) -> Self {
        Self { strong: self.weak.clone(), weak: self.strong.clone(), noise_variance: self.noise_variance }
    }
}

pub fn power_gains(rows: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|h| h.norm_sqr()).collect()).collect()
}

/// One circularly-symmetric complex Gaussian sample with `E|z|^2 = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws i.i.d. Rayleigh gains scaled by each group's path loss. Strong rows
/// are drawn before weak rows, user-major.
pub fn draw_channel<R: Rng + ?Sized>(
    rng: &mut R,
    budget: &LinkBudget,
    strong_users: usize,
    weak_users: usize,
    subcarriers: usize,
) -> Result<ChannelState> {
    budget.validate()?;
    let amp_s = budget.strong_gain()?.sqrt();
    let amp_w = budget.weak_gain()?.sqrt();
    let mut draw = |n: usize, amp: f64| -> Vec<Vec<Complex64>> {
        (0..n)
            .map(|_| (0..subcarriers).map(|_| amp * complex_gaussian(rng, 1.0)).collect())
            .collect()
    };
    let strong = draw(strong_users, amp_s);
    let weak = draw(weak_users, amp_w);
    ChannelState::new(strong, weak, noise_variance_w(budget.bandwidth_hz, subcarriers)?)
}

/// Noise source for [`synthesize_received`].
pub enum Noise<'a, R: Rng + ?Sized> {
    Disabled,
    Draw(&'a mut R),
    /// A fixed realisation, for linearity checks.
    Fixed(&'a [Complex64]),
}

/// `y = sum_i sqrt(p_s) diag(h_i^s) x_i^s + sum_j sqrt(p_w) diag(h_j^w) x_j^w + n`.
pub fn synthesize_received<R: Rng + ?Sized>(
    strong_codewords: &[&[Complex64]],
    weak_codewords: &[&[Complex64]],
    channels: &ChannelState,
    p_strong: f64,
    p_weak: f64,
    noise: Noise<'_, R>,
) -> Result<Vec<Complex64>> {
    if strong_codewords.len() != channels.strong.len() || weak_codewords.len() != channels.weak.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}+{} codewords for {}+{} users",
            strong_codewords.len(),
            weak_codewords.len(),
            channels.strong.len(),
            channels.weak.len()
        )));
    }
    let k = channels.subcarriers();
    let mut y = vec![Complex64::new(0.0, 0.0); k];
    accumulate(&mut y, strong_codewords, &channels.strong, p_strong.sqrt())?;
    accumulate(&mut y, weak_codewords, &channels.weak, p_weak.sqrt())?;
    match noise {
        Noise::Disabled => {}
        Noise::Draw(rng) => {
            for v in y.iter_mut() {
                *v += complex_gaussian(rng, channels.noise_variance);
            }
        }
        Noise::Fixed(n) => {
            if n.len() != k {
                return Err(Error::DimensionMismatch(format!("noise of length {} != K = {k}", n.len())));
            }
            for (v, n) in y.iter_mut().zip(n) {
                *v += n;
            }
        }
    }
    Ok(y)
}

/// `y += amp * diag(h_u) x_u` over all users.
pub(crate) fn accumulate(
    y: &mut [Complex64],
    codewords: &[&[Complex64]],
    gains: &[Vec<Complex64>],
    amp: f64,
) -> Result<()> {
    for (x, h) in codewords.iter().zip(gains) {
        if x.len() != y.len() || h.len() != y.len() {
            return Err(Error::DimensionMismatch(format!("codeword/channel length != K = {}", y.len())));
        }
        for ((v, x), h) in y.iter_mut().zip(x.iter()).zip(h) {
            *v += amp * h * x;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scma::CodebookSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_loss_values() {
        assert_eq!(path_loss_db(1.0).unwrap(), 145.4);
        assert!((path_loss_db(0.3).unwrap() - 125.79).abs() < 0.01);
        assert!((path_loss_db(0.8).unwrap() - 141.77).abs() < 0.01);
        assert!(path_loss_db(0.0).is_err());
        assert!(path_loss_db(-1.0).is_err());
    }

    #[test]
    fn noise_variance_values() {
        let n = noise_variance_w(1e6, 4).unwrap();
        assert!((10.0 * n.log10() + 150.02).abs() < 0.01);
        assert!((n / 9.95e-16 - 1.0).abs() < 0.01);
        let floor = noise_variance_w(4.0, 4).unwrap();
        assert!((10.0 * floor.log10() + 204.0).abs() < 1e-9);
        let doubled = noise_variance_w(2e6, 4).unwrap();
        assert!((doubled / n - 2.0).abs() < 1e-12);
        assert!(noise_variance_w(0.0, 4).is_err());
        assert!(noise_variance_w(1e6, 0).is_err());
    }

    #[test]
    fn dbm_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(40.0) - 10.0).abs() < 1e-12);
        assert!((watts_to_dbm(10.0) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn draw_is_deterministic_for_a_seed() {
        let b = LinkBudget::default();
        let a = draw_channel(&mut ChaCha8Rng::seed_from_u64(7), &b, 6, 6, 4).unwrap();
        let c = draw_channel(&mut ChaCha8Rng::seed_from_u64(7), &b, 6, 6, 4).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn mean_gain_matches_path_loss() {
        let b = LinkBudget::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut s, mut w) = (0.0, 0.0);
        let draws = 25_000; // x 4 subcarriers = 1e5 samples per group
        for _ in 0..draws {
            let ch = draw_channel(&mut rng, &b, 1, 1, 4).unwrap();
            s += ch.strong[0].iter().map(|h| h.norm_sqr()).sum::<f64>();
            w += ch.weak[0].iter().map(|h| h.norm_sqr()).sum::<f64>();
        }
        let n = (draws * 4) as f64;
        let (s, w) = (s / n, w / n);
        assert!((s / b.strong_gain().unwrap() - 1.0).abs() < 0.02);
        assert!((w / b.weak_gain().unwrap() - 1.0).abs() < 0.02);
        let expected_ratio = db_to_linear(141.77 - 125.79);
        assert!((expected_ratio - 39.6).abs() < 0.1);
        assert!((s / w / expected_ratio - 1.0).abs() < 0.05);
    }

    #[test]
    fn synthesis_trivial_cases() {
        let ch = ChannelState::new(vec![vec![Complex64::new(1.0, 0.0); 4]], vec![], 1e-3).unwrap();
        let zero = vec![Complex64::new(0.0, 0.0); 4];
        let y = synthesize_received::<ChaCha8Rng>(&[&zero], &[], &ch, 4.0, 0.0, Noise::Disabled).unwrap();
        assert!(y.iter().all(|v| v.norm() == 0.0));
        let set = CodebookSet::default_six_user();
        let x = set.encode(0, 2).unwrap();
        let y = synthesize_received::<ChaCha8Rng>(&[x], &[], &ch, 4.0, 0.0, Noise::Disabled).unwrap();
        for (a, b) in y.iter().zip(x) {
            assert!((a - 2.0 * b).norm() < 1e-15);
        }
    }

    #[test]
    fn synthesis_matches_straight_line_evaluation() {
        let b = LinkBudget::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = draw_channel(&mut rng, &b, 6, 6, 4).unwrap();
        let set = CodebookSet::default_six_user();
        let ws: Vec<usize> = (0..12).map(|_| rng.random_range(0..4)).collect();
        let xs: Vec<&[Complex64]> = (0..6).map(|j| set.encode(j, ws[j]).unwrap()).collect();
        let xw: Vec<&[Complex64]> = (0..6).map(|j| set.encode(j, ws[6 + j]).unwrap()).collect();
        let noise: Vec<Complex64> = (0..4).map(|_| complex_gaussian(&mut rng, ch.noise_variance)).collect();
        let (ps, pw) = (5.0, 2.5);
        let y = synthesize_received::<ChaCha8Rng>(&xs, &xw, &ch, ps, pw, Noise::Fixed(&noise)).unwrap();
        for k in 0..4 {
            let mut acc = noise[k];
            for i in 0..6 {
                acc += ps.sqrt() * ch.strong[i][k] * xs[i][k];
            }
            for j in 0..6 {
                acc += pw.sqrt() * ch.weak[j][k] * xw[j][k];
            }
            assert!((acc - y[k]).norm() <= 1e-12 * acc.norm().max(1e-300));
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let ch = ChannelState::new(vec![vec![Complex64::new(1.0, 0.0); 4]; 2], vec![], 1e-3).unwrap();
        let x = vec![Complex64::new(0.0, 0.0); 4];
        let r = synthesize_received::<ChaCha8Rng>(&[&x], &[], &ch, 1.0, 0.0, Noise::Disabled);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }
}
