//! Message-passing multiuser detection over an SCMA factor graph, and an
//! exhaustive MAP detector used as its test oracle.
//!
//! Messages live in the log domain. Function nodes (subcarriers) enumerate
//! every codeword combination of the users attached to them; variable nodes
//! (users) sum the incoming extrinsic messages.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scma::{Codebook, FactorGraph};

/// Check-node combining rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MpaVariant {
    /// Exact Jacobian logarithm (sum-product).
    #[default]
    SumProduct,
    /// `log(sum exp) ~ max`.
    MaxLog,
}

impl std::str::FromStr for MpaVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sumprod" | "sum-product" => Ok(Self::SumProduct),
            "maxlog" | "max-log" => Ok(Self::MaxLog),
            other => Err(Error::Config(format!("unknown MPA variant `{other}` (sumprod|maxlog)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MpaConfig {
    pub iterations: usize,
    pub variant: MpaVariant,
}

impl Default for MpaConfig {
    fn default() -> Self {
        Self { iterations: 6, variant: MpaVariant::SumProduct }
    }
}

/// Per-user posterior probabilities over the `M` codewords.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    pub probs: Vec<Vec<f64>>,
}

impl MarginalTable {
    pub fn users(&self) -> usize {
        self.probs.len()
    }

    /// Largest total-variation distance between matching users' marginals.
    pub fn max_tv_distance(&self, other: &MarginalTable) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn argmax(&self) -> Vec<usize> {
        self.probs
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (m, &v)| if v > best.1 { (m, v) } else { best })
                    .0
            })
            .collect()
    }
}

/// Marginals, hard decisions and the work done to obtain them.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub marginals: MarginalTable,
    pub decisions: Vec<usize>,
    /// Largest number of codeword hypotheses enumerated at one function node
    /// (`M^{d_v}` for a regular graph). For the MAP oracle, `M^J`.
    pub hypotheses_per_node: usize,
    /// Total hypotheses evaluated over all nodes and iterations.
    pub hypotheses_total: u64,
}

/// Inputs shared by both detectors: per-user codebooks, per-user `K`-vectors
/// of channel gains, a common transmit power and per-subcarrier noise
/// variances.
#[derive(Debug, Clone, Copy)]
pub struct DetectionProblem<'a> {
    pub y: &'a [Complex64],
    pub books: &'a [Codebook],
    pub channels: &'a [Vec<Complex64>],
    pub power: f64,
    pub noise_var: &'a [f64],
}

impl DetectionProblem<'_> {
    fn check(&self) -> Result<(usize, usize)> {
        let k = self.y.len();
        let users = self.books.len();
        if users == 0 {
            return Err(Error::DimensionMismatch("no users to detect".into()));
        }
        if self.channels.len() != users {
            return Err(Error::DimensionMismatch(format!("{} channels for {users} users", self.channels.len())));
        }
        if self.noise_var.len() != k {
            return Err(Error::DimensionMismatch(format!("{} noise variances for K = {k}", self.noise_var.len())));
        }
        if self.noise_var.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Domain("noise variances must be positive".into()));
        }
        let m = self.books[0].alphabet();
        for (u, (b, h)) in self.books.iter().zip(self.channels).enumerate() {
            if b.subcarriers() != k || h.len() != k {
                return Err(Error::DimensionMismatch(format!("user {u}: codebook/channel length != K = {k}")));
            }
            if b.alphabet() != m {
                return Err(Error::DimensionMismatch(format!("user {u}: alphabet {} != {m}", b.alphabet())));
            }
        }
        Ok((k, m))
    }

    /// `sqrt(p) h_{u,k} x_{u,m,k}`.
    fn contribution(&self, user: usize, m: usize, k: usize) -> Complex64 {
        self.power.sqrt() * self.channels[user][k] * self.books[user].codeword(m)[k]
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn normalize_log(v: &mut [f64]) {
    let z = log_sum_exp(v.iter().copied());
    for x in v.iter_mut() {
        *x -= z;
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(v.iter().copied());
    v.iter().map(|x| (x - z).exp()).collect()
}

/// Iterative message passing detection.
pub fn mpa_decode(problem: &DetectionProblem<'_>, cfg: &MpaConfig) -> Result<Detection> {
    if cfg.iterations == 0 {
        return Err(Error::Config("MPA needs at least one iteration".into()));
    }
    let (k_count, m) = problem.check()?;
    let users = problem.books.len();

    // node_users[k]: users on subcarrier k; user_nodes[u]: (k, slot of u at k)
    let node_users: Vec<Vec<usize>> = (0..k_count)
        .map(|k| (0..users).filter(|&u| problem.books[u].support().contains(&k)).collect())
        .collect();
    let mut user_nodes: Vec<Vec<(usize, usize)>> = vec![Vec::new(); users];
    for (k, us) in node_users.iter().enumerate() {
        for (slot, &u) in us.iter().enumerate() {
            user_nodes[u].push((k, slot));
        }
    }
    // contributions[k][slot][m]
    let contributions: Vec<Vec<Vec<Complex64>>> = node_users
        .iter()
        .enumerate()
        .map(|(k, us)| us.iter().map(|&u| (0..m).map(|mm| problem.contribution(u, mm, k)).collect()).collect())
        .collect();

    let uniform = -(m as f64).ln();
    let mut v2f: Vec<Vec<Vec<f64>>> = node_users.iter().map(|us| vec![vec![uniform; m]; us.len()]).collect();
    let mut f2v: Vec<Vec<Vec<f64>>> = v2f.clone();

    let hypotheses_per_node = node_users.iter().map(|us| m.pow(us.len() as u32)).max().unwrap_or(1);
    let mut hypotheses_total = 0u64;
    let mut totals: Vec<f64> = Vec::new();
    let mut digits: Vec<usize> = Vec::new();

    for _ in 0..cfg.iterations {
        for k in 0..k_count {
            let d = node_users[k].len();
            if d == 0 {
                continue;
            }
            let combos = m.pow(d as u32);
            hypotheses_total += combos as u64;
            totals.clear();
            totals.reserve(combos);
            digits.clear();
            digits.resize(d, 0);
            let inv_var = 1.0 / problem.noise_var[k];
            let yk = problem.y[k];
            let cont = &contributions[k];
            let inc = &v2f[k];
            for _ in 0..combos {
                let mut s = Complex64::new(0.0, 0.0);
                let mut prior = 0.0;
                for (slot, &dg) in digits.iter().enumerate() {
                    s += cont[slot][dg];
                    prior += inc[slot][dg];
                }
                totals.push(-(yk - s).norm_sqr() * inv_var + prior);
                advance(&mut digits, m);
            }
            // out[slot][m] = lse over combos with digit m of (total - inc[slot][m])
            let out = &mut f2v[k];
            for slot in 0..d {
                let stride = m.pow(slot as u32);
                for (mm, o) in out[slot].iter_mut().enumerate() {
                    let own = inc[slot][mm];
                    let members = (0..combos).filter(|c| (c / stride) % m == mm).map(|c| totals[c] - own);
                    *o = match cfg.variant {
                        MpaVariant::SumProduct => log_sum_exp(members),
                        MpaVariant::MaxLog => members.fold(f64::NEG_INFINITY, f64::max),
                    };
                }
                normalize_log(&mut out[slot]);
            }
        }
        for nodes in &user_nodes {
            for &(k, slot) in nodes {
                let msg = &mut v2f[k][slot];
                for (mm, v) in msg.iter_mut().enumerate() {
                    *v = nodes.iter().filter(|&&(k2, _)| k2 != k).map(|&(k2, s2)| f2v[k2][s2][mm]).sum();
                }
                normalize_log(msg);
            }
        }
    }

    let probs: Vec<Vec<f64>> = user_nodes
        .iter()
        .map(|nodes| {
            let logp: Vec<f64> =
                (0..m).map(|mm| nodes.iter().map(|&(k, s)| f2v[k][s][mm]).sum::<f64>()).collect();
            softmax(&logp)
        })
        .collect();
    let marginals = MarginalTable { probs };
    let decisions = marginals.argmax();
    Ok(Detection { marginals, decisions, hypotheses_per_node, hypotheses_total })
}

/// Little-endian mixed-radix increment; digit 0 varies fastest, matching
/// `(combo / M^slot) % M`.
fn advance(digits: &mut [usize], radix: usize) {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return;
        }
        *d = 0;
    }
}

/// Largest joint hypothesis space [`map_oracle_decode`] will enumerate by default.
pub const MAP_BUDGET: usize = 1 << 20;

/// Exact posterior marginals by enumerating all `M^J` codeword tuples.
pub fn map_oracle_decode(problem: &DetectionProblem<'_>, budget: usize) -> Result<Detection> {
    let (k_count, m) = problem.check()?;
    let users = problem.books.len();
    let space = (m as u128).checked_pow(users as u32).unwrap_or(u128::MAX);
    if space > budget as u128 {
        return Err(Error::EnumerationBudget { count: space, budget: budget as u128 });
    }
    let space = space as usize;
    let contributions: Vec<Vec<Vec<Complex64>>> = (0..users)
        .map(|u| (0..m).map(|mm| (0..k_count).map(|k| problem.contribution(u, mm, k)).collect()).collect())
        .collect();
    let mut loglik = Vec::with_capacity(space);
    let mut digits = vec![0usize; users];
    for _ in 0..space {
        let mut ll = 0.0;
        for k in 0..k_count {
            let s: Complex64 = digits.iter().enumerate().map(|(u, &d)| contributions[u][d][k]).sum();
            ll -= (problem.y[k] - s).norm_sqr() / problem.noise_var[k];
        }
        loglik.push(ll);
        advance(&mut digits, m);
    }
    let max = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs = vec![vec![0.0; m]; users];
    let mut z = 0.0;
    for (c, ll) in loglik.iter().enumerate() {
        let w = (ll - max).exp();
        z += w;
        let mut rest = c;
        for p in probs.iter_mut() {
            p[rest % m] += w;
            rest /= m;
        }
    }
    for p in probs.iter_mut() {
        for v in p.iter_mut() {
            *v /= z;
        }
    }
    let marginals = MarginalTable { probs };
    let decisions = marginals.argmax();
    Ok(Detection { marginals, decisions, hypotheses_per_node: space, hypotheses_total: space as u64 })
}

/// Per-subcarrier noise seen by the strong-group detector when the weak
/// group is treated as Gaussian interference:
/// `sigma^2 + sum_j p_w |h^w_{j,k}|^2 f^w_{j,k}`.
pub fn effective_noise_for_strong(
    noise_var: f64,
    weak_channels: &[Vec<Complex64>],
    p_weak: f64,
    weak_graph: &FactorGraph,
) -> Result<Vec<f64>> {
    if weak_channels.len() != weak_graph.users() {
        return Err(Error::DimensionMismatch(format!(
            "{} weak channels for a {}-user graph",
            weak_channels.len(),
            weak_graph.users()
        )));
    }
    let k_count = weak_graph.subcarriers();
    Ok((0..k_count)
        .map(|k| {
            noise_var
                + weak_channels
                    .iter()
                    .enumerate()
                    .map(|(j, h)| p_weak * h[k].norm_sqr() * weak_graph.get(j, k) as f64)
                    .sum::<f64>()
        })
        .collect())
}
