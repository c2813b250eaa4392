//! Codebooks, factor graphs and codeword mapping for one SCMA user group.
//!
//! A group of `J` users shares `K` subcarriers. Each user occupies `d_f`
//! subcarriers and each subcarrier carries `d_v` users; the occupancy is the
//! binary factor-graph matrix. A user's codebook holds `M` sparse complex
//! `K`-vectors whose common support is the user's factor-graph row.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Codeword entries with modulus below this are treated as structural zeros.
const ZERO_TOL: f64 = 1e-12;
/// Accepted deviation of a loaded codebook's average energy from one.
const ENERGY_TOL: f64 = 1e-9;

/// Binomial coefficient `C(n, k)`; saturates instead of overflowing.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// One reason a binary matrix fails to be a regular factor graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NonBinary { user: usize, subcarrier: usize, value: u8 },
    RowSum { user: usize, sum: usize, expected: usize },
    ColumnSum { subcarrier: usize, sum: usize, expected: usize },
    DegreeInconsistent { users: usize, subcarriers: usize, d_f: usize, d_v: usize },
    Ragged { user: usize, len: usize, expected: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonBinary { user, subcarrier, value } => {
                write!(f, "entry ({user},{subcarrier}) = {value} is not binary")
            }
            Violation::RowSum { user, sum, expected } => {
                write!(f, "row {user} sums to {sum}, expected {expected}")
            }
            Violation::ColumnSum { subcarrier, sum, expected } => {
                write!(f, "column {subcarrier} sums to {sum}, expected {expected}")
            }
            Violation::DegreeInconsistent { users, subcarriers, d_f, d_v } => {
                write!(f, "J*d_f = {users}*{d_f} != K*d_v = {subcarriers}*{d_v}")
            }
            Violation::Ragged { user, len, expected } => {
                write!(f, "row {user} has {len} entries, expected {expected}")
            }
        }
    }
}

/// Outcome of [`validate_factor_graph`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a raw `J x K` matrix against the regular factor-graph invariants:
/// binary entries, every row summing to `d_f`, every column to `d_v`, and
/// `J * d_f == K * d_v`. Violations are collected, never thrown.
pub fn validate_factor_graph(rows: &[Vec<u8>], d_f: usize, d_v: usize) -> Validation {
    let mut violations = Vec::new();
    let users = rows.len();
    let subcarriers = rows.first().map_or(0, Vec::len);
    if users * d_f != subcarriers * d_v {
        violations.push(Violation::DegreeInconsistent { users, subcarriers, d_f, d_v });
    }
    for (j, row) in rows.iter().enumerate() {
        if row.len() != subcarriers {
            violations.push(Violation::Ragged { user: j, len: row.len(), expected: subcarriers });
            continue;
        }
        for (k, &v) in row.iter().enumerate() {
            if v > 1 {
                violations.push(Violation::NonBinary { user: j, subcarrier: k, value: v });
            }
        }
        let sum: usize = row.iter().map(|&v| v as usize).sum();
        if sum != d_f {
            violations.push(Violation::RowSum { user: j, sum, expected: d_f });
        }
    }
    for k in 0..subcarriers {
        let sum: usize = rows.iter().filter_map(|r| r.get(k)).map(|&v| v as usize).sum();
        if sum != d_v {
            violations.push(Violation::ColumnSum { subcarrier: k, sum, expected: d_v });
        }
    }
    Validation { violations }
}

/// Regular binary user-to-subcarrier assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactorGraph {
    rows: Vec<Vec<u8>>,
    d_f: usize,
    d_v: usize,
}

impl FactorGraph {
    /// Builds a graph, inferring `d_f` from the first row and `d_v` from the
    /// first column, and rejecting anything that is not regular.
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::DimensionMismatch("factor graph must be non-empty".into()));
        }
        let d_f = rows[0].iter().map(|&v| v as usize).sum();
        let d_v = rows.iter().map(|r| r[0] as usize).sum();
        Self::with_degrees(rows, d_f, d_v)
    }

    pub fn with_degrees(rows: Vec<Vec<u8>>, d_f: usize, d_v: usize) -> Result<Self> {
        let v = validate_factor_graph(&rows, d_f, d_v);
        if !v.passed() {
            let msg: Vec<String> = v.violations.iter().map(ToString::to_string).collect();
            return Err(Error::CodebookInvalid(format!("not a regular factor graph: {}", msg.join("; "))));
        }
        Ok(Self { rows, d_f, d_v })
    }

    /// Builds a graph from per-user supports (0-based subcarrier indices).
    pub fn from_supports(supports: &[Vec<usize>], subcarriers: usize) -> Result<Self> {
        let mut rows = vec![vec![0u8; subcarriers]; supports.len()];
        for (j, s) in supports.iter().enumerate() {
            for &k in s {
                if k >= subcarriers {
                    return Err(Error::DimensionMismatch(format!(
                        "support index {k} of user {j} >= K = {subcarriers}"
                    )));
                }
                rows[j][k] = 1;
            }
        }
        Self::from_rows(rows)
    }

    pub fn users(&self) -> usize {
        self.rows.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.rows[0].len()
    }

    pub fn d_f(&self) -> usize {
        self.d_f
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    /// Overloading factor `J / K`.
    pub fn overload(&self) -> f64 {
        self.users() as f64 / self.subcarriers() as f64
    }

    pub fn get(&self, user: usize, subcarrier: usize) -> u8 {
        self.rows[user][subcarrier]
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn support(&self, user: usize) -> Vec<usize> {
        self.rows[user].iter().enumerate().filter(|(_, &v)| v == 1).map(|(k, _)| k).collect()
    }

    /// Users occupying `subcarrier`, in increasing index order.
    pub fn users_on(&self, subcarrier: usize) -> Vec<usize> {
        (0..self.users()).filter(|&j| self.rows[j][subcarrier] == 1).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.users(), self.subcarriers(), |j, k| self.rows[j][k] as f64)
    }

    /// Stacks `other` below `self` (used to form multi-group graphs).
    pub fn stack(&self, other: &FactorGraph) -> Result<FactorGraph> {
        if self.subcarriers() != other.subcarriers() || self.d_f != other.d_f {
            return Err(Error::DimensionMismatch("stacked graphs must share K and d_f".into()));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        FactorGraph::with_degrees(rows, self.d_f, self.d_v + other.d_v)
    }
}

/// Relaxed assignment matrix with entries in `[0, 1]`, as manipulated by the
/// subcarrier-allocation subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedFactorGraph {
    entries: DMatrix<f64>,
}

impl RelaxedFactorGraph {
    /// Entries within `1e-9` of the box are clamped onto it; anything further
    /// out is rejected.
    pub fn new(mut entries: DMatrix<f64>) -> Result<Self> {
        for v in entries.iter_mut() {
            if !v.is_finite() || *v < -1e-9 || *v > 1.0 + 1e-9 {
                return Err(Error::Domain(format!("relaxed factor-graph entry {v} outside [0,1]")));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self { entries })
    }

    pub fn from_binary(graph: &FactorGraph) -> Self {
        Self { entries: graph.to_matrix() }
    }

    pub fn filled(users: usize, subcarriers: usize, value: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(users, subcarriers, value))
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn users(&self) -> usize {
        self.entries.nrows()
    }

    pub fn subcarriers(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, user: usize, subcarrier: usize) -> f64 {
        self.entries[(user, subcarrier)]
    }

    pub fn row_sum(&self, user: usize) -> f64 {
        self.entries.row(user).sum()
    }

    pub fn max_row_sum(&self) -> f64 {
        (0..self.users()).map(|j| self.row_sum(j)).fold(0.0, f64::max)
    }

    /// Number of entries strictly inside `(lo, hi)`.
    pub fn count_fractional(&self, lo: f64, hi: f64) -> usize {
        self.entries.iter().filter(|&&v| v > lo && v < hi).count()
    }
}

impl From<&FactorGraph> for RelaxedFactorGraph {
    fn from(g: &FactorGraph) -> Self {
        Self::from_binary(g)
    }
}

/// The first `users` size-`d_f` subsets of `{0..K-1}` in lexicographic order,
/// one per row.
pub fn canonical_factor_graph(users: usize, subcarriers: usize, d_f: usize) -> Result<FactorGraph> {
    if users == 0 || subcarriers == 0 || d_f == 0 || d_f > subcarriers {
        return Err(Error::Domain(format!(
            "canonical graph needs J, K >= 1 and 1 <= d_f <= K (got J={users}, K={subcarriers}, d_f={d_f})"
        )));
    }
    let capacity = binomial(subcarriers, d_f);
    if users as u128 > capacity {
        return Err(Error::CapacityExceeded { users, subcarriers, degree: d_f, capacity });
    }
    if !(users * d_f).is_multiple_of(subcarriers) {
        return Err(Error::DegreeInfeasible { users, subcarriers, d_f });
    }
    let d_v = users * d_f / subcarriers;
    let rows: Vec<Vec<u8>> = LexSubsets::new(subcarriers, d_f)
        .take(users)
        .map(|s| {
            let mut row = vec![0u8; subcarriers];
            for k in s {
                row[k] = 1;
            }
            row
        })
        .collect();
    let v = validate_factor_graph(&rows, d_f, d_v);
    if !v.passed() {
        // integral d_v but the lexicographic prefix is not column-regular
        return Err(Error::DegreeInfeasible { users, subcarriers, d_f });
    }
    Ok(FactorGraph { rows, d_f, d_v })
}

/// Iterator over the size-`k` subsets of `{0..n-1}` in lexicographic order.
#[derive(Debug, Clone)]
pub struct LexSubsets {
    n: usize,
    current: Option<Vec<usize>>,
}

impl LexSubsets {
    pub fn new(n: usize, k: usize) -> Self {
        let current = if k <= n { Some((0..k).collect()) } else { None };
        Self { n, current }
    }
}

impl Iterator for LexSubsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for t in i + 1..k {
                    next[t] = next[t - 1] + 1;
                }
                self.current = Some(next);
                return Some(out);
            }
        }
        Some(out)
    }
}

/// One user's alphabet: `M` codewords, each a complex `K`-vector supported
/// exactly on `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    codewords: Vec<Vec<Complex64>>,
    support: Vec<usize>,
}

impl Codebook {
    pub fn new(codewords: Vec<Vec<Complex64>>) -> Result<Self> {
        let first = codewords
            .first()
            .ok_or_else(|| Error::CodebookInvalid("codebook has no codewords".into()))?;
        let k = first.len();
        let support = support_of(first);
        for (m, cw) in codewords.iter().enumerate() {
            if cw.len() != k {
                return Err(Error::CodebookInvalid(format!("codeword {m} has length {}, expected {k}", cw.len())));
            }
            let s = support_of(cw);
            if s != support {
                return Err(Error::CodebookInvalid(format!(
                    "codeword {m} support {s:?} differs from the user's factor-graph row {support:?}"
                )));
            }
        }
        Ok(Self { codewords, support })
    }

    pub fn alphabet(&self) -> usize {
        self.codewords.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.codewords[0].len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn codeword(&self, m: usize) -> &[Complex64] {
        &self.codewords[m]
    }

    pub fn codewords(&self) -> &[Vec<Complex64>] {
        &self.codewords
    }

    pub fn average_energy(&self) -> f64 {
        let total: f64 = self.codewords.iter().flat_map(|c| c.iter()).map(|x| x.norm_sqr()).sum();
        total / self.alphabet() as f64
    }

    /// Nearest codeword in Euclidean distance (noiseless detector).
    pub fn nearest(&self, y: &[Complex64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (m, cw) in self.codewords.iter().enumerate() {
            let d: f64 = cw.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum();
            if d < best.1 {
                best = (m, d);
            }
        }
        best.0
    }
}

fn support_of(cw: &[Complex64]) -> Vec<usize> {
    cw.iter().enumerate().filter(|(_, x)| x.norm() > ZERO_TOL).map(|(k, _)| k).collect()
}

/// Codebooks for every user of one group, together with the factor graph
/// their supports induce.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    books: Vec<Codebook>,
    graph: FactorGraph,
}

impl CodebookSet {
    pub fn new(books: Vec<Codebook>) -> Result<Self> {
        let first = books.first().ok_or_else(|| Error::CodebookInvalid("no users".into()))?;
        let (m, k) = (first.alphabet(), first.subcarriers());
        if !m.is_power_of_two() || m < 2 {
            return Err(Error::CodebookInvalid(format!("alphabet size {m} is not a power of two >= 2")));
        }
        for (j, b) in books.iter().enumerate() {
            if b.alphabet() != m || b.subcarriers() != k {
                return Err(Error::CodebookInvalid(format!(
                    "user {j} has {}x{} codebook, expected {m}x{k}",
                    b.alphabet(),
                    b.subcarriers()
                )));
            }
            let e = b.average_energy();
            if (e - 1.0).abs() > ENERGY_TOL {
                return Err(Error::CodebookInvalid(format!("user {j} average codeword energy {e} != 1")));
            }
        }
        let supports: Vec<Vec<usize>> = books.iter().map(|b| b.support.clone()).collect();
        let graph = FactorGraph::from_supports(&supports, k)?;
        Ok(Self { books, graph })
    }

    /// The embedded six-user, four-subcarrier, `M = 4` codebook.
    pub fn default_six_user() -> Self {
        let graph = canonical_factor_graph(6, 4, 2).expect("6/4/2 is a valid canonical graph");
        rotated_codebooks(&graph, 4).expect("embedded codebook is valid")
    }

    pub fn users(&self) -> usize {
        self.books.len()
    }

    pub fn alphabet(&self) -> usize {
        self.books[0].alphabet()
    }

    pub fn bits_per_word(&self) -> usize {
        self.alphabet().trailing_zeros() as usize
    }

    pub fn subcarriers(&self) -> usize {
        self.books[0].subcarriers()
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn book(&self, user: usize) -> &Codebook {
        &self.books[user]
    }

    pub fn books(&self) -> &[Codebook] {
        &self.books
    }

    /// Maps a `log2(M)`-bit word to the user's codeword with that index.
    pub fn encode(&self, user: usize, word: usize) -> Result<&[Complex64]> {
        let book = self
            .books
            .get(user)
            .ok_or(Error::UserOutOfRange { user, users: self.users() })?;
        if word >= book.alphabet() {
            return Err(Error::WordOutOfRange { word, alphabet: book.alphabet() });
        }
        Ok(book.codeword(word))
    }

    /// Writes the set in the text format read by [`load_codebook`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# hdnoma codebook: per user, M rows of K (re im) pairs\n");
        out.push_str(&format!("alphabet {}\nsubcarriers {}\nusers {}\n", self.alphabet(), self.subcarriers(), self.users()));
        for (j, b) in self.books.iter().enumerate() {
            out.push_str(&format!("user {j}\n"));
            for cw in &b.codewords {
                let parts: Vec<String> = cw.iter().map(|x| format!("{:.17e} {:.17e}", x.re, x.im)).collect();
                out.push_str(&parts.join("  "));
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }
}

/// Builds unit-energy codebooks for an arbitrary regular graph from an
/// `M`-PSK mother constellation.
///
/// A user's `t`-th occupied subcarrier carries the PSK point of its word
/// (Gray-relabelled on odd dimensions). The `r`-th user on a subcarrier is
/// rotated by `r * (2*pi/M) / d_v`, so colliding users never share a phase
/// offset. Every codeword has energy exactly one.
pub fn rotated_codebooks(graph: &FactorGraph, alphabet: usize) -> Result<CodebookSet> {
    if !alphabet.is_power_of_two() || alphabet < 2 {
        return Err(Error::CodebookInvalid(format!("alphabet size {alphabet} is not a power of two >= 2")));
    }
    let k = graph.subcarriers();
    let amp = 1.0 / (graph.d_f() as f64).sqrt();
    let sector = 2.0 * PI / alphabet as f64;
    let mut books = Vec::with_capacity(graph.users());
    for j in 0..graph.users() {
        let support = graph.support(j);
        let mut codewords = Vec::with_capacity(alphabet);
        for m in 0..alphabet {
            let mut cw = vec![Complex64::new(0.0, 0.0); k];
            for (t, &sc) in support.iter().enumerate() {
                let label = if t % 2 == 1 { m ^ (m >> 1) } else { m };
                let slot = graph.users_on(sc).iter().position(|&u| u == j).unwrap_or(0);
                let rot = slot as f64 * sector / graph.d_v() as f64;
                let phase = sector / 2.0 + sector * label as f64 + rot;
                cw[sc] = Complex64::from_polar(amp, phase);
            }
            codewords.push(cw);
        }
        books.push(Codebook::new(codewords)?);
    }
    CodebookSet::new(books)
}

/// Reads a codebook file; `None` yields the embedded default.
pub fn load_codebook(path: Option<&Path>) -> Result<CodebookSet> {
    match path {
        None => Ok(CodebookSet::default_six_user()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| Error::Io { path: p.to_path_buf(), source })?;
            parse_codebook(&text)
        }
    }
}

/// Parses the codebook text format:
///
/// ```text
/// alphabet 4
/// subcarriers 4
/// users 6
/// user 0
/// re im  re im  re im  re im      (M such lines per user)
/// ```
///
/// Blank lines and `#` comments are ignored.
pub fn parse_codebook(text: &str) -> Result<CodebookSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut header = |key: &str| -> Result<usize> {
        let (n, line) = lines
            .next()
            .ok_or(Error::CodebookParse { line: 0, msg: format!("missing `{key}` header") })?;
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(Error::CodebookParse { line: n, msg: format!("expected `{key} <n>`") });
        }
        it.next()
            .and_then(|v| v.parse().ok())
            .ok_or(Error::CodebookParse { line: n, msg: format!("bad value for `{key}`") })
    };
    let alphabet = header("alphabet")?;
    let subcarriers = header("subcarriers")?;
    let users = header("users")?;
    if alphabet == 0 || subcarriers == 0 || users == 0 {
        return Err(Error::CodebookParse { line: 0, msg: "dimensions must be positive".into() });
    }
    let mut books = Vec::with_capacity(users);
    for j in 0..users {
        let (n, line) = lines
            .next()
            .ok_or(Error::CodebookParse { line: 0, msg: format!("missing `user {j}` block") })?;
        if line.split_whitespace().collect::<Vec<_>>() != ["user", &j.to_string()] {
            return Err(Error::CodebookParse { line: n, msg: format!("expected `user {j}`") });
        }
        let mut codewords = Vec::with_capacity(alphabet);
        for _ in 0..alphabet {
            let (n, line) = lines
                .next()
                .ok_or(Error::CodebookParse { line: 0, msg: format!("user {j}: too few codewords") })?;
            let nums: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let nums = nums.map_err(|e| Error::CodebookParse { line: n, msg: e.to_string() })?;
            if nums.len() != 2 * subcarriers {
                return Err(Error::CodebookParse {
                    line: n,
                    msg: format!("expected {} numbers, found {}", 2 * subcarriers, nums.len()),
                });
            }
            codewords.push(nums.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect());
        }
        books.push(Codebook::new(codewords)?);
    }
    if let Some((n, _)) = lines.next() {
        return Err(Error::CodebookParse { line: n, msg: "trailing content".into() });
    }
    CodebookSet::new(books)
}
