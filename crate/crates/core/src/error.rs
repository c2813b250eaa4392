use std::path::PathBuf;

use crate::solver::SolveStatus;

/// Errors produced anywhere in the signal chain, the allocator or the
/// experiment driver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{users} users exceed the {capacity} distinct supports of size {degree} on {subcarriers} subcarriers")]
    CapacityExceeded {
        users: usize,
        subcarriers: usize,
        degree: usize,
        capacity: u128,
    },
    #[error("degree infeasible: J*d_f = {users}*{d_f} is not a multiple of K = {subcarriers}")]
    DegreeInfeasible {
        users: usize,
        subcarriers: usize,
        d_f: usize,
    },
    #[error("codeword index {word} out of range for alphabet of size {alphabet}")]
    WordOutOfRange { word: usize, alphabet: usize },
    #[error("user index {user} out of range ({users} users)")]
    UserOutOfRange { user: usize, users: usize },
    #[error("codebook parse error at line {line}: {msg}")]
    CodebookParse { line: usize, msg: String },
    #[error("invalid codebook: {0}")]
    CodebookInvalid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("enumeration budget exceeded: {count} candidates > budget {budget}")]
    EnumerationBudget { count: u128, budget: u128 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("convex solver failed with status {status:?}: {context}")]
    Solver {
        status: SolveStatus,
        context: String,
    },
    #[error("repair failed: {0}")]
    Repair(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
