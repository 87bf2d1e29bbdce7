//! Error type shared across the crate.
//!
//! Errors fall into three CLI exit-code categories: configuration (2),
//! data/structural (3), and numeric (4). `Error::exit_code` performs the
//! mapping; success is 0.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("{name} = {value} out of range ({range})")]
    Argument {
        name: &'static str,
        value: String,
        range: String,
    },

    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{context}: shape mismatch, {left} vs {right}")]
    ShapeMismatch {
        context: &'static str,
        left: String,
        right: String,
    },

    #[error("{what} differs at position {position}: {left} vs {right}")]
    IndexMismatch {
        what: &'static str,
        position: usize,
        left: String,
        right: String,
    },

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("duplicate grid_id {0}")]
    DuplicateGridId(String),

    #[error("grids {first} and {second} occupy the same lattice cell ({row}, {col})")]
    DuplicateCell {
        first: String,
        second: String,
        row: i64,
        col: i64,
    },

    #[error("grid {grid_id} sits {offset:.3} of a step away from the inferred lattice")]
    OffLattice { grid_id: String, offset: f64 },

    #[error("degenerate spatial extent: all points coincide")]
    DegenerateExtent,

    #[error("coincident locations {first} and {second}")]
    CoincidentLocations { first: String, second: String },

    #[error("unknown {field}: {value}")]
    Vocabulary { field: &'static str, value: String },

    #[error("{context} requires complete data; {missing} masked entries present")]
    IncompleteData { context: &'static str, missing: usize },

    #[error("{context}: need at least {needed} observations, got {got}")]
    InsufficientData {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("pair ({a}, {b}) has {got} complete rows; at least {needed} required")]
    InsufficientOverlap {
        a: String,
        b: String,
        got: usize,
        needed: usize,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("matrix asymmetric: max |a_ij - a_ji| = {max_dev:.3e}")]
    Asymmetric { max_dev: f64 },

    #[error("rank-deficient matrix pair: |r[{index},{index}]| = {value:.3e}")]
    RankDeficient { index: usize, value: f64 },

    #[error("zero variance in {context}: {column}")]
    ZeroVariance {
        context: &'static str,
        column: String,
    },

    #[error("aspect error: p = {p} exceeds n = {n}")]
    Aspect { p: usize, n: usize },

    #[error("weight matrix has no nonzero entries")]
    EmptyWeights,
}

impl Error {
    /// Exit-code category: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Config(_) | Argument { .. } => 2,
            Io { .. }
            | Parse { .. }
            | ShapeMismatch { .. }
            | IndexMismatch { .. }
            | EmptySelection(_)
            | DuplicateGridId(_)
            | DuplicateCell { .. }
            | OffLattice { .. }
            | DegenerateExtent
            | CoincidentLocations { .. }
            | Vocabulary { .. }
            | IncompleteData { .. }
            | InsufficientData { .. }
            | InsufficientOverlap { .. } => 3,
            NonFinite { .. }
            | Asymmetric { .. }
            | RankDeficient { .. }
            | ZeroVariance { .. }
            | Aspect { .. }
            | EmptyWeights => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
