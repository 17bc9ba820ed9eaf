use num_bigint::BigUint;
use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("ratio out of range: {value} in {context} (must lie in (0,1))")]
    RatioOutOfRange { value: f64, context: String },

    #[error("translation out of range: {value} in {context} (must lie in [0,1))")]
    TranslationOutOfRange { value: f64, context: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("malformed specification: {0}")]
    Schema(String),

    #[error("invalid number {0:?}")]
    Number(String),

    #[error("projection length {requested} out of range for a tuple of length {len}")]
    ProjectionOutOfRange { len: usize, requested: usize },

    #[error("coordinate {coordinate} out of range 1..={dimension}")]
    CoordinateOutOfRange { coordinate: usize, dimension: usize },

    #[error("empty coordinate set")]
    EmptyCoordinateSet,

    #[error("invalid specification:\n{0}")]
    InvalidSpec(ValidationReport),

    #[error("{dimension}! permutations exceed the budget (dimension cap {cap})")]
    PermutationBudget { dimension: usize, cap: usize },

    #[error("support mismatch: expected {expected} masses, found {found}")]
    SupportMismatch { expected: usize, found: usize },

    #[error("not a probability vector: {0}")]
    NotProbability(String),

    #[error("coordinate {coordinate} is not available on level {level}")]
    LevelMismatch { coordinate: usize, level: usize },

    #[error("zero Lyapunov exponent in coordinate {0}")]
    ZeroLyapunov(usize),

    #[error("symbol {symbol} out of range 1..={alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("empty word")]
    EmptyWord,

    #[error("{count} types exceed the enumeration cap {cap}")]
    TypeCap { count: BigUint, cap: u64 },

    #[error("word exhausted before its product reached the scale")]
    WordExhausted,

    #[error("scale must lie in (0,1), got {0}")]
    ScaleOutOfRange(f64),

    #[error("enumeration budget {budget} exceeded; at least {partial} cubes")]
    BudgetExceeded { partial: BigUint, budget: u64 },

    #[error("malformed cube: {0}")]
    MalformedCube(String),

    #[error("{operation} requires {expected}, got {found}")]
    Unsupported {
        operation: &'static str,
        expected: &'static str,
        found: String,
    },

    #[error("need at least {needed} scales, got {found}")]
    TooFewScales { needed: usize, found: usize },
}
