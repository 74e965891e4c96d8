use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector must have positive dimension")]
    EmptyVector,

    #[error("non-finite entry {value} at position {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("non-positive pivot {pivot:e} at row {index} of symmetric factorization")]
    NonPositivePivot { index: usize, pivot: f64 },

    #[error("projection onto {atom_count} atoms failed: smallest pivot {smallest_pivot:e}")]
    ProjectionFailed { atom_count: usize, smallest_pivot: f64 },

    #[error("atom {index} has zero norm")]
    ZeroAtom { index: usize },

    #[error("atoms {first} and {second} are duplicate or antipodal (|<a,b>| = {inner})")]
    DuplicateAtoms { first: usize, second: usize, inner: f64 },

    #[error("a dictionary needs at least 2 atoms, got {0}")]
    TooFewAtoms(usize),

    #[error("dictionary with {atoms} atoms of dimension {dim} needs {bytes} bytes, over the {limit} byte budget")]
    DictionaryTooLarge { atoms: usize, dim: usize, bytes: u128, limit: u128 },

    #[error("no draw reached coherence <= {target} after {retries} retries (best {best})")]
    RetryBudgetExhausted { retries: usize, target: f64, best: f64 },

    #[error("atom index {index} out of range for {count} atoms")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("atom index {0} repeated")]
    RepeatedIndex(usize),

    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("enumerating {count} supports exceeds the budget of {budget}; shrink the dictionary with a subdictionary")]
    BudgetExceeded { count: u128, budget: u64 },

    #[error("orthogonal complement degenerate after {0} retries")]
    DegenerateComplement(usize),

    #[error("OGA step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
