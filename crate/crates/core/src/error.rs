use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid group spec: {0}")]
    InvalidGroup(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("probability out of range: {0}")]
    OutOfRange(String),

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("quotient chain is reducible ({reached} of {order} cosets reachable); the support cannot generate the group")]
    Reducible { reached: usize, order: usize },

    #[error("stationary distribution is not uniform on the cosets")]
    NonUniformStationary,

    #[error("singular linear system")]
    Singular,

    #[error("closed-form prediction needs a split extension (factor set must vanish)")]
    NonSplit,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("dominant eigenvalue is not isolated (modulus gap {gap:.3e})")]
    NearDegenerate { gap: f64 },

    #[error("distributions live on different group specs")]
    SpecMismatch,

    #[error("group spec is not a direct product")]
    NotProduct,

    #[error("memory budget exceeded: need ~{needed_mib} MiB, budget {budget_mib} MiB (feasible up to n = {feasible_n})")]
    BudgetExceeded {
        needed_mib: u64,
        budget_mib: u64,
        feasible_n: u64,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}
