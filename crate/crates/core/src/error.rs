use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("symbol {symbol} is not in the alphabet (size {size})")]
    InvalidSymbol { symbol: u32, size: usize },

    #[error("symbol indices are 1-based, got 0")]
    ZeroSymbol,

    #[error("point {x} lies outside the domain [{lo}, {hi}]")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },

    #[error("operation requires a nonempty word")]
    EmptyWord,

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("potential family is not summable (tail exponent {exponent} <= 1)")]
    NonSummable { exponent: f64 },

    #[error("infinite alphabet has no tail descriptor")]
    MissingTail,

    #[error("operation needs a finite truncation for this system")]
    TruncationRequired,

    #[error("no sign change in bracket [{lo}, {hi}] (f = {f_lo}, {f_hi})")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("regularity check failed at q = {q}: P(q, {t}) = {value}")]
    Irregular { q: f64, t: f64, value: f64 },

    #[error("beta(0) = {0} is not positive")]
    NonPositiveBeta0(f64),

    #[error("identity residual |beta(q_r) - r q_r| = {residual:e} exceeds {tolerance:e}")]
    IdentityResidual { residual: f64, tolerance: f64 },

    #[error("truncation deficit {deficit:e} exceeds threshold {threshold:e}")]
    TruncationDeficit { deficit: f64, threshold: f64 },

    #[error("empty sample set")]
    EmptySample,

    #[error("empty codebook")]
    EmptyCodebook,

    #[error("need at least {needed} runs at distinct n, got {got}")]
    InsufficientRuns { needed: usize, got: usize },

    #[error("quantization error must be positive, got {0}")]
    NonPositiveError(f64),

    #[error("grid too coarse: beta(q) - r q has no sign change on the grid")]
    GridTooCoarse,

    #[error("antichain has {cardinality} words, more than n = {n}")]
    AntichainTooLarge { cardinality: usize, n: usize },

    #[error("antichain expansion exceeded depth {0}")]
    AntichainDepth(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (brackets, summability, regularity)
    /// as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonSummable { .. }
                | Error::NoSignChange { .. }
                | Error::Irregular { .. }
                | Error::NonPositiveBeta0(_)
                | Error::IdentityResidual { .. }
                | Error::TruncationDeficit { .. }
                | Error::NonPositiveError(_)
                | Error::GridTooCoarse
                | Error::AntichainTooLarge { .. }
                | Error::AntichainDepth(_)
        )
    }
}
