//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown initial-data family `{0}`")]
    UnknownFamily(String),

    #[error("truncation radius too small: captures only {captured:.9} of analytic mass (need >= {required:.9})")]
    TruncationRadius { captured: f64, required: f64 },

    #[error("empty ensemble: no marker survived the weight floor")]
    EmptyEnsemble,

    #[error("singular kernel evaluation at x = 0 with zero softening")]
    SingularEvaluation,

    #[error("unsupported dimension {0} (only 2 and 3 are supported)")]
    UnsupportedDim(usize),

    #[error("density grid would need {requested} cells, above the cap of {cap}")]
    GridTooLarge { requested: usize, cap: usize },

    #[error("exponent relation violated: {0}")]
    ExponentRelation(String),

    #[error("mass mismatch between ensembles: {0:.3e} vs {1:.3e}")]
    MassMismatch(f64, f64),

    #[error("transport problem size {0} exceeds the configured cap {1}")]
    TransportTooLarge(usize, usize),

    #[error("perturbation too large: initial transport functional {0:.6e} exceeds the 1/e regime")]
    RegimeViolatedAtStart(f64),

    #[error("check `{check}` needs dimension {needs}, run has dimension {has}")]
    DimensionMismatch {
        check: String,
        needs: usize,
        has: usize,
    },

    #[error("time series too short: {0}")]
    SeriesTooShort(String),

    #[error("non-finite value detected at frame {frame} ({what})")]
    NumericalBlowup { frame: usize, what: String },

    #[error("{0}")]
    Invalid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
