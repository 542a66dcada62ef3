use std::path::PathBuf;

use thiserror::Error;

use crate::glm::FitResult;

pub type Result<T, E = GravityError> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Estimation failures that still produce usable coefficients
/// ([`GravityError::NotConverged`], [`GravityError::HessianNotPositiveDefinite`])
/// carry the partial [`FitResult`] so callers can write it out.
#[derive(Debug, Error)]
pub enum GravityError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: header mismatch, expected `{expected}`, found `{found}`")]
    SchemaMismatch {
        file: String,
        expected: String,
        found: String,
    },

    #[error("{file}: row {row}, column `{column}`: {message}")]
    Parse {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{file}: row {row}, column `{column}`: negative value")]
    NegativeValue {
        file: String,
        row: usize,
        column: String,
    },

    #[error("{file}: row {row}, column `{column}`: malformed code `{code}`")]
    BadCode {
        file: String,
        row: usize,
        column: String,
        code: String,
    },

    #[error("{file}: row {row}, column `{column}`: covariate must be strictly positive")]
    NonPositiveCovariate {
        file: String,
        row: usize,
        column: String,
    },

    #[error("{file}: row {row}: gb and ni flags both set")]
    FlagConflict { file: String, row: usize },

    #[error("{file}: row {row}: distance {a}-{b} conflicts with an earlier entry")]
    AsymmetricDistance {
        file: String,
        row: usize,
        a: String,
        b: String,
    },

    #[error("no sector mapping for cn8 code {0}")]
    NoSectorMatch(String),

    #[error("duplicate attribute row for ({iso}, {year})")]
    DuplicateAttributeKey { iso: String, year: i32 },

    #[error("attribute `{attribute}` is not strictly positive on row {row}; cannot take its log")]
    NonPositiveUnderLog { attribute: String, row: usize },

    #[error("design is rank deficient; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("estimate does not exist: response is zero wherever {} is non-zero", columns.join(", "))]
    Separated { columns: Vec<String> },

    #[error("no remoteness value for year {0}")]
    MissingRemoteness(i32),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("AllZeroResponse: response is zero everywhere")]
    AllZeroResponse,

    #[error("response must be non-negative (row {0})")]
    NegativeResponse(usize),

    #[error("estimation did not converge after {} iterations", fit.iterations)]
    NotConverged { fit: Box<FitResult> },

    #[error("HessianNotPositiveDefinite: coefficients returned without covariance")]
    HessianNotPositiveDefinite { fit: Box<FitResult> },

    #[error("bread matrix X'WX is singular")]
    SingularBread,

    #[error("coefficient of variation undefined for a zero coefficient")]
    ZeroCoefficient,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("years have identical mean log value; slope is undefined")]
    DegenerateSpread,

    #[error("no bilateral flows for year {0}")]
    EmptyYear(i32),

    #[error("missing distance between {from} and {to}")]
    MissingDistance { from: String, to: String },

    #[error("tariff rate {rate} for hs6 {hs6} exceeds 100%")]
    RateAbove100Pct { hs6: String, rate: f64 },

    #[error("relative impact undefined for a zero soft-scenario coefficient")]
    ZeroBaseline,

    #[error("EU-28 base value is zero for sector {0}")]
    ZeroBaseValue(String),

    #[error("mean overflow while generating synthetic flows (row {0})")]
    MeanOverflow(usize),

    #[error("grid optimum lies on the search boundary (coefficient {0})")]
    BoundaryMaximum(usize),

    #[error("internal error: {0}")]
    Internal(String),
}

impl GravityError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GravityError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 input, 3 convergence, 4 numerical structure, 5 internal.
    pub fn exit_code(&self) -> i32 {
        use GravityError::*;
        match self {
            Io { .. }
            | SchemaMismatch { .. }
            | Parse { .. }
            | NegativeValue { .. }
            | BadCode { .. }
            | NonPositiveCovariate { .. }
            | FlagConflict { .. }
            | AsymmetricDistance { .. }
            | NoSectorMatch(_)
            | DuplicateAttributeKey { .. }
            | NonPositiveUnderLog { .. }
            | MissingRemoteness(_)
            | InvalidSpec(_)
            | AllZeroResponse
            | NegativeResponse(_)
            | InsufficientData(_)
            | EmptyYear(_)
            | MissingDistance { .. }
            | RateAbove100Pct { .. }
            | ZeroBaseValue(_) => 2,
            NotConverged { .. } => 3,
            RankDeficient { .. }
            | Separated { .. }
            | HessianNotPositiveDefinite { .. }
            | SingularBread
            | ZeroCoefficient
            | DegenerateSpread
            | ZeroBaseline
            | BoundaryMaximum(_) => 4,
            MeanOverflow(_) | Internal(_) => 5,
        }
    }

    /// The fit carried by a soft failure, if any.
    pub fn partial_fit(&self) -> Option<&FitResult> {
        match self {
            GravityError::NotConverged { fit } | GravityError::HessianNotPositiveDefinite { fit } => {
                Some(fit)
            }
            _ => None,
        }
    }

    pub fn into_partial_fit(self) -> Result<FitResult, GravityError> {
        match self {
            GravityError::NotConverged { fit } | GravityError::HessianNotPositiveDefinite { fit } => {
                Ok(*fit)
            }
            other => Err(other),
        }
    }
}
