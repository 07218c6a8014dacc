use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value from component `{component}`")]
    NonFinite { component: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("nuisance function is undefined at z = {z:?}")]
    OffSupport { z: Vec<f64> },

    #[error("conditioning stratum {stratum} has zero probability")]
    ZeroProbabilityStratum { stratum: String },

    #[error("E(S_ab | Z) vanishes at stratum {stratum}; the nuisance formulas are undefined there")]
    DegenerateStratum { stratum: String },

    #[error("sign of E(S_ab | Z) at stratum {stratum} contradicts the declared sign {declared}")]
    SignMismatch { stratum: String, declared: i8 },

    #[error("identity `{identity}` violated: residual {residual:e} exceeds {tol:e}")]
    IdentityViolation {
        identity: String,
        residual: f64,
        tol: f64,
    },

    #[error("singular system: {0}; increase lambda or reduce the basis")]
    Singular(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unknown catalog entry `{0}`")]
    UnknownSpec(String),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at_row(self, row: usize) -> Error {
        Error::AtRow {
            row,
            source: Box::new(self),
        }
    }
}
