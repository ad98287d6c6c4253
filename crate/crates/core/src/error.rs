use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading or validating input data.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed grid file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid grid: {0}")]
    Validation(String),
    #[error("scaling factor {0} is not on the 5% lattice")]
    OffLattice(f64),
    #[error("invalid profile: {0}")]
    Profile(String),
}

/// Errors from the optimisation layer.
#[derive(Debug, Error)]
pub enum OpfError {
    #[error("power flow did not converge")]
    PowerFlowDiverged,
    #[error("grid has no controllable DER")]
    NothingToDispatch,
    #[error("dispatch has {got} entries, grid has {expected} DERs")]
    DispatchShape { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("no training samples")]
    NoSamples,
    #[error("no non-empty training bucket for DER {0}")]
    NoData(usize),
    #[error("model set is missing ({channel}, {op_pct}%)")]
    MissingModel { channel: char, op_pct: u32 },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Errors from the simulation harness.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("power flow diverged at t={t_s} s (max mismatch {mismatch:.3e} pu)")]
    Diverged { t_s: f64, mismatch: f64 },
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
