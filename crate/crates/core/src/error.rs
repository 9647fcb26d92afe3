use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("{path}: expected {expected} distances, got {found}")]
    DistanceCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: negative distance {value}")]
    NegativeDistance {
        path: PathBuf,
        line: usize,
        value: f64,
    },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("latent paths are inconsistent: {0}")]
    InvalidPaths(String),
    #[error("population {0} is unoccupied; prune it before resampling weights")]
    UnoccupiedPopulation(usize),
    #[error("atom {atom} referenced by individual {individual} has no instantiated mass")]
    ZeroMassAtom { individual: usize, atom: usize },
    #[error("stick extension exceeded {cap} new atoms in one sweep (min slice {min_slice:e})")]
    ExtensionCap { cap: usize, min_slice: f64 },
    #[error("forward filter degenerate at locus {locus}")]
    FilterDegenerate { locus: usize },
    #[error("individual {0} has no population above its slice")]
    EmptyActiveSet(usize),
    #[error("instance too large for enumeration: {0} configurations")]
    InstanceTooLarge(u128),
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error("summary error: {0}")]
    Summary(String),
    #[error("trace error: {0}")]
    Trace(String),
    #[error("{path}: {cause}")]
    File {
        path: PathBuf,
        cause: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn file(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |cause| Error::File {
            path: path.to_path_buf(),
            cause,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
