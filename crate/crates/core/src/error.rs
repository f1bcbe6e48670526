use thiserror::Error;

use crate::instance::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),

    #[error("vertex {vertex} has out-degree {out_degree}, above the bound {bound}")]
    Degree {
        vertex: usize,
        out_degree: usize,
        bound: usize,
    },

    #[error("instance has {n} items; exhaustive enumeration supports at most {max}")]
    Size { n: usize, max: usize },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("bad parameter: {0}")]
    Param(String),

    #[error(
        "chance {chance}, item {item}: estimated add rate {estimate:.6} is below the target {target:.6}"
    )]
    Attenuation {
        chance: usize,
        item: usize,
        estimate: f64,
        target: f64,
    },

    #[error("demand {demand} was never safe in {runs} simulation runs")]
    Estimate { demand: usize, runs: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
