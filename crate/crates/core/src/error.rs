use thiserror::Error;

use crate::subset::SubsetSimResult;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the support or domain of a distribution or function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tunnel or building geometry that the closed-form model cannot evaluate.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Subset simulation ran out of levels before reaching the failure domain.
    #[error("subset simulation stopped after {levels} levels with threshold {threshold:.6e} still above zero")]
    MaxLevels {
        levels: usize,
        threshold: f64,
        partial: Box<SubsetSimResult>,
    },

    /// Crude Monte Carlo recorded no hits.
    #[error("no hits in {samples} Monte Carlo samples; increase n or use subset simulation")]
    NoHits { samples: usize },

    /// The adaptive updating loop did not reach the COV target.
    #[error("COV of P(F|Z) is {cov:.4} after {iterations} outer iterations (target {target})")]
    NotConverged {
        iterations: usize,
        cov: f64,
        target: f64,
        best: Box<crate::updating::UpdateResult>,
    },

    /// A numerical procedure became unstable (reciprocal moments, singular matrices).
    #[error("numerical instability: {0}")]
    Unstable(String),

    /// Scenario file or command-line configuration problem.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Clone for Error {
    fn clone(&self) -> Self {
        match self {
            Error::Domain(m) => Error::Domain(m.clone()),
            Error::Geometry(m) => Error::Geometry(m.clone()),
            Error::Contract(m) => Error::Contract(m.clone()),
            Error::MaxLevels {
                levels,
                threshold,
                partial,
            } => Error::MaxLevels {
                levels: *levels,
                threshold: *threshold,
                partial: partial.clone(),
            },
            Error::NoHits { samples } => Error::NoHits { samples: *samples },
            Error::NotConverged {
                iterations,
                cov,
                target,
                best,
            } => Error::NotConverged {
                iterations: *iterations,
                cov: *cov,
                target: *target,
                best: best.clone(),
            },
            Error::Unstable(m) => Error::Unstable(m.clone()),
            Error::Config(m) => Error::Config(m.clone()),
            Error::Io { path, source } => Error::Io {
                path: path.clone(),
                source: std::io::Error::new(source.kind(), source.to_string()),
            },
        }
    }
}

impl Error {
    /// Stable machine-readable category, used as the CLI error tag.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Geometry(_) => "geometry",
            Error::Contract(_) => "contract",
            Error::MaxLevels { .. } => "max-levels",
            Error::NoHits { .. } => "no-hits",
            Error::NotConverged { .. } => "not-converged",
            Error::Unstable(_) => "unstable",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 3,
            Error::Domain(_) | Error::Geometry(_) | Error::Contract(_) => 4,
            Error::MaxLevels { .. } | Error::NoHits { .. } | Error::NotConverged { .. } => 5,
            Error::Unstable(_) => 6,
        }
    }
}
