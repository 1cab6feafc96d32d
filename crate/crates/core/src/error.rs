use thiserror::Error;

/// Which stoichiometry left the admissible open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stoichiometry {
    PositiveAverage,
    NegativeAverage,
    PositiveSurface,
    NegativeSurface,
}

impl std::fmt::Display for Stoichiometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::PositiveAverage => "x_sp_avg",
            Self::NegativeAverage => "x_sn_avg",
            Self::PositiveSurface => "x_sp_surf",
            Self::NegativeSurface => "x_sn_surf",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("electrode saturation: {field} = {value} is outside (0, 1)")]
    Saturation { field: Stoichiometry, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error at line {line}: {msg}")]
    Ingest { line: usize, msg: String },

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Self::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Self::AtStep { .. } => e,
            other => Self::AtStep {
                step,
                source: Box::new(other),
            },
        }
    }

    /// True for errors caused by invalid user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Self::Config(_) | Self::Ingest { .. } | Self::Parse(_) | Self::LengthMismatch(..) => {
                true
            }
            Self::AtStep { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
