//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used to pick the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or schema (exit code 2).
    Config,
    /// Bad or unusable data (exit code 3).
    Data,
    /// A model or estimator could not be computed (exit code 4).
    Estimation,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Estimation => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Estimation => "estimation",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("singular fit: design column {column} is collinear or has no variation")]
    Singular { column: usize },

    #[error("separation detected: fitted probabilities reach 0 or 1 (coefficient norm {norm:.3e}, norm limit {limit:.1e})")]
    Separation { norm: f64, limit: f64 },

    #[error("insufficient local data: effective sample {effective:.3} below required {required}")]
    InsufficientLocalData { effective: f64, required: usize },

    #[error("mediator level {level} out of range 0..{levels}")]
    LevelOutOfRange { level: f64, levels: usize },

    #[error("no support at (g={g}, m={m}): {group_count} units in group, {cell_count} at the level")]
    UnsupportedLevel {
        g: u8,
        m: f64,
        group_count: usize,
        cell_count: usize,
    },

    #[error("{which} model failed: {source}")]
    Nuisance {
        which: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn nuisance(which: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Nuisance {
            which,
            source: Box::new(source),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Schema(_) | Error::Config(_) => ErrorClass::Config,
            Error::Data(_)
            | Error::Parse { .. }
            | Error::EmptyGroup(_)
            | Error::DegenerateSample(_)
            | Error::LevelOutOfRange { .. }
            | Error::Io { .. } => ErrorClass::Data,
            Error::Singular { .. }
            | Error::Separation { .. }
            | Error::InsufficientLocalData { .. }
            | Error::UnsupportedLevel { .. } => ErrorClass::Estimation,
            Error::Nuisance { source, .. } => match source.class() {
                ErrorClass::Config => ErrorClass::Config,
                _ => ErrorClass::Estimation,
            },
        }
    }

    /// Name of the module the failure originated in.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Schema(_) | Error::Singular { .. } | Error::Separation { .. } => "model_core",
            Error::InsufficientLocalData { .. } | Error::DegenerateSample(_) => "model_core",
            Error::Nuisance { .. } | Error::LevelOutOfRange { .. } => "nuisance",
            Error::EmptyGroup(_) => "natural_effects",
            Error::UnsupportedLevel { .. } => "controlled_effects",
            Error::Config(_) | Error::Data(_) | Error::Parse { .. } | Error::Io { .. } => "cli_io",
        }
    }
}
