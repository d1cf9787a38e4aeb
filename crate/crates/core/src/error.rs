use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("syntax error in {what}: {message}")]
    Syntax { what: String, message: String },

    #[error("validation failed:\n{}", violations.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Validation { violations: Vec<Violation> },

    #[error("unknown map '{0}'")]
    UnknownMap(String),

    #[error("no spawn point matching '{query}' on map '{map_id}'")]
    NoSpawnMatch { map_id: String, query: String },

    #[error("relation '{relation}' unsatisfiable for lane '{lane_id}'")]
    UnsatisfiableRelation { relation: String, lane_id: String },

    #[error("lane '{0}' is not a signalized approach")]
    NotSignalized(String),

    #[error("behavior kind '{0}' already registered")]
    DuplicateKind(String),

    #[error("unknown behavior kind '{0}'")]
    UnknownKind(String),

    #[error("spawn infeasible: {0}")]
    SpawnInfeasible(String),

    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),

    #[error("backend output rejected after {attempts} attempts: {last_error}")]
    SchemaViolation { attempts: u32, last_error: String },

    #[error("all refinement knobs at their bounds")]
    KnobsExhausted,

    #[error("malformed trace at line {line}: {message}")]
    MalformedTrace { line: usize, message: String },

    #[error("{0}")]
    Other(String),
}

/// A single cross-reference or range violation, reported with the path of
/// the offending field so the refiner and the operator can locate it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
