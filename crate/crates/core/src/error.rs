use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("trace line {line}: {msg}")]
    TraceParse { line: usize, msg: String },

    #[error("unknown scenario: {0}")]
    UnknownScenario(String),

    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: u32, got: u32 },

    #[error("invalid bit width {0} (must be 1..=128)")]
    InvalidWidth(u32),

    #[error("netlist layer {layer}: {msg}")]
    NetlistLayer { layer: usize, msg: String },

    #[error("netlist: {0}")]
    Netlist(String),

    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),

    #[error("unsatisfiable constraints after {attempts} attempts")]
    Unsatisfiable { attempts: usize },

    #[error("{0}")]
    Evaluation(String),

    #[error("width mismatch for role {role}")]
    RoleWidthMismatch { role: String },

    #[error("no candidates supplied")]
    NoCandidates,

    #[error("negative weight at index {0}")]
    NegativeWeight(usize),

    #[error("missing netlist for role {0}")]
    MissingNetlist(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown context {0}")]
    UnknownContext(String),

    #[error("context {0} already registered")]
    ContextExists(String),

    #[error("probability {0} outside (0, 1]")]
    Probability(f64),

    #[error("difficulty factor r = {0} outside (0, 1]")]
    DifficultyFactor(f64),

    #[error("no cost reports supplied")]
    NoReports,

    #[error("invalid attack scenario: {0}")]
    InvalidScenario(String),

    #[error("need ≥ 2 models")]
    NeedTwoModels,

    #[error("empty trace")]
    EmptyTrace,

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
