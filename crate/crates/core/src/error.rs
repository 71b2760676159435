use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("cycle detected at node {node}")]
    Cycle { node: usize },
    #[error("dangling node {node}: {message}")]
    Dangling { node: usize, message: String },
    #[error("non-positive squared voltage {0}")]
    NonPositiveVoltage(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl FeederError {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        FeederError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for FeederError {
    fn from(e: serde_json::Error) -> Self {
        FeederError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AggError {
    #[error("requested {requested} kW exceeds total availability {available} kW")]
    InfeasibleTotal { requested: f64, available: f64 },
    #[error("unit {unit}: generation {p_gen} kW outside [0, {p_avail}] kW")]
    ExceedsAvailability { unit: usize, p_gen: f64, p_avail: f64 },
    #[error("invalid unit {unit}: {message}")]
    InvalidUnit { unit: usize, message: String },
    #[error("solver returned {0}")]
    Solver(String),
}

#[derive(Debug, Error)]
pub enum CapabilityError {
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    Conic(#[from] dercap_conic::ConicError),
    #[error("base demand is zero; flexibility range undefined")]
    ZeroBase,
    #[error("invalid parameter `{name}`: {message}")]
    Parameter { name: String, message: String },
    #[error("request {requested} kvar outside capability; nearest achievable {nearest} kvar")]
    OutsideCapability { requested: f64, nearest: f64 },
}

impl CapabilityError {
    pub(crate) fn param(name: impl Into<String>, message: impl Into<String>) -> Self {
        CapabilityError::Parameter {
            name: name.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Error)]
pub enum TdError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("unknown branch {0}")]
    UnknownBranch(usize),
    #[error("branch {0} is already out of service")]
    BranchOut(usize),
    #[error("removing branch {branch} islands bus {bus}")]
    Islanding { branch: usize, bus: usize },
    #[error("network is not connected: bus {0} unreachable from the slack")]
    Disconnected(usize),
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("feeder `{path}`: {source}")]
    FeederFile {
        path: String,
        #[source]
        source: FeederError,
    },
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    Capability(#[from] CapabilityError),
}

impl TdError {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        TdError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for TdError {
    fn from(e: serde_json::Error) -> Self {
        TdError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
