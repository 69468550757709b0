use std::fmt;

use crate::geometry::ChainId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),

    #[error("chain {chain}: {coefficient} is negative ({value}), pose is unreachable")]
    Domain {
        chain: ChainId,
        coefficient: &'static str,
        value: f64,
    },

    #[error("circles do not intersect")]
    NoIntersection,

    #[error("point at distance {distance} is out of two-link reach")]
    OutOfReach { distance: f64 },

    #[error("chain {chain}: pose outside the reachable workspace")]
    WorkspaceViolation { chain: ChainId },

    #[error("chain {chain}: no solution with theta in (90, 180) degrees")]
    BranchViolation { chain: ChainId },

    #[error("no convergence after {iterations} iterations (residual {residual_norm:e})")]
    NoConvergence {
        iterations: usize,
        residual_norm: f64,
        best: [f64; 6],
    },

    #[error("singular jacobian (condition estimate {condition:e})")]
    SingularJacobian { condition: f64, iterate: [f64; 6] },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every grid point failed inverse kinematics")]
    EmptyDataset,

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Format { line: u64, message: String },

    #[error("lifted data matrix has numerical rank 0")]
    DegenerateData,

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("all targets are identical, R² is undefined")]
    ZeroVariance,

    #[error("unknown estimator '{0}'")]
    UnknownEstimator(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable variant name used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "InvalidParams",
            Error::Domain { .. } => "DomainError",
            Error::NoIntersection => "NoIntersection",
            Error::OutOfReach { .. } => "OutOfReach",
            Error::WorkspaceViolation { .. } => "WorkspaceViolation",
            Error::BranchViolation { .. } => "BranchViolation",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SingularJacobian { .. } => "SingularJacobian",
            Error::AtStep { source, .. } => source.kind(),
            Error::EmptyDataset => "EmptyDataset",
            Error::Io(_) => "IoError",
            Error::Format { .. } => "FormatError",
            Error::DegenerateData => "DegenerateData",
            Error::EigenFailure(_) => "EigenFailure",
            Error::Divergence { .. } => "DivergenceError",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ZeroVariance => "ZeroVariance",
            Error::UnknownEstimator(_) => "UnknownEstimator",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Json(_) => "JsonError",
        }
    }

    pub fn chain(&self) -> Option<ChainId> {
        match self {
            Error::Domain { chain, .. }
            | Error::WorkspaceViolation { chain }
            | Error::BranchViolation { chain } => Some(*chain),
            Error::AtStep { source, .. } => source.chain(),
            _ => None,
        }
    }

    pub fn step(&self) -> Option<usize> {
        match self {
            Error::AtStep { step, .. } => Some(*step),
            _ => None,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Single-line `key=value` rendering, e.g. `error=WorkspaceViolation chain=1`.
    pub fn machine_line(&self) -> MachineLine<'_> {
        MachineLine(self)
    }
}

pub struct MachineLine<'a>(&'a Error);

impl fmt::Display for MachineLine<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error={}", self.0.kind())?;
        if let Some(chain) = self.0.chain() {
            write!(f, " chain={chain}")?;
        }
        if let Some(step) = self.0.step() {
            write!(f, " step={step}")?;
        }
        if let Error::Format { line, .. } = self.0 {
            write!(f, " line={line}")?;
        }
        let message = self.0.to_string().replace('\n', " ");
        write!(f, " message=\"{}\"", message.replace('"', "'"))
    }
}
