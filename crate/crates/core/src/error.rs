//! Error types shared by every pipeline stage.

use thiserror::Error;

/// A coefficient field breaks one of the structural hypotheses the theory
/// needs (positive density, coercive diffusion, cooperative and irreducible
/// coupling).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HypothesisViolation {
    #[error("density of species {species} is {value} at node {node}; it must be positive")]
    Density {
        species: usize,
        node: usize,
        value: f64,
    },
    #[error(
        "diffusion of species {species} at node {node} is not symmetric positive definite \
         (smallest eigenvalue {min_eigenvalue}, asymmetry {asymmetry})"
    )]
    Diffusion {
        species: usize,
        node: usize,
        min_eigenvalue: f64,
        asymmetry: f64,
    },
    #[error("coupling Pi[{alpha}][{beta}] is {value} > 0 at node {node}; the system must be cooperative")]
    Cooperativity {
        alpha: usize,
        beta: usize,
        node: usize,
        value: f64,
    },
    #[error("coupling matrix is reducible: species {isolated:?} cannot be reached from species {from}")]
    Irreducibility { from: usize, isolated: Vec<usize> },
    #[error("malformed problem definition: {0}")]
    Shape(String),
}

impl HypothesisViolation {
    /// Short machine-readable name of the violated hypothesis.
    pub fn kind(&self) -> &'static str {
        match self {
            HypothesisViolation::Density { .. } => "density",
            HypothesisViolation::Diffusion { .. } => "diffusion",
            HypothesisViolation::Cooperativity { .. } => "cooperativity",
            HypothesisViolation::Irreducibility { .. } => "irreducibility",
            HypothesisViolation::Shape(_) => "shape",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("hypothesis violation: {0}")]
    Hypothesis(#[from] HypothesisViolation),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{stage} did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("field of species {species} at node {node} is {value}; expected positive")]
    PositivityFailure {
        species: usize,
        node: usize,
        value: f64,
    },
    #[error("discrete operator has a positive off-diagonal entry {value} even with upwinding")]
    MonotonicityFailure { value: f64 },
    #[error("normalization integral {0} is not positive")]
    DegenerateNormalization(f64),
    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),
    #[error("no snapshot at time {requested} (closest {closest})")]
    TimeMismatch { requested: f64, closest: f64 },
    #[error("corrector right-hand side violates the compatibility condition (residual {residual:e})")]
    CompatibilityViolation { residual: f64 },
    #[error("dispersion tensor is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    SpdViolation { min_eigenvalue: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures of a numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::PositivityFailure { .. }
                | Error::MonotonicityFailure { .. }
                | Error::DegenerateNormalization(_)
                | Error::CompatibilityViolation { .. }
                | Error::SpdViolation { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Hypothesis(_) => "HypothesisViolation",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::PositivityFailure { .. } => "PositivityFailure",
            Error::MonotonicityFailure { .. } => "MonotonicityFailure",
            Error::DegenerateNormalization(_) => "DegenerateNormalization",
            Error::ResolutionMismatch(_) => "ResolutionMismatch",
            Error::TimeMismatch { .. } => "TimeMismatch",
            Error::CompatibilityViolation { .. } => "CompatibilityViolation",
            Error::SpdViolation { .. } => "SPDViolation",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
