use thiserror::Error;

pub type Result<T> = std::result::Result<T, AggError>;

#[derive(Debug, Error)]
pub enum AggError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("iterative solver did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("right-hand side is incompatible with the Neumann/periodic problem (mean {mean:.3e})")]
    IncompatibleRhs { mean: f64 },

    #[error("field mean must vanish for this norm (mean {mean:.3e})")]
    MeanNotZero { mean: f64 },

    #[error("argument {value} outside the open interval (-1, 1)")]
    DomainError { value: f64 },

    #[error("{which} coefficient polynomial is not bounded away from zero on [-1, 1] (lower bound {lower:.3e})")]
    NonPositiveCoefficient { which: &'static str, lower: f64 },

    #[error("phase field left the separation band: max |phi| = {max_abs}, allowed {limit}")]
    SeparationViolated { max_abs: f64, limit: f64 },

    #[error("Newton iteration failed: residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("momentum linear solve failed: {0}")]
    LinearSolveDiverged(Box<AggError>),

    #[error("velocity is not discretely solenoidal (max |div v| = {max_div:.3e})")]
    NotSolenoidal { max_div: f64 },

    #[error("exponents must satisfy q, r >= 2 (got q = {q}, r = {r})")]
    BadExponents { q: f64, r: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("gradient flow did not reach stationarity before T = {t:.3e} (|grad mu| = {residual:.3e})")]
    NotConverged { t: f64, residual: f64 },

    #[error("perturbation pushes the phase field to max |phi| = {max_abs}")]
    PerturbationTooLarge { max_abs: f64 },

    #[error("decay window is degenerate: {0}")]
    DegenerateWindow(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: String, reason: String },

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: u64,
        #[source]
        source: Box<AggError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AggError {
    pub(crate) fn at_step(self, step: u64) -> Self {
        match self {
            e @ AggError::AtStep { .. } => e,
            e => AggError::AtStep { step, source: Box::new(e) },
        }
    }

    /// Strips any step tag.
    pub fn root(&self) -> &AggError {
        match self {
            AggError::AtStep { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for configuration and input errors as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            AggError::InvalidGrid(_)
                | AggError::NonPositiveCoefficient { .. }
                | AggError::BadExponents { .. }
                | AggError::Parse { .. }
                | AggError::Validation { .. }
                | AggError::PerturbationTooLarge { .. }
                | AggError::Snapshot(_)
                | AggError::InsufficientData(_)
                | AggError::Io(_)
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            AggError::InvalidGrid(_) => "InvalidGrid",
            AggError::NonConvergence { .. } => "NonConvergence",
            AggError::IncompatibleRhs { .. } => "IncompatibleRHS",
            AggError::MeanNotZero { .. } => "MeanNotZero",
            AggError::DomainError { .. } => "DomainError",
            AggError::NonPositiveCoefficient { .. } => "NonPositiveCoefficient",
            AggError::SeparationViolated { .. } => "SeparationViolated",
            AggError::NewtonDiverged { .. } => "NewtonDiverged",
            AggError::LinearSolveDiverged(_) => "LinearSolveDiverged",
            AggError::NotSolenoidal { .. } => "NotSolenoidal",
            AggError::BadExponents { .. } => "BadExponents",
            AggError::InsufficientData(_) => "InsufficientData",
            AggError::NotConverged { .. } => "NotConverged",
            AggError::PerturbationTooLarge { .. } => "PerturbationTooLarge",
            AggError::DegenerateWindow(_) => "DegenerateWindow",
            AggError::Parse { .. } => "ParseError",
            AggError::Validation { .. } => "ValidationError",
            AggError::Snapshot(_) => "SnapshotError",
            AggError::AtStep { .. } => unreachable!(),
            AggError::Io(_) => "IoError",
        }
    }
}
