use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian: relative asymmetry {defect:.3e} exceeds 1e-8")]
    AsymmetryTooLarge { defect: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("declared degeneracy {declared} does not match detected cluster size {detected}")]
    DegeneracyMismatch { declared: usize, detected: usize },

    #[error("tracked levels cannot be separated from the rest of the spectrum at lambda = {lambda}")]
    ClusterAmbiguity { lambda: f64 },

    #[error("spectral gap closed at lambda = {lambda} (gap = {gap:.3e})")]
    GapViolation { lambda: f64, gap: f64 },

    #[error("matrix is not an orthogonal projector (defect {defect:.3e})")]
    NotAProjector { defect: f64 },

    #[error("switching profile evaluated at positive time {tau}")]
    PositiveTime { tau: f64 },

    #[error("invalid switching profile: {0}")]
    InvalidProfile(String),

    #[error("no degenerate group of first-order shifts to lift")]
    NoDegenerateGroup,

    #[error("cross coefficient c1[{j},{k}] is undetermined (residual degeneracy)")]
    UndefinedCrossCoefficients { j: usize, k: usize },

    #[error("level tracking failed at lambda = {lambda}")]
    TrackingFailure { lambda: f64 },

    #[error("integration failed: {0}")]
    IntegrationFailure(String),

    #[error("time step {step:.3e} exceeds the resolution limit {limit:.3e}")]
    StepTooCoarse { step: f64, limit: f64 },

    #[error("truncated evolution not converged: Cauchy difference {difference:.3e} > {limit:.3e}")]
    NotConverged { difference: f64, limit: f64 },

    #[error("Gell-Mann-Low denominator vanishes (|d| = {magnitude:.3e})")]
    VanishingDenominator { magnitude: f64 },

    #[error("stage {stage}: projector displacement {distance:.6} is not below 1")]
    StageConditionViolated { stage: usize, distance: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}
