use thiserror::Error;

/// Errors surfaced by the exponent, measure, solver and simulator layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "quadrature did not reach the requested tolerance {requested:e}; achieved {achieved:e}"
    )]
    QuadratureTolerance { requested: f64, achieved: f64 },
    #[error("failed to bracket the target within lambda_max = {lambda_max:e}")]
    BracketExceeded { lambda_max: f64 },
    #[error("not the exponent of a spectrally positive Levy process: {0}")]
    InvalidExponent(String),
    #[error("jump density must decay near zero like r^-a with a < 3, declared a = {0}")]
    JumpDensityNotIntegrable(f64),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("operation needs finite measures, got a divergent one")]
    DivergentMeasure,
    #[error("grid spacings differ ({left:e} vs {right:e}); resample one side first")]
    IncompatibleSpacing { left: f64, right: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("evaluation point {0} lies outside the state interval")]
    OutsideInterval(f64),
    #[error("level {level} must not exceed the issue point {x}")]
    LevelAboveIssue { level: f64, x: f64 },
    #[error("scale measure has diverged; its transform carries no information")]
    DivergedScale,
    #[error("gamma is not carried by a lattice alpha*N")]
    OffLattice,
    #[error("expected gamma of shape {expected}, found {found}")]
    WrongGammaShape {
        expected: &'static str,
        found: String,
    },
    #[error(
        "solver grid must start at the base point psi^-1(p); psi - p is nonpositive at z = {0}"
    )]
    GridLeftOfBase(f64),
    #[error("gamma density vanishes near zero; the density solver does not apply, build the series instead")]
    DensityVanishesAtZero,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
