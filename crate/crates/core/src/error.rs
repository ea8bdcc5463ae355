//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model evaluation, solving, differentiation, and regression.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model `{model}` has no coefficient named `{name}`")]
    UnknownCoefficient { model: String, name: String },

    #[error("unknown model `{0}`; known models: linear-sl, nonlinear-sl, poisson2, euler-bernoulli")]
    UnknownModel(String),

    #[error("requested {requested} forcings but the parameter grid only holds {available}")]
    ForcingGridExhausted { requested: usize, available: usize },

    #[error("integration diverged at step {step} (x = {x}): state is not finite")]
    Divergence { step: usize, x: f64 },

    #[error("shooting failed to converge for forcing {forcing}: last residual {residual}")]
    Convergence { forcing: String, residual: f64 },

    #[error("derivative order {order} out of supported range 1..=4")]
    DerivativeOrder { order: usize },

    #[error("grid with {n} points is too short for the order-{order} stencil")]
    GridTooShort { n: usize, order: usize },

    #[error("ill-conditioned local polynomial fit over window [{lo}, {hi}]")]
    IllConditionedFit { lo: usize, hi: usize },

    #[error("candidate term `{0}` has zero norm; cannot normalize")]
    ZeroNormColumn(String),

    #[error("unknown candidate term label `{0}`")]
    UnknownTerm(String),

    #[error("library is not normalized; call `normalize` first")]
    NotNormalized,

    #[error("model does not include the forcing term; operator inference is impossible")]
    MissingForcingTerm,

    #[error("forcing coefficient is below 1e-10 at grid point {index}; operator is singular there")]
    SingularForcingCoefficient { index: usize },

    #[error("ground-truth field is identically zero on the trimmed region")]
    ZeroTruthField,
}

pub type Result<T> = core::result::Result<T, Error>;
