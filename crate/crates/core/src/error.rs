use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("levy measure has an infinite first moment: {0}")]
    InfiniteFirstMoment(String),

    #[error("levy measure has an infinite moment of order {order}: {detail}")]
    InfiniteMoment { order: f64, detail: String },

    #[error(
        "a/sigma^2 = {ratio:.5} does not exceed {bound:.5}, required for discrete observation \
         (pass --allow-outside-a3 to override)"
    )]
    DiscreteCondition { ratio: f64, bound: f64 },

    #[error("quadrature did not converge on [{lower}, {upper}]: error estimate {error:.3e} after {panels} panels")]
    Quadrature {
        lower: f64,
        upper: f64,
        error: f64,
        panels: usize,
    },

    #[error("flow derivative undefined: state {state} at step {step}")]
    FlowUndefined { step: usize, state: f64 },

    #[error("density inversion outside proven regime: 2a = {two_a} <= sigma^2 = {sigma_sq}")]
    DensityRegime { two_a: f64, sigma_sq: f64 },

    #[error("accuracy: {0}")]
    Accuracy(String),

    #[error("maximizer not bracketed: {0}")]
    NotBracketed(String),

    #[error("no sampler available: {0}")]
    NoSampler(String),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("{module}/{phase}: {source}")]
    Tagged {
        module: &'static str,
        phase: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn tag(self, module: &'static str, phase: impl Into<String>) -> Error {
        Error::Tagged {
            module,
            phase: phase.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
