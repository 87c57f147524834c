use thiserror::Error;

/// Errors raised by the market model and its analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A structural constant violates one of the model's standing assumptions.
    #[error("parameter `{name}` out of domain: {bound}")]
    ParameterDomain { name: &'static str, bound: String },

    /// A price-rate predictor was asked to work with a non-positive price level.
    #[error("non-positive price level {price} inside a rate-of-change window")]
    NonPositivePriceLevel { price: f64 },

    /// A cleared deviation implies a non-positive price.
    #[error("cleared deviation {x} implies a non-positive price (fundamental price {pbar})")]
    NonPositivePrice { x: f64, pbar: f64 },

    /// Both candidate demands negative: impossible when supply is positive.
    #[error("impossible region: candidate demands ({z1}, {z2}) are both negative")]
    ImpossibleRegion { z1: f64, z2: f64 },

    /// The market state is malformed (empty window, fraction outside (-1, 1), ...).
    #[error("invalid market state: {0}")]
    InvalidState(String),

    /// A predictor does not satisfy f(0) = 0.
    #[error("predictor does not vanish on the zero window (f(0) = {0})")]
    NonVanishingPredictor(f64),

    /// A simulation aborted at a given period.
    #[error("period {period}: {source}")]
    AtPeriod {
        period: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(name: &'static str, bound: impl Into<String>) -> Self {
        Error::ParameterDomain {
            name,
            bound: bound.into(),
        }
    }

    pub(crate) fn at_period(self, period: usize) -> Self {
        match self {
            e @ Error::AtPeriod { .. } => e,
            e => Error::AtPeriod {
                period,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, looking through period annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPeriod { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
