//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural problems: mismatched dimensions, bad counts, malformed input.
    #[error("structural error: {0}")]
    Structural(String),

    /// A derived parameter fell below the smallest representable positive f64.
    /// Carries the base-10 log of the offending magnitude so the caller can
    /// report it and switch to practical mode.
    #[error("parameter underflow: {name} has log10 magnitude {log10_value:.1}; switch to practical mode")]
    ParameterUnderflow { name: &'static str, log10_value: f64 },

    /// Localization event captured no samples. Carries the analytic event
    /// probability and the batch size so undersampling can be diagnosed.
    #[error("empty localization event (analytic probability {analytic_probability:.3e}, batch size {batch_size})")]
    EmptyEvent {
        analytic_probability: f64,
        batch_size: usize,
    },

    /// Predicted candidate net size exceeds the configured cap.
    #[error("predicted net size {predicted:.3e} exceeds cap {cap}; coarsen the resolution or shrink k")]
    NetTooLarge { predicted: f64, cap: usize },

    /// Eigensolver failed to converge.
    #[error("eigensolver did not converge: {diagnostics}")]
    EigenNonConvergence { diagnostics: String },

    /// Interval so far in the tail that the normal mass underflows.
    #[error("interval ({a}, {b}) too far in the tail: normal mass underflows")]
    IntervalTooFar { a: f64, b: f64 },

    /// Requested quadrature precision could not be certified.
    #[error("quadrature did not converge: Richardson disagreement {disagreement:.3e}")]
    QuadratureNonConvergence { disagreement: f64 },

    /// Variance/subgaussian-norm pair is impossible for any random variable.
    #[error("inconsistent moments: variance {variance} exceeds K^2 ln 2 = {bound} for K = {k}")]
    InconsistentMoments { variance: f64, k: f64, bound: f64 },

    /// Event bounds parameters produce a nonpositive logarithm.
    #[error("invalid event parameters: k/delta = {ratio} must exceed 1")]
    InvalidEvent { ratio: f64 },

    /// Refinement was handed a batch whose noise is not a single shared scalar.
    #[error("refinement requires shared-scalar noise (got {kind}); pass force=true to override")]
    NotSharedNoise { kind: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }
}
