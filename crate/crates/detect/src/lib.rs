//! Residual-based anomaly detection.
//!
//! A [`NormativeModel`] holds the mean and covariance of nominal
//! real-minus-twin residuals. Live residuals are scored by squared
//! Mahalanobis distance and compared to a chi-squared quantile; a debounced
//! exceedance produces an [`AnomalyEvent`], which is expanded into an
//! [`AnomalySignature`] for characterisation.

pub mod chi2;
pub mod detector;
pub mod model;
pub mod signature;

pub use chi2::{chi2_cdf, chi2_quantile};
pub use detector::{detect, AnomalyEvent, Detector, DEFAULT_DEBOUNCE};
pub use model::{
    fit_normative_model, mahalanobis_sq, NormativeModel, Regularization, Residual,
    SAMPLES_PER_DOF,
};
pub use signature::{
    build_anomaly_signature, AnomalySignature, ChannelSpec, ChannelSummary, WindowSample,
    DEFAULT_WINDOW, MAX_TOP_CHANNELS, TOP_Z,
};

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("model fit needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite value in record {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("debounce must be >= 1")]
    InvalidDebounce,
    #[error("anomaly window is empty")]
    EmptyWindow,
    #[error("trigger tick t={0} not in window")]
    TriggerNotInWindow(f64),
    #[error("corrupt model or signature: {0}")]
    Corrupt(String),
}
