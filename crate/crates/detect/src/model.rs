//! Normative residual model: mean, regularized covariance and the chi-squared
//! detection threshold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chi2::chi2_quantile;
use crate::DetectError;

/// Real-minus-twin residual at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub t: f64,
    pub values: Vec<f64>,
}

impl Residual {
    pub fn new(t: f64, values: impl Into<Vec<f64>>) -> Self {
        Self {
            t,
            values: values.into(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.values.iter().all(|v| v.is_finite())
    }
}

/// Diagonal loading applied to the sample covariance before inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    /// Add `eps * I`.
    Absolute(f64),
    /// Add `scale * trace(S) / dof * I`, falling back to `scale * I` when the
    /// trace is zero.
    TraceScaled(f64),
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::TraceScaled(1e-6)
    }
}

impl Regularization {
    fn epsilon(self, sample_cov: &DMatrix<f64>) -> f64 {
        match self {
            Regularization::Absolute(eps) => eps,
            Regularization::TraceScaled(scale) => {
                let dof = sample_cov.nrows() as f64;
                let eps = scale * sample_cov.trace() / dof;
                if eps > 0.0 {
                    eps
                } else {
                    scale
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormativeModel {
    channels: Vec<String>,
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    p_level: f64,
    threshold: f64,
    sample_count: usize,
}

/// On-disk form. The inverse is recomputed on load.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    channels: Vec<String>,
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    dof: usize,
    p_level: f64,
    threshold: f64,
    sample_count: usize,
}

/// Minimum samples per residual dimension accepted by [`fit_normative_model`].
pub const SAMPLES_PER_DOF: usize = 10;

/// Fits the mean and unbiased covariance of nominal residuals.
pub fn fit_normative_model(
    nominal: &[Residual],
    p_level: f64,
    regularization: Regularization,
) -> Result<NormativeModel, DetectError> {
    let dof = nominal.first().map(|r| r.values.len()).unwrap_or(0);
    let needed = SAMPLES_PER_DOF * dof.max(1);
    if nominal.len() < needed {
        return Err(DetectError::TooFewSamples {
            needed,
            got: nominal.len(),
        });
    }
    for (i, r) in nominal.iter().enumerate() {
        if r.values.len() != dof {
            return Err(DetectError::DimensionMismatch {
                expected: dof,
                got: r.values.len(),
            });
        }
        if !r.is_finite() {
            return Err(DetectError::NonFinite { index: i });
        }
    }

    let n = nominal.len() as f64;
    let mut mu = DVector::zeros(dof);
    for r in nominal {
        mu += DVector::from_column_slice(&r.values);
    }
    mu /= n;

    let mut cov = DMatrix::zeros(dof, dof);
    for r in nominal {
        let d = DVector::from_column_slice(&r.values) - &mu;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= n - 1.0;
    // exact symmetry
    cov = (&cov + cov.transpose()) * 0.5;

    let eps = regularization.epsilon(&cov);
    for i in 0..dof {
        cov[(i, i)] += eps;
    }

    NormativeModel::build(Vec::new(), mu, cov, p_level, nominal.len())
}

impl NormativeModel {
    /// Builds a model from a known mean and covariance (no regularization added).
    pub fn from_parts(
        mu: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        p_level: f64,
        sample_count: usize,
    ) -> Result<Self, DetectError> {
        let dof = mu.len();
        if sigma.len() != dof || sigma.iter().any(|row| row.len() != dof) {
            return Err(DetectError::DimensionMismatch {
                expected: dof,
                got: sigma.len(),
            });
        }
        let sigma = DMatrix::from_fn(dof, dof, |i, j| sigma[i][j]);
        Self::build(
            Vec::new(),
            DVector::from_vec(mu),
            sigma,
            p_level,
            sample_count,
        )
    }

    fn build(
        channels: Vec<String>,
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        p_level: f64,
        sample_count: usize,
    ) -> Result<Self, DetectError> {
        let dof = mu.len();
        if dof == 0 {
            return Err(DetectError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(DetectError::NonFinite { index: 0 });
        }
        for i in 0..dof {
            for j in 0..i {
                let (a, b) = (sigma[(i, j)], sigma[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(DetectError::NotPositiveDefinite);
                }
            }
        }
        let threshold = chi2_quantile(dof, p_level)?;
        let sigma_inv = sigma
            .clone()
            .cholesky()
            .ok_or(DetectError::NotPositiveDefinite)?
            .inverse();
        Ok(Self {
            channels,
            mu,
            sigma,
            sigma_inv,
            p_level,
            threshold,
            sample_count,
        })
    }

    /// Names the residual channels, in order.
    pub fn with_channels(mut self, names: Vec<String>) -> Result<Self, DetectError> {
        if names.len() != self.dof() {
            return Err(DetectError::DimensionMismatch {
                expected: self.dof(),
                got: names.len(),
            });
        }
        self.channels = names;
        Ok(self)
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn dof(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        self.mu.as_slice()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    pub fn p_level(&self) -> f64 {
        self.p_level
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Standard deviation of one channel under the model.
    pub fn channel_std(&self, i: usize) -> f64 {
        self.sigma[(i, i)].sqrt()
    }

    /// Squared Mahalanobis distance of a residual from the model mean.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> Result<f64, DetectError> {
        if x.len() != self.dof() {
            return Err(DetectError::DimensionMismatch {
                expected: self.dof(),
                got: x.len(),
            });
        }
        let d = DVector::from_column_slice(x) - &self.mu;
        let q = d.dot(&(&self.sigma_inv * &d));
        Ok(q.max(0.0))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            channels: self.channels.clone(),
            mu: self.mu.iter().copied().collect(),
            sigma: (0..self.dof())
                .map(|i| (0..self.dof()).map(|j| self.sigma[(i, j)]).collect())
                .collect(),
            dof: self.dof(),
            p_level: self.p_level,
            threshold: self.threshold,
            sample_count: self.sample_count,
        };
        serde_json::to_string_pretty(&file).expect("model serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, DetectError> {
        let file: ModelFile =
            serde_json::from_str(s).map_err(|e| DetectError::Corrupt(e.to_string()))?;
        if file.mu.len() != file.dof {
            return Err(DetectError::Corrupt(format!(
                "dof {} but mu has {} entries",
                file.dof,
                file.mu.len()
            )));
        }
        let mut model = Self::from_parts(file.mu, file.sigma, file.p_level, file.sample_count)?;
        if (model.threshold - file.threshold).abs() > 1e-6 * file.threshold.max(1.0) {
            return Err(DetectError::Corrupt(format!(
                "stored threshold {} disagrees with chi2 quantile {}",
                file.threshold, model.threshold
            )));
        }
        model.threshold = file.threshold;
        if !file.channels.is_empty() {
            model = model.with_channels(file.channels)?;
        }
        Ok(model)
    }
}

/// Free-function form of [`NormativeModel::mahalanobis_sq`].
pub fn mahalanobis_sq(model: &NormativeModel, x: &Residual) -> Result<f64, DetectError> {
    model.mahalanobis_sq(&x.values)
}
