//! Driving noise: space-time white, or white in time with spatial
//! covariance `f(x - y)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::DomainSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Covariance {
    /// `|x|^{-α}`, `0 < α < 1`.
    Riesz { alpha: f64 },
    /// `e^{-|x|/ℓ}`.
    Exponential { length: f64 },
    /// `f ≡ 1`.
    Constant,
    /// `cos(2πx/P)`: positive semidefinite but negative for `|x| > P/4`.
    Cosine { period: f64 },
}

impl Covariance {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Covariance::Riesz { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                domain(format!("Riesz exponent must lie in (0, 1), got {alpha}"))
            }
            Covariance::Exponential { length } if !(length > 0.0 && length.is_finite()) => {
                domain(format!("correlation length must be positive, got {length}"))
            }
            Covariance::Cosine { period } if !(period > 0.0 && period.is_finite()) => {
                domain(format!("period must be positive, got {period}"))
            }
            _ => Ok(()),
        }
    }

    /// `f(x)`; infinite at `0` for the Riesz kernel.
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Covariance::Riesz { alpha } => x.abs().powf(-alpha),
            Covariance::Exponential { length } => (-x.abs() / length).exp(),
            Covariance::Constant => 1.0,
            Covariance::Cosine { period } => (2.0 * std::f64::consts::PI * x / period).cos(),
        }
    }

    /// `f` evaluated on a uniform node grid with spacing `h`. The singular
    /// Riesz diagonal is replaced by its cell average `(h/2)^{-α}/(1-α)`.
    pub fn matrix(&self, nodes: &[f64], h: f64) -> DMatrix<f64> {
        let n = nodes.len();
        DMatrix::from_fn(n, n, |j, k| {
            if j == k {
                match *self {
                    Covariance::Riesz { alpha } => (0.5 * h).powf(-alpha) / (1.0 - alpha),
                    _ => self.value(0.0),
                }
            } else {
                self.value(nodes[j] - nodes[k])
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    White,
    Colored { covariance: Covariance },
}

impl NoiseSpec {
    pub fn colored(covariance: Covariance) -> Self {
        NoiseSpec::Colored { covariance }
    }

    pub fn covariance(&self) -> Option<Covariance> {
        match self {
            NoiseSpec::White => None,
            NoiseSpec::Colored { covariance } => Some(*covariance),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::White => Ok(()),
            NoiseSpec::Colored { covariance } => covariance.validate(),
        }
    }
}

/// Outcome of [`validate_covariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    /// On the interval no integrability condition on `f` is needed.
    pub integrability_exempt: bool,
    /// `min f` over `[-L, L]` (origin excluded for the Riesz kernel).
    pub min_value: f64,
    /// Smallest eigenvalue of the node covariance matrix before jitter.
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
}

pub const COVARIANCE_EIGEN_TOL: f64 = 1e-10;
const POSITIVITY_SAMPLES: usize = 4001;

/// Checks that a colored covariance is strictly positive on `[-L, L]` and
/// that its matrix on `nodes + 1` uniform points is positive semidefinite.
/// White noise passes trivially.
pub fn validate_covariance(noise: &NoiseSpec, d: &DomainSpec, nodes: usize) -> Result<CovarianceReport> {
    noise.validate()?;
    d.validate()?;
    let Some(cov) = noise.covariance() else {
        return Ok(CovarianceReport {
            integrability_exempt: true,
            min_value: f64::INFINITY,
            min_eigenvalue: f64::INFINITY,
            positive_definite: true,
        });
    };
    let mut min_value = f64::INFINITY;
    for i in 0..POSITIVITY_SAMPLES {
        let x = -d.length + 2.0 * d.length * i as f64 / (POSITIVITY_SAMPLES - 1) as f64;
        if x == 0.0 && matches!(cov, Covariance::Riesz { .. }) {
            continue;
        }
        min_value = min_value.min(cov.value(x));
    }
    if !(min_value > 0.0) {
        return Err(Error::Precondition(format!(
            "covariance is not strictly positive on [-L, L]: min f = {min_value:e}"
        )));
    }
    let h = d.length / nodes.max(1) as f64;
    let xs: Vec<f64> = (0..=nodes).map(|k| k as f64 * h).collect();
    let eig = SymmetricEigen::new(cov.matrix(&xs, h)).eigenvalues;
    let min_eigenvalue = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eigenvalue < -COVARIANCE_EIGEN_TOL {
        return Err(Error::Precondition(format!(
            "covariance matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}"
        )));
    }
    Ok(CovarianceReport {
        integrability_exempt: true,
        min_value,
        min_eigenvalue,
        positive_definite: min_eigenvalue > 0.0,
    })
}
