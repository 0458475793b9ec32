//! Multiplicative nonlinearities `σ` with `l|u| ≤ |σ(u)| ≤ L|u|`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    /// `σ(u) = s·u` with `s = l = L`.
    Linear,
    /// `σ(u) = u·(l + (L - l)(1 + sin u)/2)`.
    Modulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSpec {
    pub kind: SigmaKind,
    #[serde(rename = "l_sigma")]
    pub lower: f64,
    #[serde(rename = "L_sigma")]
    pub upper: f64,
}

impl Default for SigmaSpec {
    fn default() -> Self {
        Self::linear()
    }
}

const SAMPLE_RANGE: f64 = 10.0;
const SAMPLES: usize = 20_001;

impl SigmaSpec {
    /// `σ(u) = u`.
    pub fn linear() -> Self {
        Self {
            kind: SigmaKind::Linear,
            lower: 1.0,
            upper: 1.0,
        }
    }

    pub fn modulated(lower: f64, upper: f64) -> Result<Self> {
        let s = Self {
            kind: SigmaKind::Modulated,
            lower,
            upper,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn is_linear(&self) -> bool {
        self.kind == SigmaKind::Linear
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self.kind {
            SigmaKind::Linear => self.upper * u,
            SigmaKind::Modulated => {
                u * (self.lower + (self.upper - self.lower) * 0.5 * (1.0 + u.sin()))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (l, h) = (self.lower, self.upper);
        if !(l.is_finite() && h.is_finite() && l > 0.0 && l <= h) {
            return domain(format!("need 0 < l_sigma <= L_sigma, got {l}, {h}"));
        }
        if self.kind == SigmaKind::Linear && l != h {
            return domain("linear sigma has l_sigma = L_sigma");
        }
        self.check_sandwich()
    }

    /// Dense-sampling check of the sandwich on `[-10, 10]` and of `σ(0) = 0`.
    pub fn check_sandwich(&self) -> Result<()> {
        if self.eval(0.0) != 0.0 {
            return Err(Error::Precondition("sigma(0) must vanish".into()));
        }
        let tol = 1e-12;
        for i in 0..SAMPLES {
            let u = -SAMPLE_RANGE + 2.0 * SAMPLE_RANGE * i as f64 / (SAMPLES - 1) as f64;
            let s = self.eval(u).abs();
            let a = u.abs();
            if s < self.lower * a * (1.0 - tol) || s > self.upper * a * (1.0 + tol) {
                return Err(Error::Precondition(format!(
                    "sandwich violated at u = {u}: |sigma| = {s}"
                )));
            }
        }
        Ok(())
    }

    /// Largest difference quotient over the sampling grid. The modulated
    /// choice is only locally Lipschitz; this is its constant on `[-10, 10]`.
    pub fn sampled_lipschitz(&self) -> f64 {
        let h = 2.0 * SAMPLE_RANGE / (SAMPLES - 1) as f64;
        (0..SAMPLES - 1)
            .map(|i| {
                let u = -SAMPLE_RANGE + h * i as f64;
                ((self.eval(u + h) - self.eval(u)) / h).abs()
            })
            .fold(0.0, f64::max)
    }
}
