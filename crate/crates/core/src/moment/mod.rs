//! Closed moment equations for linear (or sandwiched) `σ`.
//!
//! Second moment, white noise:
//! `M(t,x) = |(G u0)_t(x)|² + λ²s² ∫₀ᵗ∫ p²(t-s,x,y) M(s,y) dy ds`.
//!
//! Two-point function, colored noise:
//! `M(t,x₁,x₂) = g(x₁)g(x₂) + λ²s² ∫∫∫ p(t-s,x₁,y₁) p(t-s,x₂,y₂) f(y₁-y₂) M(s,y₁,y₂)`.
//!
//! The kernels are expanded in the discrete eigenbasis of the grid, so each
//! pair of modes contributes an exponential in the lag and the history in
//! time is carried by a recursion with exact weights for piecewise-linear
//! `M`. For the continuum kernel the part of `p²` that the grid modes miss
//! is concentrated within `√τ` of the diagonal; it is added back as a local
//! term with product-integration weights for its `τ^{-1/2}` singularity.

mod basis;
mod rate;
mod second;
mod threshold;
mod two_point;

pub use rate::{fit_log_slope, lyapunov_rate, LogSlopeFit};
pub use second::{picard_solve, solve_second_moment, PicardSolution};
pub use threshold::{critical_lambda, spectral_threshold, ThresholdBracket};
pub use two_point::solve_two_point;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::kernels::{DomainSpec, InitialCondition};
use crate::noise::NoiseSpec;

/// Which kernel the moment equation is written for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelModel {
    /// The heat kernel of `½∂²` on the interval.
    #[default]
    Continuum,
    /// The explicit finite-difference scheme used by the simulator, with the
    /// same nodes and time step: its second moment obeys a discrete Volterra
    /// sum that is solved exactly here.
    Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentProblem {
    pub domain: DomainSpec,
    /// `s`: the slope of linear `σ`, or an end of the sandwich `[l_σ, L_σ]`.
    #[serde(default = "unit")]
    pub sigma_slope: f64,
    pub lambda: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub u0: InitialCondition,
    pub horizon: f64,
    /// Number of grid intervals `n` (`h = L/n`).
    pub nodes: usize,
    pub step: f64,
    #[serde(default)]
    pub model: KernelModel,
}

fn unit() -> f64 {
    1.0
}

pub const MIN_NODES: usize = 16;
pub const MAX_TWO_POINT_NODES: usize = 64;

impl MomentProblem {
    /// Linear `σ(u) = u`, white noise, bump initial data.
    pub fn new(domain: DomainSpec, lambda: f64, horizon: f64, nodes: usize, step: f64) -> Self {
        Self {
            domain,
            sigma_slope: 1.0,
            lambda,
            noise: NoiseSpec::White,
            u0: InitialCondition::default(),
            horizon,
            nodes,
            step,
            model: KernelModel::Continuum,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    /// `λ²s²`.
    pub fn coupling(&self) -> f64 {
        let a = self.lambda * self.sigma_slope;
        a * a
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn spacing(&self) -> f64 {
        self.domain.length / self.nodes as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.noise.validate()?;
        self.u0.validate(self.domain.length)?;
        if self.nodes < MIN_NODES {
            return domain(format!("need at least {MIN_NODES} grid intervals, got {}", self.nodes));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return domain(format!("λ must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.sigma_slope.is_finite() && self.sigma_slope > 0.0) {
            return domain(format!("σ slope must be positive, got {}", self.sigma_slope));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0 && self.step > 0.0) {
            return domain("horizon and step must be positive");
        }
        if self.step > self.horizon / 200.0 * (1.0 + 1e-12) {
            return domain(format!(
                "step {} exceeds horizon/200 = {}",
                self.step,
                self.horizon / 200.0
            ));
        }
        let drift_step = self.horizon / self.steps() as f64;
        if ((drift_step - self.step) / self.step).abs() > 1e-9 {
            return domain("horizon must be an integer multiple of the step");
        }
        if self.model == KernelModel::Scheme {
            let h = self.spacing();
            if self.step > h * h * (1.0 + 1e-12) {
                return domain(format!("scheme model needs step <= h² = {}", h * h));
            }
        }
        Ok(())
    }
}

/// Packed upper triangle of a symmetric `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedSymmetric {
    n: usize,
    data: Vec<f64>,
}

impl PackedSymmetric {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * (n + 1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.offset(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j);
        self.data[o] = v;
    }
}

/// Metadata recorded with each solution.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureInfo {
    pub model: KernelModel,
    pub modes: usize,
    pub step: f64,
    /// Number of lags carrying the local remainder correction.
    pub remainder_lags: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolterraSolution {
    pub times: Vec<f64>,
    /// Full grid `x_k = k h`, `k = 0..=n`.
    pub nodes: Vec<f64>,
    /// `M(t_i, x_k)`; for the two-point solver, the diagonal.
    pub values: Vec<Vec<f64>>,
    /// `M(t_i, x_j, x_k)` for the two-point solver.
    pub two_point: Option<Vec<PackedSymmetric>>,
    pub info: QuadratureInfo,
}

impl VolterraSolution {
    /// Index of the grid node closest to `x`.
    pub fn nearest_node(&self, x: f64) -> usize {
        let mut best = 0;
        for (k, &xk) in self.nodes.iter().enumerate() {
            if (xk - x).abs() < (self.nodes[best] - x).abs() {
                best = k;
            }
        }
        best
    }

    /// `M(·, x)` at the node nearest `x`.
    pub fn series_at(&self, x: f64) -> Vec<f64> {
        let k = self.nearest_node(x);
        self.values.iter().map(|row| row[k]).collect()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
}
