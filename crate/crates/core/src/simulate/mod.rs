//! Euler–Maruyama paths of the finite-difference SPDE
//! `du_k = [½h⁻²(u_{k+1} - 2u_k + u_{k-1}) + μu_k] dt + λσ(u_k) h^{-1/2} dW_k`
//! on the nodes `x_k = kh`, `h = L/n`.

mod ensemble;

pub use ensemble::{
    run_ensemble, run_paired_ensemble, run_path, Accumulators, PairedAccumulators, PathOutcome,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::{Boundary, DomainSpec, InitialCondition};
use crate::noise::{validate_covariance, Covariance, NoiseSpec};
use crate::sigma::SigmaSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub domain: DomainSpec,
    #[serde(default)]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub lambda: f64,
    #[serde(default)]
    pub u0: InitialCondition,
    /// Number of grid intervals `n`.
    pub nodes: usize,
    pub step: f64,
    pub horizon: f64,
    /// Times at which fields are recorded; rounded to the nearest step.
    pub snapshots: Vec<f64>,
    pub master_seed: u64,
    /// Moment orders accumulated by the ensemble.
    #[serde(default = "default_orders")]
    pub moments: Vec<u32>,
}

fn default_orders() -> Vec<u32> {
    vec![2]
}

pub const MIN_SIM_NODES: usize = 16;
/// Diagonal jitter added before the Cholesky factorisation.
pub const CHOLESKY_JITTER: f64 = 1e-10;

impl SimConfig {
    pub fn spacing(&self) -> f64 {
        self.domain.length / self.nodes as f64
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..=self.nodes).map(|k| k as f64 * h).collect()
    }

    /// Step indices of the snapshot times.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        self.snapshots
            .iter()
            .map(|&t| (t / self.step).round() as usize)
            .collect()
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_steps().iter().map(|&i| i as f64 * self.step).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.sigma.validate()?;
        self.noise.validate()?;
        self.u0.validate(self.domain.length)?;
        if self.nodes < MIN_SIM_NODES {
            return domain(format!("need at least {MIN_SIM_NODES} grid intervals, got {}", self.nodes));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return domain(format!("λ must be finite and >= 0, got {}", self.lambda));
        }
        let h = self.spacing();
        if !(self.step > 0.0 && self.step <= h * h * (1.0 + 1e-12)) {
            return domain(format!(
                "explicit scheme needs 0 < Δt <= h² = {:e}, got {:e}",
                h * h,
                self.step
            ));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return domain("horizon must be positive");
        }
        if ((self.steps() as f64 * self.step - self.horizon) / self.horizon).abs() > 1e-9 {
            return domain("horizon must be an integer multiple of the step");
        }
        if self.snapshots.is_empty() {
            return domain("at least one snapshot time is required");
        }
        if self
            .snapshots
            .iter()
            .any(|&t| !(t >= 0.0 && t <= self.horizon * (1.0 + 1e-12)))
        {
            return domain("snapshot times must lie in [0, T]");
        }
        if self.snapshot_steps().windows(2).any(|w| w[1] <= w[0]) {
            return domain("snapshot times must be strictly increasing on the step grid");
        }
        if self.moments.is_empty() || self.moments.contains(&0) {
            return domain("moment orders must be positive");
        }
        if self.noise != NoiseSpec::White {
            validate_covariance(&self.noise, &self.domain, self.nodes)?;
        }
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }
}

/// Field at one time; `u[k] = u(t, x_k)`, `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub t: f64,
    pub u: Vec<f64>,
}

impl PathState {
    pub fn initial(cfg: &SimConfig) -> Self {
        let mut u: Vec<f64> = cfg
            .grid()
            .iter()
            .map(|&x| cfg.u0.value(x, cfg.domain.length))
            .collect();
        if cfg.domain.boundary == Boundary::Dirichlet {
            let n = u.len() - 1;
            u[0] = 0.0;
            u[n] = 0.0;
        }
        Self { t: 0.0, u }
    }
}

/// One explicit step. `increments[k]` is the Brownian increment at node `k`:
/// independent `N(0, Δt)` for white noise (scaled here by `h^{-1/2}`), or
/// jointly Gaussian with covariance `Δt·f(x_j - x_k)` for colored noise
/// (used as is).
pub fn em_step(state: &PathState, cfg: &SimConfig, increments: &[f64]) -> Result<PathState> {
    let mut next = PathState {
        t: state.t,
        u: vec![0.0; state.u.len()],
    };
    em_step_into(state, cfg, increments, &mut next)?;
    Ok(next)
}

pub(crate) fn em_step_into(
    state: &PathState,
    cfg: &SimConfig,
    increments: &[f64],
    out: &mut PathState,
) -> Result<()> {
    let u = &state.u;
    let n = u.len() - 1;
    let h = cfg.spacing();
    let dt = cfg.step;
    let diff = 0.5 * dt / (h * h);
    let mu = cfg.domain.drift;
    let amp = match cfg.noise {
        NoiseSpec::White => cfg.lambda / h.sqrt(),
        NoiseSpec::Colored { .. } => cfg.lambda,
    };
    out.t = state.t + dt;
    let update = |k: usize, left: f64, right: f64| {
        let uk = u[k];
        uk + diff * (left - 2.0 * uk + right) + dt * mu * uk + amp * cfg.sigma.eval(uk) * increments[k]
    };
    match cfg.domain.boundary {
        Boundary::Dirichlet => {
            out.u[0] = 0.0;
            out.u[n] = 0.0;
            for k in 1..n {
                out.u[k] = update(k, u[k - 1], u[k + 1]);
            }
        }
        Boundary::Neumann => {
            out.u[0] = update(0, u[1], u[1]);
            out.u[n] = update(n, u[n - 1], u[n - 1]);
            for k in 1..n {
                out.u[k] = update(k, u[k - 1], u[k + 1]);
            }
        }
    }
    if out.u.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { time: out.t });
    }
    Ok(())
}

/// Draws the per-node increments of one step.
#[derive(Debug, Clone)]
pub(crate) enum IncrementSampler {
    White { sd: f64 },
    /// `f ≡ 1`: one shared draw for every node.
    Shared { sd: f64 },
    Correlated { factor: DMatrix<f64>, sd: f64 },
}

impl IncrementSampler {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let sd = cfg.step.sqrt();
        Ok(match cfg.noise.covariance() {
            None => IncrementSampler::White { sd },
            Some(Covariance::Constant) => IncrementSampler::Shared { sd },
            Some(cov) => {
                let x = cfg.grid();
                let mut f = cov.matrix(&x, cfg.spacing());
                for k in 0..x.len() {
                    f[(k, k)] += CHOLESKY_JITTER;
                }
                let chol = f.cholesky().ok_or_else(|| {
                    Error::Precondition("covariance matrix is not positive definite after jitter".into())
                })?;
                IncrementSampler::Correlated {
                    factor: chol.l(),
                    sd,
                }
            }
        })
    }

    pub fn fill(&self, rng: &mut ChaCha8Rng, scratch: &mut [f64], out: &mut [f64]) {
        match self {
            IncrementSampler::White { sd } => {
                for v in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = sd * z;
                }
            }
            IncrementSampler::Shared { sd } => {
                let z: f64 = rng.sample(StandardNormal);
                out.fill(sd * z);
            }
            IncrementSampler::Correlated { factor, sd } => {
                for v in scratch.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                for (k, o) in out.iter_mut().enumerate() {
                    let row = factor.row(k);
                    let mut acc = 0.0;
                    for j in 0..=k {
                        acc += row[j] * scratch[j];
                    }
                    *o = sd * acc;
                }
            }
        }
    }
}
