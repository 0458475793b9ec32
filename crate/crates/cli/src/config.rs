use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shelab_core::{DomainSpec, MomentProblem, SimConfig};

/// One run, selected by its `command` field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    VerifyKernels(VerifyKernelsConfig),
    Bounds(BoundsConfig),
    Solve(SolveConfig),
    Simulate(SimulateConfig),
    Threshold(ThresholdConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyKernelsConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "both_boundaries")]
    pub domains: Vec<DomainSpec>,
    pub times: Vec<f64>,
    /// Interior points per coordinate.
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewalSpec {
    pub a: f64,
    pub k: f64,
    pub b: f64,
    pub horizon: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "pi")]
    pub length: f64,
    /// Exponents in `(0, ν₁)`.
    pub betas: Vec<f64>,
    /// Evaluation points for the diagonal estimates.
    pub points: Vec<f64>,
    /// Distance from the boundary for the floors and product estimates.
    pub epsilon: f64,
    #[serde(default)]
    pub neumann_t_min: Vec<f64>,
    #[serde(default)]
    pub renewal: Vec<RenewalSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub problem: MomentProblem,
    /// Solve the two-point equation instead of the diagonal one.
    #[serde(default)]
    pub two_point: bool,
    /// Extra λ values for the rate table; the problem's own λ is always included.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default = "rate_window")]
    pub rate_window: f64,
    #[serde(default)]
    pub x: Option<f64>,
    /// Cross-check the march against this many Picard iterations.
    #[serde(default)]
    pub picard: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub sim: SimConfig,
    pub paths: u64,
    /// Number of individual paths written to `paths.csv`.
    #[serde(default)]
    pub dump_paths: u64,
    #[serde(default)]
    pub x: Option<f64>,
    /// Trailing window fraction for rate fits; no rates when absent.
    #[serde(default)]
    pub rate_window: Option<f64>,
    /// Compare `M̂₂` with the discrete Volterra solution at `x`.
    #[serde(default)]
    pub compare_volterra: bool,
    #[serde(default = "three")]
    pub z_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub sim: SimConfig,
    pub lambdas: Vec<f64>,
    pub paths: u64,
    pub rate_window: f64,
    #[serde(default)]
    pub x: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub problem: MomentProblem,
    pub bracket: (f64, f64),
    /// Drift values; the problem's own drift when empty.
    #[serde(default)]
    pub drifts: Vec<f64>,
    /// Largest accepted relative gap between bisection and spectral estimates.
    #[serde(default = "spectral_tolerance")]
    pub spectral_tolerance: f64,
    #[serde(default)]
    pub scan: Option<ScanSpec>,
}

fn pi() -> f64 {
    PI
}

fn rate_window() -> f64 {
    0.4
}

fn three() -> f64 {
    3.0
}

fn spectral_tolerance() -> f64 {
    0.05
}

fn both_boundaries() -> Vec<DomainSpec> {
    vec![
        DomainSpec::dirichlet(PI).expect("π is a valid length"),
        DomainSpec::neumann(PI).expect("π is a valid length"),
    ]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::VerifyKernels(_) => "verify-kernels",
            ExperimentConfig::Bounds(_) => "bounds",
            ExperimentConfig::Solve(_) => "solve",
            ExperimentConfig::Simulate(_) => "simulate",
            ExperimentConfig::Threshold(_) => "threshold",
        }
    }

    pub fn out(&self) -> Option<&Path> {
        match self {
            ExperimentConfig::VerifyKernels(c) => c.out.as_deref(),
            ExperimentConfig::Bounds(c) => c.out.as_deref(),
            ExperimentConfig::Solve(c) => c.out.as_deref(),
            ExperimentConfig::Simulate(c) => c.out.as_deref(),
            ExperimentConfig::Threshold(c) => c.out.as_deref(),
        }
    }

    /// The stochastic configuration whose seed governs the run, if any.
    pub fn sim_mut(&mut self) -> Option<&mut SimConfig> {
        match self {
            ExperimentConfig::Simulate(c) => Some(&mut c.sim),
            ExperimentConfig::Threshold(ThresholdConfig { scan: Some(s), .. }) => Some(&mut s.sim),
            _ => None,
        }
    }

    pub fn paths_mut(&mut self) -> Option<&mut u64> {
        match self {
            ExperimentConfig::Simulate(c) => Some(&mut c.paths),
            ExperimentConfig::Threshold(ThresholdConfig { scan: Some(s), .. }) => Some(&mut s.paths),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::VerifyKernels(c) => {
                if c.times.is_empty() || c.points == 0 || c.domains.is_empty() {
                    bail!("verify-kernels needs times, points and at least one domain");
                }
                for d in &c.domains {
                    d.validate()?;
                }
            }
            ExperimentConfig::Bounds(c) => {
                DomainSpec::dirichlet(c.length)?;
                if c.betas.is_empty() || c.points.is_empty() {
                    bail!("bounds needs betas and points");
                }
                for r in &c.renewal {
                    r.problem().validate()?;
                }
            }
            ExperimentConfig::Solve(c) => {
                c.problem.validate()?;
                if !(c.rate_window > 0.0 && c.rate_window <= 1.0) {
                    bail!("rate_window must lie in (0, 1]");
                }
            }
            ExperimentConfig::Simulate(c) => {
                c.sim.validate()?;
                if c.paths < 2 {
                    bail!("simulate needs at least 2 paths");
                }
                if c.compare_volterra && !(c.sim.sigma.is_linear() && c.sim.noise == Default::default()) {
                    bail!("compare_volterra needs linear σ and white noise");
                }
            }
            ExperimentConfig::Threshold(c) => {
                c.problem.validate()?;
                if !(c.bracket.0 > 0.0 && c.bracket.1 > c.bracket.0) {
                    bail!("bracket must satisfy 0 < low < high");
                }
                if let Some(s) = &c.scan {
                    s.sim.validate()?;
                    if s.lambdas.is_empty() || s.paths < 2 {
                        bail!("scan needs lambdas and at least 2 paths");
                    }
                }
            }
        }
        Ok(())
    }
}

impl RenewalSpec {
    pub fn problem(&self) -> shelab_core::bounds::RenewalProblem {
        shelab_core::bounds::RenewalProblem {
            a: self.a,
            k: self.k,
            b: self.b,
            horizon: self.horizon,
            step: self.step,
        }
    }
}
