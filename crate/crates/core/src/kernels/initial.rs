use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Bounded, nonnegative initial profile `u0` on `[0, L]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `c·sin²(π(x - L/4)/(L/2))` on `[L/4, 3L/4]`, zero elsewhere.
    Bump { amplitude: f64 },
    Constant { value: f64 },
    /// `c·√(2/L)·sin(πx/L)`, the first Dirichlet eigenfunction.
    FirstMode { amplitude: f64 },
    /// Piecewise-linear interpolation of `(x, u)` pairs, constant outside.
    Tabulated { points: Vec<(f64, f64)> },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Bump { amplitude: 1.0 }
    }
}

impl InitialCondition {
    pub fn value(&self, x: f64, length: f64) -> f64 {
        match self {
            InitialCondition::Bump { amplitude } => {
                let (a, b) = (0.25 * length, 0.75 * length);
                if x <= a || x >= b {
                    0.0
                } else {
                    let s = (PI * (x - a) / (0.5 * length)).sin();
                    amplitude * s * s
                }
            }
            InitialCondition::Constant { value } => *value,
            InitialCondition::FirstMode { amplitude } => {
                amplitude * (2.0 / length).sqrt() * (PI * x / length).sin().max(0.0)
            }
            InitialCondition::Tabulated { points } => interpolate(points, x),
        }
    }

    /// Points where the profile is not smooth.
    pub fn breakpoints(&self, length: f64) -> Vec<f64> {
        match self {
            InitialCondition::Bump { .. } => vec![0.25 * length, 0.75 * length],
            InitialCondition::Tabulated { points } => points
                .iter()
                .map(|p| p.0)
                .filter(|x| (0.0..=length).contains(x))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Supremum over `[0, L]`.
    pub fn sup(&self, length: f64) -> f64 {
        match self {
            InitialCondition::Bump { amplitude } => *amplitude,
            InitialCondition::Constant { value } => *value,
            InitialCondition::FirstMode { amplitude } => amplitude * (2.0 / length).sqrt(),
            InitialCondition::Tabulated { points } => {
                points.iter().map(|p| p.1).fold(0.0, f64::max)
            }
        }
    }

    /// Rejects negative, non-finite or empty profiles.
    pub fn validate(&self, length: f64) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            InitialCondition::Bump { amplitude: c }
            | InitialCondition::Constant { value: c }
            | InitialCondition::FirstMode { amplitude: c } => {
                if !ok(*c) {
                    return domain(format!("initial amplitude must be finite and >= 0, got {c}"));
                }
            }
            InitialCondition::Tabulated { points } => {
                if points.is_empty() {
                    return domain("tabulated initial condition needs at least one point");
                }
                if points.iter().any(|&(x, u)| !x.is_finite() || !ok(u)) {
                    return domain("tabulated initial values must be finite and >= 0");
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return domain("tabulated abscissae must be strictly increasing");
                }
            }
        }
        if !(length > 0.0) {
            return domain("interval length must be positive");
        }
        Ok(())
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    match points {
        [] => 0.0,
        [only] => only.1,
        _ => {
            if x <= points[0].0 {
                return points[0].1;
            }
            let last = points[points.len() - 1];
            if x >= last.0 {
                return last.1;
            }
            let i = points.partition_point(|p| p.0 <= x);
            let (x0, u0) = points[i - 1];
            let (x1, u1) = points[i];
            u0 + (u1 - u0) * (x - x0) / (x1 - x0)
        }
    }
}
