use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::basis::GridBasis;
use super::{lyapunov_rate, solve_second_moment, MomentProblem};
use crate::error::{Error, Result};
use crate::kernels::Boundary;
use crate::noise::NoiseSpec;
use crate::quadrature::GaussLegendre;

/// Sign change of the second-moment growth rate in `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdBracket {
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub rate_low: f64,
    pub rate_high: f64,
    /// Bisection result, refined by linear interpolation of the end rates.
    pub lambda_crit: f64,
    /// `1/(s√ρ(A))` from the time-integrated kernel operator.
    pub spectral_estimate: f64,
    /// Number of solves performed.
    pub evaluations: usize,
}

const RATE_WINDOW: f64 = 0.4;
const MAX_EXPANSIONS: usize = 20;
const BISECTION_RTOL: f64 = 1e-3;

fn growth_rate(p: &MomentProblem, lambda: f64) -> Result<f64> {
    match solve_second_moment(&p.with_lambda(lambda)) {
        Ok(sol) => Ok(lyapunov_rate(&sol, 0.5 * p.domain.length, RATE_WINDOW)?.rate),
        // leaving the floating-point range is growth in its own right
        Err(Error::Overflow { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Locates the critical noise level of the second-moment equation.
///
/// The bracket is widened geometrically (halving the low end, doubling the
/// high end) until the growth rate at the centre node changes sign, then
/// bisected to `1e-3` relative width. A Neumann domain without negative
/// drift keeps its constant mode (`κ₀₀ = -2μ ≤ 0`), so the rate is
/// nonnegative for every `λ` and no threshold exists.
pub fn critical_lambda(p: &MomentProblem, bracket: (f64, f64)) -> Result<ThresholdBracket> {
    p.validate()?;
    if p.noise != NoiseSpec::White {
        return Err(Error::Precondition("threshold search uses the white-noise equation".into()));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Domain(format!("invalid initial bracket ({lo}, {hi})")));
    }
    if p.domain.boundary == Boundary::Neumann && p.domain.drift >= 0.0 {
        return Err(Error::NoThreshold(
            "Neumann boundary: the constant mode never decays, the rate is positive for all λ > 0".into(),
        ));
    }
    let mut evals = 0;
    let mut rate = |l: f64| {
        evals += 1;
        growth_rate(p, l)
    };
    let mut r_lo = rate(lo)?;
    let mut expansions = 0;
    while r_lo >= 0.0 {
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::NoThreshold(format!("growth rate nonnegative down to λ = {lo:e}")));
        }
        hi = lo;
        lo *= 0.5;
        r_lo = rate(lo)?;
    }
    let mut r_hi = rate(hi)?;
    expansions = 0;
    while r_hi <= 0.0 {
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::NoThreshold(format!("growth rate nonpositive up to λ = {hi:e}")));
        }
        lo = hi;
        r_lo = r_hi;
        hi *= 2.0;
        r_hi = rate(hi)?;
    }
    while hi - lo > BISECTION_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        let r = rate(mid)?;
        if r < 0.0 {
            lo = mid;
            r_lo = r;
        } else {
            hi = mid;
            r_hi = r;
        }
    }
    let crit = if r_hi.is_finite() {
        lo + (hi - lo) * (-r_lo) / (r_hi - r_lo)
    } else {
        0.5 * (lo + hi)
    };
    let spectral = spectral_threshold(p)?;
    Ok(ThresholdBracket {
        lambda_low: lo,
        lambda_high: hi,
        rate_low: r_lo,
        rate_high: r_hi,
        lambda_crit: crit,
        spectral_estimate: spectral,
        evaluations: evals,
    })
}

/// `1/(s√ρ)` with `ρ` the spectral radius (power iteration) of
/// `A_kj = ∫₀^∞ e^{2μτ} ∫ p²(τ, x_k, y) φ_j(y) dy dτ`, `φ_j` the hat
/// functions of the solver grid.
///
/// Lags below `τ_s` use the image expansion, where a product of two
/// Gaussians is a Gaussian in `y`, integrated against the hats in closed
/// form; lags above `τ_s` use the modal expansion, integrated in `τ` and
/// against the hats exactly.
pub fn spectral_threshold(p: &MomentProblem) -> Result<f64> {
    p.validate()?;
    let a = time_integrated_operator(p)?;
    let rho = power_iteration(&a)?;
    Ok(1.0 / (p.sigma_slope * rho.sqrt()))
}

fn power_iteration(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut last = 0.0;
    for _ in 0..100_000 {
        let w = a * &v;
        let norm = w.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Resolution("power iteration broke down".into()));
        }
        v = w / norm;
        if (norm - last).abs() <= 1e-12 * norm {
            return Ok(norm);
        }
        last = norm;
    }
    Err(Error::Resolution("power iteration did not converge".into()))
}

pub(crate) fn time_integrated_operator(p: &MomentProblem) -> Result<DMatrix<f64>> {
    let d = p.domain;
    let grid = GridBasis::new(&d, p.nodes);
    let mu = d.drift;
    let l = d.length;
    let theta = PI / l;
    let nu1 = 0.5 * theta * theta;
    let slowest = match d.boundary {
        Boundary::Dirichlet => 2.0 * nu1 - 2.0 * mu,
        Boundary::Neumann => -2.0 * mu,
    };
    if slowest <= 0.0 {
        return Err(Error::NoThreshold(format!(
            "slowest mode pair does not decay (κ = {slowest:e}); the operator is unbounded"
        )));
    }
    let tau_s = 0.01 * d.crossover_time();
    let n = grid.len();
    let h = grid.h;
    let mut out = DMatrix::zeros(n, n);

    // modal part, τ ≥ τ_s
    let first = match d.boundary {
        Boundary::Dirichlet => 1usize,
        Boundary::Neumann => 0,
    };
    let mut modes = Vec::new();
    for a in first.. {
        let nu = 0.5 * (a as f64 * theta).powi(2);
        if a > first + 2 && (nu - mu.max(0.0)) * tau_s > 40.0 {
            break;
        }
        modes.push((a, nu));
    }
    let top = modes.last().map(|m| m.0).unwrap_or(1);
    let boundary_hat = |k: usize| grid.node_index[k] == 0 || grid.node_index[k] == grid.intervals;
    // ∫ φ_j(y) cos(mθy) dy
    let hat_cos: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..=2 * top)
                .map(|m| {
                    let w = m as f64 * theta;
                    let z = 0.5 * w * h;
                    let sinc = if z == 0.0 { 1.0 } else { z.sin() / z };
                    let scale = if boundary_hat(j) { 0.5 } else { 1.0 };
                    scale * h * (w * grid.x[j]).cos() * sinc * sinc
                })
                .collect()
        })
        .collect();
    let efun = |a: usize, x: f64| grid.continuum_eigenfunction(a, x);
    for (ia, &(a, na)) in modes.iter().enumerate() {
        for &(b, nb) in &modes[ia..] {
            let kappa = na + nb - 2.0 * mu;
            let time = (-kappa * tau_s).exp() / kappa * if a == b { 1.0 } else { 2.0 };
            // e_a e_b = coef_minus cos((a-b)θy) + coef_plus cos((a+b)θy)
            let (cm, cp) = match d.boundary {
                Boundary::Dirichlet => (1.0 / l, -1.0 / l),
                Boundary::Neumann => {
                    let norm = |m: usize| if m == 0 { 1.0 / l.sqrt() } else { (2.0 / l).sqrt() };
                    let f = 0.5 * norm(a) * norm(b);
                    (f, f)
                }
            };
            let (dm, dp) = (b - a, a + b);
            for k in 0..n {
                let xk = grid.x[k];
                let ek = efun(a, xk) * efun(b, xk) * time;
                if ek == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(k, j)] += ek * (cm * hat_cos[j][dm] + cp * hat_cos[j][dp]);
                }
            }
        }
    }

    // image part, τ < τ_s
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let sign = match d.boundary {
        Boundary::Dirichlet => -1.0,
        Boundary::Neumann => 1.0,
    };
    let rule = GaussLegendre::new(16);
    let mut lags = Vec::new();
    let mut hi_u = 1.0;
    for _ in 0..40 {
        let lo_u = 0.5 * hi_u;
        for (u, w) in rule.mapped(lo_u, hi_u) {
            lags.push((tau_s * u * u, w * 2.0 * tau_s * u));
        }
        hi_u = lo_u;
    }
    let hat_expectation = |j: usize, m: f64, s: f64| -> f64 {
        let xj = grid.x[j];
        let kinks = [xj - h, xj, xj + h];
        let near = kinks.iter().any(|&q| (m - q).abs() < 12.0 * s);
        let full = if near {
            let ramp = |q: f64| {
                let z = (m - q) / s;
                (m - q) * normal.cdf(z) + s * normal.pdf(z)
            };
            (ramp(kinks[0]) - 2.0 * ramp(kinks[1]) + ramp(kinks[2])) / h
        } else {
            (1.0 - (m - xj).abs() / h).max(0.0)
        };
        if boundary_hat(j) {
            0.5 * full
        } else {
            full
        }
    };
    for k in 0..n {
        let x = grid.x[k];
        let mut centers = Vec::new();
        for s in [-1.0, 0.0, 1.0] {
            centers.push((x + 2.0 * s * l, 1.0));
            centers.push((-x + 2.0 * s * l, sign));
        }
        for &(tau, w) in &lags {
            let s = (0.5 * tau).sqrt();
            let growth = (2.0 * mu * tau).exp();
            for (i, &(ci, si)) in centers.iter().enumerate() {
                for (l_idx, &(cl, sl)) in centers.iter().enumerate().skip(i) {
                    let gap = ci - cl;
                    let expo = -gap * gap / (4.0 * tau);
                    if expo < -40.0 {
                        continue;
                    }
                    let pair = if l_idx == i { 1.0 } else { 2.0 };
                    let amp = pair * si * sl * expo.exp() / (4.0 * PI * tau).sqrt();
                    let m = 0.5 * (ci + cl);
                    // hats whose support can see a Gaussian of width s at m
                    let reach = h + 12.0 * s;
                    for j in 0..n {
                        if (grid.x[j] - m).abs() > reach {
                            continue;
                        }
                        out[(k, j)] += w * growth * amp * hat_expectation(j, m, s);
                    }
                }
            }
        }
    }
    Ok(out)
}
