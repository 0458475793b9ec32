use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};

/// `f(t) = a + k·b ∫₀ᵗ f(s) (t-s)^{-1/2} ds` on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalProblem {
    pub a: f64,
    pub k: f64,
    pub b: f64,
    pub horizon: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenewalSolution {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Least-squares slope of `ln f` over the second half of the window,
    /// restricted to `f ≥ 10a` when at least two such points exist.
    pub fitted_exponent: f64,
}

impl RenewalProblem {
    pub fn validate(&self) -> Result<()> {
        let RenewalProblem { a, k, b, horizon, step } = *self;
        if [a, k, b, horizon, step].iter().any(|v| !v.is_finite()) {
            return domain("renewal parameters must be finite");
        }
        if a < 0.0 || k < 0.0 || b < 0.0 {
            return domain("renewal coefficients a, k, b must be nonnegative");
        }
        if !(horizon > 0.0 && step > 0.0) {
            return domain("renewal horizon and step must be positive");
        }
        if step > horizon / 100.0 {
            return domain(format!(
                "step {step} exceeds horizon/100 = {}",
                horizon / 100.0
            ));
        }
        Ok(())
    }
}

/// Product-trapezoid weights for the `(t-s)^{-1/2}` kernel: `(w0, w1)` per
/// lag segment `[mΔ, (m+1)Δ]`, attached to the nodes at lag `m` and `m+1`.
fn lag_weights(count: usize, step: f64) -> Vec<(f64, f64)> {
    let sq = step.sqrt();
    (0..count)
        .map(|m| {
            let mf = m as f64;
            let (r0, r1) = (mf.sqrt(), (mf + 1.0).sqrt());
            let d1 = 1.0 / (r0 + r1);
            // (m+1)^{3/2} - m^{3/2} = ((m+1)^3 - m^3) / ((m+1)^{3/2} + m^{3/2})
            let d3 = (3.0 * mf * mf + 3.0 * mf + 1.0) / (r1 * (mf + 1.0) + r0 * mf);
            let i0 = 2.0 * sq * d1;
            // ∫ u^{-1/2} (u - mΔ)/Δ du over the segment
            let i1 = sq * (2.0 / 3.0 * d3 - 2.0 * mf * d1);
            (i0 - i1, i1)
        })
        .collect()
}

/// Weights `(w0, w1)` of the first segment `[0, Δ]` seen from `t = iΔ`, for
/// `f(s) ≈ f(0) + (f(Δ) - f(0))·√(s/Δ)`. The solution leaves `a` like `√t`,
/// which a linear interpolant misses on that segment.
fn first_segment_weights(i: usize, step: f64) -> (f64, f64) {
    let fi = i as f64;
    let sq = step.sqrt();
    let total = 2.0 * sq / (fi.sqrt() + (fi - 1.0).sqrt());
    // ∫₀^Δ √(s/Δ)(t-s)^{-1/2} ds = √Δ·(asin x - x√(1-x²))/x², x = i^{-1/2}
    let x = 1.0 / fi.sqrt();
    let g = if x < 0.02 {
        let x2 = x * x;
        x * x2 * (2.0 / 3.0 + x2 * (1.0 / 5.0 + x2 * (3.0 / 28.0 + x2 * 5.0 / 72.0)))
    } else {
        x.asin() - x * (1.0 - x * x).sqrt()
    };
    let w1 = sq * g / (x * x);
    (total - w1, w1)
}

/// Solves the renewal equation by product integration with piecewise-linear
/// `f` (linear in `√s` on the first segment). The local weight must leave
/// the implicit step well conditioned, `k·b·w < 1/2` with `w ≤ (π/2)√Δ`,
/// otherwise a resolution error is returned.
pub fn renewal_solve(problem: &RenewalProblem) -> Result<RenewalSolution> {
    problem.validate()?;
    let RenewalProblem { a, k, b, horizon, step } = *problem;
    let c = k * b;
    let n = (horizon / step).round() as usize;
    let step = horizon / n as f64;
    let weights = lag_weights(n, step);
    let first_diag = c * first_segment_weights(1, step).1;
    let diag = c * weights[0].0;
    if diag.max(first_diag) >= 0.5 {
        return Err(Error::Resolution(format!(
            "step {step} too coarse for k·b = {c}: local weight {:.3} ≥ 0.5",
            diag.max(first_diag)
        )));
    }
    let mut values = vec![a; n + 1];
    for i in 1..=n {
        let mut acc = 0.0;
        // segment m spans nodes i-m (near weight) and i-m-1 (far weight)
        for (m, &(w_near, w_far)) in weights.iter().enumerate().take(i - 1) {
            if m > 0 {
                acc += w_near * values[i - m];
            }
            acc += w_far * values[i - m - 1];
        }
        let (w0, w1) = first_segment_weights(i, step);
        acc += w0 * values[0];
        let local = if i == 1 {
            first_diag
        } else {
            acc += w1 * values[1];
            diag
        };
        values[i] = (a + c * acc) / (1.0 - local);
    }
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    let fitted_exponent = fit_exponent(&times, &values, a);
    Ok(RenewalSolution {
        times,
        values,
        fitted_exponent,
    })
}

fn fit_exponent(times: &[f64], values: &[f64], a: f64) -> f64 {
    let half = times.len() / 2;
    let window: Vec<(f64, f64)> = times[half..]
        .iter()
        .zip(&values[half..])
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v))
        .collect();
    let large: Vec<(f64, f64)> = window.iter().copied().filter(|&(_, v)| v >= 10.0 * a).collect();
    let pts = if large.len() >= 2 { large } else { window };
    slope(&pts)
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, v) in pts {
        sxy += (t - mt) * (v.ln() - ml);
        sxx += (t - mt) * (t - mt);
    }
    sxy / sxx
}

/// Closed form `a·E_{1/2}(c√(πt))`, `c = k·b`, with the Mittag-Leffler
/// function summed as `E_{1/2}(z) = Σ zⁿ/Γ(n/2 + 1)`.
pub fn renewal_closed_form(a: f64, c: f64, t: f64) -> f64 {
    let z = c * (std::f64::consts::PI * t).sqrt();
    if z <= 0.0 {
        return a;
    }
    // terms peak near n = 2z², so stop only past the peak
    let peak = (2.0 * z * z) as usize;
    let mut sum = 0.0;
    for n in 0..(peak + 400) {
        let nf = n as f64;
        let term = (nf * z.ln() - ln_gamma(nf / 2.0 + 1.0)).exp();
        sum += term;
        if n > peak && term < 1e-17 * sum {
            break;
        }
    }
    a * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_at_small_argument() {
        // E_{1/2}(z) = 1 + 2z/√π + z² + O(z³)
        use std::f64::consts::PI;
        let z = 1e-3 * PI.sqrt();
        let v = renewal_closed_form(1.0, 1e-3, 1.0);
        assert!((v - (1.0 + 2.0 * z / PI.sqrt() + z * z)).abs() < 1e-8);
    }

    #[test]
    fn constant_without_coupling() {
        let s = renewal_solve(&RenewalProblem { a: 2.0, k: 0.0, b: 1.0, horizon: 1.0, step: 1e-3 }).unwrap();
        assert!(s.values.iter().all(|&v| v == 2.0));
        assert!(s.fitted_exponent.abs() < 1e-20);
    }

    #[test]
    fn weights_integrate_the_kernel() {
        // Σ over segments of both weights equals ∫₀^{nΔ} u^{-1/2} du
        let w = lag_weights(400, 0.01);
        let total: f64 = w.iter().map(|p| p.0 + p.1).sum();
        assert!((total - 2.0 * 4f64.sqrt()).abs() < 1e-12);
        // and the first moment ∫₀^{nΔ} u^{1/2} du with u at node offsets
        let first: f64 = w.iter().enumerate().map(|(m, p)| p.0 * m as f64 * 0.01 + p.1 * (m + 1) as f64 * 0.01).sum();
        assert!((first - 2.0 / 3.0 * 4f64.powf(1.5)).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        let p = RenewalProblem { a: 1.0, k: 1.0, b: 1.0, horizon: 1.0, step: 0.1 };
        assert!(renewal_solve(&p).is_err());
        let p = RenewalProblem { a: -1.0, step: 1e-3, ..p };
        assert!(renewal_solve(&p).is_err());
        let p = RenewalProblem { a: 1.0, k: 50.0, b: 1.0, horizon: 10.0, step: 0.01 };
        assert!(matches!(renewal_solve(&p), Err(Error::Resolution(_))));
    }
}
