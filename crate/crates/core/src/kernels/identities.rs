use serde::Serialize;

use super::{gaussian, Boundary, DomainSpec, HeatKernel};
use crate::error::{domain, Result};
use crate::quadrature::GaussLegendre;

/// Relative tolerance for Chapman–Kolmogorov and the square identity.
pub const IDENTITY_TOL: f64 = 1e-7;
/// Absolute slack for the comparison with the free-space kernel.
pub const DOMINATION_TOL: f64 = 1e-10;

/// Composite Gauss–Legendre over `[0, L]` with panels narrow enough to
/// resolve kernels of time `t_min`.
fn spatial_integral<F: FnMut(f64) -> f64>(d: &DomainSpec, t_min: f64, mut f: F) -> f64 {
    let rule = GaussLegendre::new(16);
    let panels = ((d.length / (0.25 * t_min.sqrt())).ceil() as usize).clamp(32, 4096);
    let w = d.length / panels as f64;
    (0..panels)
        .map(|i| rule.integrate(i as f64 * w, (i + 1) as f64 * w, &mut f))
        .sum()
}

fn check_times(t: f64, s: f64) -> Result<()> {
    if !(t > 0.0 && s > 0.0 && t.is_finite() && s.is_finite()) {
        return domain("identity times must be positive");
    }
    Ok(())
}

/// `(∫ p(t,x,z) p(s,z,y) dz, p(t+s,x,y))`.
pub fn chapman_kolmogorov(t: f64, s: f64, x: f64, y: f64, d: &DomainSpec) -> Result<(f64, f64)> {
    check_times(t, s)?;
    d.check_point(x)?;
    d.check_point(y)?;
    let k = HeatKernel::new(*d)?;
    let lhs = spatial_integral(d, t.min(s), |z| k.density(t, x, z) * k.density(s, z, y));
    Ok((lhs, k.density(t + s, x, y)))
}

/// `(∫ p(t,x,y)² dy, p(2t,x,x))`.
pub fn square_identity(t: f64, x: f64, d: &DomainSpec) -> Result<(f64, f64)> {
    check_times(t, t)?;
    d.check_point(x)?;
    let k = HeatKernel::new(*d)?;
    let lhs = spatial_integral(d, t, |y| k.density(t, x, y).powi(2));
    Ok((lhs, k.density(2.0 * t, x, x)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCheck {
    pub identity: &'static str,
    pub boundary: Boundary,
    pub t: f64,
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub computed: f64,
    pub reference: f64,
    /// Relative error for identities, signed excess for comparisons.
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Runs the identity and comparison checks on `times × points × points`,
/// with interior points `x_j = L(j+1)/(points+1)`. Chapman–Kolmogorov pairs
/// each time with the next one in the list (cyclically).
pub fn kernel_identity_grid(d: &DomainSpec, times: &[f64], points: usize) -> Result<Vec<KernelCheck>> {
    d.validate()?;
    let xs: Vec<f64> = (0..points)
        .map(|j| d.length * (j + 1) as f64 / (points + 1) as f64)
        .collect();
    let k = HeatKernel::new(*d)?;
    let mut out = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let s = times[(i + 1) % times.len()];
        for &x in &xs {
            let (a, b) = square_identity(t, x, d)?;
            out.push(KernelCheck {
                identity: "square",
                boundary: d.boundary,
                t,
                s: t,
                x,
                y: x,
                computed: a,
                reference: b,
                error: rel(a, b),
                tolerance: IDENTITY_TOL,
                passed: rel(a, b) <= IDENTITY_TOL,
            });
            for &y in &xs {
                let (a, b) = chapman_kolmogorov(t, s, x, y, d)?;
                out.push(KernelCheck {
                    identity: "chapman_kolmogorov",
                    boundary: d.boundary,
                    t,
                    s,
                    x,
                    y,
                    computed: a,
                    reference: b,
                    error: rel(a, b),
                    tolerance: IDENTITY_TOL,
                    passed: rel(a, b) <= IDENTITY_TOL,
                });
                let p = k.density(t, x, y);
                let g = gaussian(t, x - y);
                let (identity, excess) = match d.boundary {
                    Boundary::Dirichlet => ("below_gaussian", p - g),
                    Boundary::Neumann => ("above_gaussian", g - p),
                };
                out.push(KernelCheck {
                    identity,
                    boundary: d.boundary,
                    t,
                    s: t,
                    x,
                    y,
                    computed: p,
                    reference: g,
                    error: excess,
                    tolerance: DOMINATION_TOL,
                    passed: excess <= DOMINATION_TOL,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identities_on_a_small_grid() {
        for d in [DomainSpec::dirichlet(PI).unwrap(), DomainSpec::neumann(PI).unwrap()] {
            let checks = kernel_identity_grid(&d, &[0.05, 2.0], 3).unwrap();
            assert!(checks.iter().all(|c| c.passed), "{:?}", checks.iter().find(|c| !c.passed));
        }
    }
}
