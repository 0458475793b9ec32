//! Quadrature rules shared by the kernel, bound and solver modules.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `order`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[order - 1 - i] = z;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(mid + half * z))
            .sum::<f64>()
            * half
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&z, &w)| (mid + half * z, w * half))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Simpson rule with `intervals` (even) uniform sub-intervals.
pub fn simpson<F: FnMut(f64) -> f64>(a: f64, b: f64, intervals: usize, mut f: F) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Composite Simpson on a uniform grid, doubling the grid until two successive
/// estimates differ by less than `tol / 4` (absolute, or relative to the
/// magnitude when that is larger than one).
pub fn simpson_refined<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    tol: f64,
    max_intervals: usize,
    mut f: F,
) -> Result<f64> {
    let mut m = 16;
    let mut prev = simpson(a, b, m, &mut f);
    loop {
        m *= 2;
        let cur = simpson(a, b, m, &mut f);
        let scale = cur.abs().max(1.0);
        if (cur - prev).abs() < 0.25 * tol * scale {
            return Ok(cur);
        }
        if m >= max_intervals {
            return Err(Error::Accuracy {
                requested: tol,
                achieved: (cur - prev).abs() / scale,
            });
        }
        prev = cur;
    }
}

/// Integral over `[0, t_end]` of an integrand that may behave like `t^{-1/2}`
/// at the origin and varies on every scale down to `t_end * 2^-levels`.
///
/// Uses geometrically shrinking panels towards zero in the variable
/// `u = sqrt(t / t_end)`, which removes the square-root singularity.
pub fn integrate_from_origin<F: FnMut(f64) -> f64>(
    t_end: f64,
    levels: usize,
    rule: &GaussLegendre,
    mut f: F,
) -> f64 {
    let mut acc = 0.0;
    let mut hi = 1.0;
    for _ in 0..levels {
        let lo = 0.5 * hi;
        for (u, w) in rule.mapped(lo, hi) {
            let t = t_end * u * u;
            acc += w * f(t) * 2.0 * t_end * u;
        }
        hi = lo;
    }
    acc
}

/// Uniform grid of `count` points on `[a, b]`.
pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..count)
            .map(|i| a + (b - a) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Log-spaced grid of `count` points on `[a, b]`, `0 < a < b`.
pub fn logspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    linspace(la, lb, count).into_iter().map(f64::exp).collect()
}

/// Trapezoid weights for a uniform grid with `nodes` points and spacing `h`.
pub fn trapezoid_weights(nodes: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; nodes];
    if let Some(first) = w.first_mut() {
        *first = 0.5 * h;
    }
    if let Some(last) = w.last_mut() {
        *last = 0.5 * h;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(8);
        // degree 15 is integrated exactly by an 8-point rule
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(15) - 3.0 * x.powi(4));
        let exact = (2f64.powi(16) - 1.0) / 16.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-9 * exact.abs());
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_refined_converges() {
        let v = simpson_refined(0.0, PI, 1e-12, 1 << 20, f64::sin).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
    }

    #[test]
    fn origin_integral_handles_sqrt_singularity() {
        let rule = GaussLegendre::new(16);
        let v = integrate_from_origin(2.0, 40, &rule, |t| 1.0 / t.sqrt());
        assert!((v - 2.0 * 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let w = trapezoid_weights(65, 0.5);
        assert!((w.iter().sum::<f64>() - 32.0).abs() < 1e-12);
    }
}
