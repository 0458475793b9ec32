//! Heat kernels of the generator `½∂²ₓₓ` on the line and on `(0, L)`.
//!
//! Bounded-domain kernels carry two representations: the method of images
//! (fast for `t < L²/π²`) and the eigenfunction series (fast otherwise).
//! Both report a certified bound on the truncated tail.
//!
//! All kernels here are drift-free. A linear drift `μ u` multiplies every
//! kernel by `e^{μt}`; that factor is applied by [`green_apply`] and the
//! moment solvers, not by the kernel functions.

mod identities;
mod initial;
mod series;

pub use identities::{chapman_kolmogorov, kernel_identity_grid, square_identity, KernelCheck, DOMINATION_TOL, IDENTITY_TOL};
pub use initial::InitialCondition;
pub use series::{image_sum, spectral_sum};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::simpson_refined;

/// Boundary behaviour at both ends of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Absorbing: `u(0) = u(L) = 0`.
    Dirichlet,
    /// Reflecting: `∂ₓu(0) = ∂ₓu(L) = 0`.
    Neumann,
}

impl Boundary {
    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Dirichlet => "dirichlet",
            Boundary::Neumann => "neumann",
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The deterministic skeleton of the equation: interval, boundary, drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub length: f64,
    pub boundary: Boundary,
    /// Linear drift coefficient `μ` (1/time).
    #[serde(default)]
    pub drift: f64,
}

impl DomainSpec {
    pub fn new(length: f64, boundary: Boundary) -> Result<Self> {
        let d = Self {
            length,
            boundary,
            drift: 0.0,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn dirichlet(length: f64) -> Result<Self> {
        Self::new(length, Boundary::Dirichlet)
    }

    pub fn neumann(length: f64) -> Result<Self> {
        Self::new(length, Boundary::Neumann)
    }

    pub fn with_drift(mut self, drift: f64) -> Result<Self> {
        self.drift = drift;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return domain(format!("interval length must be positive, got {}", self.length));
        }
        if !self.drift.is_finite() {
            return domain("drift must be finite");
        }
        Ok(())
    }

    /// Rate `ν₁ = (π/L)²/2` of the slowest non-constant eigenmode.
    pub fn first_rate(&self) -> f64 {
        let k = PI / self.length;
        0.5 * k * k
    }

    /// Time below which the image representation is used.
    pub fn crossover_time(&self) -> f64 {
        self.length * self.length / (PI * PI)
    }

    pub fn spectral_basis(&self, truncation: usize) -> SpectralBasis {
        SpectralBasis {
            length: self.length,
            boundary: self.boundary,
            truncation,
        }
    }

    pub(crate) fn check_point(&self, x: f64) -> Result<()> {
        if !(x.is_finite() && (0.0..=self.length).contains(&x)) {
            return domain(format!("point {x} outside [0, {}]", self.length));
        }
        Ok(())
    }
}

/// Eigen-decomposition of the generator on `(0, L)`.
///
/// Dirichlet modes are indexed from 1, Neumann modes from 0 (the constant
/// mode `1/√L`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBasis {
    pub length: f64,
    pub boundary: Boundary,
    pub truncation: usize,
}

impl SpectralBasis {
    pub fn first_index(&self) -> usize {
        match self.boundary {
            Boundary::Dirichlet => 1,
            Boundary::Neumann => 0,
        }
    }

    /// Indices `first_index()..first_index() + truncation`.
    pub fn indices(&self) -> std::ops::Range<usize> {
        let a = self.first_index();
        a..a + self.truncation
    }

    /// Laplacian eigenvalue `(nπ/L)²`.
    pub fn laplacian_eigenvalue(&self, n: usize) -> f64 {
        let k = n as f64 * PI / self.length;
        k * k
    }

    /// Decay rate of mode `n` under `½∂²ₓₓ`.
    pub fn generator_rate(&self, n: usize) -> f64 {
        0.5 * self.laplacian_eigenvalue(n)
    }

    /// L²-normalised eigenfunction.
    pub fn eigenfunction(&self, n: usize, x: f64) -> f64 {
        let l = self.length;
        match self.boundary {
            Boundary::Dirichlet => (2.0 / l).sqrt() * (n as f64 * PI * x / l).sin(),
            Boundary::Neumann if n == 0 => 1.0 / l.sqrt(),
            Boundary::Neumann => (2.0 / l).sqrt() * (n as f64 * PI * x / l).cos(),
        }
    }
}

/// A kernel evaluation request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelQuery {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Relative accuracy requested, in `(0, 1e-3]`.
    pub tolerance: f64,
}

impl KernelQuery {
    pub const DEFAULT_TOLERANCE: f64 = 1e-12;

    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self {
            t,
            x,
            y,
            tolerance: Self::DEFAULT_TOLERANCE,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    fn validate(&self, d: &DomainSpec) -> Result<()> {
        if !(self.t.is_finite() && self.t > 0.0) {
            return domain(format!("kernel time must be positive, got {}", self.t));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-3) {
            return domain(format!("tolerance {} outside (0, 1e-3]", self.tolerance));
        }
        d.check_point(self.x)?;
        d.check_point(self.y)
    }
}

/// How a kernel value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Images { shifts: usize },
    Spectral { modes: usize },
}

/// A kernel value with a certified bound on the neglected tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub tail_bound: f64,
    pub representation: Representation,
}

impl KernelValue {
    pub(crate) fn meets(&self, tolerance: f64) -> bool {
        self.tail_bound <= tolerance * self.value.abs().max(f64::MIN_POSITIVE)
    }
}

pub(crate) const MAX_MODES: usize = 1 << 16;
pub(crate) const MAX_SHIFTS: usize = 1 << 12;

/// Free-space transition density `e^{-(x-y)²/(2t)} / √(2πt)`.
pub fn gaussian_kernel(t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return domain(format!("kernel time must be positive, got {t}"));
    }
    Ok(gaussian(t, x - y))
}

#[inline]
pub(crate) fn gaussian(t: f64, z: f64) -> f64 {
    (-z * z / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Dirichlet heat kernel `p_D(t, x, y)`.
pub fn dirichlet_kernel(q: &KernelQuery, d: &DomainSpec) -> Result<KernelValue> {
    if d.boundary != Boundary::Dirichlet {
        return Err(Error::Precondition(
            "dirichlet_kernel needs a Dirichlet domain".into(),
        ));
    }
    heat_kernel(q, d)
}

/// Neumann heat kernel `p_N(t, x, y)`.
pub fn neumann_kernel(q: &KernelQuery, d: &DomainSpec) -> Result<KernelValue> {
    if d.boundary != Boundary::Neumann {
        return Err(Error::Precondition(
            "neumann_kernel needs a Neumann domain".into(),
        ));
    }
    heat_kernel(q, d)
}

/// Heat kernel for the domain's boundary condition, using the faster of the
/// two representations.
pub fn heat_kernel(q: &KernelQuery, d: &DomainSpec) -> Result<KernelValue> {
    d.validate()?;
    q.validate(d)?;
    let v = evaluate(d.boundary, d.length, q.t, q.x, q.y, q.tolerance);
    if v.meets(q.tolerance) {
        Ok(v)
    } else {
        Err(Error::Accuracy {
            requested: q.tolerance,
            achieved: v.tail_bound / v.value.abs().max(f64::MIN_POSITIVE),
        })
    }
}

fn evaluate(boundary: Boundary, length: f64, t: f64, x: f64, y: f64, tol: f64) -> KernelValue {
    if t < length * length / (PI * PI) {
        image_sum(boundary, length, t, x, y, tol, MAX_SHIFTS)
    } else {
        spectral_sum(boundary, length, t, x, y, tol, MAX_MODES)
    }
}

/// Infallible evaluator for validated domains, used in inner loops.
#[derive(Debug, Clone, Copy)]
pub struct HeatKernel {
    domain: DomainSpec,
    tolerance: f64,
}

impl HeatKernel {
    pub fn new(domain: DomainSpec) -> Result<Self> {
        domain.validate()?;
        Ok(Self {
            domain,
            tolerance: KernelQuery::DEFAULT_TOLERANCE,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// Drift-free density for `t > 0`; returns 0 for `t <= 0`.
    #[inline]
    pub fn density(&self, t: f64, x: f64, y: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        evaluate(
            self.domain.boundary,
            self.domain.length,
            t,
            x,
            y,
            self.tolerance,
        )
        .value
    }
}

/// Heat semigroup applied to `u0`: `∫ u0(y) p(t, x, y) dy`, times `e^{μt}`
/// when the domain carries a drift.
pub fn green_apply(u0: &InitialCondition, t: f64, x: f64, d: &DomainSpec) -> Result<f64> {
    green_apply_with_tolerance(u0, t, x, d, 1e-10)
}

pub fn green_apply_with_tolerance(
    u0: &InitialCondition,
    t: f64,
    x: f64,
    d: &DomainSpec,
    tol: f64,
) -> Result<f64> {
    d.validate()?;
    d.check_point(x)?;
    u0.validate(d.length)?;
    if !(t.is_finite() && t > 0.0) {
        return domain(format!("time must be positive, got {t}"));
    }
    let kernel = HeatKernel::new(*d)?;
    let mut cuts = u0.breakpoints(d.length);
    cuts.push(x);
    cuts.push(0.0);
    cuts.push(d.length);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        total += simpson_refined(a, b, tol, 1 << 22, |y| {
            u0.value(y, d.length) * kernel.density(t, x, y)
        })?;
    }
    Ok(total * (d.drift * t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi_dirichlet() -> DomainSpec {
        DomainSpec::dirichlet(PI).unwrap()
    }

    #[test]
    fn gaussian_diagonal_and_symmetry() {
        let v = gaussian_kernel(1.0, 0.0, 0.0).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(
            gaussian_kernel(0.7, 0.2, 1.3).unwrap(),
            gaussian_kernel(0.7, 1.3, 0.2).unwrap()
        );
        assert!(gaussian_kernel(0.0, 0.0, 0.0).is_err());
        assert!(gaussian_kernel(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_integrates_to_one() {
        let v = simpson_refined(-20.0, 20.0, 1e-12, 1 << 20, |y| {
            gaussian_kernel(0.5, 0.3, y).unwrap()
        })
        .unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dirichlet_vanishes_on_boundary() {
        let d = pi_dirichlet();
        let v = dirichlet_kernel(&KernelQuery::new(1.0, 0.0, PI / 2.0), &d).unwrap();
        assert_eq!(v.value, 0.0);
        let v = dirichlet_kernel(&KernelQuery::new(0.05, PI, 1.0), &d).unwrap();
        assert!(v.value.abs() < 1e-15);
    }

    #[test]
    fn dirichlet_one_mode_regime() {
        let d = pi_dirichlet();
        let v = dirichlet_kernel(&KernelQuery::new(20.0, PI / 2.0, PI / 2.0), &d).unwrap();
        let e1 = d.spectral_basis(1).eigenfunction(1, PI / 2.0);
        let one_mode = (-0.5f64 * 20.0).exp() * e1 * e1;
        assert!(((v.value - one_mode) / one_mode).abs() < 1e-6);
    }

    #[test]
    fn neumann_mass_and_limit() {
        let d = DomainSpec::neumann(PI).unwrap();
        let x = 0.2 * PI;
        let mass = simpson_refined(0.0, PI, 1e-12, 1 << 20, |y| {
            neumann_kernel(&KernelQuery::new(0.3, x, y), &d).unwrap().value
        })
        .unwrap();
        assert!((mass - 1.0).abs() < 1e-8);
        let v = neumann_kernel(&KernelQuery::new(100.0, 0.4, 2.9), &d).unwrap();
        assert!((v.value - 1.0 / PI).abs() < 1e-6);
    }

    #[test]
    fn wrong_boundary_is_rejected() {
        let d = pi_dirichlet();
        assert!(matches!(
            neumann_kernel(&KernelQuery::new(1.0, 0.5, 0.5), &d),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn invalid_queries() {
        let d = pi_dirichlet();
        assert!(heat_kernel(&KernelQuery::new(0.0, 0.5, 0.5), &d).is_err());
        assert!(heat_kernel(&KernelQuery::new(1.0, -0.1, 0.5), &d).is_err());
        let q = KernelQuery::new(1.0, 0.5, 0.5).with_tolerance(0.1);
        assert!(heat_kernel(&q, &d).is_err());
        assert!(DomainSpec::dirichlet(0.0).is_err());
        assert!(pi_dirichlet().with_drift(f64::NAN).is_err());
    }

    #[test]
    fn accuracy_error_when_truncation_is_capped() {
        let v = spectral_sum(Boundary::Dirichlet, PI, 1e-4, 1.0, 1.2, 1e-12, 8);
        assert!(!v.meets(1e-12));
        assert!(v.tail_bound > 0.0);
    }

    #[test]
    fn green_apply_neumann_conserves_constants() {
        let d = DomainSpec::neumann(PI).unwrap();
        let u0 = InitialCondition::Constant { value: 1.0 };
        for &(t, x) in &[(0.01, 0.0), (0.5, 1.0), (3.0, PI)] {
            let v = green_apply(&u0, t, x, &d).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "t={t} x={x} v={v}");
        }
    }

    #[test]
    fn green_apply_first_mode_decays_at_half_rate() {
        let d = pi_dirichlet();
        let u0 = InitialCondition::FirstMode { amplitude: 1.0 };
        let basis = d.spectral_basis(1);
        for &(t, x) in &[(0.2, 1.0), (1.0, PI / 2.0), (4.0, 2.5)] {
            let v = green_apply(&u0, t, x, &d).unwrap();
            let exact = (-0.5 * t).exp() * basis.eigenfunction(1, x);
            assert!((v - exact).abs() < 1e-6 * exact.abs().max(1e-3));
        }
    }

    #[test]
    fn green_apply_bump_decays_exponentially() {
        let d = pi_dirichlet();
        let u0 = InitialCondition::default();
        let v = green_apply(&u0, 30.0, PI / 2.0, &d).unwrap();
        // ∫ p_D dy ≤ L (2/L) Σ e^{-ν_n t} ≤ 2 e^{-t/2} (1 + 1e-10) at t = 30
        let c = 2.0 * u0.sup(PI) * (1.0 + 1e-10);
        assert!(v > 0.0 && v <= c * (-15.0f64).exp());
    }

    #[test]
    fn green_apply_with_drift_scales() {
        let d = pi_dirichlet();
        let u0 = InitialCondition::default();
        let a = green_apply(&u0, 1.5, 1.2, &d).unwrap();
        let b = green_apply(&u0, 1.5, 1.2, &d.with_drift(0.3).unwrap()).unwrap();
        assert!((b / a - (0.45f64).exp()).abs() < 1e-9);
    }
}
