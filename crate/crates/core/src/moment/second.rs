use nalgebra::{DMatrix, DVector};

use super::basis::{ContinuumInitial, GridBasis};
use super::{KernelModel, MomentProblem, QuadratureInfo, VolterraSolution};
use crate::error::{Error, Result};
use crate::kernels::{DomainSpec, HeatKernel};
use crate::noise::NoiseSpec;
use crate::quadrature::GaussLegendre;

/// Largest value kept before a trajectory is declared overflowed.
pub(crate) const OVERFLOW_LIMIT: f64 = 1e300;

/// Weights for `∫₀^Δ e^{-κv} q(Δ - v) dv` with `q` linear between `q_old`
/// (at `v = Δ`) and `q_new` (at `v = 0`): returns `(e^{-κΔ}, α, β)` so the
/// integral is `α q_old + β q_new`. `κ` may be negative.
pub(crate) fn exponential_weights(kappa: f64, dt: f64) -> (f64, f64, f64) {
    let x = kappa * dt;
    let decay = (-x).exp();
    let (alpha, whole) = if x.abs() < 0.05 {
        // α/Δ = Σ_{k≥2} (-1)^k (k-1)/k! x^{k-2},  (1-e^{-x})/x = Σ_{k≥1} (-x)^{k-1}/k!
        let (mut a, mut w) = (0.0, 0.0);
        let mut fact = 1.0;
        let mut pow = 1.0;
        for k in 1..=14 {
            fact *= k as f64;
            if k >= 2 {
                a += (k as f64 - 1.0) / fact * pow;
                pow *= -x;
            }
            w += if k == 1 { 1.0 } else { (-x).powi(k - 1) / fact };
        }
        (a * dt, w * dt)
    } else {
        let whole = -(-x).exp_m1() / x * dt;
        (dt * (1.0 - decay * (1.0 + x)) / (x * x), whole)
    };
    (decay, alpha, whole - alpha)
}

/// The modal recursion for the second-moment equation on a fixed grid.
pub(crate) struct ModalMarch {
    pub grid: GridBasis,
    decay: DMatrix<f64>,
    alpha: DMatrix<f64>,
    beta: DMatrix<f64>,
    noise_weights: Vec<f64>,
    near: Vec<DVector<f64>>,
    far: Vec<DVector<f64>>,
    /// `B + diag(near₀)`, the part of the history integral that involves
    /// the unknown `M(t_{i+1})`.
    local: DMatrix<f64>,
    g: Vec<DVector<f64>>,
    steps: usize,
    step: f64,
    model: KernelModel,
}

enum Feed<'a> {
    Implicit(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Explicit,
    Given(&'a [DVector<f64>]),
}

impl ModalMarch {
    pub fn new(p: &MomentProblem) -> Result<Self> {
        let grid = GridBasis::new(&p.domain, p.nodes);
        let steps = p.steps();
        let step = p.horizon / steps as f64;
        let mu = p.domain.drift;
        let m = grid.mode_count();
        let (decay, alpha, beta, noise_weights, g) = match p.model {
            KernelModel::Continuum => {
                let nu = grid.continuum_rates();
                let mut decay = DMatrix::zeros(m, m);
                let mut alpha = DMatrix::zeros(m, m);
                let mut beta = DMatrix::zeros(m, m);
                for a in 0..m {
                    for b in a..m {
                        let (d, al, be) = exponential_weights(nu[a] + nu[b] - 2.0 * mu, step);
                        for (i, j) in [(a, b), (b, a)] {
                            decay[(i, j)] = d;
                            alpha[(i, j)] = al;
                            beta[(i, j)] = be;
                        }
                    }
                }
                let init = ContinuumInitial::new(&p.u0, &p.domain, &grid, step)?;
                let g = init
                    .trajectory(step, steps)
                    .into_iter()
                    .map(DVector::from_vec)
                    .collect();
                (decay, alpha, beta, grid.weights.clone(), g)
            }
            KernelModel::Scheme => {
                let rho: Vec<f64> = grid
                    .scheme_rates()
                    .iter()
                    .map(|&nu| 1.0 + step * (mu - nu))
                    .collect();
                let decay = DMatrix::from_fn(m, m, |a, b| rho[a] * rho[b]);
                let alpha = DMatrix::from_element(m, m, step);
                let beta = DMatrix::zeros(m, m);
                // each node's increment is scaled by h^{-1/2} irrespective of its weight
                let v = grid.weights.iter().map(|w| w * w / grid.h).collect();
                let u0 = DVector::from_iterator(
                    grid.len(),
                    grid.x.iter().map(|&x| p.u0.value(x, p.domain.length)),
                );
                let mut coef = grid.project(&u0);
                let mut g = Vec::with_capacity(steps + 1);
                g.push(u0);
                for _ in 0..steps {
                    for (c, r) in coef.iter_mut().zip(&rho) {
                        *c *= r;
                    }
                    g.push(&grid.e * &coef);
                }
                (decay, alpha, beta, v, g)
            }
        };
        let (near, far) = match p.model {
            KernelModel::Continuum => remainder_weights(&grid, &p.domain, step, steps),
            KernelModel::Scheme => (Vec::new(), Vec::new()),
        };
        let mut march = Self {
            grid,
            decay,
            alpha,
            beta,
            noise_weights,
            near,
            far,
            local: DMatrix::zeros(0, 0),
            g,
            steps,
            step,
            model: p.model,
        };
        march.local = march.local_operator();
        Ok(march)
    }

    fn local_operator(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let e = &self.grid.e;
        let mut b = DMatrix::zeros(n, n);
        if self.beta.iter().any(|&v| v != 0.0) {
            let mut x = self.beta.clone();
            for k in 0..n {
                let ek = e.row(k).transpose();
                x.copy_from(&self.beta);
                x.component_mul_assign(&(&ek * ek.transpose()));
                let y = e * &x;
                for j in 0..n {
                    b[(k, j)] = self.noise_weights[j] * y.row(j).dot(&e.row(j));
                }
            }
        }
        if let Some(n0) = self.near.first() {
            for k in 0..n {
                b[(k, k)] += n0[k];
            }
        }
        b
    }

    fn gram(&self, m: &DVector<f64>) -> DMatrix<f64> {
        let mut y = self.grid.e.clone();
        for (r, mut row) in y.row_iter_mut().enumerate() {
            row *= self.noise_weights[r] * m[r];
        }
        self.grid.e.tr_mul(&y)
    }

    fn expand_diagonal(&self, h: &DMatrix<f64>) -> DVector<f64> {
        let y = &self.grid.e * h;
        DVector::from_fn(self.grid.len(), |k, _| y.row(k).dot(&self.grid.e.row(k)))
    }

    pub fn info(&self) -> QuadratureInfo {
        QuadratureInfo {
            model: self.model,
            modes: self.grid.mode_count(),
            step: self.step,
            remainder_lags: self.near.len(),
        }
    }

    fn initial_square(&self) -> Vec<DVector<f64>> {
        self.g.iter().map(|g| g.component_mul(g)).collect()
    }

    /// Marches the recursion; returns the trajectory and, on overflow, the
    /// time at which it happened (the trajectory then stops before it).
    fn march(&self, c: f64, feed: Feed<'_>) -> (Vec<DVector<f64>>, Option<f64>) {
        let g2 = self.initial_square();
        if c == 0.0 {
            return (g2, None);
        }
        let m = self.grid.mode_count();
        let mut hist = DMatrix::zeros(m, m);
        let mut traj: Vec<DVector<f64>> = Vec::with_capacity(self.steps + 1);
        traj.push(g2[0].clone());
        let mut q_prev = self.gram(&traj[0]);
        let lags = self.near.len();
        for i in 0..self.steps {
            let mut partial = self.decay.component_mul(&hist);
            partial += self.alpha.component_mul(&q_prev);
            let mut acc = self.expand_diagonal(&partial);
            for lag in 0..lags.min(i + 1) {
                acc += self.far[lag].component_mul(&traj[i - lag]);
                if lag >= 1 {
                    acc += self.near[lag].component_mul(&traj[i + 1 - lag]);
                }
            }
            let rhs = &g2[i + 1] + acc * c;
            let mut next = match &feed {
                Feed::Implicit(lu) => lu.solve(&rhs).unwrap_or_else(|| rhs.clone()),
                Feed::Explicit => rhs,
                Feed::Given(prev) => rhs + (&self.local * &prev[i + 1]) * c,
            };
            for v in next.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            if next.iter().any(|v| !v.is_finite() || *v > OVERFLOW_LIMIT) {
                return (traj, Some((i + 1) as f64 * self.step));
            }
            let q_new = self.gram(&next);
            partial += self.beta.component_mul(&q_new);
            hist = partial;
            q_prev = q_new;
            traj.push(next);
        }
        (traj, None)
    }

    fn implicit_feed(&self, c: f64) -> Result<Feed<'static>> {
        if self.model == KernelModel::Scheme {
            return Ok(Feed::Explicit);
        }
        let n = self.grid.len();
        let row_norm = (0..n)
            .map(|k| self.local.row(k).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if c * row_norm >= 1.0 {
            return Err(Error::Resolution(format!(
                "local weight λ²s²·‖W‖ = {:.3} >= 1; reduce the time step",
                c * row_norm
            )));
        }
        let a = DMatrix::identity(n, n) - &self.local * c;
        Ok(Feed::Implicit(a.lu()))
    }

    pub fn solution(&self, traj: Vec<DVector<f64>>) -> VolterraSolution {
        let times = (0..traj.len()).map(|i| i as f64 * self.step).collect();
        let values = traj
            .iter()
            .map(|v| self.grid.to_full_grid(v.as_slice()))
            .collect();
        VolterraSolution {
            times,
            nodes: self.grid.full_grid(),
            values,
            two_point: None,
            info: self.info(),
        }
    }
}

/// Product-integration weights of the local remainder
/// `r(τ, x_k) = e^{2μτ}[p(2τ,x_k,x_k) - Σ_a e^{-2ν_aτ} E_ka²]` against hat
/// functions in the lag, one `(near, far)` pair per lag segment.
fn remainder_weights(
    grid: &GridBasis,
    domain: &DomainSpec,
    dt: f64,
    steps: usize,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let still = DomainSpec {
        drift: 0.0,
        ..*domain
    };
    let kernel = HeatKernel::new(still).expect("validated domain");
    let nu = grid.continuum_rates();
    let top = nu.iter().copied().fold(0.0, f64::max);
    let mu = domain.drift;
    let lags = ((20.0 / ((top - mu.max(0.0)) * dt)).ceil() as usize + 1).clamp(1, steps.max(1));
    let rule = GaussLegendre::new(12);
    let n = grid.len();
    let e2: Vec<Vec<f64>> = (0..n)
        .map(|k| grid.e.row(k).iter().map(|v| v * v).collect())
        .collect();
    let mut near = Vec::with_capacity(lags);
    let mut far = Vec::with_capacity(lags);
    for m in 0..lags {
        let t0 = m as f64 * dt;
        let (u_lo, u_hi) = (t0.sqrt(), (t0 + dt).sqrt());
        let panels = 4;
        let mut wn = DVector::zeros(n);
        let mut wf = DVector::zeros(n);
        for k in 0..n {
            let x = grid.x[k];
            let (mut a, mut b) = (0.0, 0.0);
            for s in 0..panels {
                let lo = u_lo + (u_hi - u_lo) * s as f64 / panels as f64;
                let hi = u_lo + (u_hi - u_lo) * (s + 1) as f64 / panels as f64;
                for (u, w) in rule.mapped(lo, hi) {
                    let tau = u * u;
                    let modal: f64 = nu
                        .iter()
                        .zip(&e2[k])
                        .map(|(&v, &e)| (-2.0 * v * tau).exp() * e)
                        .sum();
                    let r = ((2.0 * mu * tau).exp() * (kernel.density(2.0 * tau, x, x) - modal)).max(0.0);
                    let lin = (tau - t0) / dt;
                    let jw = w * 2.0 * u * r;
                    a += jw * (1.0 - lin);
                    b += jw * lin;
                }
            }
            wn[k] = a;
            wf[k] = b;
        }
        near.push(wn);
        far.push(wf);
    }
    (near, far)
}

fn check_white(p: &MomentProblem) -> Result<()> {
    p.validate()?;
    if p.noise != NoiseSpec::White {
        return Err(Error::Precondition(
            "the second-moment equation is closed for white noise; use solve_two_point".into(),
        ));
    }
    Ok(())
}

/// Solves the second-moment equation. For `σ(u) = s·u` the result is the
/// exact second moment; for sandwiched `σ` run it with `s = l_σ` and
/// `s = L_σ` to bracket the true value.
pub fn solve_second_moment(p: &MomentProblem) -> Result<VolterraSolution> {
    check_white(p)?;
    let march = ModalMarch::new(p)?;
    let c = p.coupling();
    let feed = if c == 0.0 { Feed::Explicit } else { march.implicit_feed(c)? };
    let (traj, overflow) = march.march(c, feed);
    let sol = march.solution(traj);
    match overflow {
        Some(time) => Err(Error::Overflow {
            time,
            partial: Box::new(sol),
        }),
        None => Ok(sol),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardSolution {
    pub solution: VolterraSolution,
    /// `max|Mᵏ⁺¹ - Mᵏ| / max|Mᵏ⁺¹|` after each iteration.
    pub differences: Vec<f64>,
    pub converged: bool,
}

/// Whole-trajectory fixed-point iteration of the same discrete equation,
/// seeded with `|G u0|²`. Stops early once the successive difference drops
/// below `1e-15`; divergence is reported through `differences`.
pub fn picard_solve(p: &MomentProblem, iterations: usize) -> Result<PicardSolution> {
    check_white(p)?;
    let march = ModalMarch::new(p)?;
    let c = p.coupling();
    let mut current = march.initial_square();
    let mut differences = Vec::new();
    let mut converged = c == 0.0;
    for _ in 0..iterations {
        if converged {
            break;
        }
        let (next, overflow) = march.march(c, Feed::Given(&current));
        if let Some(time) = overflow {
            return Err(Error::Overflow {
                time,
                partial: Box::new(march.solution(next)),
            });
        }
        let scale = next.iter().map(|v| v.amax()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let diff = next
            .iter()
            .zip(&current)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
            / scale;
        differences.push(diff);
        current = next;
        if diff < 1e-15 {
            converged = true;
        }
    }
    Ok(PicardSolution {
        solution: march.solution(current),
        differences,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exponential_weights_integrate_linear_data() {
        for &kappa in &[-3.0, -1e-4, 0.0, 1e-6, 0.3, 5.0, 400.0] {
            let dt = 0.01;
            let (d, a, b) = exponential_weights(kappa, dt);
            assert!((d - (-kappa * dt).exp()).abs() < 1e-15);
            // q ≡ 1 gives ∫₀^Δ e^{-κv} dv
            let whole = if kappa == 0.0 { dt } else { -(-kappa * dt).exp_m1() / kappa };
            assert!((a + b - whole).abs() < 1e-15 * whole.max(1e-300), "κ={kappa}");
            // q(s) = s on [0, Δ]: ∫₀^Δ e^{-κv}(Δ - v) dv = β Δ
            let gl = GaussLegendre::new(20);
            let exact = gl.integrate(0.0, dt, |v| (-kappa * v).exp() * (dt - v));
            assert!((b * dt - exact).abs() < 1e-13 * exact, "κ={kappa}");
        }
    }

    #[test]
    fn deterministic_decay_rate() {
        let d = DomainSpec::dirichlet(PI).unwrap();
        let p = MomentProblem::new(d, 0.0, 10.0, 32, 0.01);
        let s = solve_second_moment(&p).unwrap();
        let series = s.series_at(PI / 2.0);
        let rate = (series[1000].ln() - series[500].ln()) / 5.0;
        assert!((rate + 1.0).abs() < 1e-6, "rate {rate}");
    }

    #[test]
    fn local_operator_is_nonnegative() {
        let d = DomainSpec::dirichlet(PI).unwrap();
        let p = MomentProblem::new(d, 1.0, 2.0, 16, 0.01);
        let m = ModalMarch::new(&p).unwrap();
        assert!(m.local.iter().all(|&v| v >= -1e-15));
        assert!(m.near.iter().chain(&m.far).all(|w| w.iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn colored_noise_is_rejected() {
        let d = DomainSpec::dirichlet(PI).unwrap();
        let mut p = MomentProblem::new(d, 1.0, 2.0, 16, 0.01);
        p.noise = NoiseSpec::colored(crate::noise::Covariance::Constant);
        assert!(matches!(solve_second_moment(&p), Err(Error::Precondition(_))));
    }
}
