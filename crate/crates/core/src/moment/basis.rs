//! Discrete eigenbasis on the uniform solver grid.
//!
//! Dirichlet: interior nodes `1..n-1`, modes `1..n-1`, `E_ka = √(2/L) sin(aπk/n)`.
//! Neumann: nodes `0..n`, modes `0..n`, cosines with the constant and
//! Nyquist modes normalised to `1/√L`. Both are orthonormal under the
//! trapezoid weights, exactly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::kernels::{Boundary, DomainSpec, InitialCondition};
use crate::quadrature::simpson;

#[derive(Debug, Clone)]
pub(crate) struct GridBasis {
    pub boundary: Boundary,
    pub length: f64,
    pub intervals: usize,
    pub h: f64,
    /// Index into the full grid `0..=n` of each unknown.
    pub node_index: Vec<usize>,
    pub x: Vec<f64>,
    pub weights: Vec<f64>,
    /// Mode label of each column of `e`.
    pub modes: Vec<usize>,
    /// `nodes × modes`.
    pub e: DMatrix<f64>,
}

impl GridBasis {
    pub fn new(domain: &DomainSpec, intervals: usize) -> Self {
        let n = intervals;
        let h = domain.length / n as f64;
        let (node_index, modes): (Vec<usize>, Vec<usize>) = match domain.boundary {
            Boundary::Dirichlet => ((1..n).collect(), (1..n).collect()),
            Boundary::Neumann => ((0..=n).collect(), (0..=n).collect()),
        };
        let x: Vec<f64> = node_index.iter().map(|&k| k as f64 * h).collect();
        let weights: Vec<f64> = node_index
            .iter()
            .map(|&k| if k == 0 || k == n { 0.5 * h } else { h })
            .collect();
        let l = domain.length;
        let e = DMatrix::from_fn(node_index.len(), modes.len(), |r, c| {
            let (k, a) = (node_index[r] as f64, modes[c]);
            let arg = PI * a as f64 * k / n as f64;
            match domain.boundary {
                Boundary::Dirichlet => (2.0 / l).sqrt() * arg.sin(),
                Boundary::Neumann if a == 0 || a == n => arg.cos() / l.sqrt(),
                Boundary::Neumann => (2.0 / l).sqrt() * arg.cos(),
            }
        });
        Self {
            boundary: domain.boundary,
            length: l,
            intervals: n,
            h,
            node_index,
            x,
            weights,
            modes,
            e,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// `ν_a = (aπ/L)²/2`.
    pub fn continuum_rates(&self) -> Vec<f64> {
        self.modes
            .iter()
            .map(|&a| {
                let k = a as f64 * PI / self.length;
                0.5 * k * k
            })
            .collect()
    }

    /// Eigenvalues of `-½ h⁻² (second difference)`: `(2/h²) sin²(aπ/(2n))`.
    pub fn scheme_rates(&self) -> Vec<f64> {
        self.modes
            .iter()
            .map(|&a| {
                let s = (PI * a as f64 / (2.0 * self.intervals as f64)).sin();
                2.0 * s * s / (self.h * self.h)
            })
            .collect()
    }

    /// Continuum eigenfunction of mode label `a` at `x`.
    pub fn continuum_eigenfunction(&self, a: usize, x: f64) -> f64 {
        let arg = PI * a as f64 * x / self.length;
        match self.boundary {
            Boundary::Dirichlet => (2.0 / self.length).sqrt() * arg.sin(),
            Boundary::Neumann if a == 0 => 1.0 / self.length.sqrt(),
            Boundary::Neumann => (2.0 / self.length).sqrt() * arg.cos(),
        }
    }

    /// Discrete transform `Σ_j w_j E_ja v_j`.
    pub fn project(&self, values: &DVector<f64>) -> DVector<f64> {
        let weighted = values.component_mul(&DVector::from_column_slice(&self.weights));
        self.e.tr_mul(&weighted)
    }

    /// Scatter unknowns back onto the full grid `0..=n` (Dirichlet ends = 0).
    pub fn to_full_grid(&self, values: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.intervals + 1];
        for (&k, &v) in self.node_index.iter().zip(values) {
            full[k] = v;
        }
        full
    }

    pub fn full_grid(&self) -> Vec<f64> {
        (0..=self.intervals).map(|k| k as f64 * self.h).collect()
    }
}

/// `(G u0)(t, x) = e^{μt} Σ_a e^{-ν_a t} c_a e_a(x)` on the solver nodes
/// from continuum modal coefficients `c_a = ∫ u0 e_a`; the series is cut
/// where `e^{-ν_a t_min} < 1e-17`. At `t = 0` the profile itself is used.
pub(crate) struct ContinuumInitial {
    rates: Vec<f64>,
    /// `modes × nodes`, `c_a e_a(x_k)`.
    terms: Vec<Vec<f64>>,
    at_zero: Vec<f64>,
    drift: f64,
}

const COEFF_INTERVALS: usize = 4096;
const MAX_INITIAL_MODES: usize = 1 << 13;

impl ContinuumInitial {
    pub fn new(u0: &InitialCondition, domain: &DomainSpec, grid: &GridBasis, t_min: f64) -> Result<Self> {
        u0.validate(domain.length)?;
        let l = domain.length;
        let mut cuts = u0.breakpoints(l);
        cuts.extend([0.0, l]);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let first = match domain.boundary {
            Boundary::Dirichlet => 1,
            Boundary::Neumann => 0,
        };
        let mut rates = Vec::new();
        let mut terms = Vec::new();
        for a in first..first + MAX_INITIAL_MODES {
            let k = a as f64 * PI / l;
            let nu = 0.5 * k * k;
            if a > first + 2 && nu * t_min > 40.0 {
                break;
            }
            // enough intervals to resolve the oscillation of mode a
            let per = (COEFF_INTERVALS).max(16 * a);
            let mut c = 0.0;
            for w in cuts.windows(2) {
                if w[1] > w[0] {
                    c += simpson(w[0], w[1], per, |y| {
                        u0.value(y, l) * grid.continuum_eigenfunction(a, y)
                    });
                }
            }
            rates.push(nu);
            terms.push(grid.x.iter().map(|&x| c * grid.continuum_eigenfunction(a, x)).collect());
        }
        let at_zero = grid.x.iter().map(|&x| u0.value(x, l)).collect();
        Ok(Self {
            rates,
            terms,
            at_zero,
            drift: domain.drift,
        })
    }

    /// Values at `t_i = i·step`, `i = 0..=steps`.
    pub fn trajectory(&self, step: f64, steps: usize) -> Vec<Vec<f64>> {
        let nodes = self.at_zero.len();
        let mut out = Vec::with_capacity(steps + 1);
        out.push(self.at_zero.clone());
        let ratio: Vec<f64> = self.rates.iter().map(|&nu| ((self.drift - nu) * step).exp()).collect();
        let mut factor = vec![1.0; self.rates.len()];
        for _ in 1..=steps {
            let mut g = vec![0.0; nodes];
            for (a, f) in factor.iter_mut().enumerate() {
                *f *= ratio[a];
                if *f == 0.0 {
                    continue;
                }
                for (gk, &tk) in g.iter_mut().zip(&self.terms[a]) {
                    *gk += *f * tk;
                }
            }
            out.push(g);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_orthonormality() {
        for d in [DomainSpec::dirichlet(PI).unwrap(), DomainSpec::neumann(2.0).unwrap()] {
            let g = GridBasis::new(&d, 16);
            let w = DMatrix::from_diagonal(&DVector::from_column_slice(&g.weights));
            let gram = g.e.transpose() * w * &g.e;
            let eye = DMatrix::<f64>::identity(g.mode_count(), g.mode_count());
            assert!((gram - eye).abs().max() < 1e-13);
        }
    }

    #[test]
    fn initial_first_mode_decays_exactly() {
        let d = DomainSpec::dirichlet(PI).unwrap();
        let g = GridBasis::new(&d, 32);
        let u0 = InitialCondition::FirstMode { amplitude: 1.0 };
        let init = ContinuumInitial::new(&u0, &d, &g, 0.01).unwrap();
        let traj = init.trajectory(0.01, 100);
        for (k, &x) in g.x.iter().enumerate() {
            let exact = (-0.5f64).exp() * (2.0 / PI).sqrt() * x.sin();
            assert!((traj[100][k] - exact).abs() < 1e-9);
        }
    }
}
