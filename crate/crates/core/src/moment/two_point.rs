use nalgebra::{DMatrix, DVector};

use super::basis::{ContinuumInitial, GridBasis};
use super::second::{exponential_weights, OVERFLOW_LIMIT};
use super::{KernelModel, MomentProblem, PackedSymmetric, QuadratureInfo, VolterraSolution, MAX_TWO_POINT_NODES};
use crate::error::{Error, Result};
use crate::noise::validate_covariance;

const FIXED_POINT_TOL: f64 = 1e-14;
const FIXED_POINT_ITERATIONS: usize = 100;

/// Solves the two-point equation for colored noise on the interval.
///
/// The grid modes carry both kernels, `Ĉ = Eᵀ W (F∘M) W E` is propagated by
/// the same exponential recursion as the second moment, and the implicit
/// part of each step is resolved by fixed-point iteration (contraction
/// factor about `λ²s²Δt·‖f‖/2`). Symmetry is exact: every step is
/// symmetrised before it is stored in packed form.
pub fn solve_two_point(p: &MomentProblem) -> Result<VolterraSolution> {
    p.validate()?;
    let Some(cov) = p.noise.covariance() else {
        return Err(Error::Precondition("the two-point equation needs colored noise".into()));
    };
    if p.model != KernelModel::Continuum {
        return Err(Error::Precondition("the two-point solver uses the continuum kernel".into()));
    }
    if p.nodes > MAX_TWO_POINT_NODES {
        return Err(Error::Precondition(format!(
            "two-point solver supports at most {MAX_TWO_POINT_NODES} intervals"
        )));
    }
    validate_covariance(&p.noise, &p.domain, p.nodes)?;

    let grid = GridBasis::new(&p.domain, p.nodes);
    let steps = p.steps();
    let step = p.horizon / steps as f64;
    let m = grid.mode_count();
    let nu = grid.continuum_rates();
    let mu = p.domain.drift;
    let mut decay = DMatrix::zeros(m, m);
    let mut alpha = DMatrix::zeros(m, m);
    let mut beta = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let (d, al, be) = exponential_weights(nu[a] + nu[b] - 2.0 * mu, step);
            decay[(a, b)] = d;
            alpha[(a, b)] = al;
            beta[(a, b)] = be;
        }
    }
    let f = cov.matrix(&grid.x, grid.h);
    let we = DMatrix::from_fn(grid.len(), m, |k, a| grid.weights[k] * grid.e[(k, a)]);
    let project = |mm: &DMatrix<f64>| we.tr_mul(&(f.component_mul(mm) * &we));
    let expand = |h: &DMatrix<f64>| &grid.e * h * grid.e.transpose();
    let g: Vec<DVector<f64>> = ContinuumInitial::new(&p.u0, &p.domain, &grid, step)?
        .trajectory(step, steps)
        .into_iter()
        .map(DVector::from_vec)
        .collect();
    let c = p.coupling();

    let mut states = vec![&g[0] * g[0].transpose()];
    let mut hist = DMatrix::zeros(m, m);
    let mut q_prev = project(&states[0]);
    let mut overflow = None;
    for i in 0..steps {
        let outer = &g[i + 1] * g[i + 1].transpose();
        let next = if c == 0.0 {
            outer
        } else {
            let mut partial = decay.component_mul(&hist);
            partial += alpha.component_mul(&q_prev);
            let rhs = outer + expand(&partial) * c;
            let mut guess = states[i].clone();
            let mut done = false;
            for _ in 0..FIXED_POINT_ITERATIONS {
                let update = &rhs + expand(&beta.component_mul(&project(&guess))) * c;
                let change = (&update - &guess).amax();
                let scale = update.amax().max(f64::MIN_POSITIVE);
                guess = update;
                if change <= FIXED_POINT_TOL * scale {
                    done = true;
                    break;
                }
            }
            if !done {
                return Err(Error::Resolution(format!(
                    "implicit step did not converge at t = {}; reduce the time step",
                    (i + 1) as f64 * step
                )));
            }
            let q_new = project(&guess);
            partial += beta.component_mul(&q_new);
            hist = partial;
            q_prev = q_new;
            guess
        };
        let sym = (&next + next.transpose()) * 0.5;
        if sym.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
            overflow = Some((i + 1) as f64 * step);
            break;
        }
        if c == 0.0 {
            q_prev = project(&sym);
        }
        states.push(sym);
    }

    let full_n = grid.intervals + 1;
    let mut packed = Vec::with_capacity(states.len());
    let mut values = Vec::with_capacity(states.len());
    for s in &states {
        let mut pk = PackedSymmetric::zeros(full_n);
        for (r, &kr) in grid.node_index.iter().enumerate() {
            for (cc, &kc) in grid.node_index.iter().enumerate().skip(r) {
                pk.set(kr, kc, s[(r, cc)]);
            }
        }
        values.push((0..full_n).map(|k| pk.get(k, k)).collect());
        packed.push(pk);
    }
    let sol = VolterraSolution {
        times: (0..states.len()).map(|i| i as f64 * step).collect(),
        nodes: grid.full_grid(),
        values,
        two_point: Some(packed),
        info: QuadratureInfo {
            model: KernelModel::Continuum,
            modes: m,
            step,
            remainder_lags: 0,
        },
    };
    match overflow {
        Some(time) => Err(Error::Overflow {
            time,
            partial: Box::new(sol),
        }),
        None => Ok(sol),
    }
}
