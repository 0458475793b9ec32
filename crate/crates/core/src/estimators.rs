//! Sample moments, energies and growth rates from ensemble accumulators.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::kernels::DomainSpec;
use crate::moment::VolterraSolution;
use crate::quadrature::trapezoid_weights;
use crate::simulate::{run_ensemble, Accumulators, PairedAccumulators, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    pub p: u32,
    pub times: Vec<f64>,
    pub points: Vec<f64>,
    /// `estimates[s][k]` is the sample mean of `|u(t_s, x_k)|^p`.
    pub estimates: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    pub count: u64,
    pub excluded: usize,
}

impl MomentTrajectory {
    pub fn nearest_point(&self, x: f64) -> usize {
        nearest(&self.points, x)
    }

    pub fn series_at(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.nearest_point(x);
        (
            self.estimates.iter().map(|r| r[k]).collect(),
            self.std_errors.iter().map(|r| r[k]).collect(),
        )
    }
}

fn nearest(points: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (k, &p) in points.iter().enumerate() {
        if (p - x).abs() < (points[best] - x).abs() {
            best = k;
        }
    }
    best
}

fn mean_and_se(sum: f64, sumsq: f64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let m = sum / nf;
    let var = ((sumsq / nf - m * m) * nf / (nf - 1.0)).max(0.0);
    (m, (var / nf).sqrt())
}

fn order_index(acc: &Accumulators, p: u32) -> Result<usize> {
    acc.order_index(p)
        .ok_or_else(|| Error::Data(format!("moment order {p} was not accumulated")))
}

fn check_count(acc: &Accumulators) -> Result<()> {
    if acc.count < 2 {
        return Err(Error::Data(format!(
            "{} usable paths ({} excluded); need at least 2",
            acc.count,
            acc.excluded.len()
        )));
    }
    Ok(())
}

/// Sample means of `|u|^p` with their standard errors.
pub fn moment_estimate(acc: &Accumulators, p: u32) -> Result<MomentTrajectory> {
    let o = order_index(acc, p)?;
    check_count(acc)?;
    let (mut est, mut se) = (Vec::new(), Vec::new());
    for s in 0..acc.times.len() {
        let (mut er, mut sr) = (Vec::new(), Vec::new());
        for k in 0..acc.nodes.len() {
            let c = acc.cell(s, k, o);
            let (m, e) = mean_and_se(acc.sum[c], acc.sumsq[c], acc.count);
            er.push(m);
            sr.push(e);
        }
        est.push(er);
        se.push(sr);
    }
    Ok(MomentTrajectory {
        p,
        times: acc.times.clone(),
        points: acc.nodes.clone(),
        estimates: est,
        std_errors: se,
        count: acc.count,
        excluded: acc.excluded.len(),
    })
}

/// Mean and standard error of `|u_a|^p - |u_b|^p` over common-noise pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub p: u32,
    pub times: Vec<f64>,
    pub points: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
}

pub fn paired_difference(pair: &PairedAccumulators, p: u32) -> Result<PairedDifference> {
    let acc = &pair.first;
    let o = order_index(acc, p)?;
    check_count(acc)?;
    let (mut mean, mut se) = (Vec::new(), Vec::new());
    for s in 0..acc.times.len() {
        let (mut mr, mut sr) = (Vec::new(), Vec::new());
        for k in 0..acc.nodes.len() {
            let c = acc.cell(s, k, o);
            let (m, e) = mean_and_se(pair.diff_sum[c], pair.diff_sumsq[c], acc.count);
            mr.push(m);
            sr.push(e);
        }
        mean.push(mr);
        se.push(sr);
    }
    Ok(PairedDifference {
        p,
        times: acc.times.clone(),
        points: acc.nodes.clone(),
        mean,
        std_errors: se,
    })
}

/// Relative slack for the sample power-mean chain. The chain is exact on the
/// empirical measure; only the rounding of means and roots is allowed for.
pub const POWER_MEAN_SLACK: f64 = 16.0 * f64::EPSILON;

/// Cells where `M_p^{1/p}` decreases along the given orders, which must come
/// from the same accumulators in increasing `p`.
pub fn power_mean_violations(trajs: &[MomentTrajectory]) -> Vec<(usize, usize, u32)> {
    let mut bad = Vec::new();
    for pair in trajs.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        for s in 0..lo.times.len() {
            for k in 0..lo.points.len() {
                let a = lo.estimates[s][k].powf(1.0 / lo.p as f64);
                let b = hi.estimates[s][k].powf(1.0 / hi.p as f64);
                if a > b * (1.0 + POWER_MEAN_SLACK) {
                    bad.push((s, k, hi.p));
                }
            }
        }
    }
    bad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrajectory {
    pub times: Vec<f64>,
    /// `Ê_t = (∫ Ê|u_t|² dx)^{1/2}`.
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

/// Energy from the second-moment field: trapezoid rule in space, then a
/// square root. The error is the delta-method transform of the per-path
/// spread of `‖u_t‖²`.
pub fn energy_estimate(acc: &Accumulators, d: &DomainSpec) -> Result<EnergyTrajectory> {
    let o = order_index(acc, 2)?;
    check_count(acc)?;
    let n = acc.nodes.len();
    let h = d.length / (n - 1) as f64;
    if ((acc.nodes[n - 1] - d.length) / d.length).abs() > 1e-12 {
        return Err(Error::Data("accumulator grid does not span the domain".into()));
    }
    let w = trapezoid_weights(n, h);
    let (mut values, mut se) = (Vec::new(), Vec::new());
    for s in 0..acc.times.len() {
        let sq: f64 = (0..n)
            .map(|k| w[k] * acc.sum[acc.cell(s, k, o)] / acc.count as f64)
            .sum();
        let (_, e_sq) = mean_and_se(acc.energy_sum[s], acc.energy_sumsq[s], acc.count);
        let e = sq.sqrt();
        values.push(e);
        se.push(if e > 0.0 { e_sq / (2.0 * e) } else { f64::INFINITY });
    }
    Ok(EnergyTrajectory {
        times: acc.times.clone(),
        values,
        std_errors: se,
    })
}

/// Energy of a deterministic second-moment solution, by the trapezoid rule
/// on its grid; standard errors are zero.
pub fn volterra_energy(sol: &VolterraSolution) -> EnergyTrajectory {
    let n = sol.nodes.len();
    let w = trapezoid_weights(n, sol.nodes[1] - sol.nodes[0]);
    EnergyTrajectory {
        times: sol.times.clone(),
        values: sol
            .values
            .iter()
            .map(|m| m.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().sqrt())
            .collect(),
        std_errors: vec![0.0; sol.times.len()],
    }
}

/// One snapshot of `(L-2ε)·inf_{[ε,L-ε]} M ≤ Ê² ≤ L·sup M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub t: f64,
    pub lower: f64,
    pub energy_squared: f64,
    pub upper: f64,
    pub holds: bool,
}

/// Checks the energy sandwich with `ε` rounded up to a grid node, so that
/// the interior nodes carry total weight at least `L - 2ε`.
pub fn energy_sandwich(
    energy: &EnergyTrajectory,
    second: &MomentTrajectory,
    d: &DomainSpec,
    eps: f64,
) -> Result<Vec<SandwichCheck>> {
    if second.p != 2 || second.times.len() != energy.times.len() {
        return Err(Error::Data("sandwich needs the matching second-moment trajectory".into()));
    }
    let n = second.points.len() - 1;
    let h = d.length / n as f64;
    let first = ((eps / h).ceil() as usize).max(1);
    if !(eps > 0.0 && 2 * first < n) {
        return Err(Error::Domain(format!("ε = {eps} leaves no interior nodes")));
    }
    let eps_grid = first as f64 * h;
    Ok(energy
        .times
        .iter()
        .zip(&energy.values)
        .zip(&second.estimates)
        .map(|((&t, &e), m)| {
            let inf = m[first..=n - first].iter().cloned().fold(f64::INFINITY, f64::min);
            let sup = m.iter().cloned().fold(0.0, f64::max);
            let lower = (d.length - 2.0 * eps_grid) * inf;
            let upper = d.length * sup;
            let sq = e * e;
            SandwichCheck {
                t,
                lower,
                energy_squared: sq,
                upper,
                holds: lower <= sq * (1.0 + 4.0 * f64::EPSILON) && sq <= upper * (1.0 + 4.0 * f64::EPSILON),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub intercept: f64,
    /// 95% interval from the linear model.
    pub ci: (f64, f64),
    pub window: (f64, f64),
    pub r2: f64,
    pub points: usize,
}

pub const MIN_RATE_POINTS: usize = 20;

/// Weighted least squares of `ln v` on `t` over the trailing `window`
/// fraction, with weights `(v/se)²`. Equal weights are used when some
/// standard error vanishes (deterministic trajectories).
pub fn fit_rate(times: &[f64], values: &[f64], std_errors: &[f64], window: f64) -> Result<RateEstimate> {
    if times.len() != values.len() || times.len() != std_errors.len() || times.is_empty() {
        return Err(Error::Window("series lengths differ or are empty".into()));
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Window(format!("window fraction {window} outside (0, 1]")));
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let start = t1 - window * (t1 - t0);
    let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= start - 1e-12).collect();
    if idx.len() < MIN_RATE_POINTS {
        return Err(Error::Window(format!(
            "{} points in the window, need {MIN_RATE_POINTS}",
            idx.len()
        )));
    }
    if idx.iter().any(|&i| !(values[i] > 0.0 && values[i].is_finite())) {
        return Err(Error::Window("nonpositive or non-finite estimate in the window".into()));
    }
    let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| values[i].ln()).collect();
    let mut w: Vec<f64> = idx.iter().map(|&i| (values[i] / std_errors[i]).powi(2)).collect();
    if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        w = vec![1.0; idx.len()];
    }
    let sw: f64 = w.iter().sum();
    let mt = w.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..t.len() {
        sxx += w[i] * (t[i] - mt).powi(2);
        sxy += w[i] * (t[i] - mt) * (y[i] - my);
        syy += w[i] * (y[i] - my).powi(2);
    }
    let rate = sxy / sxx;
    let intercept = my - rate * mt;
    let rss: f64 = (0..t.len())
        .map(|i| w[i] * (y[i] - intercept - rate * t[i]).powi(2))
        .sum();
    let dof = (t.len() - 2) as f64;
    let se = (rss / dof / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Window(e.to_string()))?
        .inverse_cdf(0.975);
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(RateEstimate {
        rate,
        intercept,
        ci: (rate - q * se, rate + q * se),
        window: (t[0], t[t.len() - 1]),
        r2,
        points: t.len(),
    })
}

/// Growth rate of the sample moment at the grid point nearest `x`.
pub fn rate_fit(traj: &MomentTrajectory, x: f64, window: f64) -> Result<RateEstimate> {
    let (v, se) = traj.series_at(x);
    fit_rate(&traj.times, &v, &se, window)
}

/// Growth rate of `Ê_t²`, i.e. twice the rate of the energy.
pub fn energy_rate(energy: &EnergyTrajectory, window: f64) -> Result<RateEstimate> {
    let sq: Vec<f64> = energy.values.iter().map(|e| e * e).collect();
    let se: Vec<f64> = energy
        .values
        .iter()
        .zip(&energy.std_errors)
        .map(|(e, s)| 2.0 * e * s)
        .collect();
    fit_rate(&energy.times, &sq, &se, window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub p: u32,
    pub rate: RateEstimate,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanBracket {
    pub p: u32,
    /// Consecutive scanned λ across which the fitted rate changes sign.
    pub bracket: Option<(f64, f64)>,
    /// Largest scanned λ with a negative rate.
    pub decay_endpoint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScan {
    pub rows: Vec<ScanRow>,
    pub brackets: Vec<ScanBracket>,
    /// Whether the decay-region endpoint does not increase with `p`;
    /// `None` when fewer than two orders have an endpoint.
    pub endpoint_nonincreasing_in_p: Option<bool>,
}

/// Simulated rates over a λ grid. Every λ reuses the master seed, so the
/// ensembles share their noise.
pub fn lambda_scan(base: &SimConfig, lambdas: &[f64], paths: u64, x: f64, window: f64) -> Result<LambdaScan> {
    if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("λ values must be strictly increasing".into()));
    }
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let acc = run_ensemble(&base.with_lambda(lambda), paths)?;
        for &p in &base.moments {
            let traj = moment_estimate(&acc, p)?;
            rows.push(ScanRow {
                lambda,
                p,
                rate: rate_fit(&traj, x, window)?,
                excluded: acc.excluded.len(),
            });
        }
    }
    let brackets: Vec<ScanBracket> = base
        .moments
        .iter()
        .map(|&p| {
            let r: Vec<&ScanRow> = rows.iter().filter(|row| row.p == p).collect();
            let bracket = r
                .windows(2)
                .find(|w| w[0].rate.rate < 0.0 && w[1].rate.rate >= 0.0)
                .map(|w| (w[0].lambda, w[1].lambda));
            let decay_endpoint = r
                .iter()
                .filter(|row| row.rate.rate < 0.0)
                .map(|row| row.lambda)
                .fold(None, |a: Option<f64>, l| Some(a.map_or(l, |v| v.max(l))));
            ScanBracket {
                p,
                bracket,
                decay_endpoint,
            }
        })
        .collect();
    let mut ends: Vec<(u32, f64)> = brackets
        .iter()
        .filter_map(|b| b.decay_endpoint.map(|e| (b.p, e)))
        .collect();
    ends.sort_by_key(|e| e.0);
    let endpoint_nonincreasing_in_p = (ends.len() >= 2).then(|| ends.windows(2).all(|w| w[1].1 <= w[0].1));
    Ok(LambdaScan {
        rows,
        brackets,
        endpoint_nonincreasing_in_p,
    })
}
