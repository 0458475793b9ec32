use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{em_step_into, IncrementSampler, PathState, SimConfig};
use crate::error::{Error, Result};
use crate::quadrature::trapezoid_weights;

/// Paths per work unit. Sums inside a block run in path order and blocks are
/// merged in index order, so results do not depend on the thread count.
const BLOCK: u64 = 64;

/// Recorded fields of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub index: u64,
    /// `snapshots[s][k]`; shorter than the snapshot list if the path blew up.
    pub snapshots: Vec<Vec<f64>>,
    pub blow_up: Option<f64>,
}

/// Raw sums `Σ|u|^p`, `Σ|u|^{2p}` per (snapshot, node, order), plus the
/// squared `L²` norm per snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulators {
    pub times: Vec<f64>,
    pub nodes: Vec<f64>,
    pub orders: Vec<u32>,
    pub sum: Vec<f64>,
    pub sumsq: Vec<f64>,
    pub energy_sum: Vec<f64>,
    pub energy_sumsq: Vec<f64>,
    /// Paths that contributed.
    pub count: u64,
    /// Paths dropped after a blow-up, with the blow-up time.
    pub excluded: Vec<(u64, f64)>,
}

impl Accumulators {
    fn empty(cfg: &SimConfig) -> Self {
        let cells = cfg.snapshots.len() * (cfg.nodes + 1) * cfg.moments.len();
        Self {
            times: cfg.snapshot_times(),
            nodes: cfg.grid(),
            orders: cfg.moments.clone(),
            sum: vec![0.0; cells],
            sumsq: vec![0.0; cells],
            energy_sum: vec![0.0; cfg.snapshots.len()],
            energy_sumsq: vec![0.0; cfg.snapshots.len()],
            count: 0,
            excluded: Vec::new(),
        }
    }

    pub fn cell(&self, snapshot: usize, node: usize, order: usize) -> usize {
        (snapshot * self.nodes.len() + node) * self.orders.len() + order
    }

    pub fn order_index(&self, p: u32) -> Option<usize> {
        self.orders.iter().position(|&q| q == p)
    }

    fn add_path(&mut self, fields: &[Vec<f64>], weights: &[f64]) {
        for (s, u) in fields.iter().enumerate() {
            for (k, &v) in u.iter().enumerate() {
                let a = v.abs();
                for (o, &p) in self.orders.iter().enumerate() {
                    let c = (s * self.nodes.len() + k) * self.orders.len() + o;
                    let m = a.powi(p as i32);
                    self.sum[c] += m;
                    self.sumsq[c] += m * m;
                }
            }
            let e: f64 = u.iter().zip(weights).map(|(v, w)| w * v * v).sum();
            self.energy_sum[s] += e;
            self.energy_sumsq[s] += e * e;
        }
        self.count += 1;
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&other.sumsq) {
            *a += b;
        }
        for (a, b) in self.energy_sum.iter_mut().zip(&other.energy_sum) {
            *a += b;
        }
        for (a, b) in self.energy_sumsq.iter_mut().zip(&other.energy_sumsq) {
            *a += b;
        }
        self.count += other.count;
        self.excluded.extend_from_slice(&other.excluded);
    }
}

/// Two ensembles driven by the same increments, with the sums of the
/// per-path differences `|u_a|^p - |u_b|^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedAccumulators {
    pub first: Accumulators,
    pub second: Accumulators,
    pub diff_sum: Vec<f64>,
    pub diff_sumsq: Vec<f64>,
}

impl PairedAccumulators {
    fn empty(a: &SimConfig, b: &SimConfig) -> Self {
        let first = Accumulators::empty(a);
        let cells = first.sum.len();
        Self {
            first,
            second: Accumulators::empty(b),
            diff_sum: vec![0.0; cells],
            diff_sumsq: vec![0.0; cells],
        }
    }

    fn merge(&mut self, other: &Self) {
        self.first.merge(&other.first);
        self.second.merge(&other.second);
        for (a, b) in self.diff_sum.iter_mut().zip(&other.diff_sum) {
            *a += b;
        }
        for (a, b) in self.diff_sumsq.iter_mut().zip(&other.diff_sumsq) {
            *a += b;
        }
    }
}

/// Generator of path `index`: the master key with stream `index`.
fn path_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Runs the configurations in `cfgs` on one shared noise path.
fn drive(cfgs: &[&SimConfig], sampler: &IncrementSampler, index: u64) -> (Vec<Vec<Vec<f64>>>, Option<f64>) {
    let base = cfgs[0];
    let mut rng = path_rng(base.master_seed, index);
    let len = base.nodes + 1;
    let mut scratch = vec![0.0; len];
    let mut inc = vec![0.0; len];
    let mut states: Vec<PathState> = cfgs.iter().map(|c| PathState::initial(c)).collect();
    let mut spare: Vec<PathState> = states.clone();
    let snaps = base.snapshot_steps();
    let mut out = vec![Vec::with_capacity(snaps.len()); cfgs.len()];
    let mut next_snap = 0;
    let record = |out: &mut Vec<Vec<Vec<f64>>>, states: &[PathState]| {
        for (o, s) in out.iter_mut().zip(states) {
            o.push(s.u.clone());
        }
    };
    if snaps.first() == Some(&0) {
        record(&mut out, &states);
        next_snap = 1;
    }
    for step in 1..=base.steps() {
        if next_snap == snaps.len() {
            break;
        }
        sampler.fill(&mut rng, &mut scratch, &mut inc);
        for (j, c) in cfgs.iter().enumerate() {
            if let Err(Error::BlowUp { time }) = em_step_into(&states[j], c, &inc, &mut spare[j]) {
                return (out, Some(time));
            }
        }
        std::mem::swap(&mut states, &mut spare);
        if snaps[next_snap] == step {
            record(&mut out, &states);
            next_snap += 1;
        }
    }
    (out, None)
}

/// Simulates path `index` of the ensemble defined by `cfg`.
pub fn run_path(cfg: &SimConfig, index: u64) -> Result<PathOutcome> {
    cfg.validate()?;
    let sampler = IncrementSampler::new(cfg)?;
    let (mut fields, blow_up) = drive(&[cfg], &sampler, index);
    Ok(PathOutcome {
        index,
        snapshots: fields.pop().unwrap_or_default(),
        blow_up,
    })
}

fn blocks(paths: u64) -> Vec<(u64, u64)> {
    (0..paths.div_ceil(BLOCK))
        .map(|b| (b * BLOCK, ((b + 1) * BLOCK).min(paths)))
        .collect()
}

/// Runs `paths` independent paths and accumulates their moments.
pub fn run_ensemble(cfg: &SimConfig, paths: u64) -> Result<Accumulators> {
    cfg.validate()?;
    if paths < 2 {
        return Err(Error::Config("an ensemble needs at least two paths".into()));
    }
    let sampler = IncrementSampler::new(cfg)?;
    let weights = trapezoid_weights(cfg.nodes + 1, cfg.spacing());
    let parts: Vec<Accumulators> = blocks(paths)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = Accumulators::empty(cfg);
            for index in lo..hi {
                let (fields, blow_up) = drive(&[cfg], &sampler, index);
                match blow_up {
                    Some(t) => acc.excluded.push((index, t)),
                    None => acc.add_path(&fields[0], &weights),
                }
            }
            acc
        })
        .collect();
    let mut total = Accumulators::empty(cfg);
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// Runs the ensembles of `cfg` at `lambda_a` and `lambda_b` with common
/// random numbers. A path that blows up in either run is excluded from both.
pub fn run_paired_ensemble(
    cfg: &SimConfig,
    lambda_a: f64,
    lambda_b: f64,
    paths: u64,
) -> Result<PairedAccumulators> {
    let a = cfg.with_lambda(lambda_a);
    let b = cfg.with_lambda(lambda_b);
    a.validate()?;
    b.validate()?;
    if paths < 2 {
        return Err(Error::Config("an ensemble needs at least two paths".into()));
    }
    let sampler = IncrementSampler::new(cfg)?;
    let weights = trapezoid_weights(cfg.nodes + 1, cfg.spacing());
    let parts: Vec<PairedAccumulators> = blocks(paths)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = PairedAccumulators::empty(&a, &b);
            for index in lo..hi {
                let (fields, blow_up) = drive(&[&a, &b], &sampler, index);
                if let Some(t) = blow_up {
                    acc.first.excluded.push((index, t));
                    acc.second.excluded.push((index, t));
                    continue;
                }
                acc.first.add_path(&fields[0], &weights);
                acc.second.add_path(&fields[1], &weights);
                let np = acc.first.orders.len();
                for (s, (ua, ub)) in fields[0].iter().zip(&fields[1]).enumerate() {
                    for (k, (va, vb)) in ua.iter().zip(ub).enumerate() {
                        for (o, &p) in a.moments.iter().enumerate() {
                            let c = (s * ua.len() + k) * np + o;
                            let d = va.abs().powi(p as i32) - vb.abs().powi(p as i32);
                            acc.diff_sum[c] += d;
                            acc.diff_sumsq[c] += d * d;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = PairedAccumulators::empty(&a, &b);
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Boundary, DomainSpec, InitialCondition};
    use crate::noise::{Covariance, NoiseSpec};
    use crate::sigma::SigmaSpec;
    use std::f64::consts::PI;

    fn config(lambda: f64) -> SimConfig {
        let h = PI / 16.0;
        let dt = h * h / 4.0;
        SimConfig {
            domain: DomainSpec::new(PI, Boundary::Dirichlet).unwrap(),
            sigma: SigmaSpec::linear(),
            noise: NoiseSpec::White,
            lambda,
            u0: InitialCondition::default(),
            nodes: 16,
            step: dt,
            horizon: 80.0 * dt,
            snapshots: vec![0.0, 40.0 * dt, 80.0 * dt],
            master_seed: 11,
            moments: vec![1, 2],
        }
    }

    #[test]
    fn zero_noise_paths_are_deterministic() {
        let acc = run_ensemble(&config(0.0), 5).unwrap();
        let c = acc.cell(2, 8, 1);
        let m = acc.sum[c] / acc.count as f64;
        assert!((acc.sumsq[c] / acc.count as f64 - m * m).abs() < 1e-14 * m * m);
    }

    #[test]
    fn reruns_are_identical() {
        let a = run_ensemble(&config(1.0), 130).unwrap();
        let b = run_ensemble(&config(1.0), 130).unwrap();
        assert_eq!(a, b);
        let p = run_path(&config(1.0), 3).unwrap();
        assert_eq!(p, run_path(&config(1.0), 3).unwrap());
        assert_eq!(p.snapshots.len(), 3);
    }

    #[test]
    fn paired_run_matches_separate_runs() {
        let pair = run_paired_ensemble(&config(0.5), 0.5, 1.5, 70).unwrap();
        assert_eq!(pair.first, run_ensemble(&config(0.5), 70).unwrap());
        assert_eq!(pair.second, run_ensemble(&config(1.5), 70).unwrap());
    }

    #[test]
    fn constant_covariance_shares_increments() {
        let mut c = config(1.0);
        c.noise = NoiseSpec::colored(Covariance::Constant);
        c.domain = DomainSpec::new(PI, Boundary::Neumann).unwrap();
        c.u0 = InitialCondition::Constant { value: 1.0 };
        let path = run_path(&c, 0).unwrap();
        let last = path.snapshots.last().unwrap();
        assert!(last.iter().all(|&v| v == last[0]));
    }
}
