use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::Result;
use shelab_core::bounds::{
    lemma21_check, lemma22_check, lemma23_floor, lemma2526_interval, neumann_floor, renewal_closed_form,
    renewal_solve, BoundKind, BoundReport,
};
use shelab_core::estimators::{energy_estimate, lambda_scan, moment_estimate, power_mean_violations, rate_fit};
use shelab_core::kernels::kernel_identity_grid;
use shelab_core::moment::{critical_lambda, lyapunov_rate, picard_solve, solve_second_moment, solve_two_point};
use shelab_core::simulate::{run_ensemble, run_path};
use shelab_core::{DomainSpec, Error, KernelModel, MomentProblem, VolterraSolution};

use crate::config::{BoundsConfig, SimulateConfig, SolveConfig, ThresholdConfig, VerifyKernelsConfig};
use crate::output::{num, Provenance, Table};

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub passed: usize,
    pub failures: Vec<String>,
}

impl Outcome {
    fn check(&mut self, ok: bool, cell: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failures.push(cell());
        }
    }

    fn write(&mut self, table: &Table, dir: &Path, name: &str, prov: &Provenance) -> Result<()> {
        let path = dir.join(name);
        table.write(&path, prov)?;
        self.files.push(path);
        Ok(())
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

pub fn verify_kernels(cfg: &VerifyKernelsConfig, dir: &Path, prov: &Provenance) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut table = Table::new(&[
        "identity", "boundary", "t", "s", "x", "y", "computed", "reference", "error", "tolerance", "passed",
    ]);
    for d in &cfg.domains {
        for c in kernel_identity_grid(d, &cfg.times, cfg.points)? {
            table.row([
                c.identity.to_string(),
                c.boundary.to_string(),
                num(c.t),
                num(c.s),
                num(c.x),
                num(c.y),
                num(c.computed),
                num(c.reference),
                num(c.error),
                num(c.tolerance),
                flag(c.passed).to_string(),
            ]);
            out.check(c.passed, || {
                format!("{} {} t={} s={} x={} y={}: error {:e}", c.identity, c.boundary, c.t, c.s, c.x, c.y, c.error)
            });
        }
    }
    out.write(&table, dir, "kernel_checks.csv", prov)?;
    Ok(out)
}

fn bound_row(table: &mut Table, out: &mut Outcome, r: &BoundReport) {
    let kind = match r.kind {
        BoundKind::Upper => "upper",
        BoundKind::Floor => "floor",
    };
    table.row([
        r.lemma_id.clone(),
        kind.to_string(),
        r.parameters_string(),
        num(r.computed_quantity),
        num(r.bound_or_floor),
        flag(r.satisfied).to_string(),
        num(r.margin),
    ]);
    out.check(r.satisfied, || format!("{} [{}]: margin {:e}", r.lemma_id, r.parameters_string(), r.margin));
}

/// Relative tolerance of the renewal exponent against `π(kb)²`.
const RENEWAL_EXPONENT_TOL: f64 = 0.05;
/// Relative tolerance of the renewal solution against the closed form at `T`.
const RENEWAL_CLOSED_FORM_TOL: f64 = 1e-3;

pub fn bounds(cfg: &BoundsConfig, dir: &Path, prov: &Provenance) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut table = Table::new(&["lemma_id", "kind", "params", "computed", "bound", "satisfied", "margin"]);
    let dir_d = DomainSpec::dirichlet(cfg.length)?;
    let neu = DomainSpec::neumann(cfg.length)?;
    for &beta in &cfg.betas {
        for &x in &cfg.points {
            bound_row(&mut table, &mut out, &lemma21_check(beta, x, &dir_d)?);
            bound_row(&mut table, &mut out, &lemma22_check(beta, x, &dir_d)?);
        }
        bound_row(&mut table, &mut out, &lemma23_floor(beta, cfg.epsilon, &dir_d)?);
        let product = lemma2526_interval(beta, cfg.epsilon, &dir_d)?;
        bound_row(&mut table, &mut out, &product.upper);
        bound_row(&mut table, &mut out, &product.floor);
    }
    for &t_min in &cfg.neumann_t_min {
        bound_row(&mut table, &mut out, &neumann_floor(t_min, &neu)?);
    }
    for spec in &cfg.renewal {
        let p = spec.problem();
        let sol = renewal_solve(&p)?;
        let params = format!("a={:e};b={:e};horizon={:e};k={:e};step={:e}", p.a, p.b, p.horizon, p.k, p.step);
        let last = *sol.values.last().expect("renewal solution has a final value");
        let c = p.k * p.b;
        if c == 0.0 {
            // no feedback: f ≡ a
            let gap = sol.values.iter().map(|v| (v - p.a).abs()).fold(0.0, f64::max);
            let ok = gap <= 1e-12 * p.a.max(f64::MIN_POSITIVE);
            table.row(["renewal_degenerate".into(), "upper".into(), params.clone(), num(gap), num(0.0), flag(ok).into(), num(-gap)]);
            out.check(ok, || format!("renewal_degenerate [{params}]: gap {gap:e}"));
            continue;
        }
        let target = PI * c * c;
        let margin = RENEWAL_EXPONENT_TOL * target - (sol.fitted_exponent - target).abs();
        table.row([
            "renewal_exponent".into(),
            "upper".into(),
            params.clone(),
            num(sol.fitted_exponent),
            num(target),
            flag(margin >= 0.0).into(),
            num(margin),
        ]);
        out.check(margin >= 0.0, || format!("renewal_exponent [{params}]: {} vs {target}", sol.fitted_exponent));
        let exact = renewal_closed_form(p.a, c, p.horizon);
        let rel = (last - exact).abs() / exact;
        let margin = RENEWAL_CLOSED_FORM_TOL - rel;
        table.row([
            "renewal_closed_form".into(),
            "upper".into(),
            params.clone(),
            num(last),
            num(exact),
            flag(margin >= 0.0).into(),
            num(margin),
        ]);
        out.check(margin >= 0.0, || format!("renewal_closed_form [{params}]: relative error {rel:e}"));
    }
    out.write(&table, dir, "bounds.csv", prov)?;
    Ok(out)
}

fn solution_table(sol: &VolterraSolution) -> Table {
    let mut t = Table::new(&["t", "x", "M"]);
    for (ti, row) in sol.times.iter().zip(&sol.values) {
        for (x, m) in sol.nodes.iter().zip(row) {
            t.row([num(*ti), num(*x), num(*m)]);
        }
    }
    t
}

fn solve_with(p: &MomentProblem, two_point: bool) -> shelab_core::Result<VolterraSolution> {
    if two_point {
        solve_two_point(p)
    } else {
        solve_second_moment(p)
    }
}

/// Picard and march solutions must agree to this relative accuracy.
const PICARD_TOL: f64 = 1e-9;

pub fn solve(cfg: &SolveConfig, dir: &Path, prov: &Provenance) -> Result<Outcome> {
    let mut out = Outcome::default();
    let p = &cfg.problem;
    let x = cfg.x.unwrap_or(0.5 * p.domain.length);
    let sol = solve_with(p, cfg.two_point)?;
    out.write(&solution_table(&sol), dir, "solution.csv", prov)?;
    if let Some(packed) = sol.two_point.as_ref().and_then(|v| v.last()) {
        let mut t = Table::new(&["x", "y", "M"]);
        for (j, xj) in sol.nodes.iter().enumerate() {
            for (k, xk) in sol.nodes.iter().enumerate() {
                t.row([num(*xj), num(*xk), num(packed.get(j, k))]);
            }
        }
        out.write(&t, dir, "two_point_final.csv", prov)?;
    }

    let mut rates = Table::new(&["lambda", "mu", "boundary", "rate", "residual"]);
    let mut lambdas = vec![p.lambda];
    lambdas.extend(cfg.lambdas.iter().copied().filter(|&l| l != p.lambda));
    for lambda in lambdas {
        let (rate, residual) = match solve_with(&p.with_lambda(lambda), cfg.two_point) {
            Ok(s) => {
                let fit = lyapunov_rate(&s, x, cfg.rate_window)?;
                (fit.rate, fit.residual)
            }
            Err(Error::Overflow { .. }) => (f64::INFINITY, f64::NAN),
            Err(e) => return Err(e.into()),
        };
        rates.row([num(lambda), num(p.domain.drift), p.domain.boundary.to_string(), num(rate), num(residual)]);
    }
    out.write(&rates, dir, "rates.csv", prov)?;

    if let Some(iterations) = cfg.picard {
        let pic = picard_solve(p, iterations)?;
        let scale = sol.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let gap = sol
            .values
            .iter()
            .flatten()
            .zip(pic.solution.values.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale;
        let mut t = Table::new(&["iteration", "difference"]);
        for (i, d) in pic.differences.iter().enumerate() {
            t.row([(i + 1).to_string(), num(*d)]);
        }
        out.write(&t, dir, "picard.csv", prov)?;
        out.check(pic.converged && gap <= PICARD_TOL, || {
            format!("picard: converged={} relative gap {gap:e}", pic.converged)
        });
    }
    Ok(out)
}

pub fn simulate(cfg: &SimulateConfig, dir: &Path, prov: &Provenance) -> Result<Outcome> {
    let mut out = Outcome::default();
    let sim = &cfg.sim;
    let x = cfg.x.unwrap_or(0.5 * sim.domain.length);
    let acc = run_ensemble(sim, cfg.paths)?;
    let excluded = acc.excluded.len();

    let mut t = Table::new(&["t", "x", "p", "sum", "sumsq", "count", "excluded"]);
    for (s, ts) in acc.times.iter().enumerate() {
        for (k, xk) in acc.nodes.iter().enumerate() {
            for (o, p) in acc.orders.iter().enumerate() {
                let c = acc.cell(s, k, o);
                t.row([num(*ts), num(*xk), p.to_string(), num(acc.sum[c]), num(acc.sumsq[c]), acc.count.to_string(), excluded.to_string()]);
            }
        }
    }
    out.write(&t, dir, "accumulators.csv", prov)?;

    let mut excl = Table::new(&["path", "blow_up_time"]);
    for (index, time) in &acc.excluded {
        excl.row([index.to_string(), num(*time)]);
    }
    out.write(&excl, dir, "excluded.csv", prov)?;

    let trajs = sim
        .moments
        .iter()
        .map(|&p| moment_estimate(&acc, p))
        .collect::<shelab_core::Result<Vec<_>>>()?;
    let mut m = Table::new(&["t", "x", "p", "estimate", "std_error"]);
    for traj in &trajs {
        for (s, ts) in traj.times.iter().enumerate() {
            for (k, xk) in traj.points.iter().enumerate() {
                m.row([num(*ts), num(*xk), traj.p.to_string(), num(traj.estimates[s][k]), num(traj.std_errors[s][k])]);
            }
        }
    }
    out.write(&m, dir, "moments.csv", prov)?;
    if trajs.len() > 1 {
        let v = power_mean_violations(&trajs);
        out.check(v.is_empty(), || format!("power-mean ordering violated at {} cells, first {:?}", v.len(), v[0]));
    }

    let energy = energy_estimate(&acc, &sim.domain)?;
    let mut e = Table::new(&["t", "energy", "std_error"]);
    for ((ts, v), se) in energy.times.iter().zip(&energy.values).zip(&energy.std_errors) {
        e.row([num(*ts), num(*v), num(*se)]);
    }
    out.write(&e, dir, "energy.csv", prov)?;

    if let Some(window) = cfg.rate_window {
        let mut r = Table::new(&["lambda", "mu", "boundary", "p", "x", "rate", "ci_lo", "ci_hi", "r2"]);
        for traj in &trajs {
            let fit = rate_fit(traj, x, window)?;
            r.row([
                num(sim.lambda),
                num(sim.domain.drift),
                sim.domain.boundary.to_string(),
                traj.p.to_string(),
                num(traj.points[traj.nearest_point(x)]),
                num(fit.rate),
                num(fit.ci.0),
                num(fit.ci.1),
                num(fit.r2),
            ]);
        }
        out.write(&r, dir, "rates.csv", prov)?;
    }

    if cfg.dump_paths > 0 {
        let mut t = Table::new(&["path", "t", "x", "u"]);
        let grid = sim.grid();
        let times = sim.snapshot_times();
        for index in 0..cfg.dump_paths {
            let path = run_path(sim, index)?;
            for (ts, snap) in times.iter().zip(&path.snapshots) {
                for (xk, u) in grid.iter().zip(snap) {
                    t.row([index.to_string(), num(*ts), num(*xk), num(*u)]);
                }
            }
        }
        out.write(&t, dir, "paths.csv", prov)?;
    }

    if cfg.compare_volterra {
        let second = trajs
            .iter()
            .find(|t| t.p == 2)
            .ok_or_else(|| anyhow::anyhow!("compare_volterra needs moment order 2"))?;
        let mut problem = MomentProblem::new(sim.domain, sim.lambda, sim.horizon, sim.nodes, sim.step);
        problem.u0 = sim.u0.clone();
        problem.model = KernelModel::Scheme;
        let sol = solve_second_moment(&problem)?;
        let k = second.nearest_point(x);
        let node = sol.nearest_node(second.points[k]);
        let mut t = Table::new(&["t", "x", "mc", "std_error", "volterra", "z"]);
        for (s, &ts) in second.times.iter().enumerate() {
            let row = (ts / sim.step).round() as usize;
            let (mc, se, v) = (second.estimates[s][k], second.std_errors[s][k], sol.values[row][node]);
            let z = if se > 0.0 { (mc - v) / se } else if mc == v { 0.0 } else { f64::INFINITY };
            t.row([num(ts), num(second.points[k]), num(mc), num(se), num(v), num(z)]);
            out.check(z.abs() <= cfg.z_max, || format!("volterra t={ts}: z = {z}"));
        }
        out.write(&t, dir, "volterra_comparison.csv", prov)?;
    }
    Ok(out)
}

pub fn threshold(cfg: &ThresholdConfig, dir: &Path, prov: &Provenance) -> Result<Outcome> {
    let mut out = Outcome::default();
    let drifts = if cfg.drifts.is_empty() { vec![cfg.problem.domain.drift] } else { cfg.drifts.clone() };
    let mut t = Table::new(&[
        "mu", "boundary", "status", "lambda_low", "lambda_high", "rate_low", "rate_high", "lambda_crit",
        "spectral_estimate", "evaluations",
    ]);
    let mut found = Vec::new();
    for &mu in &drifts {
        let mut p = cfg.problem.clone();
        p.domain = p.domain.with_drift(mu)?;
        let boundary = p.domain.boundary.to_string();
        match critical_lambda(&p, cfg.bracket) {
            Ok(b) => {
                t.row([
                    num(mu),
                    boundary,
                    "bracketed".into(),
                    num(b.lambda_low),
                    num(b.lambda_high),
                    num(b.rate_low),
                    num(b.rate_high),
                    num(b.lambda_crit),
                    num(b.spectral_estimate),
                    b.evaluations.to_string(),
                ]);
                let gap = (b.lambda_crit - b.spectral_estimate).abs() / b.spectral_estimate;
                out.check(gap <= cfg.spectral_tolerance, || {
                    format!("μ={mu}: bisection {} vs spectral {} ({gap:e})", b.lambda_crit, b.spectral_estimate)
                });
                found.push((mu, b.lambda_crit));
            }
            Err(Error::NoThreshold(_)) => {
                let nan = num(f64::NAN);
                t.row([num(mu), boundary, "no_threshold".into(), nan.clone(), nan.clone(), nan.clone(), nan.clone(), nan.clone(), nan, "0".into()]);
            }
            Err(e) => return Err(e.into()),
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    if found.len() > 1 {
        let ok = found.windows(2).all(|w| w[1].1 <= w[0].1);
        out.check(ok, || format!("threshold not nonincreasing in drift: {found:?}"));
    }
    out.write(&t, dir, "threshold.csv", prov)?;

    if let Some(scan) = &cfg.scan {
        let x = scan.x.unwrap_or(0.5 * scan.sim.domain.length);
        let result = lambda_scan(&scan.sim, &scan.lambdas, scan.paths, x, scan.rate_window)?;
        let mut r = Table::new(&["lambda", "mu", "boundary", "p", "x", "rate", "ci_lo", "ci_hi", "r2"]);
        for row in &result.rows {
            r.row([
                num(row.lambda),
                num(scan.sim.domain.drift),
                scan.sim.domain.boundary.to_string(),
                row.p.to_string(),
                num(x),
                num(row.rate.rate),
                num(row.rate.ci.0),
                num(row.rate.ci.1),
                num(row.rate.r2),
            ]);
        }
        out.write(&r, dir, "scan.csv", prov)?;
        let mut b = Table::new(&["p", "lambda_low", "lambda_high", "decay_endpoint"]);
        for br in &result.brackets {
            let (lo, hi) = br.bracket.unwrap_or((f64::NAN, f64::NAN));
            b.row([br.p.to_string(), num(lo), num(hi), num(br.decay_endpoint.unwrap_or(f64::NAN))]);
        }
        out.write(&b, dir, "scan_brackets.csv", prov)?;
    }
    Ok(out)
}
