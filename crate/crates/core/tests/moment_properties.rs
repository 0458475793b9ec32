use std::f64::consts::PI;

use proptest::prelude::*;
use shelab_core::bounds::{renewal_solve, RenewalProblem};
use shelab_core::moment::{
    critical_lambda, lyapunov_rate, picard_solve, solve_second_moment, solve_two_point, KernelModel,
};
use shelab_core::simulate::run_path;
use shelab_core::{
    Covariance, DomainSpec, Error, InitialCondition, MomentProblem, NoiseSpec, SigmaSpec, SimConfig,
};

fn dirichlet() -> DomainSpec {
    DomainSpec::dirichlet(PI).unwrap()
}

fn renewal(a: f64, k: f64, b: f64) -> Vec<f64> {
    renewal_solve(&RenewalProblem { a, k, b, horizon: 2.0, step: 0.01 })
        .unwrap()
        .values
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn renewal_is_monotone_in_each_coefficient(a in 0.1f64..2.0, k in 0.0f64..1.5, b in 0.0f64..1.5,
                                               bump in 0.01f64..0.5) {
        let base = renewal(a, k, b);
        for other in [renewal(a + bump, k, b), renewal(a, k + bump, b), renewal(a, k, b + bump)] {
            prop_assert!(other.iter().zip(&base).all(|(x, y)| x >= y));
        }
    }

    #[test]
    fn volterra_is_monotone_in_lambda(l1 in 0.0f64..3.0, gap in 0.0f64..1.0) {
        let p = MomentProblem::new(dirichlet(), l1, 1.0, 16, 0.005);
        let lo = solve_second_moment(&p).unwrap();
        let hi = solve_second_moment(&p.with_lambda(l1 + gap)).unwrap();
        for (a, b) in lo.values.iter().zip(&hi.values) {
            prop_assert!(a.iter().zip(b).all(|(x, y)| y >= x));
        }
    }
}

#[test]
fn renewal_step_halving() {
    let coarse = renewal_solve(&RenewalProblem { a: 1.0, k: 1.0, b: 1.0, horizon: 5.0, step: 0.01 }).unwrap();
    let fine = renewal_solve(&RenewalProblem { a: 1.0, k: 1.0, b: 1.0, horizon: 5.0, step: 0.005 }).unwrap();
    let (c, f) = (coarse.values.last().unwrap(), fine.values.last().unwrap());
    assert!((c - f).abs() < 0.01 * f);
}

#[test]
fn renewal_exponents() {
    for &kb in &[0.5, 1.0, 2.0] {
        let s = renewal_solve(&RenewalProblem { a: 1.0, k: kb, b: 1.0, horizon: 10.0, step: 1e-3 }).unwrap();
        let target = PI * kb * kb;
        assert!((s.fitted_exponent - target).abs() < 0.05 * target, "kb={kb}: {}", s.fitted_exponent);
    }
}

#[test]
fn grid_convergence_at_the_centre() {
    for &(lambda, horizon, dt) in &[(0.5, 5.0, 0.01), (2.0, 5.0, 0.01), (3.0, 2.0, 0.001)] {
        let coarse = solve_second_moment(&MomentProblem::new(dirichlet(), lambda, horizon, 32, dt)).unwrap();
        let fine = solve_second_moment(&MomentProblem::new(dirichlet(), lambda, horizon, 64, dt / 2.0)).unwrap();
        let (a, b) = (
            coarse.series_at(PI / 2.0).last().copied().unwrap(),
            fine.series_at(PI / 2.0).last().copied().unwrap(),
        );
        assert!((a - b).abs() < 0.02 * b, "λ={lambda}: {a} vs {b}");
    }
}

#[test]
fn picard_iteration_reproduces_the_march() {
    let p = MomentProblem::new(dirichlet(), 0.5, 2.0, 16, 0.01);
    let direct = solve_second_moment(&p).unwrap();
    let pic = picard_solve(&p, 60).unwrap();
    assert!(pic.converged);
    let k = direct.nearest_node(PI / 2.0);
    for (a, b) in direct.values.iter().zip(&pic.solution.values) {
        assert!((a[k] - b[k]).abs() <= 1e-9 * a[k].abs().max(1e-300));
    }
    assert!(pic.differences.windows(2).all(|w| w[1] <= w[0] * 1.0001 || w[1] < 1e-14));
}

#[test]
fn scheme_model_matches_the_noiseless_path() {
    let (n, horizon) = (16, 1.0);
    let h = PI / n as f64;
    let step = horizon / (horizon / (0.25 * h * h)).ceil().max(200.0);
    let cfg = SimConfig {
        domain: dirichlet(),
        sigma: SigmaSpec::linear(),
        noise: NoiseSpec::White,
        lambda: 0.0,
        u0: InitialCondition::default(),
        nodes: n,
        step,
        horizon,
        snapshots: vec![horizon],
        master_seed: 0,
        moments: vec![2],
    };
    let path = run_path(&cfg, 0).unwrap();
    let mut p = MomentProblem::new(dirichlet(), 0.0, horizon, n, step);
    p.model = KernelModel::Scheme;
    let sol = solve_second_moment(&p).unwrap();
    let last = sol.values.last().unwrap();
    for (k, u) in path.snapshots[0].iter().enumerate() {
        assert!((u * u - last[k]).abs() <= 1e-12 * last[n / 2], "node {k}");
    }
}

#[test]
fn threshold_search_and_neumann_outcome() {
    let p = MomentProblem::new(dirichlet(), 1.0, 10.0, 16, 0.02);
    let br = critical_lambda(&p, (0.5, 0.8)).unwrap();
    assert!(br.rate_low < 0.0 && br.rate_high > 0.0);
    assert!((br.lambda_crit - br.spectral_estimate).abs() < 0.05 * br.spectral_estimate);
    let n = MomentProblem::new(DomainSpec::neumann(PI).unwrap(), 1.0, 10.0, 16, 0.02);
    assert!(matches!(critical_lambda(&n, (0.5, 0.8)), Err(Error::NoThreshold(_))));
}

#[test]
fn neumann_rate_is_positive_at_small_noise() {
    let p = MomentProblem::new(DomainSpec::neumann(PI).unwrap(), 0.05, 40.0, 16, 0.04);
    let sol = solve_second_moment(&p).unwrap();
    assert!(lyapunov_rate(&sol, PI / 2.0, 0.4).unwrap().rate > 0.0);
}

#[test]
fn two_point_diagonal_is_positive() {
    let mut p = MomentProblem::new(dirichlet(), 1.0, 1.0, 16, 0.005);
    p.noise = NoiseSpec::colored(Covariance::Riesz { alpha: 0.5 });
    let sol = solve_two_point(&p).unwrap();
    let n = sol.nodes.len() - 1;
    // u0 vanishes outside its support, so positivity starts after t = 0
    for row in &sol.values[1..] {
        assert!(row[1..n].iter().all(|&v| v > 0.0));
        assert!(row[0] == 0.0 && row[n] == 0.0);
    }
}
