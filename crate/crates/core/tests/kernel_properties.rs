use std::f64::consts::PI;

use proptest::prelude::*;
use shelab_core::kernels::{
    chapman_kolmogorov, gaussian_kernel, green_apply, heat_kernel, image_sum, spectral_sum, square_identity,
    KernelQuery,
};
use shelab_core::{Boundary, DomainSpec, InitialCondition};

fn domain(b: Boundary) -> DomainSpec {
    DomainSpec::new(PI, b).unwrap()
}

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Dirichlet), Just(Boundary::Neumann)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chapman_kolmogorov_holds(b in boundary(), t in 0.02f64..3.0, s in 0.02f64..3.0,
                                x in 0.05f64..3.09, y in 0.05f64..3.09) {
        let (lhs, rhs) = chapman_kolmogorov(t, s, x, y, &domain(b)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-7 * rhs.abs(), "{lhs} vs {rhs}");
    }

    #[test]
    fn square_identity_holds(b in boundary(), t in 0.02f64..5.0, x in 0.05f64..3.09) {
        let (lhs, rhs) = square_identity(t, x, &domain(b)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-7 * rhs);
    }

    #[test]
    fn free_space_comparison(t in 1e-3f64..10.0, x in 0.0f64..PI, y in 0.0f64..PI) {
        let g = gaussian_kernel(t, x, y).unwrap();
        let q = KernelQuery::new(t, x, y);
        let pd = heat_kernel(&q, &domain(Boundary::Dirichlet)).unwrap().value;
        let pn = heat_kernel(&q, &domain(Boundary::Neumann)).unwrap().value;
        prop_assert!(pd <= g + 1e-10 && pd >= -1e-10);
        prop_assert!(pn >= g - 1e-10);
    }

    #[test]
    fn representations_agree(b in boundary(), t in 0.05f64..4.0, x in 0.0f64..PI, y in 0.0f64..PI) {
        let a = image_sum(b, PI, t, x, y, 1e-13, 1 << 12);
        let s = spectral_sum(b, PI, t, x, y, 1e-13, 1 << 16);
        // tails plus the rounding of terms of size up to (2πt)^{-1/2}
        let rounding = 1e-14 / (2.0 * PI * t).sqrt() + 1e-13 * a.value.abs();
        let slack = 2.0 * a.tail_bound.max(s.tail_bound) + rounding;
        prop_assert!((a.value - s.value).abs() <= slack, "{} vs {} (slack {slack:e})", a.value, s.value);
    }

    #[test]
    fn kernel_is_symmetric(b in boundary(), t in 1e-3f64..10.0, x in 0.0f64..PI, y in 0.0f64..PI) {
        let d = domain(b);
        let p = heat_kernel(&KernelQuery::new(t, x, y), &d).unwrap().value;
        let q = heat_kernel(&KernelQuery::new(t, y, x), &d).unwrap().value;
        prop_assert!((p - q).abs() <= 1e-13 * p.abs().max(1e-300));
    }
}

#[test]
fn dirichlet_floor_past_the_crossover() {
    // p_D(t,x,y) e^{ν₁t} → e₁(x)e₁(y), bounded below on [ε, L-ε]
    let d = domain(Boundary::Dirichlet);
    let eps = PI / 8.0;
    let floor = 2.0 / PI * eps.sin().powi(2);
    for &t in &[2.0, 5.0, 20.0] {
        for i in 0..=8 {
            for j in 0..=8 {
                let x = eps + (PI - 2.0 * eps) * i as f64 / 8.0;
                let y = eps + (PI - 2.0 * eps) * j as f64 / 8.0;
                let p = heat_kernel(&KernelQuery::new(t, x, y), &d).unwrap().value;
                // the second mode still removes about a fifth at t = 2
                assert!(p * (0.5 * t).exp() >= 0.75 * floor, "t={t} x={x} y={y}");
            }
        }
    }
}

#[test]
fn green_apply_bump_bound() {
    let d = domain(Boundary::Dirichlet);
    let u0 = InitialCondition::default();
    let v = green_apply(&u0, 30.0, PI / 2.0, &d).unwrap();
    // |G u0| ≤ ‖u0‖₁·sup|e₁|²·e^{-t/2} + faster modes
    assert!(v > 0.0 && v <= 2.0 / PI * (-15.0f64).exp() * PI);
}
