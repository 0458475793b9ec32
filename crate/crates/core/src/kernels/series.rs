use std::f64::consts::PI;

use super::{gaussian, Boundary, KernelValue, Representation};

/// Eigenfunction series, summed until the certified tail meets `tol`
/// (relative) or `max_modes` non-constant modes have been used.
///
/// Tail bound after `N` modes: `(2/L) e^{-ν_{N+1} t} / (1 - e^{-ν₁(2N+2)t})`,
/// from `ν_n - ν_{N+1} ≥ ν₁ (2N+2)(n-N-1)`.
pub fn spectral_sum(
    boundary: Boundary,
    length: f64,
    t: f64,
    x: f64,
    y: f64,
    tol: f64,
    max_modes: usize,
) -> KernelValue {
    let theta = PI / length;
    let nu1 = 0.5 * theta * theta;
    let (cm, cp) = ((theta * (x - y)).cos(), (theta * (x + y)).cos());
    // cos(nα) by the Chebyshev recurrence, seeded with n = 0 and n = 1
    let (mut m_prev, mut m_cur) = (1.0, cm);
    let (mut p_prev, mut p_cur) = (1.0, cp);
    let sign = match boundary {
        Boundary::Dirichlet => -1.0,
        Boundary::Neumann => 1.0,
    };
    let mut acc = match boundary {
        Boundary::Dirichlet => 0.0,
        Boundary::Neumann => 1.0,
    };
    let mut tail = f64::INFINITY;
    let mut used = 0;
    for n in 1..=max_modes {
        let nf = n as f64;
        let decay = (-nu1 * nf * nf * t).exp();
        acc += decay * (m_cur + sign * p_cur);
        used = n;
        let next = (nf + 1.0) * (nf + 1.0);
        let gap = -(-nu1 * (2.0 * nf + 2.0) * t).exp_m1();
        tail = 2.0 / length * (-nu1 * next * t).exp() / gap;
        if tail <= tol * (acc / length).abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let m_next = 2.0 * cm * m_cur - m_prev;
        m_prev = m_cur;
        m_cur = m_next;
        let p_next = 2.0 * cp * p_cur - p_prev;
        p_prev = p_cur;
        p_cur = p_next;
    }
    KernelValue {
        value: acc / length,
        tail_bound: tail,
        representation: Representation::Spectral { modes: used },
    }
}

/// Method-of-images sum `Σ_k [g(x-y+2kL) ∓ g(x+y+2kL)]` (minus for
/// Dirichlet, plus for Neumann), over `|k| ≤ K` with `K` raised until the certified tail
/// `4 Σ_{j≥K} g(t, 2jL)` meets `tol`.
pub fn image_sum(
    boundary: Boundary,
    length: f64,
    t: f64,
    x: f64,
    y: f64,
    tol: f64,
    max_shifts: usize,
) -> KernelValue {
    let sign = match boundary {
        Boundary::Dirichlet => -1.0,
        Boundary::Neumann => 1.0,
    };
    let dm = x - y;
    let dp = x + y;
    // the k = -1 shift of x+y is the reflection through L, keep it with k = 0
    let mut acc = gaussian(t, dm) + sign * (gaussian(t, dp) + gaussian(t, dp - 2.0 * length));
    let mut tail = f64::INFINITY;
    let mut used = 0;
    for k in 1..=max_shifts {
        let s = 2.0 * k as f64 * length;
        let direct = gaussian(t, dm + s) + gaussian(t, dm - s);
        let reflected = gaussian(t, dp + s) + gaussian(t, dp - s - 2.0 * length);
        acc += direct + sign * reflected;
        used = k;
        let kf = k as f64;
        let d = 2.0 * kf * length;
        let ratio = (-(2.0 * length).powi(2) * (2.0 * kf + 1.0) / (2.0 * t)).exp();
        tail = 4.0 * gaussian(t, d) / (1.0 - ratio);
        if tail <= tol * acc.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    KernelValue {
        value: acc,
        tail_bound: tail,
        representation: Representation::Images { shifts: used },
    }
}
