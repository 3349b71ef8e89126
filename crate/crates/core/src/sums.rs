//! Sums over the power-law modes `j = 1..=v` of the form
//! `Σ_j j^{-q} φ(j^{-2α})`.
//!
//! Indices up to a cutoff `J` are summed directly. Past the cutoff φ is
//! replaced by its Taylor series `Σ_k c_k x^k`, and each monomial collapses to
//! a power sum, so `v` may be huge or infinite at a cost independent of `v`.

use num_complex::Complex64;

use crate::special::power_sum;

/// Ambient dimension: finite or `v = ∞`.
pub type Ambient = Option<u64>;

/// Smallest cutoff `J` with `(J+1)^{-2α} · radius ≤ 1/10`, at least `floor`.
pub fn cutoff_for(alpha: f64, radius: f64, floor: u64) -> u64 {
    let need = (10.0 * radius.max(0.0)).powf(1.0 / (2.0 * alpha)).ceil();
    let need = if need.is_finite() { need.min(1e15) as u64 } else { u64::MAX / 4 };
    need.max(floor)
}

/// `Σ_{j=1}^{v} j^{-q} φ(j^{-2α})`.
///
/// `coeff(k)` returns the Taylor coefficient `c_k` of φ at 0 for `k ≥ k0`;
/// `ratio` bounds `|c_{k+1}/c_k|` so the series converges for `j > J`.
pub fn modal_sum<P, C>(alpha: f64, q: f64, v: Ambient, phi: P, coeff: C, k0: usize, ratio: f64, floor: u64) -> Complex64
where
    P: Fn(f64) -> Complex64,
    C: Fn(usize) -> Complex64,
{
    let j_cut = cutoff_for(alpha, ratio, floor);
    let direct_end = match v {
        Some(v) => j_cut.min(v),
        None => j_cut,
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for j in (1..=direct_end).rev() {
        let x = (j as f64).powf(-2.0 * alpha);
        let w = if q == 0.0 { 1.0 } else { (j as f64).powf(-q) };
        acc += phi(x) * w;
    }
    if let Some(v) = v {
        if direct_end >= v {
            return acc;
        }
    }
    let lo = direct_end + 1;
    let mut tail = Complex64::new(0.0, 0.0);
    let mut k = k0;
    loop {
        let s = q + 2.0 * alpha * k as f64;
        if v.is_none() && s <= 1.0 {
            // Divergent monomial: only possible when q + 2αk ≤ 1 with v = ∞,
            // which callers exclude. Treat as a programming error.
            panic!("infinite modal sum with non-summable power {s}");
        }
        let c = coeff(k);
        let term = c * power_sum(s, lo, v);
        tail += term;
        if k > k0 + 2 && term.norm() <= 1e-17 * (acc.norm() + tail.norm()) {
            break;
        }
        if k > k0 + 400 {
            break;
        }
        k += 1;
    }
    acc + tail
}

/// Real-valued variant of [`modal_sum`].
pub fn modal_sum_real<P, C>(alpha: f64, q: f64, v: Ambient, phi: P, coeff: C, k0: usize, ratio: f64, floor: u64) -> f64
where
    P: Fn(f64) -> f64,
    C: Fn(usize) -> f64,
{
    modal_sum(
        alpha,
        q,
        v,
        |x| Complex64::new(phi(x), 0.0),
        |k| Complex64::new(coeff(k), 0.0),
        k0,
        ratio,
        floor,
    )
    .re
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_family_matches_direct() {
        // φ(x) = x / (1 + c x), c_k = (-c)^{k-1}
        let (alpha, q, c) = (0.8, 0.6, 50.0);
        let v = 300_000u64;
        let direct: f64 = (1..=v)
            .rev()
            .map(|j| {
                let x = (j as f64).powf(-2.0 * alpha);
                (j as f64).powf(-q) * x / (1.0 + c * x)
            })
            .sum();
        let got = modal_sum_real(alpha, q, Some(v), |x| x / (1.0 + c * x), |k| (-c).powi(k as i32 - 1), 1, c, 100);
        assert!((got - direct).abs() < 1e-13 * direct, "{got} vs {direct}");
    }

    #[test]
    fn complex_resolvent_sum() {
        let alpha = 1.0;
        let m = Complex64::new(0.3, -0.2);
        let z = Complex64::new(1e-4, 2e-5);
        let v = 200_000u64;
        let phi = |x: f64| x * m / (x * m - z);
        let direct: Complex64 = (1..=v).rev().map(|j| phi((j as f64).powf(-2.0))).sum();
        let r = m / z;
        let got = modal_sum(alpha, 0.0, Some(v), phi, |k| -r.powi(k as i32), 1, r.norm(), 50);
        assert!((got - direct).norm() < 1e-12 * direct.norm(), "{got} vs {direct}");
    }
}
