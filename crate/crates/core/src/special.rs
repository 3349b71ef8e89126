//! Special functions: Γ and power sums `Σ j^{-s}` over long index ranges.

/// Γ(x) for real x (Lanczos approximation, ~1e-15 relative).
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

const BERNOULLI_OVER_FACT: [f64; 6] = [
    1.0 / 12.0,            // B2 / 2!
    -1.0 / 720.0,          // B4 / 4!
    1.0 / 30240.0,         // B6 / 6!
    -1.0 / 1209600.0,      // B8 / 8!
    1.0 / 47900160.0,      // B10 / 10!
    -691.0 / 1307674368000.0, // B12 / 12!
];

/// Euler–Maclaurin start index: below it terms are summed directly.
const EM_START: u64 = 64;

/// `Σ_{j=lo}^{hi} j^{-s}` for integers `1 ≤ lo`, `hi = None` meaning infinity
/// (requires `s > 1`). Long ranges use Euler–Maclaurin with six Bernoulli
/// corrections, accurate to roughly machine precision once `lo ≥ 64`.
pub fn power_sum(s: f64, lo: u64, hi: Option<u64>) -> f64 {
    assert!(lo >= 1, "power_sum needs lo >= 1");
    if let Some(h) = hi {
        if h < lo {
            return 0.0;
        }
    } else {
        assert!(s > 1.0, "infinite power sum needs s > 1");
    }
    let direct_end = lo.max(EM_START);
    let mut acc = 0.0;
    let stop = match hi {
        Some(h) => h.min(direct_end - 1),
        None => direct_end - 1,
    };
    if stop >= lo {
        for j in (lo..=stop).rev() {
            acc += (j as f64).powf(-s);
        }
    }
    match hi {
        Some(h) if h < direct_end => acc,
        _ => acc + em_tail(s, direct_end as f64, hi.map(|h| h as f64)),
    }
}

/// Euler–Maclaurin for `Σ_{j=a}^{b} j^{-s}`.
fn em_tail(s: f64, a: f64, b: Option<f64>) -> f64 {
    let integral = match b {
        Some(b) => {
            let l = (b / a).ln();
            if (1.0 - s).abs() < 1e-14 {
                l
            } else {
                a.powf(1.0 - s) * ((1.0 - s) * l).exp_m1() / (1.0 - s)
            }
        }
        None => a.powf(1.0 - s) / (s - 1.0),
    };
    let ends = |x: f64| -> f64 {
        // Σ_k B_{2k}/(2k)! f^{(2k-1)}(x), f = x^{-s}
        let mut total = 0.0;
        let mut rising = s; // s (s+1) ... (s+2k-2)
        let mut pow = x.powf(-s - 1.0);
        let x2 = 1.0 / (x * x);
        for (k, c) in BERNOULLI_OVER_FACT.iter().enumerate() {
            // f^{(2k-1)}(x) = -rising * x^{-s-2k+1}
            total += c * (-rising) * pow;
            let m = 2 * k as i32 + 1;
            rising *= (s + m as f64) * (s + m as f64 + 1.0);
            pow *= x2;
        }
        total
    };
    let mut sum = integral + 0.5 * a.powf(-s) - ends(a);
    if let Some(b) = b {
        sum += 0.5 * b.powf(-s) + ends(b);
    }
    sum
}

/// Riemann ζ(s) for s > 1.
pub fn zeta(s: f64) -> f64 {
    power_sum(s, 1, None)
}
