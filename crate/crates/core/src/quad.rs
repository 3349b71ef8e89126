//! Adaptive 10/21-point Gauss–Kronrod quadrature with global
//! bisection, plus changes of variable for power-law endpoint behaviour.

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525464523,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel, max_intervals: 4000 }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-14, 1e-11)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn qk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = WGK[10] * fc;
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * h;
    let resabs = resabs * h.abs();
    let resasc = resasc * h.abs();
    let mut err = ((resk - resg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

/// `∫_a^b f`, refined by bisecting the interval with the largest error until
/// the total error is below `max(abs, rel·|value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Quad> {
    if a == b {
        return Ok(Quad { value: 0.0, error: 0.0, intervals: 0 });
    }
    let (v0, e0) = qk21(&f, a, b);
    if !v0.is_finite() {
        return Err(Error::Numerical("integrand is not finite".into()));
    }
    let mut parts = vec![(a, b, v0, e0)];
    let mut value = v0;
    let mut error = e0;
    while error > tol.abs.max(tol.rel * value.abs()) {
        if parts.len() >= tol.max_intervals {
            return Err(Error::NoConvergence { what: "adaptive quadrature", iterations: parts.len(), residual: error });
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, v, e) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval collapsed to adjacent floats: accept its estimate.
            parts.push((lo, hi, v, 0.0));
            error -= e;
            continue;
        }
        let (v1, e1) = qk21(&f, lo, mid);
        let (v2, e2) = qk21(&f, mid, hi);
        value += v1 + v2 - v;
        error += e1 + e2 - e;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
        if parts.len() % 64 == 0 {
            // Re-accumulate to keep running sums from drifting.
            value = parts.iter().map(|p| p.2).sum();
            error = parts.iter().map(|p| p.3).sum();
        }
    }
    let value: f64 = parts.iter().map(|p| p.2).sum();
    Ok(Quad { value, error, intervals: parts.len() })
}

/// `∫_0^b x^p g(x) dx` for `p > -1`, via `t = x^{p+1}` which removes the
/// endpoint power.
pub fn integrate_power<G: Fn(f64) -> f64>(p: f64, g: G, b: f64, tol: Tolerance) -> Result<Quad> {
    if !(p > -1.0) {
        return Err(Error::invalid(format!("power {p} is not integrable at 0")));
    }
    let q = p + 1.0;
    let inv = 1.0 / q;
    let top = b.powf(q);
    let r = integrate(|t: f64| g(t.powf(inv)), 0.0, top, tol)?;
    Ok(Quad { value: r.value * inv, error: r.error * inv, intervals: r.intervals })
}

/// `∫_a^R x^{-q} h(x) dx` for `1 ≤ a`, `q > 1`, `R` possibly infinite, via
/// `y = x^{1-q}` which maps the tail onto a bounded interval with unit weight.
pub fn integrate_power_tail<H: Fn(f64) -> f64>(q: f64, h: H, a: f64, upper: Option<f64>, tol: Tolerance) -> Result<Quad> {
    if !(q > 1.0) {
        return Err(Error::invalid(format!("tail power {q} is not integrable at infinity")));
    }
    let e = 1.0 - q;
    let y_hi = a.powf(e);
    let y_lo = upper.map(|r| r.powf(e)).unwrap_or(0.0);
    let inv = 1.0 / e;
    let r = integrate(|y: f64| if y <= 0.0 { h(f64::INFINITY) } else { h(y.powf(inv)) }, y_lo, y_hi, tol)?;
    let s = 1.0 / (q - 1.0);
    Ok(Quad { value: r.value * s, error: r.error * s, intervals: r.intervals })
}

/// `∫_lo^hi u^p e^{-c u} du` with `p > -1` (when `lo = 0`) and `c ≥ 0`.
///
/// Works in `t = c u`, splitting the exponential range at powers of two so
/// large `c` does not starve the rule.
pub fn power_exp_integral(p: f64, c: f64, lo: f64, hi: f64, tol: Tolerance) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    if c == 0.0 {
        if lo == 0.0 {
            return Ok(hi.powf(p + 1.0) / (p + 1.0));
        }
        return Ok(if (p + 1.0).abs() < 1e-15 { (hi / lo).ln() } else { (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / (p + 1.0) });
    }
    let (t_lo, t_hi) = (c * lo, c * hi);
    let t_cap = t_hi.min(t_lo.max(0.0) + 760.0);
    let mut total = 0.0;
    let mut a = t_lo;
    if a == 0.0 {
        let b = t_cap.min(1.0);
        total += integrate_power(p, |t| (-t).exp(), b, tol)?.value;
        a = b;
    }
    while a < t_cap {
        let b = (2.0 * a).max(a + 1.0).min(t_cap);
        let r = integrate(|t: f64| t.powf(p) * (-t).exp(), a, b, tol)?;
        total += r.value;
        if r.value.abs() < 1e-18 * total.abs() {
            break;
        }
        a = b;
    }
    Ok(total * c.powf(-(p + 1.0)))
}
