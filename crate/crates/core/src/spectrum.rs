//! Deterministic equivalent of the resolvent of `K̂ = D^{1/2} W Wᵀ D^{1/2}`.
//!
//! The scalar `m(z)` solves `m + (1/d) Σ_j j^{-2α} m / (j^{-2α} m − z) = 1`;
//! the resolvent is then approximated by `diag(1/(j^{-2α} m − z))`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_power_tail, Tolerance};
use crate::sums::{modal_sum, modal_sum_real, Ambient};

/// Model dimensions entering `m(z)`; `v = None` is the infinite-aspect limit
/// (requires `2α > 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub alpha: f64,
    pub d: usize,
    pub v: Ambient,
}

impl Dims {
    pub fn new(alpha: f64, d: usize, v: Ambient) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::invalid("alpha must be positive"));
        }
        if d == 0 {
            return Err(Error::invalid("d must be positive"));
        }
        match v {
            Some(v) if v <= d as u64 => return Err(Error::invalid("v must exceed d")),
            None if 2.0 * alpha <= 1.0 => return Err(Error::invalid("infinite v requires 2α>1")),
            _ => {}
        }
        Ok(Dims { alpha, d, v })
    }
}

/// Tolerance on `|F(m; z)|`.
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 200;
const DIRECT_FLOOR: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSolution {
    #[serde(serialize_with = "ser_c")]
    pub z: Complex64,
    #[serde(serialize_with = "ser_c")]
    pub m: Complex64,
    pub residual: f64,
    pub iterations: usize,
    /// Residual after every step, starting with the initial guess.
    pub history: Vec<f64>,
}

fn ser_c<S: serde::Serializer>(c: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&c.re)?;
    t.serialize_element(&c.im)?;
    t.end()
}

/// `(S, ∂S/∂m)` with `S(m) = (1/d) Σ_j a_j m / (a_j m − z)`, `a_j = j^{-2α}`.
fn resolvent_sum(dims: &Dims, m: Complex64, z: Complex64) -> (Complex64, Complex64) {
    let r = m / z;
    let rad = r.norm();
    let s = modal_sum(dims.alpha, 0.0, dims.v, |x| x * m / (x * m - z), |k| -r.powi(k as i32), 1, rad, DIRECT_FLOOR);
    let ds = modal_sum(
        dims.alpha,
        0.0,
        dims.v,
        |x| {
            let den = x * m - z;
            -x * z / (den * den)
        },
        |k| -(k as f64) * r.powi(k as i32 - 1) / z,
        1,
        rad,
        DIRECT_FLOOR,
    );
    let inv_d = 1.0 / dims.d as f64;
    (s * inv_d, ds * inv_d)
}

/// `F(m; z) = m + S(m) − 1`.
pub fn self_consistency(dims: &Dims, m: Complex64, z: Complex64) -> Complex64 {
    m + resolvent_sum(dims, m, z).0 - 1.0
}

fn admissible(m: Complex64, z: Complex64) -> bool {
    m.re.is_finite() && m.im.is_finite() && !(z.im > 0.0 && m.im >= 0.0)
}

/// Newton's method on `F(m; z) = 0` from `init`, falling back to damped
/// iteration of `m ↦ m / (m + S(m))` when a step leaves the lower half-plane.
pub fn solve_m(dims: &Dims, z: Complex64, init: Complex64) -> Result<SpectralSolution> {
    if z.im < 0.0 {
        return Err(Error::invalid("solve_m needs Im z >= 0"));
    }
    if z.norm() == 0.0 {
        return Err(Error::invalid("solve_m needs z != 0"));
    }
    let mut m = init;
    if z.im > 0.0 && m.im >= 0.0 {
        m.im = -1e-3 * m.norm().max(1e-300);
    }
    let (mut s, mut ds) = resolvent_sum(dims, m, z);
    let mut res = (m + s - 1.0).norm();
    let mut history = vec![res];
    let mut polished = false;
    for it in 1..=MAX_ITER {
        let f = m + s - 1.0;
        let jac = 1.0 + ds;
        let mut next = m - f / jac;
        let mut ok = admissible(next, z);
        let (mut s2, mut ds2) = (s, ds);
        let mut res2 = f64::INFINITY;
        if ok {
            (s2, ds2) = resolvent_sum(dims, next, z);
            res2 = (next + s2 - 1.0).norm();
            ok = res2.is_finite() && res2 < 2.0 * res.max(1e-12);
        }
        if !ok {
            // Damped contraction step.
            let g = m / (m + s);
            next = 0.5 * (m + g);
            if !admissible(next, z) {
                next = Complex64::new(next.re, -next.im.abs().max(1e-300));
            }
            (s2, ds2) = resolvent_sum(dims, next, z);
            res2 = (next + s2 - 1.0).norm();
        }
        m = next;
        s = s2;
        ds = ds2;
        res = res2;
        history.push(res);
        if res <= RESIDUAL_TOL {
            if polished || res <= 1e-15 {
                return Ok(SpectralSolution { z, m, residual: res, iterations: it, history });
            }
            polished = true;
        }
    }
    Err(Error::NoConvergence { what: "self-consistent m(z)", iterations: MAX_ITER, residual: res })
}

/// Solves along `grid` by continuation: point k starts from the solution at
/// k−1, the first point from m = 1.
pub fn solve_m_grid(dims: &Dims, grid: &[Complex64]) -> Result<Vec<SpectralSolution>> {
    solve_m_grid_from(dims, grid, Complex64::new(1.0, 0.0))
}

pub fn solve_m_grid_from(dims: &Dims, grid: &[Complex64], init: Complex64) -> Result<Vec<SpectralSolution>> {
    let mut out: Vec<SpectralSolution> = Vec::with_capacity(grid.len());
    let mut guess = init;
    for &z in grid {
        let sol = solve_m(dims, z, guess).map_err(|e| match e {
            Error::NoConvergence { iterations, residual, .. } => {
                Error::NoConvergence { what: "self-consistent m(z) on grid", iterations, residual }
            }
            other => other,
        })?;
        guess = sol.m;
        out.push(sol);
    }
    Ok(out)
}

/// Contour height for density evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ContourHeight {
    /// Constant height; `None` means `d^{-2α}`.
    Fixed { eta: Option<f64> },
    /// `η(u) = (log(1/ε)/c) · max(u^{1+1/(2α)}, (π/2α) u^{1−1/(2α)}/d)`.
    Adaptive { eps: f64, c: f64 },
}

impl Default for ContourHeight {
    fn default() -> Self {
        ContourHeight::Fixed { eta: None }
    }
}

impl ContourHeight {
    pub fn at(&self, dims: &Dims, u: f64) -> f64 {
        let a = dims.alpha;
        match *self {
            ContourHeight::Fixed { eta } => eta.unwrap_or_else(|| (dims.d as f64).powf(-2.0 * a)),
            ContourHeight::Adaptive { eps, c } => {
                let inv = 1.0 / (2.0 * a);
                let x = u.powf(1.0 + inv).max(std::f64::consts::PI * inv * u.powf(1.0 - inv) / dims.d as f64);
                (1.0 / eps).ln() / c * x
            }
        }
    }
}

/// The default grid: `u_k = k · 0.1 d^{-2α}` for `k = 1..` up to `u_max`,
/// at height `d^{-2α}`.
pub fn default_grid(dims: &Dims, u_max: f64) -> Vec<Complex64> {
    let h = (dims.d as f64).powf(-2.0 * dims.alpha);
    let n = (u_max / (0.1 * h)).floor() as usize;
    (1..=n).map(|k| Complex64::new(k as f64 * 0.1 * h, h)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Density {
    pub u: f64,
    pub eta: f64,
    pub trace_density: f64,
    pub target_density: f64,
    #[serde(skip)]
    pub m: Complex64,
}

/// Point mass of the target measure at zero: the limit risk
/// `Σ_j j^{-2α-2β} / (1 + t j^{-2α})` where `−t = m′(0)` solves
/// `(1/d) Σ_j j^{-2α} t / (j^{-2α} t + 1) = 1`.
pub fn target_point_mass(dims: &Dims, beta: f64) -> Result<f64> {
    let t = slope_at_origin(dims)?;
    let a = dims.alpha;
    if dims.v.is_none() && 2.0 * (a + beta) <= 1.0 {
        return Err(Error::invalid("target mass infinite: need α+β>1/2 with infinite v"));
    }
    Ok(modal_sum_real(a, 2.0 * beta, dims.v, |x| x / (1.0 + t * x), |k| (-t).powi(k as i32 - 1), 1, t, DIRECT_FLOOR))
}

/// `t = −m′(0) > 0`.
pub fn slope_at_origin(dims: &Dims) -> Result<f64> {
    let a = dims.alpha;
    let d = dims.d as f64;
    let g = |t: f64| {
        modal_sum_real(a, 0.0, dims.v, |x| x * t / (x * t + 1.0), |k| -(-t).powi(k as i32), 1, t, DIRECT_FLOOR) / d - 1.0
    };
    let (mut lo, mut hi) = (1.0, 1.0);
    while g(lo) > 0.0 {
        lo *= 0.5;
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numerical("no slope at origin".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

fn density_from(dims: &Dims, beta: f64, z: Complex64, m: Complex64, mass0: f64) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let d = dims.d as f64;
    let trace = -(d / pi) * (m / z).im;
    let r = m / z;
    let t = modal_sum(
        dims.alpha,
        2.0 * beta,
        dims.v,
        |x| x / (x * m - z),
        |k| -r.powi(k as i32 - 1) / z,
        1,
        r.norm(),
        DIRECT_FLOOR,
    );
    let target = (t + mass0 / z).im / pi;
    (trace, target)
}

/// Eigenvalue density and target-weighted density at `u`, with the point
/// masses at zero removed:
/// `trace = −(d/π) Im(m/z)`,
/// `target = (1/π) Im[Σ_j j^{-2α-2β}/(j^{-2α} m − z) + F₀/z]`.
pub fn weighted_density(dims: &Dims, beta: f64, u: f64, height: ContourHeight) -> Result<Density> {
    let mut v = density_curve(dims, beta, &[u], height)?;
    Ok(v.pop().expect("one point"))
}

/// Densities along increasing `us`, solved by continuation.
pub fn density_curve(dims: &Dims, beta: f64, us: &[f64], height: ContourHeight) -> Result<Vec<Density>> {
    let mass0 = target_point_mass(dims, beta)?;
    let grid: Vec<Complex64> = us.iter().map(|&u| Complex64::new(u, height.at(dims, u))).collect();
    let sols = solve_m_grid(dims, &grid)?;
    Ok(sols
        .iter()
        .zip(us)
        .map(|(s, &u)| {
            let (trace, target) = density_from(dims, beta, s.z, s.m, mass0);
            Density { u, eta: s.z.im, trace_density: trace, target_density: target, m: s.m }
        })
        .collect())
}

/// Closed form in the exactly solvable case (α = 1, infinite aspect):
/// `m(ζ d^{-2}) → f(ζ) = −(1/ζ)(π/4 − √((π/4)² − ζ))²` for real ζ below the
/// edge `(π/4)²`.
pub fn exact_f(zeta: f64) -> Result<f64> {
    let e = std::f64::consts::FRAC_PI_4;
    let disc = e * e - zeta;
    if !(disc >= 0.0) || zeta == 0.0 {
        return Err(Error::invalid("ζ must be nonzero and below (π/4)²"));
    }
    // (e − √disc)² / ζ = ζ / (e + √disc)², stable for small ζ.
    let s = e + disc.sqrt();
    Ok(-zeta / (s * s))
}

/// `m(ζ d^{-2})` at α = 1 along increasing ζ, by continuation from the
/// linearization `m ≈ −t ζ d^{-2}` at the first point.
pub fn exact_case_m(d: usize, v: Ambient, zetas: &[f64]) -> Result<Vec<SpectralSolution>> {
    let dims = Dims::new(1.0, d, v)?;
    let t = slope_at_origin(&dims)?;
    let scale = 1.0 / (d as f64 * d as f64);
    let grid: Vec<Complex64> = zetas.iter().map(|&z| Complex64::new(z * scale, 0.0)).collect();
    let init = Complex64::new(-t * grid.first().map(|z| z.re).unwrap_or(0.0), 0.0);
    solve_m_grid_from(&dims, &grid, init)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaValue {
    /// `None` for an infinite aspect ratio.
    pub ratio: Option<f64>,
    pub alpha: f64,
    pub kappa: f64,
    pub residual: f64,
}

fn kappa_tol() -> Tolerance {
    Tolerance::new(1e-14, 1e-13)
}

/// `∫_0^R κ/(κ + x^{2α}) dx`, `R = ∞` when `ratio` is `None`.
pub fn kappa_integral(alpha: f64, ratio: Option<f64>, kappa: f64) -> Result<f64> {
    let two_a = 2.0 * alpha;
    let s = kappa.powf(1.0 / two_a);
    // x = s t: integral = s ∫_0^{R/s} dt / (1 + t^{2α}).
    let top = ratio.map(|r| r / s);
    let h = |t: f64| 1.0 / (1.0 + t.powf(two_a));
    let head_end = top.map(|t| t.min(1.0)).unwrap_or(1.0);
    let mut total = integrate(h, 0.0, head_end, kappa_tol())?.value;
    match top {
        Some(t) if t > 1.0 => {
            if two_a > 1.0 {
                total += integrate_power_tail(two_a, |x: f64| 1.0 / (1.0 + x.powf(-two_a)), 1.0, Some(t), kappa_tol())?.value;
            } else {
                let g = |y: f64| {
                    let x = y.exp();
                    x / (1.0 + x.powf(two_a))
                };
                total += integrate(g, 0.0, t.ln(), kappa_tol())?.value;
            }
        }
        Some(_) => {}
        None => {
            total += integrate_power_tail(two_a, |x: f64| if x.is_infinite() { 1.0 } else { 1.0 / (1.0 + x.powf(-two_a)) }, 1.0, None, kappa_tol())?.value;
        }
    }
    Ok(s * total)
}

/// Solves `∫_0^{ratio} κ/(κ + x^{2α}) dx = 1` by bisection in log κ.
pub fn solve_kappa(alpha: f64, ratio: Option<f64>) -> Result<KappaValue> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    match ratio {
        Some(r) if !(r > 1.0) => return Err(Error::invalid("ratio must exceed 1")),
        None if 2.0 * alpha <= 1.0 => return Err(Error::invalid("kappa requires 2α>1 at infinite aspect")),
        _ => {}
    }
    let g = |k: f64| kappa_integral(alpha, ratio, k).map(|v| v - 1.0);
    let (mut lo, mut hi) = (1.0, 1.0);
    while g(lo)? > 0.0 {
        lo *= 0.25;
        if lo < 1e-300 {
            return Err(Error::Numerical("kappa bracket underflow".into()));
        }
    }
    while g(hi)? < 0.0 {
        hi *= 4.0;
        if hi > 1e300 {
            return Err(Error::Numerical("kappa bracket overflow".into()));
        }
    }
    for _ in 0..300 {
        let mid = (lo * hi).sqrt();
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 4.0 * f64::EPSILON {
            break;
        }
    }
    let kappa = (lo * hi).sqrt();
    Ok(KappaValue { ratio, alpha, kappa, residual: g(kappa)?.abs() })
}
