//! Compute-optimal exponents from families of loss curves: IsoFLOP slices,
//! power-law fits and the three measurement approaches.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::LogLog;
use crate::problem::{LossCurve, Source};

pub const DEFAULT_WINDOW: (f64, f64) = (1e6, 1e8);
pub const DEFAULT_SLICES: usize = 15;
pub const SLIDING_SLICES: usize = 20;
/// Largest `d₂/d₁` accepted by [`approach0`].
pub const MAX_PAIR_RATIO: f64 = 1.2;

/// `y ≈ a·x^b` fitted in log-log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierFit {
    pub a: f64,
    pub b: f64,
    pub window: (f64, f64),
    pub n_slices: usize,
    /// RMS residual of `log y`.
    pub residual: f64,
    /// Set when the fitted ordinates are all equal.
    pub low_information: bool,
}

impl FrontierFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.a * x.powf(self.b)
    }
}

/// Ordinary least squares on `(log x, log y)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<FrontierFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("power-law fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::invalid("power-law fit needs positive finite points"));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("power-law fit needs distinct abscissae"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let c = my - b * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - c - b * x).powi(2)).sum();
    let xmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let first = points[0].1;
    Ok(FrontierFit {
        a: c.exp(),
        b,
        window: (xmin, xmax),
        n_slices: points.len(),
        residual: (rss / n).sqrt(),
        low_information: points.iter().all(|p| p.1 == first),
    })
}

/// Mean risk over curves sharing `(source, d)`, on the iterations common to
/// all of them.
pub fn average_seeds(curves: &[LossCurve]) -> Vec<LossCurve> {
    let mut groups: BTreeMap<(u8, usize), Vec<&LossCurve>> = BTreeMap::new();
    for c in curves {
        let tag = match c.source {
            Source::Sgd => 0,
            Source::Volterra => 1,
            Source::Theory => 2,
        };
        groups.entry((tag, c.d)).or_default().push(c);
    }
    let mut out = Vec::new();
    for group in groups.values() {
        if group.len() == 1 {
            out.push(group[0].clone());
            continue;
        }
        let maps: Vec<BTreeMap<u64, f64>> = group.iter().map(|c| c.points.iter().map(|p| (p.iter, p.risk)).collect()).collect();
        let mut mean = LossCurve::new(group[0].source, group[0].d, 0, group[0].batch);
        for (&it, _) in &maps[0] {
            let vals: Option<Vec<f64>> = maps.iter().map(|m| m.get(&it).copied()).collect();
            if let Some(vals) = vals {
                mean.push(it, vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        mean.diverged = group.iter().any(|c| c.diverged);
        out.push(mean);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoFlopSlice {
    pub flops: f64,
    /// `(d, interpolated risk)` for every curve covering `flops`, by increasing d.
    pub losses: Vec<(usize, f64)>,
    pub min_d: usize,
    pub min_risk: f64,
}

/// Log-log interpolant of risk against flops, `r = 0` dropped.
fn curve_interpolant(c: &LossCurve) -> Result<LogLog> {
    let pts: Vec<(f64, f64)> = c.points.iter().filter(|p| p.flops > 0.0 && p.risk > 0.0).map(|p| (p.flops, p.risk)).collect();
    if pts.len() < 2 {
        return Err(Error::invalid(format!("curve d={} has fewer than 2 usable points", c.d)));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    LogLog::new(&x, &y)
}

/// `n` geometrically spaced values from `lo` to `hi` (just `lo` when n = 1).
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln();
    (0..n).map(|k| if k + 1 == n { hi } else { lo * (r * k as f64 / (n - 1) as f64).exp() }).collect()
}

/// IsoFLOP slices over `window`. Curves sharing d are seed-averaged first;
/// a curve contributes to a slice only where its flops range covers it.
pub fn isoflop_slices(curves: &[LossCurve], window: (f64, f64), n: usize) -> Result<Vec<IsoFlopSlice>> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::invalid("window must satisfy 0 < f_min <= f_max"));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one slice"));
    }
    let curves = average_seeds(curves);
    let mut ds: Vec<usize> = curves.iter().map(|c| c.d).collect();
    ds.sort_unstable();
    ds.dedup();
    if ds.len() < 2 {
        return Err(Error::invalid("IsoFLOP slices need curves for at least 2 distinct d"));
    }
    let mut interps: Vec<(usize, LogLog)> = curves.iter().map(|c| Ok((c.d, curve_interpolant(c)?))).collect::<Result<_>>()?;
    interps.sort_by_key(|p| p.0);
    let mut out = Vec::with_capacity(n);
    for f in geometric_grid(lo, hi, n) {
        let mut losses = Vec::new();
        for (d, li) in &interps {
            let (a, b) = li.range();
            if f >= a * (1.0 - 1e-12) && f <= b * (1.0 + 1e-12) {
                losses.push((*d, li.eval(f.clamp(a, b))?));
            }
        }
        let Some(&(min_d, min_risk)) = losses.iter().min_by(|x, y| x.1.total_cmp(&y.1)) else {
            return Err(Error::invalid(format!("window outside data: no curve covers flops {f:e}")));
        };
        out.push(IsoFlopSlice { flops: f, losses, min_d, min_risk });
    }
    Ok(out)
}

/// Approach 1: power law of the discrete argmin `d*` against flops.
pub fn approach1(slices: &[IsoFlopSlice]) -> Result<FrontierFit> {
    let pts: Vec<(f64, f64)> = slices.iter().map(|s| (s.flops, s.min_d as f64)).collect();
    fit_power_law(&pts)
}

/// Power law of the minimal risk against flops; `η̂ = −b`.
pub fn frontier_eta(slices: &[IsoFlopSlice]) -> Result<FrontierFit> {
    let pts: Vec<(f64, f64)> = slices.iter().map(|s| (s.flops, s.min_risk)).collect();
    fit_power_law(&pts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Approach2Fit {
    pub fit: FrontierFit,
    /// `(flops, d*)` per slice.
    pub optima: Vec<(f64, f64)>,
    /// Slices whose parabola opened downward (discrete argmin used).
    pub convexity_failures: usize,
}

/// Least-squares `y = a x² + b x + c`.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::invalid("quadratic fit needs at least 3 points"));
    }
    // Centre x for conditioning.
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for &(x, y) in points {
        let u = x - mx;
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                t[k] += p * y;
            }
            p *= u;
        }
    }
    let m = [[s[4], s[3], s[2]], [s[3], s[2], s[1]], [s[2], s[1], s[0]]];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(&m);
    if !(det.abs() > 0.0) {
        return Err(Error::invalid("quadratic fit is singular (need 3 distinct abscissae)"));
    }
    let rhs = [t[2], t[1], t[0]];
    let mut sol = [0.0; 3];
    for (k, out) in sol.iter_mut().enumerate() {
        let mut mk = m;
        for row in 0..3 {
            mk[row][k] = rhs[row];
        }
        *out = det3(&mk) / det;
    }
    let (a, bu, cu) = (sol[0], sol[1], sol[2]);
    // Undo the centring.
    Ok((a, bu - 2.0 * a * mx, a * mx * mx - bu * mx + cu))
}

/// Approach 2: per-slice parabola in `(log d, log P)`, vertex as `d*`, then a
/// power law of `d*` against flops.
pub fn approach2(slices: &[IsoFlopSlice]) -> Result<Approach2Fit> {
    let mut optima = Vec::with_capacity(slices.len());
    let mut failures = 0;
    for s in slices {
        if s.losses.len() < 4 {
            return Err(Error::invalid(format!("approach 2 needs at least 4 distinct d per slice (flops {:e})", s.flops)));
        }
        let pts: Vec<(f64, f64)> = s.losses.iter().map(|&(d, p)| ((d as f64).ln(), p.ln())).collect();
        let (a, b, _) = fit_quadratic(&pts)?;
        if a > 0.0 {
            optima.push((s.flops, (-b / (2.0 * a)).exp()));
        } else {
            failures += 1;
            optima.push((s.flops, s.min_d as f64));
        }
    }
    if 2 * failures > slices.len() {
        return Err(Error::Numerical(format!("parabola opened downward on {failures} of {} slices", slices.len())));
    }
    Ok(Approach2Fit { fit: fit_power_law(&optima)?, optima, convexity_failures: failures })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangentPoint {
    pub d1: usize,
    pub d2: usize,
    pub f1: f64,
    pub f2: f64,
    /// `(log d₂ − log d₁)/(log f₂ − log f₁)`.
    pub xi: f64,
}

impl TangentPoint {
    pub fn flops(&self) -> f64 {
        (self.f1 * self.f2).sqrt()
    }
}

/// Convex branch of a log-log curve: from its steepest point to its end.
struct Branch {
    li: LogLog,
    t0: f64,
    t1: f64,
    s0: f64,
    s1: f64,
}

impl Branch {
    fn new(li: LogLog) -> Result<Self> {
        let (lo, hi) = li.log_domain();
        let n = 4000;
        let mut t0 = lo;
        let mut s0 = f64::INFINITY;
        for k in 0..=n {
            let t = lo + (hi - lo) * k as f64 / n as f64;
            let s = li.log_slope(t)?;
            if s < s0 {
                s0 = s;
                t0 = t;
            }
        }
        let s1 = li.log_slope(hi)?;
        Ok(Branch { li, t0, t1: hi, s0, s1 })
    }

    /// Abscissa on the branch where the slope equals `s`.
    fn at_slope(&self, s: f64) -> Result<f64> {
        let (mut a, mut b) = (self.t0, self.t1);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if self.li.log_slope(m)? < s {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Intercept of the tangent with slope `s`.
    fn intercept(&self, s: f64) -> Result<(f64, f64)> {
        let t = self.at_slope(s)?;
        Ok((self.li.log_eval(t)? - s * t, t))
    }
}

/// Common tangent (in log-log) of two loss-versus-flops curves. `None`
/// when the curves admit no tangency on their convex branches.
pub fn tangent_pair(c1: &LossCurve, c2: &LossCurve) -> Result<Option<TangentPoint>> {
    if c1.d == c2.d {
        return Err(Error::invalid("tangency needs two distinct d"));
    }
    let (c1, c2) = if c1.d < c2.d { (c1, c2) } else { (c2, c1) };
    let b1 = Branch::new(curve_interpolant(c1)?)?;
    let b2 = Branch::new(curve_interpolant(c2)?)?;
    let lo = b1.s0.max(b2.s0);
    let hi = b1.s1.min(b2.s1);
    if !(lo < hi) {
        return Ok(None);
    }
    let g = |s: f64| -> Result<f64> { Ok(b1.intercept(s)?.0 - b2.intercept(s)?.0) };
    let (mut a, mut b) = (lo, hi);
    let (ga, gb) = (g(a)?, g(b)?);
    if ga == 0.0 || gb == 0.0 || ga.signum() == gb.signum() {
        return Ok(None);
    }
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        let gm = g(m)?;
        if gm.signum() == ga.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    let s = 0.5 * (a + b);
    let (_, t1) = b1.intercept(s)?;
    let (_, t2) = b2.intercept(s)?;
    if !(t2 > t1) {
        return Ok(None);
    }
    let xi = ((c2.d as f64).ln() - (c1.d as f64).ln()) / (t2 - t1);
    Ok(Some(TangentPoint { d1: c1.d, d2: c2.d, f1: t1.exp(), f2: t2.exp(), xi }))
}

/// Approach 0: instantaneous `ξ` from tangencies of adjacent-d curves.
/// Pairs further apart than [`MAX_PAIR_RATIO`] or without a tangency are skipped.
pub fn approach0(curves: &[LossCurve]) -> Result<Vec<TangentPoint>> {
    let mut curves = average_seeds(curves);
    curves.sort_by_key(|c| c.d);
    let mut out = Vec::new();
    for w in curves.windows(2) {
        if w[1].d as f64 > MAX_PAIR_RATIO * w[0].d as f64 * (1.0 + 1e-12) {
            continue;
        }
        if let Some(p) = tangent_pair(&w[0], &w[1])? {
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowFit {
    pub window: (f64, f64),
    pub eta: FrontierFit,
    pub xi: FrontierFit,
}

/// Fits over consecutive `sub`-slice windows of a dense slice set.
pub fn sliding_window(slices: &[IsoFlopSlice], sub: usize) -> Result<Vec<WindowFit>> {
    if sub < 3 || slices.len() < sub {
        return Err(Error::invalid(format!("sliding window of {sub} slices needs at least that many slices (have {})", slices.len())));
    }
    slices
        .windows(sub)
        .map(|w| {
            Ok(WindowFit { window: (w[0].flops, w[sub - 1].flops), eta: frontier_eta(w)?, xi: approach1(w)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Curve with `P(f) = family(f, d)` sampled on a geometric flops grid.
    pub(crate) fn synthetic(d: usize, family: impl Fn(f64, f64) -> f64, fmax: f64) -> LossCurve {
        synthetic_with(d, family, fmax, 1.05)
    }

    pub(crate) fn synthetic_with(d: usize, family: impl Fn(f64, f64) -> f64, fmax: f64, step: f64) -> LossCurve {
        let mut c = LossCurve::new(Source::Volterra, d, 0, 1);
        c.push(0, family(0.0, d as f64).min(1e300));
        let mut r = 1u64;
        loop {
            let f = (r * d as u64) as f64;
            c.push(r, family(f, d as f64));
            if f >= fmax {
                break;
            }
            r = ((r as f64 * step).ceil() as u64).max(r + 1);
        }
        c
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..20).map(|k| (k as f64, 2.0 * (k as f64).powf(-0.5))).collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.a - 2.0).abs() < 1e-12 && (f.b + 0.5).abs() < 1e-12 && f.residual <= 1e-12);
        let f = fit_power_law(&[(1.0, 3.0), (2.0, 3.0), (5.0, 3.0)]).unwrap();
        assert!(f.b.abs() < 1e-15 && (f.a - 3.0).abs() < 1e-12 && f.low_information);
    }

    #[test]
    fn noisy_power_law() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let noise: Normal<f64> = Normal::new(0.0, 0.01).unwrap();
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|k| {
                let x = 10f64.powf(k as f64 / 33.0);
                (x, 3.0 * x.powf(1.7) * noise.sample(&mut rng).exp())
            })
            .collect();
        assert!((fit_power_law(&pts).unwrap().b - 1.7).abs() < 0.01);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, -2.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn two_curve_slices_switch_at_product() {
        let fam = |f: f64, d: f64| if f == 0.0 { 1e300 } else { d / f + 1.0 / d };
        let curves = vec![synthetic(10, fam, 1e6), synthetic(40, fam, 1e6)];
        let s = isoflop_slices(&curves, (1e3, 1e5), 30).unwrap();
        for sl in &s {
            let expect = if sl.flops < 400.0 { 10 } else { 40 };
            assert_eq!(sl.min_d, expect, "{}", sl.flops);
        }
        let one = isoflop_slices(&curves, (1e3, 1e5), 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].flops, 1e3);
        assert!(isoflop_slices(&curves, (1e7, 1e8), 3).is_err());
    }

    #[test]
    fn approach1_on_corner_family() {
        // d/f + d^{-2} is minimized at d* = (2f)^{1/3}.
        let fam = |f: f64, d: f64| if f == 0.0 { 1e300 } else { d / f + d.powi(-2) };
        let mut curves = Vec::new();
        let mut d = 10.0f64;
        while d < 5000.0 {
            curves.push(synthetic(d.round() as usize, fam, 1e12));
            d *= 1.03;
        }
        let s = isoflop_slices(&curves, (1e5, 1e10), 25).unwrap();
        let xi = crate::theory::corner_xi(1.0, 0.0, 0.0, 2.0).unwrap();
        assert!((approach1(&s).unwrap().b - xi).abs() < 0.02);
    }

    #[test]
    fn approach2_recovers_parabolic_family() {
        // log P = (log d − 0.4 log f)² − log f has its vertex at d = f^{0.4}.
        let ds = [50usize, 100, 200, 400, 800, 1600];
        let slices: Vec<IsoFlopSlice> = geometric_grid(1e4, 1e8, 9)
            .into_iter()
            .map(|f| {
                let losses: Vec<(usize, f64)> =
                    ds.iter().map(|&d| (d, ((d as f64).ln() - 0.4 * f.ln()).powi(2).exp() / f)).collect();
                let &(min_d, min_risk) = losses.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
                IsoFlopSlice { flops: f, losses, min_d, min_risk }
            })
            .collect();
        let a2 = approach2(&slices).unwrap();
        assert_eq!(a2.convexity_failures, 0);
        assert!((a2.fit.b - 0.4).abs() < 1e-10);
        assert!(a2.fit.a.ln().abs() < 1e-8);
    }

    #[test]
    fn approach2_rejects_concave_slices() {
        let ds = [50usize, 100, 200, 400];
        let slices: Vec<IsoFlopSlice> = geometric_grid(1e4, 1e6, 4)
            .into_iter()
            .map(|f| {
                let losses: Vec<(usize, f64)> = ds.iter().map(|&d| (d, (-((d as f64).ln() - 4.0).powi(2)).exp() / f)).collect();
                IsoFlopSlice { flops: f, losses: losses.clone(), min_d: 50, min_risk: losses[0].1 }
            })
            .collect();
        assert!(approach2(&slices).is_err());
        let mut short = slices.clone();
        short[0].losses.truncate(3);
        assert!(approach2(&short).is_err());
    }

    #[test]
    fn parabola_vertex() {
        let pts: Vec<(f64, f64)> = (0..7).map(|k| {
            let x = 3.0 + 0.5 * k as f64;
            (x, 0.7 * (x - 4.2).powi(2) - 1.5)
        }).collect();
        let (a, b, c) = fit_quadratic(&pts).unwrap();
        assert!((a - 0.7).abs() < 1e-10);
        assert!((-b / (2.0 * a) - 4.2).abs() < 1e-10);
        assert!((c - (0.7 * 4.2 * 4.2 - 1.5)).abs() < 1e-9);
    }

    #[test]
    fn approach0_on_corner_family() {
        // Two power-law terms: curves are translates of one another, so the
        // discrete exponent is exactly 1/2 at any ratio.
        let fam = |f: f64, d: f64| if f == 0.0 { 1e300 } else { d / f + 1.0 / d };
        let p = tangent_pair(&synthetic(200, fam, 1e8), &synthetic(210, fam, 1e8)).unwrap().unwrap();
        assert!((p.xi - 0.5).abs() <= 0.01, "{}", p.xi);
    }

    #[test]
    fn approach0_converges_as_pairs_tighten() {
        // A third term breaks self-similarity; the envelope satisfies
        // f = d³/(d + 2c), so the instantaneous exponent is 1/(3 − d/(d + 2c)).
        let c = 20.0;
        let fam = move |f: f64, d: f64| if f == 0.0 { 1e300 } else { d / f + 1.0 / d + c / (d * d) };
        let exact = |d: f64| 1.0 / (3.0 - d / (d + 2.0 * c));
        let d1 = 1000usize;
        let mut errs = Vec::new();
        for ratio in [1.2, 1.1, 1.05] {
            let d2 = (d1 as f64 * ratio).round() as usize;
            let p = tangent_pair(&synthetic_with(d1, fam, 1e9, 1.002), &synthetic_with(d2, fam, 1e9, 1.002)).unwrap().unwrap();
            errs.push((p.xi - exact(d1 as f64)).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn identical_curves_have_no_tangent() {
        let fam = |f: f64, d: f64| if f == 0.0 { 1e300 } else { d / f + 1.0 / d };
        let c = synthetic(100, fam, 1e7);
        assert!(tangent_pair(&c, &c).is_err());
        let mut c2 = c.clone();
        c2.d = 110;
        assert!(tangent_pair(&c, &c2).unwrap().is_none());
    }

    #[test]
    fn seed_average() {
        let mut a = LossCurve::new(Source::Sgd, 5, 0, 1);
        let mut b = LossCurve::new(Source::Sgd, 5, 1, 1);
        for r in 0..4 {
            a.push(r, 1.0 + r as f64);
            b.push(r, 3.0 + r as f64);
        }
        b.push(4, 1.0);
        let m = average_seeds(&[a, b]);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].risks(), vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn sliding_windows_cover_dense_set() {
        let fam = |f: f64, d: f64| if f == 0.0 { 1e300 } else { d / f + 1.0 / d };
        let curves: Vec<LossCurve> = (0..40).map(|k| synthetic((20.0 * 1.1f64.powi(k)) as usize, fam, 1e9)).collect();
        let s = isoflop_slices(&curves, (1e4, 1e6), 40).unwrap();
        let w = sliding_window(&s, SLIDING_SLICES).unwrap();
        assert_eq!(w.len(), 21);
        for f in &w {
            assert!((f.xi.b - 0.5).abs() < 0.1);
        }
    }
}
