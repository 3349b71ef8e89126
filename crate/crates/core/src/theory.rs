//! Closed-form theory: the component functions F₀, F_pp, F_ac, K_pp, their
//! large-d asymptotics, the max-surrogate loss, the phase diagram and the
//! compute-optimal exponents.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate_power, integrate_power_tail, power_exp_integral, Tolerance};
use crate::special::{gamma as gamma_fn, power_sum};
use crate::spectrum::solve_kappa;
use crate::sums::{modal_sum_real, Ambient};

/// Default asymptotic window constant: `γBr ∈ [M, d^{2α}/M]`.
pub const DEFAULT_M: f64 = 50.0;

/// `1 − 1/√2`, the split between Phases IVa and IVb.
pub fn alpha_iv_split() -> f64 {
    1.0 - std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Line {
    TwoAlphaOne,
    TwoBetaOne,
    BetaEqAlpha,
    AlphaQuarter,
    AlphaIvSplit,
    AlphaBetaHalf,
    Pentuple,
}

impl Line {
    pub fn name(&self) -> &'static str {
        match self {
            Line::TwoAlphaOne => "2alpha=1",
            Line::TwoBetaOne => "2beta=1",
            Line::BetaEqAlpha => "beta=alpha",
            Line::AlphaQuarter => "alpha=1/4",
            Line::AlphaIvSplit => "alpha=1-1/sqrt2",
            Line::AlphaBetaHalf => "alpha+beta=1/2",
            Line::Pentuple => "pentuple",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Ia,
    Ib,
    Ic,
    II,
    III,
    IVa,
    IVb,
    NoPowerLaw,
    Boundary(Line),
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Ia => write!(f, "Ia"),
            Phase::Ib => write!(f, "Ib"),
            Phase::Ic => write!(f, "Ic"),
            Phase::II => write!(f, "II"),
            Phase::III => write!(f, "III"),
            Phase::IVa => write!(f, "IVa"),
            Phase::IVb => write!(f, "IVb"),
            Phase::NoPowerLaw => write!(f, "NoPowerLaw"),
            Phase::Boundary(l) => write!(f, "Boundary({})", l.name()),
        }
    }
}

impl Serialize for Phase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Distance below which a point counts as lying on a critical line.
pub const BOUNDARY_TOL: f64 = 1e-9;

pub fn classify_phase(alpha: f64, beta: f64) -> Result<Phase> {
    if !(alpha > 0.0) || !beta.is_finite() {
        return Err(Error::invalid("alpha must be positive and beta finite"));
    }
    let tol = BOUNDARY_TOL;
    let on = |x: f64| x.abs() <= tol;
    let (ta, tb) = (2.0 * alpha - 1.0, 2.0 * beta - 1.0);
    if on(alpha - 0.5) && on(beta - 0.5) {
        return Ok(Phase::Boundary(Line::Pentuple));
    }
    let ab = alpha + beta - 0.5;
    if ab < -tol {
        return Ok(Phase::NoPowerLaw);
    }
    if on(ab) {
        return Ok(Phase::Boundary(Line::AlphaBetaHalf));
    }
    if on(tb) {
        return Ok(Phase::Boundary(Line::TwoBetaOne));
    }
    if tb < 0.0 {
        if on(ta) {
            return Ok(Phase::Boundary(Line::TwoAlphaOne));
        }
        return Ok(if ta > 0.0 { Phase::Ia } else { Phase::Ib });
    }
    if ta > tol {
        if on(beta - alpha) {
            return Ok(Phase::Boundary(Line::BetaEqAlpha));
        }
        return Ok(if beta < alpha { Phase::II } else { Phase::III });
    }
    if on(ta) {
        return Ok(Phase::Boundary(Line::TwoAlphaOne));
    }
    let split = alpha_iv_split();
    if on(alpha - split) {
        return Ok(Phase::Boundary(Line::AlphaIvSplit));
    }
    if alpha > split {
        return Ok(Phase::IVa);
    }
    if on(alpha - 0.25) {
        return Ok(Phase::Boundary(Line::AlphaQuarter));
    }
    Ok(if alpha > 0.25 { Phase::IVb } else { Phase::Ic })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentPair {
    /// Loss exponent: `P* ≍ f^{-η}`.
    pub eta: f64,
    /// Parameter exponent: `d* ≍ f^{ξ}`.
    pub xi: f64,
    pub tradeoff: String,
}

/// Table formulas of a single open phase, evaluated at any (α, β).
fn phase_formula(phase: Phase, a: f64, b: f64) -> Option<(f64, f64, &'static str)> {
    Some(match phase {
        Phase::Ia => {
            let xi = 1.0 / (2.0 * a + 1.0);
            ((1.0 - xi) * (1.0 + b / a - 1.0 / (2.0 * a)), xi, "Fpp=F0")
        }
        Phase::Ib => (a + b - 0.5, 0.5, "Fpp=F0"),
        Phase::Ic => {
            let den = a * (2.0 * b - 3.0) - 2.0 * b + 1.0;
            (-a * (2.0 * a + 2.0 * b - 1.0) / den, (1.0 - 2.0 * (a + b)) / (2.0 * den), "Fpp=F0")
        }
        Phase::II => ((2.0 * a + 2.0 * b - 1.0) / (2.0 * (a + b)), b / (a + b), "Fpp=Fac"),
        Phase::III => ((4.0 * a - 1.0) / (4.0 * a), 0.5, "Kpp=Fac"),
        Phase::IVa => (a, 0.5, "Kpp=F0"),
        Phase::IVb => {
            let den = 2.0 * a * b + a - 2.0 * b;
            (-(1.0 - 2.0 * a) * (2.0 * a + 2.0 * b - 1.0) / (2.0 * den), (a - b) / den, "Kpp=Fpp")
        }
        _ => return None,
    })
}

/// Exponents from the phase table. On a critical line the formulas of the
/// adjacent phases are evaluated at the point; they must agree.
pub fn theory_exponents(alpha: f64, beta: f64) -> Result<ExponentPair> {
    let phase = classify_phase(alpha, beta)?;
    match phase {
        Phase::NoPowerLaw | Phase::Boundary(Line::AlphaBetaHalf) => {
            Err(Error::invalid(format!("({alpha}, {beta}) is not in a power-law phase")))
        }
        Phase::Boundary(Line::Pentuple) => Err(Error::invalid("exponents at the pentuple point are not defined")),
        Phase::Boundary(line) => {
            let h = 1e3 * BOUNDARY_TOL;
            let mut found: Vec<(Phase, f64, f64, &'static str)> = Vec::new();
            for (da, db) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h), (h, h), (-h, -h), (h, -h), (-h, h)] {
                let p = classify_phase(alpha + da, beta + db)?;
                if let Some((e, x, t)) = phase_formula(p, alpha, beta) {
                    if !found.iter().any(|f| f.0 == p) {
                        found.push((p, e, x, t));
                    }
                }
            }
            if found.is_empty() {
                return Err(Error::invalid(format!("no power-law phase adjacent to {}", line.name())));
            }
            let (e0, x0) = (found[0].1, found[0].2);
            if found.iter().any(|f| (f.1 - e0).abs() > 1e-9) {
                return Err(Error::Numerical(format!("loss exponent discontinuous across {}", line.name())));
            }
            if found.iter().any(|f| (f.2 - x0).abs() > 1e-9) {
                return Err(Error::invalid(format!("parameter exponent jumps across {}; pick a side", line.name())));
            }
            let mut trade: Vec<&str> = found.iter().map(|f| f.3).collect();
            trade.dedup();
            Ok(ExponentPair { eta: e0, xi: x0, tradeoff: trade.join("|") })
        }
        p => {
            let (eta, xi, t) = phase_formula(p, alpha, beta).expect("open phase");
            Ok(ExponentPair { eta, xi, tradeoff: t.to_string() })
        }
    }
}

/// Exponents of a named phase's formulas at (α, β), without classification.
pub fn phase_exponents(phase: Phase, alpha: f64, beta: f64) -> Result<ExponentPair> {
    phase_formula(phase, alpha, beta)
        .map(|(eta, xi, t)| ExponentPair { eta, xi, tradeoff: t.to_string() })
        .ok_or_else(|| Error::invalid(format!("{phase} has no exponent formulas")))
}

/// Minimizer of `max{C0 (f/d)^{-g0} d^{-p0}, C1 (f/d)^{-g1} d^{-p1}}` over d,
/// attained where the two terms meet.
pub fn corner_tradeoff(c0: f64, g0: f64, p0: f64, c1: f64, g1: f64, p1: f64, f: f64) -> Result<(f64, f64)> {
    let den = g1 - p1 - g0 + p0;
    if den.abs() < 1e-14 {
        return Err(Error::invalid("equal effective slopes: no corner"));
    }
    if !(c0 > 0.0 && c1 > 0.0 && f > 0.0) {
        return Err(Error::invalid("constants and flops must be positive"));
    }
    let d_star = (c0 / c1).powf(1.0 / den) * f.powf((g1 - g0) / den);
    let value = c0 * f.powf(-g0) * d_star.powf(g0 - p0);
    Ok((d_star, value))
}

/// Exponent of f in `d*` from [`corner_tradeoff`].
pub fn corner_xi(g0: f64, p0: f64, g1: f64, p1: f64) -> Result<f64> {
    let den = g1 - p1 - g0 + p0;
    if den.abs() < 1e-14 {
        return Err(Error::invalid("equal effective slopes: no corner"));
    }
    Ok((g1 - g0) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LrExponents {
    pub gamma_exp: f64,
    pub xi: f64,
    pub eta: f64,
}

/// Exponents of f in the optimal γ, in d* and in the loss when γ is tuned in
/// Phase IV (1/4 < α < 1/2, 2β > 1).
pub fn optimal_lr_phase4(alpha: f64, beta: f64) -> Result<LrExponents> {
    if !(alpha > 0.25 && alpha < 0.5 && 2.0 * beta > 1.0) {
        return Err(Error::invalid("optimal learning-rate exponents need 1/4<α<1/2 and 2β>1"));
    }
    let den = 4.0 * alpha * beta + 2.0 * alpha + 2.0 * beta - 1.0;
    let s = 2.0 * alpha + 2.0 * beta - 1.0;
    Ok(LrExponents { gamma_exp: 4.0 * alpha * (alpha - beta) / den, xi: s / den, eta: -2.0 * alpha * s / den })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    F0,
    Fpp,
    Fac,
    Kpp,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::F0, Component::Fpp, Component::Fac, Component::Kpp];

    pub fn name(&self) -> &'static str {
        match self {
            Component::F0 => "F0",
            Component::Fpp => "Fpp",
            Component::Fac => "Fac",
            Component::Kpp => "Kpp",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Components contributing to the loss in each phase; all four off the
/// open phases.
pub fn active_components(phase: Phase) -> &'static [Component] {
    use Component::*;
    match phase {
        Phase::Ia | Phase::Ib | Phase::Ic => &[Fpp, F0],
        Phase::II => &[Fpp, Fac, F0],
        Phase::III => &[Fac, F0, Kpp],
        Phase::IVa | Phase::IVb => &[Fpp, F0, Kpp],
        _ => &[Fpp, Fac, F0, Kpp],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub alpha: f64,
    pub beta: f64,
    pub d: usize,
    /// `None` for infinite v (requires 2α > 1).
    pub v: Ambient,
    pub gamma: f64,
    pub batch: usize,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("alpha must be positive"));
        }
        if self.d == 0 || self.batch == 0 {
            return Err(Error::invalid("d and batch must be positive"));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid("gamma must be non-negative"));
        }
        match self.v {
            Some(v) if v <= self.d as u64 => Err(Error::invalid("v must exceed d")),
            None if 2.0 * self.alpha <= 1.0 => Err(Error::invalid("infinite v requires 2α>1")),
            None if self.alpha + self.beta <= 0.5 => Err(Error::invalid("infinite v requires α+β>1/2")),
            _ => Ok(()),
        }
    }

    pub fn ratio(&self) -> Option<f64> {
        self.v.map(|v| v as f64 / self.d as f64)
    }

    /// `γ B r`.
    pub fn time(&self, r: f64) -> f64 {
        self.gamma * self.batch as f64 * r
    }

    /// Whether `γBr` lies in `[M, d^{2α}/M]`.
    pub fn in_window(&self, r: f64, m: f64) -> bool {
        let t = self.time(r);
        t >= m && t <= (self.d as f64).powf(2.0 * self.alpha) / m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateMode {
    /// Quadrature everywhere.
    Exact,
    /// Asymptotic forms inside the window, quadrature outside.
    #[default]
    Hybrid,
}

/// Theory evaluator: κ, c_β and F₀ are computed once.
#[derive(Debug, Clone)]
pub struct Theory {
    pub params: TheoryParams,
    pub kappa: f64,
    pub c_beta: f64,
    pub f0: f64,
    pub window_m: f64,
    tol: Tolerance,
}

impl Theory {
    pub fn new(params: TheoryParams) -> Result<Self> {
        params.validate()?;
        let (a, b) = (params.alpha, params.beta);
        let kappa = solve_kappa(a, params.ratio())?.kappa;
        let c_beta = if 2.0 * b > 1.0 { power_sum(2.0 * b, 1, params.v) } else { 0.0 };
        let c = (params.d as f64).powf(2.0 * a) * kappa;
        let f0 = modal_sum_real(a, 2.0 * b, params.v, |x| x / (1.0 + c * x), |k| (-c).powi(k as i32 - 1), 1, c, 2000);
        Ok(Theory { params, kappa, c_beta, f0, window_m: DEFAULT_M, tol: Tolerance::new(1e-300, 1e-11) })
    }

    pub fn with_window(mut self, m: f64) -> Self {
        self.window_m = m;
        self
    }

    /// Component value by quadrature. K_pp needs α > 1/4 to be integrable.
    pub fn value(&self, kind: Component, r: f64) -> Result<f64> {
        let p = &self.params;
        let (a, b) = (p.alpha, p.beta);
        let c = 2.0 * p.time(r);
        let inv2a = 1.0 / (2.0 * a);
        match kind {
            Component::F0 => Ok(self.f0),
            Component::Fpp => {
                let e = (2.0 * b - 1.0) * inv2a;
                if !(e > -1.0) {
                    return Err(Error::invalid("Fpp needs α+β>1/2"));
                }
                Ok(inv2a * power_exp_integral(e, c, 0.0, 1.0, self.tol)?)
            }
            Component::Fac => {
                if !(2.0 * b > 1.0) {
                    return Ok(0.0);
                }
                let d = p.d as f64;
                let lo = d.powf(-2.0 * a);
                Ok(self.c_beta * inv2a / d * power_exp_integral(-inv2a, c, lo, 1.0, self.tol)?)
            }
            Component::Kpp => {
                if !(a > 0.25) {
                    return Err(Error::invalid("Kpp needs α>1/4"));
                }
                let g2b = p.gamma * p.gamma * p.batch as f64;
                if g2b == 0.0 {
                    return Ok(0.0);
                }
                Ok(g2b * inv2a * power_exp_integral(1.0 - inv2a, c, 0.0, 1.0, self.tol)?)
            }
        }
    }

    /// Large-d closed forms. F₀ uses the leading term of its asymptotic
    /// expansion in d.
    pub fn asymptotic(&self, kind: Component, r: f64) -> Result<f64> {
        let p = &self.params;
        let (a, b) = (p.alpha, p.beta);
        let inv2a = 1.0 / (2.0 * a);
        let t2 = 2.0 * p.time(r);
        let d = p.d as f64;
        match kind {
            Component::Fpp => {
                let s = b / a - inv2a + 1.0;
                Ok(inv2a * gamma_fn(s) * t2.powf(-s))
            }
            Component::Fac => {
                if !(2.0 * b > 1.0) {
                    return Ok(0.0);
                }
                if !(2.0 * a > 1.0) {
                    return Err(Error::invalid("Fac asymptotic needs 2α>1"));
                }
                Ok(self.c_beta * inv2a * gamma_fn(1.0 - inv2a) * t2.powf(-1.0 + inv2a) / d)
            }
            Component::Kpp => {
                if !(a > 0.25) {
                    return Err(Error::invalid("Kpp needs α>1/4"));
                }
                let g = p.gamma;
                let bb = p.batch as f64;
                Ok(inv2a * g * g * bb * (2.0 * g * bb).powf(-2.0 + inv2a) * gamma_fn(2.0 - inv2a) * r.powf(-2.0 + inv2a))
            }
            Component::F0 => {
                if 2.0 * b > 1.0 {
                    Ok(d.powf(-2.0 * a) / self.kappa * power_sum(2.0 * b, 1, p.v))
                } else {
                    let k = self.kappa;
                    let tol = Tolerance::new(1e-300, 1e-11);
                    let upper = self.params.ratio();
                    let head_end = upper.map(|u| u.min(1.0)).unwrap_or(1.0);
                    let mut total = integrate_power(-2.0 * b, |u: f64| 1.0 / (k + u.powf(2.0 * a)), head_end, tol)?.value;
                    if upper.map(|u| u > 1.0).unwrap_or(true) {
                        total += integrate_power_tail(
                            2.0 * (a + b),
                            |u: f64| if u.is_infinite() { 1.0 } else { 1.0 / (1.0 + k * u.powf(-2.0 * a)) },
                            1.0,
                            upper,
                            tol,
                        )?
                        .value;
                    }
                    Ok(d.powf(1.0 - 2.0 * (a + b)) * total)
                }
            }
        }
    }

    /// Value entering the surrogate: K_pp is divided by γB.
    fn surrogate_term(&self, kind: Component, r: f64, mode: SurrogateMode) -> Result<f64> {
        if kind == Component::F0 {
            return Ok(self.f0);
        }
        let use_asym = mode == SurrogateMode::Hybrid && self.params.in_window(r, self.window_m);
        let v = if use_asym { self.asymptotic(kind, r)? } else { self.value(kind, r)? };
        if kind == Component::Kpp {
            let gb = self.params.gamma * self.params.batch as f64;
            return Ok(if gb == 0.0 { 0.0 } else { v / gb });
        }
        Ok(v)
    }

    /// `max{F_pp, F_ac, F₀, K_pp/(γB)}` over the phase's active components.
    pub fn surrogate(&self, r: f64, mode: SurrogateMode) -> Result<(f64, Component)> {
        let phase = classify_phase(self.params.alpha, self.params.beta)?;
        let mut best = (f64::NEG_INFINITY, Component::F0);
        for &k in active_components(phase) {
            if k == Component::Kpp && !(self.params.alpha > 0.25) {
                continue;
            }
            let v = self.surrogate_term(k, r, mode)?;
            if v > best.0 {
                best = (v, k);
            }
        }
        Ok(best)
    }

    /// Dominance intervals of the surrogate's argmax (in iterations r),
    /// boundaries located by bisection in log r.
    pub fn crossover_schedule(&self) -> Result<Vec<Dominance>> {
        let p = &self.params;
        let gb = p.gamma * p.batch as f64;
        if !(gb > 0.0) {
            return Err(Error::invalid("crossover schedule needs γ>0"));
        }
        let mode = SurrogateMode::Exact;
        let t_end = 1e4 * (p.d as f64).powf(2.0 * p.alpha);
        let (lo, hi) = ((1e-3 / gb).max(1e-300).ln(), (t_end / gb).ln());
        let n = 600;
        let arg = |lr: f64| self.surrogate(lr.exp(), mode).map(|x| x.1);
        let mut out = Vec::new();
        let mut start = lo;
        let mut cur = arg(lo)?;
        let mut prev = lo;
        for i in 1..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let k = arg(x)?;
            if k != cur {
                let (mut a, mut b) = (prev, x);
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if arg(mid)? == cur {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                let edge = 0.5 * (a + b);
                out.push(Dominance { r_start: start.exp(), r_end: edge.exp(), kind: cur });
                start = edge;
                cur = k;
            }
            prev = x;
        }
        out.push(Dominance { r_start: start.exp(), r_end: f64::INFINITY, kind: cur });
        if let Some(first) = out.first_mut() {
            first.r_start = 0.0;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dominance {
    pub r_start: f64,
    pub r_end: f64,
    pub kind: Component,
}

pub fn component_value(kind: Component, params: TheoryParams, r: f64) -> Result<f64> {
    Theory::new(params)?.value(kind, r)
}

/// Asymptotic form with a flag telling whether `γBr` lies in the window.
pub fn component_asymptotic(kind: Component, params: TheoryParams, r: f64, m: f64) -> Result<(f64, bool)> {
    let t = Theory::new(params)?;
    Ok((t.asymptotic(kind, r)?, params.in_window(r, m)))
}

pub fn surrogate_loss(params: TheoryParams, r: f64) -> Result<(f64, Component)> {
    Theory::new(params)?.surrogate(r, SurrogateMode::Hybrid)
}

pub fn crossover_schedule(params: TheoryParams) -> Result<Vec<Dominance>> {
    Theory::new(params)?.crossover_schedule()
}

/// Stability threshold of the population kernel norm for `2α < 1`:
/// `(γ/2) Σ_{j≤v} j^{-2α} ≈ (γ/2) v^{1−2α}/(1−2α) = 1`.
pub fn population_threshold(alpha: f64, v: u64) -> f64 {
    2.0 * (1.0 - 2.0 * alpha) * (v as f64).powf(2.0 * alpha - 1.0)
}

/// Warnings for parameters outside the range where the sandwich theorem is
/// proved (α > 1/4, β < 1 + 2α).
pub fn theorem_warnings(alpha: f64, beta: f64) -> Vec<String> {
    let mut w = Vec::new();
    if !(alpha > 0.25) {
        w.push(format!("alpha={alpha} <= 1/4: kernel asymptotics not established"));
    }
    if !(beta < 1.0 + 2.0 * alpha) {
        w.push(format!("beta={beta} >= 1+2alpha: outside the proved range"));
    }
    w
}
