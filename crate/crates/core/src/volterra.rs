//! Exact expected-loss dynamics of SGD given the embedding W.
//!
//! With `K = Wᵀ D W = Σ λ_i u_i u_iᵀ` and `c = Wᵀ D b`, the expected risk obeys
//! the discrete Volterra equation `P(r) = F(r) + Σ_{s<r} K(r−1−s) P(s)` with
//! `F(r) = Σ w_i ρ_i^r + irreducible`, `K(s) = γ²B Σ λ_i² ρ_i^s` and
//! `ρ_i = 1 − 2γBλ_i + γ²B(B+1)λ_i²`.

use faer::linalg::matmul::triangular::{matmul as tri_matmul, BlockStructure};
use faer::{Accum, Mat, Par, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{LossCurve, ProblemInstance, ProblemSpec, Source};
use crate::rng::embedding_row;
use crate::sgd::CheckpointSchedule;
use crate::special::power_sum;
use crate::sums::Ambient;

/// Eigenvalues below this fraction of the largest are treated as numerically
/// zero (the Gram matrix squares the condition number of `D^{1/2}W`).
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModes {
    pub d: usize,
    pub seed: u64,
    /// Non-increasing, positive.
    pub lambdas: Vec<f64>,
    pub weights: Vec<f64>,
    pub irreducible: f64,
    /// Number of modes folded into `irreducible` for being below `RANK_TOL`.
    pub dropped: usize,
}

impl SpectralModes {
    pub fn lambda_max(&self) -> f64 {
        self.lambdas.first().copied().unwrap_or(0.0)
    }

    pub fn initial_risk(&self) -> f64 {
        self.weights.iter().rev().sum::<f64>() + self.irreducible
    }

    /// Modes from explicit eigenvalues and weights (sorted on entry).
    pub fn from_parts(d: usize, seed: u64, lambdas: Vec<f64>, weights: Vec<f64>, irreducible: f64) -> Result<Self> {
        if lambdas.len() != weights.len() {
            return Err(Error::Dimension { expected: lambdas.len(), got: weights.len() });
        }
        if lambdas.iter().any(|&l| !(l > 0.0)) || irreducible < 0.0 {
            return Err(Error::invalid("eigenvalues must be positive and the floor non-negative"));
        }
        let mut idx: Vec<usize> = (0..lambdas.len()).collect();
        idx.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
        Ok(SpectralModes {
            d,
            seed,
            lambdas: idx.iter().map(|&i| lambdas[i]).collect(),
            weights: idx.iter().map(|&i| weights[i]).collect(),
            irreducible,
            dropped: 0,
        })
    }
}

/// Modes of an instance from the eigendecomposition of `Wᵀ D W`.
pub fn empirical_modes(instance: &ProblemInstance) -> Result<SpectralModes> {
    let spec = instance.spec;
    let w = &instance.w;
    modes_from_rows(&spec, |j, row| {
        for (k, x) in row.iter_mut().enumerate() {
            *x = w[(j, k)];
        }
    })
}

/// Same modes as `empirical_modes(make_problem(spec))`, generating W row by
/// row so it is never stored.
pub fn empirical_modes_streamed(spec: &ProblemSpec) -> Result<SpectralModes> {
    spec.validate()?;
    modes_from_rows(spec, |j, row| embedding_row(spec.seed, spec.d, j, row))
}

fn modes_from_rows<R: FnMut(usize, &mut [f64])>(spec: &ProblemSpec, mut row_of: R) -> Result<SpectralModes> {
    let (v, d) = (spec.v, spec.d);
    let block = (1usize << 22) / d.max(1);
    let block = block.clamp(64, 4096);
    let mut gram = Mat::<f64>::zeros(d, d);
    let mut c = vec![0.0; d];
    let mut row = vec![0.0; d];
    let mut start = 0;
    while start < v {
        let nb = block.min(v - start);
        let mut a = Mat::<f64>::zeros(nb, d);
        for i in 0..nb {
            let j = start + i;
            row_of(j, &mut row);
            let jj = (j + 1) as f64;
            let s = jj.powf(-spec.alpha);
            let sb = s * jj.powf(-spec.beta);
            for k in 0..d {
                let x = s * row[k];
                a[(i, k)] = x;
                c[k] += x * sb;
            }
        }
        tri_matmul(
            gram.as_mut(),
            BlockStructure::TriangularLower,
            Accum::Add,
            a.transpose(),
            BlockStructure::Rectangular,
            a.as_ref(),
            BlockStructure::Rectangular,
            1.0,
            Par::Seq,
        );
        start += nb;
    }
    let evd = gram
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    drop(gram);
    let s = evd.S();
    let u = evd.U();
    let proj = u.transpose() * faer::ColRef::from_slice(&c);
    let lmax = s[d - 1].max(0.0);
    let total = spec.initial_risk();
    let mut lambdas = Vec::with_capacity(d);
    let mut weights = Vec::with_capacity(d);
    let mut dropped = 0;
    for i in (0..d).rev() {
        let l = s[i];
        if !(l > RANK_TOL * lmax) {
            dropped += 1;
            continue;
        }
        lambdas.push(l);
        weights.push(proj[i] * proj[i] / l);
    }
    let explained: f64 = weights.iter().rev().sum();
    Ok(SpectralModes { d, seed: spec.seed, lambdas, weights, irreducible: (total - explained).max(0.0), dropped })
}

/// `ρ = 1 − 2γBλ + γ²B(B+1)λ²`. Always positive; below 1 iff `γ(B+1)λ < 2`.
pub fn contraction(lambda: f64, gamma: f64, batch: usize) -> f64 {
    let b = batch as f64;
    let gl = gamma * lambda;
    1.0 - 2.0 * b * gl + b * (b + 1.0) * gl * gl
}

/// `F(r) = Σ w_i ρ_i^r + irreducible`.
pub fn forcing(modes: &SpectralModes, gamma: f64, batch: usize, r: u64) -> f64 {
    let rf = r as f64;
    let mut acc = 0.0;
    for (l, w) in modes.lambdas.iter().zip(&modes.weights).rev() {
        acc += w * contraction(*l, gamma, batch).powf(rf);
    }
    acc + modes.irreducible
}

/// `K(r) = γ²B Σ λ_i² ρ_i^r`.
pub fn kernel(modes: &SpectralModes, gamma: f64, batch: usize, r: u64) -> f64 {
    let rf = r as f64;
    let mut acc = 0.0;
    for l in modes.lambdas.iter().rev() {
        acc += l * l * contraction(*l, gamma, batch).powf(rf);
    }
    gamma * gamma * batch as f64 * acc
}

/// `‖K‖ = Σ_s K(s) = Σ_i γλ_i / (2 − γ(B+1)λ_i)`.
pub fn kernel_norm(modes: &SpectralModes, gamma: f64, batch: usize) -> Result<f64> {
    let b1 = batch as f64 + 1.0;
    let mut acc = 0.0;
    for l in modes.lambdas.iter().rev() {
        let den = 2.0 - gamma * b1 * l;
        if !(den > 0.0) {
            return Err(Error::Unstable(format!("contraction factor reaches 1 at lambda={l:e}; kernel norm diverges")));
        }
        acc += gamma * l / den;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// `2 − γ(B+1)λ_max`.
    pub gd_margin: f64,
    /// Kernel norm (infinite when a contraction factor reaches 1).
    pub norm: f64,
}

/// Stable iff `γ(B+1)λ_max < 2` and `‖K‖ < 1`.
pub fn stability_check(modes: &SpectralModes, gamma: f64, batch: usize) -> StabilityReport {
    let gd_margin = 2.0 - gamma * (batch as f64 + 1.0) * modes.lambda_max();
    let norm = kernel_norm(modes, gamma, batch).unwrap_or(f64::INFINITY);
    StabilityReport { stable: gd_margin > 0.0 && norm < 1.0, gd_margin, norm }
}

/// Largest γ with `γ(B+1) ≤ 2s/λ_max` and `‖K‖ ≤ s`, by bisection on the
/// (monotone) kernel norm.
pub fn default_learning_rate(modes: &SpectralModes, batch: usize, safety: f64) -> Result<f64> {
    if !(safety > 0.0) {
        return Err(Error::invalid("safety factor must be positive"));
    }
    if safety >= 1.0 {
        return Err(Error::invalid("safety factor must be below 1"));
    }
    if modes.lambdas.is_empty() {
        return Err(Error::invalid("no modes"));
    }
    let cap = 2.0 * safety / ((batch as f64 + 1.0) * modes.lambda_max());
    let norm = |g: f64| kernel_norm(modes, g, batch).unwrap_or(f64::INFINITY);
    if norm(cap) <= safety {
        return Ok(cap);
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm(mid) <= safety {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(lo)
}

/// Supremum of stable learning rates: the smaller of `2/((B+1)λ_max)` and
/// the root of `‖K‖(γ) = 1`.
pub fn learning_rate_threshold(modes: &SpectralModes, batch: usize) -> Result<f64> {
    if modes.lambdas.is_empty() {
        return Err(Error::invalid("no modes"));
    }
    let cap = 2.0 / ((batch as f64 + 1.0) * modes.lambda_max());
    let norm = |g: f64| kernel_norm(modes, g, batch).unwrap_or(f64::INFINITY);
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(lo)
}

/// Population kernel norm `(γ/2) Σ_{j≤v} j^{-2α} / (1 − ½ j^{-2α} γ(B+1))`;
/// `v = None` sums over all j (needs 2α > 1).
pub fn population_kernel_norm(alpha: f64, v: Ambient, gamma: f64, batch: usize) -> Result<f64> {
    let c = 0.5 * gamma * (batch as f64 + 1.0);
    if v.is_none() && !(2.0 * alpha > 1.0) {
        return Err(Error::invalid("infinite population sum needs 2α>1"));
    }
    if !(c < 1.0) {
        return Err(Error::Unstable("population kernel norm diverges".into()));
    }
    // Explicit terms up to `head`, then x/(1 − cx) = x + cx² + O(c²x³) on the tail.
    let head = match v {
        Some(v) => v,
        None => ((c * 1e10).powf(1.0 / (2.0 * alpha)).ceil() as u64).clamp(1_000, 10_000_000),
    };
    let mut acc = 0.0;
    for j in (1..=head).rev() {
        let x = (j as f64).powf(-2.0 * alpha);
        acc += x / (1.0 - c * x);
    }
    if v.is_none() {
        acc += power_sum(2.0 * alpha, head + 1, None) + c * power_sum(4.0 * alpha, head + 1, None);
    }
    Ok(0.5 * gamma * acc)
}

/// `Σ_{s=0}^{r} K(s)K(r−s) / (‖K‖ K(r))` for each r up to `horizon`.
pub fn kernel_autoconvolution_ratio(modes: &SpectralModes, gamma: f64, batch: usize, horizon: u64) -> Result<Vec<f64>> {
    let norm = kernel_norm(modes, gamma, batch)?;
    let sys = VolterraSystem::from_modes(modes, gamma, batch);
    let k: Vec<f64> = (0..=horizon).map(|r| sys.kernel_at(r)).collect();
    Ok((0..k.len())
        .map(|r| {
            let conv: f64 = (0..=r).map(|s| k[s] * k[r - s]).sum();
            conv / (norm * k[r])
        })
        .collect())
}

/// Forcing and kernel as finite sums of geometric sequences:
/// `F(r) = f₀ + Σ a_i ρ_i^r`, `K(r) = Σ c_i σ_i^r`.
#[derive(Debug, Clone)]
pub struct VolterraSystem {
    pub forcing_const: f64,
    pub forcing_amp: Vec<f64>,
    pub forcing_rate: Vec<f64>,
    pub kernel_amp: Vec<f64>,
    pub kernel_rate: Vec<f64>,
}

impl VolterraSystem {
    pub fn from_modes(modes: &SpectralModes, gamma: f64, batch: usize) -> Self {
        let rates: Vec<f64> = modes.lambdas.iter().map(|&l| contraction(l, gamma, batch)).collect();
        let g2b = gamma * gamma * batch as f64;
        VolterraSystem {
            forcing_const: modes.irreducible,
            forcing_amp: modes.weights.clone(),
            forcing_rate: rates.clone(),
            kernel_amp: modes.lambdas.iter().map(|l| g2b * l * l).collect(),
            kernel_rate: rates,
        }
    }

    pub fn forcing_at(&self, r: u64) -> f64 {
        let rf = r as f64;
        let s: f64 = self.forcing_amp.iter().zip(&self.forcing_rate).rev().map(|(a, p)| a * pow(*p, rf)).sum();
        s + self.forcing_const
    }

    pub fn kernel_at(&self, r: u64) -> f64 {
        let rf = r as f64;
        self.kernel_amp.iter().zip(&self.kernel_rate).rev().map(|(a, p)| a * pow(*p, rf)).sum()
    }

    /// `P(r)` for `r = 0..=horizon` by the mode-state recursion
    /// `S_i(r+1) = σ_i S_i(r) + P(r)`, `P(r) = F(r) + Σ c_i S_i(r)`; O(horizon · modes).
    pub fn solve(&self, horizon: u64) -> Vec<f64> {
        self.solve_with(horizon, |_, p| p)
    }

    /// `F(r) + (K∗F)(r)` for `r = 0..=horizon`.
    pub fn first_order(&self, horizon: u64) -> Vec<f64> {
        self.solve_with(horizon, |f, _| f)
    }

    fn solve_with<G: Fn(f64, f64) -> f64>(&self, horizon: u64, feed: G) -> Vec<f64> {
        let n = self.kernel_amp.len();
        let mut state = vec![0.0; n];
        let mut fpow = self.forcing_amp.clone();
        let mut out = Vec::with_capacity(horizon as usize + 1);
        for _ in 0..=horizon {
            let f = fpow.iter().rev().sum::<f64>() + self.forcing_const;
            let mut conv = 0.0;
            for i in (0..n).rev() {
                conv += self.kernel_amp[i] * state[i];
            }
            let p = f + conv;
            out.push(p);
            let input = feed(f, p);
            for i in 0..n {
                state[i] = self.kernel_rate[i] * state[i] + input;
            }
            for (a, rho) in fpow.iter_mut().zip(&self.forcing_rate) {
                *a *= rho;
            }
        }
        out
    }

    /// Direct O(horizon²) evaluation of the convolution equation.
    pub fn solve_naive(&self, horizon: u64) -> Vec<f64> {
        let t = horizon as usize;
        let f: Vec<f64> = (0..=horizon).map(|r| self.forcing_at(r)).collect();
        let k: Vec<f64> = (0..=horizon).map(|r| self.kernel_at(r)).collect();
        let mut p = vec![0.0; t + 1];
        for r in 0..=t {
            let mut acc = 0.0;
            for s in 0..r {
                acc += k[r - 1 - s] * p[s];
            }
            p[r] = f[r] + acc;
        }
        p
    }
}

fn pow(x: f64, r: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else {
        x.powf(r)
    }
}

fn curve_from(values: &[f64], modes: &SpectralModes, batch: usize, checkpoints: &[u64]) -> LossCurve {
    let mut c = LossCurve::new(Source::Volterra, modes.d, modes.seed, batch);
    for &r in checkpoints {
        c.push(r, values[r as usize]);
    }
    c
}

fn checked_system(modes: &SpectralModes, gamma: f64, batch: usize) -> Result<VolterraSystem> {
    let rep = stability_check(modes, gamma, batch);
    if !rep.stable && gamma > 0.0 {
        return Err(Error::Unstable(format!(
            "gamma={gamma} B={batch}: gd margin {:.3e}, kernel norm {:.4}",
            rep.gd_margin, rep.norm
        )));
    }
    Ok(VolterraSystem::from_modes(modes, gamma, batch))
}

/// Expected SGD risk on the schedule's checkpoints (fast recursion).
pub fn solve_volterra(modes: &SpectralModes, gamma: f64, batch: usize, schedule: &CheckpointSchedule) -> Result<LossCurve> {
    let sys = checked_system(modes, gamma, batch)?;
    let cps = schedule.iterations()?;
    let values = sys.solve(*cps.last().unwrap());
    Ok(curve_from(&values, modes, batch, &cps))
}

/// Same as [`solve_volterra`] through the quadratic-time convolution.
pub fn solve_volterra_naive(modes: &SpectralModes, gamma: f64, batch: usize, schedule: &CheckpointSchedule) -> Result<LossCurve> {
    let sys = checked_system(modes, gamma, batch)?;
    let cps = schedule.iterations()?;
    let values = sys.solve_naive(*cps.last().unwrap());
    Ok(curve_from(&values, modes, batch, &cps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichPoint {
    pub r: u64,
    pub forcing: f64,
    pub lower: f64,
    pub value: f64,
    pub upper_ratio: f64,
}

/// Floor for the `(K∗F)` denominator.
pub const SANDWICH_EPS: f64 = 1e-300;

/// Lower bound `F + K∗F`, exact value `P` and `(P − F)/(K∗F)` at every
/// checkpoint `r ≥ 1` of the schedule.
pub fn sandwich_series(modes: &SpectralModes, gamma: f64, batch: usize, schedule: &CheckpointSchedule) -> Result<Vec<SandwichPoint>> {
    let sys = checked_system(modes, gamma, batch)?;
    let cps = schedule.iterations()?;
    let t = *cps.last().unwrap();
    let p = sys.solve(t);
    let lower = sys.first_order(t);
    let f: Vec<f64> = {
        let mut fpow = sys.forcing_amp.clone();
        let mut out = Vec::with_capacity(t as usize + 1);
        for _ in 0..=t {
            out.push(fpow.iter().rev().sum::<f64>() + sys.forcing_const);
            for (a, rho) in fpow.iter_mut().zip(&sys.forcing_rate) {
                *a *= rho;
            }
        }
        out
    };
    Ok(cps
        .iter()
        .filter(|&&r| r >= 1)
        .map(|&r| {
            let i = r as usize;
            let kf = lower[i] - f[i];
            SandwichPoint { r, forcing: f[i], lower: lower[i], value: p[i], upper_ratio: (p[i] - f[i]) / kf.max(SANDWICH_EPS) }
        })
        .collect())
}

/// `(lower, value, upper_ratio)` at a single iteration `r ≥ 1`.
pub fn sandwich_gap(modes: &SpectralModes, gamma: f64, batch: usize, r: u64) -> Result<(f64, f64, f64)> {
    if r == 0 {
        return Err(Error::invalid("sandwich bound needs r >= 1"));
    }
    let s = sandwich_series(modes, gamma, batch, &CheckpointSchedule::linear(r, 1, r))?;
    let last = s.last().expect("r >= 1 present");
    Ok((last.lower, last.value, last.upper_ratio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_problem, population_risk};

    fn single(lambda: f64, w: f64, irr: f64) -> SpectralModes {
        SpectralModes::from_parts(1, 0, vec![lambda], vec![w], irr).unwrap()
    }

    #[test]
    fn explicit_two_by_one() {
        let spec = ProblemSpec::new(0.7, 0.4, 1).with_v(2);
        let mut inst = make_problem(spec).unwrap();
        inst.w[(0, 0)] = 1.0;
        inst.w[(1, 0)] = 0.0;
        let m = empirical_modes(&inst).unwrap();
        assert!((m.lambdas[0] - 1.0).abs() < 1e-15);
        assert!((m.weights[0] - 1.0).abs() < 1e-15);
        let d22b2 = 2f64.powf(-1.4) * 2f64.powf(-0.8);
        assert!((m.irreducible - d22b2).abs() < 1e-15);
    }

    #[test]
    fn modes_decompose_initial_risk() {
        for seed in 0..4 {
            let spec = ProblemSpec::new(0.6, 0.45, 6).with_v(20).with_seed(seed);
            let inst = make_problem(spec).unwrap();
            let m = empirical_modes(&inst).unwrap();
            let p0 = population_risk(&inst, &[0.0; 6]).unwrap();
            assert!((m.initial_risk() - p0).abs() <= 1e-10 * p0);
            assert!(m.lambdas.windows(2).all(|w| w[0] >= w[1]));
            assert!(m.irreducible >= 0.0);
            let streamed = empirical_modes_streamed(&spec).unwrap();
            for (a, b) in m.lambdas.iter().zip(&streamed.lambdas) {
                assert!((a - b).abs() < 1e-13 * m.lambda_max());
            }
        }
    }

    #[test]
    fn forcing_at_zero_is_population_risk() {
        let spec = ProblemSpec::new(0.9, 0.3, 3).with_v(5).with_seed(17);
        let inst = make_problem(spec).unwrap();
        let m = empirical_modes(&inst).unwrap();
        let p0 = population_risk(&inst, &[0.0; 3]).unwrap();
        assert!((forcing(&m, 0.4, 2, 0) - p0).abs() < 1e-12 * p0);
    }

    #[test]
    fn forcing_limits() {
        let m = single(1.0, 1.0, 0.0);
        assert!((forcing(&m, 0.5, 1, 2) - 0.25).abs() < 1e-15);
        let m = single(0.7, 0.3, 0.05);
        assert!((forcing(&m, 0.5, 1, 0) - 0.35).abs() < 1e-15);
        assert!((forcing(&m, 0.5, 1, 100_000) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn kernel_examples() {
        let m = single(1.0, 1.0, 0.0);
        assert!((kernel(&m, 0.5, 1, 0) - 0.25).abs() < 1e-15);
        let spec = ProblemSpec::new(0.7, 0.3, 8).with_v(32).with_seed(1);
        let m = empirical_modes(&make_problem(spec).unwrap()).unwrap();
        let g = default_learning_rate(&m, 1, 0.5).unwrap();
        let mut prev = f64::INFINITY;
        for r in 0..50 {
            let k = kernel(&m, g, 1, r);
            assert!(k < prev);
            prev = k;
        }
    }

    #[test]
    fn kernel_matches_dense_matrix_powers() {
        let spec = ProblemSpec::new(0.8, 0.3, 3).with_v(7).with_seed(23);
        let inst = make_problem(spec).unwrap();
        let m = empirical_modes(&inst).unwrap();
        let (gamma, b) = (0.3, 2usize);
        // Dense v×v K̂ = D^{1/2} W Wᵀ D^{1/2}.
        let v = 7;
        let sd: Vec<f64> = inst.d_diag.iter().map(|x| x.sqrt()).collect();
        let a = Mat::<f64>::from_fn(v, 3, |j, k| sd[j] * inst.w[(j, k)]);
        let khat = &a * a.transpose();
        let bf = b as f64;
        let eye = Mat::<f64>::identity(v, v);
        let step = &eye - &khat * (2.0 * gamma * bf) + (&khat * &khat) * (gamma * gamma * bf * (bf + 1.0));
        let mut pw = eye.clone();
        for r in 0..6u64 {
            let mat = (&khat * &khat) * &pw;
            let mut tr = 0.0;
            for i in 0..v {
                tr += mat[(i, i)];
            }
            let want = gamma * gamma * bf * tr;
            let got = kernel(&m, gamma, b, r);
            assert!((got - want).abs() < 1e-12 * want.abs().max(1e-300), "r={r}: {got} vs {want}");
            pw = &pw * &step;
        }
    }

    #[test]
    fn kernel_norm_examples() {
        let m = single(1.0, 1.0, 0.0);
        assert_eq!(kernel_norm(&m, 0.5, 1).unwrap(), 0.5);
        let near = kernel_norm(&m, 1.0 - 1e-9, 1).unwrap();
        assert!(near > 1e8);
        assert!(kernel_norm(&m, 1.0, 1).is_err());
        // norm equals the kernel mass
        let mass: f64 = (0..2000).map(|r| kernel(&m, 0.3, 1, r)).sum();
        assert!((mass - kernel_norm(&m, 0.3, 1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn threshold_single_mode() {
        // γ/(2 − 2γ) = 1 at γ = 2/3, below the cap 2/(B+1) = 1.
        let g = learning_rate_threshold(&single(1.0, 1.0, 0.0), 1).unwrap();
        assert!((g - 2.0 / 3.0).abs() < 1e-12);
        let g = learning_rate_threshold(&single(1.0, 1.0, 0.0), 3).unwrap();
        assert!((g - 0.4).abs() < 1e-12);
    }

    #[test]
    fn population_norm_matches_diagonal_modes() {
        // With W = identity embedding the modes are exactly j^{-2α}.
        let lambdas: Vec<f64> = (1..=300).map(|j| (j as f64).powf(-1.4)).collect();
        let m = SpectralModes::from_parts(300, 0, lambdas.clone(), vec![0.0; 300], 0.0).unwrap();
        let a = kernel_norm(&m, 0.3, 1).unwrap();
        let b = population_kernel_norm(0.7, Some(300), 0.3, 1).unwrap();
        assert!((a / b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn population_norm_infinite_tail() {
        // Tail beyond v = 10^5 against a direct sum to 10^7 plus an integral remainder.
        let finite = population_kernel_norm(0.9, Some(100_000), 0.5, 1).unwrap();
        let inf = population_kernel_norm(0.9, None, 0.5, 1).unwrap();
        let c = 0.5;
        let mid: f64 = (100_001..=10_000_000u64).map(|j| {
            let x = (j as f64).powf(-1.8);
            x / (1.0 - c * x)
        }).sum();
        let rest = (1e7f64 + 0.5).powf(-0.8) / 0.8;
        let oracle = finite + 0.25 * (mid + rest);
        assert!((inf / oracle - 1.0).abs() < 1e-9, "{inf} {oracle}");
        assert!(population_kernel_norm(0.4, None, 0.1, 1).is_err());
    }

    #[test]
    fn kernel_is_subexponential_in_window() {
        let spec = ProblemSpec::new(0.7, 0.7, 60).with_seed(3);
        let modes = empirical_modes_streamed(&spec).unwrap();
        let g = 0.5 * learning_rate_threshold(&modes, 1).unwrap();
        let ratios = kernel_autoconvolution_ratio(&modes, g, 1, 400).unwrap();
        let lo = (50.0 / g).ceil() as usize;
        for (r, q) in ratios.iter().enumerate().skip(lo) {
            assert!(*q <= 2.5, "r={r} ratio={q}");
        }
    }

    #[test]
    fn stability_examples() {
        let m = single(1.0, 1.0, 0.0);
        let r = stability_check(&m, 0.0, 1);
        assert!(r.stable && r.norm == 0.0);
        let r = stability_check(&m, 1.1, 1);
        assert!(!r.stable && r.gd_margin < 0.0);
        let r = stability_check(&m, 0.9, 1);
        assert!(!r.stable && r.gd_margin > 0.0);
        assert!((r.norm - 4.5).abs() < 1e-12);
    }

    #[test]
    fn default_rate_single_mode() {
        let m = single(1.0, 1.0, 0.0);
        let g = default_learning_rate(&m, 1, 0.5).unwrap();
        assert!((g - 0.5).abs() < 1e-12, "{g}");
        assert!((kernel_norm(&m, g, 1).unwrap() - 0.5).abs() < 1e-12);
        assert!(default_learning_rate(&m, 1, 0.0).is_err());
    }

    #[test]
    fn constant_forcing_hook() {
        let sys = VolterraSystem {
            forcing_const: 1.0,
            forcing_amp: vec![],
            forcing_rate: vec![],
            kernel_amp: vec![0.5],
            kernel_rate: vec![0.0],
        };
        let p = sys.solve(10);
        assert_eq!(&p[..3], &[1.0, 1.5, 1.75]);
        for (r, v) in p.iter().enumerate() {
            assert!((v - (2.0 - 0.5f64.powi(r as i32))).abs() < 1e-15);
        }
        assert_eq!(sys.solve_naive(10), p);
    }

    #[test]
    fn zero_rate_gives_forcing() {
        let spec = ProblemSpec::new(0.7, 0.6, 10).with_v(40).with_seed(4);
        let m = empirical_modes(&make_problem(spec).unwrap()).unwrap();
        let c = solve_volterra(&m, 1e-9, 1, &CheckpointSchedule::geometric(100)).unwrap();
        for p in &c.points {
            let f = forcing(&m, 1e-9, 1, p.iter);
            assert!((p.risk - f).abs() < 1e-12 * f);
        }
    }

    #[test]
    fn fast_equals_naive() {
        let spec = ProblemSpec::new(0.7, 0.9, 50).with_v(200).with_seed(8);
        let m = empirical_modes(&make_problem(spec).unwrap()).unwrap();
        let g = default_learning_rate(&m, 1, 0.5).unwrap();
        let sched = CheckpointSchedule::linear(1, 1, 2000);
        let a = solve_volterra(&m, g, 1, &sched).unwrap();
        let b = solve_volterra_naive(&m, g, 1, &sched).unwrap();
        for (x, y) in a.points.iter().zip(&b.points) {
            assert!((x.risk - y.risk).abs() <= 1e-10 * y.risk);
        }
    }

    #[test]
    fn sandwich_collapses_for_tiny_rate() {
        let spec = ProblemSpec::new(0.7, 0.9, 20).with_v(80).with_seed(8);
        let m = empirical_modes(&make_problem(spec).unwrap()).unwrap();
        let (lower, value, ratio) = sandwich_gap(&m, 1e-4, 1, 50).unwrap();
        assert!(lower <= value * (1.0 + 1e-12));
        assert!((ratio - 1.0).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn unstable_solve_rejected() {
        let m = single(1.0, 1.0, 0.0);
        assert!(matches!(solve_volterra(&m, 0.9, 1, &CheckpointSchedule::geometric(10)), Err(Error::Unstable(_))));
    }
}
