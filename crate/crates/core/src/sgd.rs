//! One-pass minibatch SGD on a PLRF instance with exact risk checkpoints.
//!
//! Replicates sharing one instance are advanced together: the products
//! `Wᵀx` for a block of future steps do not depend on θ, so they are formed
//! by a single matrix product and the θ updates then run step by step.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{population_risk, LossCurve, ProblemInstance, Source};
use crate::rng::NoiseStream;
use crate::volterra::{stability_check, SpectralModes};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleKind {
    Geometric { ratio: f64 },
    Linear { step: u64 },
}

/// Iterations at which the risk is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSchedule {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    pub first: u64,
    pub max: u64,
}

impl CheckpointSchedule {
    /// Geometric ladder with ratio 1.1 from r = 1.
    pub fn geometric(max: u64) -> Self {
        CheckpointSchedule { kind: ScheduleKind::Geometric { ratio: 1.1 }, first: 1, max }
    }

    pub fn linear(first: u64, step: u64, max: u64) -> Self {
        CheckpointSchedule { kind: ScheduleKind::Linear { step }, first, max }
    }

    pub fn validate(&self) -> Result<()> {
        if self.first == 0 {
            return Err(Error::invalid("schedule must start at r >= 1"));
        }
        match self.kind {
            ScheduleKind::Geometric { ratio } if !(ratio > 1.0) => Err(Error::invalid("geometric ratio must exceed 1")),
            ScheduleKind::Linear { step: 0 } => Err(Error::invalid("linear step must be at least 1")),
            _ => Ok(()),
        }
    }

    /// Strictly increasing iterations, starting with 0 and ending at `max`.
    pub fn iterations(&self) -> Result<Vec<u64>> {
        self.validate()?;
        let mut out = vec![0u64];
        match self.kind {
            ScheduleKind::Geometric { ratio } => {
                let mut x = self.first as f64;
                while x.round() <= self.max as f64 {
                    let r = x.round() as u64;
                    if r > *out.last().unwrap() {
                        out.push(r);
                    }
                    x *= ratio;
                }
            }
            ScheduleKind::Linear { step } => {
                let mut r = self.first;
                while r <= self.max {
                    out.push(r);
                    r += step;
                }
            }
        }
        if *out.last().unwrap() < self.max {
            out.push(self.max);
        }
        Ok(out)
    }
}

/// How a run establishes that (γ, B) is stable.
#[derive(Debug, Clone, Copy)]
pub enum Gate<'a> {
    /// Check against the spectrum of the instance.
    Modes(&'a SpectralModes),
    /// Caller takes responsibility; divergence is still detected.
    Override,
}

/// Risk above this multiple of the initial risk counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct SgdRun {
    pub curve: LossCurve,
    pub theta: Vec<f64>,
}

/// One SGD update from `theta` with the given samples `xs` (each of length v):
/// `θ ← θ − γ Σ_i Wᵀx_i (⟨Wᵀx_i, θ⟩ − ⟨x_i, b⟩)`.
pub fn sgd_step(instance: &ProblemInstance, theta: &mut [f64], xs: &[Vec<f64>]) -> Result<()> {
    let (v, d) = (instance.spec.v, instance.spec.d);
    if theta.len() != d {
        return Err(Error::Dimension { expected: d, got: theta.len() });
    }
    let gamma = instance.spec.gamma;
    let mut delta = vec![0.0; d];
    for x in xs {
        if x.len() != v {
            return Err(Error::Dimension { expected: v, got: x.len() });
        }
        let xc = faer::ColRef::from_slice(x);
        let g = instance.w.transpose() * xc;
        let xb: f64 = x.iter().zip(&instance.b).map(|(a, b)| a * b).sum();
        let pred: f64 = (0..d).map(|k| g[k] * theta[k]).sum();
        let e = pred - xb;
        for k in 0..d {
            delta[k] += g[k] * e;
        }
    }
    for k in 0..d {
        theta[k] -= gamma * delta[k];
    }
    Ok(())
}

fn gate_check(instance: &ProblemInstance, gate: Gate<'_>) -> Result<()> {
    if let Gate::Modes(modes) = gate {
        let rep = stability_check(modes, instance.spec.gamma, instance.spec.batch);
        if !rep.stable {
            return Err(Error::Unstable(format!(
                "gamma={} B={} fails the stability check (gd margin {:.3e}, kernel norm {:.4})",
                instance.spec.gamma, instance.spec.batch, rep.gd_margin, rep.norm
            )));
        }
    }
    Ok(())
}

/// Runs replicate 0 and leaves the final iterate in `instance.theta`.
pub fn run_sgd(instance: &mut ProblemInstance, schedule: &CheckpointSchedule, gate: Gate<'_>) -> Result<LossCurve> {
    let mut runs = run_sgd_replicates(instance, schedule, &[0], gate)?;
    let run = runs.pop().expect("one replicate");
    instance.theta = run.theta;
    Ok(run.curve)
}

/// Runs independent SGD replicates on a shared instance. Replicate `k` draws
/// its samples from the stream keyed by `(seed, d, k)`, so results do not
/// depend on which replicates run together.
pub fn run_sgd_replicates(
    instance: &ProblemInstance,
    schedule: &CheckpointSchedule,
    replicates: &[u64],
    gate: Gate<'_>,
) -> Result<Vec<SgdRun>> {
    let spec = instance.spec;
    spec.validate()?;
    gate_check(instance, gate)?;
    let checkpoints: Vec<u64> = schedule.iterations()?.into_iter().filter(|&r| r <= spec.horizon).collect();
    let last = *checkpoints.last().unwrap_or(&0);
    let (v, d, bsz) = (spec.v, spec.d, spec.batch);
    let nrep = replicates.len();
    let p0 = population_risk(instance, &vec![0.0; d])?;

    let mut curves: Vec<LossCurve> = replicates
        .iter()
        .map(|&k| {
            let mut c = LossCurve::new(Source::Sgd, d, k, bsz);
            c.push(0, p0);
            c
        })
        .collect();
    let mut streams: Vec<NoiseStream> = replicates.iter().map(|&k| NoiseStream::new(spec.seed, d, k)).collect();
    let mut thetas = Mat::<f64>::zeros(d, nrep);
    let mut active = vec![true; nrep];

    if last == 0 || spec.gamma == 0.0 {
        // No movement: every checkpoint sees the initial risk.
        for c in curves.iter_mut() {
            for &r in checkpoints.iter().skip(1) {
                c.push(r, p0);
            }
        }
        return Ok(curves.into_iter().map(|curve| SgdRun { curve, theta: vec![0.0; d] }).collect());
    }

    let sqrt_d: Vec<f64> = instance.d_diag.iter().map(|x| x.sqrt()).collect();
    let wt = Mat::<f64>::from_fn(v, d, |j, k| sqrt_d[j] * instance.w[(j, k)]);
    let bt: Vec<f64> = instance.b.iter().zip(&sqrt_d).map(|(b, s)| b * s).collect();
    let bt_col = faer::ColRef::from_slice(&bt);

    let per_step = nrep * bsz;
    let block_steps = ((8_000_000 / (v * per_step).max(1)).max(1) as u64).min(1024);
    let gamma = spec.gamma;
    let mut next_cp = 1usize;
    let mut r = 0u64;
    let mut resid = vec![0.0; bsz];
    let mut zbuf: Vec<f64> = Vec::new();
    let mut g = Mat::<f64>::zeros(d, 0);

    while r < last && active.iter().any(|&a| a) {
        let steps = block_steps.min(last - r) as usize;
        let n = steps * per_step;
        zbuf.clear();
        zbuf.resize(v * n, 0.0);
        for t in 0..steps {
            for k in 0..nrep {
                if !active[k] {
                    continue;
                }
                for i in 0..bsz {
                    let c = (t * nrep + k) * bsz + i;
                    streams[k].fill(&mut zbuf[c * v..(c + 1) * v]);
                }
            }
        }
        let z = faer::MatRef::from_column_major_slice(&zbuf, v, n);
        g.resize_with(d, n, |_, _| 0.0);
        matmul(g.as_mut(), Accum::Replace, wt.transpose(), z, 1.0, Par::Seq);
        let y = z.transpose() * bt_col;

        for t in 0..steps {
            for k in 0..nrep {
                if !active[k] {
                    continue;
                }
                let mut th = thetas.col_mut(k);
                for i in 0..bsz {
                    let c = (t * nrep + k) * bsz + i;
                    let gc = g.col(c);
                    let mut pred = 0.0;
                    for q in 0..d {
                        pred += gc[q] * th[q];
                    }
                    resid[i] = pred - y[c];
                }
                for i in 0..bsz {
                    let c = (t * nrep + k) * bsz + i;
                    let gc = g.col(c);
                    let s = gamma * resid[i];
                    for q in 0..d {
                        th[q] -= s * gc[q];
                    }
                }
            }
            r += 1;
            if next_cp < checkpoints.len() && checkpoints[next_cp] == r {
                let risks = batch_risk(&wt, &bt, &thetas);
                for k in 0..nrep {
                    if !active[k] {
                        continue;
                    }
                    let p = risks[k];
                    if !p.is_finite() || p > DIVERGENCE_FACTOR * p0 {
                        curves[k].diverged = true;
                        active[k] = false;
                    } else {
                        curves[k].push(r, p);
                    }
                }
                next_cp += 1;
            }
        }
    }

    Ok(curves
        .into_iter()
        .enumerate()
        .map(|(k, curve)| SgdRun { curve, theta: thetas.col(k).iter().copied().collect() })
        .collect())
}

/// `‖D^{1/2}(Wθ_k − b)‖²` for every column θ_k.
fn batch_risk(wt: &Mat<f64>, bt: &[f64], thetas: &Mat<f64>) -> Vec<f64> {
    let pred = wt * thetas;
    (0..thetas.ncols())
        .map(|k| {
            let c = pred.col(k);
            let mut acc = 0.0;
            for j in (0..bt.len()).rev() {
                let e = c[j] - bt[j];
                acc += e * e;
            }
            acc
        })
        .collect()
}
