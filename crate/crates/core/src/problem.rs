//! Problem specification, instance generation, flops accounting and exact
//! population risk.

use std::io::{Read, Write};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::embedding_row;

/// Parameters of one PLRF run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub beta: f64,
    pub d: usize,
    pub v: usize,
    pub gamma: f64,
    pub batch: usize,
    pub horizon: u64,
    pub seed: u64,
}

impl ProblemSpec {
    /// Spec with the default ambient dimension `v = 4 d`, unit batch and
    /// learning rate left at zero.
    pub fn new(alpha: f64, beta: f64, d: usize) -> Self {
        ProblemSpec { alpha, beta, d, v: 4 * d, gamma: 0.0, batch: 1, horizon: 1, seed: 0 }
    }

    pub fn with_v(mut self, v: usize) -> Self {
        self.v = v;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("d must be positive"));
        }
        if self.v <= self.d {
            return Err(Error::invalid("v must exceed d"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be positive"));
        }
        if !self.beta.is_finite() {
            return Err(Error::invalid("beta must be finite"));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid("gamma must be non-negative"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(())
    }

    /// `j^{-2α}` for `j = 1..=v`.
    pub fn covariance_diag(&self) -> Vec<f64> {
        (1..=self.v).map(|j| (j as f64).powf(-2.0 * self.alpha)).collect()
    }

    /// `j^{-β}` for `j = 1..=v`.
    pub fn target(&self) -> Vec<f64> {
        (1..=self.v).map(|j| (j as f64).powf(-self.beta)).collect()
    }

    /// Risk at θ = 0: `Σ_{j≤v} j^{-2α-2β}`.
    pub fn initial_risk(&self) -> f64 {
        let s = 2.0 * (self.alpha + self.beta);
        (1..=self.v).rev().map(|j| (j as f64).powf(-s)).sum()
    }
}

/// A realized problem: embedding W (v×d), target b, covariance diagonal D and
/// the optimizer iterate θ.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub spec: ProblemSpec,
    pub w: Mat<f64>,
    pub b: Vec<f64>,
    pub d_diag: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Builds the instance for `spec`. W is a pure function of `(seed, d)` row by
/// row, so the first `v` rows agree across different ambient dimensions.
pub fn make_problem(spec: ProblemSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let (v, d) = (spec.v, spec.d);
    let mut w = Mat::<f64>::zeros(v, d);
    let mut row = vec![0.0; d];
    for j in 0..v {
        embedding_row(spec.seed, d, j, &mut row);
        for (k, x) in row.iter().enumerate() {
            w[(j, k)] = *x;
        }
    }
    Ok(ProblemInstance { spec, w, b: spec.target(), d_diag: spec.covariance_diag(), theta: vec![0.0; d] })
}

/// `P(θ) = ⟨D(Wθ − b), Wθ − b⟩`.
pub fn population_risk(instance: &ProblemInstance, theta: &[f64]) -> Result<f64> {
    let d = instance.spec.d;
    if theta.len() != d {
        return Err(Error::Dimension { expected: d, got: theta.len() });
    }
    let th = faer::ColRef::from_slice(theta);
    let wt = &instance.w * th;
    let mut acc = 0.0;
    for j in (0..instance.spec.v).rev() {
        let r = wt[j] - instance.b[j];
        acc += instance.d_diag[j] * r * r;
    }
    Ok(acc)
}

/// Flops of `r` iterations: `r · B · d` (the customary factor 6 dropped).
pub fn flops(r: u64, spec: &ProblemSpec) -> f64 {
    r as f64 * spec.batch as f64 * spec.d as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Sgd,
    Volterra,
    Theory,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Sgd => "sgd",
            Source::Volterra => "volterra",
            Source::Theory => "theory",
        }
    }
}

impl std::str::FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Source::Sgd),
            "volterra" => Ok(Source::Volterra),
            "theory" => Ok(Source::Theory),
            other => Err(Error::invalid(format!("unknown curve source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iter: u64,
    pub flops: f64,
    pub risk: f64,
}

/// Checkpointed risk of one configuration. For SGD curves `seed` is the
/// noise replicate; for Volterra curves it is the instance seed.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    pub source: Source,
    pub d: usize,
    pub seed: u64,
    pub batch: usize,
    pub points: Vec<CurvePoint>,
    pub diverged: bool,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    source: String,
    d: usize,
    seed: u64,
    iter: u64,
    flops: String,
    risk: String,
}

impl LossCurve {
    pub fn new(source: Source, d: usize, seed: u64, batch: usize) -> Self {
        LossCurve { source, d, seed, batch, points: Vec::new(), diverged: false }
    }

    pub fn push(&mut self, iter: u64, risk: f64) {
        let flops = iter as f64 * self.batch as f64 * self.d as f64;
        self.points.push(CurvePoint { iter, flops, risk });
    }

    pub fn iters(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.iter).collect()
    }

    pub fn risks(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.risk).collect()
    }

    /// Checks the curve invariants: strictly increasing iterations, finite
    /// positive risk and `flops = r·B·d`.
    pub fn check(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if w[1].iter <= w[0].iter {
                return Err(Error::invalid("iterations must be strictly increasing"));
            }
        }
        for p in &self.points {
            if !(p.risk.is_finite() && p.risk > 0.0) {
                return Err(Error::Numerical(format!("non-positive or non-finite risk at r={}", p.iter)));
            }
            if p.flops != p.iter as f64 * self.batch as f64 * self.d as f64 {
                return Err(Error::invalid("flops must equal r·B·d"));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_curves_csv(std::slice::from_ref(self), out)
    }
}

/// Writes curves with the header `source,d,seed,iter,flops,risk`; risk carries
/// 17 significant digits.
pub fn write_curves_csv<W: Write>(curves: &[LossCurve], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    for c in curves {
        for p in &c.points {
            wr.serialize(CsvRow {
                source: c.source.as_str().to_string(),
                d: c.d,
                seed: c.seed,
                iter: p.iter,
                flops: format!("{}", p.flops),
                risk: format!("{:.16e}", p.risk),
            })
            .map_err(|e| Error::Numerical(e.to_string()))?;
        }
    }
    if curves.iter().all(|c| c.points.is_empty()) {
        wr.write_record(["source", "d", "seed", "iter", "flops", "risk"]).map_err(|e| Error::Numerical(e.to_string()))?;
    }
    wr.flush().map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(())
}

/// Reads curves back, grouping rows by `(source, d, seed)` in order of first
/// appearance. The batch size is recovered from `flops / (iter · d)`.
pub fn read_curves_csv<R: Read>(input: R) -> Result<Vec<LossCurve>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut curves: Vec<LossCurve> = Vec::new();
    for row in rd.deserialize::<CsvRow>() {
        let row = row.map_err(|e| Error::invalid(format!("bad curve csv: {e}")))?;
        let source: Source = row.source.parse()?;
        let flops: f64 = row.flops.parse().map_err(|_| Error::invalid("bad flops field"))?;
        let risk: f64 = row.risk.parse().map_err(|_| Error::invalid("bad risk field"))?;
        let idx = curves.iter().position(|c| c.source == source && c.d == row.d && c.seed == row.seed);
        let idx = match idx {
            Some(i) => i,
            None => {
                curves.push(LossCurve::new(source, row.d, row.seed, 1));
                curves.len() - 1
            }
        };
        let c = &mut curves[idx];
        if row.iter > 0 {
            c.batch = (flops / (row.iter as f64 * row.d as f64)).round().max(1.0) as usize;
        }
        c.points.push(CurvePoint { iter: row.iter, flops, risk });
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ProblemSpec {
        ProblemSpec::new(0.7, 0.3, 4).with_v(8).with_seed(1)
    }

    #[test]
    fn target_is_power_law() {
        let inst = make_problem(spec()).unwrap();
        assert_eq!(inst.b.len(), 8);
        for (j, b) in inst.b.iter().enumerate() {
            let jj = (j + 1) as f64;
            assert!((b * jj.powf(0.3) - 1.0).abs() < 1e-15);
        }
        assert_eq!(inst.b[0], 1.0);
        assert!((inst.b[1] - 2f64.powf(-0.3)).abs() < 1e-16);
        assert!(inst.theta.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn same_seed_same_embedding() {
        let a = make_problem(spec()).unwrap();
        let b = make_problem(spec()).unwrap();
        for j in 0..8 {
            for k in 0..4 {
                assert_eq!(a.w[(j, k)].to_bits(), b.w[(j, k)].to_bits());
            }
        }
    }

    #[test]
    fn rejects_square() {
        let err = make_problem(ProblemSpec::new(0.7, 0.3, 8).with_v(8)).unwrap_err();
        assert!(err.to_string().contains("v must exceed d"));
        assert!(make_problem(ProblemSpec::new(0.0, 0.3, 4)).is_err());
        assert!(make_problem(ProblemSpec::new(-1.0, 0.3, 4)).is_err());
    }

    #[test]
    fn risk_at_zero_is_partial_zeta() {
        let inst = make_problem(ProblemSpec::new(0.7, 0.3, 2).with_v(4)).unwrap();
        let p = population_risk(&inst, &[0.0, 0.0]).unwrap();
        let expected = 1.0 + 0.25 + 1.0 / 9.0 + 1.0 / 16.0;
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 1.423611111111111).abs() < 1e-12);
    }

    #[test]
    fn risk_matches_entrywise_sum() {
        let s = ProblemSpec::new(0.6, 0.4, 3).with_v(5).with_seed(9);
        let inst = make_problem(s).unwrap();
        let theta = [0.3, -1.2, 0.7];
        let mut brute = 0.0;
        for j in 0..5 {
            let mut wt = 0.0;
            for k in 0..3 {
                wt += inst.w[(j, k)] * theta[k];
            }
            let jj = (j + 1) as f64;
            brute += jj.powf(-1.2) * (wt - jj.powf(-0.4)).powi(2);
        }
        let p = population_risk(&inst, &theta).unwrap();
        assert!((p - brute).abs() <= 1e-13 * brute);
        assert!(population_risk(&inst, &[0.0; 2]).is_err());
    }

    #[test]
    fn flops_examples() {
        let s = ProblemSpec::new(0.7, 0.3, 100);
        assert_eq!(flops(10_000, &s), 1e6);
        assert_eq!(flops(0, &s), 0.0);
        let s = ProblemSpec::new(0.7, 0.3, 7).with_batch(4);
        assert_eq!(flops(5, &s), 140.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut c = LossCurve::new(Source::Volterra, 10, 3, 2);
        c.push(0, 1.2345678901234567);
        c.push(5, 0.1);
        c.check().unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("source,d,seed,iter,flops,risk\n"));
        assert!(text.contains("volterra,10,3,0,0,1.2345678901234567e0"));
        let back = read_curves_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], c);
    }
}
