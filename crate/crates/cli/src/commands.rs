use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use plrf::frontier::{self, IsoFlopSlice, WindowFit};
use plrf::problem::{read_curves_csv, LossCurve, Source};
use plrf::sgd::{run_sgd_replicates, CheckpointSchedule, Gate};
use plrf::spectrum::{density_curve, ContourHeight, Dims};
use plrf::theory::{classify_phase, theorem_warnings, theory_exponents, Component, SurrogateMode, Theory, TheoryParams};
use plrf::volterra::{empirical_modes, empirical_modes_streamed, kernel_norm, solve_volterra, solve_volterra_naive};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{config_err, Manifest, RunRecord, SweepConfig};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_curve(path: &Path, curve: &LossCurve) -> Result<()> {
    let mut w = create(path)?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn prepare(cfg: &SweepConfig, jobs: Option<usize>) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    if let Some(n) = jobs {
        // Ignored when a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// SGD curves for every `(d, seed)`, one CSV each, plus a manifest.
pub fn cmd_simulate(cfg: &SweepConfig, jobs: Option<usize>) -> Result<PathBuf> {
    prepare(cfg, jobs)?;
    let hash = cfg.hash();
    let short = cfg.short_hash();
    let seeds: Vec<u64> = (0..cfg.seeds).collect();
    let runs: Vec<RunRecord> = cfg
        .d_list
        .par_iter()
        .map(|&d| -> Result<RunRecord> {
            let mut inst = plrf::make_problem(cfg.spec(d, 0.0))?;
            let modes = empirical_modes(&inst)?;
            let gamma = cfg.gamma_rule.resolve(&modes, cfg.batch)?;
            inst.spec.gamma = gamma;
            let norm = kernel_norm(&modes, gamma, cfg.batch).unwrap_or(f64::INFINITY);
            let sched = cfg.schedule.with_max(inst.spec.horizon);
            eprintln!("simulate: d={d} gamma={gamma:.6e} seeds={}", seeds.len());
            let out = run_sgd_replicates(&inst, &sched, &seeds, Gate::Modes(&modes))?;
            let mut files = Vec::new();
            for run in out {
                let name = format!("sgd_d{d}_s{}_{short}.csv", run.curve.seed);
                write_curve(&cfg.out_dir.join(&name), &run.curve)?;
                if run.curve.diverged {
                    eprintln!("simulate: d={d} seed={} diverged", run.curve.seed);
                }
                files.push(name);
            }
            Ok(RunRecord {
                d,
                v: inst.spec.v,
                horizon: inst.spec.horizon,
                gamma,
                lambda_max: modes.lambda_max(),
                kernel_norm: norm,
                files,
            })
        })
        .collect::<Result<_>>()?;
    Manifest { command: "simulate".into(), manifest_hash: hash, config: cfg.clone(), runs }.write(&cfg.out_dir)
}

/// Volterra curves, one per d, plus a manifest.
pub fn cmd_volterra(cfg: &SweepConfig, naive: bool, jobs: Option<usize>) -> Result<PathBuf> {
    prepare(cfg, jobs)?;
    let hash = cfg.hash();
    let short = cfg.short_hash();
    let runs: Vec<RunRecord> = cfg
        .d_list
        .par_iter()
        .map(|&d| -> Result<RunRecord> {
            let spec = cfg.spec(d, 0.0);
            let modes = empirical_modes_streamed(&spec)?;
            let gamma = cfg.gamma_rule.resolve(&modes, cfg.batch)?;
            let norm = kernel_norm(&modes, gamma, cfg.batch).unwrap_or(f64::INFINITY);
            let sched = cfg.schedule.with_max(spec.horizon);
            eprintln!("volterra: d={d} gamma={gamma:.6e} horizon={}", spec.horizon);
            let curve = if naive {
                solve_volterra_naive(&modes, gamma, cfg.batch, &sched)?
            } else {
                solve_volterra(&modes, gamma, cfg.batch, &sched)?
            };
            let name = format!("volterra_d{d}_{short}.csv");
            write_curve(&cfg.out_dir.join(&name), &curve)?;
            Ok(RunRecord { d, v: spec.v, horizon: spec.horizon, gamma, lambda_max: modes.lambda_max(), kernel_norm: norm, files: vec![name] })
        })
        .collect::<Result<_>>()?;
    Manifest { command: "volterra".into(), manifest_hash: hash, config: cfg.clone(), runs }.write(&cfg.out_dir)
}

#[derive(Debug, Clone)]
pub struct TheoryArgs {
    pub params: TheoryParams,
    pub horizon: u64,
    pub exact: bool,
    pub window_m: f64,
}

/// CSV `r,F0,Fpp,Fac,Kpp,surrogate,argmax` on a geometric r grid.
pub fn cmd_theory<W: Write>(args: &TheoryArgs, out: W) -> Result<()> {
    let th = Theory::new(args.params)?.with_window(args.window_m);
    let mode = if args.exact { SurrogateMode::Exact } else { SurrogateMode::Hybrid };
    // K_pp is not integrable for α ≤ 1/4.
    let kpp_ok = args.params.alpha > 0.25;
    let mut wr = plain_csv(out);
    wr.write_record(["r", "F0", "Fpp", "Fac", "Kpp", "surrogate", "argmax"])?;
    for r in CheckpointSchedule::geometric(args.horizon).iterations()? {
        let rf = r as f64;
        let fpp = th.value(Component::Fpp, rf)?;
        let fac = th.value(Component::Fac, rf)?;
        let kpp = if kpp_ok { th.value(Component::Kpp, rf)? } else { f64::NAN };
        let (s, k) = th.surrogate(rf, mode)?;
        wr.write_record([
            r.to_string(),
            format!("{:.16e}", th.f0),
            format!("{fpp:.16e}"),
            format!("{fac:.16e}"),
            format!("{kpp:.16e}"),
            format!("{s:.16e}"),
            k.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

fn plain_csv<W: Write>(out: W) -> csv::Writer<W> {
    csv::Writer::from_writer(out)
}

#[derive(Debug, Clone)]
pub struct SpectrumArgs {
    pub alpha: f64,
    pub beta: f64,
    pub d: usize,
    pub v: Option<u64>,
    pub u_min: Option<f64>,
    pub u_max: f64,
    pub points: usize,
    pub eta: Option<f64>,
}

/// CSV `u,eta,trace_density,target_density` on a log-spaced u grid.
pub fn cmd_spectrum<W: Write>(args: &SpectrumArgs, out: W) -> Result<()> {
    let dims = Dims::new(args.alpha, args.d, args.v)?;
    let u_min = args.u_min.unwrap_or(0.1 * (args.d as f64).powf(-2.0 * args.alpha));
    if !(u_min > 0.0 && args.u_max > u_min) {
        return Err(config_err("need 0 < u_min < u_max"));
    }
    if args.points < 2 {
        return Err(config_err("need at least 2 points"));
    }
    let us = frontier::geometric_grid(u_min, args.u_max, args.points);
    let dens = density_curve(&dims, args.beta, &us, ContourHeight::Fixed { eta: args.eta })?;
    let mut wr = plain_csv(out);
    wr.write_record(["u", "eta", "trace_density", "target_density"])?;
    for p in dens {
        wr.write_record([
            format!("{:.16e}", p.u),
            format!("{:.16e}", p.eta),
            format!("{:.16e}", p.trace_density),
            format!("{:.16e}", p.target_density),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// JSON `{alpha, beta, phase, eta, xi, tradeoff}`; exponents are null off
/// the power-law phases.
pub fn cmd_phase(alpha: f64, beta: f64) -> Result<serde_json::Value> {
    let phase = classify_phase(alpha, beta)?;
    let mut v = json!({ "alpha": alpha, "beta": beta, "phase": phase.to_string() });
    match theory_exponents(alpha, beta) {
        Ok(e) => {
            v["eta"] = json!(e.eta);
            v["xi"] = json!(e.xi);
            v["tradeoff"] = json!(e.tradeoff);
        }
        Err(err) => {
            v["eta"] = serde_json::Value::Null;
            v["xi"] = serde_json::Value::Null;
            v["tradeoff"] = serde_json::Value::Null;
            v["note"] = json!(err.to_string());
        }
    }
    let warnings = theorem_warnings(alpha, beta);
    if !warnings.is_empty() {
        v["warnings"] = json!(warnings);
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    Zero,
    One,
    Two,
    All,
}

impl std::str::FromStr for Approach {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "0" => Ok(Approach::Zero),
            "1" => Ok(Approach::One),
            "2" => Ok(Approach::Two),
            "all" => Ok(Approach::All),
            _ => Err(format!("approach must be 0, 1, 2 or all, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrontierArgs {
    pub inputs: Vec<String>,
    pub window: (f64, f64),
    pub slices: usize,
    pub approach: Approach,
    pub source: Option<Source>,
    pub sliding: Option<usize>,
}

#[derive(Debug, Serialize)]
struct EtaReport {
    a: f64,
    b: f64,
    residual: f64,
    eta_hat: f64,
}

#[derive(Debug, Serialize)]
struct XiReport {
    approach1: Option<serde_json::Value>,
    approach2: Option<serde_json::Value>,
    approach0_series: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    errors: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Serialize)]
struct FrontierReport {
    config: serde_json::Value,
    eta: EtaReport,
    xi: XiReport,
    slices: Vec<IsoFlopSlice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sliding: Option<Vec<WindowFit>>,
}

pub fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in patterns {
        if p.contains(['*', '?', '[']) {
            let mut hits: Vec<PathBuf> = glob::glob(p).map_err(|e| config_err(format!("bad pattern {p}: {e}")))?.filter_map(|r| r.ok()).collect();
            hits.sort();
            out.extend(hits);
        } else {
            out.push(PathBuf::from(p));
        }
    }
    if out.is_empty() {
        return Err(config_err("no input curves matched"));
    }
    Ok(out)
}

pub fn load_curves(paths: &[PathBuf]) -> Result<Vec<LossCurve>> {
    let mut curves = Vec::new();
    for p in paths {
        let f = File::open(p).map_err(|e| config_err(format!("cannot open {}: {e}", p.display())))?;
        curves.extend(read_curves_csv(f).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(curves)
}

/// Hash tags carried in curve file names (`..._<12 hex>.csv`).
fn manifest_hashes(paths: &[PathBuf]) -> Vec<String> {
    let mut out: Vec<String> = paths
        .iter()
        .filter_map(|p| p.file_stem()?.to_str()?.rsplit('_').next().map(str::to_string))
        .filter(|h| h.len() == 12 && h.chars().all(|c| c.is_ascii_hexdigit()))
        .collect();
    out.sort();
    out.dedup();
    out
}

pub fn cmd_frontier(args: &FrontierArgs) -> Result<serde_json::Value> {
    let paths = expand_inputs(&args.inputs)?;
    let mut curves = load_curves(&paths)?;
    if let Some(src) = args.source {
        curves.retain(|c| c.source == src);
    }
    let mut sources: Vec<Source> = curves.iter().map(|c| c.source).collect();
    sources.dedup();
    sources.sort_by_key(|s| s.as_str());
    sources.dedup();
    if sources.len() > 1 {
        return Err(config_err("curves from several sources; pick one with --source"));
    }
    let slices = frontier::isoflop_slices(&curves, args.window, args.slices)?;
    let eta = frontier::frontier_eta(&slices)?;
    // Under `all`, an approach that fails is reported as null with its error.
    let mut errors = serde_json::Map::new();
    let mut run = |a: Approach, name: &str, f: &dyn Fn() -> plrf::Result<serde_json::Value>| -> Result<Option<serde_json::Value>> {
        if args.approach != a && args.approach != Approach::All {
            return Ok(None);
        }
        match f() {
            Ok(v) => Ok(Some(v)),
            Err(e) if args.approach == Approach::All => {
                errors.insert(name.to_string(), json!(e.to_string()));
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    };
    let xi = XiReport {
        approach1: run(Approach::One, "approach1", &|| frontier::approach1(&slices).map(to_json))?,
        approach2: run(Approach::Two, "approach2", &|| frontier::approach2(&slices).map(to_json))?,
        approach0_series: run(Approach::Zero, "approach0", &|| frontier::approach0(&curves).map(to_json))?,
        errors,
    };
    let sliding = match args.sliding {
        Some(n) => Some(frontier::sliding_window(&slices, n)?),
        None => None,
    };
    let report = FrontierReport {
        config: json!({
            "inputs": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "window": [args.window.0, args.window.1],
            "slices": args.slices,
            "approach": format!("{:?}", args.approach).to_lowercase(),
            "manifest_hashes": manifest_hashes(&paths),
        }),
        eta: EtaReport { a: eta.a, b: eta.b, residual: eta.residual, eta_hat: -eta.b },
        xi,
        slices,
        sliding,
    };
    Ok(serde_json::to_value(report)?)
}

fn to_json<T: Serialize>(v: T) -> serde_json::Value {
    serde_json::to_value(v).expect("report serializes")
}

/// Volterra ladder followed by the frontier measurement on its curves.
pub fn cmd_sweep(cfg: &SweepConfig, with_sgd: bool, jobs: Option<usize>) -> Result<serde_json::Value> {
    let vman = cmd_volterra(cfg, false, jobs)?;
    let short = cfg.short_hash();
    let mut report = json!({ "manifest_hash": cfg.hash(), "volterra_manifest": vman.display().to_string() });
    let pattern = cfg.out_dir.join(format!("volterra_d*_{short}.csv")).display().to_string();
    let fr = FrontierArgs {
        inputs: vec![pattern],
        window: cfg.window,
        slices: cfg.slices,
        approach: Approach::All,
        source: Some(Source::Volterra),
        sliding: None,
    };
    report["volterra"] = cmd_frontier(&fr)?;
    if with_sgd {
        let sman = cmd_simulate(cfg, jobs)?;
        report["sgd_manifest"] = json!(sman.display().to_string());
        let pattern = cfg.out_dir.join(format!("sgd_d*_{short}.csv")).display().to_string();
        let fr = FrontierArgs { inputs: vec![pattern], source: Some(Source::Sgd), approach: Approach::One, ..fr };
        report["sgd"] = cmd_frontier(&fr)?;
    }
    let path = cfg.out_dir.join(format!("sweep_{short}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(report)
}
