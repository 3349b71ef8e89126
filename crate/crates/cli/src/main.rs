use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use plrf::problem::Source;
use plrf::theory::TheoryParams;

mod commands;
mod config;

use commands::{Approach, FrontierArgs, SpectrumArgs, TheoryArgs};
use config::{config_err, load_config, ConfigError, GammaRule, SweepConfig, VRule};

#[derive(Parser)]
#[command(name = "plrf", version, about = "Power-law random features: SGD, Volterra dynamics, spectra and scaling exponents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run SGD for every (d, seed) of a sweep configuration.
    Simulate(SweepArgs),
    /// Solve the expected-risk Volterra recursion for every d.
    Volterra {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Use the quadratic-time convolution instead of the mode recursion.
        #[arg(long)]
        naive: bool,
    },
    /// Component functions and surrogate loss on a geometric r grid.
    Theory(TheoryCmd),
    /// Deterministic-equivalent spectral densities.
    Spectrum(SpectrumCmd),
    /// Phase and compute-optimal exponents at (alpha, beta).
    Phase {
        #[arg(allow_hyphen_values = true)]
        alpha: f64,
        #[arg(allow_hyphen_values = true)]
        beta: f64,
    },
    /// Measure compute-optimal exponents from loss-curve CSVs.
    Frontier(FrontierCmd),
    /// Volterra ladder followed by the frontier measurement.
    Sweep {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Also run SGD and measure its frontier.
        #[arg(long)]
        with_sgd: bool,
    },
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// TOML configuration, or a manifest JSON to reproduce.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    d_list: Option<Vec<usize>>,
    /// Ambient dimension as a multiple of d.
    #[arg(long, conflicts_with = "v")]
    v_multiple: Option<f64>,
    /// Fixed ambient dimension.
    #[arg(long)]
    v: Option<usize>,
    #[arg(long)]
    seeds: Option<u64>,
    /// Learning rate, or "auto" for half the stability threshold.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, conflicts_with = "flops_budget")]
    horizon: Option<u64>,
    #[arg(long)]
    flops_budget: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads over d.
    #[arg(long)]
    jobs: Option<usize>,
}

impl SweepArgs {
    fn resolve(&self) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => SweepConfig {
                alpha: self.alpha.ok_or_else(|| config_err("--alpha is required without --config"))?,
                beta: self.beta.ok_or_else(|| config_err("--beta is required without --config"))?,
                d_list: self.d_list.clone().ok_or_else(|| config_err("--d-list is required without --config"))?,
                v_rule: VRule::Multiple(4.0),
                seeds: 8,
                gamma_rule: GammaRule::AutoHalfThreshold,
                batch: 1,
                horizon: None,
                flops_budget: None,
                seed: 0,
                schedule: Default::default(),
                out_dir: PathBuf::from("runs"),
                window: plrf::frontier::DEFAULT_WINDOW,
                slices: plrf::frontier::DEFAULT_SLICES,
            },
        };
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        if let Some(d) = &self.d_list {
            cfg.d_list = d.clone();
        }
        if let Some(m) = self.v_multiple {
            cfg.v_rule = VRule::Multiple(m);
        }
        if let Some(v) = self.v {
            cfg.v_rule = VRule::Fixed(v);
        }
        if let Some(s) = self.seeds {
            cfg.seeds = s;
        }
        if let Some(g) = &self.gamma {
            cfg.gamma_rule = if g == "auto" {
                GammaRule::AutoHalfThreshold
            } else {
                GammaRule::Fixed(g.parse().map_err(|_| config_err(format!("--gamma must be a number or auto, got {g:?}")))?)
            };
        }
        if let Some(b) = self.batch {
            cfg.batch = b;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = Some(h);
            cfg.flops_budget = None;
        }
        if let Some(f) = self.flops_budget {
            cfg.flops_budget = Some(f);
            cfg.horizon = None;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out_dir {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TheoryCmd {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long)]
    d: usize,
    /// Ambient dimension; "inf" for v = ∞ (needs 2α > 1). Defaults to 4d.
    #[arg(long)]
    v: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 100_000)]
    horizon: u64,
    /// Quadrature everywhere instead of asymptotic forms inside the window.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = plrf::theory::DEFAULT_M)]
    window_m: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumCmd {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long)]
    d: usize,
    /// Ambient dimension; "inf" for v = ∞. Defaults to 4d.
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    u_min: Option<f64>,
    #[arg(long, default_value_t = 1.5)]
    u_max: f64,
    #[arg(long, default_value_t = 400)]
    points: usize,
    /// Contour height; defaults to d^{-2α}.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FrontierCmd {
    /// Curve CSV files or glob patterns.
    #[arg(required = true)]
    inputs: Vec<String>,
    /// "fmin,fmax".
    #[arg(long, value_delimiter = ',')]
    window: Option<Vec<f64>>,
    #[arg(long, default_value_t = plrf::frontier::DEFAULT_SLICES)]
    slices: usize,
    #[arg(long, default_value = "all")]
    approach: Approach,
    /// Keep only curves of this source (sgd, volterra, theory).
    #[arg(long)]
    source: Option<Source>,
    /// Also fit consecutive sub-windows of this many slices.
    #[arg(long)]
    sliding: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_v(v: &Option<String>, d: usize) -> Result<Option<u64>> {
    match v.as_deref() {
        None => Ok(Some(4 * d as u64)),
        Some("inf") => Ok(None),
        Some(s) => Ok(Some(s.parse().map_err(|_| config_err(format!("--v must be an integer or inf, got {s:?}")))?)),
    }
}

fn emit(out: &Option<PathBuf>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let cfg = a.resolve()?;
            let m = commands::cmd_simulate(&cfg, a.jobs)?;
            println!("{}", m.display());
        }
        Command::Volterra { sweep, naive } => {
            let cfg = sweep.resolve()?;
            let m = commands::cmd_volterra(&cfg, naive, sweep.jobs)?;
            println!("{}", m.display());
        }
        Command::Theory(t) => {
            let params = TheoryParams { alpha: t.alpha, beta: t.beta, d: t.d, v: parse_v(&t.v, t.d)?, gamma: t.gamma, batch: t.batch };
            let args = TheoryArgs { params, horizon: t.horizon, exact: t.exact, window_m: t.window_m };
            emit(&t.out, |w| commands::cmd_theory(&args, w))?;
        }
        Command::Spectrum(s) => {
            let args = SpectrumArgs {
                alpha: s.alpha,
                beta: s.beta,
                d: s.d,
                v: parse_v(&s.v, s.d)?,
                u_min: s.u_min,
                u_max: s.u_max,
                points: s.points,
                eta: s.eta,
            };
            emit(&s.out, |w| commands::cmd_spectrum(&args, w))?;
        }
        Command::Phase { alpha, beta } => {
            println!("{}", serde_json::to_string(&commands::cmd_phase(alpha, beta)?)?);
        }
        Command::Frontier(f) => {
            let window = match f.window {
                Some(w) if w.len() == 2 => (w[0], w[1]),
                Some(_) => return Err(config_err("--window takes fmin,fmax")),
                None => plrf::frontier::DEFAULT_WINDOW,
            };
            let args = FrontierArgs { inputs: f.inputs, window, slices: f.slices, approach: f.approach, source: f.source, sliding: f.sliding };
            let report = commands::cmd_frontier(&args)?;
            emit(&f.out, |w| Ok(writeln!(w, "{}", serde_json::to_string_pretty(&report)?)?))?;
        }
        Command::Sweep { sweep, with_sgd } => {
            let cfg = sweep.resolve()?;
            let report = commands::cmd_sweep(&cfg, with_sgd, sweep.jobs)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

/// 2 for configuration errors, 3 for numerical failures, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if let Some(pe) = e.downcast_ref::<plrf::Error>() {
        return if pe.is_config() { 2 } else { 3 };
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
