use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use plrf::sgd::{CheckpointSchedule, ScheduleKind};
use plrf::volterra::{default_learning_rate, SpectralModes};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Raised for anything the user can fix by editing the configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VRule {
    Multiple(f64),
    Fixed(usize),
}

impl VRule {
    pub fn resolve(&self, d: usize) -> usize {
        match *self {
            VRule::Multiple(m) => (m * d as f64).round() as usize,
            VRule::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// Largest γ with `γ(B+1)λ_max ≤ 1` and kernel norm at most 1/2.
    AutoHalfThreshold,
    Fixed(f64),
}

impl GammaRule {
    pub fn resolve(&self, modes: &SpectralModes, batch: usize) -> plrf::Result<f64> {
        match *self {
            GammaRule::AutoHalfThreshold => default_learning_rate(modes, batch, 0.5),
            GammaRule::Fixed(g) => Ok(g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    #[serde(default = "one")]
    pub first: u64,
}

fn one() -> u64 {
    1
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { kind: ScheduleKind::Geometric { ratio: 1.1 }, first: 1 }
    }
}

impl ScheduleConfig {
    pub fn with_max(&self, max: u64) -> CheckpointSchedule {
        CheckpointSchedule { kind: self.kind, first: self.first, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alpha: f64,
    pub beta: f64,
    pub d_list: Vec<usize>,
    #[serde(default = "default_v_rule")]
    pub v_rule: VRule,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_gamma_rule")]
    pub gamma_rule: GammaRule,
    #[serde(default = "one_usize")]
    pub batch: usize,
    /// Iterations per run; exclusive with `flops_budget`.
    #[serde(default)]
    pub horizon: Option<u64>,
    /// Flops per run, `r·B·d`; the horizon becomes `⌈budget/(B d)⌉`.
    #[serde(default)]
    pub flops_budget: Option<f64>,
    /// Instance seed from which every random stream is derived.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_window")]
    pub window: (f64, f64),
    #[serde(default = "default_slices")]
    pub slices: usize,
}

fn default_v_rule() -> VRule {
    VRule::Multiple(4.0)
}
fn default_seeds() -> u64 {
    8
}
fn default_gamma_rule() -> GammaRule {
    GammaRule::AutoHalfThreshold
}
fn one_usize() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}
fn default_window() -> (f64, f64) {
    plrf::frontier::DEFAULT_WINDOW
}
fn default_slices() -> usize {
    plrf::frontier::DEFAULT_SLICES
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_list.is_empty() {
            return Err(config_err("d_list must not be empty"));
        }
        if self.d_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("d_list must be strictly increasing"));
        }
        if self.seeds == 0 {
            return Err(config_err("seeds must be at least 1"));
        }
        match (self.horizon, self.flops_budget) {
            (Some(_), Some(_)) => return Err(config_err("give either horizon or flops_budget, not both")),
            (None, None) => return Err(config_err("one of horizon or flops_budget is required")),
            (None, Some(f)) if !(f > 0.0) => return Err(config_err("flops_budget must be positive")),
            (Some(0), None) => return Err(config_err("horizon must be at least 1")),
            _ => {}
        }
        if let GammaRule::Fixed(g) = self.gamma_rule {
            if !(g >= 0.0) {
                return Err(config_err("fixed gamma must be non-negative"));
            }
        }
        self.schedule.with_max(1).validate().map_err(|e| config_err(e.to_string()))?;
        for &d in &self.d_list {
            self.spec(d, 0.0).validate().map_err(|e| config_err(format!("d={d}: {e}")))?;
        }
        Ok(())
    }

    pub fn horizon_for(&self, d: usize) -> u64 {
        match (self.horizon, self.flops_budget) {
            (Some(h), _) => h,
            (None, Some(f)) => (f / (self.batch as f64 * d as f64)).ceil().max(1.0) as u64,
            _ => 1,
        }
    }

    pub fn spec(&self, d: usize, gamma: f64) -> plrf::ProblemSpec {
        plrf::ProblemSpec::new(self.alpha, self.beta, d)
            .with_v(self.v_rule.resolve(d))
            .with_gamma(gamma)
            .with_batch(self.batch)
            .with_horizon(self.horizon_for(d))
            .with_seed(self.seed)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}

/// Reads a TOML config, or the `config` member of a manifest JSON.
pub fn load_config(path: &Path) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let cfg = v.get("config").cloned().unwrap_or(v);
        return serde_json::from_value(cfg).map_err(|e| config_err(format!("{}: {e}", path.display())));
    }
    toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub d: usize,
    pub v: usize,
    pub horizon: u64,
    pub gamma: f64,
    pub lambda_max: f64,
    pub kernel_norm: f64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub manifest_hash: String,
    pub config: SweepConfig,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("manifest_{}_{}.json", self.command, &self.manifest_hash[..12]));
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
