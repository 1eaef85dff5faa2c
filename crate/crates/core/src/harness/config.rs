//! TOML experiment configuration with dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::{SyntheticKind, SyntheticSpec};
use crate::alignment::CostVariant;
use crate::bounds::BoundLoss;
use crate::curve::CurveTrainConfig;
use crate::nn::{Activation, NetworkSpec, SgdConfig};
use crate::pam::PamConfig;
use crate::robust::PgdConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Blobs,
    Moons,
    Spirals,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    pub n: usize,
    pub noise: f64,
    pub n_classes: usize,
    /// Source file when `kind = "csv"`; relative paths resolve against the
    /// config file's directory.
    pub path: Option<PathBuf>,
    pub validation_frac: f64,
    pub alignment_frac: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: DataKind::Blobs,
            n: 600,
            noise: 0.3,
            n_classes: 3,
            path: None,
            validation_frac: 0.2,
            alignment_frac: 0.2,
        }
    }
}

impl DataConfig {
    pub fn synthetic(&self) -> Option<SyntheticSpec> {
        let kind = match self.kind {
            DataKind::Blobs => SyntheticKind::Blobs,
            DataKind::Moons => SyntheticKind::Moons,
            DataKind::Spirals => SyntheticKind::Spirals,
            DataKind::Csv => return None,
        };
        Some(SyntheticSpec {
            kind,
            n: self.n,
            noise: self.noise,
            n_classes: self.n_classes,
        })
    }

    pub fn classes(&self) -> usize {
        self.synthetic().map_or(self.n_classes, |s| s.classes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub residual_period: Option<usize>,
    pub has_bias: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: vec![16, 16],
            activation: Activation::Relu,
            residual_period: None,
            has_bias: true,
        }
    }
}

impl NetworkConfig {
    pub fn spec(&self, input: usize, output: usize) -> Result<NetworkSpec> {
        let mut widths = vec![input];
        widths.extend(&self.hidden);
        widths.push(output);
        let mut spec = NetworkSpec::new(widths, self.activation)?;
        if let Some(p) = self.residual_period {
            spec = spec.with_residual(p)?;
        }
        if !self.has_bias {
            spec = spec.without_bias();
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub variant: CostVariant,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            variant: CostVariant::CorrPost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedConvention {
    /// Every curve class of a pair gets its own seed.
    #[default]
    Table,
    /// All curve classes of a pair share one seed.
    Figure,
}

impl SeedConvention {
    pub fn name(self) -> &'static str {
        match self {
            SeedConvention::Table => "table",
            SeedConvention::Figure => "figure",
        }
    }
}

/// Curve evaluation settings shared by every curve class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub grid_points: usize,
    pub seed_convention: SeedConvention,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            grid_points: 21,
            seed_convention: SeedConvention::Table,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustConfig {
    /// Adversarially train endpoints and curves.
    pub enabled: bool,
    /// `ε` as a fraction of the largest feature span.
    pub epsilon_fraction: f64,
    /// Step size as a fraction of `ε`.
    pub step_fraction: f64,
    pub n_steps: usize,
    pub random_start: bool,
    pub clip_range: Option<(f64, f64)>,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig {
            enabled: false,
            epsilon_fraction: 0.05,
            step_fraction: 0.25,
            n_steps: 10,
            random_start: true,
            clip_range: None,
        }
    }
}

impl RobustConfig {
    pub fn pgd(&self, span: f64, seed: u64) -> PgdConfig {
        let epsilon = self.epsilon_fraction * span;
        PgdConfig {
            epsilon,
            step_size: (self.step_fraction * epsilon).max(f64::MIN_POSITIVE),
            n_steps: self.n_steps,
            random_start: self.random_start,
            clip_range: self.clip_range,
            seed,
            ..PgdConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub loss: BoundLoss,
    pub variant: CostVariant,
    pub grid_points: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            loss: BoundLoss::CrossEntropy,
            variant: CostVariant::L2Pre,
            grid_points: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneConfig {
    pub resolution: usize,
    pub margin: f64,
    pub mode: String,
}

impl Default for PlaneConfig {
    fn default() -> Self {
        PlaneConfig {
            resolution: 21,
            margin: 0.2,
            mode: "aligned".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lrs: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub modes: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lrs: vec![0.01, 0.03, 0.1],
            batch_sizes: vec![32, 64, 128],
            modes: vec!["unaligned".into(), "aligned".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_pairs: usize,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub train: SgdConfig,
    pub alignment: AlignmentConfig,
    pub curve: CurveTrainConfig,
    pub eval: EvalConfig,
    pub pam: PamConfig,
    pub robust: RobustConfig,
    pub bounds: BoundsConfig,
    pub plane: PlaneConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            n_pairs: 3,
            out_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            network: NetworkConfig::default(),
            train: SgdConfig::default(),
            alignment: AlignmentConfig::default(),
            curve: CurveTrainConfig::default(),
            eval: EvalConfig::default(),
            pam: PamConfig::default(),
            robust: RobustConfig::default(),
            bounds: BoundsConfig::default(),
            plane: PlaneConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Parse a TOML override value; bare words fall back to strings.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Apply `a.b.c=value` to a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override key `{path}` has an empty segment")));
    }
    let mut node = table;
    for k in &keys[..keys.len() - 1] {
        let entry = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{k}` is not a table")))?;
    }
    node.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table.try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file. Relative CSV paths are resolved against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::Io(e),
        })?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        if let Some(p) = &cfg.data.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(Error::Config("n_pairs must be positive".into()));
        }
        match (self.data.kind, &self.data.path) {
            (DataKind::Csv, None) => return Err(Error::Config("data.path is required for csv data".into())),
            (DataKind::Csv, Some(_)) => {}
            _ => self.data.synthetic().expect("synthetic kind").validate()?,
        }
        self.network.spec(2, self.data.classes().max(2))?;
        self.train.validate()?;
        self.curve.validate()?;
        self.pam.validate()?;
        if self.eval.grid_points < 2 || self.bounds.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        if self.plane.resolution < 2 {
            return Err(Error::Config("plane.resolution must be at least 2".into()));
        }
        if self.sweep.lrs.iter().any(|&v| !(v > 0.0)) || self.sweep.batch_sizes.contains(&0) {
            return Err(Error::Config("sweep lrs and batch sizes must be positive".into()));
        }
        if !(self.robust.epsilon_fraction >= 0.0 && self.robust.step_fraction > 0.0 && self.robust.n_steps > 0) {
            return Err(Error::Config("robust: epsilon_fraction >= 0, step_fraction > 0, n_steps > 0 required".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
