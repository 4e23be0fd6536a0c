//! Experiment files: one TOML document per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use recdenoise::interactions::{ColumnMap, SplitSpec, SyntheticSpec};
use recdenoise::posterior::BucketScheme;
use recdenoise::trainers::{ModeSchedule, TrainConfig};
use recdenoise::{Arch, CleanRule};

use crate::error::{CliError, CliResult};

pub const OUTPUT_ENV: &str = "RECDENOISE_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Normal,
    Dpi,
    Dvae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Either a path to a delimited file or a generator spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub columns: ColumnMap,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: None, synthetic: Some(SyntheticSpec::default()), columns: ColumnMap::default() }
    }
}

/// A scalar or a list of values to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    One(f64),
    Many(Vec<f64>),
}

impl Sweep {
    fn values(&self) -> Vec<f64> {
        match self {
            Sweep::One(v) => vec![*v],
            Sweep::Many(v) => v.clone(),
        }
    }
}

/// Training hyperparameters as written in the file. `lambda` is the raw grid
/// value; it is divided by the number of users before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda: Sweep,
    pub alpha: Sweep,
    pub c1: Sweep,
    pub c2: Sweep,
    pub seed_prior: u64,
    /// Stop after `patience` evaluations without a validation improvement.
    pub early_stopping: bool,
    pub patience: usize,
    pub eval_every: usize,
    pub eval_k: usize,
    pub target_arch: Arch,
    pub aux_arch: Arch,
    pub dim: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lambda: Sweep::One(0.0),
            alpha: Sweep::One(t.alpha),
            c1: Sweep::One(t.c1),
            c2: Sweep::One(t.c2),
            seed_prior: 1000,
            early_stopping: t.patience.is_some(),
            patience: t.patience.unwrap_or(20),
            eval_every: t.eval_every,
            eval_k: t.eval_k,
            target_arch: t.target_arch,
            aux_arch: t.aux_arch,
            dim: t.dim,
        }
    }
}

/// One point of the hyperparameter grid, still holding the raw lambda.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
}

impl TrainSection {
    /// Cartesian product of the swept values, in lambda, alpha, c1, c2 order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &lambda in &self.lambda.values() {
            for &alpha in &self.alpha.values() {
                for &c1 in &self.c1.values() {
                    for &c2 in &self.c2.values() {
                        out.push(GridPoint { lambda, alpha, c1, c2 });
                    }
                }
            }
        }
        out
    }

    pub fn is_grid(&self) -> bool {
        self.grid().len() > 1
    }

    /// The trainer config for `point`, run `seed` and `num_users` users.
    pub fn resolve(&self, point: GridPoint, seed: u64, num_users: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lambda: point.lambda / num_users.max(1) as f64,
            alpha: point.alpha,
            c1: point.c1,
            c2: point.c2,
            seed_main: seed,
            seed_prior: self.seed_prior.wrapping_add(seed),
            patience: self.early_stopping.then_some(self.patience),
            eval_every: self.eval_every,
            eval_k: self.eval_k,
            target_arch: self.target_arch,
            aux_arch: self.aux_arch,
            dim: self.dim,
        }
    }

    /// A copy pinned to one grid point.
    pub fn pinned(&self, point: GridPoint) -> Self {
        Self {
            lambda: Sweep::One(point.lambda),
            alpha: Sweep::One(point.alpha),
            c1: Sweep::One(point.c1),
            c2: Sweep::One(point.c2),
            ..self.clone()
        }
    }
}

/// A subset of the observed pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSet {
    /// Validation and test pairs, unseen during training.
    HeldOut,
    Train,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub arch: Arch,
    /// Partner of run seed `s` is `s + partner_offset`.
    pub partner_offset: u64,
    pub pairs: PairSet,
    /// Study models run all epochs unless this is set.
    pub early_stopping: bool,
}

impl Default for StudySection {
    fn default() -> Self {
        Self { arch: Arch::Mf, partner_offset: 500, pairs: PairSet::HeldOut, early_stopping: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorSection {
    pub scheme: BucketScheme,
    /// Rating buckets to report; defaults to 1 to 5 for the rating scheme.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buckets: Option<Vec<i64>>,
    pub pairs: PairSet,
}

impl Default for PosteriorSection {
    fn default() -> Self {
        Self { scheme: BucketScheme::Truth, buckets: None, pairs: PairSet::Train }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub method: Method,
    /// DP/DN schedule for `dpi` and `dvae` runs.
    pub ablation: ModeSchedule,
    pub precision: Precision,
    pub seeds: Vec<u64>,
    pub ks: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub data: DataConfig,
    pub split: SplitSpec,
    pub clean: CleanRule,
    pub train: TrainSection,
    pub study: StudySection,
    pub posterior: PosteriorSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            method: Method::Normal,
            ablation: ModeSchedule::Full,
            precision: Precision::F64,
            seeds: vec![0],
            ks: vec![5, 20],
            output: None,
            data: DataConfig::default(),
            split: SplitSpec::default(),
            clean: CleanRule::TruePositive,
            train: TrainSection::default(),
            study: StudySection::default(),
            posterior: PosteriorSection::default(),
        }
    }
}

/// Sets `path.to.key = value` in a TOML tree; `value` is parsed as a TOML
/// literal and falls back to a plain string.
fn apply_override(root: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> CliResult<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> CliResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) => return bad("data.path and data.synthetic are mutually exclusive"),
            (None, None) => return bad("data needs either path or synthetic"),
            _ => {}
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("ks must be a non-empty list of positive cutoffs");
        }
        if self.train.seed_prior == 0 {
            return bad("train.seed_prior must be non-zero so prior and main seeds differ");
        }
        let grid = self.train.grid();
        if grid.is_empty() {
            return bad("every swept training value needs at least one entry");
        }
        self.split.validate().map_err(CliError::Core)?;
        for p in grid {
            self.train.resolve(p, self.seeds[0], 1).validate().map_err(CliError::Core)?;
        }
        Ok(())
    }

    /// `output`, else `$RECDENOISE_OUT/<name>`, else `runs/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(p) = &self.output {
            return p.clone();
        }
        let root = std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
        root.join(&self.name)
    }
}
