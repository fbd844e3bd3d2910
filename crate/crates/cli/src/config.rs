//! Pipeline configuration: one TOML file, `CTE_SECTION__KEY` overrides.

use crate::error::{CliError, CliResult};
use cte_core::clustering::GmmConfig;
use cte_core::embedding::{CteConfig, LossWeights, TrainConfig};
use cte_core::generation::{ScanOrder, SequenceModelConfig, TranslatorConfig};
use cte_core::neuralkit::AdamConfig;
use cte_core::agent::PhysicsConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const ENV_PREFIX: &str = "CTE_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub run: RunConfig,
    pub games: Vec<GameEntry>,
    #[serde(default)]
    pub seeds: SeedOverrides,
    #[serde(default)]
    pub gmm: GmmSection,
    #[serde(default)]
    pub autoencoder: AutoencoderSection,
    #[serde(default)]
    pub dbscan: DbscanSection,
    #[serde(default)]
    pub generator: GeneratorSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub translator: TranslatorSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub expressive_range: RangeSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Relative paths resolve against the config file's directory.
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameEntry {
    pub name: String,
    pub path: PathBuf,
    /// Keep only the first `n` levels (sorted by id); 0 keeps all.
    #[serde(default)]
    pub max_levels: usize,
    /// Run the playability agent on this game's levels.
    #[serde(default)]
    pub physics: bool,
}

/// Explicit per-process seeds; unset ones derive from `run.seed`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedOverrides {
    pub split: Option<u64>,
    pub gmm: Option<u64>,
    pub autoencoder: Option<u64>,
    pub generator: Option<u64>,
    pub sample: Option<u64>,
    pub translator: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmSection {
    pub k_values: Vec<usize>,
    pub max_iter: usize,
    pub tol: f64,
    pub var_floor: f64,
    pub soft_targets: bool,
}

impl Default for GmmSection {
    fn default() -> Self {
        let g = GmmConfig::default();
        Self { k_values: (2..=16).step_by(2).collect(), max_iter: g.max_iter, tol: g.tol, var_floor: g.var_floor, soft_targets: false }
    }
}

impl GmmSection {
    pub fn gmm_config(&self) -> GmmConfig {
        GmmConfig { max_iter: self.max_iter, tol: self.tol, var_floor: self.var_floor }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderSection {
    pub conv1: usize,
    pub conv2: usize,
    pub context_dense: usize,
    pub affordance_dense: usize,
    pub edge_dense: usize,
    pub weights: LossWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Also train the edge-free, cluster-loss-free ablation.
    pub ablation: bool,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        let c = CteConfig::default();
        let t = TrainConfig::default();
        Self {
            conv1: c.conv1,
            conv2: c.conv2,
            context_dense: c.context_dense,
            affordance_dense: c.affordance_dense,
            edge_dense: c.edge_dense,
            weights: c.weights,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.adam.lr,
            ablation: true,
        }
    }
}

impl AutoencoderSection {
    pub fn model_config(&self, clusters: usize) -> CteConfig {
        CteConfig {
            conv1: self.conv1,
            conv2: self.conv2,
            context_dense: self.context_dense,
            affordance_dense: self.affordance_dense,
            edge_dense: self.edge_dense,
            clusters,
            use_edges: true,
            weights: self.weights,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { epochs: self.epochs, batch_size: self.batch_size, adam: AdamConfig { lr: self.lr, ..Default::default() } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbscanSection {
    /// Games whose training tiles are clustered; empty means the generator game.
    pub games: Vec<String>,
    pub eps_count: usize,
    pub eps_lo_pct: f64,
    pub eps_hi_pct: f64,
    pub min_pts: Vec<usize>,
    pub max_noise: f64,
    /// Distances the eps percentiles are taken over.
    pub eps_from: EpsSource,
    /// Admissible cluster counts; 0 leaves a side unbounded.
    pub min_clusters: usize,
    pub max_clusters: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsSource {
    NearestNeighbour,
    Pairwise,
}

impl DbscanSection {
    pub fn k_bounds(&self) -> (usize, usize) {
        (self.min_clusters.max(2), if self.max_clusters == 0 { usize::MAX } else { self.max_clusters })
    }
}

impl Default for DbscanSection {
    fn default() -> Self {
        Self {
            games: Vec::new(),
            eps_count: 24,
            eps_lo_pct: 1.0,
            eps_hi_pct: 50.0,
            min_pts: vec![2, 3, 5],
            max_noise: 0.05,
            eps_from: EpsSource::NearestNeighbour,
            min_clusters: 0,
            max_clusters: 0,
        }
    }
}

/// Sequence-model variants compared by `compare-generators`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// LSTM over the annotated tile symbols.
    Symbol,
    /// LSTM over DBSCAN cluster ids, then translation.
    TwoStep,
    /// LSTM regressing the next embedding, greedy continuation.
    Continuous,
    /// As `Continuous`, on embeddings from the ablated autoencoder.
    ContinuousAblation,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Symbol, Variant::TwoStep, Variant::Continuous, Variant::ContinuousAblation];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Symbol => "symbol",
            Variant::TwoStep => "two_step",
            Variant::Continuous => "continuous",
            Variant::ContinuousAblation => "continuous_ablation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    /// Game whose levels are generated; empty means the first game.
    pub game: String,
    pub variants: Vec<Variant>,
    pub hidden: usize,
    pub layers: usize,
    pub history: usize,
    pub order: ScanOrder,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_clip: f64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let s = SequenceModelConfig::default();
        Self {
            game: String::new(),
            variants: Variant::ALL.to_vec(),
            hidden: s.hidden,
            layers: s.layers,
            history: s.history,
            order: s.order,
            epochs: s.epochs,
            batch_size: s.batch_size,
            lr: s.adam.lr,
            grad_clip: s.grad_clip,
        }
    }
}

impl GeneratorSection {
    pub fn model_config(&self) -> SequenceModelConfig {
        SequenceModelConfig {
            hidden: self.hidden,
            layers: self.layers,
            history: self.history,
            order: self.order,
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig { lr: self.lr, ..Default::default() },
            grad_clip: self.grad_clip,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub count: usize,
    pub temperature: f64,
    /// Output size; 0 takes the size of the generator game's first level.
    pub rows: usize,
    pub cols: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self { count: 20, temperature: 1.0, rows: 0, cols: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranslatorSection {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub grad_clip: f64,
}

impl Default for TranslatorSection {
    fn default() -> Self {
        let t = TranslatorConfig::default();
        Self { hidden: t.hidden, epochs: t.epochs, lr: t.adam.lr, grad_clip: t.grad_clip }
    }
}

impl TranslatorSection {
    pub fn model_config(&self) -> TranslatorConfig {
        TranslatorConfig { hidden: self.hidden, epochs: self.epochs, adam: AdamConfig { lr: self.lr, ..Default::default() }, grad_clip: self.grad_clip }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub max_jump_height: usize,
    pub max_jump_span: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let p = PhysicsConfig::default();
        Self { max_jump_height: p.max_jump_height, max_jump_span: p.max_jump_span }
    }
}

impl MetricsSection {
    pub fn physics(&self) -> PhysicsConfig {
        PhysicsConfig { max_jump_height: self.max_jump_height, max_jump_span: self.max_jump_span }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RangeSection {
    pub x: String,
    pub y: String,
    pub bins: usize,
}

impl Default for RangeSection {
    fn default() -> Self {
        Self { x: "leniency".into(), y: "linearity".into(), bins: 10 }
    }
}

/// Seeds actually used by each random process of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub gmm: u64,
    pub autoencoder: u64,
    pub generator: u64,
    pub sample: u64,
    pub translator: u64,
}

fn derive(master: u64, salt: &str) -> u64 {
    cte_core::io::fnv1a64(format!("{master}:{salt}").as_bytes())
}

impl PipelineConfig {
    /// Parses TOML text, applies overrides from `env`, resolves relative
    /// paths against `base` and validates.
    pub fn from_str_with_env(text: &str, base: &Path, env: impl IntoIterator<Item = (String, String)>) -> CliResult<Self> {
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(format!("config syntax: {e}")))?;
        let mut overrides: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.contains("__")).collect();
        overrides.sort();
        for (key, raw) in overrides {
            apply_override(&mut value, &key, &raw)?;
        }
        let mut cfg: PipelineConfig = value.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.run.out = base.join(&cfg.run.out);
        for g in &mut cfg.games {
            g.path = base.join(&g.path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` with overrides from the process environment.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str_with_env(&text, base, std::env::vars())
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.games.is_empty() {
            return bad("at least one [[games]] entry is required".into());
        }
        for (i, g) in self.games.iter().enumerate() {
            if !g.path.join("levels").is_dir() {
                return bad(format!("game {:?}: {} has no levels/ directory", g.name, g.path.display()));
            }
            if self.games[..i].iter().any(|o| o.name == g.name) {
                return bad(format!("game {:?} listed twice", g.name));
            }
        }
        let gen = self.generator_game();
        if !self.games.iter().any(|g| g.name == gen) {
            return bad(format!("generator game {gen:?} is not in [[games]]"));
        }
        for name in &self.dbscan.games {
            if !self.games.iter().any(|g| &g.name == name) {
                return bad(format!("dbscan game {name:?} is not in [[games]]"));
            }
        }
        if self.gmm.k_values.is_empty() || self.gmm.k_values.contains(&0) {
            return bad("gmm.k_values must be non-empty and positive".into());
        }
        if self.dbscan.min_pts.is_empty() || self.dbscan.eps_count < 2 || !(0.0..=1.0).contains(&self.dbscan.max_noise) {
            return bad("dbscan needs min_pts, eps_count >= 2 and max_noise in [0, 1]".into());
        }
        if !(0.0..self.dbscan.eps_hi_pct).contains(&self.dbscan.eps_lo_pct) || self.dbscan.eps_hi_pct > 100.0 {
            return bad("dbscan percentiles must satisfy 0 <= lo < hi <= 100".into());
        }
        let (k_lo, k_hi) = self.dbscan.k_bounds();
        if k_lo > k_hi {
            return bad(format!("dbscan cluster bounds are empty: {k_lo}..={k_hi}"));
        }
        if self.autoencoder.epochs == 0 || self.autoencoder.batch_size == 0 || self.autoencoder.lr <= 0.0 {
            return bad("autoencoder epochs, batch_size and lr must be positive".into());
        }
        let gs = &self.generator;
        if gs.hidden == 0 || gs.layers == 0 || gs.history == 0 || gs.epochs == 0 || gs.batch_size == 0 || gs.lr <= 0.0 {
            return bad("generator hidden, layers, history, epochs, batch_size and lr must be positive".into());
        }
        if gs.variants.contains(&Variant::ContinuousAblation) && !self.autoencoder.ablation {
            return bad("the continuous_ablation variant needs autoencoder.ablation = true".into());
        }
        if self.generate.count == 0 || self.generate.temperature < 0.0 || self.generate.temperature.is_nan() {
            return bad("generate.count must be positive and temperature >= 0".into());
        }
        if (self.generate.rows == 0) != (self.generate.cols == 0) {
            return bad("generate.rows and generate.cols are set together".into());
        }
        if self.translator.hidden == 0 || self.translator.epochs == 0 || self.translator.lr <= 0.0 {
            return bad("translator hidden, epochs and lr must be positive".into());
        }
        for axis in [&self.expressive_range.x, &self.expressive_range.y] {
            if !cte_core::metrics::METRIC_NAMES[..5].contains(&axis.as_str()) {
                return bad(format!("expressive_range axis {axis:?} is not one of {:?}", &cte_core::metrics::METRIC_NAMES[..5]));
            }
        }
        if self.expressive_range.bins == 0 {
            return bad("expressive_range.bins must be positive".into());
        }
        Ok(())
    }

    pub fn generator_game(&self) -> &str {
        if self.generator.game.is_empty() {
            &self.games[0].name
        } else {
            &self.generator.game
        }
    }

    pub fn dbscan_games(&self) -> Vec<String> {
        if self.dbscan.games.is_empty() {
            vec![self.generator_game().to_string()]
        } else {
            self.dbscan.games.clone()
        }
    }

    pub fn seeds(&self) -> Seeds {
        let s = &self.seeds;
        let m = self.run.seed;
        Seeds {
            split: s.split.unwrap_or_else(|| derive(m, "split")),
            gmm: s.gmm.unwrap_or_else(|| derive(m, "gmm")),
            autoencoder: s.autoencoder.unwrap_or_else(|| derive(m, "autoencoder")),
            generator: s.generator.unwrap_or_else(|| derive(m, "generator")),
            sample: s.sample.unwrap_or_else(|| derive(m, "sample")),
            translator: s.translator.unwrap_or_else(|| derive(m, "translator")),
        }
    }

    /// SHA-256 of the resolved configuration, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `CTE_AUTOENCODER__EPOCHS=3` sets `autoencoder.epochs = 3`. Values parse
/// as TOML and fall back to plain strings.
fn apply_override(root: &mut toml::Table, key: &str, raw: &str) -> CliResult<()> {
    let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|p| p.to_ascii_lowercase()).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed override {key}")));
    }
    let value = format!("v = {raw}").parse::<toml::Table>().ok().and_then(|mut t| t.remove("v")).unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut table = root;
    for part in &path[..path.len() - 1] {
        let entry = table.entry(part.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("override {key}: {part} is not a section")))?;
    }
    log::info!("config override {key} = {raw}");
    table.insert(path[path.len() - 1].clone(), value);
    Ok(())
}
