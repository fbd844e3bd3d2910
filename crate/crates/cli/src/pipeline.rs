//! Stage graph, artifact bookkeeping and run manifests.

use crate::config::{PipelineConfig, Seeds};
use crate::data::{CorpusSummary, GameData};
use crate::error::{CliError, CliResult};
use crate::stages;
use cte_core::io::write_atomic;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Features,
    Gmm,
    TrainAe,
    Embed,
    Dbscan,
    TrainGen,
    Generate,
    TrainTrans,
    Translate,
    Metrics,
    ExpressiveRange,
    Render,
    CompareGenerators,
}

impl Stage {
    /// Execution order of a full run.
    pub const PIPELINE: [Stage; 14] = [
        Stage::Ingest,
        Stage::Features,
        Stage::Gmm,
        Stage::TrainAe,
        Stage::Embed,
        Stage::Dbscan,
        Stage::TrainGen,
        Stage::TrainTrans,
        Stage::Generate,
        Stage::Translate,
        Stage::Render,
        Stage::Metrics,
        Stage::ExpressiveRange,
        Stage::CompareGenerators,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Gmm => "gmm",
            Stage::TrainAe => "train-ae",
            Stage::Embed => "embed",
            Stage::Dbscan => "dbscan",
            Stage::TrainGen => "train-gen",
            Stage::Generate => "generate",
            Stage::TrainTrans => "train-trans",
            Stage::Translate => "translate",
            Stage::Metrics => "metrics",
            Stage::ExpressiveRange => "expressive-range",
            Stage::Render => "render",
            Stage::CompareGenerators => "compare-generators",
        }
    }

    /// Direct upstream stages.
    pub fn depends_on(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Features => &[Stage::Ingest],
            Stage::Gmm => &[Stage::Features],
            Stage::TrainAe => &[Stage::Gmm],
            Stage::Embed => &[Stage::TrainAe],
            Stage::Dbscan => &[Stage::Embed],
            Stage::TrainGen => &[Stage::Ingest, Stage::Embed, Stage::Dbscan],
            Stage::Generate => &[Stage::TrainGen],
            Stage::TrainTrans => &[Stage::Dbscan],
            Stage::Translate => &[Stage::TrainTrans, Stage::Generate],
            Stage::Metrics => &[Stage::Ingest],
            Stage::ExpressiveRange => &[Stage::Metrics],
            Stage::Render => &[Stage::Generate],
            Stage::CompareGenerators => &[Stage::Metrics],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

/// `manifests/<stage>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub config_hash: String,
    pub seeds: Seeds,
    pub depends_on: Vec<Stage>,
    pub versions: BTreeMap<String, String>,
    pub wall_time_s: f64,
    pub artifacts: Vec<ArtifactRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// State shared by one stage run: paths, seeds and what it wrote.
pub struct Ctx<'a> {
    pub cfg: &'a PipelineConfig,
    pub seeds: Seeds,
    pub versions: BTreeMap<String, String>,
    artifacts: Vec<PathBuf>,
}

impl<'a> Ctx<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("cte".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Self { cfg, seeds: cfg.seeds(), versions, artifacts: Vec::new() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.cfg.run.out.join(rel)
    }

    /// Path of an upstream artifact, or a dependency error naming `stage`.
    pub fn require(&self, rel: &str, stage: Stage) -> CliResult<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::Dependency { stage: stage.name(), artifact: rel.to_string() })
        }
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.path(rel), bytes)?;
        self.record(rel);
        Ok(())
    }

    /// Registers a file written by a library save function.
    pub fn record(&mut self, rel: &str) -> PathBuf {
        let p = self.path(rel);
        self.artifacts.push(p.clone());
        p
    }

    /// Target path for a library save function, recorded as an artifact.
    pub fn output(&mut self, rel: &str) -> CliResult<PathBuf> {
        let p = self.record(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(p)
    }

    pub fn games(&self) -> CliResult<Vec<GameData>> {
        self.cfg.games.iter().map(GameData::load).collect()
    }

    /// The ingest summary, checked against the games currently on disk.
    pub fn corpus(&self, games: &[GameData]) -> CliResult<CorpusSummary> {
        let c = CorpusSummary::load(&self.require("ingest/corpus.json", Stage::Ingest)?)?;
        let stale = games.len() != c.games.len()
            || games.iter().zip(&c.games).any(|(g, s)| g.name != s.name || g.levels.len() != s.levels.len() || g.levels.iter().zip(&s.levels).any(|(l, e)| l.id != e.id));
        if stale {
            return Err(CliError::Dependency { stage: Stage::Ingest.name(), artifact: "ingest/corpus.json matching the configured games".into() });
        }
        Ok(c)
    }

    fn finish(self, stage: Stage, started: Instant) -> CliResult<Manifest> {
        let base = &self.cfg.run.out;
        let mut artifacts = Vec::with_capacity(self.artifacts.len());
        for p in &self.artifacts {
            let rel = p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/");
            artifacts.push(ArtifactRecord { path: rel, sha256: sha256_hex(&std::fs::read(p)?) });
        }
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        artifacts.dedup_by(|a, b| a.path == b.path);
        let m = Manifest {
            stage,
            config_hash: self.cfg.hash(),
            seeds: self.seeds,
            depends_on: stage.depends_on().to_vec(),
            versions: self.versions,
            wall_time_s: started.elapsed().as_secs_f64(),
            artifacts,
        };
        write_atomic(&base.join("manifests").join(format!("{}.json", stage.name())), serde_json::to_string_pretty(&m)?.as_bytes())?;
        Ok(m)
    }
}

/// Runs one stage and writes its manifest.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> CliResult<Manifest> {
    let started = Instant::now();
    log::info!("stage {} -> {}", stage.name(), cfg.run.out.display());
    let mut ctx = Ctx::new(cfg);
    match stage {
        Stage::Ingest => stages::ingest(&mut ctx)?,
        Stage::Features => stages::features(&mut ctx)?,
        Stage::Gmm => stages::gmm(&mut ctx)?,
        Stage::TrainAe => stages::train_ae(&mut ctx)?,
        Stage::Embed => stages::embed(&mut ctx)?,
        Stage::Dbscan => stages::dbscan(&mut ctx)?,
        Stage::TrainGen => stages::train_gen(&mut ctx)?,
        Stage::Generate => stages::generate(&mut ctx)?,
        Stage::TrainTrans => stages::train_trans(&mut ctx)?,
        Stage::Translate => stages::translate(&mut ctx)?,
        Stage::Metrics => stages::metrics(&mut ctx)?,
        Stage::ExpressiveRange => stages::expressive_range(&mut ctx)?,
        Stage::Render => stages::render(&mut ctx)?,
        Stage::CompareGenerators => stages::compare_generators(&mut ctx)?,
    }
    let m = ctx.finish(stage, started)?;
    log::info!("stage {} done in {:.1}s, {} artifacts", stage.name(), m.wall_time_s, m.artifacts.len());
    Ok(m)
}

/// Every stage in order.
pub fn run_all(cfg: &PipelineConfig) -> CliResult<Vec<Manifest>> {
    Stage::PIPELINE.iter().map(|&s| run_stage(s, cfg)).collect()
}

pub fn read_manifest(out: &Path, stage: Stage) -> CliResult<Manifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(out.join("manifests").join(format!("{}.json", stage.name())))?)?)
}
