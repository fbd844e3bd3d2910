//! Stage bodies. Each reads upstream artifacts under the run directory and
//! writes its own through [`Ctx`].

use crate::config::{EpsSource, Variant};
use crate::data::{render_symbols, CorpusSummary, GameData, Split};
use crate::error::{CliError, CliResult};
use crate::pipeline::{sha256_hex, Ctx, Stage};
use cte_core::clustering::{assignments_csv, eps_grid, pairwise_eps_grid, tune_with, DbscanModel, DistanceMatrix, WeightedPoints};
use cte_core::corpus::{parse_vglc_level, tile_distribution, LevelGrid};
use cte_core::embedding::{embed_level, evaluate_cte, load_embeddings, save_embeddings, train_cte, CteDataset, CteModel, EmbeddedLevel, GmmTargets, LATENT};
use cte_core::generation::{
    discretize, greedy_rollout, linearize, render_level, sample_level, train_sequence_model, train_translator, translate_level, unigram_perplexity, ClusterGrid,
    ClusterMemberIndex, GenerationSeed, IndexedLevel, ScanOrder, SequenceCorpus, SequenceModel, Translator, Vocab,
};
use cte_core::metrics::{aggregate_csv, expressive_range as range_grid, histogram_intersection, ssim, AxisRange, LevelMetrics, MeanStd, MetricReport};
use cte_core::CteError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

type F = f32;

const CORPUS: &str = "ingest/corpus.json";
const FEATURES: &str = "features/summary.json";
const GMM: &str = "gmm/targets.json";
const CTE: &str = "ae/cte.bin";
const CTE_ABLATION: &str = "ae/cte_ablation.bin";
const EMBEDDINGS: &str = "embed/embeddings.bin";
const EMBEDDINGS_ABLATION: &str = "embed/embeddings_ablation.bin";
const DBSCAN: &str = "dbscan/model.json";
const TRANSLATOR: &str = "trans/translator.bin";
const DATASET_LEVELS: &str = "metrics/dataset_levels.csv";
const GENERATED_LEVELS: &str = "metrics/generated_levels.csv";

fn salt(seed: u64, name: &str) -> u64 {
    seed ^ cte_core::io::fnv1a64(name.as_bytes())
}

fn to_json<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Aborted training is a numeric failure of the stage.
fn check_aborted(what: &str, aborted: &Option<String>) -> CliResult<()> {
    match aborted {
        Some(m) => Err(CliError::Numeric(format!("{what} training diverged: {m}"))),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- ingest

pub fn ingest(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    let summary = CorpusSummary::build(&games, ctx.seeds.split)?;
    ctx.write(CORPUS, &to_json(&summary)?)?;
    let mut csv = String::from("game,symbol,median_percent\n");
    for g in &games {
        let grids: Vec<LevelGrid> = g.levels.iter().map(|l| l.grid.clone()).collect();
        for (s, pct) in tile_distribution(&grids) {
            csv.push_str(&format!("{},{},{pct}\n", g.name, csv_field(&s.to_string())));
        }
        log::info!("{}: {} levels, annotated {}, images {}", g.name, g.levels.len(), g.affordances.is_annotated(), g.has_images());
    }
    ctx.write("ingest/tile_distribution.csv", csv.as_bytes())
}

// ---------------------------------------------------------------- features

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub unique: usize,
    pub total: usize,
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub games: Vec<String>,
    pub train: DatasetSummary,
    pub validation: DatasetSummary,
}

/// Deduplicated samples of every game with images, for one split.
pub fn build_dataset(games: &[GameData], corpus: &CorpusSummary, split: Split) -> CliResult<CteDataset<F>> {
    let mut ds = CteDataset::new();
    for g in games.iter().filter(|g| g.has_images()) {
        for id in corpus.ids(&g.name, split) {
            let l = g.level(id).expect("corpus checked against games");
            ds.extend_from_level(&g.source(l)?)?;
        }
    }
    Ok(ds)
}

fn summarize(ds: &CteDataset<F>) -> DatasetSummary {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for part in [&ds.context, &ds.affordance, &ds.edges] {
        for chunk in part.chunks(4096) {
            let bytes: Vec<u8> = chunk.iter().flat_map(|v| v.to_le_bytes()).collect();
            h.update(&bytes);
        }
    }
    for c in &ds.counts {
        h.update((*c as u64).to_le_bytes());
    }
    DatasetSummary { unique: ds.len(), total: ds.total_count(), fingerprint: h.finalize().iter().map(|b| format!("{b:02x}")).collect() }
}

pub fn features(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    let corpus = ctx.corpus(&games)?;
    for g in games.iter().filter(|g| !g.has_images()) {
        log::warn!("game {} has no level images; it is left out of the embedding data", g.name);
    }
    let train = build_dataset(&games, &corpus, Split::Train)?;
    let validation = build_dataset(&games, &corpus, Split::Validation)?;
    if train.is_empty() || validation.is_empty() {
        return Err(CliError::Config("no game with level images has both training and validation levels".into()));
    }
    let mut csv = String::from("split,index,level,row,col,count,affordance\n");
    for (name, ds) in [("train", &train), ("validation", &validation)] {
        for i in 0..ds.len() {
            let o = &ds.origins[i];
            let bits: String = ds.affordance_of(i).iter().map(|&v| if v > 0.5 { '1' } else { '0' }).collect();
            csv.push_str(&format!("{name},{i},{},{},{},{},{bits}\n", o.level, o.row, o.col, ds.counts[i]));
        }
    }
    ctx.write("features/samples.csv", csv.as_bytes())?;
    let summary = FeatureSummary {
        games: games.iter().filter(|g| g.has_images()).map(|g| g.name.clone()).collect(),
        train: summarize(&train),
        validation: summarize(&validation),
    };
    log::info!("features: {} unique training samples of {}", summary.train.unique, summary.train.total);
    ctx.write(FEATURES, &to_json(&summary)?)
}

/// Rebuilds the training and validation sets and checks them against the
/// `features` fingerprints.
fn datasets(ctx: &Ctx, games: &[GameData]) -> CliResult<(CteDataset<F>, CteDataset<F>)> {
    let corpus = ctx.corpus(games)?;
    let summary: FeatureSummary = serde_json::from_str(&std::fs::read_to_string(ctx.require(FEATURES, Stage::Features)?)?)?;
    let train = build_dataset(games, &corpus, Split::Train)?;
    let validation = build_dataset(games, &corpus, Split::Validation)?;
    if summarize(&train) != summary.train || summarize(&validation) != summary.validation {
        return Err(CliError::Dependency { stage: Stage::Features.name(), artifact: format!("{FEATURES} matching the current corpus") });
    }
    Ok((train, validation))
}

// ---------------------------------------------------------------- gmm

pub fn gmm(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    let (train, _) = datasets(ctx, &games)?;
    let s = &ctx.cfg.gmm;
    let targets = GmmTargets::fit(&train, &s.k_values, ctx.seeds.gmm, &s.gmm_config(), s.soft_targets)?;
    let mut csv = String::from("k,bic,log_likelihood,silhouette\n");
    for k in &targets.scores {
        csv.push_str(&format!("{},{},{},{}\n", k.k, k.bic, k.log_likelihood, k.silhouette.map_or("na".into(), |v| v.to_string())));
    }
    ctx.write("gmm/bic.csv", csv.as_bytes())?;
    log::info!("gmm: chose k = {}", targets.k());
    ctx.write(GMM, &to_json(&targets)?)
}

fn load_gmm(ctx: &Ctx) -> CliResult<GmmTargets> {
    Ok(serde_json::from_str(&std::fs::read_to_string(ctx.require(GMM, Stage::Gmm)?)?)?)
}

// ---------------------------------------------------------------- train-ae

pub fn train_ae(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    let (train, validation) = datasets(ctx, &games)?;
    let targets = load_gmm(ctx)?;
    let s = &ctx.cfg.autoencoder;
    let full = s.model_config(targets.k());
    let mut variants = vec![("cte", full.clone(), CTE)];
    if s.ablation {
        variants.push(("cte_ablation", full.ablated(), CTE_ABLATION));
    }
    for (name, model_cfg, file) in variants {
        let seed = salt(ctx.seeds.autoencoder, name);
        let (model, report) = train_cte(&train, &validation, &targets, &model_cfg, &s.train_config(), seed)?;
        ctx.write(&format!("ae/{name}_curves.csv"), report.curves_csv().as_bytes())?;
        let eval = evaluate_cte(&model, &validation, &targets)?;
        log::info!("{name}: validation affordance F1 {:.3}, cluster accuracy {:.3}, separation {:?}", eval.affordance_f1, eval.cluster_accuracy, eval.separation_ratio);
        ctx.write(&format!("ae/{name}_report.json"), &to_json(&serde_json::json!({ "train": report, "validation": eval, "version": model.version() }))?)?;
        check_aborted(name, &report.aborted)?;
        model.save(&ctx.output(file)?, seed)?;
        ctx.versions.insert(name.to_string(), model.version());
    }
    Ok(())
}

// ---------------------------------------------------------------- embed

/// Games whose levels get embedded: the clustered games and the generator game.
fn embed_games(ctx: &Ctx) -> Vec<String> {
    let mut names = ctx.cfg.dbscan_games();
    let gen = ctx.cfg.generator_game().to_string();
    if !names.contains(&gen) {
        names.push(gen);
    }
    names
}

fn embed_all(ctx: &mut Ctx, games: &[GameData], names: &[String], model_file: &str, out: &str) -> CliResult<()> {
    let model = CteModel::<F>::load(&ctx.require(model_file, Stage::TrainAe)?)?;
    let mut levels = Vec::new();
    for g in games.iter().filter(|g| names.contains(&g.name)) {
        if !g.has_images() {
            return Err(CliError::Config(format!("game {} must have level images to be embedded", g.name)));
        }
        for l in &g.levels {
            levels.push(embed_level(&model, &g.source(l)?)?);
        }
    }
    let index = out.replace(".bin", "_index.csv");
    save_embeddings(&levels, &ctx.output(out)?, &ctx.output(&index)?)?;
    ctx.versions.insert(model_file.to_string(), model.version());
    Ok(())
}

pub fn embed(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    ctx.corpus(&games)?;
    embed_all(ctx, &games, &embed_games(ctx), CTE, EMBEDDINGS)?;
    if ctx.path(CTE_ABLATION).exists() {
        embed_all(ctx, &games, &[ctx.cfg.generator_game().to_string()], CTE_ABLATION, EMBEDDINGS_ABLATION)?;
    }
    Ok(())
}

fn embeddings(ctx: &Ctx, file: &str) -> CliResult<BTreeMap<String, EmbeddedLevel<F>>> {
    let stage = if ctx.path(CTE).exists() || file == EMBEDDINGS { Stage::Embed } else { Stage::TrainAe };
    Ok(load_embeddings::<F>(&ctx.require(file, stage)?)?.into_iter().map(|e| (e.level.clone(), e)).collect())
}

fn embedded<'e>(map: &'e BTreeMap<String, EmbeddedLevel<F>>, id: &str) -> CliResult<&'e EmbeddedLevel<F>> {
    map.get(id).ok_or_else(|| CliError::Dependency { stage: Stage::Embed.name(), artifact: format!("embedding of level {id}") })
}

// ---------------------------------------------------------------- dbscan

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbscanSummary {
    pub games: Vec<String>,
    pub points: usize,
    pub total_weight: f64,
    pub k: usize,
    pub eps: f64,
    pub min_pts: usize,
    pub silhouette: f64,
    pub noise_fraction: f64,
}

fn cluster_path(id: &str) -> String {
    format!("dbscan/levels/{id}.txt")
}

pub fn dbscan(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    let corpus = ctx.corpus(&games)?;
    let emb = embeddings(ctx, EMBEDDINGS)?;
    let names = ctx.cfg.dbscan_games();
    let mut rows: Vec<F> = Vec::new();
    for name in &names {
        for id in corpus.ids(name, Split::Train) {
            rows.extend_from_slice(&embedded(&emb, id)?.data);
        }
    }
    let points = WeightedPoints::dedup(LATENT, &rows)?;
    let dist = DistanceMatrix::new(&points);
    let s = &ctx.cfg.dbscan;
    let eps = match s.eps_from {
        EpsSource::NearestNeighbour => eps_grid(&dist, s.eps_count, s.eps_lo_pct, s.eps_hi_pct)?,
        EpsSource::Pairwise => pairwise_eps_grid(&dist, s.eps_count, s.eps_lo_pct, s.eps_hi_pct)?,
    };
    let tuned = tune_with(&points, &dist, &eps, &s.min_pts, s.max_noise, s.k_bounds())?;
    let mut csv = String::from("eps,min_pts,k,noise_fraction,silhouette\n");
    for c in &tuned.candidates {
        csv.push_str(&format!("{},{},{},{},{}\n", c.eps, c.min_pts, c.k, c.noise_fraction, c.silhouette.map_or("na".into(), |v| v.to_string())));
    }
    ctx.write("dbscan/tuning.csv", csv.as_bytes())?;
    ctx.write("dbscan/assignments.csv", assignments_csv(&tuned.model.labels).as_bytes())?;
    let summary = DbscanSummary {
        games: names,
        points: points.len(),
        total_weight: points.total_weight(),
        k: tuned.k,
        eps: tuned.model.eps,
        min_pts: tuned.model.min_pts,
        silhouette: tuned.silhouette,
        noise_fraction: tuned.model.noise_fraction(points.weights()),
    };
    log::info!("dbscan: k = {} silhouette {:.3} over {} distinct tiles", summary.k, summary.silhouette, summary.points);
    ctx.write("dbscan/summary.json", &to_json(&summary)?)?;
    tuned.model.save(&ctx.output(DBSCAN)?)?;
    for (id, e) in &emb {
        let grid = discretize(e, &tuned.model)?;
        ctx.write(&cluster_path(id), grid.to_text().as_bytes())?;
    }
    Ok(())
}

fn cluster_grid(ctx: &Ctx, id: &str) -> CliResult<ClusterGrid> {
    Ok(ClusterGrid::load(&ctx.require(&cluster_path(id), Stage::Dbscan)?)?)
}

/// Member index over the clustered games' training levels.
fn member_index(ctx: &Ctx, games: &[GameData], corpus: &CorpusSummary, emb: &BTreeMap<String, EmbeddedLevel<F>>) -> CliResult<ClusterMemberIndex<F>> {
    let model = DbscanModel::load(&ctx.require(DBSCAN, Stage::Dbscan)?)?;
    let mut parts = Vec::new();
    // Same order as the dbscan stage, so fitted labels line up with points.
    for name in ctx.cfg.dbscan_games() {
        let g = games.iter().find(|g| g.name == name).expect("validated dbscan game");
        for id in corpus.ids(&g.name, Split::Train) {
            let l = g.level(id).expect("corpus checked");
            parts.push((embedded(emb, id)?, cluster_grid(ctx, id)?, l));
        }
    }
    // Noise tiles belong to no cluster, so only labelled points become members.
    let rows: Vec<F> = parts.iter().flat_map(|(e, _, _)| e.data.iter().copied()).collect();
    let points = WeightedPoints::dedup(LATENT, &rows)?;
    let labelled: HashSet<Vec<u32>> = (0..points.len()).filter(|&i| model.labels.get(i).is_some_and(|l| l.is_some())).map(|i| points.point(i).iter().map(|&x| (x as F).to_bits()).collect()).collect();
    if labelled.is_empty() || points.len() != model.labels.len() {
        return Err(CliError::Dependency { stage: Stage::Dbscan.name(), artifact: format!("{DBSCAN} fitted on the current embeddings") });
    }
    let levels: Vec<IndexedLevel<F>> =
        parts.iter().map(|(e, c, l)| IndexedLevel { embedded: e, clusters: c, image: l.image.as_ref().expect("embedded levels have images"), grid: Some(&l.grid) }).collect();
    Ok(ClusterMemberIndex::build_where(model.k, &levels, |v| labelled.contains(&v.iter().map(|x| x.to_bits()).collect::<Vec<u32>>()))?)
}

/// Single-cluster index over the generator game's training levels, for
/// turning continuous-model snap vectors back into tiles.
fn flat_index(game: &GameData, corpus: &CorpusSummary, emb: &BTreeMap<String, EmbeddedLevel<F>>) -> CliResult<ClusterMemberIndex<F>> {
    let mut parts = Vec::new();
    for id in corpus.ids(&game.name, Split::Train) {
        let l = game.level(id).expect("corpus checked");
        let e = embedded(emb, id)?;
        parts.push((e, ClusterGrid::new(1, e.rows, e.cols, vec![0; e.rows * e.cols])?, l));
    }
    let levels: Vec<IndexedLevel<F>> =
        parts.iter().map(|(e, c, l)| IndexedLevel { embedded: e, clusters: c, image: l.image.as_ref().expect("embedded levels have images"), grid: Some(&l.grid) }).collect();
    Ok(ClusterMemberIndex::build(1, &levels)?)
}

// ---------------------------------------------------------------- train-gen

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primers {
    /// Used when sampling.
    pub modal: GenerationSeed,
    /// Openings of each training level, cycled by greedy continuation.
    pub openings: Vec<GenerationSeed>,
}

fn model_path(v: Variant) -> String {
    format!("gen/{}.bin", v.name())
}

fn primer_path(v: Variant) -> String {
    format!("gen/{}_primer.json", v.name())
}

const SYMBOL_VOCAB: &str = "gen/symbol_vocab.json";

fn vector_sequence(e: &EmbeddedLevel<F>, order: ScanOrder) -> Vec<F> {
    let mut out = Vec::with_capacity(e.data.len());
    for i in 0..e.rows * e.cols {
        let (r, c) = order.position(i, e.rows, e.cols);
        out.extend_from_slice(e.get(r, c));
    }
    out
}

fn generator_game<'g>(ctx: &Ctx, games: &'g [GameData]) -> &'g GameData {
    games.iter().find(|g| g.name == ctx.cfg.generator_game()).expect("validated generator game")
}

/// Training and validation corpora of one variant.
fn variant_corpus(ctx: &Ctx, variant: Variant, game: &GameData, corpus: &CorpusSummary) -> CliResult<(SequenceCorpus<F>, SequenceCorpus<F>, Option<Vocab>)> {
    let order = ctx.cfg.generator.order;
    let ids = |s: Split| corpus.ids(&game.name, s);
    match variant {
        Variant::Symbol => {
            let vocab = Vocab::from_levels(game.levels.iter().map(|l| &l.grid));
            let seqs = |s: Split| -> CliResult<Vec<Vec<usize>>> { ids(s).into_iter().map(|id| Ok(linearize(&vocab.encode(&game.level(id).expect("corpus checked").grid)?, order))).collect() };
            let (t, v) = (seqs(Split::Train)?, seqs(Split::Validation)?);
            Ok((SequenceCorpus::Tokens { vocab: vocab.len(), seqs: t }, SequenceCorpus::Tokens { vocab: vocab.len(), seqs: v }, Some(vocab)))
        }
        Variant::TwoStep => {
            let k = DbscanModel::load(&ctx.require(DBSCAN, Stage::Dbscan)?)?.k;
            let seqs = |s: Split| -> CliResult<Vec<Vec<usize>>> { ids(s).into_iter().map(|id| Ok(linearize(&cluster_grid(ctx, id)?, order))).collect() };
            Ok((SequenceCorpus::Tokens { vocab: k, seqs: seqs(Split::Train)? }, SequenceCorpus::Tokens { vocab: k, seqs: seqs(Split::Validation)? }, None))
        }
        Variant::Continuous | Variant::ContinuousAblation => {
            let file = if variant == Variant::Continuous { EMBEDDINGS } else { EMBEDDINGS_ABLATION };
            let emb = embeddings(ctx, file)?;
            let seqs = |s: Split| -> CliResult<Vec<Vec<F>>> { ids(s).into_iter().map(|id| Ok(vector_sequence(embedded(&emb, id)?, order))).collect() };
            Ok((SequenceCorpus::Vectors { dim: LATENT, seqs: seqs(Split::Train)? }, SequenceCorpus::Vectors { dim: LATENT, seqs: seqs(Split::Validation)? }, None))
        }
    }
}

fn token_sequences(model: &SequenceModel<F>, corpus: &SequenceCorpus<F>) -> CliResult<Vec<Vec<usize>>> {
    match corpus {
        SequenceCorpus::Tokens { seqs, .. } => Ok(seqs.clone()),
        SequenceCorpus::Vectors { dim, seqs } => seqs.iter().map(|s| s.chunks_exact(*dim).map(|v| model.snap(v).map_err(CliError::from)).collect()).collect(),
    }
}

pub fn train_gen(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    let corpus = ctx.corpus(&games)?;
    let game = generator_game(ctx, &games);
    let cfg = ctx.cfg.generator.model_config();
    for &variant in &ctx.cfg.generator.variants.clone() {
        let (train, validation, vocab) = variant_corpus(ctx, variant, game, &corpus)?;
        if let Some(v) = &vocab {
            ctx.write(SYMBOL_VOCAB, &to_json(v)?)?;
        }
        let seed = salt(ctx.seeds.generator, variant.name());
        let val = (!validation.is_empty()).then_some(&validation);
        let (model, report) = train_sequence_model(&train, val, &cfg, seed)?;
        let eval = val.map(|v| model.evaluate(v)).transpose()?;
        let baseline = match (&train, &validation) {
            (SequenceCorpus::Tokens { vocab, seqs }, SequenceCorpus::Tokens { seqs: vs, .. }) if !vs.is_empty() => Some(unigram_perplexity(seqs, vs, *vocab)),
            _ => None,
        };
        log::info!("{}: validation {:?}, unigram perplexity {:?}", variant.name(), eval, baseline);
        ctx.write(
            &format!("gen/{}_report.json", variant.name()),
            &to_json(&serde_json::json!({ "train": report, "validation": eval, "unigram_perplexity": baseline }))?,
        )?;
        check_aborted(variant.name(), &report.aborted)?;
        let tokens = token_sequences(&model, &train)?;
        let desc = format!("{} training levels of {}", tokens.len(), game.name);
        let modal = GenerationSeed::modal(&tokens, cfg.history, format!("modal opening of {desc}"))?;
        let openings = tokens
            .iter()
            .map(|t| GenerationSeed::modal(std::slice::from_ref(t), cfg.history, "opening of one training level"))
            .collect::<cte_core::Result<Vec<_>>>()?;
        ctx.write(&primer_path(variant), &to_json(&Primers { modal, openings })?)?;
        model.save(&ctx.output(&model_path(variant))?, seed)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- generate

fn level_size(ctx: &Ctx, game: &GameData) -> (usize, usize) {
    let g = &ctx.cfg.generate;
    if g.rows > 0 {
        (g.rows, g.cols)
    } else {
        (game.levels[0].grid.rows(), game.levels[0].grid.cols())
    }
}

fn generated_dir(v: Variant) -> String {
    match v {
        Variant::TwoStep => "translate/two_step".into(),
        _ => format!("generate/{}", v.name()),
    }
}

fn level_name(v: Variant, i: usize) -> String {
    format!("{}-{i:03}", v.name())
}

pub fn generate(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    let corpus = ctx.corpus(&games)?;
    let game = generator_game(ctx, &games);
    let (rows, cols) = level_size(ctx, game);
    let (count, temperature) = (ctx.cfg.generate.count, ctx.cfg.generate.temperature);
    for &variant in &ctx.cfg.generator.variants.clone() {
        let model = SequenceModel::<F>::load(&ctx.require(&model_path(variant), Stage::TrainGen)?)?;
        let primers: Primers = serde_json::from_str(&std::fs::read_to_string(ctx.require(&primer_path(variant), Stage::TrainGen)?)?)?;
        ctx.versions.insert(model_path(variant), sha256_hex(&std::fs::read(ctx.path(&model_path(variant)))?));
        let mut rng = ChaCha8Rng::seed_from_u64(salt(ctx.seeds.sample, variant.name()));
        match variant {
            Variant::Symbol => {
                let vocab: Vocab = serde_json::from_str(&std::fs::read_to_string(ctx.require(SYMBOL_VOCAB, Stage::TrainGen)?)?)?;
                for i in 0..count {
                    let grid = sample_level(&model, &primers.modal, rows, cols, temperature, &mut rng)?;
                    ctx.write(&format!("generate/symbol/{}.txt", level_name(variant, i)), vocab.decode(&grid)?.to_vglc_string().as_bytes())?;
                }
            }
            Variant::TwoStep => {
                for i in 0..count {
                    let grid = sample_level(&model, &primers.modal, rows, cols, temperature, &mut rng)?;
                    ctx.write(&format!("generate/two_step/{}.txt", level_name(variant, i)), grid.to_text().as_bytes())?;
                }
            }
            Variant::Continuous | Variant::ContinuousAblation => {
                let file = if variant == Variant::Continuous { EMBEDDINGS } else { EMBEDDINGS_ABLATION };
                let index = flat_index(game, &corpus, &embeddings(ctx, file)?)?;
                if primers.openings.is_empty() {
                    return Err(CliError::Dependency { stage: Stage::TrainGen.name(), artifact: format!("{} with level openings", primer_path(variant)) });
                }
                for i in 0..count {
                    let snaps = greedy_rollout(&model, &primers.openings[i % primers.openings.len()], rows, cols)?;
                    let data: Vec<F> = snaps.cells().iter().flat_map(|&s| model.snap_vector(s).to_vec()).collect();
                    let level = EmbeddedLevel { rows, cols, data, game: game.name.clone(), level: level_name(variant, i), model_version: String::new() };
                    let symbols = render_level(&level, &index, None)?.symbols.ok_or_else(|| CteError::MissingMapping("continuous output has tiles without symbols".into()))?;
                    ctx.write(&format!("{}/{}.txt", generated_dir(variant), level_name(variant, i)), symbols.to_vglc_string().as_bytes())?;
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- train-trans

pub fn train_trans(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    let corpus = ctx.corpus(&games)?;
    let game = generator_game(ctx, &games);
    let emb = embeddings(ctx, EMBEDDINGS)?;
    let pairs = corpus.ids(&game.name, Split::Train).into_iter().map(|id| Ok((cluster_grid(ctx, id)?, embedded(&emb, id)?.clone()))).collect::<CliResult<Vec<_>>>()?;
    let seed = ctx.seeds.translator;
    let (model, report) = train_translator(&pairs, &ctx.cfg.translator.model_config(), seed)?;
    ctx.write("trans/report.json", &to_json(&report)?)?;
    check_aborted("translator", &report.aborted)?;
    model.save(&ctx.output(TRANSLATOR)?, seed)?;
    Ok(())
}

// ---------------------------------------------------------------- translate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelitySummary {
    pub levels: usize,
    pub ssim: MeanStd,
    pub min_ssim: f64,
    /// Fraction of tiles whose snapped embedding lies in the requested cluster.
    pub membership: f64,
}

pub fn translate(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    let corpus = ctx.corpus(&games)?;
    let game = generator_game(ctx, &games);
    let translator = Translator::<F>::load(&ctx.require(TRANSLATOR, Stage::TrainTrans)?)?;
    let emb = embeddings(ctx, EMBEDDINGS)?;
    let index = member_index(ctx, &games, &corpus, &emb)?;

    let mut csv = String::from("level,split,ssim,membership\n");
    let (mut scores, mut inside, mut cells) = (Vec::new(), 0usize, 0usize);
    for split in [Split::Validation, Split::Test] {
        for id in corpus.ids(&game.name, split) {
            let grid = cluster_grid(ctx, id)?;
            let out = translate_level(&translator, &grid, &index)?;
            let rendered = render_level(&out, &index, None)?;
            let truth = game.level(id).and_then(|l| l.image.as_ref()).expect("embedded levels have images");
            let s = ssim(&rendered.image, truth)?;
            if let Some(symbols) = &rendered.symbols {
                ctx.write(&format!("translate/heldout/{id}.txt"), symbols.to_vglc_string().as_bytes())?;
            }
            let hits = out.tiles().zip(grid.cells()).filter(|(v, &c)| index.find_exact(v).is_some_and(|(m, _)| m == c)).count();
            csv.push_str(&format!("{id},{},{s},{}\n", serde_json::to_value(split)?.as_str().unwrap_or_default(), hits as f64 / grid.cells().len() as f64));
            scores.push(s);
            inside += hits;
            cells += grid.cells().len();
        }
    }
    ctx.write("translate/fidelity.csv", csv.as_bytes())?;
    if !scores.is_empty() {
        let summary = FidelitySummary {
            levels: scores.len(),
            ssim: MeanStd::of(&scores),
            min_ssim: scores.iter().copied().fold(f64::INFINITY, f64::min),
            membership: inside as f64 / cells as f64,
        };
        log::info!("translation fidelity: SSIM {} membership {:.4}", summary.ssim, summary.membership);
        ctx.write("translate/fidelity.json", &to_json(&summary)?)?;
    }

    if ctx.cfg.generator.variants.contains(&Variant::TwoStep) {
        let dir = ctx.require("generate/two_step", Stage::Generate)?;
        for (id, text) in read_dir_texts(&dir)? {
            let out = translate_level(&translator, &ClusterGrid::parse(&text)?, &index)?;
            let rendered = render_level(&out, &index, None)?;
            let symbols = rendered.symbols.ok_or_else(|| CteError::MissingMapping("translated tiles without symbols".into()))?;
            ctx.write(&format!("translate/two_step/{id}.txt"), symbols.to_vglc_string().as_bytes())?;
        }
    }
    Ok(())
}

/// `(stem, contents)` of every `.txt` file in `dir`, sorted by name.
fn read_dir_texts(dir: &Path) -> CliResult<Vec<(String, String)>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "txt")).collect();
    files.sort();
    files.into_iter().map(|f| Ok((f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string(), std::fs::read_to_string(&f)?))).collect()
}

/// Symbol levels of a variant, `None` when it has not been generated.
fn variant_levels(ctx: &Ctx, v: Variant) -> CliResult<Option<Vec<(String, LevelGrid)>>> {
    let dir = ctx.path(&generated_dir(v));
    if !dir.is_dir() {
        return Ok(None);
    }
    let levels = read_dir_texts(&dir)?.into_iter().map(|(id, text)| Ok((id, parse_vglc_level(&text)?))).collect::<CliResult<Vec<_>>>()?;
    Ok((!levels.is_empty()).then_some(levels))
}

// ---------------------------------------------------------------- render

pub fn render(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    let game = generator_game(ctx, &games);
    let tileset = game.tileset()?;
    let mut any = false;
    for v in Variant::ALL {
        let Some(levels) = variant_levels(ctx, v)? else { continue };
        any = true;
        for (id, grid) in levels {
            render_symbols(&grid, &tileset)?.save_png(&ctx.output(&format!("render/{}/{id}.png", v.name()))?)?;
        }
    }
    if !any {
        return Err(CliError::Dependency { stage: Stage::Generate.name(), artifact: "generated levels".into() });
    }
    Ok(())
}

// ---------------------------------------------------------------- metrics

fn metrics_table(rows: &[(String, LevelMetrics)]) -> String {
    let mut s = format!("group,{}\n", LevelMetrics::CSV_HEADER);
    for (group, m) in rows {
        s.push_str(&format!("{},{}\n", csv_field(group), m.csv_row()));
    }
    s
}

/// Parses a table written by the metrics stage.
pub fn read_metrics_table(text: &str) -> CliResult<Vec<(String, LevelMetrics)>> {
    let bad = |line: usize, m: &str| CliError::Core(CteError::Format { line, message: m.to_string() });
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(i + 1, "expected 9 fields"));
        }
        let num = |j: usize| f[j].parse::<f64>().map_err(|_| bad(i + 1, &format!("bad number {:?}", f[j])));
        let flag = |s: &str| s.parse::<bool>().map_err(|_| bad(i + 1, &format!("bad flag {s:?}")));
        out.push((
            f[0].to_string(),
            LevelMetrics {
                level: f[1].to_string(),
                density: num(2)?,
                leniency: num(3)?,
                linearity: num(4)?,
                interestingness: num(5)?,
                enemy_sparsity: num(6)?,
                no_enemies: flag(f[7])?,
                playable: if f[8] == "na" { None } else { Some(flag(f[8])?) },
            },
        ));
    }
    Ok(out)
}

fn report_for(rows: &[(String, LevelMetrics)], group: &str) -> Option<MetricReport> {
    let levels: Vec<LevelMetrics> = rows.iter().filter(|(g, _)| g == group).map(|(_, m)| m.clone()).collect();
    (!levels.is_empty()).then(|| MetricReport::from_levels(group, levels))
}

pub fn metrics(ctx: &mut Ctx) -> CliResult<()> {
    let games = ctx.games()?;
    ctx.corpus(&games)?;
    let physics = ctx.cfg.metrics.physics();
    let mut dataset = Vec::new();
    let mut reports = Vec::new();
    for g in &games {
        let Some(roles) = &g.roles else {
            log::warn!("game {} has no roles.json; no metrics", g.name);
            continue;
        };
        let r = MetricReport::compute(&g.name, g.levels.iter().map(|l| (l.id.as_str(), &l.grid)), roles, g.physics.then_some(&physics));
        dataset.extend(r.levels.iter().map(|m| (g.name.clone(), m.clone())));
        reports.push(r);
    }
    ctx.write(DATASET_LEVELS, metrics_table(&dataset).as_bytes())?;
    ctx.write("metrics/dataset_summary.csv", aggregate_csv(&reports).as_bytes())?;

    let game = generator_game(ctx, &games);
    let mut generated = Vec::new();
    let mut reports = Vec::new();
    if let Some(roles) = &game.roles {
        for v in Variant::ALL {
            let Some(levels) = variant_levels(ctx, v)? else { continue };
            let r = MetricReport::compute(v.name(), levels.iter().map(|(id, l)| (id.as_str(), l)), roles, game.physics.then_some(&physics));
            generated.extend(r.levels.iter().map(|m| (v.name().to_string(), m.clone())));
            reports.push(r);
        }
    }
    if !generated.is_empty() {
        ctx.write(GENERATED_LEVELS, metrics_table(&generated).as_bytes())?;
        ctx.write("metrics/generated_summary.csv", aggregate_csv(&reports).as_bytes())?;
    }
    Ok(())
}

/// Dataset rows of the generator game, then each generated variant present.
fn metric_sets(ctx: &Ctx) -> CliResult<Vec<(String, MetricReport)>> {
    let game = ctx.cfg.generator_game();
    let dataset = read_metrics_table(&std::fs::read_to_string(ctx.require(DATASET_LEVELS, Stage::Metrics)?)?)?;
    let data = report_for(&dataset, game).ok_or_else(|| CliError::Config(format!("generator game {game} has no metric rows; add its roles.json")))?;
    let mut sets = vec![("dataset".to_string(), MetricReport { name: "dataset".into(), ..data })];
    let generated = match ctx.path(GENERATED_LEVELS) {
        p if p.exists() => read_metrics_table(&std::fs::read_to_string(p)?)?,
        _ => Vec::new(),
    };
    for &v in &ctx.cfg.generator.variants {
        match report_for(&generated, v.name()) {
            Some(r) => sets.push((v.name().to_string(), r)),
            None => log::warn!("variant {} is absent; its row is omitted", v.name()),
        }
    }
    Ok(sets)
}

// ---------------------------------------------------------------- expressive-range

fn metric_value(m: &LevelMetrics, name: &str) -> f64 {
    match name {
        "density" => m.density,
        "leniency" => m.leniency,
        "linearity" => m.linearity,
        "interestingness" => m.interestingness,
        "enemy_sparsity" => m.enemy_sparsity,
        other => unreachable!("validated metric name {other}"),
    }
}

pub fn expressive_range(ctx: &mut Ctx) -> CliResult<()> {
    let s = ctx.cfg.expressive_range.clone();
    let sets = metric_sets(ctx)?;
    let points: Vec<(String, Vec<(f64, f64)>)> =
        sets.iter().map(|(name, r)| (name.clone(), r.levels.iter().map(|m| (metric_value(m, &s.x), metric_value(m, &s.y))).collect())).collect();
    let xs: Vec<Vec<f64>> = points.iter().map(|(_, p)| p.iter().map(|v| v.0).collect()).collect();
    let ys: Vec<Vec<f64>> = points.iter().map(|(_, p)| p.iter().map(|v| v.1).collect()).collect();
    let x = AxisRange::covering(xs.iter().map(|v| v.as_slice()))?;
    let y = AxisRange::covering(ys.iter().map(|v| v.as_slice()))?;
    let grids = points.iter().map(|(name, p)| Ok((name.clone(), range_grid(p, x, y, s.bins)?))).collect::<CliResult<Vec<_>>>()?;
    let mut csv = String::from("set,x_metric,y_metric,intersection_with_dataset\n");
    for (name, g) in &grids {
        ctx.write(&format!("range/{name}.csv"), g.to_csv().as_bytes())?;
        g.save_png(&ctx.output(&format!("range/{name}.png"))?)?;
        csv.push_str(&format!("{name},{},{},{}\n", s.x, s.y, histogram_intersection(g, &grids[0].1)?));
    }
    ctx.write("range/intersection.csv", csv.as_bytes())
}

// ---------------------------------------------------------------- compare-generators

pub fn compare_generators(ctx: &mut Ctx) -> CliResult<()> {
    let sets = metric_sets(ctx)?;
    let reports: Vec<MetricReport> = sets.into_iter().map(|(_, r)| r).collect();
    ctx.write("compare/table.csv", aggregate_csv(&reports).as_bytes())?;
    let summary: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "variant": r.name,
                "levels": r.levels.len(),
                "density": r.density,
                "leniency": r.leniency,
                "linearity": r.linearity,
                "interestingness": r.interestingness,
                "enemy_sparsity": r.enemy_sparsity,
                "playability": r.playability,
            })
        })
        .collect();
    ctx.write("compare/table.json", &to_json(&summary)?)
}
