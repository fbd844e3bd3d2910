//! Stacked-LSTM next-token models over linearized levels.
//!
//! Distribution mode predicts a softmax over a finite vocabulary (cluster ids
//! or tile symbols). Regression mode predicts the next embedding directly and
//! continues from the nearest training embedding.

use super::grid::{delinearize, ClusterGrid, ScanOrder};
use crate::error::{CteError, Result};
use crate::neuralkit::act::softmax_inplace;
use crate::neuralkit::lstm::LstmStepCache;
use crate::neuralkit::{argmax, categorical_sample, clip_grad_norm, optimizer_step, AdamConfig, AdamState, Container, Dense, Lstm, LstmState, Module, NamedTensor, Param};
use crate::scalar::{sq_dist, Scalar};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

const CHECKPOINT_KIND: &str = "cte-sequence";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceMode {
    Distribution,
    Regression,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceModelConfig {
    pub hidden: usize,
    pub layers: usize,
    /// Truncated-BPTT window and primer length.
    pub history: usize,
    pub order: ScanOrder,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub grad_clip: f64,
}

impl Default for SequenceModelConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            layers: 3,
            history: 200,
            order: ScanOrder::RowsBottomUp,
            epochs: 20,
            batch_size: 8,
            adam: AdamConfig { lr: 2e-3, ..Default::default() },
            grad_clip: 5.0,
        }
    }
}

/// Training sequences, already linearized.
#[derive(Clone, Debug, PartialEq)]
pub enum SequenceCorpus<T> {
    Tokens { vocab: usize, seqs: Vec<Vec<usize>> },
    /// Each sequence is flat, `len x dim`.
    Vectors { dim: usize, seqs: Vec<Vec<T>> },
}

impl<T: Scalar> SequenceCorpus<T> {
    pub fn mode(&self) -> SequenceMode {
        match self {
            SequenceCorpus::Tokens { .. } => SequenceMode::Distribution,
            SequenceCorpus::Vectors { .. } => SequenceMode::Regression,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SequenceCorpus::Tokens { vocab, .. } => *vocab,
            SequenceCorpus::Vectors { dim, .. } => *dim,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SequenceCorpus::Tokens { seqs, .. } => seqs.len(),
            SequenceCorpus::Vectors { seqs, .. } => seqs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn seq_len(&self, i: usize) -> usize {
        match self {
            SequenceCorpus::Tokens { seqs, .. } => seqs[i].len(),
            SequenceCorpus::Vectors { dim, seqs } => seqs[i].len() / dim,
        }
    }

    /// Input encoding of token `t` of sequence `i` (one-hot or the vector).
    fn write_token(&self, i: usize, t: usize, out: &mut [T]) {
        match self {
            SequenceCorpus::Tokens { seqs, .. } => out[seqs[i][t]] = T::one(),
            SequenceCorpus::Vectors { dim, seqs } => out.copy_from_slice(&seqs[i][t * dim..(t + 1) * dim]),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() || self.dim() == 0 {
            return Err(CteError::Empty("sequence corpus has no sequences".into()));
        }
        match self {
            SequenceCorpus::Tokens { vocab, seqs } => {
                if let Some(bad) = seqs.iter().flatten().find(|&&t| t >= *vocab) {
                    return Err(CteError::InvalidArgument(format!("token {bad} outside vocabulary of {vocab}")));
                }
            }
            SequenceCorpus::Vectors { dim, seqs } => {
                if let Some(s) = seqs.iter().find(|s| s.len() % dim != 0) {
                    return Err(CteError::dim("vector sequence", format!("multiple of {dim}"), s.len()));
                }
            }
        }
        if (0..self.len()).all(|i| self.seq_len(i) < 2) {
            return Err(CteError::Empty("every sequence is shorter than two tokens".into()));
        }
        Ok(())
    }
}

/// Primer fed before generation; its tokens also open the generated level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSeed {
    pub tokens: Vec<usize>,
    pub description: String,
}

impl GenerationSeed {
    /// Most frequent token at each of the first `history` positions (ties to
    /// the lowest id). On level corpora this is the typical opening rows,
    /// e.g. flat ground.
    pub fn modal(seqs: &[Vec<usize>], history: usize, description: impl Into<String>) -> Result<Self> {
        let mut tokens = Vec::with_capacity(history);
        for t in 0..history {
            let mut counts = std::collections::BTreeMap::new();
            for s in seqs.iter().filter(|s| s.len() > t) {
                *counts.entry(s[t]).or_insert(0usize) += 1;
            }
            let best = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(&k, _)| k);
            tokens.push(best.ok_or_else(|| CteError::Empty(format!("no sequence reaches position {t}")))?);
        }
        Ok(Self { tokens, description: description.into() })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceModel<T> {
    pub config: SequenceModelConfig,
    pub mode: SequenceMode,
    /// Vocabulary size or vector width.
    pub dim: usize,
    layers: Vec<Lstm<T>>,
    head: Dense<T>,
    /// Distinct training vectors, `n x dim`, for regression continuation.
    snap_table: Vec<T>,
    pub trained: bool,
}

/// Per-epoch mean training loss and optional validation loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: usize,
    pub aborted: Option<String>,
}

/// Held-out next-token statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEval {
    /// Mean cross-entropy (distribution) or per-component MSE (regression).
    pub loss: f64,
    pub perplexity: Option<f64>,
    pub accuracy: Option<f64>,
}

struct ChunkPass<T> {
    caches: Vec<Vec<LstmStepCache<T>>>,
    tops: Vec<Vec<T>>,
    outputs: Vec<Vec<T>>,
    states: Vec<LstmState<T>>,
}

impl<T: Scalar> SequenceModel<T> {
    pub fn new(config: SequenceModelConfig, mode: SequenceMode, dim: usize, seed: u64) -> Result<Self> {
        if config.layers == 0 || config.hidden == 0 || dim == 0 || config.history == 0 {
            return Err(CteError::InvalidArgument("sequence model needs layers, hidden units, history and a non-empty token space".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..config.layers).map(|l| Lstm::new(&format!("lstm{l}"), if l == 0 { dim } else { config.hidden }, config.hidden, &mut rng)).collect();
        let head = Dense::new("head", config.hidden, dim, &mut rng);
        Ok(Self { config, mode, dim, layers, head, snap_table: Vec::new(), trained: false })
    }

    pub fn snap_table_len(&self) -> usize {
        self.snap_table.len() / self.dim
    }

    pub fn snap_vector(&self, i: usize) -> &[T] {
        &self.snap_table[i * self.dim..(i + 1) * self.dim]
    }

    /// Installs the continuation table, dropping duplicate rows.
    pub fn set_snap_table(&mut self, rows: &[T]) {
        let mut seen = HashSet::new();
        self.snap_table.clear();
        for r in rows.chunks_exact(self.dim) {
            let key: Vec<u64> = r.iter().map(|v| v.as_f64().to_bits()).collect();
            if seen.insert(key) {
                self.snap_table.extend_from_slice(r);
            }
        }
    }

    /// Nearest table row to `v`; ties go to the lowest index.
    pub fn snap(&self, v: &[T]) -> Result<usize> {
        let n = self.snap_table_len();
        if n == 0 {
            return Err(CteError::Model("regression model has no snap table".into()));
        }
        let mut best = (0, f64::INFINITY);
        for i in 0..n {
            let d = sq_dist(self.snap_vector(i), v).as_f64();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    /// Input vector for a token: one-hot id, or a snap-table row.
    pub fn token_input(&self, token: usize) -> Result<Vec<T>> {
        match self.mode {
            SequenceMode::Distribution => {
                if token >= self.dim {
                    return Err(CteError::InvalidArgument(format!("token {token} outside vocabulary of {}", self.dim)));
                }
                let mut x = vec![T::zero(); self.dim];
                x[token] = T::one();
                Ok(x)
            }
            SequenceMode::Regression => {
                if token >= self.snap_table_len() {
                    return Err(CteError::InvalidArgument(format!("snap index {token} outside table of {}", self.snap_table_len())));
                }
                Ok(self.snap_vector(token).to_vec())
            }
        }
    }

    pub fn zero_state(&self, batch: usize) -> Vec<LstmState<T>> {
        (0..self.layers.len()).map(|_| LstmState::zeros(batch, self.config.hidden)).collect()
    }

    /// One batch-1 step; returns logits or the predicted vector.
    pub fn step(&self, x: &[T], states: &mut [LstmState<T>]) -> Result<Vec<T>> {
        let mut h = x.to_vec();
        for (layer, st) in self.layers.iter().zip(states.iter_mut()) {
            let (next, _) = layer.step(&h, st, 1)?;
            h.clone_from(&next.h);
            *st = next;
        }
        self.head.forward(&h, 1)
    }

    fn forward_chunk(&self, xs: &[Vec<T>], states: Vec<LstmState<T>>, batch: usize) -> Result<ChunkPass<T>> {
        let mut inputs = xs.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut finals = Vec::with_capacity(self.layers.len());
        for (layer, st) in self.layers.iter().zip(states) {
            let (outs, c, fin) = layer.forward_seq(&inputs, st, batch)?;
            caches.push(c);
            finals.push(fin);
            inputs = outs;
        }
        let outputs = inputs.iter().map(|h| self.head.forward(h, batch)).collect::<Result<Vec<_>>>()?;
        Ok(ChunkPass { caches, tops: inputs, outputs, states: finals })
    }

    /// Loss summed over masked rows and its gradient w.r.t. outputs, each
    /// scaled by `1 / norm`.
    fn chunk_loss(&self, pass: &ChunkPass<T>, targets: &[Vec<T>], mask: &[Vec<bool>], norm: f64) -> Result<(f64, Vec<Vec<T>>, usize)> {
        let d = self.dim;
        let mut total = 0.0;
        let mut correct = 0;
        let scale = T::lit(1.0 / norm);
        let mut grads = Vec::with_capacity(pass.outputs.len());
        for ((out, tgt), m) in pass.outputs.iter().zip(targets).zip(mask) {
            let mut g = vec![T::zero(); out.len()];
            for (b, &on) in m.iter().enumerate() {
                if !on {
                    continue;
                }
                let o = &out[b * d..(b + 1) * d];
                let t = &tgt[b * d..(b + 1) * d];
                let gb = &mut g[b * d..(b + 1) * d];
                match self.mode {
                    SequenceMode::Distribution => {
                        let mut p = o.to_vec();
                        softmax_inplace(&mut p);
                        let ti = t.iter().position(|&v| v > T::zero()).unwrap_or(0);
                        total -= p[ti].as_f64().max(1e-300).ln();
                        let pf: Vec<f64> = p.iter().map(|v| v.as_f64()).collect();
                        if argmax(&pf) == ti {
                            correct += 1;
                        }
                        for j in 0..d {
                            gb[j] = (p[j] - t[j]) * scale;
                        }
                    }
                    SequenceMode::Regression => {
                        let inv = T::lit(2.0 / d as f64);
                        for j in 0..d {
                            let e = o[j] - t[j];
                            total += (e * e).as_f64() / d as f64;
                            gb[j] = e * inv * scale;
                        }
                    }
                }
            }
            grads.push(g);
        }
        if !total.is_finite() {
            return Err(CteError::Numeric(format!("sequence loss is {total}")));
        }
        Ok((total / norm, grads, correct))
    }

    fn backward_chunk(&mut self, pass: &ChunkPass<T>, d_out: &[Vec<T>], batch: usize) {
        let mut dh: Vec<Vec<T>> = pass.tops.iter().zip(d_out).map(|(h, g)| self.head.backward(h, g, batch)).collect();
        for (layer, caches) in self.layers.iter_mut().zip(&pass.caches).rev() {
            dh = layer.backward_seq(caches, &dh, batch);
        }
    }

    /// Inputs, one-hot or vector targets and masks for steps `t0..t1` of
    /// the sequences `idx`.
    fn chunk_data(&self, corpus: &SequenceCorpus<T>, idx: &[usize], t0: usize, t1: usize) -> (Vec<Vec<T>>, Vec<Vec<T>>, Vec<Vec<bool>>) {
        let (b, d) = (idx.len(), self.dim);
        let mut xs = Vec::with_capacity(t1 - t0);
        let mut ys = Vec::with_capacity(t1 - t0);
        let mut ms = Vec::with_capacity(t1 - t0);
        for t in t0..t1 {
            let mut x = vec![T::zero(); b * d];
            let mut y = vec![T::zero(); b * d];
            let mut m = vec![false; b];
            for (r, &i) in idx.iter().enumerate() {
                let len = corpus.seq_len(i);
                if t < len {
                    corpus.write_token(i, t, &mut x[r * d..(r + 1) * d]);
                }
                if t + 1 < len {
                    corpus.write_token(i, t + 1, &mut y[r * d..(r + 1) * d]);
                    m[r] = true;
                }
            }
            xs.push(x);
            ys.push(y);
            ms.push(m);
        }
        (xs, ys, ms)
    }

    /// Mean next-token loss, perplexity and accuracy over a corpus.
    pub fn evaluate(&self, corpus: &SequenceCorpus<T>) -> Result<SequenceEval> {
        if corpus.mode() != self.mode || corpus.dim() != self.dim {
            return Err(CteError::Mode("corpus does not match the model's token space".into()));
        }
        let (mut loss, mut count, mut correct) = (0.0, 0usize, 0usize);
        let idx: Vec<usize> = (0..corpus.len()).collect();
        for batch in idx.chunks(self.config.batch_size.max(1)) {
            let max_len = batch.iter().map(|&i| corpus.seq_len(i)).max().unwrap_or(0);
            let mut states = self.zero_state(batch.len());
            let mut t0 = 0;
            while t0 + 1 < max_len {
                let t1 = (t0 + self.config.history).min(max_len - 1);
                let (xs, ys, ms) = self.chunk_data(corpus, batch, t0, t1);
                let pass = self.forward_chunk(&xs, states, batch.len())?;
                let n = ms.iter().flatten().filter(|&&m| m).count();
                let (l, _, c) = self.chunk_loss(&pass, &ys, &ms, 1.0)?;
                loss += l;
                count += n;
                correct += c;
                states = pass.states;
                t0 = t1;
            }
        }
        if count == 0 {
            return Err(CteError::Empty("no next-token targets to evaluate".into()));
        }
        let mean = loss / count as f64;
        Ok(match self.mode {
            SequenceMode::Distribution => SequenceEval { loss: mean, perplexity: Some(mean.exp()), accuracy: Some(correct as f64 / count as f64) },
            SequenceMode::Regression => SequenceEval { loss: mean, perplexity: None, accuracy: None },
        })
    }

    pub fn to_container(&self, seed: u64) -> Container {
        let meta = serde_json::json!({
            "config": self.config,
            "mode": self.mode,
            "dim": self.dim,
            "trained": self.trained,
        });
        let mut c = Container::new(CHECKPOINT_KIND, seed, meta);
        c.push_module(self);
        c.push(NamedTensor::new("snap_table", vec![self.snap_table_len(), self.dim], &self.snap_table));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != CHECKPOINT_KIND {
            return Err(CteError::Checkpoint(format!("expected {CHECKPOINT_KIND}, found {}", c.kind)));
        }
        let config: SequenceModelConfig = serde_json::from_value(c.meta["config"].clone())?;
        let mode: SequenceMode = serde_json::from_value(c.meta["mode"].clone())?;
        let dim = c.meta["dim"].as_u64().ok_or_else(|| CteError::Checkpoint("missing dim".into()))? as usize;
        let mut m = Self::new(config, mode, dim, 0)?;
        c.load_module(&mut m)?;
        m.snap_table = c.get("snap_table")?.to_scalars();
        m.trained = c.meta["trained"].as_bool().unwrap_or(false);
        Ok(m)
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        self.to_container(seed).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

impl<T: Scalar> Module<T> for SequenceModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = self.layers.iter().flat_map(|l| l.params()).collect();
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = self.layers.iter_mut().flat_map(|l| l.params_mut()).collect();
        v.extend(self.head.params_mut());
        v
    }
}

/// Trains with truncated BPTT over `history`-step chunks, carrying state
/// across chunks of the same sequence. With a validation corpus the weights
/// of the best validation epoch are kept.
pub fn train_sequence_model<T: Scalar>(
    corpus: &SequenceCorpus<T>,
    validation: Option<&SequenceCorpus<T>>,
    config: &SequenceModelConfig,
    seed: u64,
) -> Result<(SequenceModel<T>, SequenceReport)> {
    corpus.validate()?;
    let mut model = SequenceModel::new(config.clone(), corpus.mode(), corpus.dim(), seed)?;
    if let SequenceCorpus::Vectors { seqs, .. } = corpus {
        model.set_snap_table(&seqs.concat());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e9);
    let mut state = AdamState::<T>::new();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut report = SequenceReport { train_loss: Vec::new(), validation_loss: Vec::new(), best_epoch: 0, aborted: None };
    let mut best: Option<(f64, Vec<T>)> = None;
    'epochs: for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size.max(1)) {
            let max_len = batch.iter().map(|&i| corpus.seq_len(i)).max().unwrap_or(0);
            let mut states = model.zero_state(batch.len());
            let mut t0 = 0;
            while t0 + 1 < max_len {
                let t1 = (t0 + config.history).min(max_len - 1);
                let (xs, ys, ms) = model.chunk_data(corpus, batch, t0, t1);
                let n = ms.iter().flatten().filter(|&&m| m).count();
                if n == 0 {
                    break;
                }
                let result = model.forward_chunk(&xs, states, batch.len()).and_then(|pass| {
                    let (l, grads, _) = model.chunk_loss(&pass, &ys, &ms, n as f64)?;
                    model.zero_grad();
                    model.backward_chunk(&pass, &grads, batch.len());
                    let norm = clip_grad_norm(&mut model.params_mut(), config.grad_clip);
                    if !norm.is_finite() {
                        return Err(CteError::Numeric("non-finite gradient".into()));
                    }
                    optimizer_step(&mut model.params_mut(), &mut state, &config.adam)?;
                    Ok((l, pass.states))
                });
                match result {
                    Ok((l, s)) => {
                        sum += l * n as f64;
                        count += n;
                        states = s;
                    }
                    Err(CteError::Numeric(m)) => {
                        log::warn!("sequence training diverged in epoch {epoch}: {m}");
                        report.aborted = Some(format!("epoch {epoch}: {m}"));
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
                t0 = t1;
            }
        }
        let train_loss = sum / count.max(1) as f64;
        report.train_loss.push(train_loss);
        let score = match validation {
            Some(v) => {
                let l = model.evaluate(v)?.loss;
                report.validation_loss.push(l);
                l
            }
            None => train_loss,
        };
        log::info!("sequence epoch {epoch}: train {train_loss:.5} score {score:.5}");
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, model.flat_values()));
            report.best_epoch = epoch;
        }
    }
    if let Some((_, w)) = best {
        model.set_flat_values(&w)?;
    }
    model.zero_grad();
    model.trained = true;
    Ok((model, report))
}

/// Perplexity of `eval`'s next tokens under add-one smoothed unigram
/// frequencies from `train`.
pub fn unigram_perplexity(train: &[Vec<usize>], eval: &[Vec<usize>], vocab: usize) -> f64 {
    let mut counts = vec![1.0; vocab];
    for &t in train.iter().flatten() {
        counts[t] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let (mut nll, mut n) = (0.0, 0usize);
    for s in eval {
        for &t in s.iter().skip(1) {
            nll -= (counts[t] / total).ln();
            n += 1;
        }
    }
    (nll / n.max(1) as f64).exp()
}

fn rollout<T: Scalar>(model: &SequenceModel<T>, seed: &GenerationSeed, rows: usize, cols: usize, mut pick: impl FnMut(&[T]) -> Result<usize>) -> Result<ClusterGrid> {
    let n = rows * cols;
    if n == 0 {
        return Err(CteError::InvalidArgument("cannot generate an empty level".into()));
    }
    if seed.tokens.len() != model.config.history {
        return Err(CteError::dim("generation primer", model.config.history, seed.tokens.len()));
    }
    let mut seq: Vec<usize> = seed.tokens.iter().copied().take(n).collect();
    let mut states = model.zero_state(1);
    let mut out = Vec::new();
    for &t in &seq {
        out = model.step(&model.token_input(t)?, &mut states)?;
    }
    while seq.len() < n {
        let t = pick(&out)?;
        seq.push(t);
        if seq.len() < n {
            out = model.step(&model.token_input(t)?, &mut states)?;
        }
    }
    let k = match model.mode {
        SequenceMode::Distribution => model.dim,
        SequenceMode::Regression => model.snap_table_len(),
    };
    ClusterGrid::new(k, rows, cols, delinearize(&seq, rows, cols, model.config.order)?)
}

fn probs_of<T: Scalar>(logits: &[T]) -> Vec<f64> {
    let mut p: Vec<f64> = logits.iter().map(|v| v.as_f64()).collect();
    softmax_inplace(&mut p);
    p
}

/// Samples a level token by token after the primer. `temperature == 0`
/// takes the argmax.
pub fn sample_level<T: Scalar, R: Rng + ?Sized>(model: &SequenceModel<T>, seed: &GenerationSeed, rows: usize, cols: usize, temperature: f64, rng: &mut R) -> Result<ClusterGrid> {
    if model.mode != SequenceMode::Distribution {
        return Err(CteError::Mode("sampling needs a distribution-mode model".into()));
    }
    rollout(model, seed, rows, cols, |logits| {
        let p = probs_of(logits);
        if temperature == 0.0 {
            Ok(argmax(&p))
        } else {
            categorical_sample(&p, temperature, rng)
        }
    })
}

/// Most-likely continuation. In regression mode the cells are indices into
/// the model's snap table.
pub fn greedy_rollout<T: Scalar>(model: &SequenceModel<T>, seed: &GenerationSeed, rows: usize, cols: usize) -> Result<ClusterGrid> {
    match model.mode {
        SequenceMode::Distribution => rollout(model, seed, rows, cols, |logits| Ok(argmax(&probs_of(logits)))),
        SequenceMode::Regression => rollout(model, seed, rows, cols, |v| model.snap(v)),
    }
}
