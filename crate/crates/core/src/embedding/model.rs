//! The three-branch tile autoencoder and its weighted loss.

use crate::corpus::image::CONTEXT;
use crate::corpus::AFFORDANCE_DIM;
use crate::error::{CteError, Result};
use crate::features::EDGE_LEN;
use crate::neuralkit::act::{relu_backward, relu_inplace, sigmoid_inplace};
use crate::neuralkit::loss::{bce_with_logits, mse, softmax_ce};
use crate::neuralkit::{Container, Conv2d, ConvTranspose2d, Dense, Module, Param};
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Width of a tile embedding.
pub const LATENT: usize = 256;
/// Flattened `[3, 48, 48]` context length.
pub const CONTEXT_LEN: usize = 3 * CONTEXT * CONTEXT;
const CHECKPOINT_KIND: &str = "cte-autoencoder";

/// Weights of the image, affordance, edge and cluster terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub image: f64,
    pub affordance: f64,
    pub edge: f64,
    pub cluster: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { image: 0.5, affordance: 1.5, edge: 0.5, cluster: 0.5 }
    }
}

impl LossWeights {
    pub fn combine(&self, image: f64, affordance: f64, edge: f64, cluster: f64) -> f64 {
        self.image * image + self.affordance * affordance + self.edge * edge + self.cluster * cluster
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CteConfig {
    /// Filters of the two stride-2 context convolutions.
    pub conv1: usize,
    pub conv2: usize,
    pub context_dense: usize,
    pub affordance_dense: usize,
    pub edge_dense: usize,
    /// Number of GMM components predicted by the cluster head.
    pub clusters: usize,
    /// The ablated model drops the edge branch and head.
    pub use_edges: bool,
    pub weights: LossWeights,
}

impl Default for CteConfig {
    fn default() -> Self {
        Self { conv1: 16, conv2: 32, context_dense: 256, affordance_dense: 32, edge_dense: 64, clusters: 10, use_edges: true, weights: LossWeights::default() }
    }
}

impl CteConfig {
    /// Original-embedding ablation: no edge inputs or head, no cluster loss.
    pub fn ablated(&self) -> Self {
        let mut c = self.clone();
        c.use_edges = false;
        c.weights.edge = 0.0;
        c.weights.cluster = 0.0;
        c
    }
}

/// A batch of `n` autoencoder inputs, row-major per field.
#[derive(Clone, Debug, Default)]
pub struct CteBatch<T> {
    pub n: usize,
    pub context: Vec<T>,
    pub affordance: Vec<T>,
    pub edges: Vec<T>,
    /// One-hot GMM targets, `n x clusters`; may be empty when unused.
    pub target: Vec<T>,
}

impl<T: Scalar> CteBatch<T> {
    fn check(&self, cfg: &CteConfig) -> Result<()> {
        let n = self.n;
        if self.context.len() != n * CONTEXT_LEN {
            return Err(CteError::dim("context batch", n * CONTEXT_LEN, self.context.len()));
        }
        if self.affordance.len() != n * AFFORDANCE_DIM {
            return Err(CteError::dim("affordance batch", n * AFFORDANCE_DIM, self.affordance.len()));
        }
        if cfg.use_edges && self.edges.len() != n * EDGE_LEN {
            return Err(CteError::dim("edge batch", n * EDGE_LEN, self.edges.len()));
        }
        Ok(())
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct CteForward<T> {
    pub n: usize,
    h1: Vec<T>,
    h2: Vec<T>,
    cat: Vec<T>,
    pub latent: Vec<T>,
    dec: Vec<T>,
    up1: Vec<T>,
    /// Reconstructed context in `[0, 1]`.
    pub context: Vec<T>,
    affordance_logits: Vec<T>,
    pub affordance: Vec<T>,
    pub edges: Vec<T>,
    cluster_logits: Vec<T>,
    pub cluster_probs: Vec<T>,
}

/// Per-term and total loss of one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub image: f64,
    pub affordance: f64,
    pub edge: f64,
    pub cluster: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CteModel<T> {
    pub config: CteConfig,
    conv1: Conv2d<T>,
    conv2: Conv2d<T>,
    ctx_fc: Dense<T>,
    aff_fc: Dense<T>,
    edge_fc: Option<Dense<T>>,
    fuse: Dense<T>,
    dec_fc: Dense<T>,
    deconv1: ConvTranspose2d<T>,
    deconv2: ConvTranspose2d<T>,
    aff_head: Dense<T>,
    edge_head: Option<Dense<T>>,
    cluster_head: Dense<T>,
    /// Set once the weights come from training or a trained checkpoint.
    pub trained: bool,
}

fn concat_rows<T: Scalar>(parts: &[(&[T], usize)], n: usize) -> Vec<T> {
    let width: usize = parts.iter().map(|p| p.1).sum();
    let mut out = Vec::with_capacity(n * width);
    for r in 0..n {
        for (data, w) in parts {
            out.extend_from_slice(&data[r * w..(r + 1) * w]);
        }
    }
    out
}

fn split_rows<T: Scalar>(data: &[T], widths: &[usize], n: usize) -> Vec<Vec<T>> {
    let total: usize = widths.iter().sum();
    let mut out: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(n * w)).collect();
    for r in 0..n {
        let mut off = r * total;
        for (o, &w) in out.iter_mut().zip(widths) {
            o.extend_from_slice(&data[off..off + w]);
            off += w;
        }
    }
    out
}

/// `dL/dz` for `p = sigmoid(z)` given `dL/dp`, scaled.
fn through_sigmoid<T: Scalar>(p: &[T], dp: &[T], scale: T) -> Vec<T> {
    p.iter().zip(dp).map(|(&p, &d)| scale * d * p * (T::one() - p)).collect()
}

impl<T: Scalar> CteModel<T> {
    pub fn new(config: CteConfig, seed: u64) -> Result<Self> {
        if config.clusters == 0 {
            return Err(CteError::InvalidArgument("cluster head needs at least one component".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let conv1 = Conv2d::new("enc.conv1", 3, c.conv1, 3, 2, 1, (CONTEXT, CONTEXT), &mut rng);
        let (_, h1, w1) = conv1.out_shape();
        let conv2 = Conv2d::new("enc.conv2", c.conv1, c.conv2, 3, 2, 1, (h1, w1), &mut rng);
        let (_, h2, w2) = conv2.out_shape();
        let flat = c.conv2 * h2 * w2;
        let ctx_fc = Dense::new("enc.context", flat, c.context_dense, &mut rng);
        let aff_fc = Dense::new("enc.affordance", AFFORDANCE_DIM, c.affordance_dense, &mut rng);
        let edge_fc = c.use_edges.then(|| Dense::new("enc.edge", EDGE_LEN, c.edge_dense, &mut rng));
        let fused = c.context_dense + c.affordance_dense + if c.use_edges { c.edge_dense } else { 0 };
        let fuse = Dense::new("enc.latent", fused, LATENT, &mut rng);
        let dec_fc = Dense::new("dec.context", LATENT, flat, &mut rng);
        let deconv1 = ConvTranspose2d::new("dec.deconv1", c.conv2, c.conv1, 3, 2, 1, 1, (h2, w2), &mut rng);
        let deconv2 = ConvTranspose2d::new("dec.deconv2", c.conv1, 3, 3, 2, 1, 1, (h1, w1), &mut rng);
        debug_assert_eq!(deconv2.out_len(), CONTEXT_LEN);
        let aff_head = Dense::new("dec.affordance", LATENT, AFFORDANCE_DIM, &mut rng);
        let edge_head = c.use_edges.then(|| Dense::new("dec.edge", LATENT, EDGE_LEN, &mut rng));
        let cluster_head = Dense::new("dec.cluster", LATENT, c.clusters, &mut rng);
        Ok(Self { config, conv1, conv2, ctx_fc, aff_fc, edge_fc, fuse, dec_fc, deconv1, deconv2, aff_head, edge_head, cluster_head, trained: false })
    }

    /// Encoder only.
    pub fn encode(&self, batch: &CteBatch<T>) -> Result<Vec<T>> {
        batch.check(&self.config)?;
        let (_, _, _, latent) = self.encode_parts(batch)?;
        Ok(latent)
    }

    fn encode_parts(&self, b: &CteBatch<T>) -> Result<(Vec<T>, Vec<T>, Vec<T>, Vec<T>)> {
        let n = b.n;
        let mut h1 = self.conv1.forward(&b.context, n)?;
        relu_inplace(&mut h1);
        let mut h2 = self.conv2.forward(&h1, n)?;
        relu_inplace(&mut h2);
        let mut c = self.ctx_fc.forward(&h2, n)?;
        relu_inplace(&mut c);
        let mut a = self.aff_fc.forward(&b.affordance, n)?;
        relu_inplace(&mut a);
        let cat = match &self.edge_fc {
            Some(fc) => {
                let mut e = fc.forward(&b.edges, n)?;
                relu_inplace(&mut e);
                concat_rows(&[(&c, c.len() / n.max(1)), (&a, a.len() / n.max(1)), (&e, e.len() / n.max(1))], n)
            }
            None => concat_rows(&[(&c, c.len() / n.max(1)), (&a, a.len() / n.max(1))], n),
        };
        let latent = self.fuse.forward(&cat, n)?;
        Ok((h1, h2, cat, latent))
    }

    pub fn forward(&self, batch: &CteBatch<T>) -> Result<CteForward<T>> {
        batch.check(&self.config)?;
        let n = batch.n;
        let (h1, h2, cat, latent) = self.encode_parts(batch)?;
        let mut dec = self.dec_fc.forward(&latent, n)?;
        relu_inplace(&mut dec);
        let mut up1 = self.deconv1.forward(&dec, n)?;
        relu_inplace(&mut up1);
        let mut context = self.deconv2.forward(&up1, n)?;
        sigmoid_inplace(&mut context);
        let affordance_logits = self.aff_head.forward(&latent, n)?;
        let mut affordance = affordance_logits.clone();
        sigmoid_inplace(&mut affordance);
        let edges = match &self.edge_head {
            Some(h) => {
                let mut e = h.forward(&latent, n)?;
                sigmoid_inplace(&mut e);
                e
            }
            None => Vec::new(),
        };
        let cluster_logits = self.cluster_head.forward(&latent, n)?;
        let mut cluster_probs = cluster_logits.clone();
        crate::neuralkit::act::softmax_rows(&mut cluster_probs, self.config.clusters);
        Ok(CteForward { n, h1, h2, cat, latent, dec, up1, context, affordance_logits, affordance, edges, cluster_logits, cluster_probs })
    }

    /// Weighted loss of a forward pass, with per-term values.
    pub fn loss(&self, out: &CteForward<T>, batch: &CteBatch<T>) -> Result<LossParts> {
        Ok(self.loss_and_grads(out, batch)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn loss_and_grads(&self, out: &CteForward<T>, b: &CteBatch<T>) -> Result<(LossParts, [Vec<T>; 4])> {
        let w = self.config.weights;
        let k = self.config.clusters;
        let (li, di) = mse(&out.context, &b.context);
        let (la, da) = bce_with_logits(&out.affordance_logits, &b.affordance);
        let (le, de) = if self.edge_head.is_some() { mse(&out.edges, &b.edges) } else { (T::zero(), Vec::new()) };
        let (lc, dc) = if b.target.is_empty() {
            if w.cluster != 0.0 {
                return Err(CteError::InvalidArgument("cluster loss enabled but batch has no targets".into()));
            }
            (T::zero(), vec![T::zero(); out.cluster_logits.len()])
        } else {
            if b.target.len() != b.n * k {
                return Err(CteError::dim("cluster targets", b.n * k, b.target.len()));
            }
            let (l, g, _) = softmax_ce(&out.cluster_logits, &b.target, k);
            (l, g)
        };
        for (name, v) in [("image", li), ("affordance", la), ("edge", le), ("cluster", lc)] {
            if !v.is_finite() {
                return Err(CteError::Numeric(format!("{name} loss is {v}")));
            }
        }
        let (li, la, le, lc) = (li.as_f64(), la.as_f64(), le.as_f64(), lc.as_f64());
        let parts = LossParts { total: w.combine(li, la, le, lc), image: li, affordance: la, edge: le, cluster: lc };
        let d_ctx = through_sigmoid(&out.context, &di, T::lit(w.image));
        let d_aff: Vec<T> = da.iter().map(|&g| g * T::lit(w.affordance)).collect();
        let d_edge = through_sigmoid(&out.edges, &de, T::lit(w.edge));
        let d_cl: Vec<T> = dc.iter().map(|&g| g * T::lit(w.cluster)).collect();
        Ok((parts, [d_ctx, d_aff, d_edge, d_cl]))
    }

    /// Forward, loss and gradient accumulation for one batch.
    pub fn forward_backward(&mut self, batch: &CteBatch<T>) -> Result<LossParts> {
        let out = self.forward(batch)?;
        let (parts, [d_ctx, d_aff, d_edge, d_cl]) = self.loss_and_grads(&out, batch)?;
        let n = batch.n;
        // Decoder heads back to the latent.
        let mut d_up1 = self.deconv2.backward(&out.up1, &d_ctx, n);
        relu_backward(&out.up1, &mut d_up1);
        let mut d_dec = self.deconv1.backward(&out.dec, &d_up1, n);
        relu_backward(&out.dec, &mut d_dec);
        let mut d_lat = self.dec_fc.backward(&out.latent, &d_dec, n);
        let add = |acc: &mut Vec<T>, g: Vec<T>| acc.iter_mut().zip(g).for_each(|(a, g)| *a += g);
        add(&mut d_lat, self.aff_head.backward(&out.latent, &d_aff, n));
        if let Some(h) = self.edge_head.as_mut() {
            add(&mut d_lat, h.backward(&out.latent, &d_edge, n));
        }
        add(&mut d_lat, self.cluster_head.backward(&out.latent, &d_cl, n));
        // Encoder.
        let d_cat = self.fuse.backward(&out.cat, &d_lat, n);
        let c = &self.config;
        let widths: Vec<usize> = if c.use_edges { vec![c.context_dense, c.affordance_dense, c.edge_dense] } else { vec![c.context_dense, c.affordance_dense] };
        let outs = split_rows(&out.cat, &widths, n);
        let mut grads = split_rows(&d_cat, &widths, n);
        for (g, o) in grads.iter_mut().zip(&outs) {
            relu_backward(o, g);
        }
        if let Some(fc) = self.edge_fc.as_mut() {
            fc.backward(&batch.edges, &grads[2], n);
        }
        self.aff_fc.backward(&batch.affordance, &grads[1], n);
        let mut d_h2 = self.ctx_fc.backward(&out.h2, &grads[0], n);
        relu_backward(&out.h2, &mut d_h2);
        let mut d_h1 = self.conv2.backward(&out.h1, &d_h2, n);
        relu_backward(&out.h1, &mut d_h1);
        self.conv1.backward(&batch.context, &d_h1, n);
        Ok(parts)
    }

    /// Affordance head probabilities for `n` latents.
    pub fn affordance_from_latent(&self, latent: &[T], n: usize) -> Result<Vec<T>> {
        let mut a = self.aff_head.forward(latent, n)?;
        sigmoid_inplace(&mut a);
        Ok(a)
    }

    /// Content fingerprint of the weights, stamped on embeddings.
    pub fn version(&self) -> String {
        let bytes: Vec<u8> = self.flat_values().iter().flat_map(|v| (v.as_f64() as f32).to_le_bytes()).collect();
        format!("cte-{:016x}", crate::io::fnv1a64(&bytes))
    }

    pub fn to_container(&self, seed: u64) -> Container {
        let meta = serde_json::json!({ "config": self.config, "trained": self.trained, "version": self.version() });
        let mut c = Container::new(CHECKPOINT_KIND, seed, meta);
        c.push_module(self);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != CHECKPOINT_KIND {
            return Err(CteError::Checkpoint(format!("expected {CHECKPOINT_KIND}, found {}", c.kind)));
        }
        let config: CteConfig = serde_json::from_value(c.meta["config"].clone())?;
        let mut m = Self::new(config, 0)?;
        c.load_module(&mut m)?;
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

impl<T: Scalar> Module<T> for CteModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        v.extend(self.conv1.params());
        v.extend(self.conv2.params());
        v.extend(self.ctx_fc.params());
        v.extend(self.aff_fc.params());
        if let Some(fc) = &self.edge_fc {
            v.extend(fc.params());
        }
        v.extend(self.fuse.params());
        v.extend(self.dec_fc.params());
        v.extend(self.deconv1.params());
        v.extend(self.deconv2.params());
        v.extend(self.aff_head.params());
        if let Some(h) = &self.edge_head {
            v.extend(h.params());
        }
        v.extend(self.cluster_head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        v.extend(self.conv1.params_mut());
        v.extend(self.conv2.params_mut());
        v.extend(self.ctx_fc.params_mut());
        v.extend(self.aff_fc.params_mut());
        if let Some(fc) = &mut self.edge_fc {
            v.extend(fc.params_mut());
        }
        v.extend(self.fuse.params_mut());
        v.extend(self.dec_fc.params_mut());
        v.extend(self.deconv1.params_mut());
        v.extend(self.deconv2.params_mut());
        v.extend(self.aff_head.params_mut());
        if let Some(h) = &mut self.edge_head {
            v.extend(h.params_mut());
        }
        v.extend(self.cluster_head.params_mut());
        v
    }
}
