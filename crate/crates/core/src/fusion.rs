//! Multimodal backbone: per-token MLP encoders, projections into a shared
//! latent space, pathway-to-patch cross-attention and a discrete-hazard
//! survival head.
//!
//! Token sets are stored flattened: a batch of `n` samples with `p` patch
//! tokens each is an `(n·p) × f` matrix whose rows `s·p .. (s+1)·p` belong to
//! sample `s`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::cade::{self, KernelSpec};
use crate::error::{Error, Result};
use crate::graph::{Axis, Graph, Var};
use crate::math;
use crate::sdir::{self, DiracResponse, DiracVars, SparsityMask};
use crate::survival::SurvivalRecord;
use crate::tensor::Tensor;

/// Patch tokens, pathway tokens and labels for `n` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityBatch {
    patches: Tensor,
    pathways: Tensor,
    patches_per_sample: usize,
    pathways_per_sample: usize,
    labels: Vec<SurvivalRecord>,
}

impl ModalityBatch {
    pub fn new(
        patches: Tensor,
        patches_per_sample: usize,
        pathways: Tensor,
        pathways_per_sample: usize,
        labels: Vec<SurvivalRecord>,
    ) -> Result<Self> {
        let n = labels.len();
        let (pr, _) = patches.dims2("modality_batch")?;
        let (gr, _) = pathways.dims2("modality_batch")?;
        if patches_per_sample == 0 || pathways_per_sample == 0 {
            return Err(Error::Parameter {
                name: "tokens per sample",
                value: 0.0,
            });
        }
        if pr != n * patches_per_sample || gr != n * pathways_per_sample {
            return Err(Error::Dimension {
                op: "modality_batch",
                left: vec![pr, gr],
                right: vec![n * patches_per_sample, n * pathways_per_sample],
            });
        }
        if !patches.all_finite() || !pathways.all_finite() {
            return Err(Error::Numeric("non-finite modality features".into()));
        }
        Ok(Self {
            patches,
            pathways,
            patches_per_sample,
            pathways_per_sample,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn patches(&self) -> &Tensor {
        &self.patches
    }

    pub fn pathways(&self) -> &Tensor {
        &self.pathways
    }

    pub fn patches_per_sample(&self) -> usize {
        self.patches_per_sample
    }

    pub fn pathways_per_sample(&self) -> usize {
        self.pathways_per_sample
    }

    pub fn patch_dim(&self) -> usize {
        self.patches.shape()[1]
    }

    pub fn pathway_dim(&self) -> usize {
        self.pathways.shape()[1]
    }

    pub fn labels(&self) -> &[SurvivalRecord] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [SurvivalRecord] {
        &mut self.labels
    }

    /// Patch rows of sample `s`.
    pub fn sample_patches(&self, s: usize) -> &[f64] {
        let w = self.patch_dim() * self.patches_per_sample;
        &self.patches.data()[s * w..(s + 1) * w]
    }

    pub fn sample_pathways(&self, s: usize) -> &[f64] {
        let w = self.pathway_dim() * self.pathways_per_sample;
        &self.pathways.data()[s * w..(s + 1) * w]
    }

    /// The samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut patches = Vec::new();
        let mut pathways = Vec::new();
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            patches.extend_from_slice(self.sample_patches(i));
            pathways.extend_from_slice(self.sample_pathways(i));
            labels.push(self.labels[i]);
        }
        let n = indices.len();
        Self::new(
            Tensor::matrix(n * self.patches_per_sample, self.patch_dim(), patches)?,
            self.patches_per_sample,
            Tensor::matrix(n * self.pathways_per_sample, self.pathway_dim(), pathways)?,
            self.pathways_per_sample,
            labels,
        )
    }

    /// Keeps, for every sample, the patch rows listed in `keep` (the same
    /// count for each sample).
    pub fn with_patch_subsets(&self, keep: &[Vec<usize>]) -> Result<Self> {
        let count = keep.first().map_or(0, Vec::len);
        if keep.len() != self.len() || keep.iter().any(|k| k.len() != count) {
            return Err(Error::Dimension {
                op: "with_patch_subsets",
                left: vec![self.len(), count],
                right: vec![keep.len()],
            });
        }
        let f = self.patch_dim();
        let mut patches = Vec::with_capacity(self.len() * count * f);
        for (s, rows) in keep.iter().enumerate() {
            let block = self.sample_patches(s);
            for &r in rows {
                if r >= self.patches_per_sample {
                    return Err(Error::Dimension {
                        op: "with_patch_subsets",
                        left: vec![r],
                        right: vec![self.patches_per_sample],
                    });
                }
                patches.extend_from_slice(&block[r * f..(r + 1) * f]);
            }
        }
        Self::new(
            Tensor::matrix(self.len() * count, f, patches)?,
            count,
            self.pathways.clone(),
            self.pathways_per_sample,
            self.labels.clone(),
        )
    }
}

/// Widths of the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneDims {
    pub patch_dim: usize,
    pub pathway_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorParams {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
    pub output: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w: Tensor,
    pub b: Tensor,
}

/// Every trainable tensor of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    pub dims: BackboneDims,
    pub img_encoder: EncoderParams,
    pub gene_encoder: EncoderParams,
    pub img_projector: ProjectorParams,
    pub gene_projector: ProjectorParams,
    pub attention: AttentionParams,
    pub head: HeadParams,
    pub dirac: DiracResponse,
}

fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = math::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols)
        .map(|_| (2.0 * rng.random::<f64>() - 1.0) * limit)
        .collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

impl EncoderParams {
    fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w1: xavier(input, hidden, rng),
            b1: Tensor::zeros(&[1, hidden]),
            w2: xavier(hidden, hidden, rng),
            b2: Tensor::zeros(&[1, hidden]),
        }
    }
}

impl BackboneParams {
    pub fn init<R: Rng + ?Sized>(dims: BackboneDims, rng: &mut R) -> Result<Self> {
        if dims.bins < 2 {
            return Err(Error::Parameter {
                name: "bins",
                value: dims.bins as f64,
            });
        }
        if [dims.patch_dim, dims.pathway_dim, dims.hidden, dims.latent].contains(&0) {
            return Err(Error::Parameter {
                name: "width",
                value: 0.0,
            });
        }
        let d = dims.latent;
        Ok(Self {
            dims,
            img_encoder: EncoderParams::init(dims.patch_dim, dims.hidden, rng),
            gene_encoder: EncoderParams::init(dims.pathway_dim, dims.hidden, rng),
            img_projector: ProjectorParams {
                w: xavier(dims.hidden, d, rng),
                b: Tensor::zeros(&[1, d]),
            },
            gene_projector: ProjectorParams {
                w: xavier(dims.hidden, d, rng),
                b: Tensor::zeros(&[1, d]),
            },
            attention: AttentionParams {
                query: xavier(d, d, rng),
                key: xavier(d, d, rng),
                value: xavier(d, d, rng),
                output: xavier(d, d, rng),
            },
            head: HeadParams {
                w: xavier(d, dims.bins, rng),
                b: Tensor::zeros(&[1, dims.bins]),
            },
            dirac: DiracResponse::init(d, rng),
        })
    }

    /// All tensors with stable names, in a fixed order.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("img_encoder.w1", &self.img_encoder.w1),
            ("img_encoder.b1", &self.img_encoder.b1),
            ("img_encoder.w2", &self.img_encoder.w2),
            ("img_encoder.b2", &self.img_encoder.b2),
            ("gene_encoder.w1", &self.gene_encoder.w1),
            ("gene_encoder.b1", &self.gene_encoder.b1),
            ("gene_encoder.w2", &self.gene_encoder.w2),
            ("gene_encoder.b2", &self.gene_encoder.b2),
            ("img_projector.w", &self.img_projector.w),
            ("img_projector.b", &self.img_projector.b),
            ("gene_projector.w", &self.gene_projector.w),
            ("gene_projector.b", &self.gene_projector.b),
            ("attention.query", &self.attention.query),
            ("attention.key", &self.attention.key),
            ("attention.value", &self.attention.value),
            ("attention.output", &self.attention.output),
            ("head.w", &self.head.w),
            ("head.b", &self.head.b),
            ("dirac.phi", &self.dirac.phi),
            ("dirac.anchor", &self.dirac.anchor),
        ]
    }

    /// Mutable counterpart of [`named`](Self::named), same order.
    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("img_encoder.w1", &mut self.img_encoder.w1),
            ("img_encoder.b1", &mut self.img_encoder.b1),
            ("img_encoder.w2", &mut self.img_encoder.w2),
            ("img_encoder.b2", &mut self.img_encoder.b2),
            ("gene_encoder.w1", &mut self.gene_encoder.w1),
            ("gene_encoder.b1", &mut self.gene_encoder.b1),
            ("gene_encoder.w2", &mut self.gene_encoder.w2),
            ("gene_encoder.b2", &mut self.gene_encoder.b2),
            ("img_projector.w", &mut self.img_projector.w),
            ("img_projector.b", &mut self.img_projector.b),
            ("gene_projector.w", &mut self.gene_projector.w),
            ("gene_projector.b", &mut self.gene_projector.b),
            ("attention.query", &mut self.attention.query),
            ("attention.key", &mut self.attention.key),
            ("attention.value", &mut self.attention.value),
            ("attention.output", &mut self.attention.output),
            ("head.w", &mut self.head.w),
            ("head.b", &mut self.head.b),
            ("dirac.phi", &mut self.dirac.phi),
            ("dirac.anchor", &mut self.dirac.anchor),
        ]
    }

    /// Places every tensor on `g` as a leaf. With `trainable` false nothing
    /// tracks gradient; `train_anchor` controls the anchor alone.
    pub fn bind(&self, g: &mut Graph, trainable: bool, train_anchor: bool) -> BackboneVars {
        let leaves: Vec<Var> = self
            .named()
            .into_iter()
            .map(|(name, t)| {
                let rg = trainable && (name != "dirac.anchor" || train_anchor);
                g.leaf(t.clone(), rg)
            })
            .collect();
        let l = &leaves;
        BackboneVars {
            img_encoder: EncoderVars {
                w1: l[0],
                b1: l[1],
                w2: l[2],
                b2: l[3],
            },
            gene_encoder: EncoderVars {
                w1: l[4],
                b1: l[5],
                w2: l[6],
                b2: l[7],
            },
            img_projector: ProjectorVars { w: l[8], b: l[9] },
            gene_projector: ProjectorVars { w: l[10], b: l[11] },
            attention: AttentionVars {
                query: l[12],
                key: l[13],
                value: l[14],
                output: l[15],
            },
            head: HeadVars { w: l[16], b: l[17] },
            dirac: DiracVars {
                phi: l[18],
                anchor: l[19],
            },
            leaves,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectorVars {
    pub w: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub query: Var,
    pub key: Var,
    pub value: Var,
    pub output: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub w: Var,
    pub b: Var,
}

/// Graph handles of a bound [`BackboneParams`]; `leaves` follows
/// [`BackboneParams::named`] order.
#[derive(Debug, Clone)]
pub struct BackboneVars {
    pub img_encoder: EncoderVars,
    pub gene_encoder: EncoderVars,
    pub img_projector: ProjectorVars,
    pub gene_projector: ProjectorVars,
    pub attention: AttentionVars,
    pub head: HeadVars,
    pub dirac: DiracVars,
    pub leaves: Vec<Var>,
}

/// `x·w + 1·b`.
fn affine(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = g.matmul(x, w)?;
    let rows = g.shape(x)[0];
    let ones = g.constant(Tensor::ones(&[rows, 1]));
    let bias = g.matmul(ones, b)?;
    g.add(xw, bias)
}

/// Two-layer MLP: `relu(x·W1 + b1)·W2 + b2`.
pub fn encode(g: &mut Graph, x: Var, enc: &EncoderVars) -> Result<Var> {
    let h = affine(g, x, enc.w1, enc.b1)?;
    let h = g.relu(h);
    affine(g, h, enc.w2, enc.b2)
}

/// Linear projection into the shared latent space.
pub fn project(g: &mut Graph, z: Var, proj: &ProjectorVars) -> Result<Var> {
    affine(g, z, proj.w, proj.b)
}

/// Averages each consecutive block of `per` rows: `(n·per) × d → n × d`.
pub fn pool(g: &mut Graph, tokens: Var, n: usize, per: usize) -> Result<Var> {
    let mut m = vec![0.0; n * n * per];
    let w = 1.0 / per as f64;
    for s in 0..n {
        for j in 0..per {
            m[s * n * per + s * per + j] = w;
        }
    }
    let pool = g.constant(Tensor::matrix(n, n * per, m)?);
    g.matmul(pool, tokens)
}

/// Repeats each row of an `n × d` matrix `per` times: `n × d → (n·per) × d`.
fn expand(g: &mut Graph, rows: Var, n: usize, per: usize) -> Result<Var> {
    let mut m = vec![0.0; n * per * n];
    for s in 0..n {
        for j in 0..per {
            m[(s * per + j) * n + s] = 1.0;
        }
    }
    let e = g.constant(Tensor::matrix(n * per, n, m)?);
    g.matmul(e, rows)
}

/// Latent tokens and their per-sample means.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub img_tokens: Var,
    pub gene_tokens: Var,
    pub pooled_img: Var,
    pub pooled_gene: Var,
    pub n: usize,
    pub patches: usize,
    pub pathways: usize,
}

/// Encodes and projects every token of `batch`, then mean-pools per sample.
pub fn encode_project(
    g: &mut Graph,
    batch: &ModalityBatch,
    vars: &BackboneVars,
) -> Result<Encoded> {
    let (n, p, q) = (
        batch.len(),
        batch.patches_per_sample(),
        batch.pathways_per_sample(),
    );
    let x_img = g.constant(batch.patches().clone());
    let x_gene = g.constant(batch.pathways().clone());
    let z_img = encode(g, x_img, &vars.img_encoder)?;
    let img_tokens = project(g, z_img, &vars.img_projector)?;
    let z_gene = encode(g, x_gene, &vars.gene_encoder)?;
    let gene_tokens = project(g, z_gene, &vars.gene_projector)?;
    let pooled_img = pool(g, img_tokens, n, p)?;
    let pooled_gene = pool(g, gene_tokens, n, q)?;
    Ok(Encoded {
        img_tokens,
        gene_tokens,
        pooled_img,
        pooled_gene,
        n,
        patches: p,
        pathways: q,
    })
}

/// Result of [`cross_attention`]: fused pathway tokens and the per-sample
/// `q × p` attention weights.
#[derive(Debug, Clone)]
pub struct Attended {
    pub fused: Var,
    pub weights: Vec<Var>,
}

/// Single-head cross-attention with pathway tokens as queries and patch
/// tokens as keys/values, scaled by `1/sqrt(d)`, plus a residual:
/// `G + softmax(G·Wq·(I·Wk)ᵀ/√d)·(I·Wv)·Wo`.
pub fn cross_attention(
    g: &mut Graph,
    gene_tokens: Var,
    img_tokens: Var,
    n: usize,
    q: usize,
    p: usize,
    attn: &AttentionVars,
) -> Result<Attended> {
    let d = g.shape(gene_tokens)[1];
    if g.shape(img_tokens)[1] != d {
        return Err(Error::Dimension {
            op: "cross_attention",
            left: g.shape(gene_tokens).to_vec(),
            right: g.shape(img_tokens).to_vec(),
        });
    }
    let queries = g.matmul(gene_tokens, attn.query)?;
    let keys = g.matmul(img_tokens, attn.key)?;
    let values = g.matmul(img_tokens, attn.value)?;
    let scale = 1.0 / math::sqrt(d as f64);
    let mut outs = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for s in 0..n {
        let qs = g.slice(queries, Axis::Rows, s * q, q)?;
        let ks = g.slice(keys, Axis::Rows, s * p, p)?;
        let vs = g.slice(values, Axis::Rows, s * p, p)?;
        let kt = g.transpose(ks)?;
        let scores = g.matmul(qs, kt)?;
        let scores = g.mul_scalar(scores, scale);
        let a = g.softmax_rows(scores)?;
        weights.push(a);
        outs.push(g.matmul(a, vs)?);
    }
    let attended = if outs.len() == 1 {
        outs[0]
    } else {
        g.concat(&outs, Axis::Rows)?
    };
    let projected = g.matmul(attended, attn.output)?;
    let fused = g.add(gene_tokens, projected)?;
    Ok(Attended { fused, weights })
}

/// Mean-pools the fused tokens of each sample and maps them to `B` hazard
/// logits.
pub fn survival_head(
    g: &mut Graph,
    fused: Var,
    n: usize,
    q: usize,
    head: &HeadVars,
) -> Result<Var> {
    let pooled = pool(g, fused, n, q)?;
    affine(g, pooled, head.w, head.b)
}

/// Which pipeline [`forward`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Clean,
    Sdir,
    Cade,
}

/// Knobs of [`forward`]. Frozen masks / kernel draws replace the random
/// ones, which makes the forward pass deterministic for gradient checks.
#[derive(Debug, Clone)]
pub struct ForwardOptions {
    pub mode: ForwardMode,
    pub alpha: f64,
    pub sdir_gene: bool,
    pub kernel: KernelSpec,
    pub var_floor: f64,
    pub frozen_masks: Option<Vec<SparsityMask>>,
    pub frozen_t: Option<f64>,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            mode: ForwardMode::Clean,
            alpha: 0.5,
            sdir_gene: false,
            kernel: KernelSpec::default(),
            var_floor: cade::DEFAULT_VAR_FLOOR,
            frozen_masks: None,
            frozen_t: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Var,
    pub hazards: Var,
    /// Clean pooled latents `[img, gene]`, `n × 2d`.
    pub latents: Var,
    /// Masks used in SDIR mode: image masks per sample, followed by gene
    /// masks when `sdir_gene` is set.
    pub masks: Vec<SparsityMask>,
    pub kernel_t: Option<f64>,
}

/// Applies SDIR to every token, with one mask per sample shared by that
/// sample's tokens.
pub fn sdir_tokens(
    g: &mut Graph,
    tokens: Var,
    n: usize,
    per: usize,
    masks: &[SparsityMask],
    dirac: DiracVars,
) -> Result<Var> {
    let d = g.shape(tokens)[1];
    if masks.len() != n || masks.iter().any(|m| m.dim() != d) {
        return Err(Error::Dimension {
            op: "sdir_tokens",
            left: vec![n, d],
            right: vec![masks.len()],
        });
    }
    let mut full = Vec::with_capacity(n * per * d);
    for m in masks {
        let bits = m.values();
        for _ in 0..per {
            full.extend_from_slice(&bits);
        }
    }
    let mask = g.constant(Tensor::matrix(n * per, d, full)?);
    let z_hat = g.mul(tokens, mask)?;
    sdir::dirac_response(g, z_hat, dirac)
}

/// Entangles the pooled embeddings and shifts every token of a sample by
/// the change of its pooled embedding. Returns the new image and gene
/// token sets.
pub fn cade_tokens(g: &mut Graph, enc: &Encoded, t: f64, eps: f64) -> Result<(Var, Var)> {
    let s_img = cade::graph_stats(g, enc.pooled_img, eps)?;
    let s_gene = cade::graph_stats(g, enc.pooled_gene, eps)?;
    let w_img = cade::graph_whiten(g, enc.pooled_img, &s_img)?;
    let w_gene = cade::graph_whiten(g, enc.pooled_gene, &s_gene)?;
    let composite = cade::graph_path_stats(g, &s_gene, &s_img, t)?;
    let e_img = cade::graph_recolor(g, w_img, &composite)?;
    let e_gene = cade::graph_recolor(g, w_gene, &composite)?;
    let d_img = g.sub(e_img, enc.pooled_img)?;
    let d_gene = g.sub(e_gene, enc.pooled_gene)?;
    let d_img = expand(g, d_img, enc.n, enc.patches)?;
    let d_gene = expand(g, d_gene, enc.n, enc.pathways)?;
    let img = g.add(enc.img_tokens, d_img)?;
    let gene = g.add(enc.gene_tokens, d_gene)?;
    Ok((img, gene))
}

/// Fusion and head on given token sets; returns logits.
pub fn fuse(
    g: &mut Graph,
    img_tokens: Var,
    gene_tokens: Var,
    enc: &Encoded,
    vars: &BackboneVars,
) -> Result<Var> {
    let att = cross_attention(
        g,
        gene_tokens,
        img_tokens,
        enc.n,
        enc.pathways,
        enc.patches,
        &vars.attention,
    )?;
    survival_head(g, att.fused, enc.n, enc.pathways, &vars.head)
}

/// Draws one mask per sample.
pub fn draw_masks<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<SparsityMask>> {
    (0..n)
        .map(|_| SparsityMask::sample(d, alpha, rng))
        .collect()
}

/// Full forward pass in the requested mode.
pub fn forward<R: Rng + ?Sized>(
    g: &mut Graph,
    batch: &ModalityBatch,
    vars: &BackboneVars,
    opts: &ForwardOptions,
    rng: &mut R,
) -> Result<ForwardOutput> {
    let enc = encode_project(g, batch, vars)?;
    let d = g.shape(enc.pooled_img)[1];
    let n = enc.n;
    let mut masks = Vec::new();
    let mut kernel_t = None;
    let (img, gene) = match opts.mode {
        ForwardMode::Clean => (enc.img_tokens, enc.gene_tokens),
        ForwardMode::Sdir => {
            sdir::check_alpha(opts.alpha)?;
            let wanted = if opts.sdir_gene { 2 * n } else { n };
            masks = match &opts.frozen_masks {
                Some(m) => m.clone(),
                None => draw_masks(wanted, d, opts.alpha, rng)?,
            };
            if masks.len() != wanted {
                return Err(Error::Dimension {
                    op: "forward",
                    left: vec![wanted],
                    right: vec![masks.len()],
                });
            }
            let img = sdir_tokens(g, enc.img_tokens, n, enc.patches, &masks[..n], vars.dirac)?;
            let gene = if opts.sdir_gene {
                sdir_tokens(g, enc.gene_tokens, n, enc.pathways, &masks[n..], vars.dirac)?
            } else {
                enc.gene_tokens
            };
            (img, gene)
        }
        ForwardMode::Cade => {
            let t = match opts.frozen_t {
                Some(t) => t,
                None => opts.kernel.draw(rng)?,
            };
            kernel_t = Some(t);
            cade_tokens(g, &enc, t, opts.var_floor)?
        }
    };
    let logits = fuse(g, img, gene, &enc, vars)?;
    let hazards = g.sigmoid(logits);
    let latents = g.concat(&[enc.pooled_img, enc.pooled_gene], Axis::Cols)?;
    Ok(ForwardOutput {
        logits,
        hazards,
        latents,
        masks,
        kernel_t,
    })
}
