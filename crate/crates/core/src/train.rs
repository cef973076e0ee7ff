//! Training objective and loop.
//!
//! The per-step loss is the unweighted sum of three terms:
//!
//! 1. discrete-hazard NLL of the clean pipeline,
//! 2. the same NLL with the image tokens routed through SDIR,
//! 3. `KL(P_model ‖ P_ent)` between the clean pooled latent statistics and
//!    their CADE composition.
//!
//! Terms 2 and 3 are absent when their module is off, which leaves the
//! loss equal to term 1 exactly. All randomness comes from per-step
//! sub-streams of the run seed, so turning one module off never changes
//! the draws another module sees.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::cade::{self, KernelSpec};
use crate::dataio;
use crate::error::{Error, Result};
use crate::fusion::{self, BackboneParams, BackboneVars, ModalityBatch};
use crate::graph::{Graph, Var};
use crate::math;
use crate::rng::{self, streams};
use crate::sdir::SparsityMask;
use crate::survival;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Plain gradient descent with a fixed step.
    Sgd,
    /// First/second-moment adaptive steps.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdirSettings {
    pub alpha: f64,
    /// Also route gene tokens through SDIR (off by default).
    pub gene: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CadeSettings {
    pub kernel: KernelSpec,
    pub var_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Patches drawn per sample per step.
    pub train_patches: usize,
    pub train_anchor: bool,
    pub sdir: Option<SdirSettings>,
    pub cade: Option<CadeSettings>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Adam,
            train_patches: dataio::DEFAULT_TRAIN_PATCHES,
            train_anchor: true,
            sdir: None,
            cade: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter {
                name: "epochs",
                value: 0.0,
            });
        }
        if self.batch_size < 2 {
            return Err(Error::Parameter {
                name: "batch_size",
                value: self.batch_size as f64,
            });
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter {
                name: "learning_rate",
                value: self.learning_rate,
            });
        }
        if self.train_patches == 0 {
            return Err(Error::Parameter {
                name: "train_patches",
                value: 0.0,
            });
        }
        if let Some(s) = &self.sdir {
            crate::sdir::check_alpha(s.alpha)?;
        }
        if let Some(c) = &self.cade {
            c.kernel.validate()?;
            if !(c.var_floor > 0.0) {
                return Err(Error::Parameter {
                    name: "var_floor",
                    value: c.var_floor,
                });
            }
        }
        Ok(())
    }
}

/// Graph handles of the loss terms.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub total: Var,
    pub clean: Var,
    pub sdir: Option<Var>,
    pub kl: Option<Var>,
}

/// Builds the three-term loss on `g` with pre-drawn SDIR masks (one per
/// sample, then one per sample for genes when enabled) and kernel draw `t`.
pub fn objective(
    g: &mut Graph,
    batch: &ModalityBatch,
    vars: &BackboneVars,
    sdir: Option<(&SdirSettings, &[SparsityMask])>,
    cade: Option<(&CadeSettings, f64)>,
) -> Result<Objective> {
    let enc = fusion::encode_project(g, batch, vars)?;
    let n = enc.n;

    let logits = fusion::fuse(g, enc.img_tokens, enc.gene_tokens, &enc, vars)?;
    let hazards = g.sigmoid(logits);
    let clean = survival::discrete_nll(g, hazards, batch.labels())?;
    let mut total = clean;

    let sdir_term = match sdir {
        Some((s, masks)) => {
            let wanted = if s.gene { 2 * n } else { n };
            if masks.len() != wanted {
                return Err(Error::Dimension {
                    op: "objective",
                    left: vec![wanted],
                    right: vec![masks.len()],
                });
            }
            let img =
                fusion::sdir_tokens(g, enc.img_tokens, n, enc.patches, &masks[..n], vars.dirac)?;
            let gene = if s.gene {
                fusion::sdir_tokens(g, enc.gene_tokens, n, enc.pathways, &masks[n..], vars.dirac)?
            } else {
                enc.gene_tokens
            };
            let logits = fusion::fuse(g, img, gene, &enc, vars)?;
            let hazards = g.sigmoid(logits);
            let term = survival::discrete_nll(g, hazards, batch.labels())?;
            total = g.add(total, term)?;
            Some(term)
        }
        None => None,
    };

    let kl_term = match cade {
        Some((c, t)) => {
            let s_img = cade::graph_stats(g, enc.pooled_img, c.var_floor)?;
            let s_gene = cade::graph_stats(g, enc.pooled_gene, c.var_floor)?;
            let ent = cade::graph_path_stats(g, &s_gene, &s_img, t)?;
            let term = cade::graph_kl(g, &[s_img, s_gene], &[ent, ent])?;
            total = g.add(total, term)?;
            Some(term)
        }
        None => None,
    };

    Ok(Objective {
        total,
        clean,
        sdir: sdir_term,
        kl: kl_term,
    })
}

/// Gradient-step rule over the tensors of [`BackboneParams::named`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &BackboneParams) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .named()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        Self {
            kind,
            lr,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Applies one update; `grads[i]` belongs to the `i`-th named tensor and
    /// `None` leaves that tensor untouched.
    pub fn apply(&mut self, params: &mut BackboneParams, grads: &[Option<Tensor>]) {
        self.step += 1;
        let bc1 = 1.0 - libm::pow(ADAM_BETA1, self.step as f64);
        let bc2 = 1.0 - libm::pow(ADAM_BETA2, self.step as f64);
        for (i, (_, t)) in params.named_mut().into_iter().enumerate() {
            let Some(grad) = &grads[i] else { continue };
            let data = t.data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, gr) in data.iter_mut().zip(grad.data()) {
                        *w -= self.lr * gr;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (k, (w, gr)) in data.iter_mut().zip(grad.data()).enumerate() {
                        m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * gr;
                        v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * gr * gr;
                        let m_hat = m[k] / bc1;
                        let v_hat = v[k] / bc2;
                        *w -= self.lr * m_hat / (math::sqrt(v_hat) + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Per-epoch averages of the loss terms (absent terms are 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub steps: usize,
    pub clean: f64,
    pub sdir: f64,
    pub kl: f64,
    pub total: f64,
}

/// Splits a shuffled index list into batches of `size`, folding a
/// single-sample tail into the previous batch so every batch has at least
/// two rows.
pub fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().extend(tail);
    }
    out
}

fn step_batch(
    data: &ModalityBatch,
    idx: &[usize],
    train_patches: usize,
    seed: u64,
    step: u64,
) -> Result<ModalityBatch> {
    let batch = data.select(idx)?;
    let p = batch.patches_per_sample();
    if p <= train_patches {
        return Ok(batch);
    }
    let mut r = rng::substream(seed, streams::PATCHES, step);
    let keep = (0..batch.len())
        .map(|_| dataio::sample_patches(p, train_patches, &mut r))
        .collect::<Result<Vec<_>>>()?;
    batch.with_patch_subsets(&keep)
}

/// Trains `params` in place on `data` and returns one log entry per epoch.
/// `on_epoch` sees each entry as soon as the epoch finishes.
pub fn train(
    params: &mut BackboneParams,
    data: &ModalityBatch,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::InsufficientBatch {
            op: "train",
            rows: data.len(),
        });
    }
    let d = params.dims.latent;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, params);
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng::substream(
            cfg.seed,
            streams::SHUFFLE,
            epoch as u64,
        ));
        let mut sums = [0.0f64; 4];
        let plan = batches(&order, cfg.batch_size);
        for (i, idx) in plan.iter().enumerate() {
            let batch = step_batch(data, idx, cfg.train_patches, cfg.seed, step)?;
            let n = batch.len();
            let masks = match &cfg.sdir {
                Some(s) => {
                    let count = if s.gene { 2 * n } else { n };
                    let mut r = rng::substream(cfg.seed, streams::SDIR_MASK, step);
                    fusion::draw_masks(count, d, s.alpha, &mut r)?
                }
                None => Vec::new(),
            };
            let t = match &cfg.cade {
                Some(c) => {
                    let mut r = rng::substream(cfg.seed, streams::CADE_KERNEL, step);
                    Some(c.kernel.draw(&mut r)?)
                }
                None => None,
            };

            let mut g = Graph::new();
            let vars = params.bind(&mut g, true, cfg.train_anchor);
            let obj = objective(
                &mut g,
                &batch,
                &vars,
                cfg.sdir.as_ref().map(|s| (s, masks.as_slice())),
                cfg.cade.as_ref().zip(t),
            )?;
            let clean = g.value(obj.clean).item();
            let sdir = obj.sdir.map_or(0.0, |v| g.value(v).item());
            let kl = obj.kl.map_or(0.0, |v| g.value(v).item());
            let total = g.value(obj.total).item();
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: i,
                    clean,
                    sdir,
                    kl,
                });
            }
            assert!(
                kl >= -1e-12,
                "negative KL term {kl} at epoch {epoch} step {i}"
            );

            g.backward(obj.total)?;
            let grads: Vec<Option<Tensor>> =
                vars.leaves.iter().map(|v| g.grad(*v).cloned()).collect();
            opt.apply(params, &grads);
            if !params.all_finite() {
                return Err(Error::Numeric("parameters became non-finite".into()));
            }
            for (s, v) in sums.iter_mut().zip([clean, sdir, kl, total]) {
                *s += v;
            }
            step += 1;
        }
        let k = plan.len() as f64;
        let log = EpochLog {
            epoch,
            steps: plan.len(),
            clean: sums[0] / k,
            sdir: sums[1] / k,
            kl: sums[2] / k,
            total: sums[3] / k,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

/// Samples evaluated per graph in [`predict_hazards`].
const EVAL_CHUNK: usize = 64;

/// Clean-mode hazards for every sample, using all patches.
pub fn predict_hazards(params: &BackboneParams, data: &ModalityBatch) -> Result<Tensor> {
    let b = params.dims.bins;
    let mut out = Vec::with_capacity(data.len() * b);
    let order: Vec<usize> = (0..data.len()).collect();
    for idx in order.chunks(EVAL_CHUNK) {
        let batch = data.select(idx)?;
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false, false);
        let enc = fusion::encode_project(&mut g, &batch, &vars)?;
        let logits = fusion::fuse(&mut g, enc.img_tokens, enc.gene_tokens, &enc, &vars)?;
        let hazards = g.sigmoid(logits);
        out.extend_from_slice(g.value(hazards).data());
    }
    Tensor::matrix(data.len(), b, out)
}

/// Risk score per sample from clean-mode hazards.
pub fn risk_scores(params: &BackboneParams, data: &ModalityBatch) -> Result<Vec<f64>> {
    let h = predict_hazards(params, data)?;
    let b = params.dims.bins;
    Ok(h.data().chunks(b).map(survival::risk_score).collect())
}
