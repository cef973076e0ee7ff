//! Sparse Dirac information rebalancer.
//!
//! The strong modality is degraded by a Bernoulli keep-mask and then passed
//! through a response that falls back to a learned anchor as its input
//! collapses:
//!
//! ```text
//! D(ẑ) = φ(ẑ) + exp(-‖ẑ‖₂)·e
//! ```
//!
//! `φ` is a bias-free linear map, so `D(0) = e` exactly, and for large
//! `‖ẑ‖` the anchor term vanishes and `D(ẑ) ≈ φ(ẑ)`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fusion::{encode, project, EncoderVars, ProjectorVars};
use crate::graph::{Graph, Var};
use crate::math;
use crate::tensor::Tensor;

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Parameter {
            name: "alpha",
            value: alpha,
        });
    }
    Ok(())
}

/// One realisation of the keep-mask `ν ~ Bernoulli(1 - α)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityMask {
    keep: Vec<bool>,
    alpha: f64,
}

impl SparsityMask {
    pub fn sample<R: Rng + ?Sized>(d: usize, alpha: f64, rng: &mut R) -> Result<Self> {
        check_alpha(alpha)?;
        let keep = (0..d).map(|_| rng.random::<f64>() >= alpha).collect();
        Ok(Self { keep, alpha })
    }

    /// The mask that keeps everything (`α = 0`).
    pub fn keep_all(d: usize) -> Self {
        Self {
            keep: alloc::vec![true; d],
            alpha: 0.0,
        }
    }

    pub fn from_bits(keep: Vec<bool>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { keep, alpha })
    }

    pub fn keep_bits(&self) -> &[bool] {
        &self.keep
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.keep.len()
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }

    /// The mask as 0/1 values.
    pub fn values(&self) -> Vec<f64> {
        self.keep
            .iter()
            .map(|&k| if k { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.keep)
            .map(|(v, &k)| if k { *v } else { 0.0 })
            .collect()
    }
}

/// Multiplies every row of the `m × d` matrix `z` by `mask`. The mask is a
/// constant, so gradient flows through kept coordinates only.
pub fn apply_mask(g: &mut Graph, z: Var, mask: &SparsityMask) -> Result<Var> {
    let (m, d) = g.value(z).dims2("sparsify")?;
    if d != mask.dim() {
        return Err(Error::Dimension {
            op: "sparsify",
            left: alloc::vec![m, d],
            right: alloc::vec![mask.dim()],
        });
    }
    let bits = mask.values();
    let mut full = Vec::with_capacity(m * d);
    for _ in 0..m {
        full.extend_from_slice(&bits);
    }
    let c = g.constant(Tensor::matrix(m, d, full)?);
    g.mul(z, c)
}

/// Draws a fresh mask of width `d` and applies it to every row of `z`.
pub fn sparsify<R: Rng + ?Sized>(
    g: &mut Graph,
    z: Var,
    alpha: f64,
    rng: &mut R,
) -> Result<(Var, SparsityMask)> {
    check_alpha(alpha)?;
    let d = g.value(z).dims2("sparsify")?.1;
    let mask = SparsityMask::sample(d, alpha, rng)?;
    let out = apply_mask(g, z, &mask)?;
    Ok((out, mask))
}

/// Parameters of the response: the linear map `φ` (`d × d`, applied as
/// `ẑ·φ`) and the anchor `e` (`1 × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiracResponse {
    pub phi: Tensor,
    pub anchor: Tensor,
}

impl DiracResponse {
    /// `φ = I` and a random unit anchor.
    pub fn init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let mut e: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = math::sqrt(e.iter().map(|v| v * v).sum());
        for v in &mut e {
            *v /= norm;
        }
        Self {
            phi: Tensor::identity(d),
            anchor: Tensor::row(e),
        }
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DiracVars {
    pub phi: Var,
    pub anchor: Var,
}

impl DiracVars {
    pub fn bind(g: &mut Graph, dr: &DiracResponse, train_phi: bool, train_anchor: bool) -> Self {
        Self {
            phi: g.leaf(dr.phi.clone(), train_phi),
            anchor: g.leaf(dr.anchor.clone(), train_anchor),
        }
    }
}

/// `φ(ẑ) + exp(-‖ẑ‖)·e` for every row of the `m × d` matrix `z_hat`.
pub fn dirac_response(g: &mut Graph, z_hat: Var, dr: DiracVars) -> Result<Var> {
    let linear = g.matmul(z_hat, dr.phi)?;
    let norms = g.l2_norm_rows(z_hat)?;
    let neg = g.neg(norms);
    let decay = g.exp(neg);
    let anchored = g.matmul(decay, dr.anchor)?;
    g.add(linear, anchored)
}

/// `D ∘ S_α ∘ P ∘ E` on raw rows `x` (`m × f`) with a pre-drawn mask shared
/// by all rows.
pub fn sdir_forward_masked(
    g: &mut Graph,
    x: Var,
    mask: &SparsityMask,
    enc: &EncoderVars,
    proj: &ProjectorVars,
    dr: DiracVars,
) -> Result<Var> {
    let z = encode(g, x, enc)?;
    let z = project(g, z, proj)?;
    let z_hat = apply_mask(g, z, mask)?;
    dirac_response(g, z_hat, dr)
}

/// Full SDIR path on raw rows `x`, drawing the mask from `rng`.
pub fn sdir_forward<R: Rng + ?Sized>(
    g: &mut Graph,
    x: Var,
    alpha: f64,
    enc: &EncoderVars,
    proj: &ProjectorVars,
    dr: DiracVars,
    rng: &mut R,
) -> Result<(Var, SparsityMask)> {
    check_alpha(alpha)?;
    let z = encode(g, x, enc)?;
    let z = project(g, z, proj)?;
    let (z_hat, mask) = sparsify(g, z, alpha, rng)?;
    Ok((dirac_response(g, z_hat, dr)?, mask))
}
