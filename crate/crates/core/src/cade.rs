//! Cancer-aware distribution entanglement.
//!
//! Per-modality diagonal Gaussian statistics are blended along the linear
//! path `θ(t) = (1 - t)·θ_G + t·θ_I` under a Beta kernel on `t`. Latent
//! features are whitened with their joint batch statistics and recoloured
//! with the blended statistics. Each modality block of the `2d`-wide joint
//! latent is recoloured independently with the same `d`-dimensional
//! composite, so the entangled distribution is the product of two identical
//! `d`-Gaussians.
//!
//! All variances are floored at `eps` (default [`DEFAULT_VAR_FLOOR`]).
//! Convex combinations of floored variances stay floored.
//!
//! The module has two faces: plain `f64` functions on [`Tensor`] and
//! [`GaussianStats`] for analysis, and `graph_*` functions that build the
//! same computations on a [`Graph`] for training.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{column_moments, Axis, Graph, Var};
use crate::math;
use crate::quadrature::beta_measure;
use crate::tensor::Tensor;

pub const DEFAULT_VAR_FLOOR: f64 = 1e-5;

/// Mean and diagonal variance of a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    mean: Vec<f64>,
    var: Vec<f64>,
    eps: f64,
}

impl GaussianStats {
    /// Builds statistics, flooring every variance at `eps`.
    pub fn new(mean: Vec<f64>, var: Vec<f64>, eps: f64) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::Dimension {
                op: "gaussian_stats",
                left: vec![mean.len()],
                right: vec![var.len()],
            });
        }
        if !(eps > 0.0) {
            return Err(Error::Parameter {
                name: "eps",
                value: eps,
            });
        }
        if mean.iter().chain(&var).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite Gaussian statistics".into()));
        }
        let var = var.into_iter().map(|v| v.max(eps)).collect();
        Ok(Self { mean, var, eps })
    }

    pub fn standard(d: usize, eps: f64) -> Self {
        Self::new(vec![0.0; d], vec![1.0; d], eps).expect("valid standard normal")
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `[self; self]`: the `2d` product Gaussian used for the entangled
    /// joint latent.
    pub fn block_product(&self) -> Self {
        let mut mean = self.mean.clone();
        mean.extend_from_slice(&self.mean);
        let mut var = self.var.clone();
        var.extend_from_slice(&self.var);
        Self {
            mean,
            var,
            eps: self.eps,
        }
    }

    fn check_dim(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                op,
                left: vec![self.dim()],
                right: vec![other.dim()],
            });
        }
        Ok(())
    }
}

/// How the Beta kernel on the path parameter is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    /// Integrate the path against `Beta(γ, γ)` by quadrature.
    Expectation,
    /// One draw `t ~ Beta(γ, γ)` per batch.
    Stochastic,
    /// One draw `t ~ Beta(c·γ, c·(1 - γ))` per batch (mean γ).
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub gamma: f64,
    pub mode: KernelMode,
    pub concentration: f64,
    pub quadrature_points: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            gamma: 0.3,
            mode: KernelMode::Stochastic,
            concentration: 10.0,
            quadrature_points: 64,
        }
    }
}

impl KernelSpec {
    pub fn new(gamma: f64, mode: KernelMode) -> Result<Self> {
        let k = Self {
            gamma,
            mode,
            ..Self::default()
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Parameter {
                name: "gamma",
                value: self.gamma,
            });
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::Parameter {
                name: "concentration",
                value: self.concentration,
            });
        }
        if self.quadrature_points < 2 {
            return Err(Error::Parameter {
                name: "quadrature_points",
                value: self.quadrature_points as f64,
            });
        }
        Ok(())
    }

    /// The symmetric kernel `Beta(γ, γ)` as a discrete measure on `(0, 1)`.
    pub fn measure(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        beta_measure(self.gamma, self.gamma, self.quadrature_points)
    }

    /// Path position used for one batch. Expectation mode returns the
    /// kernel mean under the quadrature measure and consumes no randomness.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.validate()?;
        let (a, b) = match self.mode {
            KernelMode::Expectation => {
                return Ok(self.measure()?.iter().map(|(t, w)| t * w).sum());
            }
            KernelMode::Stochastic => (self.gamma, self.gamma),
            KernelMode::Centered => (
                self.concentration * self.gamma,
                self.concentration * (1.0 - self.gamma),
            ),
        };
        let beta = Beta::new(a, b).map_err(|_| Error::Parameter {
            name: "beta shape",
            value: a.min(b),
        })?;
        Ok(beta.sample(rng))
    }
}

/// Mean and floored biased variance of an `n × d` feature batch.
pub fn fit_modality_stats(features: &Tensor, eps: f64) -> Result<GaussianStats> {
    let (n, d) = features.dims2("fit_modality_stats")?;
    if n < 2 {
        return Err(Error::InsufficientBatch {
            op: "fit_modality_stats",
            rows: n,
        });
    }
    let (mean, var) = column_moments(features.data(), n, d);
    GaussianStats::new(mean, var, eps)
}

/// Linear interpolation `(1 - t)·g + t·i` of means and variances.
pub fn path_stats(t: f64, g: &GaussianStats, i: &GaussianStats) -> Result<GaussianStats> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Parameter {
            name: "t",
            value: t,
        });
    }
    g.check_dim(i, "path_stats")?;
    let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| (1.0 - t) * x + t * y)
            .collect()
    };
    GaussianStats::new(
        lerp(&g.mean, &i.mean),
        lerp(&g.var, &i.var),
        g.eps.max(i.eps),
    )
}

/// Kernel-weighted composition of the gene (`g`) and image (`i`)
/// statistics.
pub fn compose_statistics<R: Rng + ?Sized>(
    g: &GaussianStats,
    i: &GaussianStats,
    kernel: &KernelSpec,
    rng: &mut R,
) -> Result<GaussianStats> {
    g.check_dim(i, "compose_statistics")?;
    kernel.validate()?;
    match kernel.mode {
        KernelMode::Expectation => integrate_path(g, i, &kernel.measure()?),
        KernelMode::Stochastic | KernelMode::Centered => {
            let t = kernel.draw(rng)?;
            path_stats(t, g, i)
        }
    }
}

fn integrate_path(
    g: &GaussianStats,
    i: &GaussianStats,
    measure: &[(f64, f64)],
) -> Result<GaussianStats> {
    let d = g.dim();
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    for &(t, w) in measure {
        let p = path_stats(t, g, i)?;
        for k in 0..d {
            mean[k] += w * p.mean[k];
            var[k] += w * p.var[k];
        }
    }
    GaussianStats::new(mean, var, g.eps.max(i.eps))
}

/// Concatenates `[z_img, z_gene]` per row and standardises every column with
/// the batch mean and floored variance. Returns the whitened `n × 2d` batch
/// and the joint statistics.
pub fn joint_normalize(
    z_img: &Tensor,
    z_gene: &Tensor,
    eps: f64,
) -> Result<(Tensor, GaussianStats)> {
    let (n, d) = z_img.dims2("joint_normalize")?;
    let (n2, d2) = z_gene.dims2("joint_normalize")?;
    if n != n2 || d != d2 {
        return Err(Error::Dimension {
            op: "joint_normalize",
            left: z_img.shape().to_vec(),
            right: z_gene.shape().to_vec(),
        });
    }
    let mut joint = Vec::with_capacity(n * 2 * d);
    for r in 0..n {
        joint.extend_from_slice(z_img.row_slice(r));
        joint.extend_from_slice(z_gene.row_slice(r));
    }
    let joint = Tensor::matrix(n, 2 * d, joint)?;
    let stats = fit_modality_stats(&joint, eps)?;
    let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / math::sqrt(*v)).collect();
    let mut out = joint.into_data();
    for row in out.chunks_mut(2 * d) {
        for ((x, m), s) in row.iter_mut().zip(&stats.mean).zip(&inv_std) {
            *x = (*x - m) * s;
        }
    }
    Ok((Tensor::matrix(n, 2 * d, out)?, stats))
}

/// `mean + sqrt(var) ⊙ z` row-wise, with `stats` spanning all columns.
pub fn recolor(z_tilde: &Tensor, stats: &GaussianStats) -> Result<Tensor> {
    let (n, w) = z_tilde.dims2("recolor")?;
    if w != stats.dim() {
        return Err(Error::Dimension {
            op: "recolor",
            left: z_tilde.shape().to_vec(),
            right: vec![stats.dim()],
        });
    }
    let std: Vec<f64> = stats.var.iter().map(|v| math::sqrt(*v)).collect();
    let mut out = z_tilde.data().to_vec();
    for row in out.chunks_mut(w) {
        for ((x, m), s) in row.iter_mut().zip(&stats.mean).zip(&std) {
            *x = m + s * *x;
        }
    }
    Tensor::matrix(n, w, out)
}

/// Recolours each `d`-wide modality block of an `n × 2d` whitened batch
/// with the same `d`-dimensional statistics.
pub fn entangle(z_tilde: &Tensor, s: &GaussianStats) -> Result<Tensor> {
    let (_, w) = z_tilde.dims2("entangle")?;
    if w != 2 * s.dim() {
        return Err(Error::Dimension {
            op: "entangle",
            left: z_tilde.shape().to_vec(),
            right: vec![s.dim()],
        });
    }
    recolor(z_tilde, &s.block_product())
}

/// Differential entropy `0.5·Σ log(2πe·var_i)`.
pub fn gaussian_entropy(s: &GaussianStats) -> f64 {
    s.var.iter().map(|v| 0.5 * math::ln(2.0 * PI * E * v)).sum()
}

/// Outcome of [`entropy_inequality_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropySlack {
    /// `S(composite) - ∫ κ(t)·S(θ(t)) dt`.
    pub slack: f64,
    /// `slack >= -1e-9`.
    pub holds: bool,
}

/// Entropy of the expectation-mode composite minus the kernel-averaged
/// entropy along the path, both under the same quadrature measure.
/// The kernel's `mode` is ignored: the check is defined for the integral.
pub fn entropy_inequality_check(
    g: &GaussianStats,
    i: &GaussianStats,
    kernel: &KernelSpec,
) -> Result<EntropySlack> {
    g.check_dim(i, "entropy_inequality_check")?;
    let measure = kernel.measure()?;
    let composite = integrate_path(g, i, &measure)?;
    let mut averaged = 0.0;
    for &(t, w) in &measure {
        averaged += w * gaussian_entropy(&path_stats(t, g, i)?);
    }
    let slack = gaussian_entropy(&composite) - averaged;
    Ok(EntropySlack {
        slack,
        holds: slack >= -1e-9,
    })
}

/// Closed-form `KL(p ‖ q)` between diagonal Gaussians.
pub fn gaussian_kl(p: &GaussianStats, q: &GaussianStats) -> Result<f64> {
    p.check_dim(q, "gaussian_kl")?;
    let mut kl = 0.0;
    for k in 0..p.dim() {
        let diff = p.mean[k] - q.mean[k];
        kl += math::ln(q.var[k]) - math::ln(p.var[k]) + (p.var[k] + diff * diff) / q.var[k] - 1.0;
    }
    Ok(0.5 * kl)
}

/// Samples `n_samples` points from `s` and, for `n_directions` random unit
/// directions `a`, compares the empirical mean and variance of `aᵀx` with
/// `aᵀμ` and `Σ a_i² var_i`. Returns the largest deviation in standard
/// errors.
pub fn projection_moment_check<R: Rng + ?Sized>(
    s: &GaussianStats,
    n_samples: usize,
    n_directions: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_samples < 10_000 {
        return Err(Error::Parameter {
            name: "n_samples",
            value: n_samples as f64,
        });
    }
    let d = s.dim();
    let std: Vec<f64> = s.var.iter().map(|v| math::sqrt(*v)).collect();
    let mut samples = Vec::with_capacity(n_samples * d);
    for _ in 0..n_samples {
        for k in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            samples.push(s.mean[k] + std[k] * z);
        }
    }
    let n = n_samples as f64;
    let mut worst = 0.0f64;
    for _ in 0..n_directions {
        let mut a: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = math::sqrt(a.iter().map(|v| v * v).sum());
        for v in &mut a {
            *v /= norm;
        }
        let expected_mean: f64 = a.iter().zip(&s.mean).map(|(x, m)| x * m).sum();
        let expected_var: f64 = a.iter().zip(&s.var).map(|(x, v)| x * x * v).sum();
        let proj: Vec<f64> = samples
            .chunks(d)
            .map(|x| a.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect();
        let mean = proj.iter().sum::<f64>() / n;
        let var = proj.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0);
        let se_mean = math::sqrt(expected_var / n);
        let se_var = expected_var * math::sqrt(2.0 / (n - 1.0));
        worst = worst
            .max((mean - expected_mean).abs() / se_mean)
            .max((var - expected_var).abs() / se_var);
    }
    Ok(worst)
}

/// Graph-side statistics of an `n × d` latent batch, all `1 × d` rows.
#[derive(Debug, Clone, Copy)]
pub struct StatVars {
    pub mean: Var,
    pub var: Var,
    pub log_var: Var,
}

/// Batch mean and floored variance of `z`, tracked on the graph.
pub fn graph_stats(g: &mut Graph, z: Var, eps: f64) -> Result<StatVars> {
    let d = g.shape(z)[1];
    let (m, v) = g.batch_stats(z)?;
    let mean = g.reshape(m, &[1, d])?;
    let v = g.reshape(v, &[1, d])?;
    let log_var = g.log_floored(v, eps);
    let var = g.exp(log_var);
    Ok(StatVars { mean, var, log_var })
}

/// Path statistics at a fixed `t` on the graph.
pub fn graph_path_stats(
    g: &mut Graph,
    gene: &StatVars,
    img: &StatVars,
    t: f64,
) -> Result<StatVars> {
    let lerp = |g: &mut Graph, a: Var, b: Var| -> Result<Var> {
        let wa = g.mul_scalar(a, 1.0 - t);
        let wb = g.mul_scalar(b, t);
        g.add(wa, wb)
    };
    let mean = lerp(g, gene.mean, img.mean)?;
    let var = lerp(g, gene.var, img.var)?;
    let log_var = g.log(var);
    Ok(StatVars { mean, var, log_var })
}

fn broadcast_rows(g: &mut Graph, row: Var, n: usize) -> Result<Var> {
    let ones = g.constant(Tensor::ones(&[n, 1]));
    g.matmul(ones, row)
}

/// `(z - μ) / sqrt(var)` row-wise.
pub fn graph_whiten(g: &mut Graph, z: Var, stats: &StatVars) -> Result<Var> {
    let n = g.shape(z)[0];
    let mu = broadcast_rows(g, stats.mean, n)?;
    let centered = g.sub(z, mu)?;
    let neg_half = g.mul_scalar(stats.log_var, -0.5);
    let inv_std = g.exp(neg_half);
    let inv_std = broadcast_rows(g, inv_std, n)?;
    g.mul(centered, inv_std)
}

/// `μ + sqrt(var) ⊙ z` row-wise.
pub fn graph_recolor(g: &mut Graph, z: Var, stats: &StatVars) -> Result<Var> {
    let n = g.shape(z)[0];
    let half = g.mul_scalar(stats.log_var, 0.5);
    let std = g.exp(half);
    let std = broadcast_rows(g, std, n)?;
    let scaled = g.mul(z, std)?;
    let mu = broadcast_rows(g, stats.mean, n)?;
    g.add(scaled, mu)
}

/// `KL(p ‖ q)` between diagonal Gaussians given blockwise graph statistics;
/// blocks are summed.
pub fn graph_kl(g: &mut Graph, p: &[StatVars], q: &[StatVars]) -> Result<Var> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Dimension {
            op: "graph_kl",
            left: vec![p.len()],
            right: vec![q.len()],
        });
    }
    let mut terms = Vec::with_capacity(p.len());
    for (pb, qb) in p.iter().zip(q) {
        let log_ratio = g.sub(qb.log_var, pb.log_var)?;
        let diff = g.sub(pb.mean, qb.mean)?;
        let sq = g.mul(diff, diff)?;
        let num = g.add(pb.var, sq)?;
        let neg = g.neg(qb.log_var);
        let inv_q = g.exp(neg);
        let ratio = g.mul(num, inv_q)?;
        let t = g.add(log_ratio, ratio)?;
        let t = g.add_scalar(t, -1.0);
        terms.push(g.sum(t));
    }
    let all = if terms.len() == 1 {
        terms[0]
    } else {
        let cat = {
            let mut rows = Vec::with_capacity(terms.len());
            for t in &terms {
                rows.push(g.reshape(*t, &[1, 1])?);
            }
            g.concat(&rows, Axis::Rows)?
        };
        g.sum(cat)
    };
    Ok(g.mul_scalar(all, 0.5))
}

/// Converts graph statistics to [`GaussianStats`].
pub fn stats_value(g: &Graph, s: &StatVars, eps: f64) -> Result<GaussianStats> {
    GaussianStats::new(
        g.value(s.mean).data().to_vec(),
        g.value(s.var).data().to_vec(),
        eps,
    )
}
