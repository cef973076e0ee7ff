//! Synthetic multimodal domains with a known latent risk.
//!
//! Each sample has a latent risk `u ~ N(0, 1)`. A minority of its patch
//! tokens carry `u` along a shared direction, the rest are noise, and every
//! patch is shifted by the domain's offset. Pathway tokens carry `u` with
//! a weaker signal-to-noise ratio. Event times are exponential with rate
//! `exp(u)`, so ranking by `u` is concordance-optimal.
//!
//! Directions come from `task_seed` and are shared across domains that use
//! the same task seed; per-sample draws come from `seed`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::Open01;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fusion::ModalityBatch;
use crate::math;
use crate::rng::{self, streams};
use crate::survival::SurvivalRecord;
use crate::tensor::Tensor;

/// Default number of patches drawn per sample during training.
pub const DEFAULT_TRAIN_PATCHES: usize = 4096;

/// Standard deviation of the noise on signal-bearing patches.
pub const SIGNAL_PATCH_NOISE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub domain_id: String,
    pub n_samples: usize,
    pub patches_per_sample: usize,
    pub pathways: usize,
    /// Patch feature width.
    pub signal_dim: usize,
    /// Pathway feature width.
    pub pathway_dim: usize,
    pub patch_signal_fraction: f64,
    /// Added to every patch feature; length `signal_dim`.
    pub domain_shift_offset: Vec<f64>,
    pub gene_noise_scale: f64,
    pub censor_fraction: f64,
    pub seed: u64,
    /// Seeds the signal directions shared by related domains.
    pub task_seed: u64,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let f = self.patch_signal_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Parameter {
                name: "patch_signal_fraction",
                value: f,
            });
        }
        if !(0.0..1.0).contains(&self.censor_fraction) {
            return Err(Error::Parameter {
                name: "censor_fraction",
                value: self.censor_fraction,
            });
        }
        if !(self.gene_noise_scale >= 0.0 && self.gene_noise_scale.is_finite()) {
            return Err(Error::Parameter {
                name: "gene_noise_scale",
                value: self.gene_noise_scale,
            });
        }
        for (name, v) in [
            ("n_samples", self.n_samples),
            ("patches_per_sample", self.patches_per_sample),
            ("pathways", self.pathways),
            ("signal_dim", self.signal_dim),
            ("pathway_dim", self.pathway_dim),
        ] {
            if v == 0 {
                return Err(Error::Parameter { name, value: 0.0 });
            }
        }
        if self.domain_shift_offset.len() != self.signal_dim {
            return Err(Error::Dimension {
                op: "domain_shift_offset",
                left: vec![self.domain_shift_offset.len()],
                right: vec![self.signal_dim],
            });
        }
        if self.domain_shift_offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite domain offset".into()));
        }
        Ok(())
    }

    /// Number of signal-bearing patches per sample, `⌈fraction·p⌉`.
    pub fn signal_patches(&self) -> usize {
        let k = math::ceil(self.patch_signal_fraction * self.patches_per_sample as f64) as usize;
        k.clamp(1, self.patches_per_sample)
    }
}

/// A generated domain together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDomain {
    pub batch: ModalityBatch,
    /// Latent risk `u` per sample.
    pub latent_risk: Vec<f64>,
    /// Uncensored event times.
    pub event_times: Vec<f64>,
    /// Indices of the signal patches of each sample, ascending.
    pub signal_patches: Vec<Vec<usize>>,
}

fn unit_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = math::sqrt(v.iter().map(|x| x * x).sum());
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Signal directions for a task: the patch direction (`signal_dim`) and one
/// direction per pathway (`pathway_dim` each).
pub fn task_directions(spec: &DomainSpec) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut r = rng::stream(spec.task_seed, streams::TASK);
    let patch = unit_direction(spec.signal_dim, &mut r);
    let genes = (0..spec.pathways)
        .map(|_| unit_direction(spec.pathway_dim, &mut r))
        .collect();
    (patch, genes)
}

/// Generates one domain. Identical specs give bit-identical output.
pub fn generate_domain(spec: &DomainSpec) -> Result<SyntheticDomain> {
    spec.validate()?;
    let (patch_dir, gene_dirs) = task_directions(spec);
    let (n, p, q) = (spec.n_samples, spec.patches_per_sample, spec.pathways);
    let (f, h) = (spec.signal_dim, spec.pathway_dim);
    let k = spec.signal_patches();
    let mut r = rng::stream(spec.seed, streams::DATA);

    let mut patches = Vec::with_capacity(n * p * f);
    let mut pathways = Vec::with_capacity(n * q * h);
    let mut labels = Vec::with_capacity(n);
    let mut latent_risk = Vec::with_capacity(n);
    let mut event_times = Vec::with_capacity(n);
    let mut signal_patches = Vec::with_capacity(n);

    for _ in 0..n {
        let u: f64 = StandardNormal.sample(&mut r);
        let mut chosen = index::sample(&mut r, p, k).into_vec();
        chosen.sort_unstable();
        let mut is_signal = vec![false; p];
        for &c in &chosen {
            is_signal[c] = true;
        }
        for &signal in &is_signal {
            for j in 0..f {
                let noise: f64 = StandardNormal.sample(&mut r);
                let v = if signal {
                    u * patch_dir[j] + SIGNAL_PATCH_NOISE * noise
                } else {
                    noise
                };
                patches.push(v + spec.domain_shift_offset[j]);
            }
        }
        for dir in &gene_dirs {
            for &dj in dir {
                let noise: f64 = StandardNormal.sample(&mut r);
                pathways.push(u * dj + spec.gene_noise_scale * noise);
            }
        }
        let e: f64 = Open01.sample(&mut r);
        let t = -math::ln(e) / math::exp(u);
        let censor_draw: f64 = r.random();
        let cut: f64 = Open01.sample(&mut r);
        let record = if censor_draw < spec.censor_fraction {
            SurvivalRecord::new(cut * t, false)
        } else {
            SurvivalRecord::new(t, true)
        };
        labels.push(record);
        latent_risk.push(u);
        event_times.push(t);
        signal_patches.push(chosen);
    }

    let batch = ModalityBatch::new(
        Tensor::matrix(n * p, f, patches)?,
        p,
        Tensor::matrix(n * q, h, pathways)?,
        q,
        labels,
    )?;
    Ok(SyntheticDomain {
        batch,
        latent_risk,
        event_times,
        signal_patches,
    })
}

/// Patch rows to use for one sample: all `p` in order when `p ≤ n_train`,
/// otherwise `n_train` distinct rows drawn from `rng`, ascending.
pub fn sample_patches<R: Rng + ?Sized>(
    p: usize,
    n_train: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n_train == 0 {
        return Err(Error::Parameter {
            name: "n_train",
            value: 0.0,
        });
    }
    if p <= n_train {
        return Ok((0..p).collect());
    }
    let mut picked = index::sample(rng, p, n_train).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec() -> DomainSpec {
        DomainSpec {
            domain_id: "A".into(),
            n_samples: 50,
            patches_per_sample: 8,
            pathways: 3,
            signal_dim: 4,
            pathway_dim: 5,
            patch_signal_fraction: 0.25,
            domain_shift_offset: vec![0.0; 4],
            gene_noise_scale: 1.0,
            censor_fraction: 0.3,
            seed: 9,
            task_seed: 1,
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            generate_domain(&spec()).unwrap(),
            generate_domain(&spec()).unwrap()
        );
    }

    #[test]
    fn signal_patch_count_and_times() {
        let s = spec();
        assert_eq!(s.signal_patches(), 2);
        let d = generate_domain(&s).unwrap();
        for (rec, t) in d.batch.labels().iter().zip(&d.event_times) {
            assert!(rec.time > 0.0);
            if rec.event {
                assert_eq!(rec.time, *t);
            } else {
                assert!(rec.time < *t);
            }
        }
        assert!(d.signal_patches.iter().all(|c| c.len() == 2));
    }

    #[test]
    fn rejects_bad_fractions() {
        for f in [0.0, 1.5, f64::NAN] {
            let mut s = spec();
            s.patch_signal_fraction = f;
            assert!(generate_domain(&s).is_err());
        }
        let mut s = spec();
        s.censor_fraction = 1.0;
        assert!(generate_domain(&s).is_err());
        let mut s = spec();
        s.domain_shift_offset.pop();
        assert!(generate_domain(&s).is_err());
    }

    #[test]
    fn patch_sampling() {
        let mut r = rng::stream(1, 0);
        assert_eq!(
            sample_patches(5, 4096, &mut r).unwrap(),
            vec![0, 1, 2, 3, 4]
        );
        let a = sample_patches(100, 10, &mut rng::stream(3, 3)).unwrap();
        let b = sample_patches(100, 10, &mut rng::stream(3, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_patches(5, 0, &mut r).is_err());
    }
}
