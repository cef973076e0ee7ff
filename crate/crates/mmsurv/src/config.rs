//! Experiment configuration.
//!
//! Configs are TOML files. Every output file is stamped with the SHA-256 of
//! the config's canonical JSON form. Canonicalisation fills module defaults
//! for enabled modules and clears every setting of a disabled module, so a
//! module switched off hashes and runs exactly like one never mentioned. The
//! output directory is not part of the canonical form.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use mmsurv_core::cade::{KernelMode, KernelSpec, DEFAULT_VAR_FLOOR};
use mmsurv_core::dataio::{DomainSpec, DEFAULT_TRAIN_PATCHES};
use mmsurv_core::fusion::BackboneDims;
use mmsurv_core::train::{CadeSettings, OptimizerKind, SdirSettings, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 0.3;
pub const DEFAULT_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
/// The parameter held fixed while the other one is swept.
pub const GRID_FIXED: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: String,
    pub targets: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub sdir: SdirConfig,
    #[serde(default)]
    pub cade: CadeConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub domains: Vec<DomainConfig>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    /// Shared latent width `d`.
    pub latent: usize,
    /// Survival bins `B`.
    pub bins: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            latent: 8,
            bins: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub train_patches: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-2,
            optimizer: Optimizer::Adam,
            train_patches: DEFAULT_TRAIN_PATCHES,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdirConfig {
    pub enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Route gene tokens through SDIR as well.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gene: Option<bool>,
    /// Learn the anchor `e` (otherwise it stays at its initial value).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_anchor: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Expectation,
    Stochastic,
    Centered,
}

impl From<KernelName> for KernelMode {
    fn from(k: KernelName) -> Self {
        match k {
            KernelName::Expectation => KernelMode::Expectation,
            KernelName::Stochastic => KernelMode::Stochastic,
            KernelName::Centered => KernelMode::Centered,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CadeConfig {
    pub enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            alphas: DEFAULT_GRID.to_vec(),
            gammas: DEFAULT_GRID.to_vec(),
        }
    }
}

/// One domain: either a dataset directory or a synthetic generator spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Offset {
    Uniform(f64),
    PerFeature(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub patches_per_sample: usize,
    pub pathways: usize,
    pub signal_dim: usize,
    pub pathway_dim: usize,
    pub patch_signal_fraction: f64,
    pub offset: Offset,
    pub gene_noise_scale: f64,
    pub censor_fraction: f64,
    pub seed: u64,
    pub task_seed: u64,
}

impl SyntheticConfig {
    pub fn spec(&self, id: &str) -> DomainSpec {
        let offset = match &self.offset {
            Offset::Uniform(v) => vec![*v; self.signal_dim],
            Offset::PerFeature(v) => v.clone(),
        };
        DomainSpec {
            domain_id: id.to_string(),
            n_samples: self.n_samples,
            patches_per_sample: self.patches_per_sample,
            pathways: self.pathways,
            signal_dim: self.signal_dim,
            pathway_dim: self.pathway_dim,
            patch_signal_fraction: self.patch_signal_fraction,
            domain_shift_offset: offset,
            gene_noise_scale: self.gene_noise_scale,
            censor_fraction: self.censor_fraction,
            seed: self.seed,
            task_seed: self.task_seed,
        }
    }
}

/// Named model variant of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Backbone,
    Sdir,
    Cade,
    Both,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Backbone,
        Variant::Sdir,
        Variant::Cade,
        Variant::Both,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Backbone => "backbone",
            Variant::Sdir => "+SDIR",
            Variant::Cade => "+CADE",
            Variant::Both => "+SDIR+CADE",
        }
    }

    fn toggles(self) -> (bool, bool) {
        match self {
            Variant::Backbone => (false, false),
            Variant::Sdir => (true, false),
            Variant::Cade => (false, true),
            Variant::Both => (true, true),
        }
    }
}

fn synthetic_domain(id: &str, n: usize, offset: f64, seed: u64) -> DomainConfig {
    DomainConfig {
        id: id.to_string(),
        path: None,
        synthetic: Some(SyntheticConfig {
            n_samples: n,
            patches_per_sample: 16,
            pathways: 4,
            signal_dim: 8,
            pathway_dim: 8,
            patch_signal_fraction: 0.375,
            offset: Offset::Uniform(offset),
            gene_noise_scale: 1.0,
            censor_fraction: 0.3,
            seed,
            task_seed: 5,
        }),
    }
}

impl ExperimentConfig {
    /// The two-domain synthetic benchmark: domain `A` (source) and a
    /// shifted copy `B` (target) sharing the risk directions.
    pub fn benchmark() -> Self {
        Self {
            source: "A".into(),
            targets: vec!["B".into()],
            seeds: default_seeds(),
            output_dir: None,
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            sdir: SdirConfig {
                enabled: true,
                alpha: Some(DEFAULT_ALPHA),
                ..SdirConfig::default()
            },
            cade: CadeConfig {
                enabled: true,
                gamma: Some(DEFAULT_GAMMA),
                ..CadeConfig::default()
            },
            grid: GridConfig::default(),
            domains: vec![
                synthetic_domain("A", 800, 0.0, 11),
                synthetic_domain("B", 800, 1.0, 12),
            ],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative dataset paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            for d in &mut cfg.domains {
                if let Some(p) = &mut d.path {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.targets.is_empty() {
            return err("at least one target domain is required".into());
        }
        let targets: BTreeSet<&str> = self.targets.iter().map(String::as_str).collect();
        if targets.len() != self.targets.len() {
            return err("target domains must be distinct".into());
        }
        if targets.contains(self.source.as_str()) {
            return err(format!("source domain {} is also a target", self.source));
        }
        if self.seeds.is_empty() {
            return err("seeds must not be empty".into());
        }
        let mut ids = BTreeSet::new();
        for d in &self.domains {
            if !ids.insert(d.id.as_str()) {
                return err(format!("domain {} defined twice", d.id));
            }
            if d.path.is_some() == d.synthetic.is_some() {
                return err(format!(
                    "domain {} needs exactly one of `path` or `synthetic`",
                    d.id
                ));
            }
            if let Some(s) = &d.synthetic {
                s.spec(&d.id)
                    .validate()
                    .map_err(|e| Error::Config(format!("domain {}: {e}", d.id)))?;
            }
        }
        for id in std::iter::once(&self.source).chain(&self.targets) {
            if !ids.contains(id.as_str()) {
                return err(format!("domain {id} is not defined"));
            }
        }
        let m = &self.model;
        if m.hidden == 0 || m.latent == 0 {
            return err("model widths must be positive".into());
        }
        if m.bins < 2 {
            return err("bins must be at least 2".into());
        }
        for a in &self.grid.alphas {
            if !(0.0..1.0).contains(a) {
                return err(format!("grid alpha {a} outside [0, 1)"));
            }
        }
        for g in &self.grid.gammas {
            if !(*g > 0.0 && *g < 1.0) {
                return err(format!("grid gamma {g} outside (0, 1)"));
            }
        }
        self.train_config(self.seeds[0])
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Canonical form: module defaults filled in when enabled, module
    /// settings removed when disabled, no output directory.
    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.output_dir = None;
        c.sdir = if c.sdir.enabled {
            SdirConfig {
                enabled: true,
                alpha: Some(c.sdir.alpha.unwrap_or(DEFAULT_ALPHA)),
                gene: Some(c.sdir.gene.unwrap_or(false)),
                train_anchor: Some(c.sdir.train_anchor.unwrap_or(true)),
            }
        } else {
            SdirConfig::default()
        };
        c.cade = if c.cade.enabled {
            let d = KernelSpec::default();
            CadeConfig {
                enabled: true,
                gamma: Some(c.cade.gamma.unwrap_or(DEFAULT_GAMMA)),
                kernel: Some(c.cade.kernel.unwrap_or(KernelName::Stochastic)),
                concentration: Some(c.cade.concentration.unwrap_or(d.concentration)),
                quadrature_points: Some(c.cade.quadrature_points.unwrap_or(d.quadrature_points)),
                var_floor: Some(c.cade.var_floor.unwrap_or(DEFAULT_VAR_FLOOR)),
            }
        } else {
            CadeConfig::default()
        };
        c
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.canonical()).expect("config serialises");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn domain(&self, id: &str) -> Option<&DomainConfig> {
        self.domains.iter().find(|d| d.id == id)
    }

    pub fn with_variant(&self, v: Variant) -> Self {
        let (s, c) = v.toggles();
        let mut out = self.clone();
        out.sdir.enabled = s;
        out.cade.enabled = c;
        out
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.sdir.alpha = Some(alpha);
        out
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        let mut out = self.clone();
        out.cade.gamma = Some(gamma);
        out
    }

    pub fn with_seeds(&self, seeds: Vec<u64>) -> Self {
        let mut out = self.clone();
        out.seeds = seeds;
        out
    }

    pub fn backbone_dims(&self, patch_dim: usize, pathway_dim: usize) -> BackboneDims {
        BackboneDims {
            patch_dim,
            pathway_dim,
            hidden: self.model.hidden,
            latent: self.model.latent,
            bins: self.model.bins,
        }
    }

    /// Core training settings for one seed, read from the canonical form.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let c = self.canonical();
        let t = &c.training;
        let sdir = c.sdir.enabled.then(|| SdirSettings {
            alpha: c.sdir.alpha.unwrap_or(DEFAULT_ALPHA),
            gene: c.sdir.gene.unwrap_or(false),
        });
        let cade = c.cade.enabled.then(|| CadeSettings {
            kernel: KernelSpec {
                gamma: c.cade.gamma.unwrap_or(DEFAULT_GAMMA),
                mode: c.cade.kernel.unwrap_or(KernelName::Stochastic).into(),
                concentration: c.cade.concentration.unwrap_or(10.0),
                quadrature_points: c.cade.quadrature_points.unwrap_or(64),
            },
            var_floor: c.cade.var_floor.unwrap_or(DEFAULT_VAR_FLOOR),
        });
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: match t.optimizer {
                Optimizer::Sgd => OptimizerKind::Sgd,
                Optimizer::Adam => OptimizerKind::Adam,
            },
            train_patches: t.train_patches,
            train_anchor: c.sdir.train_anchor.unwrap_or(true),
            sdir,
            cade,
            seed,
        }
    }
}
