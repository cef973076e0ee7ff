//! Single-source training, cross-domain evaluation, ablation and grids.

use mmsurv_core::dataio::generate_domain;
use mmsurv_core::fusion::BackboneParams;
use mmsurv_core::rng::{self, streams};
use mmsurv_core::survival::{
    assign_bins, bin_edges, concordance_index, km_estimator, median_risk_split, SurvivalRecord,
};
use mmsurv_core::train::{self, EpochLog};

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, Variant, GRID_FIXED};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::report::{DomainEval, RunReport, SeedRun, Table, TableRow};

/// Loads a domain from disk or generates it from its synthetic spec.
pub fn load_domain(cfg: &ExperimentConfig, id: &str) -> Result<Dataset> {
    let d = cfg
        .domain(id)
        .ok_or_else(|| Error::Config(format!("domain {id} is not defined")))?;
    match (&d.path, &d.synthetic) {
        (Some(path), _) => Dataset::load(path),
        (None, Some(s)) => Ok(Dataset::from_synthetic(id, generate_domain(&s.spec(id))?)),
        (None, None) => Err(Error::Config(format!("domain {id} has no data source"))),
    }
}

/// Source and target data with survival bins fitted on the source.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub source: Dataset,
    pub targets: Vec<Dataset>,
    pub bin_edges: Vec<f64>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut source = load_domain(cfg, &cfg.source)?;
    let edges = bin_edges(source.batch.labels(), cfg.model.bins)?;
    assign_bins(source.batch.labels_mut(), &edges);
    let mut targets = Vec::with_capacity(cfg.targets.len());
    for id in &cfg.targets {
        let mut t = load_domain(cfg, id)?;
        if t.batch.patch_dim() != source.batch.patch_dim()
            || t.batch.pathway_dim() != source.batch.pathway_dim()
        {
            return Err(Error::Config(format!(
                "domain {id} has feature widths ({}, {}) but the source has ({}, {})",
                t.batch.patch_dim(),
                t.batch.pathway_dim(),
                source.batch.patch_dim(),
                source.batch.pathway_dim()
            )));
        }
        assign_bins(t.batch.labels_mut(), &edges);
        targets.push(t);
    }
    Ok(Prepared {
        source,
        targets,
        bin_edges: edges,
    })
}

/// Trains on the source domain with one seed.
pub fn train_seed(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    seed: u64,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Checkpoint, Vec<EpochLog>)> {
    let b = &prep.source.batch;
    let dims = cfg.backbone_dims(b.patch_dim(), b.pathway_dim());
    let mut params = BackboneParams::init(dims, &mut rng::stream(seed, streams::INIT))?;
    let log = train::train(&mut params, b, &cfg.train_config(seed), on_epoch)?;
    let ckpt = Checkpoint {
        config_hash: cfg.hash(),
        seed,
        params,
        bin_edges: prep.bin_edges.clone(),
    };
    Ok((ckpt, log))
}

/// Clean-mode evaluation with every patch: C-index, median split and
/// per-group Kaplan–Meier curves.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset) -> Result<DomainEval> {
    let d = ckpt.params.dims;
    let b = &data.batch;
    if d.patch_dim != b.patch_dim() || d.pathway_dim != b.pathway_dim() {
        return Err(Error::Checkpoint(format!(
            "model expects feature widths ({}, {}), dataset {} has ({}, {})",
            d.patch_dim,
            d.pathway_dim,
            data.id,
            b.patch_dim(),
            b.pathway_dim()
        )));
    }
    let risks = train::risk_scores(&ckpt.params, b)?;
    eval_risks(&data.id, risks, b.labels())
}

/// Metrics for given risk scores.
pub fn eval_risks(domain: &str, risks: Vec<f64>, labels: &[SurvivalRecord]) -> Result<DomainEval> {
    let c_index = match concordance_index(&risks, labels) {
        Ok(c) => Some(c),
        Err(mmsurv_core::Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let (low, high) = median_risk_split(&risks)?;
    let pick = |idx: &[usize]| -> Vec<SurvivalRecord> { idx.iter().map(|&i| labels[i]).collect() };
    let km_low = km_estimator(&pick(&low))?;
    // Every risk ties at the median when the high group is empty.
    let km_high = if high.is_empty() {
        mmsurv_core::survival::KmCurve {
            times: Vec::new(),
            survival: Vec::new(),
            at_risk: Vec::new(),
            deaths: Vec::new(),
        }
    } else {
        km_estimator(&pick(&high))?
    };
    Ok(DomainEval {
        domain: domain.to_string(),
        n: labels.len(),
        events: labels.iter().filter(|r| r.event).count(),
        c_index,
        risks,
        low,
        high,
        km_low,
        km_high,
    })
}

/// Progress events for callers that want to show them.
#[derive(Debug, Clone, Copy)]
pub enum Progress<'a> {
    Epoch { seed: u64, log: &'a EpochLog },
    SeedDone { seed: u64 },
}

/// Trains and evaluates once per configured seed.
pub fn run(cfg: &ExperimentConfig, mut progress: impl FnMut(Progress<'_>)) -> Result<RunReport> {
    let prep = prepare(cfg)?;
    run_prepared(cfg, &prep, &mut progress)
}

fn run_prepared(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    progress: &mut dyn FnMut(Progress<'_>),
) -> Result<RunReport> {
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let (checkpoint, log) = train_seed(cfg, prep, seed, |l| {
            progress(Progress::Epoch { seed, log: l })
        })?;
        let source = evaluate(&checkpoint, &prep.source)?;
        let targets = prep
            .targets
            .iter()
            .map(|t| evaluate(&checkpoint, t))
            .collect::<Result<Vec<_>>>()?;
        progress(Progress::SeedDone { seed });
        runs.push(SeedRun {
            seed,
            log,
            checkpoint,
            source,
            targets,
        });
    }
    Ok(RunReport {
        config_hash: cfg.hash(),
        source: cfg.source.clone(),
        targets: cfg.targets.clone(),
        runs,
    })
}

/// Four rows: backbone, +SDIR, +CADE and both, each over every seed.
pub fn run_ablation(
    cfg: &ExperimentConfig,
    mut progress: impl FnMut(Progress<'_>),
) -> Result<Table> {
    let prep = prepare(cfg)?;
    let mut rows = Vec::with_capacity(4);
    for v in Variant::ALL {
        let report = run_prepared(&cfg.with_variant(v), &prep, &mut progress)?;
        rows.push(TableRow::from_report(v.label(), &report));
    }
    Ok(Table {
        title: "Ablation: C-index per target domain (mean ± std over seeds)".into(),
        config_hash: cfg.hash(),
        key: "variant".into(),
        targets: cfg.targets.clone(),
        rows,
    })
}

/// The α sweep (γ fixed) and the γ sweep (α fixed), with both modules on.
pub fn run_grid(
    cfg: &ExperimentConfig,
    alphas: &[f64],
    gammas: &[f64],
    mut progress: impl FnMut(Progress<'_>),
) -> Result<(Table, Table)> {
    if alphas.is_empty() || gammas.is_empty() {
        return Err(Error::Config("grid lists must not be empty".into()));
    }
    let mut checked = cfg.clone();
    checked.grid.alphas = alphas.to_vec();
    checked.grid.gammas = gammas.to_vec();
    checked.validate()?;
    let prep = prepare(cfg)?;
    let both = cfg.with_variant(Variant::Both);

    let mut alpha_rows = Vec::with_capacity(alphas.len());
    for &a in alphas {
        let c = both.with_alpha(a).with_gamma(GRID_FIXED);
        let report = run_prepared(&c, &prep, &mut progress)?;
        alpha_rows.push(TableRow::from_report(format!("{a}"), &report));
    }
    let mut gamma_rows = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let c = both.with_alpha(GRID_FIXED).with_gamma(g);
        let report = run_prepared(&c, &prep, &mut progress)?;
        gamma_rows.push(TableRow::from_report(format!("{g}"), &report));
    }
    let table = |title: String, key: &str, rows| Table {
        title,
        config_hash: cfg.hash(),
        key: key.into(),
        targets: cfg.targets.clone(),
        rows,
    };
    Ok((
        table(
            format!("SDIR alpha sweep at gamma = {GRID_FIXED}: C-index (mean ± std over seeds)"),
            "alpha",
            alpha_rows,
        ),
        table(
            format!("CADE gamma sweep at alpha = {GRID_FIXED}: C-index (mean ± std over seeds)"),
            "gamma",
            gamma_rows,
        ),
    ))
}
