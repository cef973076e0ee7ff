use mmsurv_core::cade::{KernelMode, KernelSpec};
use mmsurv_core::dataio::{generate_domain, DomainSpec};
use mmsurv_core::fusion::{
    forward, BackboneDims, BackboneParams, ForwardMode, ForwardOptions, ModalityBatch,
};
use mmsurv_core::rng::{self, Rng};
use mmsurv_core::sdir::SparsityMask;
use mmsurv_core::survival::{assign_bins, bin_edges, SurvivalRecord};
use mmsurv_core::train::{self, CadeSettings, SdirSettings, TrainConfig};
use mmsurv_core::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::Rng as _;

fn dims(f: usize, h: usize) -> BackboneDims {
    BackboneDims {
        patch_dim: f,
        pathway_dim: h,
        hidden: 6,
        latent: 4,
        bins: 3,
    }
}

fn batch(n: usize, p: usize, q: usize, f: usize, h: usize, r: &mut Rng) -> ModalityBatch {
    let patches = (0..n * p * f).map(|_| r.random_range(-1.0..1.0)).collect();
    let pathways = (0..n * q * h).map(|_| r.random_range(-1.0..1.0)).collect();
    let labels = (0..n)
        .map(|i| {
            let mut rec = SurvivalRecord::new(1.0 + i as f64, i % 3 != 0);
            rec.bin = i % 3;
            rec
        })
        .collect();
    ModalityBatch::new(
        Tensor::matrix(n * p, f, patches).unwrap(),
        p,
        Tensor::matrix(n * q, h, pathways).unwrap(),
        q,
        labels,
    )
    .unwrap()
}

fn logits(params: &BackboneParams, b: &ModalityBatch, opts: &ForwardOptions) -> Tensor {
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false, false);
    let out = forward(&mut g, b, &vars, opts, &mut rng::stream(0, 0)).unwrap();
    g.value(out.logits).clone()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn patch_order_within_a_sample_does_not_matter() {
    let mut r = rng::stream(0, 400);
    let params = BackboneParams::init(dims(3, 2), &mut r).unwrap();
    let (n, p) = (4, 6);
    let b = batch(n, p, 3, 3, 2, &mut r);
    let mut perms = Vec::new();
    for _ in 0..n {
        let mut idx: Vec<usize> = (0..p).collect();
        idx.shuffle(&mut r);
        perms.push(idx);
    }
    let shuffled = b.with_patch_subsets(&perms).unwrap();
    assert_ne!(shuffled.patches(), b.patches());
    let opts = ForwardOptions::default();
    let a = logits(&params, &b, &opts);
    let c = logits(&params, &shuffled, &opts);
    assert!(max_abs_diff(a.data(), c.data()) <= 1e-12);
}

#[test]
fn sample_order_permutes_outputs() {
    let mut r = rng::stream(1, 401);
    let params = BackboneParams::init(dims(3, 2), &mut r).unwrap();
    let n = 6;
    let b = batch(n, 4, 3, 3, 2, &mut r);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut r);
    let permuted = b.select(&perm).unwrap();
    let masks: Vec<SparsityMask> = (0..n)
        .map(|_| SparsityMask::sample(4, 0.5, &mut r).unwrap())
        .collect();
    let modes = [
        ForwardOptions::default(),
        ForwardOptions {
            mode: ForwardMode::Sdir,
            frozen_masks: Some(masks.clone()),
            ..ForwardOptions::default()
        },
        ForwardOptions {
            mode: ForwardMode::Cade,
            frozen_t: Some(0.4),
            ..ForwardOptions::default()
        },
    ];
    for opts in modes {
        let mut permuted_opts = opts.clone();
        if let Some(m) = &opts.frozen_masks {
            permuted_opts.frozen_masks = Some(perm.iter().map(|&i| m[i].clone()).collect());
        }
        let a = logits(&params, &b, &opts);
        let c = logits(&params, &permuted, &permuted_opts);
        let (_, bins) = a.dims2("test").unwrap();
        for (row, &src) in perm.iter().enumerate() {
            let want = a.row_slice(src);
            let got = c.row_slice(row);
            assert!(max_abs_diff(want, got) <= 1e-10, "{:?}", opts.mode);
            assert_eq!(got.len(), bins);
        }
    }
}

#[test]
fn sdir_without_sparsity_on_large_latents_matches_clean() {
    let mut r = rng::stream(2, 402);
    let mut params = BackboneParams::init(dims(3, 2), &mut r).unwrap();
    // Push every image token far from the origin.
    for v in params.img_projector.b.data_mut() {
        *v = 40.0;
    }
    let b = batch(5, 4, 3, 3, 2, &mut r);
    let clean = logits(&params, &b, &ForwardOptions::default());
    let sdir = logits(
        &params,
        &b,
        &ForwardOptions {
            mode: ForwardMode::Sdir,
            alpha: 0.0,
            ..ForwardOptions::default()
        },
    );
    for (c, s) in clean.data().iter().zip(sdir.data()) {
        assert!((c - s).abs() <= 1e-6 * c.abs().max(1e-12), "{c} vs {s}");
    }
}

#[test]
fn cade_between_identical_modalities_is_the_clean_path() {
    let mut r = rng::stream(3, 403);
    let mut params = BackboneParams::init(dims(3, 3), &mut r).unwrap();
    params.gene_encoder = params.img_encoder.clone();
    params.gene_projector = params.img_projector.clone();
    let base = batch(6, 3, 3, 3, 3, &mut r);
    let same = ModalityBatch::new(
        base.patches().clone(),
        3,
        base.patches().clone(),
        3,
        base.labels().to_vec(),
    )
    .unwrap();
    let clean = logits(&params, &same, &ForwardOptions::default());
    for t in [0.0, 0.3, 0.5, 0.9] {
        let cade = logits(
            &params,
            &same,
            &ForwardOptions {
                mode: ForwardMode::Cade,
                frozen_t: Some(t),
                ..ForwardOptions::default()
            },
        );
        assert!(max_abs_diff(clean.data(), cade.data()) <= 1e-10, "t {t}");
    }
}

#[test]
fn expectation_kernel_needs_no_randomness() {
    let mut r = rng::stream(4, 404);
    let params = BackboneParams::init(dims(3, 2), &mut r).unwrap();
    let b = batch(4, 3, 2, 3, 2, &mut r);
    let opts = ForwardOptions {
        mode: ForwardMode::Cade,
        kernel: KernelSpec::new(0.2, KernelMode::Expectation).unwrap(),
        ..ForwardOptions::default()
    };
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false, false);
    let out = forward(&mut g, &b, &vars, &opts, &mut rng::stream(9, 9)).unwrap();
    assert!((out.kernel_t.unwrap() - 0.5).abs() <= 1e-12);
}

fn small_domain() -> ModalityBatch {
    let spec = DomainSpec {
        domain_id: "A".into(),
        n_samples: 96,
        patches_per_sample: 6,
        pathways: 3,
        signal_dim: 4,
        pathway_dim: 4,
        patch_signal_fraction: 0.5,
        domain_shift_offset: vec![0.0; 4],
        gene_noise_scale: 0.5,
        censor_fraction: 0.3,
        seed: 1,
        task_seed: 2,
    };
    let mut b = generate_domain(&spec).unwrap().batch;
    let edges = bin_edges(b.labels(), 3).unwrap();
    assign_bins(b.labels_mut(), &edges);
    b
}

fn config(sdir: bool, cade: bool) -> TrainConfig {
    TrainConfig {
        epochs: 20,
        batch_size: 16,
        train_patches: 4,
        sdir: sdir.then_some(SdirSettings {
            alpha: 0.5,
            gene: false,
        }),
        cade: cade.then(|| CadeSettings {
            kernel: KernelSpec::new(0.3, KernelMode::Stochastic).unwrap(),
            var_floor: 1e-5,
        }),
        seed: 7,
        ..TrainConfig::default()
    }
}

fn trained(cfg: &TrainConfig, data: &ModalityBatch) -> (BackboneParams, Vec<train::EpochLog>) {
    let d = BackboneDims {
        patch_dim: 4,
        pathway_dim: 4,
        hidden: 8,
        latent: 4,
        bins: 3,
    };
    let mut params = BackboneParams::init(d, &mut rng::stream(cfg.seed, 1)).unwrap();
    let log = train::train(&mut params, data, cfg, |_| {}).unwrap();
    (params, log)
}

#[test]
fn training_is_deterministic_and_reduces_the_loss() {
    let data = small_domain();
    let cfg = config(true, true);
    let (a, log) = trained(&cfg, &data);
    let (b, again) = trained(&cfg, &data);
    assert_eq!(a, b);
    assert_eq!(log, again);
    assert!(
        log[19].total < log[0].total,
        "{} vs {}",
        log[19].total,
        log[0].total
    );
    assert!(log.iter().all(|l| l.kl >= 0.0 && l.sdir > 0.0));
}

#[test]
fn without_modules_the_loss_is_the_clean_term() {
    let data = small_domain();
    let (_, log) = trained(&config(false, false), &data);
    for l in &log {
        assert_eq!(l.total, l.clean);
        assert_eq!((l.sdir, l.kl), (0.0, 0.0));
    }
}
