use mmsurv_core::dataio::{generate_domain, sample_patches, DomainSpec, SyntheticDomain};
use mmsurv_core::rng;

fn spec(offset: f64, seed: u64) -> DomainSpec {
    DomainSpec {
        domain_id: "A".into(),
        n_samples: 500,
        patches_per_sample: 8,
        pathways: 4,
        signal_dim: 6,
        pathway_dim: 5,
        patch_signal_fraction: 0.5,
        domain_shift_offset: vec![offset; 6],
        gene_noise_scale: 1.0,
        censor_fraction: 0.3,
        seed,
        task_seed: 3,
    }
}

/// Least squares `y ≈ X·β` by the normal equations with Gaussian
/// elimination; returns R².
fn r_squared(x: &[Vec<f64>], y: &[f64]) -> f64 {
    let k = x[0].len() + 1;
    let row = |i: usize| -> Vec<f64> {
        let mut v = vec![1.0];
        v.extend_from_slice(&x[i]);
        v
    };
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..y.len() {
        let xi = row(i);
        for p in 0..k {
            for q in 0..k {
                a[p][q] += xi[p] * xi[q];
            }
            a[p][k] += xi[p] * y[i];
        }
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for i in 0..y.len() {
        let fit: f64 = row(i).iter().zip(&beta).map(|(p, b)| p * b).sum();
        ss_res += (y[i] - fit).powi(2);
        ss_tot += (y[i] - mean).powi(2);
    }
    1.0 - ss_res / ss_tot
}

fn pooled_patches(d: &SyntheticDomain) -> Vec<Vec<f64>> {
    let b = &d.batch;
    let (p, f) = (b.patches_per_sample(), b.patch_dim());
    (0..b.len())
        .map(|s| {
            let x = b.sample_patches(s);
            (0..f)
                .map(|c| (0..p).map(|k| x[k * f + c]).sum::<f64>() / p as f64)
                .collect()
        })
        .collect()
}

#[test]
fn latent_risk_is_linearly_recoverable_from_pooled_features() {
    let mut s = spec(0.0, 4);
    s.gene_noise_scale = 0.0;
    s.patch_signal_fraction = 1.0;
    let d = generate_domain(&s).unwrap();
    let img = pooled_patches(&d);
    assert!(r_squared(&img, &d.latent_risk) > 0.99);

    let b = &d.batch;
    let genes: Vec<Vec<f64>> = (0..b.len())
        .map(|i| b.sample_pathways(i).to_vec())
        .collect();
    assert!(r_squared(&genes, &d.latent_risk) > 0.99);
}

#[test]
fn offset_shifts_only_the_patch_means() {
    let a = generate_domain(&spec(0.0, 4)).unwrap();
    let b = generate_domain(&spec(1.5, 4)).unwrap();
    // Same seed: identical labels, risks and pathways.
    assert_eq!(a.batch.labels(), b.batch.labels());
    assert_eq!(a.latent_risk, b.latent_risk);
    assert_eq!(a.batch.pathways(), b.batch.pathways());
    let mean = |d: &SyntheticDomain| {
        let x = d.batch.patches().data();
        x.iter().sum::<f64>() / x.len() as f64
    };
    let n = (a.batch.len() * a.batch.patches_per_sample()) as f64;
    let gap = mean(&b) - mean(&a);
    assert!((gap - 1.5).abs() <= 5.0 / n.sqrt(), "{gap}");
}

#[test]
fn independent_domains_share_the_label_distribution() {
    let a = generate_domain(&spec(0.0, 4)).unwrap();
    let b = generate_domain(&spec(1.0, 5)).unwrap();
    let rate = |d: &SyntheticDomain| {
        d.batch.labels().iter().filter(|r| r.event).count() as f64 / d.batch.len() as f64
    };
    // Binomial standard error of the difference is about 0.03.
    assert!((rate(&a) - rate(&b)).abs() < 0.1);
    let median = |d: &SyntheticDomain| {
        let mut t = d.event_times.clone();
        t.sort_by(f64::total_cmp);
        t[t.len() / 2]
    };
    let (ma, mb) = (median(&a), median(&b));
    assert!((ma / mb).ln().abs() < 0.3, "{ma} vs {mb}");
}

#[test]
fn signal_patches_follow_the_fraction() {
    let d = generate_domain(&spec(0.0, 6)).unwrap();
    assert!(d.signal_patches.iter().all(|s| s.len() == 4));
    assert!(d
        .signal_patches
        .iter()
        .all(|s| s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|&i| i < 8)));
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(
        generate_domain(&spec(0.5, 9)).unwrap(),
        generate_domain(&spec(0.5, 9)).unwrap()
    );
    assert_ne!(
        generate_domain(&spec(0.5, 9)).unwrap().latent_risk,
        generate_domain(&spec(0.5, 10)).unwrap().latent_risk
    );
}

#[test]
fn patch_subsets_are_sorted_and_distinct() {
    let mut r = rng::stream(0, 500);
    for _ in 0..50 {
        let idx = sample_patches(20, 7, &mut r).unwrap();
        assert_eq!(idx.len(), 7);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }
    assert_eq!(
        sample_patches(5, 4096, &mut r).unwrap(),
        vec![0, 1, 2, 3, 4]
    );
    assert!(sample_patches(5, 0, &mut r).is_err());
}
