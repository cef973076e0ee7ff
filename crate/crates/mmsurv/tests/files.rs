use std::fs;
use std::path::{Path, PathBuf};

use mmsurv::checkpoint::Checkpoint;
use mmsurv::config::ExperimentConfig;
use mmsurv::dataset::Dataset;
use mmsurv::harness;
use mmsurv::Error;
use mmsurv_core::dataio::{generate_domain, DomainSpec};

fn spec(n: usize, pathways: usize) -> DomainSpec {
    DomainSpec {
        domain_id: "X".into(),
        n_samples: n,
        patches_per_sample: 3,
        pathways,
        signal_dim: 4,
        pathway_dim: 2,
        patch_signal_fraction: 0.5,
        domain_shift_offset: vec![0.25; 4],
        gene_noise_scale: 0.5,
        censor_fraction: 0.3,
        seed: 8,
        task_seed: 1,
    }
}

fn dataset(n: usize, pathways: usize) -> Dataset {
    Dataset::from_synthetic("X", generate_domain(&spec(n, pathways)).unwrap())
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn dataset_round_trip_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let original = dataset(12, 4);
    original.save(&a).unwrap();
    let loaded = Dataset::load(&a).unwrap();
    assert_eq!(loaded, original);
    loaded.save(&b).unwrap();
    assert_eq!(files(&a), files(&b));
}

#[test]
fn hundreds_of_pathways_load() {
    let tmp = tempfile::tempdir().unwrap();
    let d = dataset(3, 331);
    d.save(tmp.path()).unwrap();
    let loaded = Dataset::load(tmp.path()).unwrap();
    assert_eq!(loaded.pathways.len(), 331);
    assert_eq!(loaded.genes.len(), 662);
    assert_eq!(loaded.batch.pathways_per_sample(), 331);
    let membership = fs::read_to_string(tmp.path().join("membership.csv")).unwrap();
    assert_eq!(membership.lines().count(), 2 + 662);
}

#[test]
fn membership_with_reordered_gene_columns_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let d = dataset(5, 3);
    d.save(tmp.path()).unwrap();
    // Swap the first two gene columns in the expression table.
    let path = tmp.path().join("pathways.csv");
    let text = fs::read_to_string(&path).unwrap();
    let swapped: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                return l.to_string();
            }
            let mut f: Vec<&str> = l.split(',').collect();
            f.swap(1, 2);
            f.join(",")
        })
        .collect();
    fs::write(&path, swapped.join("\n") + "\n").unwrap();
    assert_eq!(Dataset::load(tmp.path()).unwrap().batch, d.batch);
}

fn drop_last_line(path: &Path) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn truncated_files_are_schema_errors_naming_the_file() {
    for name in [
        "labels.csv",
        "pathways.csv",
        "patches/s0002.csv",
        "membership.csv",
    ] {
        let tmp = tempfile::tempdir().unwrap();
        dataset(6, 2).save(tmp.path()).unwrap();
        drop_last_line(&tmp.path().join(name));
        match Dataset::load(tmp.path()) {
            Err(Error::Schema { file, .. }) => assert!(file.ends_with(name), "{file:?}"),
            other => panic!("{name}: {other:?}"),
        }
    }
}

#[test]
fn non_finite_values_are_data_errors_with_the_row() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(6, 2).save(tmp.path()).unwrap();
    let path = tmp.path().join("pathways.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // Header, column names, then data rows 0, 1, ...
    let mut f: Vec<String> = lines[5].split(',').map(str::to_string).collect();
    f[2] = "NaN".into();
    lines[5] = f.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    match Dataset::load(tmp.path()) {
        Err(Error::Data { file, row, .. }) => {
            assert!(file.ends_with("pathways.csv"));
            assert_eq!(row, 3);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_header_and_bad_schema_version() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(4, 2).save(tmp.path()).unwrap();
    let path = tmp.path().join("labels.csv");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("#schema=1", "#schema=2", 1)).unwrap();
    assert!(matches!(
        Dataset::load(tmp.path()),
        Err(Error::Schema { .. })
    ));
    fs::write(&path, text.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
    assert!(matches!(
        Dataset::load(tmp.path()),
        Err(Error::Schema { .. })
    ));
}

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::benchmark().with_seeds(vec![3]);
    for d in &mut cfg.domains {
        d.synthetic.as_mut().unwrap().n_samples = 60;
    }
    cfg.training.epochs = 2;
    cfg
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = tiny_config();
    let prep = harness::prepare(&cfg).unwrap();
    let (ckpt, _) = harness::train_seed(&cfg, &prep, 3, |_| {}).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.ckpt");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ckpt);
    for ((_, a), (_, b)) in back.params.named().iter().zip(ckpt.params.named()) {
        let bits =
            |t: &mmsurv_core::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    assert_eq!(back.to_text(), fs::read_to_string(&path).unwrap());
    assert_eq!(
        harness::evaluate(&back, &prep.targets[0]).unwrap().risks,
        harness::evaluate(&ckpt, &prep.targets[0]).unwrap().risks
    );
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let cfg = tiny_config();
    let prep = harness::prepare(&cfg).unwrap();
    let (ckpt, _) = harness::train_seed(&cfg, &prep, 3, |_| {}).unwrap();
    let text = ckpt.to_text();
    let truncated: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
    assert!(matches!(
        Checkpoint::from_text(&truncated),
        Err(Error::Checkpoint(_))
    ));
    let renamed = text.replacen("tensor head.w", "tensor head.v", 1);
    assert!(matches!(
        Checkpoint::from_text(&renamed),
        Err(Error::Checkpoint(_))
    ));
    let nan = text.replacen("\nbin_edges ", "\nbin_edges NaN ", 1);
    assert!(matches!(
        Checkpoint::from_text(&nan),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn config_toml_round_trip_preserves_the_hash() {
    let cfg = ExperimentConfig::benchmark();
    let text = cfg.to_toml_string();
    let back = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    assert_eq!(cfg.hash().len(), 64);
}

#[test]
fn disabled_modules_hash_like_unconfigured_ones() {
    let base = ExperimentConfig::benchmark();
    let mut off = base.clone();
    off.sdir.enabled = false;
    off.cade.enabled = false;
    let mut never = off.clone();
    never.sdir = Default::default();
    never.cade = Default::default();
    assert_ne!(off, never);
    assert_eq!(off.hash(), never.hash());
    assert_eq!(off.train_config(0), never.train_config(0));
    assert_ne!(off.hash(), base.hash());

    // Defaults filled in explicitly hash the same as left implicit.
    let mut implicit = base.clone();
    implicit.cade.gamma = None;
    assert_eq!(implicit.hash(), base.hash());

    let mut moved = base.clone();
    moved.output_dir = Some("elsewhere".into());
    assert_eq!(moved.hash(), base.hash());
}

#[test]
fn invalid_configs_are_config_errors() {
    let base = ExperimentConfig::benchmark();
    let mut c = base.clone();
    c.targets.clear();
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = base.clone();
    c.targets = vec!["A".into()];
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = base.clone();
    c.targets = vec!["Z".into()];
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = base.clone();
    c.sdir.alpha = Some(1.0);
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = base.clone();
    c.cade.gamma = Some(0.0);
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = base;
    c.seeds.clear();
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let text = ExperimentConfig::benchmark().to_toml_string() + "\nsurprise = 1\n";
    assert!(matches!(
        ExperimentConfig::from_toml_str(&text),
        Err(Error::Config(_))
    ));
}

#[test]
fn relative_dataset_paths_resolve_next_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(10, 2).save(&tmp.path().join("data/X")).unwrap();
    let mut cfg = ExperimentConfig::benchmark();
    cfg.domains[1].synthetic = None;
    cfg.domains[1].path = Some("data/X".into());
    let path = tmp.path().join("exp.toml");
    fs::write(&path, cfg.to_toml_string()).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    let d = harness::load_domain(&loaded, "B").unwrap();
    assert_eq!(d.batch.len(), 10);
}

#[test]
fn width_mismatches_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = spec(10, 2);
    s.signal_dim = 3;
    s.domain_shift_offset = vec![0.0; 3];
    Dataset::from_synthetic("B", generate_domain(&s).unwrap())
        .save(tmp.path())
        .unwrap();
    let mut cfg = ExperimentConfig::benchmark();
    cfg.domains[1].synthetic = None;
    cfg.domains[1].path = Some(tmp.path().to_path_buf());
    assert!(matches!(harness::prepare(&cfg), Err(Error::Config(_))));
}

#[test]
fn exit_codes_differ_by_category() {
    let errors = [
        Error::Config("x".into()),
        Error::Schema {
            file: "f".into(),
            field: "g".into(),
        },
        Error::Data {
            file: "f".into(),
            row: 0,
            message: "m".into(),
        },
        Error::Checkpoint("c".into()),
        Error::Io {
            path: "p".into(),
            source: std::io::Error::other("e"),
        },
        Error::Model(mmsurv_core::Error::Numeric("n".into())),
    ];
    let mut codes: Vec<u8> = errors.iter().map(Error::exit_code).collect();
    assert!(codes.iter().all(|c| *c >= 2));
    codes.sort();
    codes.dedup();
    assert_eq!(codes.len(), errors.len());
}

#[test]
fn shipped_benchmark_config_matches_the_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.hash(), ExperimentConfig::benchmark().hash());
}
