mod common;

use std::path::Path;

use proptest::prelude::*;
use speckle_rf::bench::{
    self, dataset, powerlaw, report, Dataset, ExactOptions, ExperimentOutcome, FidelityPath,
    GammaChoice, LinearOptions, OutputFormat, Split, SweepConfig, SweepRecord, SweepResult,
};
use speckle_rf::{featfile, Error, Mat};

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for w in [0x0000_0803u32, n, rows, cols] {
        b.extend_from_slice(&w.to_be_bytes());
    }
    b.extend_from_slice(pixels);
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for w in [0x0000_0801u32, labels.len() as u32] {
        b.extend_from_slice(&w.to_be_bytes());
    }
    b.extend_from_slice(labels);
    b
}

/// `n` 4×4 images whose pixels encode their class.
fn toy(n: usize) -> Dataset {
    let labels: Vec<u32> = (0..n).map(|i| (i % 10) as u32 + 1).collect();
    let px = labels
        .iter()
        .enumerate()
        .flat_map(|(i, &l)| (0..16).map(move |k| ((l as usize * 23 + k * 7 + i) % 256) as u8))
        .collect();
    Dataset::new(px, labels, 4, 4, Split::Unspecified).unwrap()
}

#[test]
fn idx_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("i"), dir.path().join("l"));
    std::fs::write(&img, idx_images(3, 2, 2, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 255])).unwrap();
    std::fs::write(&lab, idx_labels(&[0, 9, 4])).unwrap();
    let ds = bench::load_idx(&img, &lab).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.labels(), &[1, 10, 5]);
    assert_eq!(ds.image(2), &[8, 9, 10, 255]);
    assert_eq!(ds.normalized()[(2, 3)], 1.0);

    let p = Path::new("x");
    let mut bad = idx_images(3, 2, 2, &[0; 12]);
    bad[3] = 0x01;
    assert!(matches!(dataset::parse_idx_images(&bad, p), Err(Error::Idx { offset: 0, .. })));
    let short = idx_images(3, 2, 2, &[0; 11]);
    assert!(matches!(dataset::parse_idx_images(&short, p), Err(Error::Idx { offset: 27, .. })));
    assert!(matches!(dataset::parse_idx_images(&[0, 0, 8], p), Err(Error::Idx { .. })));
    assert!(matches!(dataset::parse_idx_labels(&idx_labels(&[3, 10]), p), Err(Error::Idx { offset: 9, .. })));

    std::fs::write(&lab, idx_labels(&[0, 1])).unwrap();
    assert!(bench::load_idx(&img, &lab).is_err());
    assert!(matches!(bench::load_idx(&dir.path().join("none"), &lab), Err(Error::Io { .. })));
}

#[test]
fn dataset_validation() {
    assert!(Dataset::new(vec![0; 4], vec![0], 2, 2, Split::Train).is_err());
    assert!(Dataset::new(vec![0; 4], vec![11], 2, 2, Split::Train).is_err());
    assert!(Dataset::new(vec![0; 3], vec![1], 2, 2, Split::Train).is_err());
    let ds = toy(30);
    assert_eq!(ds.class_counts(), [3; 10]);
    assert_eq!(ds.head(5).labels(), &[1, 2, 3, 4, 5]);
    assert_eq!(ds.select(&[29, 0]).labels(), &[10, 1]);
    assert_eq!(ds.sha256(), toy(30).sha256());
    assert_ne!(ds.sha256(), toy(31).sha256());
}

#[test]
fn subsample_is_stratified_and_seeded() {
    let ds = toy(1000);
    let s = bench::subsample(&ds, 95, 3).unwrap();
    let counts = s.class_counts();
    assert_eq!(counts.iter().sum::<usize>(), 95);
    assert!(counts.iter().all(|&c| c == 9 || c == 10));
    let a = bench::subsample_indices(ds.labels(), 95, 3).unwrap();
    assert_eq!(a, bench::subsample_indices(ds.labels(), 95, 3).unwrap());
    assert_ne!(a, bench::subsample_indices(ds.labels(), 95, 4).unwrap());
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert!(bench::subsample(&ds, 1001, 0).is_err());
    // Small classes hand their shortfall to the others.
    let mut labels = vec![1u32; 3];
    labels.extend(std::iter::repeat_n(2u32, 50));
    let picked = bench::subsample_indices(&labels, 20, 0).unwrap();
    assert_eq!(picked.iter().filter(|&&i| i < 3).count(), 3);
    assert_eq!(picked.len(), 20);
}

#[test]
fn validation_split_is_a_stratified_partition() {
    let ds = toy(500);
    let (fit, val) = bench::validation_split(ds.labels(), 0.1, 7);
    assert_eq!(val.len(), 50);
    assert_eq!(fit.len() + val.len(), 500);
    let mut all: Vec<usize> = fit.iter().chain(&val).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..500).collect::<Vec<_>>());
    let val_counts = ds.select(&val).class_counts();
    assert_eq!(val_counts, [5; 10]);
}

#[test]
fn power_law_recovers_exact_data() {
    let pts: Vec<(usize, f64)> = [64, 128, 256, 512, 1024]
        .iter()
        .map(|&n| (n, 0.02 + 3.0 * (n as f64).powf(-0.7)))
        .collect();
    let fit = bench::fit_power_law(&pts, 0.02).unwrap();
    assert!((fit.exponent + 0.7).abs() < 1e-10);
    assert!((fit.amplitude - 3.0).abs() < 1e-9);
    assert!(fit.residual < 1e-12);
    assert!(fit.fixed_residual > 0.0);
    assert!(fit.excluded.is_empty());

    let mut with_low = pts.clone();
    with_low.push((2048, 0.019));
    let fit = bench::fit_power_law(&with_low, 0.02).unwrap();
    assert_eq!(fit.excluded, vec![2048]);
    assert!(bench::fit_power_law(&pts[..3], 0.02).is_err());
    assert!(bench::fit_power_law(&pts, 1.0).is_err());
    assert_eq!(powerlaw::MIN_POINTS, 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_law_fit_is_exact_for_any_law(c in 0.01f64..100.0, b in -2.0f64..-0.05, e0 in 0.0f64..0.1) {
        let pts: Vec<(usize, f64)> = [10, 40, 160, 640, 2560].iter().map(|&n| (n, e0 + c * (n as f64).powf(b))).collect();
        let fit = bench::fit_power_law(&pts, e0).unwrap();
        prop_assert!((fit.exponent - b).abs() < 1e-8);
        prop_assert!((fit.amplitude / c - 1.0).abs() < 1e-7);
    }

    #[test]
    fn csv_round_trip(records in prop::collection::vec(
        (1usize..20000, 0u64..10, 0.0f64..1.0, prop::option::of(0.0f64..50.0), 0.0f64..1e6), 0..20)
    ) {
        let records: Vec<SweepRecord> = records
            .into_iter()
            .map(|(n, seed, error, gram_rms, wall_ms)| SweepRecord { n_features: n, seed, error, gram_rms, wall_ms })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let bytes = report::records_to_csv(&records, &path).unwrap();
        std::fs::write(&path, &bytes).unwrap();
        prop_assert_eq!(bench::read_csv(&path).unwrap(), records.clone());
        prop_assert_eq!(report::records_to_csv(&records, &path).unwrap(), bytes);
    }

    #[test]
    fn featfile_round_trip(rows in 0usize..9, cols in 0usize..9, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let x = Mat::from_fn(rows, cols, |_, _| rng.random_range(0.0f32..1e4) as f64);
        let bytes = featfile::encode(x.as_ref()).unwrap();
        prop_assert_eq!(bytes.len(), featfile::HEADER_LEN + 4 * rows * cols);
        let back = featfile::decode(&bytes, Path::new("m")).unwrap();
        prop_assert!(back == x);
    }
}

#[test]
fn featfile_files_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.spkf");
    let x = Mat::from_fn(3, 2, |i, j| (i * 2 + j) as f64 * 0.25);
    let meta = serde_json::json!({"seed": 4});
    featfile::write(&path, x.as_ref(), &meta).unwrap();
    assert!(featfile::read(&path).unwrap() == x);
    assert_eq!(featfile::read_sidecar(&path).unwrap(), meta);
    let bytes = std::fs::read(&path).unwrap();
    let p = Path::new("f");
    assert!(featfile::decode(&bytes[..10], p).is_err());
    assert!(featfile::decode(&bytes[..bytes.len() - 1], p).is_err());
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(matches!(featfile::decode(&wrong, p), Err(Error::FeatureFile { .. })));
    let mut version = bytes;
    version[4] = 9;
    assert!(featfile::decode(&version, p).is_err());
}

fn sample_sweep() -> SweepResult {
    let outcome = ExperimentOutcome {
        error: 0.125,
        selection: bench::GammaSelection {
            gamma: 1.0,
            validation: vec![],
        },
        n_train: 10,
        n_test: 8,
        wall_ms: 3.5,
        stages: vec![],
    };
    SweepResult::single("kernel-exact", &outcome, 4, &toy(10), &toy(8), &GammaChoice::Fixed(1.0))
}

#[test]
fn results_files() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = sample_sweep();
    let csv = dir.path().join("sub/r.csv");
    bench::emit_results(&sweep, OutputFormat::Csv, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "N,seed,error,gram_rms,wall_ms");
    assert_eq!(text.lines().count(), 2);
    assert_eq!(bench::read_csv(&csv).unwrap(), sweep.records);

    let json = dir.path().join("r.json");
    bench::emit_results(&sweep, OutputFormat::Json, &json).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["records"][0]["N"], 0);
    assert_eq!(v["partial"], false);
    assert!(v["metadata"].is_object());

    let mf = bench::manifest_path(&csv);
    assert!(mf.to_string_lossy().ends_with("r.csv.manifest.json"));
    let manifest = bench::RunManifest::new("kernel-exact", serde_json::json!({"n": 1}));
    bench::write_manifest(&mf, &manifest).unwrap();
    let back: bench::RunManifest = serde_json::from_str(&std::fs::read_to_string(&mf).unwrap()).unwrap();
    assert_eq!(back, manifest);

    std::fs::write(&csv, "a,b\n1,2\n").unwrap();
    assert!(bench::read_csv(&csv).is_err());
    assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
    assert!("xml".parse::<OutputFormat>().is_err());
}

#[test]
fn experiment_argument_checks() {
    let ds = toy(100);
    let mut opts = ExactOptions {
        memory_budget: 1000,
        ..ExactOptions::default()
    };
    assert!(matches!(
        bench::run_exact_kernel(&ds, &ds, &opts),
        Err(Error::MemoryBudget { budget: 1000, .. })
    ));
    opts.memory_budget = bench::exact_kernel_bytes(100);
    assert!(bench::run_exact_kernel(&ds, &ds, &opts).is_ok());
    // Four images per class leave nothing to validate on.
    assert!(bench::run_exact_kernel(&toy(40), &ds, &ExactOptions::default()).is_err());
    opts.gamma = GammaChoice::Grid(vec![]);
    assert!(bench::run_exact_kernel(&ds, &ds, &opts).is_err());
    assert_eq!(bench::exact_kernel_bytes(60_000), 16 * 60_000u64.pow(2) + 8 * 1024 * 60_000);

    let other = Dataset::new(vec![0; 9], vec![1], 3, 3, Split::Test).unwrap();
    assert!(bench::run_linear_baseline(&ds, &other, &LinearOptions::default()).is_err());

    let mut cfg = SweepConfig::new(vec![], vec![0], FidelityPath::Ideal);
    assert!(cfg.validate().is_err());
    cfg.n_list = vec![8, 4, 8];
    assert_eq!(cfg.dims().unwrap(), vec![4, 8]);
    cfg.seeds.clear();
    assert!(cfg.validate().is_err());
    let cfg = SweepConfig::new(vec![10_001], vec![0], FidelityPath::Device);
    assert!(cfg.validate().is_err());
    assert_eq!("device".parse::<FidelityPath>().unwrap(), FidelityPath::Device);
}

#[test]
fn gamma_choice_rules() {
    assert!(GammaChoice::Fixed(0.0).validate().is_err());
    assert!(GammaChoice::Grid(vec![1.0, -1.0]).validate().is_err());
    assert!(GammaChoice::default_grid().validate().is_ok());
    assert_eq!(bench::DEFAULT_GAMMA_GRID.len(), 6);
    assert_eq!(bench::VALIDATION_FRACTION, 0.1);
}

#[test]
fn small_sweep_records_every_point() {
    let train = toy(120);
    let test = toy(40);
    let mut cfg = SweepConfig::new(vec![8, 32], vec![0, 1], FidelityPath::Ideal);
    cfg.gram_probe = 20;
    let res = bench::run_rf_sweep(&train, &test, &cfg, None).unwrap();
    assert_eq!(res.records.len(), 4);
    assert!(!res.partial);
    let keys: Vec<(usize, u64)> = res.records.iter().map(|r| (r.n_features, r.seed)).collect();
    assert_eq!(keys, vec![(8, 0), (8, 1), (32, 0), (32, 1)]);
    assert!(res.records.iter().all(|r| r.gram_rms.is_some() && (0.0..=1.0).contains(&r.error)));
    let again = bench::run_rf_sweep(&train, &test, &cfg, None).unwrap();
    let errs = |r: &SweepResult| r.records.iter().map(|x| (x.error, x.gram_rms)).collect::<Vec<_>>();
    assert_eq!(errs(&res), errs(&again));
    assert_eq!(res.summary().len(), 2);

    let cancel = std::sync::atomic::AtomicBool::new(true);
    let partial = bench::run_rf_sweep(&train, &test, &cfg, Some(&cancel)).unwrap();
    assert!(partial.partial);
    assert!(partial.records.is_empty());
}
