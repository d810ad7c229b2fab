use gradnorm_al::data::{gen_gaussian_mixture, gen_imbalanced, train_eval, write_idx, Dataset};
use gradnorm_al::engine::{run, transfer_train, ALConfig, ProbeToggles};
use gradnorm_al::experiment::{run_jobs, ExperimentConfig};
use gradnorm_al::model::{evaluate, Architecture, TrainConfig};
use gradnorm_al::selection::StrategyKind;
use proptest::prelude::*;

fn quick_train() -> TrainConfig {
    TrainConfig {
        epochs: 6,
        decay_epoch: 5,
        ..TrainConfig::default()
    }
}

fn mixture(seed: u64) -> (Dataset, Dataset) {
    let ds = gen_gaussian_mixture(4, 80, 3, 2.0, seed).unwrap();
    train_eval(&ds, 40, seed, true).unwrap()
}

#[test]
fn every_strategy_keeps_the_pools_consistent() {
    let (train, eval) = mixture(1);
    for kind in StrategyKind::ALL {
        let mut cfg = ALConfig::new(4, 12, kind, 1);
        cfg.train = quick_train();
        let out = run(&cfg, &Architecture::mlp(3, &[8], 4), &train, &eval).unwrap();
        assert_eq!(out.leaked_reads, 0, "{kind}");
        let mut seen = out.labeled.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), out.labeled.len(), "{kind}: duplicate annotation");
        assert_eq!(out.labeled.len(), 28 + 3 * 12);
        for w in out.reports.windows(2) {
            assert_eq!(w[1].budget, w[0].budget + 12);
            for i in &w[0].selected {
                assert!(out.labeled.contains(i));
            }
        }
        assert!(out.reports.last().unwrap().selected.is_empty());
    }
}

#[test]
fn same_seed_same_run() {
    let (train, eval) = mixture(2);
    let mut cfg = ALConfig::new(3, 10, StrategyKind::ExpectedGradnorm, 2);
    cfg.train = quick_train();
    cfg.probes = ProbeToggles::all();
    let arch = Architecture::logistic(3, 4);
    let a = run(&cfg, &arch, &train, &eval).unwrap();
    let b = run(&cfg, &arch, &train, &eval).unwrap();
    assert_eq!(a.reports, b.reports);
    assert_eq!(a.probes, b.probes);
    cfg.seed = 3;
    let c = run(&cfg, &arch, &train, &eval).unwrap();
    assert_ne!(a.labeled, c.labeled);
}

#[test]
fn transfer_to_the_selector_itself_reproduces_its_accuracy() {
    let (train, eval) = mixture(4);
    let mut cfg = ALConfig::new(3, 10, StrategyKind::EntropyGradnorm, 4);
    cfg.train = quick_train();
    let arch = Architecture::mlp(3, &[8], 4);
    let t = transfer_train(&arch, &arch, &cfg, &train, &eval).unwrap();
    let own = evaluate(&t.run.final_model, eval.features(), eval.labels()).unwrap().accuracy;
    assert_eq!(t.target_accuracy, own);
    assert_eq!(t.target_model, t.run.final_model);
}

#[test]
fn random_overlap_matches_the_hypergeometric_mean() {
    // E[|top-K ∩ random K|] = K² / |R_U|
    let mut total = 0.0;
    let mut expect = 0.0;
    let seeds = 40;
    for seed in 0..seeds {
        let (train, eval) = mixture(100 + seed);
        let mut cfg = ALConfig::new(2, 8, StrategyKind::Random, seed);
        cfg.train = quick_train();
        cfg.probes.overlap = true;
        let out = run(&cfg, &Architecture::logistic(3, 4), &train, &eval).unwrap();
        let row = out.probes.overlap[0];
        total += row.overlap as f64;
        expect += row.random_expectation;
    }
    let (mean, want) = (total / seeds as f64, expect / seeds as f64);
    // sd of one draw is below sqrt(0.8); 40 draws give a standard error < 0.15
    assert!((mean - want).abs() < 0.6, "mean {mean} vs {want}");
}

#[test]
fn imbalanced_data_reports_every_class() {
    let base = gen_gaussian_mixture(3, 100, 2, 3.0, 6).unwrap();
    let ds = gen_imbalanced(&base, &[1.0, 0.5, 0.2], 6).unwrap();
    assert_eq!(ds.class_counts(), vec![100, 50, 20]);
    let (train, eval) = train_eval(&ds, 40, 6, true).unwrap();
    let mut cfg = ALConfig::new(3, 10, StrategyKind::ExpectedGradnorm, 6);
    cfg.train = quick_train();
    let out = run(&cfg, &Architecture::logistic(2, 3), &train, &eval).unwrap();
    for r in &out.reports {
        assert_eq!(r.per_class_test_acc.len(), 3);
    }
}

#[test]
fn idx_images_drive_a_cnn_run() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, n: usize, seed: u64| {
        let ds = gen_gaussian_mixture(3, n, 256, 2.0, seed).unwrap();
        // map features into 0..=255 bytes
        let pixels: Vec<u8> = ds.features().iter().map(|v| (128.0 + 30.0 * v).clamp(0.0, 255.0) as u8).collect();
        let labels: Vec<u8> = ds.labels().iter().map(|&l| l as u8).collect();
        let (img, lab) = (dir.path().join(format!("{name}-images")), dir.path().join(format!("{name}-labels")));
        write_idx(&img, &lab, 16, 16, &pixels, &labels).unwrap();
    };
    write("train", 40, 1);
    write("eval", 10, 2);
    let cfg = format!(
        r#"{{
  "dataset": {{"kind": "idx", "train_images": "train-images", "train_labels": "train-labels",
               "eval_images": "eval-images", "eval_labels": "eval-labels"}},
  "model": {{"kind": "cnn"}},
  "al": {{"cycles": 2, "budget": 10, "strategies": ["entropy-gradnorm"],
         "train": {{"epochs": 2, "batch_size": 16, "learning_rate": 0.05, "lr_decay": 1.0, "decay_epoch": 2, "momentum": 0.9, "weight_decay": 0.0, "seed": 0}}}},
  "seeds": [0],
  "output_dir": "{}"
}}"#,
        dir.path().join("out").display()
    );
    let config = ExperimentConfig::from_json(&cfg).unwrap();
    let results = run_jobs(&config, dir.path(), &config.probes).unwrap();
    let reports = &results[0].output.reports;
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[1].budget, reports[0].budget + 10);
}

#[test]
fn csv_tables_drive_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_gaussian_mixture(2, 60, 2, 3.0, 8).unwrap();
    let mut text = String::from("a,b,kind\n");
    for i in 0..ds.len() {
        let r = ds.row(i);
        text += &format!("{},{},{}\n", r[0], r[1], ["cat", "dog"][ds.labels()[i]]);
    }
    std::fs::write(dir.path().join("t.csv"), text).unwrap();
    let cfg = r#"{
  "dataset": {"kind": "csv", "path": "t.csv", "label_column": "kind", "eval_count": 20},
  "model": {"kind": "logistic"},
  "al": {"cycles": 3, "budget": 8, "strategies": ["margin", "least-confidence"]},
  "seeds": [1, 2],
  "output_dir": "out"
}"#;
    let config = ExperimentConfig::from_json(cfg).unwrap();
    let results = run_jobs(&config, dir.path(), &config.probes).unwrap();
    assert_eq!(results.len(), 4);
    assert!(results.iter().all(|r| r.output.reports.len() == 3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn labeled_pool_grows_by_exactly_k(seed in 0u64..1000, k in 1usize..15, cycles in 1usize..5, kind in 0usize..7) {
        let (train, eval) = mixture(seed);
        let mut cfg = ALConfig::new(cycles, k, StrategyKind::ALL[kind], seed);
        cfg.train = TrainConfig { epochs: 2, decay_epoch: 2, ..TrainConfig::default() };
        let out = run(&cfg, &Architecture::logistic(3, 4), &train, &eval).unwrap();
        let initial = cfg.initial_count(train.len());
        prop_assert_eq!(out.labeled.len(), initial + k * (cycles - 1));
        for (c, r) in out.reports.iter().enumerate() {
            prop_assert_eq!(r.budget, initial + k * c);
            prop_assert_eq!(r.selected.len(), if c + 1 < cycles { k } else { 0 });
        }
        prop_assert_eq!(out.leaked_reads, 0);
    }
}

#[test]
fn cnn_fits_separable_bars() {
    // class 0 lights a row, class 1 a column
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..120 {
        let (class, at) = (i % 2, 2 + (i / 2) % 6);
        for r in 0..10 {
            for c in 0..10 {
                let on = if class == 0 { r == at } else { c == at };
                x.push(if on { 1.0 } else { 0.1 * ((r * 7 + c * 3 + i) % 5) as f64 / 5.0 });
            }
        }
        y.push(class);
    }
    let cfg = TrainConfig { epochs: 20, batch_size: 8, decay_epoch: 16, ..TrainConfig::default() };
    let model = gradnorm_al::model::TaskModel::new(Architecture::small_cnn(1, 10, 10, 2), 0).unwrap();
    let out = gradnorm_al::model::train(model, &x, &y, &cfg).unwrap();
    let acc = evaluate(&out.model, &x, &y).unwrap().accuracy;
    assert!(acc >= 0.95, "train accuracy {acc}");
}
