use std::fs;
use std::path::Path;

use relulab::data::{
    censor, encode_cifar_record, encode_idx_images, encode_idx_labels, planted_synthetic,
    IdxImages, PlantedSpec,
};
use relulab::loss::zero_one_error;
use relulab::model::NetParams;
use relulab::optim::{train, StoppingRule, TrainConfig};
use relulab::sweep::{emit_csv, read_csv, run_sweep, SweepConfig, Variant, CSV_SCHEMA_LINE};
use relulab::{Error, Rng};

fn small_sweep(variants: &str) -> SweepConfig {
    SweepConfig::from_json(&format!(
        r#"{{
            "dataset": {{"kind": "planted", "d": 5, "h0": 2, "k": 3, "n_train": 80, "n_validation": 40, "n_test": 80}},
            "h_grid": [2, 6],
            "seeds": [0, 1],
            "variants": {variants},
            "lambda_grid": [1e-4, 1e-2],
            "sgd": {{"batch_size": 20}},
            "stop": {{"max_epochs": 25}}
        }}"#
    ))
    .unwrap()
}

#[test]
fn censored_labels_are_realized_by_the_teacher() {
    let mut rng = Rng::new(11);
    let spec = PlantedSpec {
        d: 6,
        h0: 3,
        k: 4,
        n: 300,
        margin_scale: 0.0,
    };
    let (data, _) = planted_synthetic(&spec, &mut rng).unwrap();
    let cfg = TrainConfig {
        stop: StoppingRule {
            max_epochs: 20,
            ..StoppingRule::default()
        },
        ..TrainConfig::default()
    };
    let c = censor(&[&data], 2, &cfg, 0.1, &mut rng).unwrap();
    assert_eq!(zero_one_error(&c.teacher, &c.datasets[0]).unwrap(), 0.0);
    assert_eq!(c.teacher.hidden(), 2);
    let changed = data
        .labels()
        .iter()
        .zip(c.datasets[0].labels())
        .filter(|(a, b)| a != b)
        .count();
    assert_eq!(changed, c.disagreements);
}

#[test]
fn training_is_reproducible_per_seed() {
    let spec = PlantedSpec {
        d: 4,
        h0: 2,
        k: 3,
        n: 120,
        margin_scale: 0.0,
    };
    let (data, _) = planted_synthetic(&spec, &mut Rng::new(5)).unwrap();
    let cfg = TrainConfig {
        stop: StoppingRule {
            max_epochs: 10,
            ..StoppingRule::default()
        },
        ..TrainConfig::default()
    };
    let cfg = TrainConfig {
        sgd: relulab::optim::SgdConfig {
            batch_size: 30,
            ..cfg.sgd
        },
        ..cfg
    };
    let run = |seed| {
        let mut rng = Rng::new(seed);
        let init = NetParams::init(4, 5, 3, 0.1, &mut rng).unwrap();
        train(init, &data, None, &cfg, &mut rng).unwrap()
    };
    let (a, b) = (run(3), run(3));
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
    assert_ne!(run(4).params, a.params);
}

#[test]
fn sweep_covers_every_cell_and_round_trips_through_csv() {
    let cfg = small_sweep(r#"["censored_noisy", "original", "weight_decay", "censored"]"#);
    let out = run_sweep(&cfg, Path::new("unused"), &Rng::new(1), Some(2)).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.records.len(), 4 * 2 * 2);
    let variants: Vec<Variant> = out.records.iter().map(|r| r.variant).collect();
    let mut sorted = variants.clone();
    sorted.sort();
    assert_eq!(variants, sorted);
    for r in &out.records {
        if r.variant == Variant::WeightDecay {
            assert!(cfg.lambda_grid.contains(&r.lambda));
        } else {
            assert_eq!(r.lambda, 0.0);
        }
        assert!(r.validation_error_best <= 1.0 && r.test_error_final <= 1.0);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    emit_csv(&out.records, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_SCHEMA_LINE));
    let back = read_csv(&path).unwrap();
    assert_eq!(back.len(), out.records.len());
    for (a, b) in back.iter().zip(&out.records) {
        assert_eq!(
            (a.variant, a.seed, a.hidden, a.epochs_run),
            (b.variant, b.seed, b.hidden, b.epochs_run)
        );
    }
}

#[test]
fn sweep_output_does_not_depend_on_worker_count() {
    let cfg = small_sweep(r#"["original", "censored"]"#);
    let one = run_sweep(&cfg, Path::new("unused"), &Rng::new(9), Some(1)).unwrap();
    let four = run_sweep(&cfg, Path::new("unused"), &Rng::new(9), Some(4)).unwrap();
    assert_eq!(one.records, four.records);
}

fn write_mnist(dir: &Path, prefix: &str, n: usize, rng: &mut Rng) {
    let pixels: Vec<u8> = (0..n * 16).map(|_| rng.below(256) as u8).collect();
    let images = IdxImages {
        count: n,
        rows: 4,
        cols: 4,
        pixels,
    };
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    fs::write(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        encode_idx_images(&images),
    )
    .unwrap();
    fs::write(
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
        encode_idx_labels(&labels),
    )
    .unwrap();
}

#[test]
fn sweep_reads_mnist_files_from_the_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(2);
    write_mnist(dir.path(), "train", 60, &mut rng);
    write_mnist(dir.path(), "t10k", 30, &mut rng);
    let cfg = SweepConfig::from_json(
        r#"{"dataset": {"kind": "mnist", "n_train": 40, "n_validation": 20, "downsample": 2},
            "h_grid": [3], "seeds": [0], "sgd": {"batch_size": 10}, "stop": {"max_epochs": 3}}"#,
    )
    .unwrap();
    let out = run_sweep(&cfg, dir.path(), &Rng::new(0), Some(1)).unwrap();
    assert_eq!(out.records.len(), 1);
}

#[test]
fn sweep_reads_cifar_batches_from_the_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let plane = vec![128u8; 1024];
    for name in [
        "data_batch_1",
        "data_batch_2",
        "data_batch_3",
        "data_batch_4",
        "data_batch_5",
        "test_batch",
    ] {
        let mut bytes = Vec::new();
        for i in 0..6u8 {
            bytes.extend(encode_cifar_record(i % 10, &plane, &plane, &plane));
        }
        fs::write(dir.path().join(format!("{name}.bin")), bytes).unwrap();
    }
    let cfg = SweepConfig::from_json(
        r#"{"dataset": {"kind": "cifar10", "n_train": 20, "n_validation": 5, "n_test": 6, "downsample": 4},
            "h_grid": [2], "seeds": [0], "sgd": {"batch_size": 5}, "stop": {"max_epochs": 2}}"#,
    )
    .unwrap();
    let out = run_sweep(&cfg, dir.path(), &Rng::new(0), Some(1)).unwrap();
    assert_eq!(out.records.len(), 1);
}

#[test]
fn missing_dataset_names_the_file_and_the_fix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig::from_json(
        r#"{"dataset": {"kind": "mnist", "n_train": 10, "n_validation": 10}, "h_grid": [2], "seeds": [0]}"#,
    )
    .unwrap();
    match run_sweep(&cfg, dir.path(), &Rng::new(0), Some(1)) {
        Err(e @ Error::MissingDataset { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("train-images-idx3-ubyte"), "{msg}");
            assert!(msg.contains("fetch_datasets.sh"), "{msg}");
        }
        other => panic!("expected a missing-dataset error, got {other:?}"),
    }
}
