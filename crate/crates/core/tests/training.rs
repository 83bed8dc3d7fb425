use std::fs;
use std::io::Write;
use std::path::Path;

use distreg::config::load_experiment;
use distreg::data::{generate, DataKind};
use distreg::losses::{LossFamily, LossSpec, Variant};
use distreg::models::ModelSpec;
use distreg::trainer::{head_for, median, prepare_data, train, DataSpec, RunConfig};
use rayon::prelude::*;

fn run(kind: DataKind, n: usize, loss: LossSpec, seed: u64) -> RunConfig {
    let model = ModelSpec::desk(2, head_for(&loss));
    RunConfig::new(DataSpec::generated(kind, n), model, loss, seed)
}

fn test_rmse(c: &RunConfig) -> f64 {
    train(c).unwrap().report.metrics.unwrap().rmse
}

#[test]
fn mse_fits_linear_target_to_noise_floor() {
    let c = run(DataKind::UnimodalLinear, 2000, LossSpec::new(LossFamily::Mse), 1);
    let rmse = test_rmse(&c);
    assert!(rmse <= 1.2 * DataKind::UnimodalLinear.default_noise_sd(), "{rmse}");
}

#[test]
fn composite_with_zero_weights_tracks_mse() {
    let pairs: Vec<(f64, f64)> = (1..=5u64)
        .into_par_iter()
        .map(|s| {
            let mse = test_rmse(&run(DataKind::UnimodalLinear, 1000, LossSpec::new(LossFamily::Mse), s));
            let zero = LossSpec::composite(LossFamily::CompositeWasserstein, 0.0, 0.0);
            (mse, test_rmse(&run(DataKind::UnimodalLinear, 1000, zero, s)))
        })
        .collect();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (a, b) = (median(&a).unwrap(), median(&b).unwrap());
    assert!(b <= 1.25 * a && a <= 1.25 * b, "mse {a} composite {b}");
}

#[test]
fn training_loss_decreases_early() {
    let losses = [
        LossSpec::new(LossFamily::Mse),
        LossSpec::variant(LossFamily::CompositeWasserstein, Variant::Default, 1.0),
        LossSpec::variant(LossFamily::CompositeCramer, Variant::Range, 0.5),
        LossSpec::new(LossFamily::GaussianNll),
        LossSpec::new(LossFamily::Pinball),
    ];
    for loss in losses {
        let (first, fifth): (Vec<f64>, Vec<f64>) = (1..=5u64)
            .into_par_iter()
            .map(|s| {
                let mut c = run(DataKind::TwoPath, 1000, loss.clone(), s);
                c.epochs = 5;
                let e = train(&c).unwrap().epochs;
                (e[0].train_loss, e[4].train_loss)
            })
            .unzip();
        let (a, b) = (median(&first).unwrap(), median(&fifth).unwrap());
        assert!(b < a, "{}: epoch 1 {a} epoch 5 {b}", loss.label());
    }
}

#[test]
fn evaluation_leaves_weights_untouched() {
    let mut c = run(DataKind::TwoPath, 400, LossSpec::new(LossFamily::Mse), 3);
    c.epochs = 2;
    c.model.batch_norm = true;
    let out = train(&c).unwrap();
    let before = out.model.checkpoint_hash();
    assert_eq!(before, out.report.checkpoint_hash);
    let (ds, _) = prepare_data(&c).unwrap();
    let _ = out.model.predict(&ds.features).unwrap();
    assert_eq!(out.model.checkpoint_hash(), before);
}

fn write_embedding_csv(path: &Path, rows: usize, dim: usize) {
    let mut f = fs::File::create(path).unwrap();
    let header: Vec<String> = (0..dim).map(|j| format!("f{j}")).chain(["y".to_string()]).collect();
    writeln!(f, "{}", header.join(",")).unwrap();
    let raw = generate(DataKind::UnimodalLinear, rows, None, 5).unwrap();
    for i in 0..rows {
        let mut cells: Vec<String> = (0..dim)
            .map(|j| format!("{}", raw.features[[i, j % 2]] * ((j % 7) as f64 + 1.0) + j as f64 * 1e-3))
            .collect();
        cells.push(format!("{}", (raw.targets[i] / 10.0).abs().min(1.0)));
        writeln!(f, "{}", cells.join(",")).unwrap();
    }
}

#[test]
fn embedding_csv_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("embeddings_csv.toml");
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/embeddings_csv.toml");
    let text = fs::read_to_string(shipped).unwrap().replace("seed = 1", "seed = 1\nepochs = 2");
    fs::write(&cfg, text).unwrap();
    write_embedding_csv(&dir.path().join("embeddings.csv"), 120, 1280);

    let exp = load_experiment(&cfg).unwrap();
    assert_eq!(exp.run.model.input_dim, 1280);
    let (ds, _) = prepare_data(&exp.run).unwrap();
    assert_eq!((ds.len(), ds.dim()), (120, 1280));
    let report = train(&exp.run).unwrap().report;
    assert!(report.metrics.is_some());
}

#[test]
fn csv_backed_run_matches_generated_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut generated = run(DataKind::TwoPath, 500, LossSpec::new(LossFamily::Mse), 8);
    generated.epochs = 3;
    let data = generated.data.load(generated.seed).unwrap();
    let path = dir.path().join("two_path.csv");
    distreg::data::write_csv(&data, &path).unwrap();

    let mut from_csv = generated.clone();
    from_csv.data = DataSpec {
        kind: None,
        csv: Some(path),
        ..generated.data.clone()
    };
    let a = train(&generated).unwrap().report.metrics.unwrap();
    let b = train(&from_csv).unwrap().report.metrics.unwrap();
    assert_eq!(a, b);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        seen += 1;
        match load_experiment(&path) {
            Ok(exp) => exp.run.validate().unwrap(),
            // The embedding config points at a user-supplied file.
            Err(e) => assert!(path.ends_with("embeddings_csv.toml"), "{}: {e}", path.display()),
        }
    }
    assert!(seen >= 6);
}
