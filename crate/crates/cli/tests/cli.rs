use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lanecast_cli::{
    cmd_evaluate, cmd_sweep, cmd_train, exit_code, EvaluateArgs, RunConfig, Split, SweepArgs, TrainArgs,
};
use lanecast_core::data::{build_samples, read_records, split_dataset, write_records, CorridorShape, LoopRecord, NormalizationParams};
use lanecast_core::experiment::SweepAxis;
use lanecast_core::model::{load_bundle, save_bundle, ArchitectureConfig, LaneCnn, ModelParams};
use lanecast_core::train::{mean_loss, TrainConfig};
use tempfile::TempDir;

fn lanecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanecast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig {
        shape: CorridorShape::new(4, 5, 2).unwrap(),
        ..Default::default()
    };
    cfg.model.filters_per_layer = [4, 4, 4];
    cfg.model.fc_hidden = 16;
    cfg.train = TrainConfig {
        epochs: 2,
        learning_rate: 1e-3,
        ..Default::default()
    };
    cfg.synth.days = 2;
    let path = dir.join("small.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_counts_records_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = lanecast(&["synth", "--days", "1", "--seed", "9", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("11520 records"));
    }
    assert_eq!(read_records(&a).unwrap().len(), 10 * 4 * 288);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn zero_days_and_usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(lanecast(&["synth", "--days", "0", "--out", s(&out)]).status.code(), Some(1));
    assert!(!out.exists());
    assert_eq!(lanecast(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lanecast(&["sweep", "--axis", "momentum", "--out", "x"]).status.code(), Some(1));
    assert_eq!(lanecast(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_config_keys_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"schema_version": 1, "trian": {}}"#).unwrap();
    let o = lanecast(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trian"));
}

#[test]
fn train_evaluate_predict_heatmap_end_to_end() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let data = dir.path().join("data.csv");
    let model = dir.path().join("model");
    assert!(lanecast(&["synth", "--config", s(&cfg), "--out", s(&data)]).status.success());

    let o = lanecast(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("1 (5 mins)") && stdout.contains("3 (15 mins)"), "{stdout}");
    let bundle = dir.path().join("model.json");
    let loss_csv = fs::read_to_string(dir.path().join("model_loss.csv")).unwrap();
    assert_eq!(loss_csv.lines().count(), 1 + 2);

    // Reloading the bundle reproduces the last recorded test loss exactly.
    let loaded = load_bundle(&bundle).unwrap();
    let recs = read_records(&data).unwrap();
    let (samples, _) = build_samples(&recs, loaded.network.config().shape, &loaded.norm).unwrap();
    let (_, test) = split_dataset(samples, 0.8).unwrap();
    let test_loss = mean_loss(&loaded.network, &test, &TrainConfig::default().loss()).unwrap();
    let last: Vec<&str> = loss_csv.lines().last().unwrap().split(',').collect();
    assert_eq!(test_loss.to_string(), last[2]);

    let eval_prefix = dir.path().join("again");
    let o = lanecast(&[
        "evaluate", "--config", s(&cfg), "--bundle", s(&bundle), "--data", s(&data),
        "--horizons", "1,2,3", "--out", s(&eval_prefix),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(dir.path().join("again_eval.csv")).unwrap(),
        fs::read(dir.path().join("model_eval.csv")).unwrap()
    );

    let preds = dir.path().join("preds.csv");
    let o = lanecast(&[
        "predict", "--bundle", s(&bundle), "--data", s(&data), "--horizons", "1,3", "--out", s(&preds),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("origin_timestamp,horizon,target_timestamp,detector_index,lane,speed,volume")
    );
    // 576 steps leave 576 − n = 571 windows; two horizons of 4·2 cells each.
    assert_eq!(lines.count(), 571 * 2 * 8);

    let hm = dir.path().join("hm");
    let o = lanecast(&[
        "heatmap", "--bundle", s(&bundle), "--data", s(&data), "--day", "1", "--days", "1", "--out", s(&hm),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = fs::read(dir.path().join("hm_lane2_pred.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n288 4\n255\n"));
    assert_eq!(pgm.len(), b"P5\n288 4\n255\n".len() + 288 * 4);
    let o = lanecast(&["heatmap", "--bundle", s(&bundle), "--data", s(&data), "--day", "2", "--out", s(&hm)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_bundle_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    assert!(lanecast(&["synth", "--days", "1", "--out", s(&data)]).status.success());
    let o = lanecast(&["evaluate", "--bundle", s(&dir.path().join("nope.json")), "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn diverging_training_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig {
        shape: CorridorShape::new(4, 5, 2).unwrap(),
        ..Default::default()
    };
    cfg.model.filters_per_layer = [2, 2, 2];
    cfg.model.fc_hidden = 4;
    cfg.synth.days = 1;
    cfg.train.learning_rate = 1e300;
    cfg.train.epochs = 3;
    let path = dir.path().join("c.json");
    fs::write(&path, cfg.to_json()).unwrap();
    let o = lanecast(&["train", "--config", s(&path), "--out", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

fn constant_records(shape: CorridorShape, steps: usize, speed: f64, volume: f64) -> Vec<LoopRecord> {
    let mut out = Vec::new();
    for t in 0..steps {
        for i in 1..=shape.k {
            for l in 1..=shape.c {
                out.push(LoopRecord {
                    timestamp: 1_451_606_400 + t as i64 * shape.interval,
                    detector_index: i,
                    lane: l,
                    speed,
                    volume,
                });
            }
        }
    }
    out
}

#[test]
fn oracle_bundle_scores_one_hundred_percent() {
    let dir = TempDir::new().unwrap();
    let shape = CorridorShape::new(4, 5, 2).unwrap();
    let arch = ArchitectureConfig {
        shape,
        filters_per_layer: [2, 2, 2],
        fc_hidden: 4,
        ..Default::default()
    };
    let norm = NormalizationParams::new(0.0, 80.0, 0.0, 200.0).unwrap();
    // Zero weights leave only the output bias, which is set to the data.
    let mut params = ModelParams::zeros(&arch).unwrap();
    let cells = shape.cells();
    params.output.biases[..cells].fill(norm.speed(50.0));
    params.output.biases[cells..].fill(norm.volume(30.0));
    let net = LaneCnn::from_params(arch, params).unwrap();
    let bundle = dir.path().join("oracle.json");
    save_bundle(&bundle, &net, &norm).unwrap();
    let data = dir.path().join("flat.csv");
    write_records(&data, &constant_records(shape, 100, 50.0, 30.0)).unwrap();

    let report = cmd_evaluate(&EvaluateArgs {
        bundle: Some(bundle),
        data: Some(data),
        split: Split::All,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(report.horizons.len(), 3);
    for h in &report.horizons {
        assert_eq!(h.accuracy, Some(100.0));
        assert!(h.per_lane.iter().chain(&h.per_detector).all(|&a| a == Some(100.0)));
    }
}

#[test]
fn full_scale_config_trains() {
    let dir = TempDir::new().unwrap();
    let text = r#"{
        "schema_version": 1,
        "shape": {"k": 10, "n": 8, "c": 4},
        "model": {"filters_per_layer": [4, 4, 4], "fc_hidden": 16},
        "train": {"epochs": 1, "learning_rate": 0.001},
        "synth": {"days": 1}
    }"#;
    let cfg = dir.path().join("full.json");
    fs::write(&cfg, text).unwrap();
    let out = cmd_train(&TrainArgs {
        config: Some(cfg),
        out: Some(dir.path().join("p")),
        ..Default::default()
    })
    .unwrap();
    let bundle = load_bundle(&out.bundle).unwrap();
    assert_eq!(bundle.network.config().shape, CorridorShape::default());
    assert_eq!(bundle.network.config().output_len(), 80);
}

#[test]
fn sweep_writes_table_and_rejects_empty_values() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let prefix = dir.path().join("sw");
    let o = lanecast(&[
        "sweep", "--config", s(&cfg), "--axis", "lambda", "--values", "0,0.5", "--out", s(&prefix),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("sw_sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "value,accuracy_h1,final_train_loss,final_test_loss,status");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,") && lines[2].starts_with("0.5,"));
    let curves = fs::read_to_string(dir.path().join("sw_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 2);

    let err = cmd_sweep(&SweepArgs {
        config: Some(cfg),
        seed: None,
        data: None,
        axis: SweepAxis::Lambda,
        values: Some(Vec::new()),
        out: Some(prefix),
    })
    .unwrap_err();
    assert_eq!(exit_code(&err), 1);
}

#[test]
fn convert_writes_split_sample_archive() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let data = dir.path().join("data.csv");
    let archive = dir.path().join("samples.json");
    assert!(lanecast(&["synth", "--config", s(&cfg), "--out", s(&data)]).status.success());
    let o = lanecast(&["convert", "--config", s(&cfg), "--data", s(&data), "--out", s(&archive)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let back: lanecast_cli::SampleArchive = serde_json::from_slice(&fs::read(&archive).unwrap()).unwrap();
    assert_eq!(back.format, "lanecast-samples");
    // Two days at 5-minute steps leave 576 − n = 571 windows, split 80/20.
    assert_eq!((back.train.len(), back.test.len()), (457, 114));
    assert_eq!(back.train[0].x_u.shape(), (4, 5, 2));
    assert!(back.train.last().unwrap().origin_timestamp < back.test[0].origin_timestamp);
}
