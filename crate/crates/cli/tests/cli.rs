use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jestlab::checkpoint::Checkpoint;
use jestlab::commands::{self, Combine};
use jestlab::config::{Overrides, RunConfig};
use jestlab::pipeline;
use jestlab_core::corpus::{LabelBounds, Provenance};
use jestlab_core::ensembling::{Lattice, VoteRule};
use jestlab_core::modeling::TaskId;
use jestlab_core::synthetic::{self, SyntheticConfig};
use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jestlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {stderr}");
    serde_json::from_str(lines[0]).expect("error line is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let train = fixtures().join("synthetic_200.csv");
    write(
        dir,
        "run.toml",
        &format!("{body}\n[data]\ntrain = \"{}\"\n", train.display()),
    )
}

#[test]
fn bundled_fixture_matches_generator() {
    let expected = jestlab::data::dataset_csv(&synthetic::generate(&SyntheticConfig::default())).unwrap();
    assert_eq!(fs::read(fixtures().join("synthetic_200.csv")).unwrap(), expected);
    let h30 = SyntheticConfig {
        humor_fraction: 0.3,
        seed: 30,
        ..SyntheticConfig::default()
    };
    let expected = jestlab::data::dataset_csv(&synthetic::generate(&h30)).unwrap();
    assert_eq!(fs::read(fixtures().join("synthetic_200_h30.csv")).unwrap(), expected);
}

#[test]
fn fixture_loads_back_identically() {
    let path = fixtures().join("synthetic_200.csv");
    let loaded = jestlab::data::load_dataset(&path, Provenance::Synthetic, &LabelBounds::default()).unwrap();
    assert_eq!(
        loaded.records(),
        synthetic::generate(&SyntheticConfig::default()).records()
    );
}

#[test]
fn stm_config_with_two_tasks_fails_validation_before_training() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "mode = \"stm\"\ntasks = [\"H1A\", \"H1B\"]");
    let out_dir = dir.path().join("out");
    let out = run(&[
        "train",
        cfg.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "invalid_config");
    assert!(!out_dir.exists());
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "mode = \"stm\"\ntasks = [\"H1A\"]\n[data]\ntrain = \"nope.csv\"\n",
    );
    let out = run(&["train", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "io");
}

#[test]
fn usage_errors_are_single_json_lines() {
    let out = run(&["ensemble", "--task", "H1B", "--inputs", "a.csv", "--output", "o.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "usage");
}

#[test]
fn mtl_train_on_fixture_writes_manifest_and_four_epoch_counts() {
    let dir = TempDir::new().unwrap();
    let overrides = Overrides {
        output_dir: Some(dir.path().join("mtl")),
        ..Overrides::default()
    };
    let config = RunConfig::load(&fixtures().join("mtl.toml"), &overrides).unwrap();
    let outcome = pipeline::cmd_train(&config).unwrap();
    let chosen: Vec<(TaskId, usize)> = outcome.chosen_n.iter().map(|(t, n)| (*t, *n)).collect();
    // Regression baseline for this fixture, seed and configuration.
    assert_eq!(
        chosen,
        vec![(TaskId::H1A, 3), (TaskId::H1B, 8), (TaskId::H1C, 3), (TaskId::OFF2, 8)]
    );
    let root = dir.path().join("mtl");
    let manifest: serde_json::Value = serde_json::from_str(&read(&root.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["mode"], "mtl");
    assert_eq!(manifest["chosen_n"].as_object().unwrap().len(), 4);
    let data_sha = jestlab::data::file_digest(&fixtures().join("synthetic_200.csv")).unwrap();
    assert_eq!(manifest["data"][0]["sha256"], data_sha.as_str());
    assert_eq!(
        manifest["config_sha256"],
        jestlab::data::sha256_hex(config.canonical_json().as_bytes()).as_str()
    );
    for (path, digest) in manifest["artifacts"].as_object().unwrap() {
        let bytes = fs::read(root.join(path)).unwrap();
        assert_eq!(digest, jestlab::data::sha256_hex(&bytes).as_str(), "{path}");
    }
    for task in TaskId::ALL {
        assert!(root.join(format!("checkpoints/{task}.best.json")).exists());
        assert!(root.join(format!("predictions/{task}.val.csv")).exists());
    }
    let history = read(&root.join("history.csv"));
    assert!(history.starts_with("epoch,task,split,metric_name,value\n"));
    assert!(history.contains(",H1C,val,f_score,"));
}

#[test]
fn stm_reruns_are_byte_identical_and_retrain_reuses_chosen_n() {
    let dir = TempDir::new().unwrap();
    let cfg = fixtures().join("stm.toml");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let o = run(&[
            "train",
            cfg.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out_dir);
    }
    for file in [
        "predictions/H1B.val.csv",
        "predictions/H1B.test.csv",
        "history.csv",
        "manifest.json",
    ] {
        assert_eq!(
            fs::read(outputs[0].join(file)).unwrap(),
            fs::read(outputs[1].join(file)).unwrap(),
            "{file}"
        );
    }
    let test_rows = read(&outputs[0].join("predictions/H1B.test.csv")).lines().count();
    assert_eq!(test_rows, 201);

    let before = fs::read(outputs[0].join("checkpoints/H1B.final.json")).unwrap();
    let o = run(&[
        "retrain",
        cfg.to_str().unwrap(),
        "--output-dir",
        outputs[0].to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(outputs[0].join("checkpoints/H1B.final.json")).unwrap(), before);
    let n: serde_json::Value = serde_json::from_str(&read(&outputs[0].join("chosen_n.json"))).unwrap();
    let retrain: serde_json::Value = serde_json::from_str(&read(&outputs[0].join("manifest.retrain.json"))).unwrap();
    assert_eq!(retrain["epochs_run"], n["H1B"]);
}

#[test]
fn retrain_without_epochs_or_prior_run_fails() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "mode = \"stm\"\ntasks = [\"OFF2\"]");
    let out = run(&[
        "retrain",
        cfg.to_str().unwrap(),
        "--output-dir",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "missing_epochs");
}

fn trained_stm(dir: &Path, task: &str) -> PathBuf {
    let cfg = config(
        dir,
        &format!("mode = \"stm\"\ntasks = [\"{task}\"]\n[training]\nmax_epochs = 1\nlearning_rate = 1e-3"),
    );
    let out_dir = dir.join(format!("run-{task}"));
    let overrides = Overrides {
        output_dir: Some(out_dir.clone()),
        ..Overrides::default()
    };
    pipeline::cmd_train(&RunConfig::load(&cfg, &overrides).unwrap()).unwrap();
    out_dir.join(format!("checkpoints/{task}.final.json"))
}

#[test]
fn predict_emits_one_row_per_input_and_clamps_regression() {
    let dir = TempDir::new().unwrap();
    let ckpt = trained_stm(dir.path(), "H1B");
    let data = write(
        dir.path(),
        "in.csv",
        "id,text\n30,zany haha haha\n10,apple\n20,edgy meadow\n",
    );
    let rows = commands::predict(&ckpt, &data, TaskId::H1B, false).unwrap();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![30, 10, 20]);

    // A head that outputs exactly 5.7 for every input.
    let mut cp = Checkpoint::load(&ckpt).unwrap();
    let w = cp.params.find("head.H1B.weight").unwrap();
    cp.params.value_mut(w).data_mut().fill(0.0);
    let b = cp.params.find("head.H1B.bias").unwrap();
    cp.params.value_mut(b).data_mut().fill(5.7);
    let hacked = dir.path().join("hacked.json");
    cp.save(&hacked).unwrap();
    let raw = commands::predict(&hacked, &data, TaskId::H1B, false).unwrap();
    assert!(raw.iter().all(|r| r.1 == 5.7));
    let out = dir.path().join("clamped.csv");
    let o = run(&[
        "predict",
        "--checkpoint",
        hacked.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--task",
        "H1B",
        "--clamp",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(read(&out), "id,prediction\n30,5\n10,5\n20,5\n");
}

#[test]
fn predict_with_wrong_task_is_task_mismatch() {
    let dir = TempDir::new().unwrap();
    let ckpt = trained_stm(dir.path(), "H1A");
    let data = write(dir.path(), "in.csv", "id,text\n1,zany\n");
    let o = run(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--task",
        "OFF2",
        "--output",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_line(&o)["error"], "task_mismatch");
    let rows = commands::predict(&ckpt, &data, TaskId::H1A, true).unwrap();
    assert!(rows[0].1 == 0.0 || rows[0].1 == 1.0);
}

#[test]
fn mtl_checkpoint_serves_every_task() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "mode = \"mtl\"\ntasks = [\"H1A\", \"H1B\", \"H1C\", \"OFF2\"]\n[training]\nmax_epochs = 1",
    );
    let overrides = Overrides {
        output_dir: Some(dir.path().join("m")),
        ..Overrides::default()
    };
    pipeline::cmd_train(&RunConfig::load(&cfg, &overrides).unwrap()).unwrap();
    let data = write(dir.path(), "in.csv", "id,text\n1,zany haha\n2,apple\n");
    for task in TaskId::ALL {
        let rows = commands::predict(&dir.path().join("m/checkpoints/final.json"), &data, task, false).unwrap();
        assert_eq!(rows.len(), 2);
    }
}

#[test]
fn joint_ensemble_mode_trains_and_predicts() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "mode = \"joint-ensemble\"\ntasks = [\"OFF2\"]\n[training]\nmax_epochs = 1\n[ensemble]\nmembers = 2\nfreeze_encoders = true",
    );
    let overrides = Overrides {
        output_dir: Some(dir.path().join("j")),
        ..Overrides::default()
    };
    pipeline::cmd_train(&RunConfig::load(&cfg, &overrides).unwrap()).unwrap();
    let ckpt = dir.path().join("j/checkpoints/OFF2.final.json");
    let cp = Checkpoint::load(&ckpt).unwrap();
    assert_eq!(cp.encoder_configs.len(), 2);
    let data = write(dir.path(), "in.csv", "id,text\n5,apple meadow\n");
    assert_eq!(commands::predict(&ckpt, &data, TaskId::OFF2, false).unwrap().len(), 1);
}

#[test]
fn ensemble_uniform_is_the_row_mean() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.csv", "id,prediction\n1,1.0\n2,3.0\n");
    let b = write(dir.path(), "b.csv", "id,prediction\n2,4.0\n1,2.0\n");
    let rows = commands::ensemble(TaskId::OFF2, &[a, b], &Combine::Uniform).unwrap();
    assert_eq!(rows, vec![(1, 1.5), (2, 3.5)]);
}

#[test]
fn ensemble_majority_vote() {
    let dir = TempDir::new().unwrap();
    let files: Vec<PathBuf> = [1, 0, 1]
        .iter()
        .enumerate()
        .map(|(i, v)| write(dir.path(), &format!("m{i}.csv"), &format!("id,prediction\n9,{v}\n")))
        .collect();
    let rows = commands::ensemble(TaskId::H1A, &files, &Combine::Vote(VoteRule::Majority)).unwrap();
    assert_eq!(rows, vec![(9, 1.0)]);
    let out = dir.path().join("v.csv");
    let mut args = vec![
        "ensemble",
        "--task",
        "H1A",
        "--vote",
        "--output",
        out.to_str().unwrap(),
        "--inputs",
    ];
    args.extend(files.iter().map(|f| f.to_str().unwrap()));
    assert!(run(&args).status.success());
    assert_eq!(read(&out), "id,prediction\n9,1\n");
}

#[test]
fn ensemble_vote_rejects_non_binary_inputs() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.csv", "id,prediction\n1,0.4\n");
    let err = commands::ensemble(TaskId::H1A, &[a], &Combine::Vote(VoteRule::Majority)).unwrap_err();
    assert_eq!(err.code, "non_binary_prediction");
}

#[test]
fn ensemble_weights_must_lie_on_the_simplex() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.csv", "id,prediction\n1,1.0\n");
    let b = write(dir.path(), "b.csv", "id,prediction\n1,2.0\n");
    let w = write(dir.path(), "w.csv", "model_id,lambda\na,0.4\nb,0.5\n");
    let out = dir.path().join("o.csv");
    let o = run(&[
        "ensemble",
        "--task",
        "OFF2",
        "--weights",
        w.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--inputs",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_line(&o)["error"], "simplex_violation");

    // Weights are matched by model id, not by row order.
    let w = write(dir.path(), "w2.csv", "model_id,lambda\nb,0.25\na,0.75\n");
    let rows = commands::ensemble(TaskId::OFF2, &[a, b], &Combine::Weights(w)).unwrap();
    assert_eq!(rows, vec![(1, 1.25)]);
}

#[test]
fn ensemble_misaligned_files_are_rejected() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.csv", "id,prediction\n1,1.0\n2,1.0\n");
    let b = write(dir.path(), "b.csv", "id,prediction\n1,2.0\n3,1.0\n");
    let err = commands::ensemble(TaskId::OFF2, &[a, b], &Combine::Uniform).unwrap_err();
    assert_eq!(err.code, "alignment_error");
}

#[test]
fn gridsearch_picks_the_perfect_model() {
    let dir = TempDir::new().unwrap();
    let gold = write(dir.path(), "gold.csv", "id,gold\n1,1.0\n2,2.0\n3,0.5\n");
    let good = write(dir.path(), "good.csv", "id,prediction\n1,1.0\n2,2.0\n3,0.5\n");
    let bad = write(dir.path(), "bad.csv", "id,prediction\n1,3.0\n2,0.0\n3,4.0\n");
    let out = dir.path().join("w.csv");
    let o = run(&[
        "gridsearch",
        "--task",
        "OFF2",
        "--gold",
        gold.to_str().unwrap(),
        "--step",
        "0.5",
        "--output",
        out.to_str().unwrap(),
        "--inputs",
        good.to_str().unwrap(),
        bad.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "best_rmse=0 candidates=3\n");
    assert_eq!(read(&out), "model_id,lambda\ngood,1\nbad,0\n");
}

#[test]
fn gridsearch_single_input_gets_all_the_weight() {
    let dir = TempDir::new().unwrap();
    let gold = write(dir.path(), "gold.csv", "id,gold\n1,1.0\n2,2.0\n");
    let only = write(dir.path(), "only.csv", "id,prediction\n1,1.5\n2,2.0\n");
    let g = commands::gridsearch(TaskId::H1B, &[only], &gold, 0.1, Lattice::Simplex).unwrap();
    assert_eq!(g.result.lambdas, vec![1.0]);
    assert_eq!(g.model_ids, vec!["only".to_string()]);
}

#[test]
fn gridsearch_gold_may_be_a_labelled_dataset() {
    let dir = TempDir::new().unwrap();
    let data = fixtures().join("synthetic_200.csv");
    let dataset = jestlab::data::load_dataset(&data, Provenance::Synthetic, &LabelBounds::default()).unwrap();
    let exact: String = dataset
        .records()
        .iter()
        .map(|r| format!("{},{}\n", r.id, r.offense_rating))
        .collect();
    let a = write(dir.path(), "a.csv", &format!("id,prediction\n{exact}"));
    let zeros: String = dataset.records().iter().map(|r| format!("{},0\n", r.id)).collect();
    let b = write(dir.path(), "b.csv", &format!("id,prediction\n{zeros}"));
    let g = commands::gridsearch(TaskId::OFF2, &[b, a], &data, 0.25, Lattice::Simplex).unwrap();
    assert_eq!(g.result.lambdas, vec![0.0, 1.0]);
    assert_eq!(g.result.rmse, 0.0);
    assert_eq!(g.result.candidates, 5);
}

#[test]
fn gridsearch_missing_gold_is_alignment_error() {
    let dir = TempDir::new().unwrap();
    let gold = write(dir.path(), "gold.csv", "id,gold\n1,1.0\n");
    let a = write(dir.path(), "a.csv", "id,prediction\n1,1.0\n2,2.0\n");
    let err = commands::gridsearch(TaskId::OFF2, &[a], &gold, 0.5, Lattice::Simplex).unwrap_err();
    assert_eq!(err.code, "alignment_error");
}

#[test]
fn report_scores_every_prediction_file() {
    let dir = TempDir::new().unwrap();
    let gold = write(
        dir.path(),
        "gold.csv",
        "id,text,is_humor,humor_rating,humor_controversy,offense_rating\n1,a,1,2.0,0,1.0\n2,b,0,,,3.0\n",
    );
    let h1a = write(dir.path(), "h1a.csv", "id,prediction\n1,1\n2,0\n");
    let off = write(dir.path(), "off.csv", "id,prediction\n1,1.0\n2,2.0\n");
    let h1b = write(dir.path(), "h1b.csv", "id,prediction\n1,2.5\n");
    let o = run(&[
        "report",
        "--gold",
        gold.to_str().unwrap(),
        "--csv",
        "--pred",
        &format!("m:H1A:{}", h1a.display()),
        "--pred",
        &format!("m:OFF2:{}", off.display()),
        "--pred",
        &format!("m:H1B:{}", h1b.display()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8_lossy(&o.stdout);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("model,task1a_f_score,task1a_accuracy,task1b_rmse,task1c_f_score,task1c_accuracy,task2_rmse")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "m");
    assert_eq!(row[4], "");
    assert_eq!(row[6], "0.7071");
    assert_eq!(row[3], "0.5000");
}

#[test]
fn report_with_no_runs_is_an_empty_table() {
    let o = run(&[
        "report",
        "--gold",
        fixtures().join("synthetic_200.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success());
}

#[test]
fn analyze_reports_group_means() {
    let dir = TempDir::new().unwrap();
    let data = write(
        dir.path(),
        "d.csv",
        "id,text,is_humor,humor_rating,humor_controversy,offense_rating\n1,a,1,2.0,1,3.0\n2,b,1,1.0,0,1.0\n3,c,1,1.0,0,2.0\n4,d,0,,,5.0\n",
    );
    let mut out = Vec::new();
    commands::analyze(&data, &mut out).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "group,count,mean_offense_rating\ncontroversial,1,3\nnon_controversial,2,1.5\ndifference,,1.5\n"
    );
}

#[test]
fn label_invariant_violations_name_the_row() {
    let dir = TempDir::new().unwrap();
    let data = write(
        dir.path(),
        "d.csv",
        "id,text,is_humor,humor_rating,humor_controversy,offense_rating\n1,a,0,2.0,,1.0\n",
    );
    let o = run(&["analyze", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = error_line(&o);
    assert_eq!(e["error"], "label_invariant_violation");
    assert!(e["message"].as_str().unwrap().contains("d.csv"));
}

#[test]
fn missing_column_is_reported() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "d.csv", "id,text,is_humor\n1,a,0\n");
    let err = commands::analyze(&data, &mut Vec::new()).unwrap_err();
    assert_eq!(err.code, "missing_column");
}

#[test]
fn output_root_variable_sets_the_default_directory() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "mode = \"stm\"\ntasks = [\"H1A\"]\n[training]\nmax_epochs = 1",
    );
    let root = dir.path().join("root");
    let o = Command::new(env!("CARGO_BIN_EXE_jestlab"))
        .args(["train", cfg.to_str().unwrap()])
        .env(jestlab::config::OUTPUT_ROOT_ENV, &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("run/manifest.json").exists());
}
