//! End-to-end runs of the `fossil` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fossil::difficulty::{read_partition, read_probability_csv, score_rows, stratify, DifficultyMetric};
use fossil::experiment::read_fold_plans;
use fossil::learner::Checkpoint;
use serde_json::Value;

fn fossil(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fossil"))
        .env_remove("FOSSIL_OUT")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = fossil(out, args);
    assert!(
        o.status.success(),
        "fossil {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn generate_writes_the_benchmark_and_refuses_to_clobber() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    ok(&out, &["generate"]);
    let blobs = out.join("data/blobs.csv");
    let text = std::fs::read_to_string(&blobs).unwrap();
    assert_eq!(text.lines().count(), 229);
    let manifest = json(&out.join("data/manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|o| o["path"] == "data/blobs.csv"));

    let before = std::fs::read(&blobs).unwrap();
    let modified = std::fs::metadata(&blobs).unwrap().modified().unwrap();
    let refused = fossil(&out, &["generate"]);
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));
    assert_eq!(std::fs::metadata(&blobs).unwrap().modified().unwrap(), modified);

    ok(&out, &["--force", "generate"]);
    assert_eq!(std::fs::read(&blobs).unwrap(), before);
}

#[test]
fn output_root_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fossil"))
        .current_dir(tmp.path())
        .env("FOSSIL_OUT", tmp.path().join("from_env"))
        .arg("generate")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(tmp.path().join("from_env/data/blobs.csv").is_file());
    assert!(!tmp.path().join("fossil_out").exists());
}

#[test]
fn difficulty_partition_matches_library_stratify() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    ok(&out, &["generate"]);
    let stdout = ok(&out, &["difficulty"]);
    assert!(stdout.contains("stage sizes [57, 57, 57, 57]"), "{stdout}");

    let dir = out.join("difficulty");
    let rows = read_probability_csv(&dir.join("probe_probs.csv")).unwrap();
    let expected = stratify(&score_rows(&rows, DifficultyMetric::Softmax), 4).unwrap();
    let written = read_partition(&dir.join("partition.csv"), &dir.join("partition.json")).unwrap();
    assert_eq!(written.stage_of, expected.stage_of);
    assert_eq!(written.thresholds, expected.thresholds);
    let stats = json(&dir.join("stats.json"));
    assert_eq!(stats["n_samples"], 228);
}

#[test]
fn one_hot_probabilities_are_flagged_degenerate() {
    let tmp = tempfile::tempdir().unwrap();
    let probs = tmp.path().join("probs.csv");
    let mut text = String::from("sample_id,label,p_0,p_1\n");
    for i in 0..12 {
        text.push_str(&format!("s{i},{},{},{}\n", i % 2, 1 - i % 2, i % 2));
    }
    std::fs::write(&probs, text).unwrap();
    let out = tmp.path().join("run");
    let stdout = ok(&out, &["difficulty", "--probs", probs.to_str().unwrap()]);
    assert!(stdout.contains("DegenerateAllScoresEqual"), "{stdout}");
    let stats = json(&out.join("difficulty/stats.json"));
    assert_eq!(stats["stage_sizes"], serde_json::json!([12]));
    assert!(stats["stage_validation_note"].is_string());
}

#[test]
fn train_and_stats_over_both_schemes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    ok(&out, &["generate"]);
    ok(&out, &["--workers", "2", "train"]);
    ok(&out, &["--weighting", "uniform", "train"]);

    let fossil_dir = out.join("train/fossil");
    let histories: Vec<_> = std::fs::read_dir(fossil_dir.join("histories")).unwrap().collect();
    assert_eq!(histories.len(), 15);
    assert_eq!(std::fs::read_dir(fossil_dir.join("checkpoints")).unwrap().count(), 15);
    assert_eq!(
        read_fold_plans(&fossil_dir.join("fold_plans.json")).unwrap(),
        read_fold_plans(&out.join("train/uniform/fold_plans.json")).unwrap()
    );
    let report = json(&fossil_dir.join("report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 15);

    let a = fossil_dir.join("report.json");
    let b = out.join("train/uniform/report.json");
    let stdout = ok(&out, &["stats", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(stdout.contains("16 of 16"), "{stdout}");
    ok(&out, &["stats", b.to_str().unwrap(), a.to_str().unwrap()]);
    let ab = json(&out.join("stats/fossil_vs_uniform/comparison.json"));
    let ba = json(&out.join("stats/uniform_vs_fossil/comparison.json"));
    for (x, y) in ab["entries"].as_array().unwrap().iter().zip(ba["entries"].as_array().unwrap()) {
        assert_eq!(x["metric"], y["metric"]);
        if x["method"] == "paired_t" {
            let (sx, sy) = (x["statistic"].as_f64().unwrap(), y["statistic"].as_f64().unwrap());
            assert!((sx + sy).abs() <= 1e-12, "{sx} vs {sy}");
        }
        assert_eq!(x["p_value"], y["p_value"]);
    }

    ok(&out, &["stats", a.to_str().unwrap(), a.to_str().unwrap()]);
    let same = json(&out.join("stats/fossil_vs_fossil/comparison.json"));
    for e in same["entries"].as_array().unwrap() {
        assert!(e["p_value"].is_null(), "{e}");
        assert!(e["note"].is_string());
    }
}

#[test]
fn regret_report_stays_within_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[regret]\nhorizons = [100, 400, 1600]\nstreams_per_family = 2\n");
    let out = tmp.path().join("run");
    let stdout = ok(&out, &["--config", cfg.to_str().unwrap(), "regret"]);
    assert!(stdout.contains("all runs within bound: true"), "{stdout}");
    let report = json(&out.join("regret/report.json"));
    let slope = report["slope"]["slope"].as_f64().unwrap();
    assert!(slope <= 0.6, "slope {slope}");
    assert_eq!(std::fs::read_dir(out.join("regret/traces")).unwrap().count(), 12);
}

#[test]
fn perturb_evaluates_image_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seeds = [42]\n[train]\ndataset = \"images\"\n");
    let cfg_s = cfg.to_str().unwrap();
    let out = tmp.path().join("run");
    ok(&out, &["--config", cfg_s, "generate"]);
    ok(&out, &["--config", cfg_s, "train"]);
    let stdout = ok(&out, &["--config", cfg_s, "perturb"]);
    assert!(stdout.contains("16 rows"), "{stdout}");
    let table = json(&out.join("perturb/robustness.json"));
    assert_eq!(table["table"]["rows"].as_array().unwrap().len(), 16);
    assert_eq!(table["checkpoint"], "seed42_fold0.json");

    // the table is what the library computes from the same checkpoint
    let ckpt = Checkpoint::load(&out.join("train/fossil/checkpoints/seed42_fold0.json")).unwrap();
    let images = fossil::data::read_image_set(&out.join("data/images_eval.csv"), &out.join("data/images_eval.json")).unwrap();
    let direct = fossil::data::robustness_eval(&ckpt.model(), &images, &fossil::data::PerturbationSpec::full_grid(), 0).unwrap();
    assert_eq!(serde_json::to_value(&direct).unwrap(), table["table"]);

    // an empty grid leaves only the clean row
    let empty = write_config(tmp.path(), "seeds = [42]\n[train]\ndataset = \"images\"\n[perturb]\nspecs = []\n");
    let stdout = ok(&out, &["--config", empty.to_str().unwrap(), "--force", "perturb"]);
    assert!(stdout.contains("1 rows"), "{stdout}");

    // a checkpoint from another model config is refused
    let stale = write_config(tmp.path(), "seeds = [42]\n[train]\ndataset = \"images\"\nlearning_rate = 0.1\n");
    let o = fossil(&out, &["--config", stale.to_str().unwrap(), "--force", "perturb"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("retrain"));
}

#[test]
fn missing_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = fossil(&out, &["train"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("generate"));
    let o = fossil(&out, &["--seed-list", "1,1", "generate"]);
    assert!(!o.status.success());
}
