//! End-to-end CLI behavior: exit codes, file schemas, stage isolation, and
//! byte-level determinism of pipeline outputs.

use std::path::Path;
use std::process::{Command, Output};

use retenta::dataset::{load_customers, CustomerTable};
use retenta::pipeline::OUTPUT_FILES;

fn retenta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retenta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn retenta_in(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_retenta"));
    cmd.current_dir(dir).args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn synth_bundle(dir: &Path) {
    let out = retenta(&[
        "synth",
        "--n",
        "200",
        "--seed",
        "7",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "synth failed: {out:?}");
}

fn write_config(dir: &Path, out_name: &str) -> std::path::PathBuf {
    let config = dir.join("run.cfg");
    std::fs::write(
        &config,
        format!(
            "# pipeline run\n\
             customers = {}/customers.csv\n\
             ratings = {}/ratings.csv\n\
             output_dir = {}/{out_name}\n\
             seed = 7\n\
             k = 3\n",
            dir.display(),
            dir.display(),
            dir.display()
        ),
    )
    .unwrap();
    config
}

#[test]
fn synth_writes_loadable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    synth_bundle(dir.path());
    for name in ["customers.csv", "ratings.csv", "ground_truth.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let table = load_customers(
        &dir.path().join("customers.csv"),
        &CustomerTable::default_schema(),
    )
    .unwrap();
    assert_eq!(table.len(), 200);
    assert!(table.rows.iter().all(|r| r.churn_label.is_some()));

    let truth: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("ground_truth.json")).unwrap(),
    )
    .unwrap();
    for key in ["alpha", "beta", "cluster_centers", "seed"] {
        assert!(truth.get(key).is_some(), "ground truth missing {key}");
    }
    assert_eq!(truth["seed"], 7);
    assert_eq!(truth["beta"].as_array().unwrap().len(), 7);
}

#[test]
fn customers_file_round_trips_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    synth_bundle(dir.path());
    let original = dir.path().join("customers.csv");
    let table = load_customers(&original, &CustomerTable::default_schema()).unwrap();
    let rewritten = dir.path().join("rewritten.csv");
    retenta::dataset::write_customers(&table, &rewritten).unwrap();
    assert_eq!(
        std::fs::read(&original).unwrap(),
        std::fs::read(&rewritten).unwrap(),
        "write(load(file)) must reproduce the file byte for byte"
    );
    let reloaded = load_customers(&rewritten, &CustomerTable::default_schema()).unwrap();
    assert_eq!(table, reloaded);
}

#[test]
fn synth_same_seed_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let status = retenta(&[
            "synth",
            "--n",
            "60",
            "--seed",
            "7",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success());
    }
    for name in ["customers.csv", "ratings.csv", "ground_truth.json"] {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs across identical synth runs");
    }
}

#[test]
fn pipeline_writes_all_outputs_with_expected_schemas() {
    let dir = tempfile::tempdir().unwrap();
    synth_bundle(dir.path());
    let config = write_config(dir.path(), "out");
    let out = retenta(&["pipeline", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "pipeline failed: {out:?}");

    let out_dir = dir.path().join("out");
    for name in OUTPUT_FILES {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }

    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("model.json")).unwrap())
            .unwrap();
    for key in ["alpha", "beta", "feature_columns", "scaling", "l2_lambda"] {
        assert!(model.get(key).is_some(), "model.json missing {key}");
    }
    assert!(model["scaling"].get("mean").is_some());
    assert!(model["scaling"].get("sd").is_some());
    assert_eq!(
        model["beta"].as_array().unwrap().len(),
        model["feature_columns"].as_array().unwrap().len()
    );

    // scores.csv: header plus 6-decimal probabilities, one row per customer
    let scores_text = std::fs::read_to_string(out_dir.join("scores.csv")).unwrap();
    let mut lines = scores_text.lines();
    assert_eq!(lines.next(), Some("customer_id,churn_probability"));
    let mut rows = 0;
    for line in lines {
        let (_, p) = line.split_once(',').unwrap();
        let decimals = p.split_once('.').map(|(_, frac)| frac.len());
        assert_eq!(decimals, Some(6), "probability not 6dp: {line}");
        rows += 1;
    }
    assert_eq!(rows, 200);

    let clusters_text = std::fs::read_to_string(out_dir.join("clusters.csv")).unwrap();
    assert!(clusters_text.starts_with("customer_id,cluster_index\n"));
    assert_eq!(clusters_text.lines().count(), 201);

    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("cluster_report.json")).unwrap(),
    )
    .unwrap();
    for key in [
        "k",
        "wcss",
        "sizes",
        "profiles",
        "external_vars",
        "wcss_sweep",
    ] {
        assert!(report.get(key).is_some(), "cluster_report missing {key}");
    }
    assert_eq!(report["k"], 3);
    let sizes: Vec<u64> = report["sizes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(sizes.iter().sum::<u64>(), 200);
    assert_eq!(report["wcss_sweep"].as_array().unwrap().len(), 9); // k = 2..=10
    assert!(report["external_vars"][0]
        .get("mean_churn_probability")
        .is_some());
    assert!(report["external_vars"][0].get("churn_rate").is_some());

    let recs: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("recommendations.json")).unwrap(),
    )
    .unwrap();
    let recs = recs.as_array().unwrap();
    assert!(!recs.is_empty());
    for entry in recs {
        assert!(entry.get("customer_id").is_some());
        assert!(entry.get("cold_start").is_some());
        for item in entry["items"].as_array().unwrap() {
            assert!(item.get("offer_id").is_some());
            assert!(item.get("score").is_some());
            assert!(item.get("support").is_some());
        }
    }

    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("result.json")).unwrap())
            .unwrap();
    let stages: Vec<&str> = result["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        stages,
        vec![
            "load",
            "standardize",
            "fit",
            "score",
            "segment",
            "cluster",
            "evaluate",
            "recommend"
        ]
    );
    let sizes = &result["segment_sizes"];
    let total = sizes["risky"].as_u64().unwrap()
        + sizes["loyal"].as_u64().unwrap()
        + sizes["neither"].as_u64().unwrap();
    assert_eq!(
        total, 200,
        "segment sizes inconsistent with scores row count"
    );
    assert!(result["clustering"].get("wcss").is_some());
    assert!(result["recommendations"].get("served").is_some());
}

#[test]
fn pipeline_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth_bundle(dir.path());
    let config = write_config(dir.path(), "out1");
    assert!(retenta(&["pipeline", "--config", config.to_str().unwrap()])
        .status
        .success());
    let config2 = write_config(dir.path(), "out2");
    assert!(
        retenta(&["pipeline", "--config", config2.to_str().unwrap()])
            .status
            .success()
    );

    for name in OUTPUT_FILES {
        let a = std::fs::read(dir.path().join("out1").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("out2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn stage_commands_reproduce_pipeline_outputs() {
    let dir = tempfile::tempdir().unwrap();
    synth_bundle(dir.path());
    let config = write_config(dir.path(), "out");
    assert!(retenta(&["pipeline", "--config", config.to_str().unwrap()])
        .status
        .success());
    let out_dir = dir.path().join("out");
    let iso = dir.path().join("iso");
    std::fs::create_dir_all(&iso).unwrap();

    let customers = dir.path().join("customers.csv");
    let ratings = dir.path().join("ratings.csv");
    let customers = customers.to_str().unwrap();
    let model_path = iso.join("model.json");
    let scores_path = iso.join("scores.csv");

    let out = retenta(&[
        "train",
        "--customers",
        customers,
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "train failed: {out:?}");
    let out = retenta(&[
        "score",
        "--customers",
        customers,
        "--model",
        model_path.to_str().unwrap(),
        "--out",
        scores_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "score failed: {out:?}");
    let out = retenta(&[
        "cluster",
        "--customers",
        customers,
        "--scores",
        scores_path.to_str().unwrap(),
        "--out-dir",
        iso.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "cluster failed: {out:?}");
    let out = retenta(&[
        "recommend",
        "--ratings",
        ratings.to_str().unwrap(),
        "--scores",
        scores_path.to_str().unwrap(),
        "--out",
        iso.join("recommendations.json").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "recommend failed: {out:?}");

    for name in [
        "model.json",
        "scores.csv",
        "clusters.csv",
        "cluster_report.json",
        "recommendations.json",
    ] {
        let stage = std::fs::read(iso.join(name)).unwrap();
        let pipeline = std::fs::read(out_dir.join(name)).unwrap();
        assert_eq!(
            stage, pipeline,
            "{name}: stage-by-stage differs from pipeline"
        );
    }

    // segment prints sizes consistent with result.json
    let out = retenta(&["segment", "--scores", scores_path.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("result.json")).unwrap())
            .unwrap();
    let expected = format!(
        "risky={} loyal={} neither={}",
        result["segment_sizes"]["risky"],
        result["segment_sizes"]["loyal"],
        result["segment_sizes"]["neither"]
    );
    assert!(
        stdout.contains(&expected),
        "segment printed {stdout:?}, expected {expected:?}"
    );
}

#[test]
fn flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    synth_bundle(dir.path());
    let config = write_config(dir.path(), "out"); // config says k = 3
    let out = retenta(&["pipeline", "--config", config.to_str().unwrap(), "--k", "4"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out").join("cluster_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["k"], 4, "flag should win over the config file");
}

#[test]
fn output_dir_env_var_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let out = retenta_in(
        dir.path(),
        &["synth", "--n", "20"],
        &[(
            "RETENTA_OUTPUT_DIR",
            dir.path().join("envout").to_str().unwrap(),
        )],
    );
    assert!(
        out.status.success(),
        "synth with env fallback failed: {out:?}"
    );
    assert!(dir.path().join("envout").join("customers.csv").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synth_bundle(dir.path());
    let config = dir.path().join("bad.cfg");
    std::fs::write(
        &config,
        format!(
            "customers = {}/customers.csv\nratings = {}/ratings.csv\noutput_dir = {}/out\nrisky_treshold = 0.6\n",
            dir.path().display(),
            dir.path().display(),
            dir.path().display()
        ),
    )
    .unwrap();
    let out = retenta(&["pipeline", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("risky_treshold"), "stderr: {stderr}");
}

#[test]
fn threshold_order_violation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    std::fs::write(&scores, "customer_id,churn_probability\nC1,0.400000\n").unwrap();
    let out = retenta(&[
        "segment",
        "--scores",
        scores.to_str().unwrap(),
        "--loyal",
        "0.6",
        "--risky",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(
        stderr.contains("loyal_threshold"),
        "stderr should cite the threshold order: {stderr}"
    );
}

#[test]
fn pipeline_failure_leaves_no_outputs_and_names_stage() {
    let dir = tempfile::tempdir().unwrap();
    synth_bundle(dir.path());
    // break the customers file: drop the nps column
    let customers = dir.path().join("customers.csv");
    let text = std::fs::read_to_string(&customers).unwrap();
    let broken: Vec<String> = text
        .lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            fields.remove(8); // nps column
            fields.join(",")
        })
        .collect();
    std::fs::write(&customers, broken.join("\n") + "\n").unwrap();

    let config = write_config(dir.path(), "out");
    let out = retenta(&["pipeline", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(
        stderr.contains("load:") && stderr.contains("nps"),
        "stderr should carry the stage prefix and column: {stderr}"
    );
    let out_dir = dir.path().join("out");
    for name in OUTPUT_FILES {
        assert!(
            !out_dir.join(name).exists(),
            "{name} left behind by a failed run"
        );
    }
}

#[test]
fn unknown_subcommand_exits_one_and_help_exits_zero() {
    let out = retenta(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));

    let out = retenta(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    for sub in [
        "synth",
        "train",
        "score",
        "segment",
        "cluster",
        "recommend",
        "pipeline",
        "bench-clustering",
    ] {
        let help = retenta(&[sub, "--help"]);
        assert_eq!(help.status.code(), Some(0), "{sub} --help should exit 0");
    }
}

#[test]
fn bench_clustering_prints_both_wall_times() {
    // small instance: only checks the reporting contract, not the ordering
    let out = retenta(&[
        "bench-clustering",
        "--n",
        "300",
        "--d",
        "4",
        "--k",
        "3",
        "--seed",
        "1",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("kmeans_wall_ms="));
    assert!(stdout.contains("agglomerative_wall_ms="));
}
