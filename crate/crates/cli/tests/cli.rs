use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use latgraph::data_io::write_csv;
use latgraph::synthetic::{clustered_dataset, ClusterSpec};

fn latgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latgraph"))
        .args(args)
        .env("LATGRAPH_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn sample_csv(dir: &Path) -> String {
    let ds = clustered_dataset(&ClusterSpec {
        nodes: 45,
        seed: 2,
        ..ClusterSpec::default()
    })
    .unwrap();
    let path = dir.join("data.csv");
    write_csv(&ds, &path).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(latgraph(&["--help"]).status.code(), Some(0));
    assert_eq!(
        latgraph(&["cross-validate", "--help"]).status.code(),
        Some(0)
    );
    assert_eq!(latgraph(&["--version"]).status.code(), Some(0));
    assert_eq!(
        latgraph(&["train", "--no-such-flag"]).status.code(),
        Some(1)
    );
    assert_eq!(latgraph(&[]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = latgraph(&[
        "cross-validate",
        "--data",
        dir.path().join("missing.csv").to_str().unwrap(),
        "--label-col",
        "label",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn gradcheck_reports_small_error() {
    let out = latgraph(&["gradcheck", "--instances", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let last = text.lines().last().unwrap();
    let err: f64 = last.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(err < 1e-4, "{last}");
}

#[test]
fn synth_recover_writes_graphs_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = latgraph(&[
            "synth-recover",
            "--nodes",
            "6",
            "--dim",
            "4",
            "--iterations",
            "200",
            "--seed",
            "1",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert!(stdout(&out).contains("final mse"));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["ground_truth.csv", "learned.csv", "recovery.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    assert!(fs::read_to_string(a.join("recovery.json"))
        .unwrap()
        .contains("\"seed\": 1"));
    assert_eq!(
        fs::read_to_string(a.join("learned.csv"))
            .unwrap()
            .lines()
            .count(),
        7
    );
}

#[test]
fn synth_curves_tabulates_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = latgraph(&[
        "synth-curves",
        "--nodes",
        "4,6",
        "--dims",
        "2",
        "--seeds",
        "2",
        "--iterations",
        "50",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
    let summary = fs::read_to_string(dir.path().join("curves_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
}

#[test]
fn cross_validate_prints_summary_and_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_csv(dir.path());
    let run = |sub: &str, method: &str| {
        let out_dir = dir.path().join(sub);
        let out = latgraph(&[
            "cross-validate",
            "--data",
            &data,
            "--id-col",
            "id",
            "--label-col",
            "label",
            "--folds",
            "3",
            "--epochs",
            "20",
            "--seed",
            "7",
            "--method",
            method,
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        (stdout(&out), out_dir)
    };
    let (text, a) = run("a", "latent");
    assert!(
        text.starts_with("accuracy: ") && text.contains(" ± ") && text.contains(", auc: "),
        "{text}"
    );
    let metrics = fs::read_to_string(a.join("metrics.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert_eq!(json["seed"], 7);
    assert_eq!(json["report"]["folds"].as_array().unwrap().len(), 3);
    let history = fs::read_to_string(a.join("fold_00_history.csv")).unwrap();
    assert!(history.starts_with("epoch,lr,loss,train_acc,val_acc"));
    assert_eq!(history.lines().count(), 21);

    let (_, b) = run("b", "latent");
    assert_eq!(
        fs::read(a.join("metrics.json")).unwrap(),
        fs::read(b.join("metrics.json")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("fold_02_history.csv")).unwrap(),
        fs::read(b.join("fold_02_history.csv")).unwrap()
    );

    for method in ["inductive", "knn", "linear"] {
        let (text, _) = run(method, method);
        assert!(text.starts_with("accuracy: "), "{method}: {text}");
    }
}

#[test]
fn train_infer_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_csv(dir.path());
    let model_dir = dir.path().join("model");
    let out = latgraph(&[
        "train",
        "--data",
        &data,
        "--id-col",
        "id",
        "--label-col",
        "label",
        "--epochs",
        "30",
        "--out-dir",
        model_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let model = model_dir.join("model.json");
    assert!(fs::read_to_string(&model).unwrap().contains("\"seed\": 0"));
    assert_eq!(
        fs::read_to_string(model_dir.join("history.csv"))
            .unwrap()
            .lines()
            .count(),
        31
    );

    let unseen = dir.path().join("unseen.csv");
    let text = fs::read_to_string(&data).unwrap();
    let header = text.lines().next().unwrap();
    let mut rows: Vec<&str> = text.lines().skip(1).take(4).collect();
    rows.insert(0, header);
    fs::write(&unseen, rows.join("\n")).unwrap();

    let pred_dir = dir.path().join("pred");
    let out = latgraph(&[
        "infer",
        "--model",
        model.to_str().unwrap(),
        "--data",
        unseen.to_str().unwrap(),
        "--id-col",
        "id",
        "--out-dir",
        pred_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let preds = fs::read_to_string(pred_dir.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 5);
    assert!(preds.starts_with("id,prediction,p_0,p_1,p_2"));

    let graph_dir = dir.path().join("graph");
    let out = latgraph(&[
        "export-graph",
        "--model",
        model.to_str().unwrap(),
        "--out-dir",
        graph_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let adjacency = fs::read_to_string(graph_dir.join("adjacency.csv")).unwrap();
    assert_eq!(adjacency.lines().count(), 46);
}
