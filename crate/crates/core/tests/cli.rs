use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use detal::records::{ParseOptions, Pool};
use detal::scoring::u_image;
use detal::selection::read_history;
use detal::sim::SynthWorldConfig;
use serde_json::json;
use tempfile::TempDir;

fn detal<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_detal"))
        .args(args)
        .env_remove("DETAL_WORKERS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

fn write_sim_config(dir: &Path, sim: serde_json::Value) -> std::path::PathBuf {
    let mut world = SynthWorldConfig::with_hard_classes(60, 3, 1, 8);
    world.num_test_images = 20;
    let path = dir.join("sim.json");
    fs::write(&path, json!({ "world": world, "sim": sim }).to_string()).unwrap();
    path
}

fn det(b: [f64; 4], probs: &[f64], proposal: Option<usize>) -> serde_json::Value {
    let mut d = json!({ "box": b, "probs": probs });
    if let Some(i) = proposal {
        d["proposal_index"] = json!(i);
    }
    d
}

/// Simple record with one detection of confidence `p` and ground truth under it.
fn record(id: &str, p: f64) -> String {
    json!({
        "image_id": id,
        "width": 100,
        "height": 100,
        "proposals": [[10.0, 10.0, 50.0, 50.0]],
        "reference": [det([12.0, 10.0, 50.0, 52.0], &[p, 1.0 - p], Some(0))],
        "ground_truth": [{ "box": [12.0, 10.0, 50.0, 50.0], "class": 0 }]
    })
    .to_string()
}

fn write_pool(path: &Path, confs: &[(&str, f64)]) {
    let text: String = confs.iter().map(|(id, c)| record(id, *c) + "\n").collect();
    fs::write(path, text).unwrap();
}

#[test]
fn score_c_matches_library_values() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_sim_config(tmp.path(), json!({}));
    let pool = tmp.path().join("pool.jsonl");
    let out = detal([
        "simulate",
        "--sim-config",
        p(&cfg),
        "--labeled",
        "10",
        "--seed",
        "2",
        "--out",
        p(&pool),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let scores = tmp.path().join("s.csv");
    let out = detal(["score", "--pool", p(&pool), "--method", "c", "--out", p(&scores)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let parsed = Pool::load(&pool, &ParseOptions::default()).unwrap();
    let rows = csv_rows(&scores);
    assert_eq!(rows.len(), parsed.len());
    for (row, rec) in rows.iter().zip(&parsed.records) {
        assert_eq!(row[0], rec.image_id);
        assert_eq!(row[1], "C");
        match u_image(rec) {
            Some(u) => {
                assert_eq!(row[2], format!("{u:.6}"));
                assert_eq!(row[3], "true");
            }
            None => assert_eq!((row[2].as_str(), row[3].as_str()), ("", "false")),
        }
    }
}

#[test]
fn stability_without_noisy_passes_is_undefined() {
    let tmp = TempDir::new().unwrap();
    let pool = tmp.path().join("pool.jsonl");
    write_pool(&pool, &[("a", 0.9), ("b", 0.6)]);
    let scores = tmp.path().join("s.csv");
    let out = detal(["score", "--pool", p(&pool), "--method", "ls", "--out", p(&scores)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(csv_rows(&scores).iter().all(|r| r[3] == "false"));
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
}

#[test]
fn tightness_on_ssd_pool_is_undefined() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_sim_config(tmp.path(), json!({ "ssd_mode": true }));
    let pool = tmp.path().join("pool.jsonl");
    let out = detal([
        "simulate",
        "--sim-config",
        p(&cfg),
        "--labeled",
        "30",
        "--out",
        p(&pool),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let scores = tmp.path().join("s.csv");
    let out = detal(["score", "--pool", p(&pool), "--method", "lt_c", "--out", p(&scores)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&scores);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[3] == "false" && r[2].is_empty()));
    assert!(stderr(&out).contains("proposal"), "{}", stderr(&out));
}

#[test]
fn record_error_names_line() {
    let tmp = TempDir::new().unwrap();
    let pool = tmp.path().join("pool.jsonl");
    let bad = record("b", 0.7).replace("\"width\":100", "\"width\":\"wide\"");
    fs::write(&pool, format!("{}\n{bad}\n", record("a", 0.9))).unwrap();
    let out = detal([
        "score",
        "--pool",
        p(&pool),
        "--method",
        "c",
        "--out",
        p(&tmp.path().join("s.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_2() {
    let out = detal(["score", "--pool", "x", "--method", "bogus", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
    let out = detal(["score", "--pool", "x", "--method", "c", "--out", "y", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = detal(["eval", "--pool", "x", "--iou", "1.5", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_1() {
    let tmp = TempDir::new().unwrap();
    let out = detal([
        "score",
        "--pool",
        p(&tmp.path().join("none.jsonl")),
        "--method",
        "c",
        "--out",
        "o.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("none.jsonl"));
}

#[test]
fn help_lists_flags() {
    let out = detal(["campaign", "--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for flag in [
        "--pool",
        "--sim-config",
        "--method",
        "--batch",
        "--rounds",
        "--init",
        "--seed",
        "--out",
        "--workers",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn select_takes_top_scores() {
    let tmp = TempDir::new().unwrap();
    let pool = tmp.path().join("pool.jsonl");
    write_pool(&pool, &[("a", 0.95), ("b", 0.55), ("c", 0.75), ("d", 0.60)]);
    let scores = tmp.path().join("s.csv");
    assert!(
        detal(["score", "--pool", p(&pool), "--method", "c", "--out", p(&scores)])
            .status
            .success()
    );
    let state = tmp.path().join("state.json");
    let out = detal(["select", "--scores", p(&scores), "--batch", "2", "--out", p(&state)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "b\nd\n");
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(&state).unwrap()).unwrap();
    assert_eq!(saved["labeled"], json!(["b", "d"]));
}

#[test]
fn sim_campaign_with_zero_rounds() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_sim_config(tmp.path(), json!({}));
    let dir = tmp.path().join("run");
    let out = detal([
        "campaign",
        "--sim-config",
        p(&cfg),
        "--method",
        "ls_c",
        "--batch",
        "5",
        "--rounds",
        "0",
        "--init",
        "10",
        "--seed",
        "1",
        "--out",
        p(&dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.join("history.jsonl")).unwrap(), "");
    let rows = csv_rows(&dir.join("curves.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][..2], ["LS+C".to_string(), "10".to_string()]);
}

#[test]
fn sim_campaign_writes_history_and_curves() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_sim_config(tmp.path(), json!({}));
    let dir = tmp.path().join("run");
    let out = detal([
        "campaign",
        "--sim-config",
        p(&cfg),
        "--method",
        "3in1",
        "--batch",
        "5",
        "--rounds",
        "3",
        "--init",
        "10",
        "--seed",
        "4",
        "--out",
        p(&dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let history = read_history(&fs::read(dir.join("history.jsonl")).unwrap()[..]).unwrap();
    assert_eq!(history.iter().map(|r| r.round).collect::<Vec<_>>(), [1, 2, 3]);
    assert!(history.iter().all(|r| r.selected.len() == 5 && r.method == "3in1"));
    let labels: Vec<String> = csv_rows(&dir.join("curves.csv"))
        .into_iter()
        .map(|r| r[1].clone())
        .collect();
    assert_eq!(labels, ["10", "15", "20", "25"]);
}

#[test]
fn real_campaign_reports_missing_round_pool() {
    let tmp = TempDir::new().unwrap();
    write_pool(
        &tmp.path().join("pool.round1.jsonl"),
        &[("a", 0.9), ("b", 0.6), ("c", 0.7)],
    );
    let out = detal([
        "campaign",
        "--pool",
        p(tmp.path()),
        "--method",
        "c",
        "--batch",
        "1",
        "--rounds",
        "2",
        "--out",
        p(&tmp.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("pool.round2.jsonl"), "{}", stderr(&out));
    assert!(!tmp.path().join("run/history.jsonl").exists());
}

#[test]
fn real_campaign_with_file_and_sibling_rounds() {
    let tmp = TempDir::new().unwrap();
    let confs = [("a", 0.9), ("b", 0.6), ("c", 0.7), ("d", 0.8)];
    write_pool(&tmp.path().join("pool.round1.jsonl"), &confs);
    write_pool(&tmp.path().join("pool.round2.jsonl"), &confs);
    let ids = tmp.path().join("init.txt");
    fs::write(&ids, "a\n").unwrap();
    let dir = tmp.path().join("run");
    let out = detal([
        "campaign",
        "--pool",
        p(&tmp.path().join("pool.round1.jsonl")),
        "--method",
        "c",
        "--batch",
        "1",
        "--rounds",
        "2",
        "--init-ids",
        p(&ids),
        "--out",
        p(&dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let history = read_history(&fs::read(dir.join("history.jsonl")).unwrap()[..]).unwrap();
    assert_eq!(history[0].selected, ["b"]);
    assert_eq!(history[1].selected, ["c"]);
    assert!(dir.join("state.json").exists());
}

#[test]
fn large_campaign_is_accepted() {
    let tmp = TempDir::new().unwrap();
    let ids: Vec<String> = (0..3501).map(|i| format!("im{i:05}")).collect();
    let text: String = ids
        .iter()
        .enumerate()
        .map(|(i, id)| record(id, 0.2 + 0.7 * (i % 97) as f64 / 97.0) + "\n")
        .collect();
    for n in 1..=15 {
        fs::write(tmp.path().join(format!("pool.round{n}.jsonl")), &text).unwrap();
    }
    let dir = tmp.path().join("run");
    let out = detal([
        "campaign",
        "--pool",
        p(tmp.path()),
        "--method",
        "c",
        "--batch",
        "200",
        "--rounds",
        "15",
        "--init",
        "500",
        "--seed",
        "3",
        "--out",
        p(&dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let history = read_history(&fs::read(dir.join("history.jsonl")).unwrap()[..]).unwrap();
    assert_eq!(history.len(), 15);
    assert!(history.iter().all(|r| r.selected.len() == 200));
}

#[test]
fn campaign_over_budget_fails() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_sim_config(tmp.path(), json!({}));
    let out = detal([
        "campaign",
        "--sim-config",
        p(&cfg),
        "--method",
        "c",
        "--batch",
        "30",
        "--rounds",
        "3",
        "--init",
        "10",
        "--out",
        p(&tmp.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("exceeds pool"), "{}", stderr(&out));
}

#[test]
fn workers_do_not_change_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_sim_config(tmp.path(), json!({}));
    let run = |name: &str, workers: Option<&str>| {
        let dir = tmp.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_detal"));
        cmd.args([
            "campaign",
            "--sim-config",
            p(&cfg),
            "--method",
            "ls",
            "--batch",
            "4",
            "--rounds",
            "3",
        ])
        .args(["--init", "8", "--seed", "5", "--out", p(&dir)]);
        match workers {
            Some(w) => cmd.env("DETAL_WORKERS", w),
            None => cmd.env_remove("DETAL_WORKERS"),
        };
        assert!(cmd.output().unwrap().status.success());
        (
            fs::read(dir.join("history.jsonl")).unwrap(),
            fs::read(dir.join("curves.csv")).unwrap(),
        )
    };
    let base = run("a", Some("1"));
    assert_eq!(run("b", Some("3")), base);
    assert_eq!(run("c", None), base);
}

#[test]
fn eval_writes_class_ap() {
    let tmp = TempDir::new().unwrap();
    let pool = tmp.path().join("pool.jsonl");
    write_pool(&pool, &[("a", 0.9), ("b", 0.6)]);
    let out_csv = tmp.path().join("ap.csv");
    let out = detal(["eval", "--pool", p(&pool), "--name", "run1", "--out", p(&out_csv)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(csv_rows(&out_csv), [["run1", "0", "1.000000"]]);
    assert!(stdout(&out).contains("1.000000"));
}

#[test]
fn eval_requires_ground_truth() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_sim_config(tmp.path(), json!({ "include_ground_truth": false }));
    let pool = tmp.path().join("pool.jsonl");
    assert!(detal(["simulate", "--sim-config", p(&cfg), "--out", p(&pool)])
        .status
        .success());
    let out = detal(["eval", "--pool", p(&pool), "--out", p(&tmp.path().join("ap.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("ground truth"));
}

#[test]
fn overlap_matrix_from_histories() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a.jsonl");
    let b = tmp.path().join("b.jsonl");
    fs::write(
        &a,
        "{\"round\":1,\"method\":\"C\",\"selected\":[\"x\",\"y\",\"z\",\"w\"]}\n",
    )
    .unwrap();
    fs::write(
        &b,
        "{\"round\":1,\"method\":\"LS+C\",\"selected\":[\"y\",\"x\",\"q\",\"r\"]}\n",
    )
    .unwrap();
    let out_csv = tmp.path().join("o.csv");
    let out = detal(["overlap", "--history", p(&a), p(&b), "--out", p(&out_csv)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        csv_rows(&out_csv),
        [["C", "100.000000", "50.000000"], ["LS+C", "50.000000", "100.000000"]]
    );
    let out = detal(["overlap", "--history", p(&a), "--round", "2", "--out", p(&out_csv)]);
    assert_eq!(out.status.code(), Some(1));
}

fn write_curves(path: &Path, rows: &[(&str, usize, f64)]) {
    let mut text = String::from("method,labels,map\n");
    for (m, n, v) in rows {
        text.push_str(&format!("{m},{n},{v:.6}\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn report_baseline_alone_saves_nothing() {
    let tmp = TempDir::new().unwrap();
    let curves = tmp.path().join("c.csv");
    write_curves(
        &curves,
        &[("R", 100, 0.3), ("R", 200, 0.35), ("R", 300, 0.35), ("R", 400, 0.5)],
    );
    let dir = tmp.path().join("rep");
    let out = detal(["report", "--curves", p(&curves), "--baseline", "R", "--out", p(&dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(csv_rows(&dir.join("saving.csv")).iter().all(|r| r[3] == "0.000000"));
    assert!(dir.join("map.svg").exists() && dir.join("saving.svg").exists());
}

#[test]
fn report_matches_hand_interpolation() {
    let tmp = TempDir::new().unwrap();
    let passive = tmp.path().join("r.csv");
    let active = tmp.path().join("a.csv");
    write_curves(
        &passive,
        &[("R", 100, 0.30), ("R", 200, 0.40), ("R", 400, 0.50), ("R", 500, 0.60)],
    );
    write_curves(
        &active,
        &[
            ("LS+C", 100, 0.30),
            ("LS+C", 200, 0.50),
            ("LS+C", 300, 0.60),
            ("LS+C", 400, 0.70),
        ],
    );
    let class_ap = tmp.path().join("ap.csv");
    fs::write(
        &class_ap,
        "method,class,ap\nR,0,0.300000\nR,1,0.800000\nLS+C,0,0.450000\nLS+C,1,0.820000\n",
    )
    .unwrap();
    let dir = tmp.path().join("rep");
    let out = detal([
        "report",
        "--curves",
        p(&passive),
        p(&active),
        "--baseline",
        "R",
        "--class-ap",
        p(&class_ap),
        "--out",
        p(&dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    // 0.40 is reached at 150, 0.50 at 200 and 0.60 at 300 labels
    let hand = [0.0, 50.0 / 200.0, 200.0 / 400.0, 200.0 / 500.0];
    let got: Vec<f64> = csv_rows(&dir.join("saving.csv"))
        .into_iter()
        .filter(|r| r[0] == "LS+C")
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert_eq!(got.len(), hand.len());
    for (g, h) in got.iter().zip(hand) {
        assert!((g - h).abs() < 1e-9, "{g} vs {h}");
    }
    let summary = csv_rows(&dir.join("saving_summary.csv"));
    assert!(summary.contains(&vec!["LS+C".to_string(), "0.287500".to_string(), "false".to_string()]));
    let classwise = csv_rows(&dir.join("classwise.csv"));
    assert_eq!(classwise.len(), 1);
    assert_eq!(classwise[0][0], "LS+C");
}

#[test]
fn report_rejects_malformed_csv() {
    let tmp = TempDir::new().unwrap();
    let curves = tmp.path().join("c.csv");
    fs::write(&curves, "method,labels,map\nR,100,0.3\nR,two hundred,0.4\n").unwrap();
    let out = detal([
        "report",
        "--curves",
        p(&curves),
        "--baseline",
        "R",
        "--out",
        p(&tmp.path().join("rep")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("row 3"), "{}", stderr(&out));
}

#[test]
fn report_needs_baseline() {
    let tmp = TempDir::new().unwrap();
    let curves = tmp.path().join("c.csv");
    write_curves(&curves, &[("C", 100, 0.3), ("C", 200, 0.4)]);
    let out = detal([
        "report",
        "--curves",
        p(&curves),
        "--baseline",
        "R",
        "--out",
        p(&tmp.path().join("rep")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("baseline"));
}
