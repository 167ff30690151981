use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use greenpow::artifacts::{Manifest, SummaryFile, RUN_FILES};

fn greenpow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greenpow"))
        .args(args)
        .env_remove("GREENPOW_ARTIFACT_ROOT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = greenpow(&["run", "--blocks", "20", "--miners", "10", "--out", path(&dir.path().join("a"))]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));

    for bad in [
        vec!["run", "--miners", "1"],
        vec!["run", "--k", "2", "--eta", "30s"],
        vec!["run", "--timeout", "soon"],
        vec!["run", "--config", "/definitely/not/here.json"],
        vec!["frobnicate"],
    ] {
        let o = greenpow(&bad);
        assert_eq!(o.status.code(), Some(2), "{bad:?}: {}", stderr(&o));
    }

    // A file where the output directory should go fails at run time.
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = greenpow(&["run", "--blocks", "10", "--out", path(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn sweep_over_k_and_miners() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = greenpow(&[
        "sweep", "--sweep", "k=1..10", "--miners", "100,200,300", "--blocks", "20", "--out", path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 30);
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let mut points: Vec<(String, String)> = rows
        .iter()
        .map(|r| (r[col("miners")].to_string(), r[col("k")].to_string()))
        .collect();
    points.sort();
    points.dedup();
    assert_eq!(points.len(), 30);
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = greenpow(&[
        "run", "--blocks", "60", "--miners", "12", "--k", "3", "--delay", "2s", "--timeout", "23min",
        "--replications", "2", "--seed", "9", "--out", path(&first),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = Manifest::load(&first.join("manifest.json")).unwrap();
    assert_eq!(manifest.seed, 9);

    let o = greenpow(&["run", "--manifest", path(&first.join("manifest.json")), "--out", path(&second)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in RUN_FILES {
        let a = fs::read(first.join(f)).unwrap();
        let b = fs::read(second.join(f)).unwrap();
        assert!(a == b, "{f} differs");
        assert!(!a.contains(&b'\r'), "{f} has CR line endings");
    }
}

#[test]
fn partition_scenario_forces_timeouts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("part");
    let o = greenpow(&[
        "run", "--scenario", "partition-runnerups", "--timeout", "23min", "--miners", "30", "--k", "2",
        "--blocks", "60", "--seed", "4", "--out", path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: SummaryFile =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.aggregate.timeout_epochs >= 1);
    assert_eq!(summary.runs[0].summary.blocks, 60);
    let epochs = fs::read_to_string(out.join("epochs.csv")).unwrap();
    assert!(epochs.lines().skip(1).any(|l| l.contains("SECOND_AFTER_TIMEOUT")));
}

#[test]
fn analyze_timeout_curve() {
    let o = greenpow(&["analyze", "timeout-curve", "--lambda", "0.1", "--p", "0.7,0.9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let waits: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!((waits[0] - 12.0397).abs() < 1e-4);
    assert!((waits[1] - 23.0259).abs() < 1e-4);
}

#[test]
fn analyze_shares_from_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("chain.csv");
    let mut text = String::from("height,miner_id\n");
    for h in 0..400u64 {
        let who = if h % 5 < 3 { "big".to_string() } else { format!("m{}", h % 17) };
        text.push_str(&format!("{h},{who}\n"));
    }
    fs::write(&trace, text).unwrap();
    let out = dir.path().join("shares.csv");
    let o = greenpow(&["analyze", "shares", "--shares", path(&trace), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let mut total = 0.0;
    let mut big = None;
    for r in rdr.records() {
        let r = r.unwrap();
        let (pow, green): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        total += green;
        if &r[0] == "big" {
            big = Some((pow, green));
        }
    }
    let (pow, green) = big.unwrap();
    assert!(green < pow);
    assert!((total - 100.0).abs() < 1e-9);
}

#[test]
fn analyze_eta() {
    let o = greenpow(&["analyze", "eta", "--k", "1,2,3", "--miners", "20", "--blocks", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 4, "{text}");
}

#[test]
fn unknown_analysis_lists_the_valid_ones() {
    let o = greenpow(&["analyze", "astrology"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in greenpow::cli::ANALYSES {
        assert!(err.contains(name), "{err}");
    }
}
