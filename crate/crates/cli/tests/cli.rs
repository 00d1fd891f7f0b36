use std::path::Path;
use std::process::{Command, Output};

fn oteq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oteq"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const SMALL_TRAIN: &str =
    r#"{"steps": 1, "batch_size": 2, "dataset": {"tones": 6}, "calibration_tones": 4, "checkpoint_path": "m.oteq"}"#;

#[test]
fn dist_examples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "a.csv", "position,weight\n0,1\n1,3\n4,1\n");
    write(d, "dirac3.csv", "3,1\n");
    write(d, "dirac8.csv", "8,1\n");
    let same = oteq(d, &["dist", "--mu", "a.csv", "--nu", "a.csv"]);
    assert!(same.status.success());
    assert!(stdout(&same).contains("distance 0\n"), "{}", stdout(&same));
    let shifted = oteq(d, &["dist", "--mu", "dirac3.csv", "--nu", "dirac8.csv", "--p", "2", "--grad"]);
    assert!(shifted.status.success());
    let out = stdout(&shifted);
    assert!(out.contains("cost 25\n") && out.contains("distance 5\n"), "{out}");
    assert!(out.contains("side,position,gradient"));
}

#[test]
fn dist_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "a.csv", "0,1\n");
    write(d, "bad.csv", "0,0.5\n1,oops\n");
    write(d, "zero.csv", "0,0\n1,0\n");
    let missing = oteq(d, &["dist", "--mu", "a.csv", "--nu", "nope.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("nope.csv"));
    let bad = oteq(d, &["dist", "--mu", "bad.csv", "--nu", "a.csv"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("line 2"), "{}", stderr(&bad));
    let zero = oteq(d, &["dist", "--mu", "zero.csv", "--nu", "a.csv"]);
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn gen_is_deterministic_and_validates_first() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "ds.json", r#"{"tones": 4}"#);
    for out in ["a", "b"] {
        let o = oteq(d, &["gen", "--config", "ds.json", "--out", out, "--seed", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (a, b) = (
        std::fs::read(d.join("a/manifest.json")).unwrap(),
        std::fs::read(d.join("b/manifest.json")).unwrap(),
    );
    assert_eq!(a, b);
    let wavs = std::fs::read_dir(d.join("a"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "wav"))
        .count();
    assert_eq!(wavs, 4);

    // 1000 Hz x 6 harmonics exceeds the 4 kHz Nyquist limit
    write(d, "nyq.json", r#"{"tones": 4, "sample_rate": 8000.0}"#);
    let o = oteq(d, &["gen", "--config", "nyq.json", "--out", "never"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.join("never").exists());
}

#[test]
fn train_eval_and_cross_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "t.json", SMALL_TRAIN);
    write(d, "ds.json", r#"{"tones": 2}"#);
    assert!(oteq(d, &["gen", "--config", "ds.json", "--out", "data"]).status.success());
    let o = oteq(d, &["train", "--config", "t.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("m.oteq").exists());

    let o = oteq(d, &["eval", "--checkpoint", "m.oteq", "--data", "data", "--cents-csv", "c.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["rpa", "rca"] {
        let v = report[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} {v}");
    }
    let cents = std::fs::read_to_string(d.join("c.csv")).unwrap();
    assert_eq!(cents.lines().count(), 1 + report["frames"].as_u64().unwrap() as usize);

    write(d, "calib.json", r#"{"f_ref_hz": 51.913087197493134, "bins_per_octave": 36.0, "shift_bins": 0.0}"#);
    let o = oteq(d, &["eval", "--checkpoint", "m.oteq", "--data", "data", "--calib", "calib.json"]);
    assert!(o.status.success(), "{}", stderr(&o));

    write(
        d,
        "x.json",
        r#"{"models": [{"name": "syn", "checkpoint": "m.oteq"}], "sets": [{"data": "data"}, {"name": "copy", "data": "data"}]}"#,
    );
    let o = oteq(d, &["cross-eval", "--manifest", "x.json", "--out", "x.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.starts_with("train_set") && table.contains("copy"), "{table}");
    let rows = std::fs::read_to_string(d.join("x.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn train_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "t.json", SMALL_TRAIN);
    let mut logs = Vec::new();
    for name in ["a.oteq", "b.oteq"] {
        let o = oteq(d, &["train", "--config", "t.json", "--seed", "11", "--checkpoint", name]);
        assert!(o.status.success(), "{}", stderr(&o));
        logs.push(std::fs::read_to_string(d.join(format!("{name}.metrics.jsonl"))).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn baseline_objective_logs_its_terms() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "t.json", SMALL_TRAIN);
    let o = oteq(d, &["train", "--config", "t.json", "--objective", "pesto-baseline"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(d.join("m.oteq.metrics.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(rec["loss_equiv"].is_f64() && rec["loss_sce"].is_f64(), "{rec}");
    assert!(rec["loss_ot"].is_null());
}

#[test]
fn non_finite_abort_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "t.json",
        r#"{"objective": "pesto-baseline", "alpha": 100.0, "max_retries": 1, "steps": 1, "batch_size": 2,
            "dataset": {"tones": 6}, "calibration_tones": 4, "checkpoint_path": "m.oteq"}"#,
    );
    let o = oteq(d, &["train", "--config", "t.json"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

#[test]
fn bench_stability_examples() {
    let dir = tempfile::tempdir().unwrap();
    let o = oteq(dir.path(), &["bench-stability", "--alphas", "1.1,2", "--nbins", "128,1200"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row = |alpha: &str, n: &str| -> Vec<String> {
        out.lines()
            .map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>())
            .find(|f| f[0] == alpha && f[1] == n)
            .unwrap()
    };
    // columns: alpha, n_bins, max_power, equiv_overflow, equiv_finite, ot_finite, ot_max
    let big = row("2", "1200");
    assert_eq!((big[3].as_str(), big[5].as_str()), ("true", "true"));
    let small = row("1.1", "128");
    assert_eq!((small[3].as_str(), small[4].as_str(), small[5].as_str()), ("false", "true", "true"));
    assert!(out.lines().skip(1).all(|l| l.split(',').nth(5) == Some("true")));
}

#[test]
fn usage_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let help = oteq(d, &["train", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    for flag in ["--config", "--seed", "--objective", "--checkpoint", "--resume"] {
        assert!(stdout(&help).contains(flag), "{flag}");
    }
    assert_eq!(oteq(d, &["dist", "--mu", "a", "--nu", "b", "--bogus"]).status.code(), Some(2));
    assert_eq!(oteq(d, &["bench-stability", "--nbins", "128"]).status.code(), Some(2));
    assert_eq!(oteq(d, &["frobnicate"]).status.code(), Some(2));
}
