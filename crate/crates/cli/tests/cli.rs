use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use daeq_core::flsim::{RoundMetrics, METRICS_COLUMNS};

const TOY: &str = r#"
clients = 5
rounds = 3
server_lr = 0.2
seed = 11

[data]
samples_per_class = 60
features = 6

[model]
hidden = [5]

[group]
preset = "generated"
key_bits = 48
group_bits = 256
"#;

fn daeq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daeq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_into(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    daeq(&args)
}

fn read_metrics(path: &Path) -> Vec<RoundMetrics> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, METRICS_COLUMNS);
    r.deserialize().map(Result::unwrap).collect()
}

#[test]
fn plain_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY);
    let out = dir.path().join("out");
    let res = run_into(&config, &out, &["--set", "pipeline=plain", "--set", "rounds=4"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = read_metrics(&out.join("metrics.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|m| m.bytes_enc_upload == 0));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rounds"], 4);
    assert_eq!(summary["final_test_accuracy"].as_f64().unwrap(), rows[3].test_accuracy);
    assert!(out.join("timings.csv").exists());
    assert!(!out.join("transcript.json").exists());
}

#[test]
fn encrypted_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = run_into(&config, out, &["--transcript", "--recovery", "bruteforce"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    for file in ["metrics.csv", "summary.json", "transcript.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let rows = read_metrics(&a.join("metrics.csv"));
    assert!(rows.iter().all(|m| m.ct_enc == 8 && m.ct_dec == 12));

    let c = dir.path().join("c");
    assert!(run_into(&config, &c, &["--seed", "12"]).status.success());
    assert_ne!(
        fs::read(a.join("metrics.csv")).unwrap(),
        fs::read(c.join("metrics.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY);
    let out = dir.path().join("out");
    for extra in [
        &["--set", "b=16"][..],
        &["--set", "no_such_key=1"],
        &["--set", "pipeline=rot13"],
    ] {
        let res = run_into(&config, &out, extra);
        assert_eq!(res.status.code(), Some(2), "{extra:?}");
    }
    let res = daeq(&["run", "--config", "/nonexistent.toml", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let bad = write_config(dir.path(), "clients = [");
    assert_eq!(run_into(&bad, &out, &[]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn protocol_abort_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY);
    let res = run_into(
        &config,
        &dir.path().join("out"),
        &["--recovery", "bruteforce", "--set", "recovery_limit=1"],
    );
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("protocol abort"));
}

#[test]
fn selftest_passes_and_mutations_fail() {
    let res = daeq(&["selftest"]);
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 7);

    for m in ["share", "lagrange", "threshold"] {
        let res = daeq(&["selftest", "--mutate", m]);
        assert_eq!(res.status.code(), Some(1), "{m}");
        assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL"), "{m}");
    }
}

#[test]
fn keygen_demo_writes_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("fkg.json");
    let res = daeq(&[
        "keygen-demo",
        "--group",
        "toy",
        "--clients",
        "5",
        "--adversary",
        "2:bad_share",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let t: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(t["disqualified"], serde_json::json!([2]));
    assert_eq!(t["qual"], serde_json::json!([1, 3, 4, 5]));

    let res = daeq(&["keygen-demo", "--group", "toy", "--clients", "4", "--threshold", "2"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn bench_recovery_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.csv");
    let res = daeq(&[
        "bench-recovery",
        "--group",
        "generated",
        "--key-bits",
        "40",
        "--group-bits",
        "160",
        "--bits",
        "2,5,8",
        "--trials",
        "3",
        "--modes",
        "bruteforce,bsgs,log",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut r = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        r.headers().unwrap(),
        vec!["bits", "trial", "mode", "message", "steps", "micros"]
    );
    let rows: Vec<(u32, usize, String, u64, u64, u128)> = r.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3 * 3 * 3);
    for (bits, _, mode, message, steps, _) in &rows {
        match mode.as_str() {
            "bruteforce" => assert_eq!(*steps, message + 1),
            "log" => assert_eq!(*steps, 0),
            _ => assert!(*steps <= 2 * ((15 * (1u64 << bits)) as f64).sqrt() as u64 + 2),
        }
    }
    assert_eq!(daeq(&["bench-recovery", "--bits", "16"]).status.code(), Some(2));
}
