use std::fs;
use std::process::{Command, Output};

use pracsim::security::{BANDWIDTH_HEADER, CURVE_HEADER};

fn pracsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pracsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn curve_row_for_prac1_at_32() {
    let o = pracsim(&["curve", "--n-mit", "1", "--proactive", "off"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with(&CURVE_HEADER.join(",")));
    let row = text.lines().find(|l| l.starts_with("32,1,off,")).expect("n_bo 32 row");
    let trh: u64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(trh.abs_diff(71) <= 1, "{row}");
}

#[test]
fn curve_is_byte_identical_across_thread_counts() {
    let a = pracsim(&["curve"]);
    let b = Command::new(env!("CARGO_BIN_EXE_pracsim")).arg("curve").env("PRACSIM_THREADS", "1").output().unwrap();
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 1 + 9 * 3 * 2);
}

#[test]
fn fill_escape_report() {
    let o = pracsim(&["attack", "fill-escape", "--threshold", "512"]);
    assert_eq!(code(&o), 0);
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(json[0]["report"]["max_unmitigated"].as_u64().unwrap() >= 1283);
}

#[test]
fn attack_trace_replays_and_detects_drift() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("tf");
    let o = pracsim(&["attack", "toggle-forget", "--trace-prefix", prefix.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = dir.path().join("tf-0.trace");
    let stats = dir.path().join("tf-0.stats.json");
    let ok = pracsim(&["replay", trace.to_str().unwrap(), "--expect", stats.to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));

    let mut pinned: serde_json::Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    pinned["alerts"] = (pinned["alerts"].as_u64().unwrap() + 1).into();
    fs::write(&stats, pinned.to_string()).unwrap();
    let drift = pracsim(&["replay", trace.to_str().unwrap(), "--expect", stats.to_str().unwrap()]);
    assert_eq!(code(&drift), 2);
    assert!(stdout(&drift).contains("alerts"));
}

#[test]
fn output_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bw.csv");
    let o = pracsim(&["bandwidth", "--output", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    assert!(fs::read_to_string(path).unwrap().starts_with(&BANDWIDTH_HEADER.join(",")));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dram.cfg");
    fs::write(&cfg, "# PRAC-4\nn_mit = 4\n").unwrap();
    let o = pracsim(&["simulate", "--r1", "16", "--config", cfg.to_str().unwrap(), "--set", "n_bo=8"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("8,4,16,"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&pracsim(&["frobnicate"])), 1);
    assert_eq!(code(&pracsim(&["curve", "--set", "bogus=1"])), 1);
    assert_eq!(code(&pracsim(&["curve", "--set", "n_mit"])), 1);
    assert_eq!(code(&pracsim(&["attack", "wave", "--r1", "0"])), 1);
    assert_eq!(code(&pracsim(&["replay", "/nonexistent/trace"])), 1);
}

#[test]
fn help_documents_csv_columns() {
    for (cmd, header) in [("curve", &CURVE_HEADER[..]), ("bandwidth", &BANDWIDTH_HEADER[..])] {
        let help = stdout(&pracsim(&[cmd, "--help"]));
        for col in header {
            assert!(help.contains(col), "{cmd} --help lacks {col}");
        }
    }
    let sim = stdout(&pracsim(&["simulate", "--r1", "16"]));
    let help = stdout(&pracsim(&["simulate", "--help"]));
    for col in sim.lines().next().unwrap().split(',') {
        assert!(help.contains(col), "simulate --help lacks {col}");
    }
}
