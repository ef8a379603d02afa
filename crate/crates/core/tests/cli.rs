//! End-to-end checks of the `cemads` binary.

use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::process::{Command, Output};

fn cemads(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cemads"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> f64 {
    let prefix = format!("{key}: ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn rosenbrock_solve_reaches_tolerance() {
    let o = cemads(&["solve", "--problem", "ROSENBROCK", "--budget", "3000", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(field(&text, "f") <= 1e-4, "{text}");
    assert!(field(&text, "evaluations") <= 3000.0);
}

#[test]
fn crescent_reaches_feasibility_with_and_without_ce() {
    for seed in ["0", "1", "2"] {
        for extra in [None, Some("--no-ce")] {
            let mut args = vec!["solve", "--problem", "CRESCENT", "--seed", seed];
            args.extend(extra);
            let text = stdout(&cemads(&args));
            assert_eq!(field(&text, "h"), 0.0, "{args:?}: {text}");
        }
    }
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["solve"][..],
        &["solve", "--problem", "ROSENBROCK", "--budget", "many"],
        &["solve", "--problem", "NOPE"],
        &["solve", "--problem", "ROSENBROCK", "--x0", "1,2,3"],
        &["frobnicate"],
    ] {
        let o = cemads(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn runtime_errors_exit_with_one() {
    let o = cemads(&["profile", "--histories", "/nonexistent/histories"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn list_problems_prints_catalog_tsv() {
    let o = cemads(&["list-problems"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("name\tn\tm\tbounded\treference_best\tprovenance")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 6));
    let hs83 = rows.iter().find(|r| r[0] == "HS83").unwrap();
    assert_eq!((hs83[1], hs83[2], hs83[3]), ("5", "6", "yes"));
}

#[test]
fn same_flags_give_identical_output_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "3"].iter().enumerate() {
        let log = dir.path().join(format!("run{i}.jsonl"));
        let o = cemads(&[
            "solve", "--problem", "SNAKE", "--budget", "600", "--seed", "5", "--workers", workers,
            "--log", log.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        outputs.push((stdout(&o), std::fs::read(&log).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn standalone_ce_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = cemads(&[
        "ce", "--problem", "BIMODAL", "--ns", "50", "--ne", "10", "--x0", "0", "--budget", "1000",
        "--trace", trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!((field(&stdout(&o), "mu") - 2.0).abs() < 0.1);
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("iter,mu_1,sigma_1,gamma,best_f,best_h\n"));
    assert!(csv.lines().count() > 2);
}

fn write_campaign(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("campaign.toml");
    std::fs::write(
        &cfg,
        format!(
            r#"problems = ["BRANIN", "HS19"]
starts = 2
seeds = [0, 1]
budget = "50(n+1)"
output = "{}"

[[algorithm]]
name = "mads"
ce = false

[[algorithm]]
name = "ce-mads"
"#,
            dir.join("hist").display()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn bench_then_profile_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_campaign(dir.path());
    let o = cemads(&["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 1 + 2 * 2);
    assert!(dir.path().join("hist/ce-mads/HS19/1_0.jsonl").is_file());

    let hist = dir.path().join("hist");
    let args = ["profile", "--histories", hist.to_str().unwrap(), "--tau", "1e-3", "--tau", "1e-1"];
    let first = cemads(&args);
    let second = cemads(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let text = stdout(&first);
    assert!(text.starts_with("algorithm,tau,t,fraction\n"));
    assert!(text.lines().skip(1).all(|l| {
        let frac: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        (0.0..=1.0).contains(&frac)
    }));
}

#[test]
fn external_blackbox_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bb.sh");
    std::fs::write(
        &script,
        "#!/bin/sh\nawk 'NR==1{a=$1} NR==2{b=$1} END{printf \"%.17g %.17g\\n\", (a-1)^2+(b+2)^2, a+b+0.5}' \"$1\"\n",
    )
    .unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    let spec = dir.path().join("bb.toml");
    std::fs::write(
        &spec,
        format!(
            "name = \"SHELL\"\nprogram = \"{}\"\nm = 1\nlower = [-5, -5]\nupper = [5, 5]\nx0 = [0, 0]\nbudget = 300\n",
            script.display()
        ),
    )
    .unwrap();
    let o = cemads(&["solve", "--external", spec.to_str().unwrap(), "--seed", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("problem: SHELL"));
    assert_eq!(field(&text, "h"), 0.0);
    // Constrained optimum: the projection of (1, -2) onto a + b <= -0.5 is
    // (1, -2) itself, which is feasible.
    assert!(field(&text, "f") < 1e-2, "{text}");
    assert!(field(&text, "evaluations") <= 300.0);
}
