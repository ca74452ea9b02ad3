use std::path::Path;
use std::process::Command;

use udsgd_lab::config::{PatternKind, ScheduleKind};
use udsgd_lab::{parse_config, LabError};

const MINIMAL: &str = r#"
experiment = "single_run"
seed = 1
agents = 2
sampler = { kind = "iid" }

[problem]
kind = "quadratic"
a = [[1.0, 0.0], [0.0, 2.0]]
"#;

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config(MINIMAL).unwrap();
    assert_eq!(cfg.step.a, 1.0);
    assert_eq!(cfg.step.gamma_star, 1.0);
    assert_eq!(cfg.schedule.k, 1);
    assert_eq!(cfg.schedule.kind, ScheduleKind::Constant);
    assert_eq!(cfg.pattern.kind, PatternKind::FullAverage);
    let echoed = cfg.resolved_toml();
    for key in ["gamma_star = 1.0", "K = 1", "horizon = 10000"] {
        assert!(echoed.contains(key), "{key} missing from\n{echoed}");
    }
    assert_eq!(parse_config(&echoed).unwrap(), cfg);
}

#[test]
fn unknown_keys_are_named() {
    let err = parse_config(&MINIMAL.replace("seed = 1", "seed = 1\nlearning_rate = 0.1")).unwrap_err();
    assert!(matches!(err, LabError::Config(_)));
    assert!(err.to_string().contains("learning_rate"), "{err}");
    let nested = parse_config(&MINIMAL.replace("a = [[", "bogus = 3\na = [[")).unwrap_err();
    assert!(nested.to_string().contains("bogus"), "{nested}");
}

#[test]
fn seed_is_mandatory() {
    let err = parse_config(&MINIMAL.replace("seed = 1\n", "")).unwrap_err();
    assert!(err.to_string().contains("seed"), "{err}");
}

#[test]
fn semantic_errors_carry_the_key_path() {
    let walk = MINIMAL.replace(r#"sampler = { kind = "iid" }"#, r#"sampler = { kind = "srw" }"#);
    assert!(parse_config(&walk).unwrap_err().to_string().contains("sampler.graph"));
    let growing = format!("{MINIMAL}\n[schedule]\nkind = \"log_growth\"\n[step]\na = 0.8\n");
    assert!(parse_config(&growing).is_err());
    let partial = format!("{MINIMAL}\n[pattern]\nkind = \"partial_participation\"\n");
    assert!(parse_config(&partial).unwrap_err().to_string().contains("pattern.participation"));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_udsgd-lab"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn single_run_writes_stamped_csv_with_trending_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &MINIMAL.replace("agents = 2", "agents = 2\nhorizon = 5000"));
    let out = dir.path().join("out");
    let status = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    let stamp = lines.next().unwrap();
    assert!(stamp.starts_with("# config_sha256=") && stamp.ends_with("seed=1"), "{stamp}");
    assert_eq!(lines.next().unwrap(), "trial,n,mse,pr_mse,consensus,gamma");
    let mse: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let head = mse[..mse.len() / 4].iter().sum::<f64>() / (mse.len() / 4) as f64;
    let tail = mse[3 * mse.len() / 4..].iter().sum::<f64>() / (mse.len() - 3 * mse.len() / 4) as f64;
    assert!(tail < head, "mse does not trend down: {head} -> {tail}");
    for f in std::fs::read_dir(&out).unwrap() {
        let text = std::fs::read_to_string(f.unwrap().path()).unwrap();
        assert_eq!(text.lines().next().unwrap(), stamp);
    }
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write_config(dir.path(), "bad.toml", "experiment = \"single_run\"\n");
    let code = bin().args(["run", "--config"]).arg(&bad).arg("--out").arg(&out).status().unwrap().code();
    assert_eq!(code, Some(2));
    let code = bin().args(["run", "--config", "/nonexistent/x.toml", "--out"]).arg(&out).status().unwrap().code();
    assert_eq!(code, Some(3));
    // A 4-node ring is bipartite: the walk is periodic.
    let periodic = MINIMAL.replace(
        r#"sampler = { kind = "iid" }"#,
        r#"sampler = { kind = "srw", graph = { kind = "ring" } }"#,
    ) + "points_per_agent = 4\n";
    let p = write_config(dir.path(), "periodic.toml", &periodic);
    let code = bin().args(["run", "--config"]).arg(&p).arg("--out").arg(&out).status().unwrap().code();
    assert_eq!(code, Some(6));
    // γ* below 1/(2μ) with a = 1.
    let slow = write_config(dir.path(), "slow.toml", &format!("{MINIMAL}\n[step]\ngamma_star = 0.2\n"));
    let code = bin().args(["analyze", "--config"]).arg(&slow).arg("--out").arg(&out).status().unwrap().code();
    assert_eq!(code, Some(6));
}

#[test]
fn overrides_and_threads_keep_outputs_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
experiment = "clt_compare"
seed = 5
horizon = 3000
trials = 4
sampler = { kind = "nbrw", graph = { kind = "random_connected", edge_prob = 0.4 } }
agents = 3

[problem]
kind = "logistic"
data = { source = "synthetic", n_points = 36, dim = 2 }

[pattern]
kind = "partial_participation"
participation = 2
"#;
    let cfg = write_config(dir.path(), "c.toml", text);
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let status = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).args(extra).status().unwrap();
        assert!(status.success());
        out
    };
    let a = run("a", &["--threads", "1"]);
    let b = run("b", &["--threads", "3"]);
    let c = run("c", &["--trials", "5", "--seed", "6"]);
    for name in ["trajectories.csv", "ensemble.csv", "covariance.csv", "comparison.csv", "summary.csv", "config.resolved.toml"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
        assert_ne!(x, std::fs::read(c.join(name)).unwrap(), "{name}");
    }
    let resolved = std::fs::read_to_string(c.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("trials = 5") && resolved.contains("seed = 6"));
}

#[test]
fn diag_and_compare_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
experiment = "network_independence"
seed = 2
horizon = 2000
trials = 3
agents = 4
sampler = { kind = "iid" }

[problem]
kind = "logistic"
data = { source = "synthetic", n_points = 40, dim = 2 }

[[sweep.variants]]
name = "centralized"

[[sweep.variants]]
name = "ring"
pattern = { kind = "decentralized_fixed", topology = { kind = "ring" } }
"#;
    let cfg = write_config(dir.path(), "n.toml", text);
    let out = dir.path().join("o");
    let o = bin().args(["compare", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("ring - centralized"));
    assert!(out.join("ensemble_ring.csv").exists());
    let o = bin().args(["diag", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success());
    let contraction = std::fs::read_to_string(out.join("contraction.csv")).unwrap();
    assert!(contraction.lines().last().unwrap().ends_with("true"), "{contraction}");
}

#[test]
fn non_contracting_topologies_are_flagged_not_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("agents = 2", "agents = 4\nhorizon = 200")
        + "\n[pattern]\nkind = \"decentralized_fixed\"\ntopology = { kind = \"ring\" }\n";
    let cfg = write_config(dir.path(), "ring4.toml", &text);
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not contract"));
}
