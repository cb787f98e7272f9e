use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn navrl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_navrl"))
}

fn run(args: &[&str]) -> Output {
    navrl().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const TINY: &[&str] = &[
    "--set",
    "task.num_envs=4",
    "--set",
    "train.ppo.horizon=8",
    "--set",
    "train.ppo.minibatch_size=16",
    "--set",
    "train.ppo.iterations=3",
    "--set",
    "train.network.hidden=[16,8]",
    "--set",
    "train.checkpoint_every=2",
    "--set",
    "task.world=empty",
];

fn train_tiny(out: &Path) -> Output {
    let mut args = vec!["train", "--quiet", "--out", out.to_str().unwrap()];
    args.extend_from_slice(TINY);
    run(&args)
}

#[test]
fn help_for_every_subcommand() {
    let flags: &[(&str, &[&str])] = &[
        ("train", &["--task", "--train", "--set", "--out", "--quiet"]),
        ("eval", &["--policy", "--task", "--world", "--trials", "--seed", "--noise", "--out", "--set"]),
        ("benchmark", &["--planner", "--policy", "--resolution", "--inflation", "--trials", "--seed", "--out"]),
        ("export", &["--checkpoint", "--out", "--name"]),
        ("inspect", &["--policy", "--json"]),
        ("serve", &["--policy", "--tcp", "--staleness", "--max-sessions"]),
        ("make-world", &["--seed", "--obstacles", "--half-extent", "--out"]),
    ];
    let top = run(&["--help"]);
    assert_eq!(code(&top), 0);
    let top = String::from_utf8(top.stdout).unwrap();
    for (sub, fs) in flags {
        assert!(top.contains(sub), "{sub} missing from top-level help");
        let o = run(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub} --help");
        let text = String::from_utf8(o.stdout).unwrap();
        for f in *fs {
            assert!(text.contains(f), "{sub} --help does not document {f}");
        }
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&["train", "--bogus"])), 1);
    assert_eq!(code(&run(&[])), 1);
    let o = run(&["train", "--set", "task.lidar.beam_count=60"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("input_dim") && err.contains("beam_count"), "{err}");
    assert_eq!(code(&run(&["train", "--set", "ppo.gamma=2"])), 1);
    assert_eq!(code(&run(&["train", "--task", "/nonexistent/task.json"])), 1);
    assert_eq!(code(&run(&["benchmark", "--planner", "rl"])), 1);
}

#[test]
fn runtime_errors_exit_2() {
    assert_eq!(code(&run(&["inspect", "--policy", "/nonexistent/p.manifest.json"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("p.manifest.json");
    std::fs::write(&bad, r#"{"format_version": 99}"#).unwrap();
    let o = run(&["eval", "--policy", bad.to_str().unwrap(), "--trials", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8(o.stderr).unwrap().contains("version"));
}

#[test]
fn make_world_is_seeded() {
    let a = run(&["make-world", "--seed", "4"]);
    let b = run(&["make-world", "--seed", "4"]);
    let c = run(&["make-world", "--seed", "5"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let spec = navrl::world::WorldSpec::from_json_str(std::str::from_utf8(&a.stdout).unwrap()).unwrap();
    assert_eq!(spec.static_obstacles.len(), 6);
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn train_eval_benchmark_pipeline_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = train_tiny(out);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = files_under(&a);
    for f in ["run.json", "stats.csv", "policy.manifest.json", "policy.weights.bin", "checkpoints/iter_000002.manifest.json"] {
        assert!(files.contains(&PathBuf::from(f)), "{f} missing: {files:?}");
    }
    assert_eq!(files, files_under(&b));
    for f in &files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f:?} differs");
    }
    let stats = std::fs::read_to_string(a.join("stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 4);

    let policy = a.join("policy.manifest.json");
    let p = policy.to_str().unwrap();
    let (e1, e2) = (tmp.path().join("e1"), tmp.path().join("e2"));
    for out in [&e1, &e2] {
        let o = run(&["eval", "--policy", p, "--world", "empty", "--trials", "3", "--seed", "9", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in files_under(&e1) {
        assert_eq!(std::fs::read(e1.join(&f)).unwrap(), std::fs::read(e2.join(&f)).unwrap(), "{f:?} differs");
    }
    let traj = files_under(&e1.join("trajectories"));
    assert_eq!(traj.len(), 4);
    let summary = std::fs::read_to_string(e1.join("summary.csv")).unwrap();
    assert!(summary.starts_with("controller,subset,n,success_rate"));

    let bench = tmp.path().join("bench");
    for planner in ["baseline", "rl"] {
        let o = run(&[
            "benchmark", "--planner", planner, "--policy", p, "--world", "static", "--trials", "2", "--out",
            bench.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let s = std::fs::read_to_string(bench.join("summary.csv")).unwrap();
        assert_eq!(s.lines().next(), summary.lines().next());
    }

    // export re-emits the same weights; inspect verifies them
    let ex = tmp.path().join("export");
    let o = run(&["export", "--checkpoint", a.join("checkpoints/iter_000002.manifest.json").to_str().unwrap(), "--out", ex.to_str().unwrap(), "--name", "deployed"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(ex.join("deployed.weights.bin")).unwrap(),
        std::fs::read(a.join("checkpoints/iter_000002.weights.bin")).unwrap()
    );
    let o = run(&["inspect", "--policy", ex.join("deployed.manifest.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("verified"));

    // serve over stdio: one goal, one odom, one scan -> one command
    let mut child = navrl()
        .args(["serve", "--policy", p])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut stdin = child.stdin.take().unwrap();
        writeln!(stdin, r#"{{"type":"goal","x":2.0,"y":0.0}}"#).unwrap();
        writeln!(stdin, r#"{{"type":"odom","stamp":1.0,"x":0.0,"y":0.0,"yaw":0.0}}"#).unwrap();
        let ranges = vec!["2.5"; 120].join(",");
        writeln!(stdin, r#"{{"type":"scan","stamp":1.05,"ranges":[{ranges}]}}"#).unwrap();
    }
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("cmd_vel")).count(), 1, "{text}");
}

#[test]
fn serve_exits_cleanly_on_closed_input() {
    let tmp = tempfile::tempdir().unwrap();
    let o = train_tiny(&tmp.path().join("t"));
    assert_eq!(code(&o), 0);
    let p = tmp.path().join("t/policy.manifest.json");
    let out = navrl()
        .args(["serve", "--policy", p.to_str().unwrap()])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("\"ready\""));
}

#[test]
fn eval_uses_the_policy_lidar() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let mut args = vec!["train", "--quiet", "--out", out.to_str().unwrap()];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--set", "task.lidar.beam_count=8", "--set", "train.network.input_dim=12"]);
    assert_eq!(code(&run(&args)), 0);
    let p = out.join("policy.manifest.json");
    let ev = tmp.path().join("ev");
    let o = run(&["eval", "--policy", p.to_str().unwrap(), "--world", "empty", "--trials", "2", "--out", ev.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 2);
}
