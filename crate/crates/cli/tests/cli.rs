use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dyadic(args: &[&str], envs: &[(&str, &str)]) -> Output {
    dyadic_in(None, args, envs)
}

fn dyadic_in(cwd: Option<&Path>, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dyadic"));
    cmd.args(args).env_remove("DYADIC_THREADS");
    if let Some(d) = cwd {
        cmd.current_dir(d);
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("stderr error is a JSON line")
}

const FK: &[&str] = &[
    "run", "feynman-kac", "--manifold", "circle", "--bundle", "circle_u1:0.3", "--observable", "fourier:1", "--t", "1.0",
    "--depth", "5", "--n-paths", "3000", "--seed", "7",
];

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (i, threads) in ["1", "4", "1"].iter().enumerate() {
        // The output path is echoed, so each run uses the same relative path.
        let cwd = dir.path().join(format!("run{i}"));
        std::fs::create_dir(&cwd).unwrap();
        let mut args = FK.to_vec();
        args.extend(["--output", "fk.json"]);
        let r = dyadic_in(Some(&cwd), &args, &[("DYADIC_THREADS", threads)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        files.push(std::fs::read(cwd.join("fk.json")).unwrap());
    }
    assert!(files[0] == files[1] && files[0] == files[2], "reruns differ");
    let v: Value = serde_json::from_slice(&files[0]).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["seed"], 7);
    assert!(v["result"]["oracle"]["sigma_distance"].as_f64().unwrap() < 4.0);
}

#[test]
fn convergence_csv_carries_config_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |name: &str| {
        let p = dir.path().join(name);
        let mut a = vec![
            "run", "transport-convergence", "--manifold", "sphere2", "--bundle", "levi-civita", "--t", "0.2", "--depths",
            "2..4", "--n-paths", "500", "--seed", "42", "--output",
        ];
        a.push(Box::leak(p.to_str().unwrap().to_string().into_boxed_str()));
        (a, p)
    };
    let (a1, p1) = args("a.csv");
    let (a2, p2) = args("b.csv");
    assert!(dyadic(&a1, &[]).status.success());
    assert!(dyadic(&a2, &[("DYADIC_THREADS", "3")]).status.success());
    let (b1, b2) = (std::fs::read_to_string(&p1).unwrap(), std::fs::read_to_string(&p2).unwrap());
    // Only the echoed output path differs.
    assert_eq!(b1.replace("a.csv", "X"), b2.replace("b.csv", "X"));
    let lines: Vec<&str> = b1.lines().collect();
    assert!(lines[0].starts_with("# dyadic "));
    assert!(lines[1].starts_with("# config {"));
    assert_eq!(lines[2], "k,mean_sq_diff,stderr,rejection_rate,n_paths,seed");
    assert_eq!(lines.len(), 6);
}

#[test]
fn flags_override_file_values_and_json_matches_toml() {
    let dir = tempfile::tempdir().unwrap();
    let toml_cfg = dir.path().join("c.toml");
    let json_cfg = dir.path().join("c.json");
    std::fs::write(&toml_cfg, "kind = \"exhaustion\"\nt = 0.5\ncount = 3\nmanifold = \"euclidean:1\"\n").unwrap();
    std::fs::write(&json_cfg, r#"{"kind": "exhaustion", "t": 0.5, "count": 3, "manifold": "euclidean:1"}"#).unwrap();
    let a = dyadic(&["run", "--config", path_str(&toml_cfg), "--count", "4"], &[]);
    let b = dyadic(&["run", "--config", path_str(&json_cfg), "--count", "4"], &[]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["config"]["t"], 0.5);
    assert_eq!(v["config"]["count"], 4);
    assert_eq!(v["result"]["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn binary_paths_round_trip_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("paths.bin");
    let r = dyadic(
        &[
            "run", "sample-paths", "--manifold", "torus:1,2", "--t", "0.3", "--depth", "3", "--n-paths", "20",
            "--format", "binary", "--output", path_str(&out),
        ],
        &[],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let ens = dyadic_transport::paths::read_binary(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!((ens.len(), ens.depth()), (20, 3));
    let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("paths.bin.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["experiment"], "sample-paths");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn invalid_config_reports_json_error() {
    let r = dyadic(&["run", "feynman-kac", "--t", "-1"], &[]);
    assert_eq!(r.status.code(), Some(2));
    let e = stderr_error(&r);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("t must be positive"));

    let r = dyadic(&["run", "feynman-kac", "--n-paths", "many"], &[]);
    assert_eq!(stderr_error(&r)["error"]["kind"], "usage");

    let r = dyadic(&["run", "heat-kernel", "--manifold", "sphere2", "--n-paths", "10"], &[]);
    assert_eq!(stderr_error(&r)["error"]["kind"], "guard");

    let r = dyadic(&["run", "exhaustion"], &[("DYADIC_THREADS", "zero")]);
    assert_eq!(stderr_error(&r)["error"]["kind"], "config");
}

#[test]
fn empty_suite_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.suite");
    std::fs::write(&p, "# nothing here\n").unwrap();
    let r = dyadic(&["verify", path_str(&p)], &[]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr_error(&r)["error"]["message"].as_str().unwrap().contains("no experiments"));
}

#[test]
fn corrupted_threshold_fails_with_named_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.suite");
    std::fs::write(
        &p,
        r#"
[[experiment]]
name = "exhaustion gap"
config = { kind = "exhaustion", manifold = "euclidean:1", t = 0.25 }
checks = [{ metric = "terminal_gap", max = -1.0 }, { metric = "monotonicity_violations", max = 0.0 }]
"#,
    )
    .unwrap();
    let r = dyadic(&["verify", path_str(&p)], &[]);
    assert_eq!(r.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL") && l.contains("exhaustion gap") && l.contains("terminal_gap")));
    assert!(stdout.contains("1 passed, 1 failed, 0 skipped"));
}

#[test]
fn bundled_suite_passes() {
    let suite = Path::new(env!("CARGO_MANIFEST_DIR")).join("suites/acceptance.suite");
    let r = dyadic(&["verify", path_str(&suite)], &[]);
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(r.status.success(), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    assert!(stdout.lines().any(|l| l.starts_with("SKIP") && l.contains("skipped: no oracle")));
}
