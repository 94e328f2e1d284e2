use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .display()
        .to_string()
}

fn irtul(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irtul"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> f64 {
    text.split_whitespace()
        .find_map(|w| w.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .parse()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn trace_isovelocity_diagonal() {
    let o = irtul(&[
        "trace",
        "--svp",
        &data("isovelocity.csv"),
        "--angle",
        "45",
        "--from",
        "0",
        "--to",
        "1000",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "t=0.942809042 h=1000.000000000\n");
}

#[test]
fn trace_below_turning_limit_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let svp = write(dir.path(), "up.csv", "0,1480\n1000,1500\n");
    let o = irtul(&[
        "trace", "--svp", &svp, "--angle", "5", "--from", "0", "--to", "1000",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("9.36"), "{err}");
}

#[test]
fn io_and_parse_failures_exit_one() {
    let o = irtul(&[
        "trace",
        "--svp",
        "/nonexistent/svp.csv",
        "--angle",
        "45",
        "--from",
        "0",
        "--to",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let svp = write(dir.path(), "bad.csv", "0,1500\nten,1490\n");
    let o = irtul(&[
        "trace", "--svp", &svp, "--angle", "45", "--from", "0", "--to", "10",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_of_range_depth_exits_two() {
    let o = irtul(&[
        "trace",
        "--svp",
        &data("isovelocity.csv"),
        "--angle",
        "45",
        "--from",
        "0",
        "--to",
        "4000",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_inverts_trace() {
    let svp = data("isovelocity.csv");
    let o = irtul(&[
        "solve",
        "--svp",
        &svp,
        "--mode",
        "time",
        "--value",
        "0.942809042",
        "--from",
        "0",
        "--to",
        "1000",
    ]);
    assert!(o.status.success());
    assert!((field(&stdout(&o), "theta0_deg") - 45.0).abs() < 1e-4);

    let canonical = data("canonical_svp.csv");
    for angle in ["20", "37.5", "80"] {
        let t = stdout(&irtul(&[
            "trace", "--svp", &canonical, "--angle", angle, "--from", "0", "--to", "2500",
        ]));
        for (mode, key) in [("time", "t"), ("range", "h")] {
            let v = field(&t, key).to_string();
            let s = irtul(&[
                "solve", "--svp", &canonical, "--mode", mode, "--value", &v, "--from", "0", "--to",
                "2500",
            ]);
            assert!(s.status.success());
            let theta = field(&stdout(&s), "theta0_deg").to_string();
            let back = stdout(&irtul(&[
                "trace", "--svp", &canonical, "--angle", &theta, "--from", "0", "--to", "2500",
            ]));
            let tol = if mode == "time" { 10e-6 } else { 0.1 };
            assert!(
                (field(&back, key) - field(&t, key)).abs() <= tol + 1e-9,
                "{mode} {angle}"
            );
        }
    }
}

#[test]
fn simplify_modes() {
    let dir = tempfile::tempdir().unwrap();
    let kinked = write(dir.path(), "kinked.csv", "0,1500\n100,1480\n200,1490\n");
    let out = dir.path().join("out.csv").display().to_string();
    let o = irtul(&["simplify", "--svp", &kinked, "--points", "3", "--out", &out]);
    assert!(o.status.success());
    assert_eq!(field(&stdout(&o), "rmse"), 0.0);
    let back = irtul::Svp::parse_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(back.len(), 3);

    let o = irtul(&[
        "simplify",
        "--svp",
        &data("canonical_svp.csv"),
        "--points",
        "8",
        "--out",
        &out,
    ]);
    assert!(o.status.success());
    let simple = irtul::Svp::parse_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(simple.len(), 8);
    let expected = irtul::svp::profile_rmse(&irtul::sim::canonical_profile(), &simple).unwrap();
    assert!((field(&stdout(&o), "rmse") - expected).abs() < 1e-9);

    let o = irtul(&[
        "simplify",
        "--svp",
        &data("canonical_svp.csv"),
        "--rmse",
        "0.05",
        "--out",
        &out,
    ]);
    assert!(o.status.success());
    assert!(field(&stdout(&o), "rmse") < 0.05);

    let o = irtul(&["simplify", "--svp", &kinked, "--points", "9", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn localize_fixture() {
    let args = [
        "localize",
        "--svp",
        &data("fixtures/two_layer_svp.csv"),
        "--measurements",
        &data("fixtures/noiseless_measurements.csv"),
        "--verbose",
    ];
    let o = irtul(&args);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("iter=1 ")));
    let last = text.lines().rev().nth(1).unwrap();
    let (x, y, z) = (field(last, "x"), field(last, "y"), field(last, "z"));
    let d = ((x - 5000.0).powi(2) + (y - 5000.0).powi(2) + (z - 1200.0).powi(2)).sqrt();
    assert!(d < 0.5, "{text}");
    assert!(text.contains("converged=true"));
}

#[test]
fn localize_needs_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(
        dir.path(),
        "m.csv",
        "ref_x,ref_y,ref_z,one_way_time_s\n0,0,0,1\n10,0,0,1\n0,10,0,1\n",
    );
    let o = irtul(&[
        "localize",
        "--svp",
        &data("isovelocity.csv"),
        "--measurements",
        &m,
    ]);
    assert_eq!(o.status.code(), Some(2));
    let m = write(dir.path(), "bad.csv", "0,0,0\n");
    let o = irtul(&[
        "localize",
        "--svp",
        &data("isovelocity.csv"),
        "--measurements",
        &m,
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = std::fs::read_to_string(data("reference_scenario.toml"))
        .unwrap()
        .replace(
            "target_nodes_to_be_located = 200",
            "target_nodes_to_be_located = 16",
        );
    let scenario = write(dir.path(), "s.toml", &scenario);
    let svp = data("canonical_svp.csv");
    let run = |out: &str, extra: &[&str]| {
        let out = dir.path().join(out).display().to_string();
        let mut args = vec![
            "experiment",
            "--scenario",
            &scenario,
            "--svp",
            &svp,
            "--out-dir",
            &out,
        ];
        args.extend_from_slice(extra);
        let o = irtul(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", &["--no-timing"]);
    let b = run("b", &["--no-timing", "--serial"]);
    let per_a = std::fs::read(Path::new(&a).join("per_target.csv")).unwrap();
    assert_eq!(
        per_a,
        std::fs::read(Path::new(&b).join("per_target.csv")).unwrap()
    );
    let summary = std::fs::read_to_string(Path::new(&a).join("summary.csv")).unwrap();
    assert_eq!(
        summary.lines().next(),
        Some("method,mean_rmse_m,std_m,mean_wall_us")
    );
    assert_eq!(summary.lines().count(), 4);
    let c = run("c", &["--no-timing", "--seed", "7"]);
    assert_ne!(
        per_a,
        std::fs::read(Path::new(&c).join("per_target.csv")).unwrap()
    );
}

#[test]
fn bad_scenario_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", "surface_bouys = 25\n");
    let o = irtul(&[
        "experiment",
        "--scenario",
        &scenario,
        "--svp",
        &data("canonical_svp.csv"),
        "--out-dir",
        &dir.path().display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn benchmark_reports_both_profiles() {
    let o = irtul(&[
        "benchmark",
        "--svp",
        &data("canonical_svp.csv"),
        "--repeats",
        "1",
        "--targets",
        "2",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("original points=30"));
    assert!(text.contains("simplified points=8"));
    assert!(text.contains("layers=29 evals_per_trace=29"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(irtul(&["trace"]).status.code(), Some(2));
    assert_eq!(irtul(&["frobnicate"]).status.code(), Some(2));
    assert!(irtul(&["--help"]).status.success());
}
