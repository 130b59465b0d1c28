use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stablex::output::decode_occupancy;
use stablex_core::Window;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stablex"));
    c.env_remove("STABLEX_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .display()
        .to_string()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn gen_env(dir: &Path) -> String {
    let path = dir.join("e.env").display().to_string();
    let o = run(&[
        "env",
        "gen",
        "--alpha",
        "0.5",
        "--c0",
        "1.5",
        "--resolution",
        "16",
        "--n",
        "8",
        "--lo",
        "-8",
        "--hi",
        "8",
        "--seed",
        "3",
        "-o",
        &path,
    ]);
    assert!(o.status.success(), "{o:?}");
    path
}

#[test]
fn env_gen_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_env(dir.path());
    let o = run(&["env", "inspect", &path]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for needle in ["alpha        0.5", "c0           1.5", "window       [-64, 64]", "min c_x", "max c_x", "sha256"] {
        assert!(text.contains(needle), "{needle} not in\n{text}");
    }
    let (env, header) = stablex::load_environment(Path::new(&path)).unwrap();
    assert!(text.contains(&header.sha256));
    assert!(text.contains(&format!("{:.16e}", env.min_conductance())));
}

#[test]
fn usage_errors_exit_with_one() {
    let o = run(&["bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&["walk", "kernel"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("quick.json")).unwrap().replace("\"alpha\": 0.5", "\"alpha\": 1.2");
    let path = dir.path().join("bad.json");
    std::fs::write(&path, text).unwrap();
    let o = run(&["hydro", "run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment.law.alpha"));
    let missing = run(&["hydro", "run", "--config", "/nonexistent.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn failed_check_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(
        &path,
        r#"{"scaling": {"model": {"kind": "constant"}, "ladder": [8, 16, 32, 64], "environments": 50, "bootstrap": 20, "seed": 0},
            "tolerances": {"scaling_slope": 0.0}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = run(&["--out", out.to_str().unwrap(), "scaling", "run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    // The report is still written.
    assert!(out.join("scaling.json").exists());
}

#[test]
fn hydro_run_matches_golden_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "hydro", "run", "--config", &config("quick.json")]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let rows = std::fs::read_to_string(dir.path().join("hydro_rows.csv")).unwrap();
    assert_eq!(rows, golden("quick_rows.csv"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, threads) in dirs.iter().zip(["1", "3"]) {
        let out = d.path().to_str().unwrap();
        for cmd in [["hydro", "run"], ["excl", "sim"]] {
            let o = run(&["--threads", threads, "--out", out, cmd[0], cmd[1], "--config", &config("quick.json")]);
            assert_eq!(o.status.code(), Some(0), "{o:?}");
        }
    }
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    assert_eq!(a.len(), b.len());
    assert!(a.len() >= 6);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn every_output_embeds_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(run(&["--out", out, "hydro", "run", "--config", &config("quick.json")]).status.success());
    assert!(run(&["--out", out, "excl", "sim", "--config", &config("quick.json")]).status.success());
    let mut hashes = Vec::new();
    for f in files(dir.path()) {
        let text = std::fs::read_to_string(&f).unwrap();
        match f.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                let mut lines = text.lines();
                let hash = lines.next().unwrap().strip_prefix("# config_sha256=").unwrap().to_string();
                assert_eq!(lines.next().unwrap(), "# seed=5");
                hashes.push(hash);
            }
            Some("json") => {
                let v: serde_json::Value = serde_json::from_str(&text).unwrap();
                assert_eq!(v["seed"], 5);
                hashes.push(v["config_hash"].as_str().unwrap().to_string());
            }
            _ => panic!("unexpected file {}", f.display()),
        }
    }
    assert!(hashes.windows(2).all(|w| w[0] == w[1] && w[0].len() == 64));
}

#[test]
fn snapshots_decode_to_conserved_configurations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(run(&["--out", out, "excl", "sim", "--config", &config("quick.json"), "--level", "16"]).status.success());
    let text = std::fs::read_to_string(dir.path().join("excl_snapshots.csv")).unwrap();
    let w = Window::new(-96, 96).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for line in text.lines().skip(3) {
        let f: Vec<&str> = line.split(',').collect();
        let c = decode_occupancy(w, f[3], None).unwrap();
        let prev = *counts.entry(f[0].to_string()).or_insert(c.count());
        assert_eq!(prev, c.count());
        assert_eq!(stablex::output::encode_occupancy(&c), f[3]);
    }
    assert_eq!(counts.len(), 50);
    let bad = run(&["--out", out, "excl", "sim", "--config", &config("quick.json"), "--level", "12"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn walk_commands_write_frames() {
    let dir = tempfile::tempdir().unwrap();
    let env = gen_env(dir.path());
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let k = run(&["--out", out, "walk", "kernel", "--env", &env, "--t", "0.01", "--x0", "-3"]);
    assert!(k.status.success(), "{k:?}");
    let text = std::fs::read_to_string(Path::new(out).join("kernel.csv")).unwrap();
    let mut lines = text.lines().skip(2);
    assert_eq!(lines.next().unwrap(), "x,x_over_n,value");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 129);
    assert_eq!(rows[0][0], -64.0);
    assert_eq!(rows[0][1], -8.0);
    let mass: f64 = rows.iter().map(|r| r[2]).sum();
    assert!((mass - 1.0).abs() < 1e-10);
    let r = run(&["--out", out, "walk", "resolvent", "--env", &env, "--lambda", "2"]);
    assert!(r.status.success(), "{r:?}");
    let bad_g = run(&["--out", out, "walk", "resolvent", "--env", &env, "--lambda", "2", "--g", "{}"]);
    assert_eq!(bad_g.status.code(), Some(1));
    let s = run(&["--out", out, "walk", "sim", "--env", &env, "--x0", "0", "--t", "0.01", "--replicas", "100", "--seed", "1"]);
    assert!(s.status.success(), "{s:?}");
    let c = run(&["--out", out, "stone", "compare", "--env", &env, "--x0", "0", "--t", "0.2", "--replicas", "2000", "--seed", "4"]);
    assert_eq!(c.status.code(), Some(0), "{c:?}");
    assert!(Path::new(out).join("stone.json").exists());
}

#[test]
fn report_render_reproduces_tables_and_script() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(run(&["--out", out.to_str().unwrap(), "hydro", "run", "--config", &config("quick.json")]).status.success());
    let rendered = dir.path().join("rendered");
    let o = run(&[
        "--out",
        rendered.to_str().unwrap(),
        "report",
        "render",
        out.join("hydro.json").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    for name in ["hydro_rows.csv", "hydro_summary.csv"] {
        assert_eq!(std::fs::read(out.join(name)).unwrap(), std::fs::read(rendered.join(name)).unwrap());
    }
    let script = rendered.join("plot_hydro.py");
    assert!(script.exists());
    if let Ok(py) = Command::new("python3")
        .args(["-c", "import ast, sys; ast.parse(open(sys.argv[1]).read())", script.to_str().unwrap()])
        .output()
    {
        assert!(py.status.success(), "{py:?}");
    }
    assert!(run(&["--out", rendered.to_str().unwrap(), "report", "render", out.join("cauchy.json").to_str().unwrap()])
        .status
        .success());
}

#[test]
fn output_directory_falls_back_to_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("STABLEX_OUT", dir.path())
        .args(["hydro", "run", "--config", &config("quick.json")])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("hydro.json").exists());
}
