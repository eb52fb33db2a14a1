use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pathspde"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.arg("--out").arg(out).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Header plus numeric rows of a CSV file.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i]).collect()
}

const SCALAR_OBS: &str = r#"
[observation]
a11 = [[0.0]]
a21 = [[1.0]]
b11 = [[1.0]]
b22 = [[1.0]]
lambda = [[1.0]]
x_minus = [0.0]
"#;

#[test]
fn simulate_without_noise_or_drift_is_constant() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "n_nodes = 5\n[model]\ndrift = [[0.0]]\nnoise = [[0.0]]\n[simulate]\nx0 = [1.0]\n",
    );
    let o = run(&["simulate"], Some(&cfg), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("path.csv"));
    assert_eq!(header, ["u", "x_1"]);
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[1] == 1.0));
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "seed = 9\nn_nodes = 65\n[model]\ndrift = [[-1.0, 0.3], [0.0, -0.5]]\nnoise = [[1.0, 0.0], [0.2, 0.7]]\n[simulate]\nx0 = [1.0, -1.0]\n",
    );
    let read = |sub: &str, extra: &[&str]| {
        let out = dir.path().join(sub);
        let mut args = vec!["simulate"];
        args.extend_from_slice(extra);
        let o = run(&args, Some(&cfg), &out);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("path.csv")).unwrap()
    };
    let a = read("a", &[]);
    let b = read("b", &[]);
    let c = read("c", &["--seed", "10"]);
    let d = read("d", &["--seed", "9"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a, d);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("u,x_1,x_2\n"));
    // 17 significant digits
    assert!(text.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,"));
}

#[test]
fn zero_nodes_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "n_nodes = 0\n[model]\ndrift = [[0.0]]\nnoise = [[1.0]]\n[simulate]\nx0 = [1.0]\n",
    );
    let o = run(&["simulate"], Some(&cfg), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid size"), "{}", stderr(&o));
}

#[test]
fn unknown_config_field_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "n_nodes = 9\nn_chains = 4\n");
    let o = run(&["simulate"], Some(&cfg), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_chains"), "{}", stderr(&o));
}

#[test]
fn singular_noise_is_a_numerical_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "n_nodes = 9\n[model]\ndrift = [[0.0]]\nnoise = [[0.0]]\n[conditioning]\nkind = \"fixed_left\"\nx_minus = [0.0]\n[sampler]\nmethod = \"theta\"\ndt = 0.01\nn_steps = 10\nburn_in = 0\n",
    );
    let o = run(&["sample"], Some(&cfg), dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

fn bridge_config(method: &str, n_steps: usize, extra: &str) -> String {
    format!(
        "seed = 4\nn_nodes = 33\n[model]\ndrift = [[0.0]]\nnoise = [[1.0]]\n[conditioning]\nkind = \"bridge\"\nx_minus = [0.3]\nx_plus = [-1.2]\n[sampler]\nmethod = \"{method}\"\nn_steps = {n_steps}\n{extra}"
    )
}

#[test]
fn exact_sampler_recovers_bridge_variance() {
    let dir = TempDir::new().unwrap();
    let body = "seed = 21\nn_nodes = 33\n[model]\ndrift = [[0.0]]\nnoise = [[1.0]]\n[conditioning]\nkind = \"bridge\"\nx_minus = [0.0]\nx_plus = [0.0]\n[sampler]\nmethod = \"precond\"\ntheta = 0.5\ndt = 2.0\nn_steps = 100000\nburn_in = 0\nwrite_samples = false\n";
    let cfg = write_config(dir.path(), "c.toml", body);
    let o = run(&["sample"], Some(&cfg), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_csv(&dir.path().join("stats.csv"));
    let u = column(&h, &rows, "u");
    let var = column(&h, &rows, "var");
    let se = column(&h, &rows, "var_stderr");
    let lag = column(&h, &rows, "lag1");
    let mid = u.iter().position(|&x| x == 0.5).unwrap();
    assert!((var[mid] - 0.25).abs() <= 5.0 * se[mid], "var {} se {}", var[mid], se[mid]);
    let bound = 3.0 / (1e5f64).sqrt();
    assert!((1..32).all(|j| lag[j].abs() <= bound));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_recorded"], 100_000);
    assert_eq!(summary["seed"], 21);
    assert!(summary["acceptance_rate"].is_null());
    assert_eq!(summary["config"]["sampler"]["method"], "precond");
}

#[test]
fn dirichlet_nodes_are_exact_in_every_sample() {
    let dir = TempDir::new().unwrap();
    for (method, extra) in [
        ("theta", "theta = 1.0\ndt = 0.01\nburn_in = 10\n"),
        ("precond", "theta = 0.5\ndt = 0.7\nburn_in = 0\nmh = true\n"),
        ("kl", ""),
    ] {
        let cfg = write_config(dir.path(), &format!("{method}.toml"), &bridge_config(method, 60, extra));
        let out = dir.path().join(method);
        let o = run(&["sample"], Some(&cfg), &out);
        assert!(o.status.success(), "{method}: {}", stderr(&o));
        let (h, rows) = read_csv(&out.join("samples.csv"));
        assert_eq!(h, ["sample", "u", "x_1"]);
        let mut ends = 0;
        for r in &rows {
            if r[1] == 0.0 {
                assert_eq!(r[2], 0.3, "{method}");
                ends += 1;
            } else if r[1] == 1.0 {
                assert_eq!(r[2], -1.2, "{method}");
                ends += 1;
            }
        }
        let recorded = rows.last().unwrap()[0] as usize + 1;
        assert_eq!(ends, 2 * recorded);
        assert_eq!(rows.len(), 33 * recorded);
        if method == "precond" {
            let s: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
            assert_eq!(s["acceptance_rate"], 1.0);
        }
    }
}

#[test]
fn operator_export_is_matrix_market() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &bridge_config("kl", 5, "export_operator = true\nwrite_samples = false\n"),
    );
    let o = run(&["sample"], Some(&cfg), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("operator.mtx")).unwrap();
    let size = text.lines().find(|l| !l.starts_with('%')).unwrap();
    let dims: Vec<usize> = size.split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(&dims[..2], &[33, 33]);
}

fn observation_config(n_nodes: usize, y_file: &str, sampler: &str) -> String {
    format!("seed = 17\nn_nodes = {n_nodes}\n{SCALAR_OBS}[conditioning]\nkind = \"observation\"\ny_file = \"{y_file}\"\n{sampler}")
}

#[test]
fn observation_sample_mean_matches_smoother() {
    let dir = TempDir::new().unwrap();
    let sampler = "[sampler]\nmethod = \"theta\"\ntheta = 1.0\ndt = 0.01\nn_steps = 50\nburn_in = 0\nwrite_samples = false\n";
    let cfg = write_config(dir.path(), "c.toml", &observation_config(257, "sim/path.csv", sampler));
    let o = run(&["simulate"], Some(&cfg), &dir.path().join("sim"));
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, _) = read_csv(&dir.path().join("sim/path.csv"));
    assert_eq!(h, ["u", "x_1", "y_1"]);
    let o = run(&["sample"], Some(&cfg), &dir.path().join("sample"));
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["smooth"], Some(&cfg), &dir.path().join("smooth"));
    assert!(o.status.success(), "{}", stderr(&o));
    let (hs, rs) = read_csv(&dir.path().join("sample/stats.csv"));
    let (hm, rm) = read_csv(&dir.path().join("smooth/smooth.csv"));
    assert_eq!(hm, ["u", "xhat", "xtilde_sweep", "xtilde_bvp", "diff"]);
    let a = column(&hs, &rs, "target_mean");
    let b = column(&hm, &rm, "xtilde_bvp");
    let sweep = column(&hm, &rm, "xtilde_sweep");
    assert_eq!(a.len(), 257);
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-6));
    assert!(a.iter().zip(&sweep).all(|(x, y)| (x - y).abs() <= 1e-3));
}

#[test]
fn smoother_disagreement_shrinks_under_refinement() {
    let dir = TempDir::new().unwrap();
    let mut worst = Vec::new();
    for n in [257, 1025] {
        let cfg = write_config(dir.path(), &format!("c{n}.toml"), &observation_config(n, &format!("sim{n}/path.csv"), ""));
        let o = run(&["simulate"], Some(&cfg), &dir.path().join(format!("sim{n}")));
        assert!(o.status.success(), "{}", stderr(&o));
        let out = dir.path().join(format!("smooth{n}"));
        let o = run(&["smooth"], Some(&cfg), &out);
        assert!(o.status.success(), "{}", stderr(&o));
        let (h, r) = read_csv(&out.join("smooth.csv"));
        worst.push(column(&h, &r, "diff").iter().fold(0.0f64, |m, d| m.max(d.abs())));
    }
    assert!(worst[0] <= 1e-3, "{worst:?}");
    assert!(worst[1] <= 2.5e-4, "{worst:?}");
}

#[test]
fn smoothing_zero_data_gives_zero() {
    let dir = TempDir::new().unwrap();
    let n = 33;
    let mut y = String::from("u,y_1\n");
    for j in 0..n {
        y.push_str(&format!("{:.16e},0\n", j as f64 / (n - 1) as f64));
    }
    fs::write(dir.path().join("y.csv"), y).unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("n_nodes = {n}\n{SCALAR_OBS}"));
    let o = run(&["smooth", "--y", dir.path().join("y.csv").to_str().unwrap()], Some(&cfg), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_csv(&dir.path().join("smooth.csv"));
    assert_eq!(rows.len(), n);
    assert!(rows.iter().all(|r| r[1..].iter().all(|&v| v == 0.0)));
}

#[test]
fn smoothing_on_a_different_grid_is_rejected() {
    let dir = TempDir::new().unwrap();
    let sim = write_config(dir.path(), "sim.toml", &observation_config(65, "p/path.csv", ""));
    assert!(run(&["simulate"], Some(&sim), &dir.path().join("p")).status.success());
    let cfg = write_config(dir.path(), "c.toml", &observation_config(33, "p/path.csv", ""));
    let o = run(&["smooth"], Some(&cfg), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid mismatch"), "{}", stderr(&o));
}

#[test]
fn default_verification_suite_passes() {
    let dir = TempDir::new().unwrap();
    let o = run(&["verify"], None, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["all_ok"], true);
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() > 10);
    for c in checks {
        assert!(c["name"].is_string() && c["threshold"].is_number() && c["measured"].is_number());
    }
    let controls: Vec<&Value> = checks.iter().filter(|c| c["expected_fail"] == true).collect();
    assert!(!controls.is_empty());
    assert!(controls.iter().all(|c| c["passed"] == false && c["ok"] == true));
}

#[test]
fn verification_suite_accepts_a_config_model() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "n_nodes = 33\n[model]\ndrift = [[-1.0, 0.5], [-0.2, -0.8]]\nnoise = [[1.0, 0.0], [0.3, 1.2]]\n",
    );
    let o = run(&["verify"], Some(&cfg), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["model"]["drift"][0][1], 0.5);
}
