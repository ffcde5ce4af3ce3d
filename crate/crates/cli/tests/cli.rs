use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const POLY: &str = "[model]\nkind = \"polytrope\"\nmu = 0.5\n";

fn flatvp(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_flatvp"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn solved(dir: &Path) {
    let o = flatvp(dir, &format!("{POLY}[solve]\nmass = 1.0\n"), &["solve"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn validate_polytrope() {
    let d = TempDir::new().unwrap();
    let o = flatvp(d.path(), POLY, &["validate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
}

#[test]
fn concave_custom_table_fails_q4() {
    let d = TempDir::new().unwrap();
    let n = 200;
    let f: Vec<f64> = (0..n).map(|i| 1e-3 * 1e6f64.powf(i as f64 / (n - 1) as f64)).collect();
    let mut q: Vec<f64> = f.iter().map(|x| x * x * x).collect();
    for i in 90..110 {
        q[i] = q[90] + (q[110] - q[90]) * ((f[i] - f[90]) / (f[110] - f[90])).sqrt();
    }
    let mut table = String::from("f,Q\n");
    for (a, b) in f.iter().zip(&q) {
        writeln!(table, "{a:e},{b:e}").unwrap();
    }
    std::fs::write(d.path().join("q.csv"), table).unwrap();
    let cfg = "[model]\nkind = \"custom\"\ntable = \"q.csv\"\nF0 = 1.0\nmu1 = 0.5\nmu2 = 0.5\nmu3 = 0.5\n\
               C1 = 1.0\nC2 = 1.0\nC3 = 0.5\nC4 = 2.0\n";
    let o = flatvp(d.path(), cfg, &["validate"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Q4: FAIL"));
}

#[test]
fn missing_exponent_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    let o = flatvp(d.path(), "[model]\nkind = \"polytrope\"\n", &["validate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("mu"));
}

#[test]
fn zero_mass_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    let o = flatvp(d.path(), &format!("{POLY}[solve]\nmass = 0.0\n"), &["solve"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn unknown_field_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    let o = flatvp(d.path(), &format!("{POLY}[solve]\nmas = 1.0\n"), &["solve"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn solve_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    solved(a.path());
    solved(b.path());
    for name in ["steady.csv", "steady.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("steady.json")).unwrap()).unwrap();
    assert!(v["E0"].as_f64().unwrap() < 0.0);
}

#[test]
fn scaling_with_equal_masses_passes() {
    let d = TempDir::new().unwrap();
    let o = flatvp(
        d.path(),
        &format!("{POLY}[scaling]\nm1 = 1.0\nm2 = 1.0\nsamples = 4\n"),
        &["scaling"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(d.path().join("scaling.json").exists());
}

#[test]
fn split_beyond_support_has_no_exterior() {
    let d = TempDir::new().unwrap();
    solved(d.path());
    let o = flatvp(
        d.path(),
        &format!("{POLY}[split]\nstate = \"steady.csv\"\nfractions = [0.5, 2.0]\n"),
        &["split"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("split.json")).unwrap()).unwrap();
    let outer = v["splits"].as_array().unwrap().last().unwrap();
    assert_eq!(outer["report"]["exterior_mass"].as_f64().unwrap(), 0.0);
}

#[test]
fn stale_state_is_rejected() {
    let d = TempDir::new().unwrap();
    solved(d.path());
    let path = d.path().join("steady.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    // nudge one density value so the grid hash no longer matches
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let i = lines.iter().position(|l| l.starts_with("r,")).unwrap() + 10;
    let mut cols: Vec<f64> = lines[i].split(',').map(|c| c.parse().unwrap()).collect();
    cols[0] *= 1.0 + 1e-6;
    lines[i] = cols.iter().map(|c| format!("{c:.16e}")).collect::<Vec<_>>().join(",");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = flatvp(
        d.path(),
        &format!("{POLY}[split]\nstate = \"steady.csv\"\nfractions = [0.5]\n"),
        &["split"],
    );
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn short_evolve_writes_time_series() {
    let d = TempDir::new().unwrap();
    solved(d.path());
    let o = flatvp(
        d.path(),
        &format!("{POLY}[evolve]\nstate = \"steady.csv\"\nparticles = 5000\nduration = 0.2\noutput_every = 10\n"),
        &["evolve", "--seed", "3"],
    );
    // a small ensemble may fail the drift checks, but never with a usage error
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    let ts = std::fs::read_to_string(d.path().join("timeseries.csv")).unwrap();
    let rows = ts.lines().filter(|l| !l.starts_with('#')).count();
    assert!(rows >= 3, "{rows} rows");
    assert!(d.path().join("evolve.json").exists());
}

#[test]
fn potential_table_of_a_disc() {
    let d = TempDir::new().unwrap();
    let mut csv = String::from("r,rho\n");
    for i in 0..200 {
        let r = 2.0 * i as f64 / 199.0;
        writeln!(csv, "{r},{}", (1.0 - r * r).max(0.0)).unwrap();
    }
    std::fs::write(d.path().join("disc.csv"), csv).unwrap();
    let o = flatvp(d.path(), "", &["potential-table", "--input", d.path().join("disc.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = std::fs::read_to_string(d.path().join("potential.csv")).unwrap();
    let vals: Vec<f64> = out
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('r'))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals.len(), 200);
    assert!(vals.iter().all(|&u| u < 0.0));
    assert!(vals.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn too_short_density_table_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    std::fs::write(d.path().join("t.csv"), "r,rho\n0,1\n0.5,1\n1,1\n1.5,0\n").unwrap();
    let o = flatvp(d.path(), "", &["potential-table", "--input", d.path().join("t.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
