use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_magnonsim"));
    c.env_remove("MAGNONSIM_CONFIG");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], cfg: Option<&Path>, out: &Path) -> Output {
    let mut c = bin();
    c.args(args).arg("--out").arg(out);
    if let Some(p) = cfg {
        c.arg("--config").arg(p);
    }
    c.output().unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&o.stderr)))
}

const SMALL_MAP: &str = "[params]\nb_field = 5.0\n\n[[sweep]]\nparameter = \"rabi\"\nmin = 14.0\nmax = 14.0\nsteps = 1\n\n[[sweep]]\nparameter = \"gamma_eff\"\nmin = 18.0\nmax = 18.0\nsteps = 1\n";

#[test]
fn single_cell_map_gives_one_row_with_units() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_MAP);
    let out = dir.path().join("nested/out");
    let o = run(&["cool-map"], Some(&cfg), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("cool_map.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("rabi [MHz],gamma_eff [MHz],"));
    assert!(!text.contains('\r'));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["params"]["b_field"], 5.0);
    assert_eq!(meta["command"], "cool-map");
}

#[test]
fn json_format_and_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_MAP);
    let out = dir.path().join("o");
    let o = run(&["cool-map", "--format", "json", "--plot-script"], Some(&cfg), &out);
    assert!(o.status.success());
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("cool_map.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 1);
    assert!(rows[0]["performance [1]"].as_f64().unwrap() > 100.0);
    let script = std::fs::read_to_string(out.join("plot_cool_map.py")).unwrap();
    assert!(script.contains("cool_map.json"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[thermometry]\nsteps = 11\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["thermometry", "--workers", "1"], Some(&cfg), &a).status.success());
    assert!(run(&["thermometry", "--workers", "2"], Some(&cfg), &b).status.success());
    for f in ["thermometry.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn infinite_beta_row_has_zero_variance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[thermometry]\nsteps = 2\ninclude_infinite = true\n");
    let out = dir.path().join("o");
    assert!(run(&["thermometry"], Some(&cfg), &out).status.success());
    let text = std::fs::read_to_string(out.join("thermometry.csv")).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("inf,"));
    assert_eq!(last.split(',').nth(2).unwrap(), "0");
}

#[test]
fn single_point_spectrum_is_scalar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[drive]\nrabi = 3.3\n[spectrum]\ndelta_min = 0.0\ndelta_max = 0.0\ntau_max = 0.0\npoor_cooling = false\ncooled_sigma = 7.0\n",
    );
    let out = dir.path().join("o");
    let o = run(&["spectrum"], Some(&cfg), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["summary"]["p_down"], 0.0);
}

#[test]
fn config_errors_exit_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let bad = write(dir.path(), "bad.toml", "[params]\nspin = 1.0\n");
    let o = run(&["cool-map"], Some(&bad), &out);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("params.spin"));

    let malformed = write(dir.path(), "m.toml", "[params\n");
    assert_eq!(run(&["cool-map"], Some(&malformed), &out).status.code(), Some(2));

    let missing = dir.path().join("nope.toml");
    assert_eq!(run(&["cool-map"], Some(&missing), &out).status.code(), Some(2));

    let o = bin().args(["cool-map", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // the whole grid lies above the largest reachable linewidth Γ0/4
    let cfg = write(
        dir.path(),
        "c.toml",
        "[[sweep]]\nparameter = \"gamma_eff\"\nmin = 40.0\nmax = 50.0\nsteps = 2\n\n[[sweep]]\nparameter = \"rabi\"\nmin = 5.0\nmax = 6.0\nsteps = 2\n",
    );
    let o = run(&["cool-map"], Some(&cfg), &dir.path().join("o"));
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "numerical");
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[thermometry]\nsteps = 3\ninclude_infinite = false\n");
    let out = dir.path().join("o");
    let o = bin()
        .env("MAGNONSIM_CONFIG", &cfg)
        .args(["thermometry", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("thermometry.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}
