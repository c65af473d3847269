use std::path::Path;
use std::process::{Command, Output};

const ENERGY: &str = r#"
seed = 3

[kernel]
form = "fractional"
dim = 2
s = 0.5

[domain]
radius = 1.0
margin = 0.5

[grid]
h = 0.0625

[field]
source = "halfspace"
normal = [0.0, 1.0]
"#;

const GAMMA: &str = r#"
[kernel]
form = "indicator"
dim = 2
radius = 1.0

[domain]
radius = 1.0
margin = 0.5

[grid]
h = 0.025

[field]
source = "halfspace"
normal = [0.0, 1.0]

[gamma]
eps = [0.4, 0.2]
"#;

fn nlperim(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.in.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_nlperim"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn valid_energy_config_writes_one_row_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = nlperim(dir.path(), ENERGY, &["energy", "--deterministic", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert!(text(&o.stdout).starts_with("energy: J = "));
    let csv = std::fs::read_to_string(out.join("energy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("kernel,dim,h,cells,interior_cells,interior_term,cross_term,tail_bound,total,roundoff\n"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "energy");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    // the stored config reproduces the run byte for byte
    let again = dir.path().join("again");
    let stored = std::fs::read_to_string(out.join("config.toml")).unwrap();
    let o = nlperim(dir.path(), &stored, &["energy", "--deterministic", "--out", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(again.join("energy.csv")).unwrap(), csv.into_bytes());
}

#[test]
fn fractional_order_out_of_range_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = nlperim(dir.path(), ENERGY, &["energy", "--set", "kernel.s=1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = text(&o.stderr);
    assert!(err.contains("kernels:") && err.contains("(0,1)"), "{err}");
}

#[test]
fn coarse_gamma_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = nlperim(dir.path(), GAMMA, &["gamma", "--set", "gamma.eps=[0.4,0.1]", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("eps_min/8"), "{}", text(&o.stderr));
    let o = nlperim(dir.path(), GAMMA, &["gamma", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(out.join("gamma.csv")).unwrap();
    assert!(csv.starts_with("eps,j1,j2,j,j0,relative_error\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn malformed_configs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    for (cfg, args) in [
        (ENERGY, vec!["energy", "--set", "grid.spacing=0.1"]),
        (ENERGY, vec!["energy", "--set", "gamma.eps=[0.2]"]),
        (ENERGY, vec!["energy", "--set", "domain.center=[0.0]"]),
        (ENERGY, vec!["energy", "--set", "field.source=file", "--set", "field.path=missing.csv"]),
        (ENERGY, vec!["minimize", "--reference", "plane:0,1"]),
        ("[kernel", vec!["energy"]),
    ] {
        let mut args = args.clone();
        args.extend(["--out", o]);
        let r = nlperim(dir.path(), cfg, &args);
        assert_eq!(r.status.code(), Some(1), "{args:?}: {}", text(&r.stderr));
        assert!(text(&r.stderr).starts_with("error: "));
    }
}

#[test]
fn minimized_field_reloads_with_its_rounded_perimeter() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("min");
    let o = nlperim(
        dir.path(),
        ENERGY,
        &["minimize", "--reference", "halfspace:0,1", "--out", out.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let values: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let rounded_perimeter: f64 = values[3].parse().unwrap();
    assert_eq!(values[4], "0");
    let e = dir.path().join("e");
    let o = nlperim(
        dir.path(),
        ENERGY,
        &[
            "energy",
            "--set",
            "field.source=file",
            "--set",
            &format!("field.path={}", out.join("rounded.csv").display()),
            "--out",
            e.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let row = std::fs::read_to_string(e.join("energy.csv")).unwrap();
    let total: f64 = row.lines().nth(1).unwrap().split(',').nth(8).unwrap().parse().unwrap();
    assert!((total - rounded_perimeter).abs() <= 1e-12 * total);
}

#[test]
fn halfspace_certificate_passes_for_a_compact_kernel() {
    let cfg = ENERGY.replace("form = \"fractional\"", "form = \"indicator\"").replace("s = 0.5", "radius = 0.5");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal");
    let o = nlperim(dir.path(), &cfg, &["calibrate", "--set", "calibrate.competitors=4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", text(&o.stdout), text(&o.stderr));
    assert!(text(&o.stdout).starts_with("calibrate: PASS"));
    let csv = std::fs::read_to_string(out.join("certificate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (name, task) in [
        ("energy", nlperim::Task::Energy),
        ("minimize", nlperim::Task::Minimize),
        ("calibrate", nlperim::Task::Calibrate),
        ("gamma", nlperim::Task::Gamma),
    ] {
        let loaded = nlperim::config::load(Some(&root.join(format!("{name}.toml"))), &[]).unwrap();
        loaded.config.validate_for(task).unwrap();
        loaded.config.kernel().unwrap();
        loaded.config.grid().unwrap();
    }
}
