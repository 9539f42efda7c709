use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rieszwolff"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn params_n2() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/params_n2.json")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn cantor_file(dir: &TempDir, depth: u32) -> PathBuf {
    let m = dir.path().join(format!("cantor{depth}.json"));
    ok(&["generate", "--d", "2", "--s", "1.5", "--depth", &depth.to_string(), "--out", p(&m)]);
    m
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn generate_writes_four_to_the_depth_atoms() {
    let dir = TempDir::new().unwrap();
    let m = cantor_file(&dir, 3);
    let v = json(&m);
    assert_eq!(v["atoms"].as_array().unwrap().len(), 64);
    assert_eq!(v["d"], 2);
}

#[test]
fn riesz_grid_has_one_row_per_target() {
    let dir = TempDir::new().unwrap();
    let m = cantor_file(&dir, 3);
    let out = ok(&["riesz", "--measure", p(&m), "--targets", "grid:16x16:margin=0.1", "--mode", "direct"]);
    assert_eq!(out.lines().next().unwrap(), "x1,x2,R1,R2,error_bound");
    assert_eq!(rows(&out).len(), 256);
}

#[test]
fn fast_mode_stays_within_its_bound() {
    let dir = TempDir::new().unwrap();
    let m = cantor_file(&dir, 5);
    let args = |mode: &'static str| {
        vec![
            "riesz".to_string(),
            "--measure".into(),
            p(&m).into(),
            "--targets".into(),
            "grid:12x12:margin=0.3".into(),
            "--mode".into(),
            mode.into(),
            "--tol".into(),
            "1e-4".into(),
        ]
    };
    let direct = rows(&ok(&args("direct").iter().map(String::as_str).collect::<Vec<_>>()));
    let fast = rows(&ok(&args("fast").iter().map(String::as_str).collect::<Vec<_>>()));
    assert_eq!(direct.len(), fast.len());
    for (d, f) in direct.iter().zip(&fast) {
        let err = ((d[2] - f[2]).powi(2) + (d[3] - f[3]).powi(2)).sqrt();
        assert!(err <= f[4] * (1.0 + 1e-9) + 1e-12, "{err} > {}", f[4]);
    }
}

#[test]
fn targets_from_a_csv_file() {
    let dir = TempDir::new().unwrap();
    let m = cantor_file(&dir, 2);
    let t = dir.path().join("t.csv");
    std::fs::write(&t, "x,y\n2.0,2.0\n-1.0,0.5\n").unwrap();
    let out = ok(&["wolff", "--measure", p(&m), "--targets", p(&t), "--gauge", "power:p=2"]);
    let r = rows(&out);
    assert_eq!(r.len(), 2);
    assert_eq!(r[0][..2], [2.0, 2.0]);
    assert!(r.iter().all(|row| row[2] > 0.0));
}

#[test]
fn outputs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for f in [&a, &b] {
        ok(&["--seed", "7", "generate", "--depth", "3", "--jitter", "--out", p(f)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let s1 = ok(&["--seed", "3", "scales", "--measure", p(&a), "--dump-intervals", "--samples", "4"]);
    let s2 = ok(&["--seed", "3", "--threads", "1", "scales", "--measure", p(&a), "--dump-intervals", "--samples", "4"]);
    assert_eq!(s1, s2);
    let v: Value = serde_json::from_str(&s1).unwrap();
    assert_eq!(v["intervals"].as_array().unwrap().len(), 4);
}

#[test]
fn wolff_energy_line() {
    let dir = TempDir::new().unwrap();
    let m = cantor_file(&dir, 2);
    let out = ok(&["wolff", "--measure", p(&m), "--energy"]);
    let last = out.lines().last().unwrap();
    let e: f64 = last.strip_prefix("# energy=").unwrap().parse().unwrap();
    assert!(e > 0.0 && e.is_finite());
    assert_eq!(rows(&out).len(), 16);
}

#[test]
fn capacity_report_with_comparison() {
    let dir = TempDir::new().unwrap();
    let m = cantor_file(&dir, 3);
    let out = ok(&["capacity", "--set", p(&m), "--probes", "grid:12x12:margin=0.2", "--compare"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["estimate"]["value"].as_f64().unwrap() > 0.0);
    assert_eq!(v["maximum_principle"]["passed"], true);
    assert!(v["comparison"]["ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn cantor_then_verify_passes_on_fixture_params() {
    let dir = TempDir::new().unwrap();
    let m = dir.path().join("fx.json");
    let t = dir.path().join("tree.json");
    let r = dir.path().join("report.json");
    ok(&["generate", "--kind", "lacunary", "--levels", "2", "--depth", "2", "--out", p(&m)]);
    ok(&["cantor", "--measure", p(&m), "--params", p(&params_n2()), "--out", p(&t)]);
    let tree = json(&t);
    assert_eq!(tree["verification"]["checks"].as_array().unwrap().len(), 5);
    assert!(!tree["rarefied_weights"].as_array().unwrap().is_empty());
    ok(&["verify", "--tree", p(&t), "--report", p(&r), "--harness"]);
    let rep = json(&r);
    assert_eq!(rep["passed"], true);
    assert!(rep["harness"]["mean_zero_worst"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn tampered_tree_fails_verification_with_code_three() {
    let dir = TempDir::new().unwrap();
    let m = dir.path().join("fx.json");
    let t = dir.path().join("tree.json");
    ok(&["generate", "--kind", "lacunary", "--levels", "1", "--depth", "2", "--out", p(&m)]);
    ok(&["cantor", "--measure", p(&m), "--params", p(&params_n2()), "--N", "1", "--out", p(&t)]);
    let mut v = json(&t);
    // Blow up one child ball so that it swallows its siblings.
    v["tree"]["levels"][1][0]["ball"]["radius"] = Value::from(10.0);
    std::fs::write(&t, serde_json::to_string(&v).unwrap()).unwrap();
    let out = run(&["verify", "--tree", p(&t)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn construction_failure_exits_with_code_two() {
    // A plain Cantor measure has no low-density balls at these parameters.
    let dir = TempDir::new().unwrap();
    let m = cantor_file(&dir, 4);
    let out = run(&["cantor", "--measure", p(&m), "--params", p(&params_n2()), "--out", p(&dir.path().join("t.json"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_input_exits_with_code_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["generate", "--d", "2", "--s", "2.5", "--out", "/dev/null"]).status.code(), Some(1));
    assert_eq!(run(&["riesz", "--measure", "/nonexistent.json", "--targets", "grid:2x2"]).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let m = cantor_file(&dir, 2);
    assert_eq!(run(&["wolff", "--measure", p(&m), "--gauge", "cosh"]).status.code(), Some(1));
    assert_eq!(run(&["wolff", "--measure", p(&m), "--window", "1"]).status.code(), Some(1));
    // Targets on atoms make the Riesz kernel singular.
    let t = dir.path().join("t.csv");
    let v = json(&m);
    let a = &v["atoms"][0][0];
    std::fs::write(&t, format!("{},{}\n", a[0], a[1])).unwrap();
    assert_eq!(run(&["riesz", "--measure", p(&m), "--targets", p(&t)]).status.code(), Some(1));
}
