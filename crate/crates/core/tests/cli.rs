//! End-to-end runs of the binary: outputs, values and exit codes.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sobolev-lab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Rows of a CSV report as column-name maps.
fn rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|rec| header.iter().map(String::from).zip(rec.unwrap().iter().map(String::from)).collect())
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

fn ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_sobolev_corpus_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "sobolev", "--n", "2", "--h", "1/64", "--corpus", "builtin"]);
    ok(&o);
    let rows = rows(&dir.path().join("verify_sobolev.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["status"].starts_with("PASS")));
    assert!(dir.path().join("metadata.json").exists());
}

#[test]
fn verify_isoperimetric_square() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &["verify", "isoperimetric", "--shape", "square"]));
    let rows = rows(&dir.path().join("verify_isoperimetric.csv"));
    // 4 - 2√π
    assert!((num(&rows[0], "deficit") - 0.4551).abs() < 1e-4);
}

#[test]
fn invalid_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["verify", "sobolev", "--n", "5"][..],
        &["proof", "abp", "--f", "notafunction"],
        &["density", "--j", "0"],
        &["surface", "curvature", "--name", "klein-bottle"],
    ] {
        let o = run(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"), "{args:?}");
    }
}

#[test]
fn proof_abp_constant() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &["proof", "abp", "--f", "const1", "--n", "2"]));
    for file in ["const1_abp.json", "abp_solution_const1.csv", "field_const1.csv", "proof_summary.csv"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("const1_abp.json")).unwrap()).unwrap();
    assert_eq!(cert["pass"], true);
}

#[test]
fn proof_paths_are_compared() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &["proof", "knothe", "transport", "--f", "bump1", "--h", "1/16"]));
    let rows = rows(&dir.path().join("comparison.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["path_a"] == "knothe" && r["path_b"] == "transport"));
    assert!(rows.iter().filter(|r| r["gated"] == "true").all(|r| r["pass"] == "true"));
}

#[test]
fn surface_commands() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &["surface", "isoperimetric", "--name", "catenoid", "--h-band", "1"]));
    let r = &rows(&dir.path().join("surface_isoperimetric.csv"))[0];
    assert!((num(r, "deficit") - 4.487).abs() < 1e-3);

    ok(&run(dir.path(), &["surface", "curvature", "--name", "sphere", "--r", "2"]));
    let r = &rows(&dir.path().join("surface_curvature.csv"))[0];
    assert!((num(r, "h_min") - 1.0).abs() < 1e-10 && (num(r, "h_max") - 1.0).abs() < 1e-10);

    ok(&run(dir.path(), &["surface", "first-variation", "--name", "catenoid", "--field", "radial-bump"]));
    let r = &rows(&dir.path().join("surface_first_variation.csv"))[0];
    assert!(num(r, "relative_gap") <= 1e-4);
}

#[test]
fn density_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["density", "--j", "1"]);
    ok(&o);
    let r = &rows(&dir.path().join("density.csv"))[0];
    // c_1 = 4π/3, α_1 = 3/(2π)
    assert!((num(r, "c_j") - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-8);
    assert!((num(r, "alpha_j") - 1.5 / std::f64::consts::PI).abs() < 1e-6);

    ok(&run(dir.path(), &["density", "--j", "1,10,100,1000"]));
    let c: Vec<f64> = rows(&dir.path().join("density.csv")).iter().map(|r| num(r, "c_j")).collect();
    assert_eq!(c.len(), 4);
    assert!(c.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["verify", "sobolev", "--n", "2", "--h", "1/32", "--corpus", "builtin"];
    ok(&run(a.path(), &args));
    ok(&run(b.path(), &args));
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "metadata.json")
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}
