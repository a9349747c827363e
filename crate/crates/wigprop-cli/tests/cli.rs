use std::path::Path;
use std::process::{Command, Output};

fn wigprop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wigprop")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let o = wigprop(dir.path(), &["presets"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for name in ["fig3-elliptic", "fig3-hyperbolic", "harmonic-liouville"] {
        assert!(s.contains(name), "{s}");
    }
    let o = wigprop(dir.path(), &["presets", "--show", "fig3-elliptic"]);
    assert!(stdout(&o).contains("0.329"));
}

#[test]
fn pathint_with_overrides_writes_files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = wigprop(dir.path(), &["pathint", "--preset", "fig3-hyperbolic", "--t", "0.5", "--np", "32", "--nq", "32", "--q", "-0.79", "--out", "o"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["pathint.txt", "pathint.ppm", "manifest.json", "trajectory.txt"] {
        assert!(dir.path().join("o").join(f).exists(), "missing {f}");
    }
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["r_prime"]["q"], -0.79);
    assert_eq!(m["config"]["grid"]["np"], 32);
    assert_eq!(m["fields"][0]["method"], "pathint");

    // Rerun from the manifest alone.
    let o2 = wigprop(dir.path(), &["run", "--config", "o/manifest.json", "--out", "again"]);
    assert!(o2.status.success());
    assert_eq!(std::fs::read(dir.path().join("o/pathint.txt")).unwrap(), std::fs::read(dir.path().join("again/pathint.txt")).unwrap());

    let o3 = wigprop(dir.path(), &["compare", "o/pathint.txt", "again/pathint.txt"]);
    let metrics: serde_json::Value = serde_json::from_slice(&o3.stdout).unwrap();
    assert_eq!(metrics["rel_l2"], 0.0);
}

#[test]
fn trajectory_reports_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let o = wigprop(dir.path(), &["trajectory", "--preset", "fig3-elliptic", "--out", "t"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("class=Elliptic"), "{s}");
    let text = std::fs::read_to_string(dir.path().join("t/trajectory.txt")).unwrap();
    assert!(text.starts_with("# s p q M11 M12 M21 M22"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(wigprop(dir.path(), &["run", "--preset", "harmonic-liouville", "--hbar", "-1"]).status.code(), Some(2));
    assert_eq!(wigprop(dir.path(), &["run", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(wigprop(dir.path(), &["bogus"]).status.code(), Some(2));
    let o = wigprop(dir.path(), &["compare", "missing.txt", "other.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.txt"));
    // Seed grid too coarse for the Jacobian stencil.
    let o = wigprop(dir.path(), &["vanvleck", "--n-radii", "2", "--n-angles", "8", "--rho-max", "0.1", "--out", "v"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    // Spectral grid below the wavelength resolution rule.
    let o = wigprop(dir.path(), &["exact", "--preset", "harmonic-liouville", "--n-grid", "40", "--out", "e"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exact"));
}
