use std::path::Path;
use std::process::{Command, Output};

fn carleson(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carleson"))
        .args(args)
        .current_dir(dir)
        .env("CARLESON_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const SEGMENT: &str = r#"{"space": {"kind": "segment", "spacing": 0.001}, "coefficients": ["osc"], "eps": [0.1]}"#;

#[test]
fn minimal_segment_run_is_flat_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.json"), SEGMENT).unwrap();
    let out = carleson(&["run", "--config", "c.json", "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = tmp.path().join("o");
    for f in [
        "space.json",
        "tree.json",
        "config.json",
        "field_osc.csv",
        "field_osc.json",
        "heatmap_osc.svg",
        "packing_osc_eps0p1.csv",
        "packing_osc_eps0p1.json",
        "summary.json",
    ] {
        assert!(o.join(f).is_file(), "missing {f}");
    }
    let s = summary(&o);
    assert_eq!(s["audits"][0]["verdict"], "flat");
    assert!(std::fs::read_to_string(o.join("heatmap_osc.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn invalid_rho_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SEGMENT.replace(r#""coefficients""#, r#""tree": {"rho": 2}, "coefficients""#);
    std::fs::write(tmp.path().join("c.json"), cfg).unwrap();
    let out = carleson(&["run", "--config", "c.json", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["stage"], "config");
    assert_eq!(record["error"], "domain");
}

#[test]
fn malformed_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.json"), "{\"space\": ").unwrap();
    let out = carleson(&["run", "--config", "c.json", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"space": {"kind": "lipschitz_graph", "spacing": 0.004}, "coefficients": ["osc", "alpha"], "eps": [0.1, 0.2]}"#;
    std::fs::write(tmp.path().join("c.json"), cfg).unwrap();
    for dir in ["a", "b"] {
        let out = carleson(&["run", "--config", "c.json", "--out", dir, "--seed", "7"], tmp.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["summary.json", "field_alpha.csv", "tree.json", "heatmap_osc.svg"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    assert_eq!(summary(&tmp.path().join("a"))["seed"], 7);
}

#[test]
fn snowflake_density_constant_is_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"space": {"kind": "snowflake", "spacing": 0.0005}, "coefficients": ["osc"], "eps": [0.1],
                  "ahlfors_scan": {"scales": [0.05, 0.1, 0.2], "centers": 16}}"#;
    std::fs::write(tmp.path().join("c.json"), cfg).unwrap();
    let out = carleson(&["run", "--config", "c.json", "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = summary(&tmp.path().join("o"))["ahlfors"]["density_constant"].as_f64().unwrap();
    assert!((d - 2.0).abs() < 0.05, "density constant {d}");
}

#[test]
fn verbs_chain_and_coverage_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    let ok = |args: &[&str]| {
        let out = carleson(args, p);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    ok(&["gen", "--kind", "bilip_curve", "--spacing", "0.004", "--out", "s.json"]);
    ok(&["tree", "--space", "s.json", "--out", "t.json"]);
    ok(&["coeff", "--space", "s.json", "--tree", "t.json", "--coefficient", "osc", "--out", "osc.json"]);
    assert!(p.join("osc.csv").is_file());
    ok(&["audit", "--tree", "t.json", "--field", "osc.json", "--eps", "0.1,0.2", "--out", "p.json"]);
    let reports: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("p.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 2);

    // md without a chart is unsupported
    let out = carleson(&["coeff", "--space", "s.json", "--tree", "t.json", "--coefficient", "md", "--out", "md.json"], p);
    assert_eq!(out.status.code(), Some(2));
    // with the chart, coarse cubes have no lattice cube and the audit reports holes
    ok(&["coeff", "--kind", "bilip_curve", "--spacing", "0.004", "--tree", "t.json", "--coefficient", "md", "--out", "md.json"]);
    let out = carleson(&["audit", "--tree", "t.json", "--field", "md.json", "--out", "pm.json"], p);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bad_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_carleson"))
        .args(["gen", "--kind", "segment", "--spacing", "0.1"])
        .current_dir(tmp.path())
        .env("CARLESON_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
