use std::fs;
use std::time::Instant;

use franson_core::analytics::TSIRELSON;
use franson_core::pipeline::{
    compare_to_anchor, run, AnchorStatus, Experiment, ExperimentKind, Mode, PipelineConfig,
};

fn config(dir: &std::path::Path) -> PipelineConfig {
    PipelineConfig {
        output_dir: dir.to_path_buf(),
        ..PipelineConfig::default()
    }
}

#[test]
fn analytic_outputs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for kind in [
        ExperimentKind::G2Map,
        ExperimentKind::ChshTable,
        ExperimentKind::BaselineStudy,
        ExperimentKind::MultiportPostselect,
    ] {
        let e = Experiment::new(kind, Mode::Analytic);
        let ra = run(&config(a.path()), e).unwrap();
        let rb = run(&config(b.path()), e).unwrap();
        assert!(ra.passed(), "{kind:?}: {:?}", ra.checks);
        let data = |r: &franson_core::pipeline::Report| {
            let mut f = r.files.clone();
            f.remove("manifest.json");
            f
        };
        assert_eq!(data(&ra), data(&rb), "{kind:?}");
        let ma = fs::read(ra.dir.join("manifest.json")).unwrap();
        let mb = fs::read(rb.dir.join("manifest.json")).unwrap();
        // manifests differ only through the output directory in the config
        let strip = |m: &[u8]| {
            let mut v: serde_json::Value = serde_json::from_slice(m).unwrap();
            v["config"]["output_dir"] = serde_json::Value::Null;
            v["config_sha256"] = serde_json::Value::Null;
            v
        };
        assert_eq!(strip(&ma), strip(&mb));
    }
}

#[test]
fn manifest_records_config_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.apply_overrides(&["montecarlo.seed=99", "montecarlo.bins=20000"])
        .unwrap();
    let r = run(
        &cfg,
        Experiment::new(ExperimentKind::BaselineStudy, Mode::Both),
    )
    .unwrap();
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(r.dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 99);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    // the manifest lists every file but itself
    assert_eq!(m["files"].as_object().unwrap().len(), r.files.len() - 1);
    assert!(r.passed(), "{:?}", r.checks);
}

#[test]
fn background_sweep_reports_without_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.apply_override("analysis.betas=[0,0.1,0.2,0.3,0.4,0.5,0.6]")
        .unwrap();
    let r = run(
        &cfg,
        Experiment::new(ExperimentKind::BackgroundSweep, Mode::Analytic),
    )
    .unwrap();
    assert!(r.passed(), "{:?}", r.checks);
    assert!(r
        .anchors
        .iter()
        .all(|a| a.status == AnchorStatus::ReportOnly));
    let s0 = r.results["rows"][0]["s"].as_f64().unwrap();
    assert!((s0 - TSIRELSON).abs() < 1e-9);
    let md = fs::read_to_string(r.dir.join("report.md")).unwrap();
    assert!(md.contains("crossover_beta") && md.contains("report-only"));
}

#[test]
fn fringe_scan_recovers_tuned_visibility() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.apply_overrides(&[
        "analysis.target_visibility=0.928",
        "analysis.phase_points=12",
        "montecarlo.seed=4",
        "montecarlo.bins=400000",
    ])
    .unwrap();
    let t0 = Instant::now();
    let r = run(
        &cfg,
        Experiment::new(ExperimentKind::FringeScan, Mode::Both),
    )
    .unwrap();
    eprintln!("fringe scan: {:?}", t0.elapsed());
    let va = r.results["analytic"]["visibility"].as_f64().unwrap();
    assert!((va - 0.928).abs() < 1e-5, "analytic {va}");
    let v = r.results["montecarlo"]["visibility"].as_f64().unwrap();
    let s = r.results["montecarlo"]["visibility_sigma"]
        .as_f64()
        .unwrap();
    eprintln!("simulated V = {v} ± {s}");
    assert!((v - 0.928).abs() <= 3.0 * s, "{v} ± {s}");
    assert!(r.passed(), "{:?}", r.checks);
}

#[test]
fn chsh_table_both_modes_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.apply_overrides(&[
        "montecarlo.seed=12",
        "montecarlo.bins=1000000",
        "source.q=0.2",
    ])
    .unwrap();
    let r = run(&cfg, Experiment::new(ExperimentKind::ChshTable, Mode::Both)).unwrap();
    assert!(r.passed(), "{:?}", r.checks);
    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(r.dir.join("chsh.json")).unwrap()).unwrap();
    assert!(doc["montecarlo"]["sigma_s"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["analytic"]["e"].as_array().unwrap().len(), 4);
}

#[test]
fn anchor_examples() {
    assert_eq!(
        compare_to_anchor(2.624, 0.02, "chsh_s").unwrap(),
        AnchorStatus::Match
    );
    assert_eq!(
        compare_to_anchor(2.0 / 9.0, 0.0, "tripartite").unwrap(),
        AnchorStatus::Match
    );
    assert_eq!(
        compare_to_anchor(0.43, 0.0, "crossover_beta").unwrap(),
        AnchorStatus::ReportOnly
    );
    assert!(compare_to_anchor(1.0, 0.0, "made_up").is_err());
}
