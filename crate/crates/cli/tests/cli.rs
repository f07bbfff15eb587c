use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracheat_cli::manifest::{sha256_hex, Manifest, Status};
use fracheat_cli::ExperimentConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fracheat"));
    c.env_remove("FRACHEAT_THREADS");
    c
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, cfg.to_json()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn files(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect()
}

#[test]
fn valid_config_validates_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), &ExperimentConfig::example(1));
    let o = run(&["validate", "--config", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).ends_with(": ok\n"));
}

#[test]
fn subcritical_order_is_diagnosed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { s: 0.4, ..ExperimentConfig::example(1) };
    let p = write_config(tmp.path(), &cfg);
    let o = run(&["validate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("s = 0.4 outside (1/2,1)"), "{}", stdout(&o));
}

#[test]
fn gamma_above_delta_tilde_is_diagnosed() {
    let mut cfg = ExperimentConfig::example(1);
    cfg.moduli.gamma = 0.6;
    let d = cfg.validate();
    assert_eq!(d.len(), 1, "{d:?}");
    assert!(d[0].contains("smaller than delta_tilde") && d[0].contains("summability"), "{d:?}");
}

#[test]
fn unknown_generator_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ExperimentConfig::example(1).to_json().replace("\"truncated_power\"", "\"fractal\"");
    let line = text.lines().position(|l| l.contains("fractal")).unwrap() + 1;
    let p = tmp.path().join("bad.json");
    std::fs::write(&p, text).unwrap();
    let o = run(&["validate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    assert!(out.contains("unknown variant `fractal`") && out.contains(&format!("line {line}")), "{out}");
}

#[test]
fn empty_stage_list_writes_only_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), &ExperimentConfig::example(1));
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap(), "--stages", ""]);
    assert!(o.status.success());
    assert_eq!(files(&out), BTreeSet::from(["manifest.json".to_string()]));
    let m = manifest(&out);
    assert!(m.stages.is_empty() && m.outputs.is_empty());
    assert_eq!(m.status, Status::Ok);
}

#[test]
fn bundled_dtn_config_produces_the_dual_route_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&[
        "dtn-check",
        "--config",
        bundled("dtn-consistency.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("dtn.json")).unwrap()).unwrap();
    let levels = rep["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    for l in levels {
        assert!(l["sup_rel_direct"].as_f64().unwrap() < 0.05);
        assert!(l["sup_rel_closed"].as_f64().unwrap() < 0.05);
    }
    assert_eq!(rep["decreasing"], true);
}

#[test]
fn every_bundled_config_is_valid() {
    for entry in std::fs::read_dir(bundled("")).unwrap() {
        let p = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&p).unwrap();
        assert!(cfg.validate().is_empty(), "{}: {:?}", p.display(), cfg.validate());
    }
}

#[test]
fn reruns_are_byte_identical_and_fully_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), &ExperimentConfig::example(1));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["run", "--config", p.to_str().unwrap(), "--out", a.to_str().unwrap()]).status.success());
    let o = bin()
        .args(["run", "--config", p.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .env("FRACHEAT_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(files(&a), files(&b));
    for name in files(&a) {
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name}");
    }
    // No orphan writes: everything but the manifest is listed with its digest.
    let m = manifest(&a);
    let listed: BTreeSet<String> = m.outputs.iter().map(|o| o.path.clone()).collect();
    let mut present = files(&a);
    present.remove("manifest.json");
    assert_eq!(listed, present);
    for o in &m.outputs {
        assert_eq!(o.sha256, sha256_hex(&std::fs::read(a.join(&o.path)).unwrap()));
    }
    assert!(listed.contains("excess.csv") && listed.contains("gradient_pairs.dat"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), &ExperimentConfig::example(1));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = |out: &Path, seed: &str| {
        run(&[
            "probe",
            "--config",
            p.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--threads",
            "1",
        ])
    };
    assert!(args(&a, "11").status.success());
    assert!(args(&b, "12").status.success());
    assert_eq!(manifest(&a).seed, 11);
    assert_ne!(
        std::fs::read(a.join("gradient_pairs.csv")).unwrap(),
        std::fs::read(b.join("gradient_pairs.csv")).unwrap()
    );
    assert_eq!(std::fs::read(a.join("excess.csv")).unwrap(), std::fs::read(b.join("excess.csv")).unwrap());
}

#[test]
fn failing_stage_leaves_partial_outputs_and_a_failure_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::example(1);
    cfg.probe.campanato_radii = vec![4.0, 0.5];
    let p = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let o =
        run(&["run", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap(), "--stages", "solve,probe,plot"]);
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m.status, Status::Failed);
    let status: Vec<Status> = m.stages.iter().map(|s| s.status).collect();
    assert_eq!(status, vec![Status::Ok, Status::Failed, Status::Skipped]);
    assert!(m.stages[1].error.is_some());
    assert!(out.join("solution.field").exists());
    assert!(!out.join("probe.json").exists());
}

#[test]
fn solution_field_reads_back() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), &ExperimentConfig::example(1));
    let out = tmp.path().join("out");
    assert!(run(&["solve", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let bytes = std::fs::read(out.join("solution.field")).unwrap();
    let (header, field) = fracheat_core::extension::io::read_field(bytes.as_slice()).unwrap();
    assert_eq!(header.shape, vec![61, 49, 25]);
    assert_eq!(field.values.len(), 61 * 49 * 25);
    assert!(field.values.iter().all(|v| v.is_finite()));
}

#[test]
fn bad_stage_name_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), &ExperimentConfig::example(1));
    let o = run(&["run", "--config", p.to_str().unwrap(), "--stages", "solve,fly"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown stage `fly`"));
}
