use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use commute_core::pipeline::{run, sha256_file, PipelineError, RunConfig, Stage, DIRTY, MANIFEST};
use commute_core::synth::{files, generate_city, CitySpec};

fn small_city(dir: &Path, seed: u64) -> RunConfig {
    let spec = CitySpec {
        seed,
        n_bts: 20,
        n_users: 800,
        extent_m: 3000.0,
        n_routes: 4,
        ..Default::default()
    };
    generate_city(&spec, dir).unwrap();
    let mut cfg = RunConfig::load(&dir.join(files::CONFIG)).unwrap();
    cfg.lisa.permutations = 199;
    cfg
}

/// Every file under `out` except the manifest, which carries timings.
fn snapshot(out: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut all = BTreeMap::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != MANIFEST {
                all.insert(p.strip_prefix(out).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    all
}

#[test]
fn rerun_hits_cache_and_manifest_hashes_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), 3);
    let first = run(&cfg, Stage::Stats).unwrap();
    assert_eq!(first.stages.len(), Stage::ALL.len());
    assert!(first.stages.iter().all(|s| !s.cache_hit));
    for (name, hash) in &first.outputs {
        assert_eq!(&sha256_file(&cfg.output_dir.join(name)).unwrap(), hash, "{name}");
    }
    for f in ["anchors.csv", "matrix.csv", "hex_metrics.csv", "lisa.csv", "report.json"] {
        assert!(first.outputs.contains_key(f), "{f} missing from manifest");
    }
    assert!(cfg.output_dir.join(MANIFEST).exists());
    assert!(!cfg.output_dir.join(DIRTY).exists());

    let second = run(&cfg, Stage::Stats).unwrap();
    assert!(second.stages.iter().all(|s| s.cache_hit));
    assert_eq!(first.outputs, second.outputs);

    let mut changed = cfg.clone();
    changed.lisa.permutations = 99;
    let third = run(&changed, Stage::Stats).unwrap();
    let hits: Vec<bool> = third.stages.iter().map(|s| s.cache_hit).collect();
    assert_eq!(hits, [true, true, true, true, true, false, false]);
}

#[test]
fn separate_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (small_city(a.path(), 5), small_city(b.path(), 5));
    run(&ca, Stage::Stats).unwrap();
    run(&cb, Stage::Stats).unwrap();
    let (sa, sb) = (snapshot(&ca.output_dir), snapshot(&cb.output_dir));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{k} differs");
    }
}

#[test]
fn missing_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_city(dir.path(), 1);
    cfg.inputs.gtfs = dir.path().join("no_such_feed");
    let err = run(&cfg, Stage::Stats).unwrap_err();
    assert!(matches!(err, PipelineError::Validation(ref m) if m.contains("inputs.gtfs")), "{err}");
    assert_eq!(err.exit_code(), 1);
    assert!(!cfg.output_dir.join(MANIFEST).exists());
}

#[test]
fn failing_stage_marks_output_dirty() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), 2);
    fs::write(&cfg.inputs.demographics, "hex_id,wrong\n0:0,1\n").unwrap();
    let err = run(&cfg, Stage::Stats).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: Stage::Stats, .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(cfg.output_dir.join(DIRTY).exists());
    assert!(cfg.output_dir.join("lisa.csv").exists());
}
