mod common;

use std::collections::BTreeSet;

use citesim_core::pipeline::{stage_seed, Manifest, Pipeline, PipelineConfig, Stage, MANIFEST};
use citesim_core::Error;
use common::{example_config, example_config_path};

fn run_all(dir: &std::path::Path, seed: u64) -> Manifest {
    let mut cfg = example_config(dir);
    cfg.seed = seed;
    let p = Pipeline::new(cfg).unwrap();
    let outcomes = p.run(Stage::All).unwrap();
    assert_eq!(outcomes.iter().map(|o| o.stage).collect::<Vec<_>>(), Stage::ORDER);
    p.manifest().unwrap()
}

#[test]
fn example_run_is_reproducible_and_complete() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_all(a.path(), 42);
    let mb = run_all(b.path(), 42);
    assert_eq!(ma, mb);
    assert_ne!(ma, run_all(c.path(), 43));

    // every file in the work directory is in the manifest
    let on_disk: BTreeSet<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|f| f != MANIFEST)
        .collect();
    assert_eq!(on_disk, ma.artifacts.keys().cloned().collect());
    for (file, entry) in &ma.artifacts {
        let bytes = std::fs::read(a.path().join(file)).unwrap();
        assert_eq!(citesim_core::pipeline::sha256_hex(&bytes), entry.sha256, "{file}");
    }

    let report = std::fs::read_to_string(a.path().join("report.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(rows.iter().any(|r| r["label"] == "encoder"));
    let tasks: BTreeSet<&str> = rows.iter().map(|r| r["task"].as_str().unwrap()).collect();
    assert_eq!(tasks.len(), 4, "{tasks:?}");
    for r in &rows {
        assert!((0.0..=1.0).contains(&r["map"].as_f64().unwrap()));
        assert!(["idt", "odt"].contains(&r["split"].as_str().unwrap()));
    }
    assert!(a.path().join("report.txt").is_file());
}

#[test]
fn evaluate_before_train_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(example_config(dir.path())).unwrap();
    match p.run(Stage::Evaluate).unwrap_err() {
        Error::MissingArtifact { stage, .. } => assert_eq!(stage, "train"),
        e => panic!("unexpected {e}"),
    }
    p.run(Stage::Ingest).unwrap();
    let err = p.run(Stage::Mine).unwrap_err();
    assert!(err.to_string().contains("graph"), "{err}");
}

#[test]
fn rerunning_a_stage_overwrites_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(example_config(dir.path())).unwrap();
    p.run(Stage::Ingest).unwrap();
    let first = p.manifest().unwrap();
    p.run(Stage::Ingest).unwrap();
    assert_eq!(p.manifest().unwrap(), first);
}

fn config_error(text: &str) -> String {
    let base = example_config_path().parent().unwrap().to_path_buf();
    match PipelineConfig::from_toml_str(text, &base) {
        Err(Error::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn config_diagnostics_name_fields() {
    let paths = "[paths]\ncorpus = \"corpus.jsonl\"\nedges = \"edges.tsv\"\n";
    assert!(config_error(&format!("{paths}[sampling]\nstrategy = \"DC∪XY\"\n")).contains("sampling.strategy"));
    assert!(config_error(&format!("{paths}[split]\ntop_k = 3\n")).contains("top_k"));
    assert!(config_error("[paths]\ncorpus = \"nope.jsonl\"\nedges = \"edges.tsv\"\n").contains("paths.corpus"));
    assert!(config_error(&format!("{paths}[train]\nbatch_size = 1\n")).contains("train.batch_size"));
    assert!(PipelineConfig::from_toml_str(paths, &example_config_path().parent().unwrap()).is_ok());
}

#[test]
fn stage_seeds_are_distinct() {
    let seeds: BTreeSet<u64> = Stage::ORDER.iter().map(|&s| stage_seed(42, s)).collect();
    assert_eq!(seeds.len(), Stage::ORDER.len());
    assert_eq!(stage_seed(42, Stage::Train), stage_seed(42, Stage::Train));
    for s in Stage::ORDER {
        assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
    }
}
