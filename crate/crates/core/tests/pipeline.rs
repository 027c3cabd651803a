use std::path::{Path, PathBuf};

use dualarm_core::kinematics::KinematicChain;
use dualarm_core::pipeline::{sha256_file, Config, Pipeline, RunManifest, MANIFEST_FILE};
use dualarm_core::scene::Scene;
use dualarm_core::Error;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn tiny() -> Config {
    let mut cfg = Config::default();
    cfg.data.n_samples = 600;
    cfg.sensors.min_hits = 3;
    cfg.vae.hidden = vec![16, 8];
    cfg.vae.epochs = 2;
    cfg.vae.heldout_samples = 50;
    cfg.graph.n_synthetic = 200;
    cfg
}

#[test]
fn shipped_chains_match_the_default_scene() {
    let scene = Scene::default();
    assert_eq!(KinematicChain::load(&configs_dir().join("chain_a.json")).unwrap(), scene.arm_a);
    assert_eq!(KinematicChain::load(&configs_dir().join("chain_b.json")).unwrap(), scene.arm_b);
}

#[test]
fn shipped_config_spells_out_the_defaults() {
    let mut cfg = Config::load(&configs_dir().join("default.toml")).unwrap();
    assert_eq!(cfg.scene().unwrap(), Scene::default());
    cfg.scene = Default::default();
    cfg.base_dir = Config::default().base_dir;
    assert_eq!(cfg, Config::default());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = tiny();
    let back = Config::from_toml(&cfg.to_toml().unwrap(), Path::new(".")).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(matches!(Config::from_toml("[data]\nn_sample = 5\n", Path::new(".")), Err(Error::Config(_))));
    assert!(Config::from_toml("[scene]\nchain_a = \"a.json\"\n", Path::new(".")).unwrap().scene().is_err());
}

#[test]
fn derived_seeds_differ_by_purpose_and_run_seed() {
    let a = Config::default();
    let mut b = Config::default();
    b.seed += 1;
    assert_ne!(a.derived_seed("data"), a.derived_seed("graph"));
    assert_ne!(a.derived_seed("data"), b.derived_seed("data"));
    assert_eq!(a.derived_seed("data"), Config::default().derived_seed("data"));
}

#[test]
fn stages_report_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(), dir.path(), None).unwrap();
    match p.train_vae(|_| {}) {
        Err(Error::MissingInput { stage, path }) => {
            assert_eq!(stage, "train-vae");
            assert!(path.ends_with("dataset.jsonl"));
        }
        other => panic!("expected a missing-input error, got {other:?}"),
    }
    assert!(matches!(p.build_graph(), Err(Error::MissingInput { stage: "build-graph", .. })));
    assert!(matches!(p.bench(), Err(Error::MissingInput { stage: "bench", .. })));
}

#[test]
fn rerunning_a_stage_reproduces_its_digests() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(), dir.path(), None).unwrap();
    p.gen_data().unwrap();
    p.place_sensors().unwrap();
    p.train_vae(|_| {}).unwrap();
    p.build_graph().unwrap();
    let first = RunManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    for stage in ["gen-data", "place-sensors", "train-vae", "build-graph"] {
        assert!(first.stages.contains_key(stage), "{stage} recorded");
    }
    for rec in &first.stages["gen-data"] {
        assert_eq!(sha256_file(&dir.path().join(&rec.path)).unwrap(), rec.sha256);
    }

    p.gen_data().unwrap();
    p.train_vae(|_| {}).unwrap();
    p.build_graph().unwrap();
    let second = RunManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    for stage in ["gen-data", "train-vae", "build-graph"] {
        assert_eq!(first.stages[stage], second.stages[stage], "{stage} digests");
    }
}

#[test]
fn faces_without_hits_are_listed_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.data.n_samples = 40;
    cfg.sensors.min_hits = 1;
    let p = Pipeline::new(cfg, dir.path(), None).unwrap();
    p.gen_data().unwrap();
    let set = p.place_sensors().unwrap();
    let empty: Vec<_> = set.insufficient.iter().filter(|(_, _, n)| *n == 0).collect();
    assert!(!empty.is_empty(), "a 40-sample corpus leaves some face untouched");
    for (link, face, _) in empty {
        assert!(!dir.path().join(format!("histograms/link{link}_{}.csv", face.slug())).exists());
    }
    let summary = std::fs::read_to_string(dir.path().join("placement_summary.csv")).unwrap();
    assert!(summary.contains(",0,,,false"));
}
