use rfs_forensics::corpus::CorpusConfig;
use rfs_forensics::error::Error;
use rfs_forensics::harness::manifest::read_json;
use rfs_forensics::harness::{
    run_recipe, CorpusSource, ExperimentConfig, Recipe, RunManifest, Split, SplitManifest,
    TheoryConfig, Workspace,
};
use rfs_forensics::image::GrayImage;
use rfs_forensics::manipulation::ManipulationKind;
use std::path::Path;

fn config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        corpus: CorpusSource::Synthetic(CorpusConfig {
            width: 40,
            height: 40,
            count: 26,
            ..CorpusConfig::default()
        }),
        train_size: 16,
        test_size: 8,
        manipulations: vec![ManipulationKind::Mf3],
        ks: vec![3, 686],
        maps_per_k: 2,
        pixel_maps_per_k: 2,
        epsilons: vec![0.5],
        pixel_images: 2,
        eot_sizes: vec![2],
        out_dir: out.to_path_buf(),
        theory: TheoryConfig {
            n: 12,
            repetitions: 2,
            samples_per_point: 100,
            angle_draws: 4,
            angle_ks: vec![3],
            ..TheoryConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn read(dir: &Path, rel: &str) -> String {
    std::fs::read_to_string(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn recipes_are_reproducible_across_output_directories() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for recipe in [Recipe::Fig2, Recipe::Table1, Recipe::Fig5, Recipe::Fig7] {
        let ra = run_recipe(recipe, &config(a.path())).unwrap();
        let rb = run_recipe(recipe, &config(b.path())).unwrap();
        assert_eq!(ra.files.len(), rb.files.len());
        for (fa, fb) in ra.files.iter().zip(&rb.files) {
            let rel = fa.strip_prefix(a.path()).unwrap();
            assert_eq!(rel, fb.strip_prefix(b.path()).unwrap());
            assert_eq!(
                std::fs::read(fa).unwrap(),
                std::fs::read(fb).unwrap(),
                "{}",
                rel.display()
            );
        }
    }
    let manifest: RunManifest = read_json(a.path().join("manifests/fig5.json")).unwrap();
    let seeds: Vec<_> = manifest.stages.iter().flat_map(|s| &s.seeds).collect();
    assert!(seeds.iter().any(|t| t.stage == "rfs-security-map"));
    assert!(!manifest.stages.iter().all(|s| s.outputs.is_empty()));
}

#[test]
fn second_run_reuses_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    run_recipe(Recipe::Table1, &config(dir.path())).unwrap();
    let before = read(dir.path(), "models/mf3_raw.json");
    let again = run_recipe(Recipe::Table1, &config(dir.path())).unwrap();
    let rebuilt: Vec<&str> = again
        .manifest
        .stages
        .iter()
        .map(|s| s.name.as_str())
        .collect();
    assert_eq!(rebuilt, ["table1"], "nothing upstream should be rebuilt");
    assert_eq!(before, read(dir.path(), "models/mf3_raw.json"));
}

#[test]
fn edited_images_invalidate_features_and_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let mut ws = Workspace::open(cfg.clone()).unwrap();
    ws.model(ManipulationKind::Mf3, false).unwrap();
    let model_before = read(dir.path(), "models/mf3_raw.json");

    let manifest = SplitManifest::load(dir.path()).unwrap();
    let rel = SplitManifest::image_path(
        Some(ManipulationKind::Mf3),
        Split::Train,
        &manifest.train[0],
    );
    let replacement = GrayImage::from_fn(40, 40, |r, c| ((r * 7 + c * 5) % 256) as u8).unwrap();
    std::fs::write(dir.path().join(&rel), replacement.to_pgm()).unwrap();

    let strict = ExperimentConfig {
        auto_build: false,
        ..cfg.clone()
    };
    match Workspace::open(strict)
        .unwrap()
        .model(ManipulationKind::Mf3, false)
    {
        Err(Error::CacheInvalid(what)) => assert!(what.contains("mf3_train"), "{what}"),
        other => panic!("expected a stale cache error, got {other:?}"),
    }

    let mut ws = Workspace::open(cfg).unwrap();
    ws.model(ManipulationKind::Mf3, false).unwrap();
    let names: Vec<&str> = ws.stages().iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["extract-features", "models/mf3_raw.json"]);
    assert_ne!(model_before, read(dir.path(), "models/mf3_raw.json"));
}

#[test]
fn changed_split_rebuilds_the_dataset_or_fails_strictly() {
    let dir = tempfile::tempdir().unwrap();
    Workspace::open(config(dir.path()))
        .unwrap()
        .dataset()
        .unwrap();
    let other = ExperimentConfig {
        master_seed: 9,
        auto_build: false,
        ..config(dir.path())
    };
    match Workspace::open(other.clone()).unwrap().dataset() {
        Err(Error::MissingDependency { artifact, producer }) => {
            assert!(artifact.contains("does not match"), "{artifact}");
            assert!(producer.starts_with("rfs prepare"), "{producer}");
        }
        other => panic!("{other:?}"),
    }
    let rebuilt = Workspace::open(ExperimentConfig {
        auto_build: true,
        ..other
    })
    .unwrap()
    .dataset()
    .unwrap();
    assert_eq!(rebuilt.master_seed, 9);
}
