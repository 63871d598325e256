use rfs_forensics::corpus::{write_corpus, CorpusConfig};
use rfs_forensics::harness::{CorpusSource, ExperimentConfig, FeatureCache, TheoryConfig};
use rfs_forensics::manipulation::ManipulationKind;
use std::path::Path;
use std::process::{Command, Output};

fn rfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfs"))
        .args(args)
        .env("RFS_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rfs(args);
    assert!(
        out.status.success(),
        "rfs {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn small_corpus() -> CorpusConfig {
    CorpusConfig {
        width: 48,
        height: 48,
        count: 30,
        ..CorpusConfig::default()
    }
}

fn small_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        corpus: CorpusSource::Synthetic(small_corpus()),
        train_size: 20,
        test_size: 8,
        manipulations: vec![ManipulationKind::Mf3, ManipulationKind::Ahe],
        ks: vec![5, 686],
        maps_per_k: 2,
        pixel_maps_per_k: 2,
        epsilons: vec![0.5],
        pixel_images: 2,
        eot_sizes: vec![2],
        out_dir: out.to_path_buf(),
        theory: TheoryConfig {
            n: 20,
            repetitions: 2,
            samples_per_point: 200,
            angle_draws: 5,
            angle_ks: vec![5],
            ..TheoryConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dataset_pipeline_through_recipes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg_path = dir.path().join("cfg.json");
    small_config(&out).save(&cfg_path).unwrap();

    let msg = ok(&["prepare", "--config", s(&cfg_path), "--out", s(&out)]);
    assert!(msg.contains("20 train / 8 test"), "{msg}");
    assert!(out.join("dataset/manifest.json").exists());
    assert!(out.join("config.json").exists());

    ok(&[
        "extract-features",
        "--config",
        s(&cfg_path),
        "--out",
        s(&out),
        "--csv",
    ]);
    assert!(out.join("features/original_train.bin").exists());
    assert!(out.join("features/mf3_test.csv").exists());

    ok(&[
        "train-svm",
        "--manipulation",
        "mf3",
        "--config",
        s(&cfg_path),
        "--out",
        s(&out),
    ]);
    assert!(out.join("models/mf3_raw.json").exists());

    ok(&[
        "attack-feature",
        "--manipulation",
        "mf3",
        "--epsilon",
        "0.5",
        "--config",
        s(&cfg_path),
        "--out",
        s(&out),
    ]);
    assert!(out.join("attacks/feature_mf3_raw_eps0.5.csv").exists());

    ok(&[
        "sweep-k",
        "--manipulation",
        "mf3",
        "--epsilon",
        "0.5",
        "--ks",
        "5,10",
        "--maps",
        "2",
        "--config",
        s(&cfg_path),
        "--out",
        s(&out),
    ]);

    for recipe in ["table1", "fig5", "table5", "fig9"] {
        ok(&["recipe", recipe, "--config", s(&cfg_path), "--out", s(&out)]);
        assert!(
            out.join(format!("manifests/{recipe}.json")).exists(),
            "{recipe}"
        );
    }
    let table = std::fs::read_to_string(out.join("table1/accuracy.csv")).unwrap();
    assert!(table.starts_with("manipulation,normalized,n_support"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn missing_artifacts_name_the_producing_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    let cfg_path = dir.path().join("cfg.json");
    small_config(&out).save(&cfg_path).unwrap();
    let res = rfs(&[
        "recipe",
        "table1",
        "--no-auto-build",
        "--config",
        s(&cfg_path),
        "--out",
        s(&out),
    ]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("dataset/manifest.json"), "{err}");
    assert!(err.contains("rfs prepare"), "{err}");
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{"version": 7}"#).unwrap();
    let res = rfs(&["recipe", "fig2", "--config", s(&cfg_path)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("version"));

    let res = rfs(&["recipe", "fig99"]);
    assert!(!res.status.success());

    let res = rfs(&[
        "theory-sim",
        "--ks",
        "0",
        "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert!(!res.status.success());
}

#[test]
fn recipe_list_names_every_recipe() {
    let listing = ok(&["recipe", "--list"]);
    for name in [
        "fig2", "fig3", "fig4", "table1", "table4", "table5", "fig5", "fig6", "fig7", "fig9",
    ] {
        assert!(listing.contains(name), "{name} missing from {listing}");
    }
}

#[test]
fn theory_commands_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    ok(&[
        "theory-sim",
        "--n",
        "30",
        "--ks",
        "1,10,30",
        "--alphas",
        "1.2",
        "--reps",
        "3",
        "--samples",
        "500",
        "--out",
        s(&sweep),
    ]);
    let text = std::fs::read_to_string(&sweep).unwrap();
    // comment, header, then 3 ks x 2 reduction kinds
    assert_eq!(text.lines().count(), 2 + 6);

    let hist = dir.path().join("angles.csv");
    ok(&[
        "angle-hist",
        "--regime",
        "dependent-normalized",
        "--n",
        "30",
        "--ks",
        "5",
        "--draws",
        "4",
        "--out",
        s(&hist),
    ]);
    assert!(std::fs::read_to_string(&hist)
        .unwrap()
        .contains("dependent_normalized,5,"));
}

#[test]
fn standalone_directories_and_detector_files() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("images");
    write_corpus(&small_corpus(), src.join("original")).unwrap();
    ok(&[
        "manipulate",
        "--op",
        "mf5",
        "--input",
        s(&src.join("original")),
        "--out",
        s(&src.join("mf5")),
    ]);
    assert_eq!(std::fs::read_dir(src.join("mf5")).unwrap().count(), 30);

    let feats = dir.path().join("feats.bin");
    ok(&["extract-features", "--input", s(&src), "--out", s(&feats)]);
    assert_eq!(FeatureCache::load(&feats).unwrap().len(), 60);
    let again = ok(&["extract-features", "--input", s(&src), "--out", s(&feats)]);
    assert!(again.contains("60 reused"), "{again}");

    let full = dir.path().join("full.json");
    ok(&[
        "train-svm",
        "--manipulation",
        "mf5",
        "--features",
        s(&feats),
        "--out",
        s(&full),
    ]);
    let reduced = dir.path().join("reduced.json");
    ok(&[
        "train-svm",
        "--manipulation",
        "mf5",
        "--features",
        s(&feats),
        "--k",
        "40",
        "--seed",
        "3",
        "--out",
        s(&reduced),
    ]);
    for model in [&full, &reduced] {
        let attacked = dir.path().join("attacked.bin");
        ok(&[
            "attack-feature",
            "--epsilon",
            "0.5",
            "--model",
            s(model),
            "--features",
            s(&feats),
            "--out",
            s(&attacked),
        ]);
        assert_eq!(FeatureCache::load(&attacked).unwrap().len(), 60);
    }

    let pixel_out = dir.path().join("pixel");
    ok(&[
        "attack-pixel",
        "--epsilon",
        "0.5",
        "--model",
        s(&full),
        "--input",
        s(&src.join("mf5")),
        "--out",
        s(&pixel_out),
    ]);
    assert!(pixel_out.exists());
}
