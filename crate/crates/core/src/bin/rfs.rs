use clap::{Args, Parser, Subcommand};
use rfs_forensics::corpus::CorpusConfig;
use rfs_forensics::harness::manifest::{write_file, StageRecorder};
use rfs_forensics::harness::{
    extract_files, init_workers, labeled_from_cache, list_images, manipulate_dir, prepare_dataset,
    run_recipe_in, AttackKind, CorpusSource, ExperimentConfig, FeatureCache, FeatureEntry, Recipe,
    Split, Workspace, WORKERS_ENV,
};
use rfs_forensics::image::read_image;
use rfs_forensics::manipulation::ManipulationKind;
use rfs_forensics::ml_attack::{
    attack_feature_domain, attack_pixel_domain, train_full_detector, AttackTarget,
    FeatureAttackConfig, PixelAttackConfig, ReducedDetector, SecurityTable,
};
use rfs_forensics::montecarlo::{
    histograms_to_csv, run_angle_histogram, run_error_sweep, TheorySweepConfig,
};
use rfs_forensics::reduction::{draw_rfs, ReductionMap};
use rfs_forensics::seed::{derive_seed, rng_from_seed};
use rfs_forensics::spam::SPAM_DIM;
use rfs_forensics::svm::{load_model, SvmModel, TrainConfig};
use rfs_forensics::{Error, Regime, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "rfs",
    version,
    about = "Randomized feature selection against detector evasion: theory sweeps, SPAM/SVM detectors and attacks"
)]
#[command(
    after_help = "Worker threads: set RFS_WORKERS (defaults to all cores). Results do not depend on it."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (versioned JSON); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file, for single-file commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Split a corpus, preprocess it and write manipulated counterparts.
    Prepare {
        /// Directory of images; omit for the synthetic corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Size of the synthetic corpus.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        /// Downsample by 4 (for full-resolution photographs).
        #[arg(long)]
        downsample: bool,
        #[arg(long, value_delimiter = ',')]
        manipulations: Vec<ManipulationKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Apply one manipulation to every image of a directory.
    Manipulate {
        #[arg(long)]
        op: ManipulationKind,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// SPAM features of a directory of images, or of the prepared dataset when --input is absent.
    ExtractFeatures {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also write the cache as CSV.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train a detector from a feature cache, or the dataset's full detector when --features is absent.
    TrainSvm {
        #[arg(long)]
        manipulation: ManipulationKind,
        /// Cache whose entry paths contain `original/` or `<manipulation>/` directories.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        normalize: bool,
        /// Train on the features selected by this map (JSON).
        #[arg(long)]
        rfs_map: Option<PathBuf>,
        /// Train on a random selection of k features drawn from the seed.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Feature-domain attack against a full or reduced detector.
    AttackFeature {
        #[arg(long)]
        epsilon: f64,
        /// Detector JSON (full or reduced); with --features.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Cache of the feature vectors to attack.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Dataset mode: attack the manipulated test set against the full detector.
        #[arg(long)]
        manipulation: Option<ManipulationKind>,
        #[arg(long)]
        normalize: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Pixel-domain attack against a full detector.
    AttackPixel {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Directory of images to attack; with --model.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        manipulation: Option<ManipulationKind>,
        #[arg(long)]
        normalize: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Ensemble attack at one k, evaluated against fresh RFS detectors.
    AttackEot {
        #[arg(long)]
        manipulation: ManipulationKind,
        #[arg(long)]
        k: usize,
        /// Number of attacker detectors.
        #[arg(long, default_value_t = 50)]
        ensemble: usize,
        #[arg(long)]
        epsilon: f64,
        /// Fresh detectors used for evaluation.
        #[arg(long)]
        maps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// RFS security sweep over k for one manipulation and attack.
    SweepK {
        #[arg(long)]
        manipulation: ManipulationKind,
        #[arg(long, default_value = "feature")]
        attack: AttackKind,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        normalize: bool,
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        #[arg(long)]
        maps: Option<usize>,
        /// Attacker ensemble size for --attack eot.
        #[arg(long, default_value_t = 50)]
        ensemble: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo sweep of the Gaussian model.
    TheorySim {
        #[arg(long, default_value = "iid")]
        regime: Regime,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        z: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Monte Carlo samples per point (0: analytic only).
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Angle-mismatch histograms of RFS detectors on Gaussian models.
    AngleHist {
        #[arg(long, default_value = "dependent")]
        regime: Regime,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce one figure or table end to end.
    Recipe {
        /// One of fig2, fig3, fig4, table1, table4, table5, fig5, fig6, fig7, fig9.
        name: Option<Recipe>,
        /// List the recipes.
        #[arg(long)]
        list: bool,
        /// Fail on missing intermediate artifacts instead of building them.
        #[arg(long)]
        no_auto_build: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn need_out(c: &Common, what: &str) -> Result<PathBuf> {
    c.out
        .clone()
        .ok_or_else(|| Error::param(format!("--out is required: {what}")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

/// A full SVM or a reduced detector, whichever the JSON holds.
enum Detector {
    Full(SvmModel),
    Reduced(ReducedDetector),
}

impl Detector {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if let Ok(r) = serde_json::from_str::<ReducedDetector>(&text) {
            return Ok(Detector::Reduced(r));
        }
        Ok(Detector::Full(load_model(path)?))
    }

    fn target(&self) -> &dyn AttackTarget {
        match self {
            Detector::Full(m) => m,
            Detector::Reduced(r) => r,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            corpus,
            synthetic,
            train,
            test,
            downsample,
            manipulations,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(path) = corpus {
                cfg.corpus = CorpusSource::Directory { path };
            }
            if let Some(count) = synthetic {
                let mut c = match &cfg.corpus {
                    CorpusSource::Synthetic(c) => c.clone(),
                    CorpusSource::Directory { .. } => CorpusConfig::default(),
                };
                c.count = count;
                cfg.corpus = CorpusSource::Synthetic(c);
            }
            if let Some(t) = train {
                cfg.train_size = t;
            }
            if let Some(t) = test {
                cfg.test_size = t;
            }
            cfg.downsample |= downsample;
            if !manipulations.is_empty() {
                cfg.manipulations = manipulations;
            }
            let m = prepare_dataset(&cfg)?;
            cfg.save(cfg.out_dir.join("config.json"))?;
            println!(
                "prepared {} train / {} test images ({} files, {} skipped) in {}",
                m.train.len(),
                m.test.len(),
                m.files.len(),
                m.skipped.len(),
                cfg.out_dir.display()
            );
        }
        Command::Manipulate { op, input, common } => {
            let out = need_out(&common, "output directory")?;
            let written = manipulate_dir(&input, &out, op)?;
            println!("wrote {} images to {}", written.len(), out.display());
        }
        Command::ExtractFeatures { input, csv, common } => match input {
            Some(dir) => {
                let out = need_out(&common, "cache file")?;
                let files = list_images(&dir)?;
                if files.is_empty() {
                    return Err(Error::param(format!("no images under {}", dir.display())));
                }
                let previous = out.exists().then(|| FeatureCache::load(&out)).transpose()?;
                let (cache, reused) = extract_files(&files, previous.as_ref())?;
                cache.save(&out)?;
                println!(
                    "wrote {} ({} entries, {reused} reused)",
                    out.display(),
                    cache.len()
                );
                if csv {
                    write_text(&out.with_extension("csv"), &cache.to_csv())?;
                }
            }
            None => {
                let mut ws = Workspace::open(load_config(&common)?)?;
                let kinds = ws.config.manipulations.clone();
                for split in [Split::Train, Split::Test] {
                    for class in std::iter::once(None).chain(kinds.iter().copied().map(Some)) {
                        let cache = ws.features(class, split)?;
                        if csv {
                            let name = rfs_forensics::harness::dataset::class_label(class);
                            write_text(
                                &ws.out.join(format!("features/{name}_{split}.csv")),
                                &cache.to_csv(),
                            )?;
                        }
                    }
                }
                println!(
                    "features up to date in {}",
                    ws.out.join("features").display()
                );
            }
        },
        Command::TrainSvm {
            manipulation,
            features,
            normalize,
            rfs_map,
            k,
            common,
        } => {
            let cfg = load_config(&common)?;
            let Some(cache_path) = features else {
                if rfs_map.is_some() || k.is_some() {
                    return Err(Error::param("--rfs-map and --k need --features"));
                }
                let mut ws = Workspace::open(cfg)?;
                let report = ws.train_report(manipulation, normalize)?;
                println!(
                    "{}: {} support vectors of {} training examples, training accuracy {}",
                    ws.out
                        .join(Workspace::model_rel(manipulation, normalize))
                        .display(),
                    report.n_support,
                    report.n_train,
                    report.training_accuracy
                );
                return Ok(());
            };
            let out = need_out(&common, "model file")?;
            let data = labeled_from_cache(&FeatureCache::load(&cache_path)?, manipulation)?;
            let tc = TrainConfig {
                seed: derive_seed(cfg.master_seed, "cli-train", &[]),
                ..cfg.svm.clone()
            };
            let map = match (rfs_map, k) {
                (Some(_), Some(_)) => return Err(Error::param("give either --rfs-map or --k")),
                (Some(p), None) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    Some(serde_json::from_str::<ReductionMap>(&text)?)
                }
                (None, Some(k)) => {
                    let s = derive_seed(cfg.master_seed, "cli-rfs-map", &[k as u64]);
                    Some(draw_rfs(SPAM_DIM, k, &mut rng_from_seed(s))?.with_seed(s))
                }
                (None, None) => None,
            };
            let report = match map {
                Some(map) => {
                    let (det, report) = ReducedDetector::train(map, &data, normalize, &tc)?;
                    write_text(&out, &serde_json::to_string_pretty(&det)?)?;
                    report
                }
                None => {
                    let (model, report) = train_full_detector(&data, normalize, &tc)?;
                    write_text(&out, &model.to_json()?)?;
                    report
                }
            };
            println!(
                "{} support vectors of {}, training accuracy {}",
                report.n_support, report.n_train, report.training_accuracy
            );
        }
        Command::AttackFeature {
            epsilon,
            model,
            features,
            manipulation,
            normalize,
            common,
        } => match (model, features, manipulation) {
            (Some(model), Some(features), None) => {
                let out = need_out(&common, "cache of attacked vectors")?;
                let det = Detector::load(&model)?;
                let cache = FeatureCache::load(&features)?;
                let cfg = FeatureAttackConfig::with_epsilon(epsilon);
                let mut attacked = FeatureCache::new(cache.dim);
                let mut set = rfs_forensics::harness::AttackSet {
                    names: Vec::new(),
                    summaries: Vec::new(),
                    attacked: Vec::new(),
                };
                for e in &cache.entries {
                    let o = attack_feature_domain(det.target(), &e.values, &cfg)
                        .map_err(|err| err.context(e.path.clone()))?;
                    set.names.push(e.path.clone());
                    set.summaries.push(o.summary());
                    attacked.push(FeatureEntry {
                        path: e.path.clone(),
                        image_hash: e.image_hash,
                        values: o.payload,
                    })?;
                }
                attacked.save(&out)?;
                println!("wrote {}", out.display());
                write_text(&out.with_extension("csv"), &set.to_csv())?;
                println!("success rate {}", set.success_rate());
            }
            (None, None, Some(kind)) => {
                let mut ws = Workspace::open(load_config(&common)?)?;
                let set = ws.feature_attack(kind, normalize, epsilon)?;
                println!(
                    "{kind}: success rate {} over {} images, mean feature SNR {:?} dB",
                    set.success_rate(),
                    set.names.len(),
                    set.mean_feature_snr()
                );
            }
            _ => {
                return Err(Error::param(
                    "give --model with --features, or --manipulation",
                ))
            }
        },
        Command::AttackPixel {
            epsilon,
            model,
            input,
            manipulation,
            normalize,
            common,
        } => match (model, input, manipulation) {
            (Some(model), Some(input), None) => {
                let out = need_out(&common, "output directory")?;
                let model = load_model(&model)?;
                let cfg = PixelAttackConfig {
                    epsilon,
                    ..PixelAttackConfig::default()
                };
                let mut set = rfs_forensics::harness::AttackSet {
                    names: Vec::new(),
                    summaries: Vec::new(),
                    attacked: Vec::new(),
                };
                for f in list_images(&input)? {
                    let img = read_image(&f)?;
                    let o = attack_pixel_domain(&model, &img, &cfg)
                        .map_err(|e| e.context(f.display().to_string()))?;
                    let rel = f.strip_prefix(&input).unwrap_or(&f).with_extension("pgm");
                    write_file(out.join(&rel), &o.payload.to_pgm())?;
                    set.names.push(rel.to_string_lossy().into_owned());
                    set.summaries.push(o.summary());
                }
                write_text(&out.join("attack.csv"), &set.to_csv())?;
                println!(
                    "success rate {}, mean PSNR {:?} dB",
                    set.success_rate(),
                    set.mean_psnr()
                );
            }
            (None, None, Some(kind)) => {
                let mut ws = Workspace::open(load_config(&common)?)?;
                let set = ws.pixel_attack(kind, normalize, epsilon)?;
                println!(
                    "{kind}: success rate {} over {} images, mean PSNR {:?} dB",
                    set.success_rate(),
                    set.names.len(),
                    set.mean_psnr()
                );
            }
            _ => return Err(Error::param("give --model with --input, or --manipulation")),
        },
        Command::AttackEot {
            manipulation,
            k,
            ensemble,
            epsilon,
            maps,
            common,
        } => {
            let mut ws = Workspace::open(load_config(&common)?)?;
            let maps = maps.unwrap_or(ws.config.maps_per_k);
            let mut rec = StageRecorder::start("attack-eot", &ws.out);
            let set = ws.eot_attack(manipulation, k, ensemble, epsilon, &mut rec)?;
            let table = ws.security(
                manipulation,
                false,
                epsilon,
                &format!("eot{ensemble}"),
                &set.attacked,
                &[k],
                maps,
                &mut rec,
            )?;
            let base = format!("eot/{manipulation}_k{k}_n{ensemble}_eps{epsilon}");
            rec.write(&format!("{base}_attack.csv"), set.to_csv().as_bytes())?;
            rec.write(&format!("{base}.csv"), table.to_csv().as_bytes())?;
            rec.write(
                &format!("{base}_summary.csv"),
                table.summary_csv().as_bytes(),
            )?;
            ws.push_stage(rec.finish());
            print_summary(&table);
            println!("results in {}", ws.out.join("eot").display());
        }
        Command::SweepK {
            manipulation,
            attack,
            epsilon,
            normalize,
            ks,
            maps,
            ensemble,
            common,
        } => {
            let mut ws = Workspace::open(load_config(&common)?)?;
            let ks = if ks.is_empty() {
                ws.config.ks.clone()
            } else {
                ks
            };
            let mut rec = StageRecorder::start("sweep-k", &ws.out);
            let table = match attack {
                AttackKind::Feature | AttackKind::Pixel => {
                    let set = if attack == AttackKind::Feature {
                        ws.feature_attack(manipulation, normalize, epsilon)?
                    } else {
                        ws.pixel_attack(manipulation, normalize, epsilon)?
                    };
                    let maps = maps.unwrap_or(if attack == AttackKind::Feature {
                        ws.config.maps_per_k
                    } else {
                        ws.config.pixel_maps_per_k
                    });
                    ws.security(
                        manipulation,
                        normalize,
                        epsilon,
                        attack.label(),
                        &set.attacked,
                        &ks,
                        maps,
                        &mut rec,
                    )?
                }
                AttackKind::Eot => {
                    if normalize {
                        return Err(Error::param("the ensemble attack sweep uses raw features"));
                    }
                    let maps = maps.unwrap_or(ws.config.maps_per_k);
                    let mut all = SecurityTable {
                        rows: Vec::new(),
                        summary: Vec::new(),
                    };
                    for &k in &ks {
                        let set = ws.eot_attack(manipulation, k, ensemble, epsilon, &mut rec)?;
                        let t = ws.security(
                            manipulation,
                            false,
                            epsilon,
                            &format!("eot{ensemble}"),
                            &set.attacked,
                            &[k],
                            maps,
                            &mut rec,
                        )?;
                        all.rows.extend(t.rows);
                        all.summary.extend(t.summary);
                    }
                    all
                }
            };
            let name = format!(
                "sweeps/{manipulation}_{attack}_{}_eps{epsilon}",
                if normalize { "norm" } else { "raw" }
            );
            rec.write(&format!("{name}.csv"), table.to_csv().as_bytes())?;
            rec.write(
                &format!("{name}_summary.csv"),
                table.summary_csv().as_bytes(),
            )?;
            ws.push_stage(rec.finish());
            print_summary(&table);
            println!("results in {}", ws.out.join("sweeps").display());
        }
        Command::TheorySim {
            regime,
            n,
            z,
            alphas,
            ks,
            reps,
            samples,
            common,
        } => {
            let cfg = load_config(&common)?;
            let out = need_out(&common, "CSV file")?;
            let n = n.unwrap_or(cfg.theory.n);
            let defaults = TheorySweepConfig::default();
            let sc = TheorySweepConfig {
                n,
                z_target: z.unwrap_or(cfg.theory.z),
                alphas: if alphas.is_empty() {
                    defaults.alphas.clone()
                } else {
                    alphas
                },
                ks: if ks.is_empty() {
                    let mut v: Vec<usize> =
                        defaults.ks.iter().copied().filter(|&k| k < n).collect();
                    v.push(n);
                    v
                } else {
                    ks
                },
                regime,
                repetitions: reps.unwrap_or(cfg.theory.repetitions),
                samples_per_point: samples.unwrap_or(cfg.theory.samples_per_point),
                master_seed: cfg.master_seed,
                ..defaults
            };
            write_text(&out, &run_error_sweep(&sc)?.to_csv())?;
        }
        Command::AngleHist {
            regime,
            n,
            ks,
            draws,
            bins,
            common,
        } => {
            let cfg = load_config(&common)?;
            let out = need_out(&common, "CSV file")?;
            let ks = if ks.is_empty() {
                cfg.theory.angle_ks.clone()
            } else {
                ks
            };
            let hists = run_angle_histogram(
                n.unwrap_or(cfg.theory.n),
                &ks,
                draws.unwrap_or(cfg.theory.angle_draws),
                regime,
                bins.unwrap_or(cfg.theory.angle_bins),
                cfg.master_seed,
            )?;
            write_text(&out, &histograms_to_csv(&hists, regime))?;
            for h in &hists {
                println!("k = {}: mean angle {:.2} deg", h.k, h.mean_angle);
            }
        }
        Command::Recipe {
            name,
            list,
            no_auto_build,
            common,
        } => {
            if list || name.is_none() {
                for r in Recipe::ALL {
                    println!("{:<7} {}", r.label(), r.description());
                }
                return Ok(());
            }
            let mut cfg = load_config(&common)?;
            if no_auto_build {
                cfg.auto_build = false;
            }
            let mut ws = Workspace::open(cfg)?;
            let out = run_recipe_in(&mut ws, name.unwrap())?;
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            println!("manifest {}", out.manifest_path.display());
        }
    }
    Ok(())
}

fn print_summary(table: &SecurityTable) {
    println!("k\tmaps\tfa\tmd_clean\tmd_attacked");
    for s in &table.summary {
        println!(
            "{}\t{}\t{:.3}\t{:.3}\t{:.3}",
            s.k, s.maps, s.fa, s.md_clean, s.md_attacked
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    log::debug!("{WORKERS_ENV} = {:?}", std::env::var(WORKERS_ENV).ok());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
