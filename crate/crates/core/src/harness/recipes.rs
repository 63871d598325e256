use super::config::ExperimentConfig;
use super::dataset::{class_label, prepare_dataset, Split, SplitManifest, DATASET_MANIFEST};
use super::features::{extract_cached, FeatureCache, FeatureEntry};
use super::manifest::{read_json, sha256_hex, write_json, RunManifest, StageRecord, StageRecorder};
use crate::error::{Error, Result};
use crate::image::read_image;
use crate::manipulation::{mean_finite, ManipulationKind};
use crate::ml_attack::{
    attack_eot, attack_feature_domain, attack_pixel_domain, evaluate_rfs_security,
    security_map_seed, train_full_detector, train_rfs_detectors, AttackSummary, Ensemble,
    FeatureAttackConfig, LabeledFeatures, PixelAttackConfig, SecurityConfig, SecurityTable,
};
use crate::montecarlo::{
    histograms_to_csv, run_angle_histogram, run_error_sweep, TheorySweepConfig,
};
use crate::reduction::ReductionKind;
use crate::seed::derive_seed;
use crate::spam::extract_spam;
use crate::svm::{load_model, SvmModel, TrainConfig, TrainReport};
use crate::synthetic::Regime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    Fig2,
    Fig3,
    Fig4,
    Table1,
    Table4,
    Table5,
    Fig5,
    Fig6,
    Fig7,
    Fig9,
}

impl Recipe {
    pub const ALL: [Recipe; 10] = [
        Recipe::Fig2,
        Recipe::Fig3,
        Recipe::Fig4,
        Recipe::Table1,
        Recipe::Table4,
        Recipe::Table5,
        Recipe::Fig5,
        Recipe::Fig6,
        Recipe::Fig7,
        Recipe::Fig9,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Recipe::Fig2 => "fig2",
            Recipe::Fig3 => "fig3",
            Recipe::Fig4 => "fig4",
            Recipe::Table1 => "table1",
            Recipe::Table4 => "table4",
            Recipe::Table5 => "table5",
            Recipe::Fig5 => "fig5",
            Recipe::Fig6 => "fig6",
            Recipe::Fig7 => "fig7",
            Recipe::Fig9 => "fig9",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Recipe::Fig2 => "Gaussian model, i.i.d. features: missed detection vs k for RFS and RP, with and without attack",
            Recipe::Fig3 => "Gaussian model, dependent features (raw and normalized): missed detection vs k",
            Recipe::Fig4 => "angle-mismatch histograms for dependent raw and normalized features",
            Recipe::Table1 => "full-feature SVM accuracy per manipulation, clean and under feature-domain attack",
            Recipe::Table4 => "feature SNR of feature-domain attacks per manipulation and epsilon",
            Recipe::Table5 => "PSNR of pixel-domain attacks per manipulation and epsilon",
            Recipe::Fig5 => "RFS security vs k under feature-domain attack, AHE and MF3, raw and normalized",
            Recipe::Fig6 => "RFS security vs k under feature-domain attack, MF5 and MF7, raw features",
            Recipe::Fig7 => "RFS security vs k under pixel-domain attack, AHE and MF3",
            Recipe::Fig9 => "RFS security vs k under the ensemble (EOT) attack, AHE and MF3",
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Recipe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = Recipe::ALL.iter().map(|r| r.label()).collect();
                Error::param(format!(
                    "unknown recipe `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Empty CSV cell for `None`.
fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn norm_label(normalize: bool) -> &'static str {
    if normalize {
        "norm"
    } else {
        "raw"
    }
}

/// Attacked feature vectors of the manipulated test images, with per-image outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSet {
    pub names: Vec<String>,
    pub summaries: Vec<AttackSummary>,
    #[serde(skip)]
    pub attacked: Vec<Vec<f64>>,
}

impl AttackSet {
    pub fn success_rate(&self) -> f64 {
        self.summaries.iter().filter(|s| s.success).count() as f64 / self.summaries.len() as f64
    }

    pub fn mean_psnr(&self) -> Option<f64> {
        mean_finite(self.summaries.iter().filter_map(|s| s.distortion.psnr_db))
    }

    pub fn mean_feature_snr(&self) -> Option<f64> {
        mean_finite(
            self.summaries
                .iter()
                .filter_map(|s| s.distortion.feature_snr_db),
        )
    }

    pub fn mean_iterations(&self) -> f64 {
        self.summaries
            .iter()
            .map(|s| s.iterations as f64)
            .sum::<f64>()
            / self.summaries.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "image,status,success,iterations,initial_probability,final_probability,psnr_db,feature_snr_db,feature_distance\n",
        );
        for (n, r) in self.names.iter().zip(&self.summaries) {
            let status = serde_json::to_value(r.status).ok();
            let status = status.as_ref().and_then(|v| v.as_str()).unwrap_or("");
            let _ = writeln!(
                s,
                "{n},{status},{},{},{},{},{},{},{}",
                r.success,
                r.iterations,
                r.initial_probability,
                r.final_probability,
                opt(r.distortion.psnr_db),
                opt(r.distortion.feature_snr_db),
                r.distortion.feature_distance
            );
        }
        s
    }
}

/// Output directory of a configuration plus the artifacts built so far.
/// Intermediate artifacts are rebuilt when their inputs change (keyed by
/// content hash) if `auto_build` is on, and reported as missing otherwise.
pub struct Workspace {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    stages: Vec<StageRecord>,
    dataset: Option<SplitManifest>,
    features: HashMap<(Option<ManipulationKind>, Split), (FeatureCache, String)>,
}

fn missing(artifact: &str, producer: impl Into<String>) -> Error {
    Error::MissingDependency {
        artifact: artifact.to_string(),
        producer: producer.into(),
    }
}

fn eps_label(e: f64) -> String {
    format!("eps{e}")
}

impl Workspace {
    pub fn open(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let out = config.out_dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Workspace {
            config,
            out,
            stages: Vec::new(),
            dataset: None,
            features: HashMap::new(),
        })
    }

    /// Stages executed so far, in order.
    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    pub fn push_stage(&mut self, stage: StageRecord) {
        self.stages.push(stage);
    }

    fn seed(&self, stage: &str, indices: &[u64]) -> u64 {
        derive_seed(self.config.master_seed, stage, indices)
    }

    /// Runs `build` unless `rel` exists with the same input key.
    fn keyed(
        &mut self,
        rel: &str,
        key: &str,
        producer: &str,
        build: impl FnOnce(&mut Self, &mut StageRecorder) -> Result<()>,
    ) -> Result<()> {
        let key_path = self.out.join(format!("{rel}.key"));
        let exists = self.out.join(rel).exists();
        if exists && std::fs::read_to_string(&key_path).ok().as_deref() == Some(key) {
            return Ok(());
        }
        if !self.config.auto_build {
            let what = if exists {
                format!("{rel} (stale)")
            } else {
                rel.to_string()
            };
            return Err(missing(&what, producer));
        }
        log::info!("building {rel}");
        let mut rec = StageRecorder::start(rel, &self.out);
        build(self, &mut rec).map_err(|e| e.context(format!("building {rel}")))?;
        super::manifest::write_file(&key_path, key.as_bytes())?;
        self.stages.push(rec.finish());
        Ok(())
    }

    fn config_hint(&self) -> String {
        format!("--config <config.json> --out {}", self.out.display())
    }

    pub fn dataset(&mut self) -> Result<SplitManifest> {
        if let Some(d) = &self.dataset {
            return Ok(d.clone());
        }
        let path = self.out.join(DATASET_MANIFEST);
        let current = if path.exists() {
            SplitManifest::load(&self.out).ok().filter(|m| {
                m.master_seed == self.config.master_seed
                    && m.source == self.config.corpus
                    && m.downsample == self.config.downsample
                    && m.train.len() == self.config.train_size
                    && m.test.len() == self.config.test_size
                    && self
                        .config
                        .manipulations
                        .iter()
                        .all(|k| m.manipulations.contains(k))
            })
        } else {
            None
        };
        let manifest = match current {
            Some(m) => m,
            None if self.config.auto_build => {
                let mut rec = StageRecorder::start("prepare", &self.out);
                let m = prepare_dataset(&self.config)?;
                rec.seed("dataset-split", &[], self.seed("dataset-split", &[]));
                rec.record(DATASET_MANIFEST)?;
                self.stages.push(rec.finish());
                m
            }
            None => {
                let what = if path.exists() {
                    format!("{DATASET_MANIFEST} (does not match the config)")
                } else {
                    DATASET_MANIFEST.to_string()
                };
                return Err(missing(
                    &what,
                    format!("rfs prepare {}", self.config_hint()),
                ));
            }
        };
        self.dataset = Some(manifest.clone());
        Ok(manifest)
    }

    fn features_rel(class: Option<ManipulationKind>, split: Split) -> String {
        format!("features/{}_{}.bin", class_label(class), split)
    }

    /// Features of one class and split, checked entry by entry against the
    /// content hashes of the dataset images.
    pub fn features(
        &mut self,
        class: Option<ManipulationKind>,
        split: Split,
    ) -> Result<FeatureCache> {
        Ok(self.features_with_hash(class, split)?.0)
    }

    fn features_with_hash(
        &mut self,
        class: Option<ManipulationKind>,
        split: Split,
    ) -> Result<(FeatureCache, String)> {
        if let Some(c) = self.features.get(&(class, split)) {
            return Ok(c.clone());
        }
        let dataset = self.dataset()?;
        let rel = Self::features_rel(class, split);
        let path = self.out.join(&rel);
        let previous = if path.exists() {
            match FeatureCache::load(&path) {
                Ok(c) => Some(c),
                Err(e) => {
                    log::warn!("discarding unreadable feature cache {rel}: {e}");
                    None
                }
            }
        } else {
            None
        };
        if previous.is_none() && !self.config.auto_build {
            return Err(missing(
                &rel,
                format!("rfs extract-features {}", self.config_hint()),
            ));
        }
        let images = dataset.read_images(&self.out, class, split)?;
        let (cache, reused) = extract_cached(&images, previous.as_ref())?;
        let bytes = cache.to_bytes();
        if previous.as_ref() != Some(&cache) {
            if previous.is_some() && !self.config.auto_build {
                return Err(Error::CacheInvalid(rel));
            }
            log::info!("{rel}: {reused} of {} entries reused", cache.len());
            let mut rec = StageRecorder::start("extract-features", &self.out);
            rec.write(&rel, &bytes)?;
            self.stages.push(rec.finish());
        }
        let hash = sha256_hex(&bytes);
        self.features
            .insert((class, split), (cache.clone(), hash.clone()));
        Ok((cache, hash))
    }

    pub fn labeled(&mut self, kind: ManipulationKind, split: Split) -> Result<LabeledFeatures> {
        Ok(LabeledFeatures {
            originals: self.features(None, split)?.vectors(),
            manipulated: self.features(Some(kind), split)?.vectors(),
        })
    }

    pub fn model_rel(kind: ManipulationKind, normalize: bool) -> String {
        format!("models/{kind}_{}.json", norm_label(normalize))
    }

    fn train_config(&self, stage: &str, indices: &[u64]) -> TrainConfig {
        TrainConfig {
            seed: self.seed(stage, indices),
            ..self.config.svm.clone()
        }
    }

    /// Full-feature detector for `kind`.
    pub fn model(&mut self, kind: ManipulationKind, normalize: bool) -> Result<SvmModel> {
        let rel = Self::model_rel(kind, normalize);
        let (_, h_orig) = self.features_with_hash(None, Split::Train)?;
        let (_, h_man) = self.features_with_hash(Some(kind), Split::Train)?;
        let idx = [kind as u64, u64::from(normalize)];
        let tc = self.train_config("full-detector", &idx);
        let key = sha256_hex(
            format!(
                "model|{kind}|{normalize}|{h_orig}|{h_man}|{}",
                serde_json::to_string(&tc)?
            )
            .as_bytes(),
        );
        let producer = format!("rfs train-svm --manipulation {kind} {}", self.config_hint());
        self.keyed(&rel, &key, &producer, |ws, rec| {
            let data = ws.labeled(kind, Split::Train)?;
            let (model, report) = train_full_detector(&data, normalize, &tc)?;
            rec.seed("full-detector", &idx, tc.seed);
            rec.write(&rel, model.to_json()?.as_bytes())?;
            rec.write(
                &rel.replace(".json", ".report.json"),
                serde_json::to_string_pretty(&report)?.as_bytes(),
            )?;
            Ok(())
        })?;
        load_model(self.out.join(&rel))
    }

    pub fn train_report(&mut self, kind: ManipulationKind, normalize: bool) -> Result<TrainReport> {
        self.model(kind, normalize)?;
        read_json(
            self.out
                .join(Self::model_rel(kind, normalize).replace(".json", ".report.json")),
        )
    }

    fn load_attack_set(&self, base: &str) -> Result<AttackSet> {
        let mut set: AttackSet = read_json(self.out.join(format!("{base}.json")))?;
        let cache = FeatureCache::load(self.out.join(format!("{base}.bin")))?;
        set.attacked = cache.vectors();
        Ok(set)
    }

    fn write_attack_set(
        rec: &mut StageRecorder,
        base: &str,
        set: &AttackSet,
        entries: Vec<FeatureEntry>,
    ) -> Result<()> {
        let mut cache = FeatureCache::new(crate::spam::SPAM_DIM);
        for e in entries {
            cache.push(e)?;
        }
        rec.write(&format!("{base}.bin"), &cache.to_bytes())?;
        rec.write(
            &format!("{base}.json"),
            serde_json::to_string_pretty(set)?.as_bytes(),
        )?;
        rec.write(&format!("{base}.csv"), set.to_csv().as_bytes())?;
        Ok(())
    }

    /// Feature-domain attack of every manipulated test image against the full detector.
    pub fn feature_attack(
        &mut self,
        kind: ManipulationKind,
        normalize: bool,
        epsilon: f64,
    ) -> Result<AttackSet> {
        let model = self.model(kind, normalize)?;
        let (test, h_test) = self.features_with_hash(Some(kind), Split::Test)?;
        let cfg = FeatureAttackConfig::with_epsilon(epsilon);
        let base = format!(
            "attacks/feature_{kind}_{}_{}",
            norm_label(normalize),
            eps_label(epsilon)
        );
        let key = sha256_hex(
            format!(
                "feature-attack|{}|{h_test}|{}",
                model.content_hash()?,
                serde_json::to_string(&cfg)?
            )
            .as_bytes(),
        );
        let producer = format!(
            "rfs attack-feature --manipulation {kind} --epsilon {epsilon} {}",
            self.config_hint()
        );
        self.keyed(&format!("{base}.bin"), &key, &producer, |_, rec| {
            let outcomes = test
                .entries
                .par_iter()
                .map(|e| attack_feature_domain(&model, &e.values, &cfg))
                .collect::<Result<Vec<_>>>()?;
            let set = AttackSet {
                names: test.entries.iter().map(|e| e.path.clone()).collect(),
                summaries: outcomes.iter().map(|o| o.summary()).collect(),
                attacked: Vec::new(),
            };
            let entries = test
                .entries
                .iter()
                .zip(outcomes)
                .map(|(e, o)| FeatureEntry {
                    path: e.path.clone(),
                    image_hash: e.image_hash,
                    values: o.payload,
                })
                .collect();
            Self::write_attack_set(rec, &base, &set, entries)
        })?;
        self.load_attack_set(&base)
    }

    /// Pixel-domain attack of the first `pixel_images` manipulated test images.
    pub fn pixel_attack(
        &mut self,
        kind: ManipulationKind,
        normalize: bool,
        epsilon: f64,
    ) -> Result<AttackSet> {
        let model = self.model(kind, normalize)?;
        let (test, h_test) = self.features_with_hash(Some(kind), Split::Test)?;
        let count = self.config.pixel_images.min(test.len());
        let cfg = PixelAttackConfig {
            epsilon,
            ..PixelAttackConfig::default()
        };
        let base = format!(
            "attacks/pixel_{kind}_{}_{}",
            norm_label(normalize),
            eps_label(epsilon)
        );
        let key = sha256_hex(
            format!(
                "pixel-attack|{}|{h_test}|{count}|{}",
                model.content_hash()?,
                serde_json::to_string(&cfg)?
            )
            .as_bytes(),
        );
        let producer = format!(
            "rfs attack-pixel --manipulation {kind} --epsilon {epsilon} {}",
            self.config_hint()
        );
        let out = self.out.clone();
        self.keyed(&format!("{base}.bin"), &key, &producer, |_, rec| {
            let chosen = &test.entries[..count];
            let results = chosen
                .par_iter()
                .map(|e| {
                    let img = read_image(out.join(&e.path))?;
                    super::features::verify_entry(e, &img)?;
                    let o = attack_pixel_domain(&model, &img, &cfg)
                        .map_err(|err| err.context(e.path.clone()))?;
                    let values = extract_spam(&o.payload)?.into_vec();
                    Ok((o, values))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut entries = Vec::with_capacity(count);
            for (e, (o, values)) in chosen.iter().zip(&results) {
                let name = Path::new(&e.path)
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                rec.write(&format!("{base}/{name}"), &o.payload.to_pgm())?;
                entries.push(FeatureEntry {
                    path: format!("{base}/{name}"),
                    image_hash: o.payload.content_hash(),
                    values: values.clone(),
                });
            }
            let set = AttackSet {
                names: chosen.iter().map(|e| e.path.clone()).collect(),
                summaries: results.iter().map(|(o, _)| o.summary()).collect(),
                attacked: Vec::new(),
            };
            Self::write_attack_set(rec, &base, &set, entries)
        })?;
        self.load_attack_set(&base)
    }

    /// RFS security sweep over `config.ks` against an attacked set.
    pub fn security(
        &mut self,
        kind: ManipulationKind,
        normalize: bool,
        epsilon: f64,
        attack_kind: &str,
        attacked: &[Vec<f64>],
        ks: &[usize],
        maps_per_k: usize,
        rec: &mut StageRecorder,
    ) -> Result<SecurityTable> {
        let train = self.labeled(kind, Split::Train)?;
        let test = self.labeled(kind, Split::Test)?;
        let cfg = SecurityConfig {
            manipulation: kind,
            ks: ks.to_vec(),
            maps_per_k,
            normalize,
            epsilon,
            attack_kind: attack_kind.to_string(),
            seed: self.config.master_seed,
            train: self.config.svm.clone(),
        };
        for &k in ks {
            for i in 0..maps_per_k {
                rec.seed(
                    "rfs-security-map",
                    &[k as u64, i as u64],
                    security_map_seed(cfg.seed, k, i),
                );
            }
        }
        evaluate_rfs_security(&train, &test, attacked, &cfg)
    }

    /// Ensemble attack at reduced dimension `k` with `size` attacker detectors.
    pub fn eot_attack(
        &mut self,
        kind: ManipulationKind,
        k: usize,
        size: usize,
        epsilon: f64,
        rec: &mut StageRecorder,
    ) -> Result<AttackSet> {
        let train = self.labeled(kind, Split::Train)?;
        let test = self.features(Some(kind), Split::Test)?;
        let stage = "eot-attacker";
        for i in 0..size {
            rec.seed(
                stage,
                &[k as u64, i as u64],
                derive_seed(self.config.master_seed, stage, &[k as u64, i as u64]),
            );
        }
        let members = train_rfs_detectors(
            &train,
            k,
            size,
            false,
            &self.config.svm,
            self.config.master_seed,
            stage,
        )?;
        let ensemble = Ensemble::new(&members, None)?;
        let cfg = FeatureAttackConfig::with_epsilon(epsilon);
        let outcomes = test
            .entries
            .par_iter()
            .map(|e| attack_eot(&ensemble, &e.values, &cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(AttackSet {
            names: test.entries.iter().map(|e| e.path.clone()).collect(),
            summaries: outcomes.iter().map(|o| o.summary()).collect(),
            attacked: outcomes.into_iter().map(|o| o.payload).collect(),
        })
    }
}

/// Files produced by a recipe run and the manifest describing it.
#[derive(Debug, Clone)]
pub struct RecipeOutput {
    pub files: Vec<PathBuf>,
    pub manifest_path: PathBuf,
    pub manifest: RunManifest,
}

fn theory_ks(n: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = TheorySweepConfig::default()
        .ks
        .into_iter()
        .filter(|&k| k < n)
        .collect();
    ks.push(n);
    ks
}

fn record_theory_seeds(rec: &mut StageRecorder, cfg: &TheorySweepConfig) {
    let m = cfg.master_seed;
    for rep in 0..cfg.repetitions as u64 {
        if cfg.regime != Regime::Iid {
            rec.seed(
                "theory-model",
                &[rep],
                derive_seed(m, "theory-model", &[rep]),
            );
        }
        for kind in &cfg.kinds {
            let kind_index = match kind {
                ReductionKind::Rfs => 0,
                ReductionKind::Rp => 1,
            };
            for &k in &cfg.ks {
                let idx = [kind_index, k as u64, rep];
                rec.seed("theory-map", &idx, derive_seed(m, "theory-map", &idx));
                if cfg.samples_per_point > 0 {
                    for ai in 0..cfg.alphas.len() as u64 {
                        let idx = [kind_index, k as u64, ai, rep];
                        rec.seed(
                            "theory-samples",
                            &idx,
                            derive_seed(m, "theory-samples", &idx),
                        );
                    }
                }
            }
        }
    }
}

fn pick(
    config: &ExperimentConfig,
    wanted: &[ManipulationKind],
    recipe: Recipe,
) -> Result<Vec<ManipulationKind>> {
    let got: Vec<ManipulationKind> = wanted
        .iter()
        .copied()
        .filter(|k| config.manipulations.contains(k))
        .collect();
    if got.is_empty() {
        let names: Vec<&str> = wanted.iter().map(|k| k.label()).collect();
        return Err(Error::param(format!(
            "recipe {recipe} needs one of [{}] in `manipulations`",
            names.join(", ")
        )));
    }
    Ok(got)
}

fn sweep_files(
    rec: &mut StageRecorder,
    files: &mut Vec<PathBuf>,
    dir: &str,
    name: &str,
    table: &SecurityTable,
) -> Result<()> {
    files.push(rec.write(&format!("{dir}/{name}.csv"), table.to_csv().as_bytes())?);
    files.push(rec.write(
        &format!("{dir}/{name}_summary.csv"),
        table.summary_csv().as_bytes(),
    )?);
    Ok(())
}

fn run_in(ws: &mut Workspace, recipe: Recipe, rec: &mut StageRecorder) -> Result<Vec<PathBuf>> {
    let cfg = ws.config.clone();
    let th = &cfg.theory;
    let dir = recipe.label();
    let mut files = Vec::new();
    match recipe {
        Recipe::Fig2 | Recipe::Fig3 => {
            let regimes: &[Regime] = if recipe == Recipe::Fig2 {
                &[Regime::Iid]
            } else {
                &[Regime::Dependent, Regime::DependentNormalized]
            };
            for &regime in regimes {
                let sc = TheorySweepConfig {
                    n: th.n,
                    z_target: th.z,
                    alphas: vec![1.2, 2.0],
                    ks: theory_ks(th.n),
                    kinds: vec![ReductionKind::Rfs, ReductionKind::Rp],
                    regime,
                    repetitions: th.repetitions,
                    samples_per_point: th.samples_per_point,
                    master_seed: cfg.master_seed,
                    ..TheorySweepConfig::default()
                };
                record_theory_seeds(rec, &sc);
                let result = run_error_sweep(&sc)?;
                files.push(rec.write(
                    &format!("{dir}/{}.csv", regime.label()),
                    result.to_csv().as_bytes(),
                )?);
            }
        }
        Recipe::Fig4 => {
            for regime in [Regime::Dependent, Regime::DependentNormalized] {
                for d in 0..th.angle_draws as u64 {
                    if regime != Regime::Iid {
                        rec.seed(
                            "angle-model",
                            &[d],
                            derive_seed(cfg.master_seed, "angle-model", &[d]),
                        );
                    }
                    for &k in &th.angle_ks {
                        let idx = [k as u64, d];
                        rec.seed(
                            "angle-map",
                            &idx,
                            derive_seed(cfg.master_seed, "angle-map", &idx),
                        );
                    }
                }
                let hists = run_angle_histogram(
                    th.n,
                    &th.angle_ks,
                    th.angle_draws,
                    regime,
                    th.angle_bins,
                    cfg.master_seed,
                )?;
                files.push(rec.write(
                    &format!("{dir}/{}.csv", regime.label()),
                    histograms_to_csv(&hists, regime).as_bytes(),
                )?);
                let mut means = String::from("regime,k,draws,mean_angle_deg\n");
                for h in &hists {
                    let _ = writeln!(
                        means,
                        "{},{},{},{}",
                        regime.label(),
                        h.k,
                        h.angles.len(),
                        h.mean_angle
                    );
                }
                files.push(rec.write(
                    &format!("{dir}/{}_means.csv", regime.label()),
                    means.as_bytes(),
                )?);
            }
        }
        Recipe::Table1 => {
            let mut s = String::from(
                "manipulation,normalized,n_support,n_train,sv_fraction,test_accuracy,false_alarm,missed_detection,epsilon,attacked_missed_detection,attack_success_rate\n",
            );
            for &kind in &cfg.manipulations {
                let model = ws.model(kind, cfg.normalize)?;
                let report = ws.train_report(kind, cfg.normalize)?;
                let test = ws.labeled(kind, Split::Test)?;
                let fa = detection_rate(&model, &test.originals)?;
                let md = 1.0 - detection_rate(&model, &test.manipulated)?;
                let acc = 1.0
                    - (fa * test.originals.len() as f64 + md * test.manipulated.len() as f64)
                        / (test.originals.len() + test.manipulated.len()) as f64;
                for &eps in &cfg.epsilons {
                    let set = ws.feature_attack(kind, cfg.normalize, eps)?;
                    let md_att = 1.0 - detection_rate(&model, &set.attacked)?;
                    let _ = writeln!(
                        s,
                        "{kind},{},{},{},{},{acc},{fa},{md},{eps},{md_att},{}",
                        cfg.normalize,
                        report.n_support,
                        report.n_train,
                        report.n_support as f64 / report.n_train as f64,
                        set.success_rate()
                    );
                }
            }
            files.push(rec.write(&format!("{dir}/accuracy.csv"), s.as_bytes())?);
        }
        Recipe::Table4 => {
            let mut s = String::from("manipulation,normalized,epsilon,images,success_rate,mean_feature_snr_db,mean_iterations\n");
            for &kind in &cfg.manipulations {
                for &eps in &cfg.epsilons {
                    let set = ws.feature_attack(kind, cfg.normalize, eps)?;
                    let _ = writeln!(
                        s,
                        "{kind},{},{eps},{},{},{},{}",
                        cfg.normalize,
                        set.names.len(),
                        set.success_rate(),
                        opt(set.mean_feature_snr()),
                        set.mean_iterations()
                    );
                }
            }
            files.push(rec.write(&format!("{dir}/feature_snr.csv"), s.as_bytes())?);
        }
        Recipe::Table5 => {
            let mut s = String::from(
                "manipulation,normalized,epsilon,images,success_rate,mean_psnr_db,mean_feature_snr_db,mean_iterations\n",
            );
            for &kind in &cfg.manipulations {
                for &eps in &cfg.epsilons {
                    let set = ws.pixel_attack(kind, cfg.normalize, eps)?;
                    let _ = writeln!(
                        s,
                        "{kind},{},{eps},{},{},{},{},{}",
                        cfg.normalize,
                        set.names.len(),
                        set.success_rate(),
                        opt(set.mean_psnr()),
                        opt(set.mean_feature_snr()),
                        set.mean_iterations()
                    );
                }
            }
            files.push(rec.write(&format!("{dir}/psnr.csv"), s.as_bytes())?);
        }
        Recipe::Fig5 | Recipe::Fig6 => {
            let (kinds, norms): (&[ManipulationKind], &[bool]) = if recipe == Recipe::Fig5 {
                (
                    &[ManipulationKind::Ahe, ManipulationKind::Mf3],
                    &[false, true],
                )
            } else {
                (&[ManipulationKind::Mf5, ManipulationKind::Mf7], &[false])
            };
            for kind in pick(&cfg, kinds, recipe)? {
                for &normalize in norms {
                    for &eps in &cfg.epsilons {
                        let set = ws.feature_attack(kind, normalize, eps)?;
                        let table = ws.security(
                            kind,
                            normalize,
                            eps,
                            "feature",
                            &set.attacked,
                            &cfg.ks,
                            cfg.maps_per_k,
                            rec,
                        )?;
                        let name = format!("{kind}_{}_{}", norm_label(normalize), eps_label(eps));
                        sweep_files(rec, &mut files, dir, &name, &table)?;
                    }
                }
            }
        }
        Recipe::Fig7 => {
            let mut runs: Vec<(ManipulationKind, bool, f64)> = Vec::new();
            for kind in pick(
                &cfg,
                &[ManipulationKind::Ahe, ManipulationKind::Mf3],
                recipe,
            )? {
                runs.extend(cfg.epsilons.iter().map(|&e| (kind, false, e)));
            }
            if cfg.manipulations.contains(&ManipulationKind::Ahe) && cfg.epsilons.contains(&0.5) {
                runs.push((ManipulationKind::Ahe, true, 0.5));
            }
            for (kind, normalize, eps) in runs {
                let set = ws.pixel_attack(kind, normalize, eps)?;
                let table = ws.security(
                    kind,
                    normalize,
                    eps,
                    "pixel",
                    &set.attacked,
                    &cfg.ks,
                    cfg.pixel_maps_per_k,
                    rec,
                )?;
                let name = format!("{kind}_{}_{}", norm_label(normalize), eps_label(eps));
                sweep_files(rec, &mut files, dir, &name, &table)?;
            }
        }
        Recipe::Fig9 => {
            for kind in pick(
                &cfg,
                &[ManipulationKind::Ahe, ManipulationKind::Mf3],
                recipe,
            )? {
                for &size in &cfg.eot_sizes {
                    for &eps in &cfg.epsilons {
                        let mut rows = Vec::new();
                        let mut summary = Vec::new();
                        let mut attack_csv =
                            String::from("k,success_rate,mean_feature_snr_db,mean_iterations\n");
                        for &k in &cfg.ks {
                            let set = ws.eot_attack(kind, k, size, eps, rec)?;
                            let _ = writeln!(
                                attack_csv,
                                "{k},{},{},{}",
                                set.success_rate(),
                                opt(set.mean_feature_snr()),
                                set.mean_iterations()
                            );
                            let t = ws.security(
                                kind,
                                false,
                                eps,
                                &format!("eot{size}"),
                                &set.attacked,
                                &[k],
                                cfg.maps_per_k,
                                rec,
                            )?;
                            rows.extend(t.rows);
                            summary.extend(t.summary);
                        }
                        let table = SecurityTable { rows, summary };
                        let name = format!("{kind}_raw_n{size}_{}", eps_label(eps));
                        sweep_files(rec, &mut files, dir, &name, &table)?;
                        files.push(
                            rec.write(&format!("{dir}/{name}_attack.csv"), attack_csv.as_bytes())?,
                        );
                    }
                }
            }
        }
    }
    Ok(files)
}

/// Fraction of `vs` the model labels manipulated.
fn detection_rate(model: &SvmModel, vs: &[Vec<f64>]) -> Result<f64> {
    let mut hits = 0usize;
    for v in vs {
        hits += usize::from(model.is_manipulated(v)?);
    }
    Ok(hits as f64 / vs.len().max(1) as f64)
}

/// Runs one recipe, building whatever it depends on, and writes
/// `<out>/manifests/<recipe>.json`.
pub fn run_recipe(recipe: Recipe, config: &ExperimentConfig) -> Result<RecipeOutput> {
    let mut ws = Workspace::open(config.clone())?;
    run_recipe_in(&mut ws, recipe)
}

pub fn run_recipe_in(ws: &mut Workspace, recipe: Recipe) -> Result<RecipeOutput> {
    let mut rec = StageRecorder::start(recipe.label(), &ws.out);
    let files = run_in(ws, recipe, &mut rec).map_err(|e| e.context(format!("recipe {recipe}")))?;
    ws.stages.push(rec.finish());
    let mut manifest = RunManifest::new(&ws.config);
    manifest.stages = std::mem::take(&mut ws.stages);
    let manifest_path = ws.out.join(format!("manifests/{recipe}.json"));
    write_json(&manifest_path, &manifest)?;
    Ok(RecipeOutput {
        files,
        manifest_path,
        manifest,
    })
}
