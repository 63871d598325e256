use crate::corpus::CorpusConfig;
use crate::error::{Error, Result};
use crate::manipulation::ManipulationKind;
use crate::spam::SPAM_DIM;
use crate::svm::TrainConfig;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Where the images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CorpusSource {
    /// Any directory of PGM, PNG or JPEG files, searched recursively.
    Directory { path: PathBuf },
    /// The procedural corpus, generated into `<out>/corpus`.
    Synthetic(CorpusConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Feature,
    Pixel,
    Eot,
}

impl AttackKind {
    pub fn label(self) -> &'static str {
        match self {
            AttackKind::Feature => "feature",
            AttackKind::Pixel => "pixel",
            AttackKind::Eot => "eot",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AttackKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "feature" => Ok(AttackKind::Feature),
            "pixel" => Ok(AttackKind::Pixel),
            "eot" => Ok(AttackKind::Eot),
            _ => Err(Error::param(format!("unknown attack kind `{s}`"))),
        }
    }
}

/// Parameters of the Gaussian-model recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub n: usize,
    pub z: f64,
    pub repetitions: usize,
    pub samples_per_point: usize,
    pub angle_draws: usize,
    pub angle_ks: Vec<usize>,
    pub angle_bins: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            n: 300,
            z: 4.0,
            repetitions: 50,
            samples_per_point: 10_000,
            angle_draws: 1000,
            angle_ks: vec![50, 150, 250],
            angle_bins: 18,
        }
    }
}

/// Everything a recipe needs; stored as versioned JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub corpus: CorpusSource,
    pub train_size: usize,
    pub test_size: usize,
    /// Downsample by 4 before use; meant for full-resolution photographs.
    pub downsample: bool,
    pub manipulations: Vec<ManipulationKind>,
    /// Normalization used by the full-detector tables.
    pub normalize: bool,
    pub ks: Vec<usize>,
    pub maps_per_k: usize,
    pub pixel_maps_per_k: usize,
    pub epsilons: Vec<f64>,
    pub attack_kinds: Vec<AttackKind>,
    /// Test images attacked in the pixel domain.
    pub pixel_images: usize,
    pub eot_sizes: Vec<usize>,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    /// Build missing intermediate artifacts instead of failing.
    pub auto_build: bool,
    pub svm: TrainConfig,
    pub theory: TheoryConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_SCHEMA_VERSION,
            corpus: CorpusSource::Synthetic(CorpusConfig::default()),
            train_size: 200,
            test_size: 100,
            downsample: false,
            manipulations: ManipulationKind::ALL.to_vec(),
            normalize: false,
            ks: vec![1, 5, 10, 20, 50, 100, 200, 400, 600, SPAM_DIM],
            maps_per_k: 100,
            pixel_maps_per_k: 20,
            epsilons: vec![0.5, 0.3, 0.1],
            attack_kinds: vec![AttackKind::Feature, AttackKind::Pixel, AttackKind::Eot],
            pixel_images: 30,
            eot_sizes: vec![50, 100],
            master_seed: 0,
            out_dir: PathBuf::from("rfs-out"),
            auto_build: true,
            svm: TrainConfig::default(),
            theory: TheoryConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Split sizes and sweep densities of the full-scale study, reading photographs from `corpus`.
    pub fn full_scale(corpus: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            corpus: CorpusSource::Directory {
                path: corpus.into(),
            },
            train_size: 1400,
            test_size: 600,
            downsample: true,
            pixel_maps_per_k: 100,
            pixel_images: 600,
            theory: TheoryConfig {
                repetitions: 200,
                ..TheoryConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CONFIG_SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(Error::Schema {
                    field: "version".into(),
                    message: format!("unsupported version {v}, expected {CONFIG_SCHEMA_VERSION}"),
                })
            }
            None => {
                return Err(Error::Schema {
                    field: "version".into(),
                    message: "missing or not an integer".into(),
                })
            }
        }
        serde_json::from_value(value).map_err(|e| Error::Schema {
            field: "config".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Checks ranges and that the corpus can supply `train_size + test_size` images.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_SCHEMA_VERSION {
            return Err(Error::param(format!(
                "config version {} is not {CONFIG_SCHEMA_VERSION}",
                self.version
            )));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::param("train and test sizes must be positive"));
        }
        if self.manipulations.is_empty() {
            return Err(Error::param("need at least one manipulation"));
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k == 0 || k > SPAM_DIM) {
            return Err(Error::param(format!("k = {k} outside 1..={SPAM_DIM}")));
        }
        if self.maps_per_k == 0 || self.pixel_maps_per_k == 0 {
            return Err(Error::param("maps per k must be positive"));
        }
        if let Some(e) = self.epsilons.iter().find(|&&e| !(e > 0.0 && e <= 0.5)) {
            return Err(Error::param(format!("epsilon {e} outside (0, 0.5]")));
        }
        if self.eot_sizes.contains(&0) {
            return Err(Error::param("ensemble sizes must be positive"));
        }
        self.svm.validate()?;
        let needed = self.train_size + self.test_size;
        let available = match &self.corpus {
            CorpusSource::Directory { path } => {
                if !path.is_dir() {
                    return Err(Error::param(format!(
                        "corpus directory {} does not exist",
                        path.display()
                    )));
                }
                super::dataset::list_images(path)?.len()
            }
            CorpusSource::Synthetic(c) => c.count,
        };
        if needed > available {
            return Err(Error::param(format!(
                "split {} + {} exceeds the {available} images of the corpus",
                self.train_size, self.test_size
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_partial_files() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let partial = ExperimentConfig::from_json(r#"{"version": 1, "train_size": 20}"#).unwrap();
        assert_eq!(partial.train_size, 20);
        assert_eq!(partial.test_size, cfg.test_size);
    }

    #[test]
    fn schema_errors_name_the_field() {
        match ExperimentConfig::from_json(r#"{"train_size": 20}"#) {
            Err(Error::Schema { field, .. }) => assert_eq!(field, "version"),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::from_json(r#"{"version": 1, "trian_size": 20}"#).is_err());
    }

    #[test]
    fn split_larger_than_corpus_is_rejected() {
        let mut cfg = ExperimentConfig {
            train_size: 250,
            test_size: 100,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.train_size = 200;
        cfg.validate().unwrap();
    }
}
