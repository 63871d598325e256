use super::config::{CorpusSource, ExperimentConfig};
use super::manifest::{read_json, sha256_hex, write_file, write_json, FileRecord};
use crate::corpus::generate_corpus;
use crate::error::{Error, Result};
use crate::image::{read_image, GrayImage};
use crate::manipulation::{downsample4, ManipulationKind};
use crate::seed::task_rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

pub const IMAGE_EXTENSIONS: [&str; 4] = ["pgm", "png", "jpg", "jpeg"];
pub const DATASET_MANIFEST: &str = "dataset/manifest.json";
/// Smallest side accepted after preprocessing.
pub const MIN_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Originals are `None`.
pub fn class_label(class: Option<ManipulationKind>) -> &'static str {
    class.map_or("original", ManipulationKind::label)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

/// Result of dataset preparation. Paths are relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub master_seed: u64,
    pub source: CorpusSource,
    pub downsample: bool,
    pub manipulations: Vec<ManipulationKind>,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub files: Vec<FileRecord>,
    pub skipped: Vec<SkippedFile>,
}

impl SplitManifest {
    pub fn names(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn image_path(class: Option<ManipulationKind>, split: Split, name: &str) -> String {
        format!("dataset/{}/{}/{name}.pgm", class_label(class), split)
    }

    pub fn load(out_dir: impl AsRef<Path>) -> Result<Self> {
        read_json(out_dir.as_ref().join(DATASET_MANIFEST))
    }

    /// Reads the images of one class and split, in manifest order.
    pub fn read_images(
        &self,
        out_dir: impl AsRef<Path>,
        class: Option<ManipulationKind>,
        split: Split,
    ) -> Result<Vec<(String, GrayImage)>> {
        let out_dir = out_dir.as_ref();
        self.names(split)
            .par_iter()
            .map(|n| {
                let rel = Self::image_path(class, split, n);
                Ok((rel.clone(), read_image(out_dir.join(&rel))?))
            })
            .collect()
    }
}

/// Image files under `root`, recursively, in sorted order.
pub fn list_images(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root.as_ref(), &mut out)?;
    out.sort();
    Ok(out)
}

/// File name used inside the dataset: the relative path with separators and the dot flattened.
fn dataset_name(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.to_string_lossy()
        .chars()
        .map(|c| {
            if c == '/' || c == '\\' || c == '.' {
                '_'
            } else {
                c
            }
        })
        .collect()
}

fn load_source(config: &ExperimentConfig) -> Result<(Vec<(String, GrayImage)>, Vec<SkippedFile>)> {
    match &config.corpus {
        CorpusSource::Synthetic(c) => {
            let images = generate_corpus(c)?;
            Ok((
                images
                    .into_iter()
                    .enumerate()
                    .map(|(i, img)| (format!("img_{i:05}"), img))
                    .collect(),
                Vec::new(),
            ))
        }
        CorpusSource::Directory { path } => {
            let files = list_images(path)?;
            let loaded: Vec<(String, std::result::Result<GrayImage, String>)> = files
                .par_iter()
                .map(|f| {
                    let r = read_image(f).map_err(|e| e.to_string());
                    (f.to_string_lossy().into_owned(), r)
                })
                .collect();
            let mut ok = Vec::new();
            let mut skipped = Vec::new();
            for ((name, r), file) in loaded.into_iter().zip(&files) {
                match r {
                    Ok(img) => ok.push((dataset_name(path, file), img)),
                    Err(reason) => {
                        log::warn!("skipping unreadable image {name}: {reason}");
                        skipped.push(SkippedFile { path: name, reason });
                    }
                }
            }
            Ok((ok, skipped))
        }
    }
}

/// Seeded split of the corpus into train and test sets, with preprocessed
/// originals and every manipulated counterpart written under `<out>/dataset`.
pub fn prepare_dataset(config: &ExperimentConfig) -> Result<SplitManifest> {
    config.validate()?;
    let (mut images, mut skipped) = load_source(config)?;
    if images.is_empty() {
        return Err(Error::param("corpus contains no readable images"));
    }
    if config.downsample {
        images = images
            .into_par_iter()
            .map(|(n, img)| Ok((n, downsample4(&img)?)))
            .collect::<Result<_>>()?;
    }
    images.retain(|(name, img)| {
        let keep = img.width() >= MIN_SIDE && img.height() >= MIN_SIDE;
        if !keep {
            log::warn!("skipping {name}: smaller than {MIN_SIDE}x{MIN_SIDE} after preprocessing");
            skipped.push(SkippedFile {
                path: name.clone(),
                reason: format!("smaller than {MIN_SIDE}x{MIN_SIDE} after preprocessing"),
            });
        }
        keep
    });
    let needed = config.train_size + config.test_size;
    if images.len() < needed {
        return Err(Error::param(format!(
            "only {} usable images, split needs {needed}",
            images.len()
        )));
    }
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut task_rng(config.master_seed, "dataset-split", &[]));
    let pick = |range: std::ops::Range<usize>| -> Vec<usize> { order[range].to_vec() };
    let train = pick(0..config.train_size);
    let test = pick(config.train_size..needed);

    let out = &config.out_dir;
    let mut jobs: Vec<(usize, Split)> = train.iter().map(|&i| (i, Split::Train)).collect();
    jobs.extend(test.iter().map(|&i| (i, Split::Test)));
    let classes: Vec<Option<ManipulationKind>> = std::iter::once(None)
        .chain(config.manipulations.iter().copied().map(Some))
        .collect();
    let per_job: Vec<Vec<FileRecord>> = jobs
        .par_iter()
        .map(|&(i, split)| {
            let (name, img) = &images[i];
            classes
                .iter()
                .map(|&class| {
                    let out_img = match class {
                        None => img.clone(),
                        Some(k) => k.apply(img)?,
                    };
                    let rel = SplitManifest::image_path(class, split, name);
                    let bytes = out_img.to_pgm();
                    write_file(out.join(&rel), &bytes)?;
                    Ok(FileRecord {
                        path: rel,
                        sha256: sha256_hex(&bytes),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.context(name.clone()))
        })
        .collect::<Result<_>>()?;
    let manifest = SplitManifest {
        master_seed: config.master_seed,
        source: config.corpus.clone(),
        downsample: config.downsample,
        manipulations: config.manipulations.clone(),
        train: train.iter().map(|&i| images[i].0.clone()).collect(),
        test: test.iter().map(|&i| images[i].0.clone()).collect(),
        files: per_job.into_iter().flatten().collect(),
        skipped,
    };
    write_json(out.join(DATASET_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Applies `kind` to every image under `input`, mirroring names into `output` as PGM.
pub fn manipulate_dir(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    kind: ManipulationKind,
) -> Result<Vec<PathBuf>> {
    let (input, output) = (input.as_ref(), output.as_ref());
    let files = list_images(input)?;
    if files.is_empty() {
        return Err(Error::param(format!("no images under {}", input.display())));
    }
    files
        .par_iter()
        .map(|f| {
            let rel = f.strip_prefix(input).unwrap_or(f).with_extension("pgm");
            let dst = output.join(rel);
            let img = kind
                .apply(&read_image(f)?)
                .map_err(|e| e.context(f.display().to_string()))?;
            write_file(&dst, &img.to_pgm())?;
            Ok(dst)
        })
        .collect()
}
