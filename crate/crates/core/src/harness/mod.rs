//! Experiment orchestration: configuration, dataset preparation, feature
//! caching, run manifests and one recipe per reproduced figure or table.

pub mod config;
pub mod dataset;
pub mod features;
pub mod manifest;
pub mod recipes;

pub use config::{AttackKind, CorpusSource, ExperimentConfig, TheoryConfig, CONFIG_SCHEMA_VERSION};
pub use dataset::{list_images, manipulate_dir, prepare_dataset, Split, SplitManifest};
pub use features::{extract_cached, extract_files, labeled_from_cache, FeatureCache, FeatureEntry};
pub use manifest::{RunManifest, StageRecord, StageRecorder, SEED_DERIVATION};
pub use recipes::{run_recipe, run_recipe_in, AttackSet, Recipe, RecipeOutput, Workspace};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "RFS_WORKERS";

/// Sizes the global worker pool from `RFS_WORKERS` (all cores when unset).
/// Results do not depend on the worker count.
pub fn init_workers() -> crate::Result<usize> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                crate::Error::param(format!(
                    "{WORKERS_ENV} must be a positive integer, got `{v}`"
                ))
            })?,
        Err(_) => 0,
    };
    // a pool that is already built keeps its size
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(rayon::current_num_threads())
}
