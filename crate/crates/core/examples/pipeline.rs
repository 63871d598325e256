//! Runs a recipe end to end through the experiment harness on a small
//! synthetic corpus, then lists the files it wrote and the seeds it used.
//!
//! cargo run --release --example pipeline -- [recipe] [out_dir]

use rfs_forensics::corpus::CorpusConfig;
use rfs_forensics::harness::{run_recipe, CorpusSource, ExperimentConfig, Recipe};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let recipe: Recipe = args
        .first()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(Recipe::Table1);
    let out = args
        .get(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("rfs-pipeline"));
    let config = ExperimentConfig {
        corpus: CorpusSource::Synthetic(CorpusConfig {
            width: 64,
            height: 64,
            count: 80,
            ..Default::default()
        }),
        train_size: 50,
        test_size: 30,
        ks: vec![5, 50, 686],
        maps_per_k: 5,
        pixel_maps_per_k: 5,
        pixel_images: 5,
        eot_sizes: vec![5],
        out_dir: out,
        ..ExperimentConfig::default()
    };
    let result = run_recipe(recipe, &config)?;
    for f in &result.files {
        println!("wrote {}", f.display());
    }
    let seeds: usize = result.manifest.stages.iter().map(|s| s.seeds.len()).sum();
    println!(
        "{} stages, {seeds} recorded seeds, manifest {}",
        result.manifest.stages.len(),
        result.manifest_path.display()
    );
    Ok(())
}
