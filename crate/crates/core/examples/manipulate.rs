//! Applies every manipulation to an image and reports the PSNR of each result
//! against the input. Writes the outputs as PGM files next to `out_prefix`.
//!
//! cargo run --release --example manipulate -- [input] [out_prefix]

use rfs_forensics::corpus::{generate_image, CorpusConfig};
use rfs_forensics::image::{read_image, write_image};
use rfs_forensics::manipulation::{psnr, ManipulationKind};
use rfs_forensics::seed::task_rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let img = match args.first() {
        Some(path) => read_image(path)?,
        None => {
            let c = CorpusConfig::default();
            generate_image(
                c.width,
                c.height,
                c.noise_sigma,
                &mut task_rng(0, "example", &[]),
            )?
        }
    };
    let prefix = args.get(1).cloned().unwrap_or_else(|| {
        std::env::temp_dir()
            .join("rfs-manipulate")
            .to_string_lossy()
            .into_owned()
    });
    for kind in ManipulationKind::ALL {
        let out = kind.apply(&img)?;
        let path = format!("{prefix}_{kind}.pgm");
        write_image(&out, &path)?;
        println!(
            "{:<4} PSNR {:>6.2} dB -> {path}",
            kind.label(),
            psnr(&img, &out)?
        );
    }
    Ok(())
}
