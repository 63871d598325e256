//! Angle between the projected attack direction and the normal of the reduced
//! detector's boundary, for raw and normalized dependent Gaussian features.
//!
//! cargo run --release --example angle_histogram -- [draws]

use rfs_forensics::montecarlo::run_angle_histogram;
use rfs_forensics::Regime;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let draws: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(200);
    for regime in [Regime::Iid, Regime::Dependent, Regime::DependentNormalized] {
        for h in run_angle_histogram(300, &[50, 150, 250], draws, regime, 9, 0)? {
            let bars: Vec<String> = h.counts.iter().map(|c| c.to_string()).collect();
            println!(
                "{:<21} k={:<3} mean {:>5.2} deg  counts per 10 deg [{}]",
                regime.label(),
                h.k,
                h.mean_angle,
                bars.join(" ")
            );
        }
    }
    Ok(())
}
