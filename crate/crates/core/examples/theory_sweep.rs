//! Missed-detection probability of the optimal linear detector on a Gaussian
//! model as a function of the reduced dimension k, with and without the
//! optimal attack against the full detector.
//!
//! cargo run --release --example theory_sweep -- [iid|dependent|dependent_normalized] [repetitions]

use rfs_forensics::montecarlo::{run_error_sweep, TheorySweepConfig};
use rfs_forensics::Regime;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let regime: Regime = args
        .first()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(Regime::Iid);
    let repetitions: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let cfg = TheorySweepConfig {
        regime,
        repetitions,
        samples_per_point: 2_000,
        ..TheorySweepConfig::default()
    };
    let res = run_error_sweep(&cfg)?;
    println!("kind    k  alpha  eta     P_md(clean)  P_md(attacked)  empirical(attacked)");
    for r in &res.rows {
        println!(
            "{:<4} {:>4} {:>6} {:.3}  {:>11.3e}  {:>14.4}  {:>19.4}",
            r.kind.label(),
            r.k,
            r.alpha,
            r.mean_eta,
            r.p_md_no_attack,
            r.p_md_attack,
            r.emp_md_attack.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
