//! Generate a small synthetic fleet and write the five CSV files.
//!
//! cargo run --example generate_synthetic -- /tmp/fleet

use pdmaint::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "fleet".into());
    let config = SynthConfig {
        n_machines: 10,
        n_days: 90,
        seed: 7,
        ..SynthConfig::default()
    };
    let h = config.hazards();
    println!(
        "hourly error probability {:.4}, failure hazard {:.6} baseline / {:.4} after an error",
        h.any_error, h.baseline, h.after_error
    );

    let bundle = generate(&config)?;
    bundle.write_dir(out.as_ref())?;
    println!(
        "{} telemetry rows, {} errors, {} maintenance, {} failures -> {out}",
        bundle.telemetry.len(),
        bundle.errors.len(),
        bundle.maintenance.len(),
        bundle.failures.len()
    );
    println!("digest {}", bundle.digest());
    Ok(())
}
