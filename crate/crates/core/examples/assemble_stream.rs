//! Join events onto the telemetry grid and label each row 24 hours ahead.

use pdmaint::assemble::{build_event_stream, encode, HorizonConfig, LabelMode};
use pdmaint::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = generate(&SynthConfig {
        n_machines: 5,
        n_days: 60,
        seed: 3,
        ..Default::default()
    })?;

    let rows = build_event_stream(&bundle, &HorizonConfig::default())?;
    let positives = rows.iter().filter(|r| r.label).count();
    println!(
        "{} rows, {} labeled failures ({:.2}%)",
        rows.len(),
        positives,
        100.0 * positives as f64 / rows.len() as f64
    );

    let window = HorizonConfig {
        label_mode: LabelMode::Window,
        ..HorizonConfig::hours(48)
    };
    let wide = build_event_stream(&bundle, &window)?;
    println!(
        "failure anywhere in the next 48 h: {} positives",
        wide.iter().filter(|r| r.label).count()
    );

    if let Some(r) = rows.iter().find(|r| r.label) {
        println!(
            "first positive: machine {} at {} ({:?}), errors {:?}",
            r.machine_id, r.datetime, r.day_of_week, r.errors
        );
    }

    let all: Vec<usize> = (0..rows.len()).collect();
    let dm = encode(&rows, 100.0, &all)?;
    println!("design matrix {} x {}", dm.n_samples(), dm.n_features());
    println!("columns: {}", dm.encoding().feature_names().join(","));
    Ok(())
}
