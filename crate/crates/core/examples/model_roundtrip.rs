//! Train on one fleet, save the model file, load it back and score rows of
//! a fleet it has never seen.

use pdmaint::assemble::{build_event_stream, encode, HorizonConfig};
use pdmaint::logreg::{fit, FitConfig, LogisticModel};
use pdmaint::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let horizon = HorizonConfig::default();
    let train = build_event_stream(
        &generate(&SynthConfig {
            n_machines: 10,
            n_days: 90,
            seed: 1,
            ..Default::default()
        })?,
        &horizon,
    )?;
    let all: Vec<usize> = (0..train.len()).collect();
    let model = fit(&encode(&train, 100.0, &all)?, &FitConfig::default())?;

    let path = std::env::temp_dir().join("pdmaint-example-model.toml");
    model.save(&path)?;
    let loaded = LogisticModel::load(&path)?;
    assert_eq!(loaded, model);
    println!("saved and reloaded {}", path.display());

    let fresh = build_event_stream(
        &generate(&SynthConfig {
            n_machines: 3,
            n_days: 30,
            seed: 99,
            ..Default::default()
        })?,
        &horizon,
    )?;
    let mut alarms = 0;
    for row in &fresh {
        let p = loaded.predict_row_proba(row);
        if p >= 0.5 {
            alarms += 1;
            if alarms <= 5 {
                println!(
                    "machine {} at {}: p = {p:.3}, failure 24 h later: {}",
                    row.machine_id, row.datetime, row.label
                );
            }
        }
    }
    let failures = fresh.iter().filter(|r| r.label).count();
    println!(
        "{alarms} alarms raised, {failures} actual failures in {} rows",
        fresh.len()
    );
    Ok(())
}
