//! Load a dataset directory, print validation findings, and show how a
//! malformed record is reported.
//!
//! cargo run --example load_and_validate -- /tmp/fleet

use pdmaint::ingest::{load_dir, read_records};
use pdmaint::schema::TelemetryRecord;
use pdmaint::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = match std::env::args().nth(1) {
        Some(d) => d.into(),
        None => {
            let tmp = std::env::temp_dir().join("pdmaint-load-example");
            generate(&SynthConfig {
                n_machines: 4,
                n_days: 20,
                ..Default::default()
            })?
            .write_dir(&tmp)?;
            tmp
        }
    };

    let (bundle, report) = load_dir(&dir)?;
    println!(
        "{} machines, {} telemetry rows",
        bundle.machines.len(),
        bundle.telemetry.len()
    );
    if report.is_empty() {
        println!("no violations");
    } else {
        print!("{report}");
    }

    let bad = "machine_id,datetime,volt,rotate,pressure,vibration\n\
               1,2015-01-01 06:00:00,170.2,446.1,100.3,40.1\n\
               1,2015-01-01 07:10:00,abc,450.0,99.0,39.0\n";
    match read_records::<TelemetryRecord, _>(bad.as_bytes(), "inline.csv".as_ref()) {
        Ok(_) => println!("unexpectedly parsed"),
        Err(e) => println!("structural error: {e}"),
    }
    Ok(())
}
