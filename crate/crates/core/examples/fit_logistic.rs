//! Fit a weighted logistic regression with the damped Newton solver, watch
//! the objective fall, and check the first-order condition at the result.

use pdmaint::assemble::{build_event_stream, encode, HorizonConfig};
use pdmaint::logreg::{fit_traced, gradient, FitConfig};
use pdmaint::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = generate(&SynthConfig {
        n_machines: 8,
        n_days: 60,
        seed: 2,
        ..Default::default()
    })?;
    let rows = build_event_stream(&bundle, &HorizonConfig::default())?;
    let all: Vec<usize> = (0..rows.len()).collect();
    let data = encode(&rows, 100.0, &all)?;

    let config = FitConfig::default();
    let (model, trace) = fit_traced(&data, &config)?;
    for (i, f) in trace.iter().enumerate() {
        println!("iteration {i:>2}  objective {f:.6}");
    }
    let g = gradient(&model.params(), &data, &config);
    let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!(
        "converged {} after {} iterations, gradient max-norm {norm:.2e}",
        model.fit_meta.converged, model.fit_meta.iterations
    );

    let mut coefs = model.named_coefficients();
    coefs.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    println!("intercept {:+.3}", model.alpha);
    for (name, w) in coefs.iter().take(8) {
        println!("  {name:<12} {w:+.3}");
    }

    let alarms = data
        .rows()
        .filter(|x| model.predict(x, 0.5).unwrap())
        .count();
    let failures = data.labels().iter().filter(|y| **y).count();
    println!("{alarms} rows flagged, {failures} labeled failures (in-sample)");
    Ok(())
}
