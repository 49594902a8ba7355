//! Machine-disjoint, time-ordered 3-fold cross-validation with normalized
//! confusion matrices and the coefficient ranking.

use pdmaint::assemble::{build_event_stream, HorizonConfig};
use pdmaint::evaluate::{evaluate_cv, make_folds, CvConfig};
use pdmaint::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = generate(&SynthConfig {
        n_machines: 20,
        n_days: 180,
        seed: 7,
        ..Default::default()
    })?;
    let rows = build_event_stream(&bundle, &HorizonConfig::default())?;
    let folds = make_folds(&rows, 3, 42)?;
    for f in &folds {
        println!(
            "fold {}: test machines {:?}, {} train rows before {}, {} test rows",
            f.fold_index,
            f.test_machines.iter().map(|m| m.0).collect::<Vec<_>>(),
            f.train_rows.len(),
            f.time_cutoff,
            f.test_rows.len()
        );
    }

    for weight in [1.0, 100.0] {
        let result = evaluate_cv(
            &rows,
            &folds,
            &CvConfig {
                weight_positive: weight,
                ..CvConfig::default()
            },
        )?;
        let m = &result.average;
        println!("\nfailure weight {weight}");
        println!("             pred_ok  pred_fail");
        println!("  true_ok    {:.4}   {:.4}", m.rates[0][0], m.rates[0][1]);
        println!("  true_fail  {:.4}   {:.4}", m.rates[1][0], m.rates[1][1]);
        if weight == 100.0 {
            println!("\ntop weights:");
            for r in result.weights.rows.iter().take(8) {
                println!(
                    "  {:>2} {:<12} {:+.3} +/- {:.3}",
                    r.abs_rank, r.feature, r.mean, r.std
                );
            }
        }
    }
    Ok(())
}
