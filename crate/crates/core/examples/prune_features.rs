//! Rank coefficients, prune by the relative rule and by the paper-reduced
//! preset, and re-evaluate each reduced set on the same folds.

use pdmaint::assemble::{build_event_stream, HorizonConfig};
use pdmaint::evaluate::{evaluate_cv, make_folds, prune_features, CvConfig, PruneRule};
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
    let full = evaluate_cv(&rows, &folds, &CvConfig::default())?;
    println!(
        "full: {} features, recall {:.4}, false negative rate {:.4}",
        full.folds[0].model.n_features(),
        full.average.recall(),
        full.average.false_negative_rate()
    );

    for rule in [PruneRule::default(), PruneRule::PaperReduced] {
        let kept = prune_features(&full.weights, rule)?;
        let names: Vec<String> = kept.iter().map(|f| f.name()).collect();
        let reduced = evaluate_cv(
            &rows,
            &folds,
            &CvConfig {
                features: kept,
                ..CvConfig::default()
            },
        )?;
        println!(
            "{rule}: {} features [{}], recall {:.4}, false negative rate {:.4}",
            names.len(),
            names.join(","),
            reduced.average.recall(),
            reduced.average.false_negative_rate()
        );
    }
    Ok(())
}
