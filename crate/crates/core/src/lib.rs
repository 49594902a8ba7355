//! Failure prediction for fleets of machines from hourly event streams.
//!
//! The pipeline runs in five steps, one module each:
//!
//! 1. [`ingest`] parses the telemetry, errors, maintenance, failures and
//!    machines CSV files, rounds timestamps to the hour and validates them.
//! 2. [`assemble`] left-joins the events onto the telemetry grid, attaches
//!    machine descriptors and day of week, and labels each row with the
//!    machine's failure state a fixed horizon later.
//! 3. [`logreg`] fits a sample-weighted logistic regression with a damped
//!    Newton solver.
//! 4. [`evaluate`] cross-validates on folds whose test machines are unseen
//!    and whose test hours follow every training hour, then ranks and
//!    prunes features by coefficient magnitude.
//! 5. [`report`] writes the confusion matrices, weight tables and figures.
//!
//! [`synth`] generates schema-faithful data with a planted signal, and
//! [`cli`] ties everything together behind the `pdmaint` binary.
//!
//! ```no_run
//! use pdmaint::prelude::*;
//!
//! let bundle = generate(&SynthConfig { n_machines: 20, n_days: 120, seed: 7, ..Default::default() })?;
//! let rows = build_event_stream(&bundle, &HorizonConfig::default())?;
//! let folds = make_folds(&rows, 3, 42)?;
//! let result = evaluate_cv(&rows, &folds, &CvConfig::default())?;
//! println!("failure recall {:.3}", result.average.recall());
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod assemble;
pub mod cli;
pub mod evaluate;
pub mod ingest;
pub mod logreg;
pub mod report;
pub mod schema;
pub mod synth;

pub mod prelude {
    pub use crate::assemble::{
        build_event_stream, encode, encode_features, fit_encoding, DesignMatrix, HorizonConfig,
        LabelMode,
    };
    pub use crate::evaluate::{
        evaluate_cv, make_folds, prune_features, ConfusionMatrix, CvConfig, CvResult, FoldSplit,
        PruneRule, RateMatrix, WeightReport,
    };
    pub use crate::ingest::{load_bundle, load_dir, round_to_hour, BundlePaths, DatasetBundle};
    pub use crate::logreg::{fit, FitConfig, LogisticModel, Solver};
    pub use crate::schema::{Feature, MachineId, MachineStateRow, Timestamp};
    pub use crate::synth::{generate, SynthConfig};
}
