//! Machine-disjoint, temporally ordered cross-validation, confusion matrices,
//! coefficient ranking and feature pruning.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assemble::{fit_encoding, AssembleError, DesignMatrix};
use crate::logreg::{fit, FitConfig, LogRegError, LogisticModel};
use crate::schema::{Feature, MachineId, MachineStateRow, Timestamp};

/// Name of the intercept row in a [`WeightReport`].
pub const CONSTANT: &str = "constant";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("need at least 2 folds, got {0}")]
    FoldCount(usize),
    #[error("{k} folds need at least {k} machines, found {machines}")]
    TooFewMachines { k: usize, machines: usize },
    #[error("timeline spans fewer than 2 distinct hours")]
    ShortTimeline,
    #[error("fold {fold}: {reason}")]
    Fold { fold: usize, reason: String },
    #[error("fold {fold}: encoding failed: {source}")]
    Encode {
        fold: usize,
        #[source]
        source: AssembleError,
    },
    #[error("fold {fold}: fit failed: {source}")]
    Fit {
        fold: usize,
        #[source]
        source: LogRegError,
    },
    #[error("threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("pruning removed every feature")]
    PrunedEverything,
    #[error("weight report has no feature named {0:?}")]
    UnknownFeature(String),
}

/// One train/test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub train_machines: BTreeSet<MachineId>,
    pub test_machines: BTreeSet<MachineId>,
    /// Train rows are strictly before, test rows at or after.
    pub time_cutoff: Timestamp,
}

/// Shuffles the sorted machine ids with `seed` and deals them into `k`
/// contiguous groups whose sizes differ by at most one.
pub fn machine_groups(machines: &[MachineId], k: usize, seed: u64) -> Vec<Vec<MachineId>> {
    let mut ids = machines.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let base = ids.len() / k;
    let extra = ids.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let len = base + usize::from(g < extra);
        out.push(ids[start..start + len].to_vec());
        start += len;
    }
    out
}

/// The hour at the 50% quantile of the distinct timestamps: index `n / 2`
/// of the sorted distinct hours.
pub fn timeline_cutoff(rows: &[MachineStateRow]) -> Option<Timestamp> {
    let hours: BTreeSet<Timestamp> = rows.iter().map(|r| r.datetime).collect();
    if hours.len() < 2 {
        return None;
    }
    hours.iter().nth(hours.len() / 2).copied()
}

/// Builds `k` folds: fold `i` tests on machine group `i` at or after the
/// shared cutoff and trains on the other groups strictly before it.
pub fn make_folds(
    rows: &[MachineStateRow],
    k: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>, EvalError> {
    if k < 2 {
        return Err(EvalError::FoldCount(k));
    }
    let machines: Vec<MachineId> = rows
        .iter()
        .map(|r| r.machine_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if machines.len() < k {
        return Err(EvalError::TooFewMachines {
            k,
            machines: machines.len(),
        });
    }
    let cutoff = timeline_cutoff(rows).ok_or(EvalError::ShortTimeline)?;
    let groups = machine_groups(&machines, k, seed);

    let mut folds = Vec::with_capacity(k);
    for (fold_index, group) in groups.iter().enumerate() {
        let test_machines: BTreeSet<MachineId> = group.iter().copied().collect();
        let train_machines: BTreeSet<MachineId> = machines
            .iter()
            .copied()
            .filter(|m| !test_machines.contains(m))
            .collect();
        let mut train_rows = Vec::new();
        let mut test_rows = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            if test_machines.contains(&r.machine_id) {
                if r.datetime >= cutoff {
                    test_rows.push(i);
                }
            } else if r.datetime < cutoff {
                train_rows.push(i);
            }
        }
        let fold = FoldSplit {
            fold_index,
            train_rows,
            test_rows,
            train_machines,
            test_machines,
            time_cutoff: cutoff,
        };
        check_fold(rows, &fold)?;
        folds.push(fold);
    }
    Ok(folds)
}

/// Verifies every [`FoldSplit`] invariant against `rows`.
pub fn check_fold(rows: &[MachineStateRow], fold: &FoldSplit) -> Result<(), EvalError> {
    let err = |reason: String| EvalError::Fold {
        fold: fold.fold_index,
        reason,
    };
    if let Some(m) = fold.train_machines.intersection(&fold.test_machines).next() {
        return Err(err(format!("machine {m} is in both train and test")));
    }
    for &i in &fold.train_rows {
        let r = &rows[i];
        if r.datetime >= fold.time_cutoff || !fold.train_machines.contains(&r.machine_id) {
            return Err(err(format!("train row {i} violates the split")));
        }
    }
    for &i in &fold.test_rows {
        let r = &rows[i];
        if r.datetime < fold.time_cutoff || !fold.test_machines.contains(&r.machine_id) {
            return Err(err(format!("test row {i} violates the split")));
        }
    }
    for (name, idx) in [("train", &fold.train_rows), ("test", &fold.test_rows)] {
        let pos = idx.iter().filter(|&&i| rows[i].label).count();
        if pos == 0 || pos == idx.len() {
            return Err(err(format!(
                "{name} set needs both classes ({pos} positive of {})",
                idx.len()
            )));
        }
    }
    Ok(())
}

/// Counts indexed `[true class][predicted class]`, 0 = no failure,
/// 1 = failure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn record(&mut self, actual: bool, predicted: bool) {
        self.counts[usize::from(actual)][usize::from(predicted)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Each true-class row divided by its sum; empty rows stay zero.
    pub fn normalized(&self) -> RateMatrix {
        let mut rates = [[0.0; 2]; 2];
        for (out, row) in rates.iter_mut().zip(&self.counts) {
            let sum = row[0] + row[1];
            if sum > 0 {
                out[0] = row[0] as f64 / sum as f64;
                out[1] = row[1] as f64 / sum as f64;
            }
        }
        RateMatrix { rates }
    }
}

/// Row-normalized confusion matrix, same indexing as [`ConfusionMatrix`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    pub rates: [[f64; 2]; 2],
}

impl RateMatrix {
    /// Elementwise mean.
    pub fn average(matrices: &[RateMatrix]) -> RateMatrix {
        let n = matrices.len().max(1) as f64;
        let mut rates = [[0.0; 2]; 2];
        for m in matrices {
            for i in 0..2 {
                for j in 0..2 {
                    rates[i][j] += m.rates[i][j];
                }
            }
        }
        for row in &mut rates {
            for v in row {
                *v /= n;
            }
        }
        RateMatrix { rates }
    }

    /// True-positive rate of the failure class.
    pub fn recall(&self) -> f64 {
        self.rates[1][1]
    }

    pub fn false_negative_rate(&self) -> f64 {
        self.rates[1][0]
    }

    pub fn false_positive_rate(&self) -> f64 {
        self.rates[0][1]
    }

    pub fn specificity(&self) -> f64 {
        self.rates[0][0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub feature: String,
    pub mean: f64,
    pub std: f64,
    /// 1-based position by descending `|mean|`.
    pub abs_rank: usize,
}

/// Coefficients aggregated across folds, ordered by descending `|mean|`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub rows: Vec<WeightRow>,
}

impl WeightReport {
    /// Mean and population standard deviation of each coefficient across
    /// models. The intercept appears as [`CONSTANT`]. Ties keep encoding
    /// order with the constant first.
    pub fn from_models(models: &[LogisticModel]) -> WeightReport {
        let Some(first) = models.first() else {
            return WeightReport::default();
        };
        let mut names = vec![CONSTANT.to_string()];
        names.extend(first.encoding.feature_names());
        let n = models.len() as f64;
        let mut rows: Vec<WeightRow> = names
            .into_iter()
            .enumerate()
            .map(|(j, feature)| {
                let values: Vec<f64> = models
                    .iter()
                    .map(|m| if j == 0 { m.alpha } else { m.beta[j - 1] })
                    .collect();
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                WeightRow {
                    feature,
                    mean,
                    std: var.sqrt(),
                    abs_rank: 0,
                }
            })
            .collect();
        rows.sort_by(|a, b| b.mean.abs().total_cmp(&a.mean.abs()));
        for (i, r) in rows.iter_mut().enumerate() {
            r.abs_rank = i + 1;
        }
        WeightReport { rows }
    }

    pub fn get(&self, feature: &str) -> Option<&WeightRow> {
        self.rows.iter().find(|r| r.feature == feature)
    }

    /// `feature,mean,std,abs_rank` rows.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["feature", "mean", "std", "abs_rank"])
            .expect("in-memory write");
        for r in &self.rows {
            writer
                .write_record([
                    r.feature.clone(),
                    format!("{:?}", r.mean),
                    format!("{:?}", r.std),
                    r.abs_rank.to_string(),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Settings shared by every fold.
#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub fit: FitConfig,
    pub weight_positive: f64,
    pub threshold: f64,
    pub features: Vec<Feature>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            weight_positive: 100.0,
            threshold: 0.5,
            features: Feature::all(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold_index: usize,
    pub model: LogisticModel,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub average: RateMatrix,
    pub weights: WeightReport,
    pub folds: Vec<FoldOutcome>,
}

/// Fits one model per fold on its train rows and scores its test rows.
pub fn evaluate_fold(
    rows: &[MachineStateRow],
    fold: &FoldSplit,
    config: &CvConfig,
) -> Result<FoldOutcome, EvalError> {
    let fold_index = fold.fold_index;
    let enc_err = |source| EvalError::Encode {
        fold: fold_index,
        source,
    };
    let encoding = fit_encoding(rows, &fold.train_rows, &config.features).map_err(enc_err)?;
    let train =
        DesignMatrix::encode_rows(rows, &fold.train_rows, &encoding, config.weight_positive)
            .map_err(enc_err)?;
    let model = fit(&train, &config.fit).map_err(|source| EvalError::Fit {
        fold: fold_index,
        source,
    })?;
    let test = DesignMatrix::encode_rows(rows, &fold.test_rows, &encoding, 1.0).map_err(enc_err)?;
    let mut confusion = ConfusionMatrix::default();
    for (x, &y) in test.rows().zip(test.labels()) {
        let predicted = model
            .predict(x, config.threshold)
            .map_err(|source| EvalError::Fit {
                fold: fold_index,
                source,
            })?;
        confusion.record(y, predicted);
    }
    Ok(FoldOutcome {
        fold_index,
        model,
        confusion,
    })
}

/// Runs every fold (in parallel) and aggregates by fold index.
pub fn evaluate_cv(
    rows: &[MachineStateRow],
    folds: &[FoldSplit],
    config: &CvConfig,
) -> Result<CvResult, EvalError> {
    if !(config.threshold > 0.0 && config.threshold < 1.0) {
        return Err(EvalError::Threshold(config.threshold));
    }
    let outcomes: Vec<FoldOutcome> = folds
        .par_iter()
        .map(|fold| evaluate_fold(rows, fold, config))
        .collect::<Result<_, _>>()?;
    let normalized: Vec<RateMatrix> = outcomes.iter().map(|o| o.confusion.normalized()).collect();
    let models: Vec<LogisticModel> = outcomes.iter().map(|o| o.model.clone()).collect();
    Ok(CvResult {
        average: RateMatrix::average(&normalized),
        weights: WeightReport::from_models(&models),
        folds: outcomes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneRule {
    /// Drop features whose `|mean|` is below this fraction of the largest
    /// non-constant `|mean|`.
    RelativeThreshold(f64),
    /// Keep only error flags, age and model flags.
    PaperReduced,
}

impl Default for PruneRule {
    fn default() -> Self {
        PruneRule::RelativeThreshold(0.1)
    }
}

impl fmt::Display for PruneRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PruneRule::RelativeThreshold(r) => write!(f, "relative-threshold {r}"),
            PruneRule::PaperReduced => f.write_str("paper-reduced"),
        }
    }
}

impl FromStr for PruneRule {
    type Err = String;

    /// `paper-reduced` or a relative fraction such as `0.1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "paper-reduced" {
            return Ok(PruneRule::PaperReduced);
        }
        match s.parse::<f64>() {
            Ok(r) if (0.0..=1.0).contains(&r) => Ok(PruneRule::RelativeThreshold(r)),
            _ => Err(format!("unknown pruning rule {s:?}")),
        }
    }
}

/// Features kept by the `paper-reduced` preset.
pub fn paper_reduced_features() -> Vec<Feature> {
    Feature::all()
        .into_iter()
        .filter(|f| matches!(f, Feature::Error(_) | Feature::Age | Feature::Model(_)))
        .collect()
}

/// Reduced feature list in canonical order. The result does not depend on
/// the order of the report rows.
pub fn prune_features(report: &WeightReport, rule: PruneRule) -> Result<Vec<Feature>, EvalError> {
    let mut present = Vec::new();
    for r in report.rows.iter().filter(|r| r.feature != CONSTANT) {
        let f: Feature = r
            .feature
            .parse()
            .map_err(|_| EvalError::UnknownFeature(r.feature.clone()))?;
        present.push((f, r.mean.abs()));
    }
    let mut kept: Vec<Feature> = match rule {
        PruneRule::PaperReduced => {
            let keep: HashSet<Feature> = paper_reduced_features().into_iter().collect();
            present
                .iter()
                .map(|(f, _)| *f)
                .filter(|f| keep.contains(f))
                .collect()
        }
        PruneRule::RelativeThreshold(frac) => {
            let max = present.iter().fold(0.0f64, |m, (_, w)| m.max(*w));
            present
                .iter()
                .filter(|(_, w)| max > 0.0 && *w >= frac * max)
                .map(|(f, _)| *f)
                .collect()
        }
    };
    kept.sort();
    kept.dedup();
    if kept.is_empty() {
        return Err(EvalError::PrunedEverything);
    }
    Ok(kept)
}
