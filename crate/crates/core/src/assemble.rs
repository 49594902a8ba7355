//! Machine-state event stream and design-matrix encoding.
//!
//! Events are left-joined onto the telemetry grid, machine descriptors and
//! day of week are attached, and each row is labeled with the machine's
//! failure state `horizon_hours` later.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::DatasetBundle;
use crate::schema::{
    Feature, FeatureEncoding, MachineDescriptor, MachineId, MachineStateRow, Standardization,
    TelemetryRecord, Timestamp,
};

/// How the label looks ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Failure at exactly `t + horizon`.
    #[default]
    Point,
    /// Any failure in `(t, t + horizon]`.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub horizon_hours: u32,
    pub label_mode: LabelMode,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            horizon_hours: 24,
            label_mode: LabelMode::Point,
        }
    }
}

impl HorizonConfig {
    pub fn hours(horizon_hours: u32) -> Self {
        Self {
            horizon_hours,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssembleError {
    #[error("horizon must be at least one hour")]
    ZeroHorizon,
    #[error("machine {0} appears in telemetry but not in machines")]
    UnknownMachine(MachineId),
    #[error("cannot fit an encoding on zero rows")]
    EmptyFit,
    #[error("degenerate encoding: column `{0}` has zero variance on the fit rows")]
    DegenerateColumn(String),
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { row: usize, column: String },
    #[error("length mismatch: {0}")]
    Shape(String),
    #[error("invalid sample weight {weight} at row {row}")]
    Weight { row: usize, weight: f64 },
}

/// Joins events, descriptors and labels onto the telemetry grid.
///
/// Rows come out ordered by (machine_id, datetime). Rows whose look-ahead
/// hour lies past the machine's last telemetry hour are dropped.
pub fn build_event_stream(
    bundle: &DatasetBundle,
    horizon: &HorizonConfig,
) -> Result<Vec<MachineStateRow>, AssembleError> {
    if horizon.horizon_hours == 0 {
        return Err(AssembleError::ZeroHorizon);
    }
    let h = i64::from(horizon.horizon_hours);

    let machines: HashMap<MachineId, &MachineDescriptor> =
        bundle.machines.iter().map(|m| (m.machine_id, m)).collect();
    let mut per_machine: BTreeMap<MachineId, Vec<&TelemetryRecord>> = BTreeMap::new();
    for rec in &bundle.telemetry {
        per_machine.entry(rec.machine_id).or_default().push(rec);
    }
    if let Some(id) = per_machine.keys().find(|id| !machines.contains_key(id)) {
        return Err(AssembleError::UnknownMachine(*id));
    }

    let mut errors: HashMap<(MachineId, Timestamp), [bool; 5]> = HashMap::new();
    for e in &bundle.errors {
        let slot = errors.entry((e.machine_id, e.datetime)).or_default();
        for (a, b) in slot.iter_mut().zip(e.errors) {
            *a |= b;
        }
    }
    let mut maintenance: HashMap<(MachineId, Timestamp), ([bool; 4], [bool; 4])> = HashMap::new();
    for m in &bundle.maintenance {
        let slot = maintenance.entry((m.machine_id, m.datetime)).or_default();
        for k in 0..4 {
            slot.0[k] |= m.replaced[k];
            slot.1[k] |= m.replaced_on_failure[k];
        }
    }
    let failures: HashSet<(MachineId, Timestamp)> = bundle
        .failures
        .iter()
        .filter(|f| f.failed.iter().any(|c| *c))
        .map(|f| (f.machine_id, f.datetime))
        .collect();

    let label = |id: MachineId, t: Timestamp| match horizon.label_mode {
        LabelMode::Point => failures.contains(&(id, t.plus_hours(h))),
        LabelMode::Window => (1..=h).any(|k| failures.contains(&(id, t.plus_hours(k)))),
    };

    let groups: Vec<(MachineId, Vec<&TelemetryRecord>)> = per_machine.into_iter().collect();
    let rows = groups
        .into_par_iter()
        .map(|(id, mut recs)| {
            recs.sort_by_key(|r| r.datetime);
            let desc = machines[&id];
            let last = recs.last().map(|r| r.datetime);
            recs.into_iter()
                .filter(|r| last.is_some_and(|l| r.datetime.plus_hours(h) <= l))
                .map(|r| {
                    let key = (id, r.datetime);
                    let (replaced, replaced_on_failure) =
                        maintenance.get(&key).copied().unwrap_or_default();
                    MachineStateRow {
                        machine_id: id,
                        datetime: r.datetime,
                        errors: errors.get(&key).copied().unwrap_or_default(),
                        replaced,
                        replaced_on_failure,
                        volt: r.volt,
                        rotate: r.rotate,
                        pressure: r.pressure,
                        vibration: r.vibration,
                        age: desc.age,
                        models: desc.models,
                        day_of_week: r.datetime.weekday(),
                        label: label(id, r.datetime),
                    }
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    Ok(rows)
}

/// Fits standardization statistics for `features` on `rows[fit_rows]`.
///
/// Continuous columns are z-scored with the population mean and standard
/// deviation of the fit rows; indicator columns pass through.
pub fn fit_encoding(
    rows: &[MachineStateRow],
    fit_rows: &[usize],
    features: &[Feature],
) -> Result<FeatureEncoding, AssembleError> {
    if fit_rows.is_empty() {
        return Err(AssembleError::EmptyFit);
    }
    let n = fit_rows.len() as f64;
    let mut stats = Vec::with_capacity(features.len());
    for feature in features {
        if !feature.is_continuous() {
            stats.push(None);
            continue;
        }
        let values = fit_rows.iter().map(|&i| feature.raw_value(&rows[i]));
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std_dev = var.sqrt();
        if !(std_dev.is_finite() && std_dev > 1e-12 * mean.abs().max(1.0)) {
            return Err(AssembleError::DegenerateColumn(feature.name()));
        }
        stats.push(Some(Standardization { mean, std_dev }));
    }
    Ok(FeatureEncoding::new(features.to_vec(), stats))
}

/// Encoded features, labels, sample weights and row keys.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: Vec<f64>,
    labels: Vec<bool>,
    weights: Vec<f64>,
    keys: Vec<(MachineId, Timestamp)>,
    encoding: FeatureEncoding,
}

impl DesignMatrix {
    /// Checks shapes, finiteness and non-negative weights.
    pub fn new(
        x: Vec<f64>,
        labels: Vec<bool>,
        weights: Vec<f64>,
        keys: Vec<(MachineId, Timestamp)>,
        encoding: FeatureEncoding,
    ) -> Result<Self, AssembleError> {
        let p = encoding.len();
        let n = labels.len();
        if x.len() != n * p || weights.len() != n || keys.len() != n {
            return Err(AssembleError::Shape(format!(
                "{} values for {n} rows x {p} features, {} weights, {} keys",
                x.len(),
                weights.len(),
                keys.len()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(AssembleError::NonFinite {
                row: pos / p.max(1),
                column: encoding.features()[pos % p.max(1)].name(),
            });
        }
        if let Some(row) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(AssembleError::Weight {
                row,
                weight: weights[row],
            });
        }
        Ok(Self {
            x,
            labels,
            weights,
            keys,
            encoding,
        })
    }

    /// Builds a matrix from already-encoded rows under an identity encoding.
    /// Keys are synthetic: machine 1, consecutive hours.
    pub fn from_raw(
        features: Vec<Feature>,
        rows: &[Vec<f64>],
        labels: Vec<bool>,
        weights: Vec<f64>,
    ) -> Result<Self, AssembleError> {
        let p = features.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(AssembleError::Shape(format!(
                "row {bad} does not have {p} values"
            )));
        }
        let x = rows.concat();
        let start = crate::synth::timeline_start();
        let keys = (0..rows.len() as i64)
            .map(|i| (MachineId(1), start.plus_hours(i)))
            .collect();
        Self::new(
            x,
            labels,
            weights,
            keys,
            FeatureEncoding::identity(features),
        )
    }

    /// Encodes `rows[indices]` with a fitted encoding.
    pub fn encode_rows(
        rows: &[MachineStateRow],
        indices: &[usize],
        encoding: &FeatureEncoding,
        weight_positive: f64,
    ) -> Result<Self, AssembleError> {
        let p = encoding.len();
        let mut x = vec![0.0; indices.len() * p];
        for (chunk, &i) in x.chunks_mut(p.max(1)).zip(indices) {
            encoding.encode_into(&rows[i], &mut chunk[..p]);
        }
        let labels: Vec<bool> = indices.iter().map(|&i| rows[i].label).collect();
        let weights = labels
            .iter()
            .map(|&y| if y { weight_positive } else { 1.0 })
            .collect();
        let keys = indices
            .iter()
            .map(|&i| (rows[i].machine_id, rows[i].datetime))
            .collect();
        Self::new(x, labels, weights, keys, encoding.clone())
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.encoding.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        let p = self.n_features();
        (0..self.n_samples()).map(move |i| &self.x[i * p..(i + 1) * p])
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn keys(&self) -> &[(MachineId, Timestamp)] {
        &self.keys
    }

    pub fn encoding(&self) -> &FeatureEncoding {
        &self.encoding
    }

    pub fn set_weight(&mut self, row: usize, weight: f64) -> Result<(), AssembleError> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(AssembleError::Weight { row, weight });
        }
        self.weights[row] = weight;
        Ok(())
    }

    /// Appends a copy of row `i` at the end.
    pub fn duplicate_row(&mut self, i: usize) {
        let copy = self.row(i).to_vec();
        self.x.extend(copy);
        self.labels.push(self.labels[i]);
        self.weights.push(self.weights[i]);
        self.keys.push(self.keys[i]);
    }
}

/// Fits the encoding on `fit_rows` and encodes every row.
pub fn encode(
    rows: &[MachineStateRow],
    weight_positive: f64,
    fit_rows: &[usize],
) -> Result<DesignMatrix, AssembleError> {
    encode_features(rows, &Feature::all(), weight_positive, fit_rows)
}

/// [`encode`] restricted to a feature subset (kept in the given order).
pub fn encode_features(
    rows: &[MachineStateRow],
    features: &[Feature],
    weight_positive: f64,
    fit_rows: &[usize],
) -> Result<DesignMatrix, AssembleError> {
    if !(weight_positive.is_finite() && weight_positive > 0.0) {
        return Err(AssembleError::Weight {
            row: 0,
            weight: weight_positive,
        });
    }
    let encoding = fit_encoding(rows, fit_rows, features)?;
    let all: Vec<usize> = (0..rows.len()).collect();
    DesignMatrix::encode_rows(rows, &all, &encoding, weight_positive)
}
