//! Domain types for the five input datasets, the joined machine-state row and
//! the feature vector layout.
//!
//! Every record type knows its CSV header and how to convert itself to and
//! from a CSV row. Booleans are written as `0`/`1` and datetimes as
//! `YYYY-MM-DD HH:MM:SS`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime, TimeDelta, Timelike, Weekday};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Datetime layout used by every CSV file.
pub const DATETIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// An hour-resolution, timezone-naive point in time.
///
/// A `Timestamp` always has zero minutes, seconds and sub-seconds. Raw
/// datetimes are brought onto the grid with [`crate::ingest::round_to_hour`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(NaiveDateTime);

impl Timestamp {
    /// Wraps `dt` if it already lies on the hour grid.
    pub fn on_grid(dt: NaiveDateTime) -> Option<Self> {
        (dt.minute() == 0 && dt.second() == 0 && dt.nanosecond() == 0).then_some(Self(dt))
    }

    /// Parses `YYYY-MM-DD HH:MM:SS` and rounds to the nearest hour.
    pub fn parse_rounded(s: &str) -> Result<Self, chrono::ParseError> {
        let raw = NaiveDateTime::parse_from_str(s.trim(), DATETIME_FORMAT)?;
        Ok(crate::ingest::round_to_hour(raw))
    }

    pub fn datetime(self) -> NaiveDateTime {
        self.0
    }

    pub fn plus_hours(self, hours: i64) -> Self {
        Self(self.0 + TimeDelta::hours(hours))
    }

    /// Whole hours from `earlier` to `self` (negative if `self` is earlier).
    pub fn hours_since(self, earlier: Timestamp) -> i64 {
        (self.0 - earlier.0).num_hours()
    }

    pub fn weekday(self) -> Weekday {
        self.0.weekday()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(DATETIME_FORMAT))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse_rounded(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MachineId(pub u32);

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub machine_id: MachineId,
    pub datetime: Timestamp,
    pub volt: f64,
    pub rotate: f64,
    pub pressure: f64,
    pub vibration: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorRecord {
    pub machine_id: MachineId,
    pub datetime: Timestamp,
    pub errors: [bool; 5],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaintenanceRecord {
    pub machine_id: MachineId,
    pub datetime: Timestamp,
    /// `comp_k`: component k was replaced.
    pub replaced: [bool; 4],
    /// `comp_k_fail`: component k was replaced because it failed.
    pub replaced_on_failure: [bool; 4],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureRecord {
    pub machine_id: MachineId,
    pub datetime: Timestamp,
    pub failed: [bool; 4],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineDescriptor {
    pub machine_id: MachineId,
    pub age: u32,
    pub models: [bool; 4],
}

impl MachineDescriptor {
    /// Zero-based model index, if exactly one model flag is set.
    pub fn model(&self) -> Option<usize> {
        let mut set = self.models.iter().enumerate().filter(|(_, m)| **m);
        match (set.next(), set.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    }
}

/// One machine-hour of joined state plus the horizon label.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineStateRow {
    pub machine_id: MachineId,
    pub datetime: Timestamp,
    pub errors: [bool; 5],
    pub replaced: [bool; 4],
    pub replaced_on_failure: [bool; 4],
    pub volt: f64,
    pub rotate: f64,
    pub pressure: f64,
    pub vibration: f64,
    pub age: u32,
    pub models: [bool; 4],
    pub day_of_week: Weekday,
    /// Machine failure at `datetime + horizon`.
    pub label: bool,
}

// ---------------------------------------------------------------------------
// CSV row conversion

/// A structural problem with a single CSV field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    /// Zero-based column index.
    pub column: usize,
    pub message: String,
}

/// A record type that maps one-to-one onto a CSV row.
pub trait CsvRecord: Sized {
    const HEADER: &'static [&'static str];

    fn to_fields(&self) -> Vec<String>;

    fn from_fields(fields: &[&str]) -> Result<Self, FieldError>;
}

fn field_err(column: usize, message: impl Into<String>) -> FieldError {
    FieldError {
        column,
        message: message.into(),
    }
}

fn parse_id(fields: &[&str], col: usize) -> Result<MachineId, FieldError> {
    fields[col]
        .trim()
        .parse::<u32>()
        .map(MachineId)
        .map_err(|_| field_err(col, format!("invalid machine_id {:?}", fields[col])))
}

fn parse_time(fields: &[&str], col: usize) -> Result<Timestamp, FieldError> {
    Timestamp::parse_rounded(fields[col])
        .map_err(|e| field_err(col, format!("malformed datetime {:?}: {e}", fields[col])))
}

fn parse_real(fields: &[&str], col: usize) -> Result<f64, FieldError> {
    fields[col]
        .trim()
        .parse::<f64>()
        .map_err(|_| field_err(col, format!("non-numeric value {:?}", fields[col])))
}

fn parse_flag(fields: &[&str], col: usize) -> Result<bool, FieldError> {
    match fields[col].trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(field_err(col, format!("expected 0 or 1, found {other:?}"))),
    }
}

fn parse_flags<const N: usize>(fields: &[&str], start: usize) -> Result<[bool; N], FieldError> {
    let mut out = [false; N];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = parse_flag(fields, start + k)?;
    }
    Ok(out)
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn push_flags(out: &mut Vec<String>, flags: &[bool]) {
    out.extend(flags.iter().map(|b| flag(*b)));
}

/// Shortest decimal text that parses back to the same `f64`.
fn real(v: f64) -> String {
    format!("{v:?}")
}

fn check_width(fields: &[&str], expected: usize) -> Result<(), FieldError> {
    if fields.len() != expected {
        return Err(field_err(
            fields.len().min(expected),
            format!("expected {expected} fields, found {}", fields.len()),
        ));
    }
    Ok(())
}

impl CsvRecord for TelemetryRecord {
    const HEADER: &'static [&'static str] = &[
        "machine_id",
        "datetime",
        "volt",
        "rotate",
        "pressure",
        "vibration",
    ];

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.machine_id.to_string(),
            self.datetime.to_string(),
            real(self.volt),
            real(self.rotate),
            real(self.pressure),
            real(self.vibration),
        ]
    }

    fn from_fields(f: &[&str]) -> Result<Self, FieldError> {
        check_width(f, Self::HEADER.len())?;
        Ok(Self {
            machine_id: parse_id(f, 0)?,
            datetime: parse_time(f, 1)?,
            volt: parse_real(f, 2)?,
            rotate: parse_real(f, 3)?,
            pressure: parse_real(f, 4)?,
            vibration: parse_real(f, 5)?,
        })
    }
}

impl CsvRecord for ErrorRecord {
    const HEADER: &'static [&'static str] = &[
        "machine_id",
        "datetime",
        "error_1",
        "error_2",
        "error_3",
        "error_4",
        "error_5",
    ];

    fn to_fields(&self) -> Vec<String> {
        let mut out = vec![self.machine_id.to_string(), self.datetime.to_string()];
        push_flags(&mut out, &self.errors);
        out
    }

    fn from_fields(f: &[&str]) -> Result<Self, FieldError> {
        check_width(f, Self::HEADER.len())?;
        Ok(Self {
            machine_id: parse_id(f, 0)?,
            datetime: parse_time(f, 1)?,
            errors: parse_flags(f, 2)?,
        })
    }
}

impl CsvRecord for MaintenanceRecord {
    const HEADER: &'static [&'static str] = &[
        "machine_id",
        "datetime",
        "comp_1",
        "comp_2",
        "comp_3",
        "comp_4",
        "comp_1_fail",
        "comp_2_fail",
        "comp_3_fail",
        "comp_4_fail",
    ];

    fn to_fields(&self) -> Vec<String> {
        let mut out = vec![self.machine_id.to_string(), self.datetime.to_string()];
        push_flags(&mut out, &self.replaced);
        push_flags(&mut out, &self.replaced_on_failure);
        out
    }

    fn from_fields(f: &[&str]) -> Result<Self, FieldError> {
        check_width(f, Self::HEADER.len())?;
        Ok(Self {
            machine_id: parse_id(f, 0)?,
            datetime: parse_time(f, 1)?,
            replaced: parse_flags(f, 2)?,
            replaced_on_failure: parse_flags(f, 6)?,
        })
    }
}

impl CsvRecord for FailureRecord {
    const HEADER: &'static [&'static str] = &[
        "machine_id",
        "datetime",
        "comp_1",
        "comp_2",
        "comp_3",
        "comp_4",
    ];

    fn to_fields(&self) -> Vec<String> {
        let mut out = vec![self.machine_id.to_string(), self.datetime.to_string()];
        push_flags(&mut out, &self.failed);
        out
    }

    fn from_fields(f: &[&str]) -> Result<Self, FieldError> {
        check_width(f, Self::HEADER.len())?;
        Ok(Self {
            machine_id: parse_id(f, 0)?,
            datetime: parse_time(f, 1)?,
            failed: parse_flags(f, 2)?,
        })
    }
}

impl CsvRecord for MachineDescriptor {
    const HEADER: &'static [&'static str] = &[
        "machine_id",
        "age",
        "model_1",
        "model_2",
        "model_3",
        "model_4",
    ];

    fn to_fields(&self) -> Vec<String> {
        let mut out = vec![self.machine_id.to_string(), self.age.to_string()];
        push_flags(&mut out, &self.models);
        out
    }

    fn from_fields(f: &[&str]) -> Result<Self, FieldError> {
        check_width(f, Self::HEADER.len())?;
        let age = f[1]
            .trim()
            .parse::<u32>()
            .map_err(|_| field_err(1, format!("invalid age {:?}", f[1])))?;
        Ok(Self {
            machine_id: parse_id(f, 0)?,
            age,
            models: parse_flags(f, 2)?,
        })
    }
}

const WEEKDAY_NAMES: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

fn parse_weekday(s: &str) -> Option<Weekday> {
    WEEKDAY_NAMES
        .iter()
        .position(|n| *n == s.trim())
        .map(weekday_from_index)
}

fn weekday_from_index(i: usize) -> Weekday {
    Weekday::try_from(i as u8).expect("weekday index in 0..7")
}

impl CsvRecord for MachineStateRow {
    const HEADER: &'static [&'static str] = &[
        "machine_id",
        "datetime",
        "error_1",
        "error_2",
        "error_3",
        "error_4",
        "error_5",
        "comp_1",
        "comp_2",
        "comp_3",
        "comp_4",
        "comp_1_fail",
        "comp_2_fail",
        "comp_3_fail",
        "comp_4_fail",
        "volt",
        "rotate",
        "pressure",
        "vibration",
        "age",
        "model_1",
        "model_2",
        "model_3",
        "model_4",
        "day_of_week",
        "label",
    ];

    fn to_fields(&self) -> Vec<String> {
        let mut out = vec![self.machine_id.to_string(), self.datetime.to_string()];
        push_flags(&mut out, &self.errors);
        push_flags(&mut out, &self.replaced);
        push_flags(&mut out, &self.replaced_on_failure);
        out.extend([self.volt, self.rotate, self.pressure, self.vibration].map(real));
        out.push(self.age.to_string());
        push_flags(&mut out, &self.models);
        out.push(WEEKDAY_NAMES[self.day_of_week.num_days_from_monday() as usize].to_string());
        out.push(flag(self.label));
        out
    }

    fn from_fields(f: &[&str]) -> Result<Self, FieldError> {
        check_width(f, Self::HEADER.len())?;
        let age = f[19]
            .trim()
            .parse::<u32>()
            .map_err(|_| field_err(19, format!("invalid age {:?}", f[19])))?;
        let day_of_week = parse_weekday(f[24])
            .ok_or_else(|| field_err(24, format!("invalid day_of_week {:?}", f[24])))?;
        Ok(Self {
            machine_id: parse_id(f, 0)?,
            datetime: parse_time(f, 1)?,
            errors: parse_flags(f, 2)?,
            replaced: parse_flags(f, 7)?,
            replaced_on_failure: parse_flags(f, 11)?,
            volt: parse_real(f, 15)?,
            rotate: parse_real(f, 16)?,
            pressure: parse_real(f, 17)?,
            vibration: parse_real(f, 18)?,
            age,
            models: parse_flags(f, 20)?,
            day_of_week,
            label: parse_flag(f, 25)?,
        })
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Telemetry,
    Errors,
    Maintenance,
    Failures,
    Machines,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 5] = [
        DatasetKind::Telemetry,
        DatasetKind::Errors,
        DatasetKind::Maintenance,
        DatasetKind::Failures,
        DatasetKind::Machines,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Telemetry => "telemetry",
            DatasetKind::Errors => "errors",
            DatasetKind::Maintenance => "maintenance",
            DatasetKind::Failures => "failures",
            DatasetKind::Machines => "machines",
        }
    }

    /// Conventional file name inside a bundle directory.
    pub fn file_name(self) -> &'static str {
        match self {
            DatasetKind::Telemetry => "telemetry.csv",
            DatasetKind::Errors => "errors.csv",
            DatasetKind::Maintenance => "maintenance.csv",
            DatasetKind::Failures => "failures.csv",
            DatasetKind::Machines => "machines.csv",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Errors block a run; warnings are reported and tolerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub dataset: DatasetKind,
    /// Zero-based data row index (header excluded).
    pub row: usize,
    pub severity: Severity,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(
            f,
            "{sev}: {} row {}: {}",
            self.dataset, self.row, self.reason
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.violations
            .iter()
            .any(|v| v.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Error)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Per-record and per-dataset invariants.
pub trait Validate {
    const KIND: DatasetKind;

    /// Reasons this record breaks its own invariants.
    fn violations(&self) -> Vec<String>;

    /// Key that must be unique within the dataset, if any.
    fn unique_key(&self) -> Option<(MachineId, Option<Timestamp>)> {
        None
    }
}

fn check_machine_id(id: MachineId, out: &mut Vec<String>) {
    if id.0 == 0 {
        out.push("machine_id must be positive".into());
    }
}

impl Validate for TelemetryRecord {
    const KIND: DatasetKind = DatasetKind::Telemetry;

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        check_machine_id(self.machine_id, &mut out);
        for (name, v) in [
            ("volt", self.volt),
            ("rotate", self.rotate),
            ("pressure", self.pressure),
            ("vibration", self.vibration),
        ] {
            if !v.is_finite() {
                out.push(format!("{name} is not finite"));
            }
        }
        out
    }

    fn unique_key(&self) -> Option<(MachineId, Option<Timestamp>)> {
        Some((self.machine_id, Some(self.datetime)))
    }
}

impl Validate for ErrorRecord {
    const KIND: DatasetKind = DatasetKind::Errors;

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        check_machine_id(self.machine_id, &mut out);
        if !self.errors.iter().any(|e| *e) {
            out.push("no error flag set".into());
        }
        out
    }
}

impl Validate for MaintenanceRecord {
    const KIND: DatasetKind = DatasetKind::Maintenance;

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        check_machine_id(self.machine_id, &mut out);
        for k in 0..4 {
            if self.replaced_on_failure[k] && !self.replaced[k] {
                out.push(format!(
                    "fail implies replaced: comp_{}_fail set without comp_{}",
                    k + 1,
                    k + 1
                ));
            }
        }
        if !self.replaced.iter().any(|c| *c) {
            out.push("no component replaced".into());
        }
        out
    }
}

impl Validate for FailureRecord {
    const KIND: DatasetKind = DatasetKind::Failures;

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        check_machine_id(self.machine_id, &mut out);
        if !self.failed.iter().any(|c| *c) {
            out.push("no component failure flag set".into());
        }
        out
    }
}

impl Validate for MachineDescriptor {
    const KIND: DatasetKind = DatasetKind::Machines;

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        check_machine_id(self.machine_id, &mut out);
        if self.model().is_none() {
            out.push("exactly one model flag must be set".into());
        }
        out
    }

    fn unique_key(&self) -> Option<(MachineId, Option<Timestamp>)> {
        Some((self.machine_id, None))
    }
}

/// Checks every record invariant plus key uniqueness. Violations come back in
/// input row order.
pub fn validate_dataset<R: Validate>(records: &[R]) -> ValidationReport {
    let mut seen = HashSet::new();
    let mut violations = Vec::new();
    for (row, rec) in records.iter().enumerate() {
        for reason in rec.violations() {
            violations.push(Violation {
                dataset: R::KIND,
                row,
                severity: Severity::Error,
                reason,
            });
        }
        if let Some(key) = rec.unique_key() {
            if !seen.insert(key) {
                let reason = match key.1 {
                    Some(t) => format!("duplicate (machine_id, datetime) = ({}, {t})", key.0),
                    None => format!("duplicate machine_id {}", key.0),
                };
                violations.push(Violation {
                    dataset: R::KIND,
                    row,
                    severity: Severity::Error,
                    reason,
                });
            }
        }
    }
    ValidationReport { violations }
}

// ---------------------------------------------------------------------------
// Feature vector layout

/// One encoded column of the design matrix. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Error(u8),
    Comp(u8),
    CompFail(u8),
    Volt,
    Rotate,
    Pressure,
    Vibration,
    Age,
    Model(u8),
    Day(Weekday),
}

/// Number of columns in the full encoding.
pub const FULL_FEATURE_COUNT: usize = 29;

impl Feature {
    /// All features in canonical column order.
    pub fn all() -> Vec<Feature> {
        let mut out = Vec::with_capacity(FULL_FEATURE_COUNT);
        out.extend((0..5).map(Feature::Error));
        out.extend((0..4).map(Feature::Comp));
        out.extend((0..4).map(Feature::CompFail));
        out.extend([
            Feature::Volt,
            Feature::Rotate,
            Feature::Pressure,
            Feature::Vibration,
            Feature::Age,
        ]);
        out.extend((0..4).map(Feature::Model));
        out.extend((0..7).map(|d| Feature::Day(weekday_from_index(d))));
        out
    }

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        match self {
            Feature::Error(k) => k as usize,
            Feature::Comp(k) => 5 + k as usize,
            Feature::CompFail(k) => 9 + k as usize,
            Feature::Volt => 13,
            Feature::Rotate => 14,
            Feature::Pressure => 15,
            Feature::Vibration => 16,
            Feature::Age => 17,
            Feature::Model(k) => 18 + k as usize,
            Feature::Day(d) => 22 + d.num_days_from_monday() as usize,
        }
    }

    /// Continuous features are z-scored; everything else is a 0/1 indicator.
    pub fn is_continuous(self) -> bool {
        matches!(
            self,
            Feature::Volt | Feature::Rotate | Feature::Pressure | Feature::Vibration | Feature::Age
        )
    }

    pub fn is_telemetry(self) -> bool {
        matches!(
            self,
            Feature::Volt | Feature::Rotate | Feature::Pressure | Feature::Vibration
        )
    }

    /// Unstandardized value of this feature on `row`.
    pub fn raw_value(self, row: &MachineStateRow) -> f64 {
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            Feature::Error(k) => ind(row.errors[k as usize]),
            Feature::Comp(k) => ind(row.replaced[k as usize]),
            Feature::CompFail(k) => ind(row.replaced_on_failure[k as usize]),
            Feature::Volt => row.volt,
            Feature::Rotate => row.rotate,
            Feature::Pressure => row.pressure,
            Feature::Vibration => row.vibration,
            Feature::Age => f64::from(row.age),
            Feature::Model(k) => ind(row.models[k as usize]),
            Feature::Day(d) => ind(row.day_of_week == d),
        }
    }

    pub fn name(self) -> String {
        match self {
            Feature::Error(k) => format!("error_{}", k + 1),
            Feature::Comp(k) => format!("comp_{}", k + 1),
            Feature::CompFail(k) => format!("comp_{}_fail", k + 1),
            Feature::Volt => "volt".into(),
            Feature::Rotate => "rotate".into(),
            Feature::Pressure => "pressure".into(),
            Feature::Vibration => "vibration".into(),
            Feature::Age => "age".into(),
            Feature::Model(k) => format!("model_{}", k + 1),
            Feature::Day(d) => format!(
                "dow_{}",
                WEEKDAY_NAMES[d.num_days_from_monday() as usize].to_lowercase()
            ),
        }
    }
}

impl PartialOrd for Feature {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Feature {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.index().cmp(&other.index())
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown feature name {0:?}")]
pub struct UnknownFeature(pub String);

impl FromStr for Feature {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::all()
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| UnknownFeature(s.to_string()))
    }
}

/// Mean and standard deviation of a continuous column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std_dev: f64,
}

/// Column layout plus the standardization statistics used to encode rows.
///
/// `stats[i]` is `Some` for fitted continuous columns and `None` for columns
/// passed through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoding {
    features: Vec<Feature>,
    stats: Vec<Option<Standardization>>,
}

impl FeatureEncoding {
    /// Builds an encoding from parts. Features are kept in the given order.
    pub fn new(features: Vec<Feature>, stats: Vec<Option<Standardization>>) -> Self {
        assert_eq!(features.len(), stats.len(), "one stats slot per feature");
        Self { features, stats }
    }

    /// Raw values pass through without standardization.
    pub fn identity(features: Vec<Feature>) -> Self {
        let stats = vec![None; features.len()];
        Self { features, stats }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn stats(&self) -> &[Option<Standardization>] {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name()).collect()
    }

    /// Writes the encoded row into `out` (length must equal `self.len()`).
    pub fn encode_into(&self, row: &MachineStateRow, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.features.len());
        for ((slot, feature), stats) in out.iter_mut().zip(&self.features).zip(&self.stats) {
            let raw = feature.raw_value(row);
            *slot = match stats {
                Some(s) => (raw - s.mean) / s.std_dev,
                None => raw,
            };
        }
    }

    pub fn encode_row(&self, row: &MachineStateRow) -> Vec<f64> {
        let mut out = vec![0.0; self.features.len()];
        self.encode_into(row, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ts(h: u32) -> Timestamp {
        Timestamp::on_grid(
            NaiveDate::from_ymd_opt(2015, 1, 1)
                .unwrap()
                .and_hms_opt(h, 0, 0)
                .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn fail_without_replacement_is_a_violation() {
        let rec = MaintenanceRecord {
            machine_id: MachineId(1),
            datetime: ts(0),
            replaced: [false, true, false, false],
            replaced_on_failure: [true, false, false, false],
        };
        let report = validate_dataset(&[rec]);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0]
            .reason
            .contains("fail implies replaced"));
    }

    #[test]
    fn two_models_is_a_violation() {
        let rec = MachineDescriptor {
            machine_id: MachineId(1),
            age: 3,
            models: [true, true, false, false],
        };
        let report = validate_dataset(&[rec]);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].reason.contains("exactly one model"));
    }

    #[test]
    fn well_formed_telemetry_is_clean() {
        let recs: Vec<_> = (0..5)
            .map(|h| TelemetryRecord {
                machine_id: MachineId(1),
                datetime: ts(h),
                volt: 170.0,
                rotate: 450.0,
                pressure: 100.0,
                vibration: 40.0,
            })
            .collect();
        assert!(validate_dataset(&recs).is_empty());
    }

    #[test]
    fn duplicate_telemetry_key_reported_on_second_row() {
        let rec = TelemetryRecord {
            machine_id: MachineId(2),
            datetime: ts(3),
            volt: 1.0,
            rotate: 1.0,
            pressure: 1.0,
            vibration: 1.0,
        };
        let report = validate_dataset(&[rec.clone(), rec]);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].row, 1);
    }

    #[test]
    fn empty_event_records_are_violations() {
        let e = ErrorRecord {
            machine_id: MachineId(1),
            datetime: ts(0),
            errors: [false; 5],
        };
        let f = FailureRecord {
            machine_id: MachineId(0),
            datetime: ts(0),
            failed: [false; 4],
        };
        assert_eq!(validate_dataset(&[e]).violations.len(), 1);
        assert_eq!(validate_dataset(&[f]).violations.len(), 2);
    }

    #[test]
    fn full_feature_layout() {
        let all = Feature::all();
        assert_eq!(all.len(), FULL_FEATURE_COUNT);
        for (i, f) in all.iter().enumerate() {
            assert_eq!(f.index(), i);
            assert_eq!(f.name().parse::<Feature>().unwrap(), *f);
        }
        assert_eq!(all.iter().filter(|f| f.is_continuous()).count(), 5);
        assert_eq!(all[22].name(), "dow_mon");
        assert_eq!(all[28].name(), "dow_sun");
    }

    #[test]
    fn malformed_fields_name_their_column() {
        let err = TelemetryRecord::from_fields(&["1", "2015-01-01 00:00:00", "abc", "1", "1", "1"])
            .unwrap_err();
        assert_eq!(err.column, 2);
        let err = ErrorRecord::from_fields(&["1", "2015-13-01 00:00:00", "1", "0", "0", "0", "0"])
            .unwrap_err();
        assert_eq!(err.column, 1);
        let err = FailureRecord::from_fields(&["1", "2015-01-01 00:00:00", "1", "2", "0", "0"])
            .unwrap_err();
        assert_eq!(err.column, 3);
    }

    #[test]
    fn state_row_csv_roundtrip() {
        let row = MachineStateRow {
            machine_id: MachineId(4),
            datetime: ts(5),
            errors: [true, false, false, true, false],
            replaced: [false, true, false, false],
            replaced_on_failure: [false, true, false, false],
            volt: 171.25,
            rotate: 0.1 + 0.2,
            pressure: -3.5e-7,
            vibration: 40.0,
            age: 12,
            models: [false, false, true, false],
            day_of_week: Weekday::Thu,
            label: true,
        };
        let fields = row.to_fields();
        let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
        assert_eq!(MachineStateRow::from_fields(&refs).unwrap(), row);
    }
}
