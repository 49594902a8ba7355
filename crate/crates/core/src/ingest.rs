//! Loading the five CSV datasets into a [`DatasetBundle`].

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDateTime, TimeDelta, Timelike};
use sha2::{Digest, Sha256};

use crate::schema::{
    validate_dataset, CsvRecord, DatasetKind, ErrorRecord, FailureRecord, MachineDescriptor,
    MachineId, MaintenanceRecord, Severity, TelemetryRecord, Timestamp, ValidationReport,
    Violation,
};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: header mismatch: expected `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: column `{column}`: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },
}

/// Rounds to the nearest whole hour; exactly half past rounds up.
pub fn round_to_hour(raw: NaiveDateTime) -> Timestamp {
    let floor = raw
        .with_nanosecond(0)
        .and_then(|t| t.with_second(0))
        .and_then(|t| t.with_minute(0))
        .expect("zeroing minutes and seconds is always valid");
    let past = raw - floor;
    let rounded = if past >= TimeDelta::minutes(30) {
        floor + TimeDelta::hours(1)
    } else {
        floor
    };
    Timestamp::on_grid(rounded).expect("rounded value lies on the hour grid")
}

/// Reads a CSV stream whose header must equal `R::HEADER`.
pub fn read_records<R: CsvRecord, S: Read>(source: S, path: &Path) -> Result<Vec<R>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(source) => IngestError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => IngestError::Parse {
                path: path.to_path_buf(),
                line,
                column: String::new(),
                message: format!("{other:?}"),
            },
        }
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != R::HEADER {
        return Err(IngestError::Header {
            path: path.to_path_buf(),
            expected: R::HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut out = Vec::new();
    for result in reader.records() {
        let record = result.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = record.iter().collect();
        let rec = R::from_fields(&fields).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line,
            column: R::HEADER
                .get(e.column)
                .map_or_else(|| format!("#{}", e.column + 1), |c| c.to_string()),
            message: e.message,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_csv_file<R: CsvRecord>(path: &Path) -> Result<Vec<R>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_records(io::BufReader::new(file), path)
}

/// Writes `records` with the `R::HEADER` header row.
pub fn write_records<R: CsvRecord, W: Write>(sink: W, records: &[R]) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(R::HEADER)?;
    for rec in records {
        writer.write_record(rec.to_fields())?;
    }
    writer.flush()
}

pub fn write_csv_file<R: CsvRecord>(path: &Path, records: &[R]) -> io::Result<()> {
    let file = File::create(path)?;
    write_records(io::BufWriter::new(file), records)
}

/// Paths of the five input files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundlePaths {
    pub telemetry: PathBuf,
    pub errors: PathBuf,
    pub maintenance: PathBuf,
    pub failures: PathBuf,
    pub machines: PathBuf,
}

impl BundlePaths {
    /// The conventional file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            telemetry: dir.join(DatasetKind::Telemetry.file_name()),
            errors: dir.join(DatasetKind::Errors.file_name()),
            maintenance: dir.join(DatasetKind::Maintenance.file_name()),
            failures: dir.join(DatasetKind::Failures.file_name()),
            machines: dir.join(DatasetKind::Machines.file_name()),
        }
    }
}

/// The five datasets after parsing, rounding and event merging.
///
/// Event lists hold at most one record per (machine, hour) and are sorted by
/// that key. Telemetry and machines keep file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetBundle {
    pub telemetry: Vec<TelemetryRecord>,
    pub errors: Vec<ErrorRecord>,
    pub maintenance: Vec<MaintenanceRecord>,
    pub failures: Vec<FailureRecord>,
    pub machines: Vec<MachineDescriptor>,
}

impl DatasetBundle {
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let paths = BundlePaths::in_dir(dir);
        write_csv_file(&paths.telemetry, &self.telemetry)?;
        write_csv_file(&paths.errors, &self.errors)?;
        write_csv_file(&paths.maintenance, &self.maintenance)?;
        write_csv_file(&paths.failures, &self.failures)?;
        write_csv_file(&paths.machines, &self.machines)
    }

    /// Hex SHA-256 over the canonical CSV text of all five datasets.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        let mut feed = |name: &str, bytes: Vec<u8>| {
            hasher.update(name.as_bytes());
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        };
        feed("telemetry", csv_bytes(&self.telemetry));
        feed("errors", csv_bytes(&self.errors));
        feed("maintenance", csv_bytes(&self.maintenance));
        feed("failures", csv_bytes(&self.failures));
        feed("machines", csv_bytes(&self.machines));
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn csv_bytes<R: CsvRecord>(records: &[R]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records(&mut buf, records).expect("writing to memory cannot fail");
    buf
}

/// Parses all five files, rounds timestamps, validates every dataset and the
/// cross-dataset references, then merges colliding events.
///
/// Structural problems abort with file/line/column context. Invariant
/// violations are collected in the returned report instead.
pub fn load_bundle(paths: &BundlePaths) -> Result<(DatasetBundle, ValidationReport), IngestError> {
    let (telemetry, errors, maintenance, failures, machines) = std::thread::scope(|s| {
        let t = s.spawn(|| read_csv_file::<TelemetryRecord>(&paths.telemetry));
        let e = s.spawn(|| read_csv_file::<ErrorRecord>(&paths.errors));
        let m = s.spawn(|| read_csv_file::<MaintenanceRecord>(&paths.maintenance));
        let f = s.spawn(|| read_csv_file::<FailureRecord>(&paths.failures));
        let d = s.spawn(|| read_csv_file::<MachineDescriptor>(&paths.machines));
        let msg = "parser thread panicked";
        (
            t.join().expect(msg),
            e.join().expect(msg),
            m.join().expect(msg),
            f.join().expect(msg),
            d.join().expect(msg),
        )
    });
    let raw = DatasetBundle {
        telemetry: telemetry?,
        errors: errors?,
        maintenance: maintenance?,
        failures: failures?,
        machines: machines?,
    };
    let report = validate_bundle(&raw);
    Ok((merge_events(raw), report))
}

pub fn load_dir(dir: &Path) -> Result<(DatasetBundle, ValidationReport), IngestError> {
    load_bundle(&BundlePaths::in_dir(dir))
}

/// Per-dataset invariants plus unknown machine references (errors) and
/// telemetry grid gaps (warnings).
pub fn validate_bundle(bundle: &DatasetBundle) -> ValidationReport {
    let mut report = validate_dataset(&bundle.telemetry);
    report.extend(validate_dataset(&bundle.errors));
    report.extend(validate_dataset(&bundle.maintenance));
    report.extend(validate_dataset(&bundle.failures));
    report.extend(validate_dataset(&bundle.machines));

    let known: HashSet<MachineId> = bundle.machines.iter().map(|m| m.machine_id).collect();
    let mut unknown = |kind: DatasetKind, ids: &mut dyn Iterator<Item = MachineId>| {
        for (row, id) in ids.enumerate() {
            if !known.contains(&id) {
                report.violations.push(Violation {
                    dataset: kind,
                    row,
                    severity: Severity::Error,
                    reason: format!("machine_id {id} not present in machines"),
                });
            }
        }
    };
    unknown(
        DatasetKind::Telemetry,
        &mut bundle.telemetry.iter().map(|r| r.machine_id),
    );
    unknown(
        DatasetKind::Errors,
        &mut bundle.errors.iter().map(|r| r.machine_id),
    );
    unknown(
        DatasetKind::Maintenance,
        &mut bundle.maintenance.iter().map(|r| r.machine_id),
    );
    unknown(
        DatasetKind::Failures,
        &mut bundle.failures.iter().map(|r| r.machine_id),
    );

    report.violations.extend(telemetry_gaps(&bundle.telemetry));
    report
}

fn telemetry_gaps(telemetry: &[TelemetryRecord]) -> Vec<Violation> {
    let mut per_machine: BTreeMap<MachineId, Vec<(Timestamp, usize)>> = BTreeMap::new();
    for (row, rec) in telemetry.iter().enumerate() {
        per_machine
            .entry(rec.machine_id)
            .or_default()
            .push((rec.datetime, row));
    }
    let mut out = Vec::new();
    for (id, mut hours) in per_machine {
        hours.sort();
        for pair in hours.windows(2) {
            let (prev, _) = pair[0];
            let (next, row) = pair[1];
            let step = next.hours_since(prev);
            if step > 1 {
                out.push(Violation {
                    dataset: DatasetKind::Telemetry,
                    row,
                    severity: Severity::Warning,
                    reason: format!(
                        "machine {id}: {} missing hour(s) between {prev} and {next}",
                        step - 1
                    ),
                });
            }
        }
    }
    out.sort_by_key(|v| v.row);
    out
}

fn or_into<const N: usize>(acc: &mut [bool; N], other: &[bool; N]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a |= *b;
    }
}

/// OR-merges event records that share a (machine, hour) key.
pub fn merge_events(bundle: DatasetBundle) -> DatasetBundle {
    fn merge<R>(
        records: Vec<R>,
        key: impl Fn(&R) -> (MachineId, Timestamp),
        combine: impl Fn(&mut R, &R),
    ) -> Vec<R> {
        let mut merged: BTreeMap<(MachineId, Timestamp), R> = BTreeMap::new();
        for rec in records {
            match merged.get_mut(&key(&rec)) {
                Some(existing) => combine(existing, &rec),
                None => {
                    merged.insert(key(&rec), rec);
                }
            }
        }
        merged.into_values().collect()
    }

    DatasetBundle {
        errors: merge(
            bundle.errors,
            |r| (r.machine_id, r.datetime),
            |a, b| or_into(&mut a.errors, &b.errors),
        ),
        maintenance: merge(
            bundle.maintenance,
            |r| (r.machine_id, r.datetime),
            |a, b| {
                or_into(&mut a.replaced, &b.replaced);
                or_into(&mut a.replaced_on_failure, &b.replaced_on_failure);
            },
        ),
        failures: merge(
            bundle.failures,
            |r| (r.machine_id, r.datetime),
            |a, b| or_into(&mut a.failed, &b.failed),
        ),
        telemetry: bundle.telemetry,
        machines: bundle.machines,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn dt(h: u32, m: u32, s: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2015, 1, 3)
            .unwrap()
            .and_hms_opt(h, m, s)
            .unwrap()
    }

    #[test]
    fn rounds_to_nearest_hour_half_up() {
        assert_eq!(round_to_hour(dt(10, 29, 59)).datetime(), dt(10, 0, 0));
        assert_eq!(round_to_hour(dt(10, 30, 0)).datetime(), dt(11, 0, 0));
        assert_eq!(round_to_hour(dt(10, 0, 0)).datetime(), dt(10, 0, 0));
        assert_eq!(
            round_to_hour(dt(23, 45, 0)).to_string(),
            "2015-01-04 00:00:00"
        );
    }

    #[test]
    fn rounding_is_idempotent() {
        for m in 0..60 {
            let once = round_to_hour(dt(7, m, 13));
            assert_eq!(round_to_hour(once.datetime()), once);
        }
    }

    #[test]
    fn single_telemetry_row_parses() {
        let text = "machine_id,datetime,volt,rotate,pressure,vibration\n1,2015-01-01 06:00:00,176.2,418.5,113.1,45.1\n";
        let recs: Vec<TelemetryRecord> = read_records(text.as_bytes(), Path::new("t.csv")).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].volt, 176.2);
    }

    #[test]
    fn non_numeric_volt_reports_line_and_column() {
        let text = "machine_id,datetime,volt,rotate,pressure,vibration\n1,2015-01-01 06:00:00,176.2,418.5,113.1,45.1\n1,2015-01-01 07:00:00,abc,418.5,113.1,45.1\n";
        let err =
            read_records::<TelemetryRecord, _>(text.as_bytes(), Path::new("t.csv")).unwrap_err();
        match err {
            IngestError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "volt");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_is_structural() {
        let text = "machine_id,datetime,volt,rotate,pressure\n";
        let err =
            read_records::<TelemetryRecord, _>(text.as_bytes(), Path::new("t.csv")).unwrap_err();
        assert!(matches!(err, IngestError::Header { .. }));
    }

    #[test]
    fn colliding_events_merge_by_or() {
        let t = round_to_hour(dt(4, 0, 0));
        let bundle = DatasetBundle {
            errors: vec![
                ErrorRecord {
                    machine_id: MachineId(1),
                    datetime: t,
                    errors: [true, false, false, false, false],
                },
                ErrorRecord {
                    machine_id: MachineId(1),
                    datetime: t,
                    errors: [false, false, true, false, false],
                },
            ],
            ..Default::default()
        };
        let merged = merge_events(bundle);
        assert_eq!(merged.errors.len(), 1);
        assert_eq!(merged.errors[0].errors, [true, false, true, false, false]);
    }

    #[test]
    fn gaps_are_warnings_and_unknown_machines_errors() {
        let t0 = round_to_hour(dt(0, 0, 0));
        let tele = |h| TelemetryRecord {
            machine_id: MachineId(1),
            datetime: t0.plus_hours(h),
            volt: 1.0,
            rotate: 1.0,
            pressure: 1.0,
            vibration: 1.0,
        };
        let bundle = DatasetBundle {
            telemetry: vec![tele(0), tele(1), tele(4)],
            failures: vec![FailureRecord {
                machine_id: MachineId(9),
                datetime: t0,
                failed: [true, false, false, false],
            }],
            machines: vec![MachineDescriptor {
                machine_id: MachineId(1),
                age: 2,
                models: [true, false, false, false],
            }],
            ..Default::default()
        };
        let report = validate_bundle(&bundle);
        assert_eq!(report.violations.len(), 2);
        let errors: Vec<_> = report.errors().collect();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].dataset, DatasetKind::Failures);
        assert!(errors[0].reason.contains("not present in machines"));
        let gap = report
            .violations
            .iter()
            .find(|v| v.severity == Severity::Warning)
            .unwrap();
        assert_eq!(gap.row, 2);
        assert!(gap.reason.contains("2 missing"));
    }
}
