//! Synthetic dataset generator with a planted error-to-failure signal.
//!
//! # Random source
//!
//! Each machine gets its own xoshiro256++ stream seeded through SplitMix64
//! (`Xoshiro256PlusPlus::seed_from_u64`) with
//! `seed + machine_id * 0x9E37_79B9_7F4A_7C15` (wrapping). Uniforms are
//! `(next_u64() >> 11) * 2^-53`; normals use the cosine branch of Box-Muller
//! and consume two uniforms each. Draw order within a machine is fixed:
//! model, age, then per hour the five error flags, the scheduled-maintenance
//! draw, and the failure draw; telemetry is drawn in a second pass.
//!
//! # Hazard model
//!
//! Error type k fires independently each hour with probability
//! `r_k = ERROR_SHARE[k] * ERROR_RATE_RATIO * target`, so the probability of
//! at least one error in an hour is `q = 1 - prod(1 - r_k)`. A failure is
//! drawn at hour `t + 24` with probability
//!
//! ```text
//! p(t) = h0 * (1 + s)   if any error fired at hour t
//! p(t) = h0             otherwise
//! ```
//!
//! where `s` is `signal_strength`. The expected positive-label rate is
//! `q * h0 * (1 + s) + (1 - q) * h0 = h0 * (1 + q * s)`, so
//!
//! ```text
//! h0 = target / (1 + q * s)
//! ```
//!
//! hits the target exactly in expectation. Because `q >= target` for every
//! admissible target, `h0 * (1 + s) <= 1` and no clipping is needed.
//!
//! Telemetry comes from per-model Gaussian baselines. With `telemetry_drift`
//! enabled, pressure and vibration ramp up and voltage sags over the 24 hours before each
//! failure; it is off by default so the signal lives in the error flags only.

use std::collections::VecDeque;

use chrono::NaiveDate;
use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::ingest::DatasetBundle;
use crate::schema::{
    ErrorRecord, FailureRecord, MachineDescriptor, MachineId, MaintenanceRecord, TelemetryRecord,
    Timestamp,
};

/// Lead time between a planted error and the failure it may cause.
pub const SIGNAL_LAG_HOURS: i64 = 24;

/// Relative frequency of the five error types.
pub const ERROR_SHARE: [f64; 5] = [0.30, 0.25, 0.20, 0.15, 0.10];

/// Sum of per-type error rates as a multiple of the target failure rate.
pub const ERROR_RATE_RATIO: f64 = 1.5;

/// Hourly probability of a scheduled (non-failure) component replacement.
pub const SCHEDULED_MAINTENANCE_RATE: f64 = 1.0 / (24.0 * 90.0);

const MAX_AGE: u32 = 20;

// (mean, std) per model for volt, rotate, pressure, vibration.
const VOLT: [(f64, f64); 4] = [(170.0, 15.0), (172.0, 15.0), (168.0, 15.0), (171.0, 15.0)];
const ROTATE: [(f64, f64); 4] = [(446.0, 50.0), (450.0, 50.0), (455.0, 50.0), (448.0, 50.0)];
const PRESSURE: [(f64, f64); 4] = [(100.0, 10.0), (101.0, 10.0), (99.0, 10.0), (102.0, 10.0)];
const VIBRATION: [(f64, f64); 4] = [(40.0, 5.0), (40.5, 5.0), (39.5, 5.0), (41.0, 5.0)];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("n_machines must be positive")]
    NoMachines,
    #[error("n_days must be at least 3, got {0}")]
    TooFewDays(u32),
    #[error("target_failure_rate must lie in (0, 0.5), got {0}")]
    FailureRate(f64),
    #[error("signal_strength must be finite and non-negative, got {0}")]
    Signal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_machines: u32,
    pub n_days: u32,
    pub seed: u64,
    pub target_failure_rate: f64,
    /// Relative failure risk after an error is `1 + signal_strength`.
    pub signal_strength: f64,
    pub telemetry_drift: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_machines: 100,
            n_days: 365,
            seed: 1,
            target_failure_rate: 0.017,
            signal_strength: 2000.0,
            telemetry_drift: false,
        }
    }
}

/// Derived per-hour probabilities of the hazard model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hazards {
    pub error_rates: [f64; 5],
    /// Probability of at least one error in an hour.
    pub any_error: f64,
    /// Failure probability 24 h after an error-free hour.
    pub baseline: f64,
    /// Failure probability 24 h after an hour with an error.
    pub after_error: f64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_machines == 0 {
            return Err(SynthError::NoMachines);
        }
        if self.n_days < 3 {
            return Err(SynthError::TooFewDays(self.n_days));
        }
        let r = self.target_failure_rate;
        if !(r > 0.0 && r < 0.5) {
            return Err(SynthError::FailureRate(r));
        }
        if !(self.signal_strength.is_finite() && self.signal_strength >= 0.0) {
            return Err(SynthError::Signal(self.signal_strength));
        }
        Ok(())
    }

    pub fn hazards(&self) -> Hazards {
        let target = self.target_failure_rate;
        let error_rates = ERROR_SHARE.map(|share| share * ERROR_RATE_RATIO * target);
        let none = error_rates.iter().map(|r| 1.0 - r).product::<f64>();
        let any_error = 1.0 - none;
        let baseline = target / (1.0 + any_error * self.signal_strength);
        Hazards {
            error_rates,
            any_error,
            baseline,
            after_error: baseline * (1.0 + self.signal_strength),
        }
    }

    pub fn hours(&self) -> i64 {
        i64::from(self.n_days) * 24
    }
}

/// First hour of every generated timeline.
pub fn timeline_start() -> Timestamp {
    let dt = NaiveDate::from_ymd_opt(2015, 1, 1)
        .and_then(|d| d.and_hms_opt(6, 0, 0))
        .expect("valid constant date");
    Timestamp::on_grid(dt).expect("on the hour")
}

struct Stream(Xoshiro256PlusPlus);

impl Stream {
    fn for_machine(seed: u64, machine: u32) -> Self {
        let s = seed.wrapping_add(u64::from(machine).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        Self(Xoshiro256PlusPlus::seed_from_u64(s))
    }

    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn below(&mut self, n: u32) -> u32 {
        ((self.uniform() * f64::from(n)) as u32).min(n - 1)
    }

    fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        mean + std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

struct MachineData {
    descriptor: MachineDescriptor,
    telemetry: Vec<TelemetryRecord>,
    errors: Vec<ErrorRecord>,
    maintenance: Vec<MaintenanceRecord>,
    failures: Vec<FailureRecord>,
}

fn generate_machine(config: &SynthConfig, hazards: &Hazards, id: u32) -> MachineData {
    let mut rng = Stream::for_machine(config.seed, id);
    let machine_id = MachineId(id);
    let start = timeline_start();
    let hours = config.hours();

    let model = rng.below(4) as usize;
    let age = rng.below(MAX_AGE + 1);
    let mut models = [false; 4];
    models[model] = true;

    let mut errors = Vec::new();
    let mut failure_hours = Vec::new();
    let mut maintenance: Vec<MaintenanceRecord> = Vec::new();
    let mut failures = Vec::new();
    // Failure-triggered maintenance lands on a later hour than the draw that
    // causes it; keep it pending until the loop reaches that hour.
    let mut pending_fail: VecDeque<(i64, usize)> = VecDeque::new();

    for t in 0..hours {
        let mut flags = [false; 5];
        for (k, rate) in hazards.error_rates.iter().enumerate() {
            flags[k] = rng.uniform() < *rate;
        }
        let any_error = flags.iter().any(|f| *f);
        if any_error {
            errors.push(ErrorRecord {
                machine_id,
                datetime: start.plus_hours(t),
                errors: flags,
            });
        }

        let mut replaced = [false; 4];
        let mut replaced_on_failure = [false; 4];
        if rng.uniform() < SCHEDULED_MAINTENANCE_RATE {
            replaced[rng.below(4) as usize] = true;
        }

        let p = if any_error {
            hazards.after_error
        } else {
            hazards.baseline
        };
        let fails = rng.uniform() < p;
        let comp = rng.below(4) as usize;
        if fails && t + SIGNAL_LAG_HOURS < hours {
            pending_fail.push_back((t + SIGNAL_LAG_HOURS, comp));
        }

        while let Some(&(hour, comp)) = pending_fail.front() {
            if hour != t {
                break;
            }
            pending_fail.pop_front();
            replaced[comp] = true;
            replaced_on_failure[comp] = true;
            let mut failed = [false; 4];
            failed[comp] = true;
            failures.push(FailureRecord {
                machine_id,
                datetime: start.plus_hours(t),
                failed,
            });
            failure_hours.push(t);
        }

        if replaced.iter().any(|r| *r) {
            maintenance.push(MaintenanceRecord {
                machine_id,
                datetime: start.plus_hours(t),
                replaced,
                replaced_on_failure,
            });
        }
    }

    let mut telemetry = Vec::with_capacity(hours as usize);
    let mut next_failure = failure_hours.iter().peekable();
    for t in 0..hours {
        while next_failure.peek().is_some_and(|f| **f < t) {
            next_failure.next();
        }
        let mut volt = rng.normal(VOLT[model].0, VOLT[model].1);
        let rotate = rng.normal(ROTATE[model].0, ROTATE[model].1);
        let mut pressure = rng.normal(PRESSURE[model].0, PRESSURE[model].1);
        let mut vibration = rng.normal(VIBRATION[model].0, VIBRATION[model].1);
        if config.telemetry_drift {
            if let Some(&f) = next_failure.peek() {
                let lead = f - t;
                if lead <= 24 {
                    let ramp = 1.0 - lead as f64 / 24.0;
                    pressure += 2.0 * PRESSURE[model].1 * ramp;
                    vibration += 2.0 * VIBRATION[model].1 * ramp;
                    volt -= 0.5 * VOLT[model].1 * ramp;
                }
            }
        }
        telemetry.push(TelemetryRecord {
            machine_id,
            datetime: start.plus_hours(t),
            volt,
            rotate,
            pressure,
            vibration,
        });
    }

    MachineData {
        descriptor: MachineDescriptor {
            machine_id,
            age,
            models,
        },
        telemetry,
        errors,
        maintenance,
        failures,
    }
}

/// Generates a bundle of `n_machines` machines observed hourly for `n_days`.
///
/// Output is a pure function of the config: machines are generated in
/// parallel from independent streams and concatenated in id order.
pub fn generate(config: &SynthConfig) -> Result<DatasetBundle, SynthError> {
    config.validate()?;
    let hazards = config.hazards();
    let machines: Vec<MachineData> = (1..=config.n_machines)
        .into_par_iter()
        .map(|id| generate_machine(config, &hazards, id))
        .collect();

    let mut bundle = DatasetBundle::default();
    for m in machines {
        bundle.machines.push(m.descriptor);
        bundle.telemetry.extend(m.telemetry);
        bundle.errors.extend(m.errors);
        bundle.maintenance.extend(m.maintenance);
        bundle.failures.extend(m.failures);
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::validate_bundle;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_machines: 4,
            n_days: 20,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn calibration_closed_form() {
        for s in [0.0, 1.0, 50.0, 2000.0] {
            let cfg = SynthConfig {
                signal_strength: s,
                ..Default::default()
            };
            let h = cfg.hazards();
            let rate = h.any_error * h.after_error + (1.0 - h.any_error) * h.baseline;
            assert!((rate - cfg.target_failure_rate).abs() < 1e-15);
            assert!(h.after_error <= 1.0);
        }
        for target in [1e-4, 0.1, 0.3, 0.499] {
            let cfg = SynthConfig {
                target_failure_rate: target,
                signal_strength: 1e9,
                ..Default::default()
            };
            let h = cfg.hazards();
            assert!(h.any_error >= target);
            assert!(h.after_error <= 1.0, "target {target}: {}", h.after_error);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate(&small(1)).unwrap();
        let b = generate(&small(1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&small(2)).unwrap());
    }

    #[test]
    fn output_is_schema_valid_with_complete_grid() {
        for seed in 0..5 {
            let cfg = SynthConfig {
                telemetry_drift: seed % 2 == 0,
                ..small(seed)
            };
            let bundle = generate(&cfg).unwrap();
            let report = validate_bundle(&bundle);
            assert!(report.is_empty(), "seed {seed}: {report}");
            assert_eq!(bundle.telemetry.len() as i64, 4 * cfg.hours());
            for m in &bundle.machines {
                assert!(m.age <= MAX_AGE);
                assert!(m.model().is_some());
            }
        }
    }

    #[test]
    fn every_failure_has_matching_maintenance() {
        let bundle = generate(&small(11)).unwrap();
        assert!(!bundle.failures.is_empty());
        for f in &bundle.failures {
            let m = bundle
                .maintenance
                .iter()
                .find(|m| m.machine_id == f.machine_id && m.datetime == f.datetime)
                .expect("maintenance at failure hour");
            for k in 0..4 {
                if f.failed[k] {
                    assert!(m.replaced_on_failure[k] && m.replaced[k]);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SynthConfig {
                n_machines: 0,
                ..Default::default()
            },
            SynthConfig {
                n_days: 2,
                ..Default::default()
            },
            SynthConfig {
                target_failure_rate: 0.5,
                ..Default::default()
            },
            SynthConfig {
                target_failure_rate: 0.0,
                ..Default::default()
            },
            SynthConfig {
                signal_strength: -1.0,
                ..Default::default()
            },
            SynthConfig {
                signal_strength: f64::NAN,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(generate(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn uniform_stream_is_in_unit_interval() {
        let mut s = Stream::for_machine(42, 1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
