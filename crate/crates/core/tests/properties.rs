use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use proptest::prelude::*;

use pdmaint::assemble::{build_event_stream, fit_encoding, DesignMatrix, HorizonConfig};
use pdmaint::evaluate::{prune_features, ConfusionMatrix, PruneRule, WeightReport, WeightRow};
use pdmaint::ingest::{read_records, round_to_hour, write_records, DatasetBundle};
use pdmaint::logreg::{fit_traced, objective, FitConfig, LogisticModel, Params};
use pdmaint::schema::{
    CsvRecord, ErrorRecord, FailureRecord, Feature, MachineDescriptor, MachineId,
    MaintenanceRecord, TelemetryRecord, Timestamp,
};
use pdmaint::synth::timeline_start;

fn roundtrip<R: CsvRecord + PartialEq + std::fmt::Debug>(records: &[R]) {
    let mut buf = Vec::new();
    write_records(&mut buf, records).unwrap();
    let back: Vec<R> = read_records(buf.as_slice(), "mem.csv".as_ref()).unwrap();
    assert_eq!(back, records);
}

fn hour() -> impl Strategy<Value = Timestamp> {
    (0i64..24 * 365 * 3).prop_map(|h| timeline_start().plus_hours(h))
}

fn real() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, any::<i32>().prop_map(f64::from), Just(0.0)]
}

fn flags<const N: usize>() -> impl Strategy<Value = [bool; N]> {
    proptest::array::uniform(any::<bool>())
}

fn raw_datetime() -> impl Strategy<Value = NaiveDateTime> {
    (0i64..3 * 365 * 86_400).prop_map(|s| {
        NaiveDate::from_ymd_opt(2015, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
            + TimeDelta::seconds(s)
    })
}

fn design(max_rows: usize, p: usize) -> impl Strategy<Value = DesignMatrix> {
    (2..=max_rows)
        .prop_flat_map(move |n| {
            (
                proptest::collection::vec(proptest::collection::vec(-3.0..3.0f64, p), n),
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(0.1..5.0f64, n),
            )
        })
        .prop_map(move |(rows, mut labels, weights)| {
            labels[0] = true;
            labels[1] = false;
            DesignMatrix::from_raw(Feature::all()[..p].to_vec(), &rows, labels, weights).unwrap()
        })
}

proptest! {
    #[test]
    fn telemetry_csv_roundtrip(recs in proptest::collection::vec(
        (any::<u32>(), hour(), real(), real(), real(), real()), 0..20)) {
        let recs: Vec<TelemetryRecord> = recs.into_iter().map(|(id, t, v, r, p, vib)| TelemetryRecord {
            machine_id: MachineId(id), datetime: t, volt: v, rotate: r, pressure: p, vibration: vib,
        }).collect();
        roundtrip(&recs);
    }

    #[test]
    fn event_csv_roundtrip(
        errs in proptest::collection::vec((any::<u32>(), hour(), flags::<5>()), 0..20),
        maint in proptest::collection::vec((any::<u32>(), hour(), flags::<4>(), flags::<4>()), 0..20),
        fails in proptest::collection::vec((any::<u32>(), hour(), flags::<4>()), 0..20),
        machines in proptest::collection::vec((any::<u32>(), 0u32..100, flags::<4>()), 0..20),
    ) {
        roundtrip(&errs.into_iter().map(|(id, t, e)| ErrorRecord {
            machine_id: MachineId(id), datetime: t, errors: e,
        }).collect::<Vec<_>>());
        roundtrip(&maint.into_iter().map(|(id, t, r, f)| MaintenanceRecord {
            machine_id: MachineId(id), datetime: t, replaced: r, replaced_on_failure: f,
        }).collect::<Vec<_>>());
        roundtrip(&fails.into_iter().map(|(id, t, f)| FailureRecord {
            machine_id: MachineId(id), datetime: t, failed: f,
        }).collect::<Vec<_>>());
        roundtrip(&machines.into_iter().map(|(id, age, m)| MachineDescriptor {
            machine_id: MachineId(id), age, models: m,
        }).collect::<Vec<_>>());
    }

    #[test]
    fn rounding_is_idempotent_and_nearest(raw in raw_datetime()) {
        let once = round_to_hour(raw);
        prop_assert_eq!(round_to_hour(once.datetime()), once);
        let distance = (once.datetime() - raw).num_seconds();
        prop_assert!((-1800..1800).contains(&distance));
    }

    #[test]
    fn objective_is_midpoint_convex(
        data in design(30, 4),
        a in proptest::collection::vec(-3.0..3.0f64, 5),
        b in proptest::collection::vec(-3.0..3.0f64, 5),
        l2 in 0.0..3.0f64,
    ) {
        let config = FitConfig { l2_strength: l2, ..FitConfig::default() };
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = |t: &[f64]| objective(&Params::from_slice(t), &data, &config);
        prop_assert!(f(&mid) <= 0.5 * (f(&a) + f(&b)) + 1e-9);
    }

    #[test]
    fn newton_trace_never_rises(data in design(60, 3), l2 in 0.0..2.0f64) {
        let config = FitConfig { l2_strength: l2, ..FitConfig::default() };
        if let Ok((_, trace)) = fit_traced(&data, &config) {
            for w in trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-13 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn probabilities_stay_strictly_inside(z in -1e4..1e4f64, x in -5.0..5.0f64) {
        let data = DesignMatrix::from_raw(
            vec![Feature::Volt], &[vec![0.0], vec![1.0]], vec![true, false], vec![1.0, 1.0],
        ).unwrap();
        let mut model: LogisticModel = pdmaint::logreg::fit(&data, &FitConfig::default()).unwrap();
        model.beta = vec![1.0];
        model.alpha = z - x;
        let p = model.predict_proba(&[x]).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn raising_the_threshold_never_adds_positives(
        z in -20.0..20.0f64, t1 in 0.001..0.999f64, t2 in 0.001..0.999f64,
    ) {
        let data = DesignMatrix::from_raw(
            vec![Feature::Volt], &[vec![0.0], vec![1.0]], vec![true, false], vec![1.0, 1.0],
        ).unwrap();
        let mut model = pdmaint::logreg::fit(&data, &FitConfig::default()).unwrap();
        model.alpha = z;
        model.beta = vec![0.0];
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(!model.predict(&[0.0], hi).unwrap() || model.predict(&[0.0], lo).unwrap());
    }

    #[test]
    fn normalized_rows_sum_to_one(outcomes in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let mut m = ConfusionMatrix::default();
        for (y, p) in &outcomes {
            m.record(*y, *p);
        }
        prop_assert_eq!(m.total(), outcomes.len() as u64);
        let r = m.normalized();
        for (class, row) in r.rates.iter().enumerate() {
            let seen = outcomes.iter().any(|(y, _)| usize::from(*y) == class);
            if seen {
                prop_assert!((row[0] + row[1] - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn pruning_ignores_report_row_order(
        weights in proptest::collection::vec(-5.0..5.0f64, 29),
        frac in 0.0..1.0f64,
        shuffle_seed in any::<u64>(),
    ) {
        let rows: Vec<WeightRow> = Feature::all().into_iter().zip(&weights).enumerate()
            .map(|(i, (f, w))| WeightRow { feature: f.name(), mean: *w, std: 0.0, abs_rank: i + 1 })
            .collect();
        let mut shuffled = rows.clone();
        let mut rng = <rand_xoshiro::Xoshiro256PlusPlus as rand::SeedableRng>::seed_from_u64(shuffle_seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        for rule in [PruneRule::RelativeThreshold(frac), PruneRule::PaperReduced] {
            let a = prune_features(&WeightReport { rows: rows.clone() }, rule);
            let b = prune_features(&WeightReport { rows: shuffled.clone() }, rule);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn stream_length_is_telemetry_minus_tail(
        lengths in proptest::collection::vec(1i64..80, 1..4),
        horizon in 1u32..30,
    ) {
        let mut b = DatasetBundle::default();
        for (m, len) in lengths.iter().enumerate() {
            let id = MachineId(m as u32 + 1);
            b.machines.push(MachineDescriptor { machine_id: id, age: 3, models: [true, false, false, false] });
            for h in 0..*len {
                b.telemetry.push(TelemetryRecord {
                    machine_id: id, datetime: timeline_start().plus_hours(h),
                    volt: 1.0, rotate: 2.0, pressure: 3.0, vibration: 4.0,
                });
            }
        }
        let rows = build_event_stream(&b, &HorizonConfig::hours(horizon)).unwrap();
        let expected: i64 = lengths.iter().map(|l| (l - i64::from(horizon)).max(0)).sum();
        prop_assert_eq!(rows.len() as i64, expected);
    }

    #[test]
    fn encoding_ignores_non_fit_rows(
        bump in proptest::collection::vec(-50.0..50.0f64, 10),
        split in 3usize..20,
    ) {
        let mut b = DatasetBundle::default();
        for m in 1..=2u32 {
            b.machines.push(MachineDescriptor { machine_id: MachineId(m), age: m * 5, models: [false, true, false, false] });
            for h in 0..40i64 {
                b.telemetry.push(TelemetryRecord {
                    machine_id: MachineId(m), datetime: timeline_start().plus_hours(h),
                    volt: 160.0 + (h * m as i64 % 7) as f64, rotate: 400.0 + h as f64,
                    pressure: 100.0 - (h % 5) as f64, vibration: 40.0 + (h % 3) as f64,
                });
            }
        }
        let rows = build_event_stream(&b, &HorizonConfig::default()).unwrap();
        let fit_rows: Vec<usize> = (0..rows.len()).filter(|i| i % split != 0).collect();
        let base = fit_encoding(&rows, &fit_rows, &Feature::all()).unwrap();
        let mut changed = rows.clone();
        for (k, i) in (0..rows.len()).filter(|i| i % split == 0).enumerate() {
            changed[i].volt += bump[k % bump.len()];
            changed[i].vibration -= bump[(k + 3) % bump.len()];
        }
        let again = fit_encoding(&changed, &fit_rows, &Feature::all()).unwrap();
        prop_assert_eq!(&base, &again);
        prop_assert_eq!(base.feature_names(), again.feature_names());
    }
}
