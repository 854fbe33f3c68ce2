use fedsa_core::config::{parse_config, ClassificationConfig, Diagnostics, RegressionConfig, ScheduleSpec, SigmaX};
use fedsa_core::metrics::{read_csv, write_csv};
use fedsa_core::ode::{interpolate, InterpolatedPath};
use fedsa_core::tasks::softmax;
use fedsa_core::{
    validate_and_rank, AlgorithmVariant, CsvSchema, ExperimentConfig, MetricsRecord, StepSizeSchedule, TaskConfig,
};
use proptest::collection::vec;
use proptest::option;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        (-300i32..300).prop_map(|e| 10f64.powi(e)),
        Just(0.0),
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ]
}

fn regression_record(clients: usize, d: Option<usize>) -> impl Strategy<Value = MetricsRecord> {
    (
        0usize..100_000,
        0u64..1_000_000,
        (option::of(finite()), option::of(finite()), option::of(finite())),
        vec(finite(), clients),
        (option::of(finite()), option::of(finite())),
        vec(finite(), d.unwrap_or(0)),
    )
        .prop_map(move |(round, global_step, (t_n, pe, agg), norms, (dw, tr), w)| MetricsRecord {
            round,
            global_step,
            t_n,
            param_error: pe,
            agg_grad_norm: agg,
            per_client_grad_norms: norms,
            delta_wbar: dw,
            tracking_error: tr,
            w_bar: d.map(|_| w),
            ..Default::default()
        })
}

fn classification_record() -> impl Strategy<Value = MetricsRecord> {
    (0usize..5000, vec(option::of(finite()), 6)).prop_map(|(round, v)| MetricsRecord {
        round,
        global_step: 5 * round as u64,
        train_loss: v[0],
        train_acc: v[1],
        test_loss: v[2],
        test_acc: v[3],
        rare_class_acc: v[4],
        delta_wbar: v[5],
        ..Default::default()
    })
}

proptest! {
    #[test]
    fn regression_csv_round_trips(records in vec(regression_record(3, Some(2)), 0..20)) {
        let schema = CsvSchema::Regression { clients: 3, wbar_dim: Some(2) };
        let mut buf = Vec::new();
        write_csv(&records, schema, &mut buf).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice(), schema).unwrap(), records);
    }

    #[test]
    fn classification_csv_round_trips(records in vec(classification_record(), 0..20)) {
        let mut buf = Vec::new();
        write_csv(&records, CsvSchema::Classification, &mut buf).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice(), CsvSchema::Classification).unwrap(), records);
    }

    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(z in vec(-700.0..700.0f64, 1..12), c in -500.0..500.0f64) {
        let p = softmax::softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in p.iter().zip(softmax::softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn limiting_weights_are_normalized(specs in vec((0.001..1.0f64, 0.76..=1.0f64), 1..12)) {
        let schedules: Vec<StepSizeSchedule> =
            specs.iter().map(|&(c, d)| StepSizeSchedule::tapering(c, d).unwrap()).collect();
        let w = validate_and_rank(&schedules).unwrap();
        let r = w.ref_index();
        prop_assert_eq!(w.as_slice()[r], 1.0);
        prop_assert!(w.as_slice().iter().all(|p| (0.0..=1.0).contains(p)));
        for (i, s) in schedules.iter().enumerate() {
            prop_assert!(s.delta() >= schedules[r].delta());
            if s.delta() == schedules[r].delta() {
                prop_assert!(s.c() <= schedules[r].c());
                prop_assert_eq!(w.as_slice()[i], s.c() / schedules[r].c());
            } else {
                prop_assert_eq!(w.as_slice()[i], 0.0);
            }
        }
    }

    #[test]
    fn interpolation_hits_knots_and_stays_between(
        gaps in vec(1e-3..2.0f64, 1..10),
        vals in vec(-50.0..50.0f64, 11),
        frac in 0.0..1.0f64,
    ) {
        let mut times = vec![0.0];
        for g in &gaps {
            times.push(times.last().unwrap() + g);
        }
        let values: Vec<Vec<f64>> = vals[..times.len()].iter().map(|v| vec![*v]).collect();
        let path = InterpolatedPath::new(times.clone(), values.clone()).unwrap();
        for (t, v) in times.iter().zip(&values) {
            prop_assert_eq!(&interpolate(&path, *t).unwrap(), v);
        }
        let k = (frac * gaps.len() as f64) as usize % gaps.len();
        let t = times[k] + frac * gaps[k];
        let (lo, hi) = (values[k][0].min(values[k + 1][0]), values[k][0].max(values[k + 1][0]));
        let x = interpolate(&path, t.min(times[k + 1])).unwrap()[0];
        prop_assert!(x >= lo - 1e-9 && x <= hi + 1e-9);
    }
}

fn schedule_spec() -> impl Strategy<Value = ScheduleSpec> {
    (0.001..1.0f64, 0.76..=1.0f64).prop_map(|(c, delta)| ScheduleSpec::Tapering { c, delta })
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    let algorithm = prop_oneof![
        Just(AlgorithmVariant::Proposed),
        (0.01..1.0f64).prop_map(|mu| AlgorithmVariant::Fedprox { mu }),
    ];
    let regression = (1usize..6, 0.5..20.0f64, -5.0..30.0f64, prop_oneof![
        (0.5..10.0f64).prop_map(SigmaX::Shared),
        vec(0.5..10.0f64, 1..4).prop_map(|choose_from| SigmaX::Choose { choose_from }),
    ])
        .prop_map(|(d, sigma_w, snr_db, sigma_x)| {
            TaskConfig::Regression(RegressionConfig {
                d,
                sigma_w: Some(sigma_w),
                sigma_x,
                snr_db,
                ..Default::default()
            })
        });
    let classification = (2usize..6, 1usize..6, option::of(0.3..0.9f64)).prop_map(|(classes, d, f)| {
        TaskConfig::Classification(ClassificationConfig {
            classes,
            d,
            dominant_fraction: f,
            rare_class: Some(classes - 1),
            ..Default::default()
        })
    });
    (
        any::<u64>(),
        2usize..12,
        2usize..10,
        1usize..100,
        0usize..5000,
        algorithm,
        schedule_spec(),
        prop_oneof![regression, classification],
        (any::<bool>(), 0.1..3.0f64, 1e-4..1e-1f64),
    )
        .prop_map(|(seed, clients, period, batch_size, rounds, algorithm, schedule, task, (tracking, horizon, h_max))| {
            ExperimentConfig {
                seed,
                clients,
                period,
                batch_size,
                rounds,
                algorithm,
                schedule,
                task,
                diagnostics: Diagnostics {
                    tracking,
                    horizon,
                    h_max,
                    ..Default::default()
                },
                ..ExperimentConfig::regression(seed)
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_dump_round_trips(cfg in config()) {
        let cfg = cfg.validate().unwrap();
        let text = cfg.dump();
        prop_assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    #[test]
    fn per_client_schedules_round_trip(cfg in config(), specs in vec(schedule_spec(), 12)) {
        let mut cfg = cfg;
        cfg.schedules = Some(specs[..cfg.clients].to_vec());
        let cfg = cfg.validate().unwrap();
        prop_assert_eq!(parse_config(&cfg.dump()).unwrap(), cfg);
    }
}
