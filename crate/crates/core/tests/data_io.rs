use innovations::data::{
    epoch, load_csv, load_dataset, read_csv, rolling_splits, save_csv, save_dataset, CsvSchema, DataError, GapPolicy,
    RollingSchedule, SeriesFrame,
};

fn read(text: &str, schema: &CsvSchema) -> Result<SeriesFrame, DataError> {
    read_csv(text.as_bytes(), schema, "inline")
}

#[test]
fn three_row_file() {
    let f = read(
        "timestamp,value\n2024-01-01T00:00:00,1.5\n2024-01-01T00:05:00,2.0\n2024-01-01T00:10:00,-3.25\n",
        &CsvSchema::default(),
    )
    .unwrap();
    assert_eq!(f.len(), 3);
    assert_eq!(f.values, vec![1.5, 2.0, -3.25]);
    assert_eq!(f.interval_secs, 300);
    assert_eq!(f.imputed_count(), 0);
}

#[test]
fn duplicate_timestamp_names_its_line() {
    let err = read(
        "timestamp,value\n2024-01-01T00:00:00,1\n2024-01-01T00:05:00,2\n2024-01-01T00:05:00,3\n",
        &CsvSchema::default(),
    )
    .unwrap_err();
    assert!(matches!(err, DataError::Duplicate { line: 4 }), "{err:?}");
    assert!(err.to_string().contains("line 4"));
}

#[test]
fn malformed_rows_report_line_numbers() {
    let s = CsvSchema::default();
    let e = read("timestamp,value\n2024-01-01T00:00:00,1\nnot-a-time,2\n", &s).unwrap_err();
    assert!(matches!(e, DataError::Timestamp { line: 3, .. }), "{e:?}");
    let e = read("timestamp,value\n2024-01-01T00:00:00,1\n2024-01-01T00:05:00,abc\n", &s).unwrap_err();
    assert!(matches!(e, DataError::Value { line: 3, .. }), "{e:?}");
    let e = read("timestamp,value\n2024-01-01T00:05:00,1\n2024-01-01T00:00:00,2\n", &s).unwrap_err();
    assert!(matches!(e, DataError::NonMonotone { line: 3 }), "{e:?}");
    let e = read("time,value\n2024-01-01T00:00:00,1\n", &s).unwrap_err();
    assert!(matches!(e, DataError::MissingColumn(ref c) if c == "timestamp"));
}

#[test]
fn gaps_are_rejected_or_imputed() {
    let text = "timestamp,value\n2024-01-01T00:00:00,1\n2024-01-01T00:05:00,2\n2024-01-01T00:15:00,6\n";
    let e = read(text, &CsvSchema::default()).unwrap_err();
    assert!(matches!(e, DataError::Gap { line: 4, missing: 1 }), "{e:?}");
    let schema = CsvSchema {
        gap_policy: GapPolicy::LinearImpute,
        ..Default::default()
    };
    let f = read(text, &schema).unwrap();
    assert_eq!(f.values, vec![1.0, 2.0, 4.0, 6.0]);
    assert_eq!(f.imputed, vec![false, false, true, false]);
}

#[test]
fn custom_columns_and_format() {
    let schema = CsvSchema {
        timestamp_column: "Time Stamp".into(),
        value_column: "LBMP".into(),
        timestamp_format: Some("%m/%d/%Y %H:%M".into()),
        units: Some("$/MWh".into()),
        ..Default::default()
    };
    let f = read("Time Stamp,Name,LBMP\n01/01/2024 00:00,X,20.1\n01/01/2024 00:05,X,19.7\n", &schema).unwrap();
    assert_eq!(f.values, vec![20.1, 19.7]);
    assert_eq!(f.units.as_deref(), Some("$/MWh"));
}

#[test]
fn csv_round_trip_is_value_identical() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..50).map(|i| (i as f64 * 0.731).sin() * 1e3 + 1.0 / 3.0).collect();
    let frame = SeriesFrame::from_values(values, epoch(), 300, "gen");
    let schema = CsvSchema::default();
    let p1 = dir.path().join("a.csv");
    save_csv(&frame, &p1, &schema).unwrap();
    let once = load_csv(&p1, &schema).unwrap();
    let p2 = dir.path().join("b.csv");
    save_csv(&once, &p2, &schema).unwrap();
    let twice = load_csv(&p2, &schema).unwrap();
    assert_eq!(once.values, frame.values);
    assert_eq!(once.timestamps, frame.timestamps);
    assert_eq!(twice.values, once.values);
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn dataset_container_keeps_flags() {
    let dir = tempfile::tempdir().unwrap();
    let mut frame = SeriesFrame::from_values(vec![1.0, 2.0, 3.0], epoch(), 60, "x");
    frame.imputed[1] = true;
    let p = dir.path().join("d.json");
    save_dataset(&frame, &p).unwrap();
    assert_eq!(load_dataset(&p).unwrap(), frame);
}

#[test]
fn split_counts() {
    let s = RollingSchedule { window: 100, period: 20, horizon: 4, span: None };
    assert_eq!(rolling_splits(120, &s).unwrap().len(), 1);
    let two = rolling_splits(140, &s).unwrap();
    assert_eq!(two.len(), 2);
    assert_eq!(two[0].test.end, two[1].test.start);
    assert!(matches!(rolling_splits(119, &s), Err(DataError::InsufficientData { .. })));
}

#[test]
fn four_months_of_five_minute_data() {
    let s = RollingSchedule::from_days(30, 7, 12, 300);
    let len = 120 * 288;
    assert_eq!(rolling_splits(len, &s).unwrap().len(), 12);
}

#[test]
fn no_split_leaks_test_samples_into_training() {
    let s = RollingSchedule { window: 50, period: 7, horizon: 3, span: None };
    let splits = rolling_splits(400, &s).unwrap();
    for (i, sp) in splits.iter().enumerate() {
        assert_eq!(sp.train.end, sp.test.start);
        assert!(sp.test.clone().all(|t| !sp.train.contains(&t)));
        if i > 0 {
            assert!(splits[i - 1].test.end <= sp.test.start);
        }
    }
}

#[test]
fn schedule_invariants() {
    let bad = RollingSchedule { window: 10, period: 5, horizon: 3, span: None };
    assert!(matches!(bad.validate(7), Err(DataError::Schedule(_))));
    let bad = RollingSchedule { window: 10, period: 11, horizon: 1, span: None };
    assert!(bad.validate(1).is_err());
}
