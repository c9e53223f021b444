//! CSV ingestion, gap handling and rolling train/test schedules.

use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};

use crate::series::TimeSeries;

pub const DATASET_FORMAT: u32 = 1;
const ISO_OUT: &str = "%Y-%m-%dT%H:%M:%S%.f";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: cannot parse timestamp `{value}`")]
    Timestamp { line: u64, value: String },
    #[error("line {line}: cannot parse value `{value}`")]
    Value { line: u64, value: String },
    #[error("line {line}: duplicated timestamp")]
    Duplicate { line: u64 },
    #[error("line {line}: timestamp goes backwards")]
    NonMonotone { line: u64 },
    #[error("line {line}: gap of {missing} missing samples")]
    Gap { line: u64, missing: u64 },
    #[error("line {line}: spacing is not a multiple of the sampling interval")]
    Irregular { line: u64 },
    #[error("need at least two rows to infer the sampling interval, found {0}")]
    TooShort(usize),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("insufficient data: need {needed} samples, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("dataset format {0} is not supported")]
    Format(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapPolicy {
    #[default]
    Reject,
    /// Fill missing samples on the line between their neighbours.
    LinearImpute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub timestamp_column: String,
    pub value_column: String,
    /// `chrono` format string; ISO-8601 when absent.
    pub timestamp_format: Option<String>,
    pub gap_policy: GapPolicy,
    pub units: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            value_column: "value".into(),
            timestamp_format: None,
            gap_policy: GapPolicy::Reject,
            units: None,
        }
    }
}

/// A validated, regularly sampled series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFrame {
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Vec<f64>,
    /// `true` where the value was filled in rather than observed.
    pub imputed: Vec<bool>,
    pub interval_secs: i64,
    pub units: Option<String>,
    pub source: String,
}

impl SeriesFrame {
    /// Regular frame starting at `start` with one sample per `interval_secs`.
    pub fn from_values(values: Vec<f64>, start: NaiveDateTime, interval_secs: i64, source: impl Into<String>) -> Self {
        let step = TimeDelta::seconds(interval_secs);
        let timestamps = (0..values.len()).map(|i| start + step * i as i32).collect();
        Self {
            timestamps,
            imputed: vec![false; values.len()],
            values,
            interval_secs,
            units: None,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn imputed_count(&self) -> usize {
        self.imputed.iter().filter(|f| **f).count()
    }

    pub fn to_series(&self) -> TimeSeries {
        TimeSeries::new(self.values.clone())
    }
}

/// Default start time for generated data.
pub fn epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2000, 1, 1).and_then(|d| d.and_hms_opt(0, 0, 0)).expect("valid date")
}

fn parse_timestamp(s: &str, format: Option<&str>) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Some(f) = format {
        return NaiveDateTime::parse_from_str(s, f)
            .ok()
            .or_else(|| NaiveDate::parse_from_str(s, f).ok().and_then(|d| d.and_hms_opt(0, 0, 0)));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)))
}

/// Reads and validates a CSV file with a header row.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SeriesFrame, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, &path.display().to_string())
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema, source: &str) -> Result<SeriesFrame, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let csv_err = |e: csv::Error| DataError::Csv {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let (tcol, vcol) = (col(&schema.timestamp_column)?, col(&schema.value_column)?);
    let mut rows: Vec<(u64, NaiveDateTime, f64)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let ts = record.get(tcol).unwrap_or("");
        let t = parse_timestamp(ts, schema.timestamp_format.as_deref()).ok_or_else(|| DataError::Timestamp {
            line,
            value: ts.to_string(),
        })?;
        let raw = record.get(vcol).unwrap_or("");
        let v: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| DataError::Value {
                line,
                value: raw.to_string(),
            })?;
        rows.push((line, t, v));
    }
    if rows.len() < 2 {
        return Err(DataError::TooShort(rows.len()));
    }
    let mut interval = i64::MAX;
    for w in rows.windows(2) {
        let d = (w[1].1 - w[0].1).num_milliseconds();
        if d == 0 {
            return Err(DataError::Duplicate { line: w[1].0 });
        }
        if d < 0 {
            return Err(DataError::NonMonotone { line: w[1].0 });
        }
        interval = interval.min(d);
    }
    let mut frame = SeriesFrame {
        timestamps: vec![rows[0].1],
        values: vec![rows[0].2],
        imputed: vec![false],
        interval_secs: interval / 1000,
        units: schema.units.clone(),
        source: source.to_string(),
    };
    for w in rows.windows(2) {
        let (line, t, v) = w[1];
        let d = (t - w[0].1).num_milliseconds();
        if d % interval != 0 {
            return Err(DataError::Irregular { line });
        }
        let missing = (d / interval - 1) as u64;
        if missing > 0 {
            if schema.gap_policy == GapPolicy::Reject {
                return Err(DataError::Gap { line, missing });
            }
            let prev = w[0].2;
            for j in 1..=missing {
                let frac = j as f64 / (missing + 1) as f64;
                frame.timestamps.push(w[0].1 + TimeDelta::milliseconds(interval * j as i64));
                frame.values.push(prev + frac * (v - prev));
                frame.imputed.push(true);
            }
        }
        frame.timestamps.push(t);
        frame.values.push(v);
        frame.imputed.push(false);
    }
    Ok(frame)
}

pub fn save_csv(frame: &SeriesFrame, path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(), DataError> {
    let file = std::fs::File::create(path)?;
    write_csv(frame, file, schema)
}

pub fn write_csv<W: std::io::Write>(frame: &SeriesFrame, writer: W, schema: &CsvSchema) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| DataError::Csv {
        line: 0,
        message: e.to_string(),
    };
    w.write_record([&schema.timestamp_column, &schema.value_column]).map_err(io)?;
    let fmt = schema.timestamp_format.as_deref().unwrap_or(ISO_OUT);
    for (t, v) in frame.timestamps.iter().zip(&frame.values) {
        w.write_record([t.format(fmt).to_string(), v.to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Dataset {
    format: u32,
    frame: SeriesFrame,
}

/// Stores a frame, flags included, in the JSON checkpoint container.
pub fn save_dataset(frame: &SeriesFrame, path: impl AsRef<Path>) -> Result<(), DataError> {
    let ds = Dataset {
        format: DATASET_FORMAT,
        frame: frame.clone(),
    };
    std::fs::write(path, serde_json::to_string(&ds)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<SeriesFrame, DataError> {
    let ds: Dataset = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if ds.format != DATASET_FORMAT {
        return Err(DataError::Format(ds.format));
    }
    Ok(ds.frame)
}

/// Lengths are in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingSchedule {
    pub window: usize,
    pub period: usize,
    pub horizon: usize,
    /// Limit on the evaluated stretch after the first window.
    pub span: Option<usize>,
}

impl RollingSchedule {
    /// `days` of training data retrained every `period_days`, sampling every `interval_secs`.
    pub fn from_days(window_days: usize, period_days: usize, horizon: usize, interval_secs: usize) -> Self {
        let per_day = 86_400 / interval_secs;
        Self {
            window: window_days * per_day,
            period: period_days * per_day,
            horizon,
            span: None,
        }
    }

    pub fn validate(&self, k: usize) -> Result<(), DataError> {
        if self.period == 0 || self.horizon == 0 {
            return Err(DataError::Schedule("period and horizon must be positive".into()));
        }
        if self.window <= k + self.horizon {
            return Err(DataError::Schedule(format!(
                "window {} must exceed k + T = {}",
                self.window,
                k + self.horizon
            )));
        }
        if self.period > self.window {
            return Err(DataError::Schedule("retrain period exceeds the window".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub index: usize,
    pub train: Range<usize>,
    pub test: Range<usize>,
}

/// Consecutive `(train, test)` index ranges: split `i` trains on
/// `[iP, iP + W)` and tests on the following `P` samples.
pub fn rolling_splits(len: usize, schedule: &RollingSchedule) -> Result<Vec<Split>, DataError> {
    schedule.validate(0)?;
    let (w, p) = (schedule.window, schedule.period);
    if len < w + p {
        return Err(DataError::InsufficientData { needed: w + p, found: len });
    }
    let avail = schedule.span.map_or(len - w, |s| s.min(len - w));
    Ok((0..avail / p)
        .map(|i| Split {
            index: i,
            train: i * p..i * p + w,
            test: i * p + w..i * p + w + p,
        })
        .collect())
}
