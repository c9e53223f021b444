use std::path::{Path, PathBuf};

use innovations::data::{epoch, load_csv, rolling_splits, save_csv, DataError, SeriesFrame};
use innovations::forecast::{
    generate_ensemble, generate_from_innovations, point_mmae, point_mmse, ForecastError, ForecastOutput,
    ForecastRequest,
};
use innovations::metrics::{summarize, EvaluationRecord, HorizonMetrics, MetricsError, Predictive};
use innovations::model::{Checkpoint, ModelError, Normalization, WiaeModel};
use innovations::synth::{ar1_conditional_law, gen_ar1, gen_markov, Ar1Spec, SynthError};
use innovations::trainer::{train_with, TrainError, TrainReport};
use innovations::TimeSeries;
use serde::{Deserialize, Serialize};

use crate::config::{ProcessSpec, RunConfig, SynthFile};
use crate::manifest::ManifestBuilder;
use crate::{CliError, Common};

pub const DATA_FILE: &str = "data.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "train_report.csv";
pub const FORECAST_FILE: &str = "forecast.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const RECORDS_FILE: &str = "records.csv";
pub const RELIABILITY_FILE: &str = "reliability.csv";
pub const SPLITS_FILE: &str = "crps_by_split.csv";

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => CliError::runtime(e),
            _ => CliError::validation(e),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_) => CliError::runtime(e),
            _ => CliError::validation(e),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::validation(e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::ModeMismatch { .. } | TrainError::InsufficientData { .. } => {
                CliError::validation(e)
            }
            _ => CliError::runtime(e),
        }
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> Self {
        match e {
            ForecastError::Model(m) => m.into(),
            ForecastError::NonFinite(_) | ForecastError::Metrics(_) => CliError::runtime(e),
            _ => CliError::validation(e),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::validation(e)
    }
}

fn load_frame(path: &Path, schema: &innovations::data::CsvSchema) -> Result<SeriesFrame, CliError> {
    load_csv(path, schema).map_err(|e| match e {
        DataError::Io(e) => CliError::runtime(format!("{}: {e}", path.display())),
        e => CliError::validation(format!("{}: {e}", path.display())),
    })
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| match e {
        ModelError::Io(e) => CliError::runtime(format!("{}: {e}", path.display())),
        e => CliError::validation(format!("{}: {e}", path.display())),
    })
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::runtime(e)
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(io)?;
    std::fs::write(path, text + "\n").map_err(io)
}

pub fn synth(common: &Common, spec: Option<PathBuf>) -> Result<(), CliError> {
    let path = spec
        .or_else(|| common.config.clone())
        .ok_or_else(|| CliError::validation("synth needs a process spec (--spec or --config)"))?;
    let mut file = SynthFile::load(&path)?;
    match &mut file.process {
        ProcessSpec::Ar1(s) => s.seed = common.seed.unwrap_or(s.seed),
        ProcessSpec::Markov(s) => s.seed = common.seed.unwrap_or(s.seed),
    }
    if file.interval_secs <= 0 {
        return Err(CliError::validation("interval_secs must be positive"));
    }
    let (series, label, seed) = match &file.process {
        ProcessSpec::Ar1(s) => (gen_ar1(s)?, "synth:ar1", s.seed),
        ProcessSpec::Markov(s) => (gen_markov(s)?, "synth:markov", s.seed),
    };
    prepare_out(&common.out)?;
    let mut manifest = ManifestBuilder::new("synth", &file, vec![seed]);
    manifest.input(&path);
    let frame = SeriesFrame::from_values(series.into_values(), epoch(), file.interval_secs, label);
    let data = common.out.join(DATA_FILE);
    save_csv(&frame, &data, &Default::default())?;
    manifest.finish(&common.out, &[data])
}

pub fn train(
    common: &Common,
    data: &Path,
    epochs: Option<usize>,
    steps_per_epoch: Option<usize>,
    train_len: Option<usize>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.model.seed = s;
        cfg.train.seed = s;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if steps_per_epoch.is_some() {
        cfg.train.steps_per_epoch = steps_per_epoch;
    }
    if train_len.is_some() {
        cfg.data.train_len = train_len;
    }
    let frame = load_frame(data, &cfg.data.schema)?;
    let n = cfg.data.train_len.unwrap_or(frame.len()).min(frame.len());
    let series = TimeSeries::new(frame.values[..n].to_vec());
    let norm = Normalization::fit(series.values())?;
    let model = WiaeModel::new(cfg.model.config(), cfg.model.mode, norm, cfg.model.seed)?;

    prepare_out(&common.out)?;
    let mut manifest = ManifestBuilder::new("train", &cfg, vec![cfg.model.seed, cfg.train.seed]);
    manifest.input(data);
    if let Some(c) = &common.config {
        manifest.input(c);
    }
    let report_path = common.out.join(REPORT_FILE);
    let write_report = |report: &TrainReport| -> Result<(), CliError> {
        let file = std::fs::File::create(&report_path).map_err(io)?;
        report.write_csv(file).map_err(io)
    };
    let result = train_with(model, &series, &cfg.train, |r| {
        if r.step % 500 == 0 {
            eprintln!("step {:>6}  e {:+.5}  eps {:+.5}  L {:+.5}", r.step, r.e, r.epsilon, r.total);
        }
    });
    let (model, report) = match result {
        Ok(ok) => ok,
        Err(TrainError::Diverged { step, report }) => {
            write_report(&report)?;
            manifest.finish(&common.out, std::slice::from_ref(&report_path))?;
            return Err(CliError::runtime(format!(
                "divergence detected at step {step}; partial report in {}",
                report_path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    write_report(&report)?;
    let ck_path = common.out.join(CHECKPOINT_FILE);
    Checkpoint::new(model, report.rng.clone()).save(&ck_path)?;
    manifest.finish(&common.out, &[ck_path, report_path])
}

pub struct ForecastOverrides {
    pub horizon: Option<usize>,
    pub ensemble: Option<usize>,
    pub quantiles: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub at: Option<usize>,
    pub samples: bool,
}

#[derive(Serialize)]
struct ForecastSnapshot<'a> {
    run: &'a RunConfig,
    horizon: usize,
    at: usize,
    seed: u64,
    samples: bool,
}

pub fn forecast(common: &Common, checkpoint: &Path, data: &Path, o: ForecastOverrides) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(h) = o.horizon {
        cfg.forecast.horizon = vec![h];
    }
    if let Some(k) = o.ensemble {
        cfg.forecast.ensemble = k;
    }
    if let Some(q) = o.quantiles {
        cfg.forecast.quantiles = q;
    }
    if let Some(a) = o.alpha {
        cfg.forecast.alpha = a;
    }
    let horizon = match cfg.forecast.horizon.as_slice() {
        [h] => *h,
        _ => return Err(CliError::validation("forecast takes exactly one horizon")),
    };
    let seed = common.seed.unwrap_or(0);
    let ck = load_checkpoint(checkpoint)?;
    let frame = load_frame(data, &cfg.data.schema)?;
    let at = o.at.unwrap_or(frame.len() - 1);
    if at >= frame.len() {
        return Err(CliError::validation(format!("--at {at} is beyond the {} samples of data", frame.len())));
    }
    let request = ForecastRequest {
        history: TimeSeries::new(frame.values[..=at].to_vec()),
        horizon,
        ensemble_size: cfg.forecast.ensemble,
        seed,
    };
    let ensemble = generate_ensemble(&ck.model, &request)?;
    let output = ForecastOutput::new(&request, &ensemble, &cfg.forecast.quantiles, &cfg.forecast.alpha, o.samples)?;

    prepare_out(&common.out)?;
    let snapshot = ForecastSnapshot {
        run: &cfg,
        horizon,
        at,
        seed,
        samples: o.samples,
    };
    let mut manifest = ManifestBuilder::new("forecast", &snapshot, vec![seed]);
    manifest.input(checkpoint);
    manifest.input(data);
    let path = common.out.join(FORECAST_FILE);
    write_json(&path, &output)?;
    manifest.finish(&common.out, &[path])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Exact Gaussian conditional law of an AR(1) process.
    Ar1,
}

#[derive(clap::Args, Debug, Clone)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, conflicts_with_all = ["oracle", "forecast_dir", "rolling"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["forecast_dir", "rolling"])]
    pub oracle: Option<OracleKind>,
    /// AR(1) coefficient for `--oracle ar1`.
    #[arg(long, default_value_t = 0.9)]
    pub ar_coef: f64,
    /// AR(1) noise standard deviation for `--oracle ar1`.
    #[arg(long, default_value_t = 1.0)]
    pub ar_sigma: f64,
    /// Directory written by `forecast --samples`.
    #[arg(long, conflicts_with = "rolling")]
    pub forecast_dir: Option<PathBuf>,
    /// Retrain on each window of the `[rolling]` schedule in the config.
    #[arg(long)]
    pub rolling: bool,
    #[arg(long, value_delimiter = ',')]
    pub horizon: Option<Vec<usize>>,
    #[arg(long)]
    pub ensemble: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split: usize,
    pub horizon: usize,
    pub train_start: usize,
    pub train_end: usize,
    pub test_start: usize,
    pub test_end: usize,
    pub records: usize,
    pub crps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub source: String,
    pub horizons: Vec<HorizonMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splits: Option<Vec<SplitMetrics>>,
}

#[derive(Serialize)]
struct EvaluateSnapshot<'a> {
    run: &'a RunConfig,
    source: String,
    ar_coef: f64,
    ar_sigma: f64,
    seed: u64,
}

fn origins(first: usize, last_target: usize, horizon: usize, stride: usize, count: Option<usize>) -> Vec<usize> {
    if first + horizon > last_target {
        return Vec::new();
    }
    let it = (first..=last_target - horizon).step_by(stride.max(1));
    match count {
        Some(c) => it.take(c).collect(),
        None => it.collect(),
    }
}

fn origin_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64)
}

/// Ensemble forecasts from one encoding of `values`; `offset` maps local indices to
/// positions in the full series.
fn model_records(
    model: &WiaeModel,
    values: &[f64],
    offset: usize,
    horizon: usize,
    local_origins: &[usize],
    ensemble: usize,
    seed: u64,
) -> Result<Vec<EvaluationRecord>, CliError> {
    let v = model.encode_sequence(&TimeSeries::new(values.to_vec()))?;
    local_origins
        .iter()
        .map(|&t| {
            let e = generate_from_innovations(model, &v.values()[..=t], horizon, ensemble, origin_seed(seed, offset + t))?;
            Ok(EvaluationRecord {
                target: offset + t + horizon,
                realized: values[t + horizon],
                horizon,
                forecast: Predictive::from(&e),
            })
        })
        .collect()
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let common = &args.common;
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(h) = &args.horizon {
        cfg.forecast.horizon = h.clone();
    }
    if let Some(k) = args.ensemble {
        cfg.forecast.ensemble = k;
    }
    if let Some(a) = &args.alpha {
        cfg.forecast.alpha = a.clone();
    }
    if args.start.is_some() {
        cfg.evaluate.start = args.start;
    }
    if args.count.is_some() {
        cfg.evaluate.count = args.count;
    }
    if args.stride.is_some() {
        cfg.evaluate.stride = args.stride;
    }
    if let Some(s) = common.seed {
        cfg.model.seed = s;
        cfg.train.seed = s;
    }
    if cfg.forecast.horizon.is_empty() || cfg.forecast.horizon.contains(&0) {
        return Err(CliError::validation("horizons must be positive"));
    }
    let seed = common.seed.unwrap_or(0);
    let frame = load_frame(&args.data, &cfg.data.schema)?;
    let values = &frame.values;
    let n = values.len();
    let stride = cfg.evaluate.stride.unwrap_or(1);
    let mut manifest_inputs = vec![args.data.clone()];
    let mut by_horizon: Vec<Vec<EvaluationRecord>> = Vec::new();
    let mut splits = None;

    let source = if let Some(ck_path) = &args.checkpoint {
        manifest_inputs.push(ck_path.clone());
        let model = load_checkpoint(ck_path)?.model;
        let first = cfg.evaluate.start.or(cfg.data.train_len).unwrap_or(0).max(model.k());
        for &h in &cfg.forecast.horizon {
            let o = origins(first, n - 1, h, stride, cfg.evaluate.count);
            by_horizon.push(model_records(&model, values, 0, h, &o, cfg.forecast.ensemble, seed)?);
        }
        "model".to_string()
    } else if let Some(OracleKind::Ar1) = args.oracle {
        let spec = Ar1Spec {
            a: args.ar_coef,
            sigma: args.ar_sigma,
            len: n,
            seed: 0,
        };
        spec.validate()?;
        let first = cfg.evaluate.start.or(cfg.data.train_len).unwrap_or(0);
        for &h in &cfg.forecast.horizon {
            let records = origins(first, n - 1, h, stride, cfg.evaluate.count)
                .into_iter()
                .map(|t| {
                    let (mean, std) = ar1_conditional_law(&spec, values[t], h)?;
                    Ok(EvaluationRecord {
                        target: t + h,
                        realized: values[t + h],
                        horizon: h,
                        forecast: Predictive::Gaussian { mean, std },
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            by_horizon.push(records);
        }
        "oracle:ar1".to_string()
    } else if let Some(dir) = &args.forecast_dir {
        let path = dir.join(crate::commands::FORECAST_FILE);
        manifest_inputs.push(path.clone());
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        let f: ForecastOutput = serde_json::from_str(&text).map_err(CliError::validation)?;
        let samples = f
            .samples
            .ok_or_else(|| CliError::validation("forecast was written without --samples"))?;
        let target = f.history_len - 1 + f.horizon;
        if target >= n {
            return Err(CliError::validation(format!("target index {target} is beyond the data")));
        }
        by_horizon.push(vec![EvaluationRecord {
            target,
            realized: values[target],
            horizon: f.horizon,
            forecast: Predictive::Ensemble { samples },
        }]);
        "forecast".to_string()
    } else if args.rolling {
        if let Some(c) = &common.config {
            manifest_inputs.push(c.clone());
        }
        let rolling = cfg
            .rolling
            .clone()
            .ok_or_else(|| CliError::validation("--rolling needs a [rolling] section in the config"))?;
        let max_h = *cfg.forecast.horizon.iter().max().unwrap_or(&1);
        let schedule = rolling.schedule(max_h);
        schedule.validate(cfg.model.k)?;
        let mut per_split = Vec::new();
        by_horizon = vec![Vec::new(); cfg.forecast.horizon.len()];
        for split in rolling_splits(n, &schedule)? {
            let train = TimeSeries::new(values[split.train.clone()].to_vec());
            let norm = Normalization::fit(train.values())?;
            let model = WiaeModel::new(cfg.model.config(), cfg.model.mode, norm, cfg.model.seed)?;
            eprintln!("split {}: training on [{}, {})", split.index, split.train.start, split.train.end);
            let (model, _) = train_with(model, &train, &cfg.train, |_| {})?;
            let local = &values[split.train.start..split.test.end];
            for (hi, &h) in cfg.forecast.horizon.iter().enumerate() {
                let first = split.test.start - split.train.start - h;
                let o = origins(first.max(model.k()), local.len() - 1, h, stride, cfg.evaluate.count);
                let records = model_records(&model, local, split.train.start, h, &o, cfg.forecast.ensemble, seed)?;
                let crps = innovations::metrics::crps_average(&records)?;
                per_split.push(SplitMetrics {
                    split: split.index,
                    horizon: h,
                    train_start: split.train.start,
                    train_end: split.train.end,
                    test_start: split.test.start,
                    test_end: split.test.end,
                    records: records.len(),
                    crps,
                });
                by_horizon[hi].extend(records);
            }
        }
        splits = Some(per_split);
        "rolling".to_string()
    } else {
        return Err(CliError::validation(
            "evaluate needs one of --checkpoint, --oracle, --forecast-dir or --rolling",
        ));
    };

    let mut horizons = Vec::new();
    for records in &by_horizon {
        if records.is_empty() {
            return Err(CliError::validation("no forecast targets in the requested range"));
        }
        horizons.push(summarize(records, &cfg.forecast.alpha)?);
    }

    prepare_out(&common.out)?;
    let snapshot = EvaluateSnapshot {
        run: &cfg,
        source: source.clone(),
        ar_coef: args.ar_coef,
        ar_sigma: args.ar_sigma,
        seed,
    };
    let mut manifest = ManifestBuilder::new("evaluate", &snapshot, vec![seed]);
    for p in &manifest_inputs {
        manifest.input(p);
    }
    let report = MetricsReport {
        schema_version: 1,
        source,
        horizons: horizons.clone(),
        splits: splits.clone(),
    };
    let metrics_path = common.out.join(METRICS_FILE);
    write_json(&metrics_path, &report)?;
    let records_path = common.out.join(RECORDS_FILE);
    write_records(&records_path, &by_horizon, &cfg.forecast.alpha)?;
    let reliability_path = common.out.join(RELIABILITY_FILE);
    write_reliability(&reliability_path, &horizons)?;
    let mut outputs = vec![metrics_path, records_path, reliability_path];
    if let Some(s) = &splits {
        let path = common.out.join(SPLITS_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        for row in s {
            w.serialize(row).map_err(io)?;
        }
        w.flush().map_err(io)?;
        outputs.push(path);
    }
    manifest.finish(&common.out, &outputs)
}

/// Columns: `horizon,target,realized,mean,median,crps`, then
/// `lower_<alpha>,upper_<alpha>,inside_<alpha>` for each level.
fn write_records(path: &Path, by_horizon: &[Vec<EvaluationRecord>], alphas: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header: Vec<String> = ["horizon", "target", "realized", "mean", "median", "crps"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for a in alphas {
        header.extend([format!("lower_{a}"), format!("upper_{a}"), format!("inside_{a}")]);
    }
    w.write_record(&header).map_err(io)?;
    for r in by_horizon.iter().flatten() {
        let (mean, median) = match &r.forecast {
            Predictive::Ensemble { samples } => {
                let e = innovations::ForecastEnsemble::new(samples.clone())?;
                (point_mmse(&e), point_mmae(&e))
            }
            Predictive::Gaussian { mean, .. } => (*mean, *mean),
        };
        let mut row = vec![
            r.horizon.to_string(),
            r.target.to_string(),
            r.realized.to_string(),
            mean.to_string(),
            median.to_string(),
            r.crps()?.to_string(),
        ];
        for &a in alphas {
            let iv = r.interval(a)?;
            row.extend([iv.lower.to_string(), iv.upper.to_string(), u8::from(iv.contains(r.realized)).to_string()]);
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reliability curve points: nominal level against observed coverage.
fn write_reliability(path: &Path, horizons: &[HorizonMetrics]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["horizon", "alpha", "coverage", "cpe", "acpe"]).map_err(io)?;
    for h in horizons {
        for c in &h.coverage {
            w.write_record([
                h.horizon.to_string(),
                c.alpha.to_string(),
                c.coverage.to_string(),
                c.cpe.to_string(),
                c.acpe.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
