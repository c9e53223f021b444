//! Adversarial training of the autoencoder.
//!
//! Each generator step is preceded by `n_critic` critic steps. The
//! innovations critic compares windows of encoder output against IID
//! uniform noise. In WIR mode a second critic compares decoded windows
//! against data windows; in SIR mode the decoder is instead pulled towards
//! the data by a squared-error term.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Mode, ModelError, RngState, WiaeModel};
use crate::ndiff::{
    Activation, Adam, AdamConfig, Binding, GradStore, LayerSpec, NdiffError, Network, NetworkSpec, Optimizer, Tape,
    Tensor,
};
use crate::series::{InnovationsKind, InnovationsSequence, TimeSeries};
use crate::stats::variance;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("config mode {config:?} does not match model mode {model:?}")]
    ModeMismatch { config: Mode, model: Mode },
    #[error("insufficient data: need at least {needed} samples, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("shape mismatch: real batch {real:?}, fake batch {fake:?}")]
    BatchShape { real: Vec<usize>, fake: Vec<usize> },
    #[error("divergence detected at step {step}")]
    Diverged { step: usize, report: Box<TrainReport> },
    #[error(transparent)]
    Ndiff(#[from] NdiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Weight of the reconstruction term.
    pub lambda: f64,
    pub batch_size: usize,
    pub n_critic: usize,
    /// Gradient-penalty coefficient.
    pub penalty: f64,
    pub lr_generator: f64,
    pub lr_critic: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    /// Generator steps per epoch; defaults to one pass over all segment starts.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
    pub critic_hidden: usize,
    /// Trailing window for the smoothed objective used in model selection.
    pub smoothing: usize,
    /// Fraction of training after which states become eligible for selection.
    pub selection_start: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Wir,
            lambda: 1.0,
            batch_size: 64,
            n_critic: 5,
            penalty: 10.0,
            lr_generator: 1e-3,
            lr_critic: 1e-3,
            beta1: 0.5,
            beta2: 0.9,
            epochs: 10,
            steps_per_epoch: None,
            seed: 0,
            critic_hidden: 64,
            smoothing: 50,
            selection_start: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.n_critic == 0 {
            return bad("n_critic must be at least 1");
        }
        if !(self.penalty >= 0.0) {
            return bad("penalty must be non-negative");
        }
        if !(self.lr_generator > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.critic_hidden == 0 || self.smoothing == 0 {
            return bad("critic_hidden and smoothing must be positive");
        }
        if !(0.0..=1.0).contains(&self.selection_start) {
            return bad("selection_start must lie in [0, 1]");
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch must be positive");
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }
}

/// Samples per training segment: enough for one full critic window of
/// innovations (SIR) or of reconstructions (WIR).
pub fn segment_length(mode: Mode, k: usize) -> usize {
    match mode {
        Mode::Sir => 2 * k + 1,
        Mode::Wir => 3 * k + 1,
    }
}

pub fn critic_spec(window: usize, hidden: usize) -> NetworkSpec {
    NetworkSpec {
        input_transform: Activation::Identity,
        layers: vec![
            LayerSpec::conv(1, hidden, window, Activation::leaky()),
            LayerSpec::dense(hidden, hidden, Activation::leaky()),
            LayerSpec::dense(hidden, 1, Activation::Identity),
        ],
        window,
        outputs: 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair {
    pub innovations: Network,
    /// Present in WIR mode only.
    pub decoding: Option<Network>,
}

impl CriticPair {
    pub fn new(mode: Mode, window: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self, NdiffError> {
        let innovations = Network::new(critic_spec(window, hidden), rng)?;
        let decoding = match mode {
            Mode::Wir => Some(Network::new(critic_spec(window, hidden), rng)?),
            Mode::Sir => None,
        };
        Ok(Self { innovations, decoding })
    }
}

/// `count` IID `U(0, 1)` draws.
pub fn sample_uniform_noise(count: usize, rng: &mut impl Rng) -> InnovationsSequence {
    let v = (0..count).map(|_| rng.random::<f64>()).collect();
    InnovationsSequence::new(v, InnovationsKind::Pseudo).expect("uniform draws lie in [0, 1)")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLoss {
    /// `mean D(fake) - mean D(real)`.
    pub wasserstein: f64,
    pub penalty: f64,
    pub total: f64,
}

/// WGAN-GP critic loss and its exact parameter gradient.
///
/// `mix[b]` is the interpolation weight of row `b` of `real` in the
/// penalty point `mix real + (1 - mix) fake`.
pub fn critic_loss(
    critic: &Network,
    real: &Tensor,
    fake: &Tensor,
    penalty: f64,
    mix: &[f64],
) -> Result<(CriticLoss, GradStore), TrainError> {
    if real.shape() != fake.shape() {
        return Err(TrainError::BatchShape {
            real: real.shape().to_vec(),
            fake: fake.shape().to_vec(),
        });
    }
    let batch = real.shape()[0];
    if mix.len() != batch {
        return Err(NdiffError::ShapeMismatch {
            expected: vec![batch],
            found: vec![mix.len()],
        }
        .into());
    }
    let mut tape = Tape::new();
    let r = tape.constant(real.clone());
    let f = tape.constant(fake.clone());
    let dr = critic.apply(&mut tape, r, Binding::Trainable)?;
    let df = critic.apply(&mut tape, f, Binding::Trainable)?;
    let mr = tape.mean(dr);
    let mf = tape.mean(df);
    let w = tape.sub(mf, mr)?;
    let wasserstein = tape.value(w).data()[0];
    let mut grads = tape.backward(w, &[1.0])?.for_store(critic.params())?;

    let row = real.len() / batch;
    let mut interp = Vec::with_capacity(real.len());
    for (b, &m) in mix.iter().enumerate() {
        let rr = &real.data()[b * row..(b + 1) * row];
        let ff = &fake.data()[b * row..(b + 1) * row];
        interp.extend(rr.iter().zip(ff).map(|(x, y)| m * x + (1.0 - m) * y));
    }
    let interp = Tensor::new(real.shape().to_vec(), interp)?;
    let (g, slopes) = critic.input_gradient(&interp)?;
    let mut gp = 0.0;
    let mut coeffs = Vec::with_capacity(batch);
    for b in 0..batch {
        let norm = g.data()[b * row..(b + 1) * row].iter().map(|v| v * v).sum::<f64>().sqrt();
        gp += (norm - 1.0) * (norm - 1.0);
        coeffs.push(if norm < 1e-12 {
            0.0
        } else {
            penalty * 2.0 * (norm - 1.0) / (norm * batch as f64)
        });
    }
    let gp = penalty * gp / batch as f64;
    if penalty > 0.0 && coeffs.iter().any(|c| *c != 0.0) {
        // d/dtheta of (g . g_fixed) equals g . dg/dtheta for piecewise-linear critics.
        let mut tape = Tape::new();
        let t = tape.constant(g);
        let d = critic.apply_tangent(&mut tape, t, &slopes)?;
        grads.accumulate(&tape.backward(d, &coeffs)?.for_store(critic.params())?)?;
    }
    Ok((
        CriticLoss {
            wasserstein,
            penalty: gp,
            total: wasserstein + gp,
        },
        grads,
    ))
}

/// Which terms of the generator objective to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terms {
    Both,
    InnovationsOnly,
}

/// Inputs of one generator evaluation.
#[derive(Debug, Clone)]
pub struct GeneratorBatch {
    /// Normalized data segments `[B, segment_length, 1]`.
    pub segments: Tensor,
    /// Uniform noise windows `[B, k + 1, 1]`.
    pub noise: Tensor,
    /// Variance of the normalized training series; scales the SIR error.
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLoss {
    /// Innovations term `mean D_g(u) - mean D_g(v)`.
    pub e: f64,
    /// Reconstruction term: relative squared error (SIR) or
    /// `mean D_p(x) - mean D_p(x_hat)` (WIR).
    pub epsilon: f64,
    /// `e + lambda epsilon`.
    pub total: f64,
}

fn mean_of(t: &Tensor) -> f64 {
    t.data().iter().sum::<f64>() / t.len() as f64
}

/// Windows `[start, start + len)` along the time axis of `[B, L, C]`.
fn time_slice(t: &Tensor, start: usize, len: usize) -> Result<Tensor, NdiffError> {
    let (b, l, c) = t.dims3()?;
    let mut out = Vec::with_capacity(b * len * c);
    for row in 0..b {
        out.extend_from_slice(&t.data()[(row * l + start) * c..(row * l + start + len) * c]);
    }
    Tensor::new(vec![b, len, c], out)
}

/// Generator objective and its gradients for the encoder and decoder.
/// Critics enter as constants.
pub fn generator_loss(
    model: &WiaeModel,
    critics: &CriticPair,
    batch: &GeneratorBatch,
    lambda: f64,
    terms: Terms,
) -> Result<(GeneratorLoss, GradStore, GradStore), TrainError> {
    let k = model.k();
    let window = k + 1;
    let (_, len, _) = batch.segments.dims3()?;
    let needed = segment_length(model.mode(), k);
    if len != needed {
        return Err(NdiffError::ShapeMismatch {
            expected: vec![needed],
            found: vec![len],
        }
        .into());
    }
    let mut tape = Tape::new();
    let seg = tape.constant(batch.segments.clone());
    let v_all = model.encoder().apply(&mut tape, seg, Binding::Trainable)?;
    let x_hat = model.decoder().apply(&mut tape, v_all, Binding::Trainable)?;
    let v_win = match model.mode() {
        Mode::Sir => v_all,
        Mode::Wir => tape.slice_len(v_all, k, window)?,
    };
    let dv = critics.innovations.apply(&mut tape, v_win, Binding::Frozen)?;
    let mdv = tape.mean(dv);
    let neg = tape.mul_scalar(mdv, -1.0);
    let du = critics.innovations.eval(&batch.noise)?;
    let e = tape.add_scalar(neg, mean_of(&du));
    let epsilon = match model.mode() {
        Mode::Sir => {
            let target = tape.constant(time_slice(&batch.segments, 2 * k, 1)?);
            let diff = tape.sub(x_hat, target)?;
            let sq = tape.square(diff);
            let mse = tape.mean(sq);
            tape.mul_scalar(mse, 1.0 / batch.variance)
        }
        Mode::Wir => {
            let critic = critics
                .decoding
                .as_ref()
                .ok_or_else(|| TrainError::Config("WIR training needs a decoding critic".into()))?;
            let dx_hat = critic.apply(&mut tape, x_hat, Binding::Frozen)?;
            let m = tape.mean(dx_hat);
            let neg = tape.mul_scalar(m, -1.0);
            let real = critic.eval(&time_slice(&batch.segments, 2 * k, window)?)?;
            tape.add_scalar(neg, mean_of(&real))
        }
    };
    let weighted = tape.mul_scalar(epsilon, lambda);
    let total = tape.add(e, weighted)?;
    let root = match terms {
        Terms::Both => total,
        Terms::InnovationsOnly => e,
    };
    let grads = tape.backward(root, &[1.0])?;
    let g_enc = grads.for_store(model.encoder().params())?;
    let g_dec = grads.for_store(model.decoder().params())?;
    let loss = GeneratorLoss {
        e: tape.value(e).data()[0],
        epsilon: tape.value(epsilon).data()[0],
        total: tape.value(total).data()[0],
    };
    Ok((loss, g_enc, g_dec))
}

/// One row per generator step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    /// Summed critic loss of the last critic step.
    pub critic_loss: f64,
    pub e: f64,
    pub epsilon: f64,
    pub total: f64,
    pub smoothed_total: f64,
    pub grad_norm_encoder: f64,
    pub grad_norm_decoder: f64,
    pub grad_norm_critic: f64,
}

/// Header of [`TrainReport::write_csv`], in [`TrainRecord`] field order.
pub const REPORT_COLUMNS: [&str; 9] = [
    "step",
    "critic_loss",
    "e",
    "epsilon",
    "total",
    "smoothed_total",
    "grad_norm_encoder",
    "grad_norm_decoder",
    "grad_norm_critic",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<TrainRecord>,
    /// Step whose parameters were returned, if any step was taken.
    pub best_step: Option<usize>,
    pub steps_per_epoch: usize,
    pub elapsed_secs: f64,
    pub rng: Option<RngState>,
}

impl TrainReport {
    /// Same trajectory, ignoring wall-clock time.
    pub fn same_run(&self, other: &TrainReport) -> bool {
        self.records == other.records && self.best_step == other.best_step && self.rng == other.rng
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(REPORT_COLUMNS)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    data: Vec<f64>,
    variance: f64,
    seg_len: usize,
    window: usize,
    rng: ChaCha8Rng,
}

impl Trainer<'_> {
    fn segments(&mut self) -> Result<Tensor, NdiffError> {
        let b = self.config.batch_size;
        let mut out = Vec::with_capacity(b * self.seg_len);
        let max_start = self.data.len() - self.seg_len;
        for _ in 0..b {
            let s = self.rng.random_range(0..=max_start);
            out.extend_from_slice(&self.data[s..s + self.seg_len]);
        }
        Tensor::new(vec![b, self.seg_len, 1], out)
    }

    fn noise(&mut self) -> Result<Tensor, NdiffError> {
        let b = self.config.batch_size;
        let u = sample_uniform_noise(b * self.window, &mut self.rng);
        Tensor::new(vec![b, self.window, 1], u.into_values())
    }

    fn mix(&mut self) -> Vec<f64> {
        (0..self.config.batch_size).map(|_| self.rng.random()).collect()
    }
}

enum Failure {
    Diverged,
    Other(TrainError),
}

impl<E: Into<TrainError>> From<E> for Failure {
    fn from(e: E) -> Self {
        match e.into() {
            TrainError::Ndiff(NdiffError::NonFinite { .. }) => Failure::Diverged,
            other => Failure::Other(other),
        }
    }
}

pub fn train(model: WiaeModel, series: &TimeSeries, config: &TrainConfig) -> Result<(WiaeModel, TrainReport), TrainError> {
    train_with(model, series, config, |_| {})
}

/// [`train`] with a callback invoked after every generator step.
pub fn train_with(
    mut model: WiaeModel,
    series: &TimeSeries,
    config: &TrainConfig,
    mut on_step: impl FnMut(&TrainRecord),
) -> Result<(WiaeModel, TrainReport), TrainError> {
    config.validate()?;
    if config.mode != model.mode() {
        return Err(TrainError::ModeMismatch {
            config: config.mode,
            model: model.mode(),
        });
    }
    let k = model.k();
    let seg_len = segment_length(model.mode(), k);
    let needed = (10 * (k + 1)).max(seg_len);
    if series.len() < needed {
        return Err(TrainError::InsufficientData {
            needed,
            found: series.len(),
        });
    }
    let data = model.normalize(series.values())?;
    let var = variance(&data);
    let steps_per_epoch = config
        .steps_per_epoch
        .unwrap_or_else(|| (data.len() - seg_len + 1).div_ceil(config.batch_size));
    let total_steps = config.epochs * steps_per_epoch;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut critics = CriticPair::new(model.mode(), k + 1, config.critic_hidden, &mut rng)?;
    let mut t = Trainer {
        config,
        data,
        variance: if var > 0.0 { var } else { 1.0 },
        seg_len,
        window: k + 1,
        rng,
    };
    let mut opt_enc = Adam::new(config.adam(config.lr_generator), model.encoder().params());
    let mut opt_dec = Adam::new(config.adam(config.lr_generator), model.decoder().params());
    let mut opt_innov = Adam::new(config.adam(config.lr_critic), critics.innovations.params());
    let mut opt_decoding = critics.decoding.as_ref().map(|c| Adam::new(config.adam(config.lr_critic), c.params()));

    let start = Instant::now();
    let mut report = TrainReport {
        records: Vec::with_capacity(total_steps),
        best_step: None,
        steps_per_epoch,
        elapsed_secs: 0.0,
        rng: None,
    };
    let select_from = ((config.selection_start * total_steps as f64).floor() as usize)
        .max(config.smoothing.min(total_steps).saturating_sub(1));
    let mut best: Option<(f64, Network, Network)> = None;
    let mut window_sum = 0.0;

    for step in 0..total_steps {
        let outcome = (|| -> Result<(TrainRecord, GradStore, GradStore), Failure> {
            let mut critic_total = 0.0;
            let mut critic_norm = 0.0;
            for _ in 0..config.n_critic {
                let seg = t.segments()?;
                let v_all = model.encoder().eval(&seg)?;
                let (v_win, fake_x, real_x) = match model.mode() {
                    Mode::Sir => (v_all, None, None),
                    Mode::Wir => {
                        let x_hat = model.decoder().eval(&v_all)?;
                        (
                            time_slice(&v_all, k, k + 1)?,
                            Some(x_hat),
                            Some(time_slice(&seg, 2 * k, k + 1)?),
                        )
                    }
                };
                let u = t.noise()?;
                let mix = t.mix();
                let (loss, grads) = critic_loss(&critics.innovations, &u, &v_win, config.penalty, &mix)?;
                critic_total = loss.total;
                critic_norm = grads.norm();
                opt_innov.step(critics.innovations.params_mut(), &grads)?;
                if let (Some(critic), Some(opt), Some(fake), Some(real)) =
                    (critics.decoding.as_mut(), opt_decoding.as_mut(), fake_x, real_x)
                {
                    let mix = t.mix();
                    let (loss, grads) = critic_loss(critic, &real, &fake, config.penalty, &mix)?;
                    critic_total += loss.total;
                    critic_norm = (critic_norm * critic_norm + grads.norm().powi(2)).sqrt();
                    opt.step(critic.params_mut(), &grads)?;
                }
            }
            let batch = GeneratorBatch {
                segments: t.segments()?,
                noise: t.noise()?,
                variance: t.variance,
            };
            let (loss, g_enc, g_dec) = generator_loss(&model, &critics, &batch, config.lambda, Terms::Both)?;
            if !(loss.total.is_finite() && critic_total.is_finite()) {
                return Err(Failure::Diverged);
            }
            let record = TrainRecord {
                step,
                critic_loss: critic_total,
                e: loss.e,
                epsilon: loss.epsilon,
                total: loss.total,
                smoothed_total: f64::NAN,
                grad_norm_encoder: g_enc.norm(),
                grad_norm_decoder: g_dec.norm(),
                grad_norm_critic: critic_norm,
            };
            Ok((record, g_enc, g_dec))
        })();
        let (mut record, g_enc, g_dec) = match outcome {
            Ok(r) => r,
            Err(Failure::Other(e)) => return Err(e),
            Err(Failure::Diverged) => {
                report.elapsed_secs = start.elapsed().as_secs_f64();
                return Err(TrainError::Diverged {
                    step,
                    report: Box::new(report),
                });
            }
        };
        window_sum += record.total;
        if step >= config.smoothing {
            window_sum -= report.records[step - config.smoothing].total;
        }
        let n = (step + 1).min(config.smoothing);
        record.smoothed_total = window_sum / n as f64;
        if step >= select_from && best.as_ref().is_none_or(|(b, _, _)| record.smoothed_total < *b) {
            best = Some((record.smoothed_total, model.encoder().clone(), model.decoder().clone()));
            report.best_step = Some(step);
        }
        let (enc, dec) = model.networks_mut();
        let stepped = opt_enc
            .step(enc.params_mut(), &g_enc)
            .and_then(|_| opt_dec.step(dec.params_mut(), &g_dec));
        if let Err(e) = stepped {
            return match e {
                NdiffError::NonFinite { .. } => {
                    report.elapsed_secs = start.elapsed().as_secs_f64();
                    Err(TrainError::Diverged {
                        step,
                        report: Box::new(report),
                    })
                }
                other => Err(other.into()),
            };
        }
        on_step(&record);
        report.records.push(record);
    }
    if let Some((_, enc, dec)) = best {
        let (e, d) = model.networks_mut();
        e.params_mut().copy_from(enc.params())?;
        d.params_mut().copy_from(dec.params())?;
    }
    if total_steps > 0 {
        model.mark_trained(model.trained_steps() + total_steps as u64);
    }
    report.rng = Some(RngState::capture(config.seed, &t.rng));
    report.elapsed_secs = start.elapsed().as_secs_f64();
    Ok((model, report))
}
