//! The finite-window causal innovations autoencoder.
//!
//! Naming follows the usual convention: `G` is the encoder mapping the
//! series to innovations, `H` the decoder mapping innovations back.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ndiff::{Activation, NdiffError, Network, NetworkSpec, Tensor};
use crate::series::{InnovationsKind, InnovationsSequence, OutOfRange, TimeSeries};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Ndiff(#[from] NdiffError),
    #[error(transparent)]
    OutOfRange(#[from] OutOfRange),
    #[error("input sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("normalization range is degenerate: min {min}, max {max}")]
    DegenerateNormalization { min: f64, max: f64 },
    #[error("encoder window {encoder} differs from decoder window {decoder}")]
    WindowMismatch { encoder: usize, decoder: usize },
    #[error("encoder must end in a sigmoid so that innovations lie in [0, 1]")]
    EncoderRange,
    #[error("networks must have a single input and a single output channel")]
    Channels,
    #[error("checkpoint format {0} is not supported")]
    Format(u32),
    #[error("invalid RNG state: {0}")]
    RngState(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Reconstruction must match the input sample by sample.
    Sir,
    /// Reconstruction must match the input in distribution.
    Wir,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sir" => Ok(Mode::Sir),
            "wir" => Ok(Mode::Wir),
            other => Err(format!("unknown mode `{other}`, expected sir or wir")),
        }
    }
}

/// Affine map of `[min, max]` onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn new(min: f64, max: f64) -> Result<Self, ModelError> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(ModelError::DegenerateNormalization { min, max });
        }
        Ok(Self { min, max })
    }

    /// The map that leaves values unchanged.
    pub fn identity() -> Self {
        Self { min: -1.0, max: 1.0 }
    }

    pub fn fit(values: &[f64]) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { index });
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(min, max)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        2.0 * (x - self.min) / (self.max - self.min) - 1.0
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        (z + 1.0) * (self.max - self.min) / 2.0 + self.min
    }

    /// Factor converting a normalized-scale distance to data scale.
    pub fn scale(&self) -> f64 {
        (self.max - self.min) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of past lags each network reads.
    pub k: usize,
    /// Width of the per-sample embedding; 0 disables it.
    pub embed: usize,
    pub hidden: usize,
    /// Dense hidden layers after the temporal convolution.
    pub depth: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k: 16,
            embed: 8,
            hidden: 32,
            depth: 1,
        }
    }
}

impl ModelConfig {
    pub fn encoder_spec(&self) -> NetworkSpec {
        NetworkSpec::temporal(
            self.k + 1,
            self.embed,
            self.hidden,
            self.depth,
            Activation::Identity,
            Activation::Sigmoid,
        )
    }

    /// Innovations enter through a logit so the decoder sees unbounded inputs.
    pub fn decoder_spec(&self) -> NetworkSpec {
        NetworkSpec::temporal(
            self.k + 1,
            self.embed,
            self.hidden,
            self.depth,
            Activation::Logit,
            Activation::Identity,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct WiaeModel {
    mode: Mode,
    k: usize,
    normalization: Normalization,
    encoder: Network,
    decoder: Network,
    trained_steps: u64,
}

#[derive(Deserialize)]
struct RawModel {
    mode: Mode,
    k: usize,
    normalization: Normalization,
    encoder: Network,
    decoder: Network,
    trained_steps: u64,
}

impl TryFrom<RawModel> for WiaeModel {
    type Error = ModelError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        let normalization = Normalization::new(raw.normalization.min, raw.normalization.max)?;
        let mut model = WiaeModel::from_networks(raw.mode, normalization, raw.encoder, raw.decoder)?;
        if model.k != raw.k {
            return Err(ModelError::WindowMismatch {
                encoder: model.k + 1,
                decoder: raw.k + 1,
            });
        }
        model.trained_steps = raw.trained_steps;
        Ok(model)
    }
}

impl WiaeModel {
    /// Freshly initialised networks drawn from `seed`.
    pub fn new(config: ModelConfig, mode: Mode, normalization: Normalization, seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Network::new(config.encoder_spec(), &mut rng)?;
        let decoder = Network::new(config.decoder_spec(), &mut rng)?;
        Self::from_networks(mode, normalization, encoder, decoder)
    }

    /// Assembles a model from existing networks, e.g. hand-configured ones.
    pub fn from_networks(
        mode: Mode,
        normalization: Normalization,
        encoder: Network,
        decoder: Network,
    ) -> Result<Self, ModelError> {
        if encoder.window() != decoder.window() {
            return Err(ModelError::WindowMismatch {
                encoder: encoder.window(),
                decoder: decoder.window(),
            });
        }
        if encoder.spec().outputs != 1 || decoder.spec().outputs != 1 {
            return Err(ModelError::Channels);
        }
        let last = encoder.spec().layers.last().map(|l| l.activation);
        if last != Some(Activation::Sigmoid) {
            return Err(ModelError::EncoderRange);
        }
        Ok(Self {
            mode,
            k: encoder.window() - 1,
            normalization,
            encoder,
            decoder,
            trained_steps: 0,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn window(&self) -> usize {
        self.k + 1
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub(crate) fn networks_mut(&mut self) -> (&mut Network, &mut Network) {
        (&mut self.encoder, &mut self.decoder)
    }

    /// Generator steps this model has been trained for.
    pub fn trained_steps(&self) -> u64 {
        self.trained_steps
    }

    pub fn mark_trained(&mut self, steps: u64) {
        self.trained_steps = steps;
    }

    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { index });
        }
        Ok(x.iter().map(|v| self.normalization.normalize(*v)).collect())
    }

    /// `v_t = G(x_t, ..., x_{t-k})`, with zeros before the first sample.
    pub fn encode_sequence(&self, x: &TimeSeries) -> Result<InnovationsSequence, ModelError> {
        if x.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let z = self.normalize(x.values())?;
        let v = self.encoder.run_sequence(&z)?;
        Ok(InnovationsSequence::new(v, InnovationsKind::Encoded)?)
    }

    /// `x_t = H(v_t, ..., v_{t-k})`, de-normalized to data scale.
    pub fn decode_sequence(&self, v: &InnovationsSequence) -> Result<TimeSeries, ModelError> {
        self.decode_values(v.values())
    }

    pub fn decode_values(&self, v: &[f64]) -> Result<TimeSeries, ModelError> {
        if v.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
            return Err(OutOfRange { index, value }.into());
        }
        let z = self.decoder.run_sequence(v)?;
        Ok(TimeSeries::new(z.into_iter().map(|z| self.normalization.denormalize(z)).collect()))
    }

    pub fn reconstruct(&self, x: &TimeSeries) -> Result<TimeSeries, ModelError> {
        self.decode_sequence(&self.encode_sequence(x)?)
    }

    /// Decodes a batch of innovation windows `[B, k + 1]`, returning one
    /// data-scale value per window.
    pub fn decode_windows(&self, windows: Vec<f64>, batch: usize) -> Result<Vec<f64>, ModelError> {
        let input = Tensor::new(vec![batch, self.window(), 1], windows)?;
        let out = self.decoder.eval(&input)?;
        Ok(out.into_data().into_iter().map(|z| self.normalization.denormalize(z)).collect())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Position of a ChaCha stream, enough to resume it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// Decimal `u128` word position.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        Self {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, ModelError> {
        let pos: u128 = self.word_pos.parse().map_err(|_| ModelError::RngState(self.word_pos.clone()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Versioned on-disk container for a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub model: WiaeModel,
    pub rng: Option<RngState>,
}

impl Checkpoint {
    pub fn new(model: WiaeModel, rng: Option<RngState>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            model,
            rng,
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Header {
            format: u32,
        }
        let header: Header = serde_json::from_str(s)?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Format(header.format));
        }
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
