//! Feedforward stacks of causal convolutions.
//!
//! A network consumes a single-channel sequence and applies its layers in
//! "valid" mode; a window of exactly `receptive_field` samples therefore
//! produces one output vector. [`Network::run_sequence`] left-pads with zeros
//! so that every position of a full series gets an output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::conv::{conv_backward, conv_forward, ConvDims};
use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::NdiffError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Convolution over the time axis.
    CausalConv,
    /// Per-position affine map; a convolution with kernel length 1.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub fan_in: usize,
    pub fan_out: usize,
    pub kernel: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(fan_in: usize, fan_out: usize, kernel: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::CausalConv,
            fan_in,
            fan_out,
            kernel,
            activation,
        }
    }

    pub fn dense(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense,
            fan_in,
            fan_out,
            kernel: 1,
            activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Applied to every input sample before the first layer.
    pub input_transform: Activation,
    pub layers: Vec<LayerSpec>,
    /// Number of input samples (`k + 1`) one output depends on.
    pub window: usize,
    pub outputs: usize,
}

impl NetworkSpec {
    /// Per-sample embedding, one temporal convolution spanning the whole
    /// window, then `depth` dense layers.
    pub fn temporal(
        window: usize,
        embed: usize,
        hidden: usize,
        depth: usize,
        input_transform: Activation,
        output: Activation,
    ) -> Self {
        let hidden_act = Activation::leaky();
        let mut layers = Vec::with_capacity(depth + 3);
        let mut fan_in = 1;
        if embed > 0 {
            layers.push(LayerSpec::dense(1, embed, hidden_act));
            fan_in = embed;
        }
        layers.push(LayerSpec::conv(fan_in, hidden, window, hidden_act));
        for _ in 0..depth {
            layers.push(LayerSpec::dense(hidden, hidden, hidden_act));
        }
        layers.push(LayerSpec::dense(hidden, 1, output));
        Self {
            input_transform,
            layers,
            window,
            outputs: 1,
        }
    }

    pub fn receptive_field(&self) -> usize {
        1 + self.layers.iter().map(|l| l.kernel.saturating_sub(1)).sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), NdiffError> {
        let bad = |msg: String| Err(NdiffError::InvalidSpec(msg));
        if self.layers.is_empty() {
            return bad("network has no layers".into());
        }
        let mut fan_in = 1;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.kernel == 0 || layer.fan_in == 0 || layer.fan_out == 0 {
                return bad(format!("layer {i} has a zero dimension"));
            }
            if layer.kind == LayerKind::Dense && layer.kernel != 1 {
                return bad(format!("dense layer {i} must have kernel length 1"));
            }
            if layer.fan_in != fan_in {
                return bad(format!("layer {i} expects {} inputs, previous layer gives {fan_in}", layer.fan_in));
            }
            fan_in = layer.fan_out;
        }
        if fan_in != self.outputs {
            return bad(format!("last layer gives {fan_in} outputs, spec declares {}", self.outputs));
        }
        if self.receptive_field() != self.window {
            return bad(format!(
                "receptive field {} does not match window {}",
                self.receptive_field(),
                self.window
            ));
        }
        Ok(())
    }

    pub fn is_piecewise_linear(&self) -> bool {
        self.input_transform == Activation::Identity && self.layers.iter().all(|l| l.activation.is_piecewise_linear())
    }
}

/// How a network's parameters enter a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Trainable,
    /// Recorded as constants: gradients flow through to the inputs only.
    Frozen,
}

/// Output of [`Network::forward`]: the value plus the tape that produced it.
#[derive(Debug)]
pub struct Forward {
    pub output: Vec<f64>,
    pub tape: Tape,
    pub root: Var,
}

impl Forward {
    /// Gradient of `output . output_gradient` with respect to `params`.
    pub fn backward(&self, params: &ParamStore, output_gradient: &[f64]) -> Result<super::GradStore, NdiffError> {
        self.tape.backward(self.root, output_gradient)?.for_store(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork")]
pub struct Network {
    spec: NetworkSpec,
    params: ParamStore,
}

#[derive(Deserialize)]
struct RawNetwork {
    spec: NetworkSpec,
    params: ParamStore,
}

impl TryFrom<RawNetwork> for Network {
    type Error = NdiffError;

    fn try_from(raw: RawNetwork) -> Result<Self, Self::Error> {
        Network::from_parts(raw.spec, raw.params)
    }
}

impl Network {
    /// Uniform fan-in scaled initialisation, `U(-1/sqrt(fan), 1/sqrt(fan))`
    /// with `fan = kernel * fan_in`; biases start at zero.
    pub fn new(spec: NetworkSpec, rng: &mut impl Rng) -> Result<Self, NdiffError> {
        spec.validate()?;
        let mut params = ParamStore::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            let fan = (layer.kernel * layer.fan_in) as f64;
            let bound = 1.0 / fan.sqrt();
            let n = layer.kernel * layer.fan_in * layer.fan_out;
            let w = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            params.push(format!("layer{i}.weight"), vec![layer.kernel, layer.fan_in, layer.fan_out], w);
            params.push(format!("layer{i}.bias"), vec![layer.fan_out], vec![0.0; layer.fan_out]);
        }
        Ok(Self { spec, params })
    }

    /// All-zero parameters.
    pub fn zeros(spec: NetworkSpec) -> Result<Self, NdiffError> {
        spec.validate()?;
        let mut params = ParamStore::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            let n = layer.kernel * layer.fan_in * layer.fan_out;
            params.push(format!("layer{i}.weight"), vec![layer.kernel, layer.fan_in, layer.fan_out], vec![0.0; n]);
            params.push(format!("layer{i}.bias"), vec![layer.fan_out], vec![0.0; layer.fan_out]);
        }
        Ok(Self { spec, params })
    }

    /// Rebuilds a network from a spec and a store, checking the layout.
    pub fn from_parts(spec: NetworkSpec, params: ParamStore) -> Result<Self, NdiffError> {
        let reference = Self::zeros(spec)?;
        if !reference.params.same_layout(&params) {
            return Err(NdiffError::LayoutMismatch);
        }
        Ok(Self {
            spec: reference.spec,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn window(&self) -> usize {
        self.spec.window
    }

    /// Records the network on `tape` for an input `[B, L, 1]`, giving
    /// `[B, L - window + 1, outputs]`.
    pub fn apply(&self, tape: &mut Tape, input: Var, binding: Binding) -> Result<Var, NdiffError> {
        let (_, len, channels) = tape.value(input).dims3()?;
        if channels != 1 {
            return Err(NdiffError::ShapeMismatch {
                expected: vec![1],
                found: vec![channels],
            });
        }
        if len < self.spec.window {
            return Err(NdiffError::InputTooShort {
                needed: self.spec.window,
                found: len,
            });
        }
        let mut h = match self.spec.input_transform {
            Activation::Identity => input,
            act => tape.activate(input, act),
        };
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let (w, b) = self.bind(tape, 2 * i, binding);
            let z = tape.conv(h, w)?;
            let z = tape.add_bias(z, b)?;
            h = tape.activate(z, layer.activation);
        }
        Ok(h)
    }

    fn bind(&self, tape: &mut Tape, index: usize, binding: Binding) -> (Var, Var) {
        match binding {
            Binding::Trainable => (tape.param(&self.params, index), tape.param(&self.params, index + 1)),
            Binding::Frozen => {
                let entries = self.params.entries();
                let w = Tensor::new(entries[index].shape.clone(), entries[index].values.clone()).expect("weight");
                let b = Tensor::new(entries[index + 1].shape.clone(), entries[index + 1].values.clone()).expect("bias");
                (tape.constant(w), tape.constant(b))
            }
        }
    }

    /// Differentiable evaluation on one window of exactly `window` samples.
    pub fn forward(&self, window: &[f64]) -> Result<Forward, NdiffError> {
        if window.len() != self.spec.window {
            return Err(NdiffError::ShapeMismatch {
                expected: vec![self.spec.window],
                found: vec![window.len()],
            });
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, window.len(), 1], window.to_vec())?);
        let root = self.apply(&mut tape, x, Binding::Trainable)?;
        let output = tape.value(root).data().to_vec();
        Ok(Forward { output, tape, root })
    }

    /// Tape-free evaluation of `[B, L, 1] -> [B, L - window + 1, outputs]`.
    pub fn eval(&self, input: &Tensor) -> Result<Tensor, NdiffError> {
        Ok(self.eval_inner(input, false)?.0)
    }

    fn eval_inner(&self, input: &Tensor, keep: bool) -> Result<(Tensor, Vec<Cache>), NdiffError> {
        let (batch, len, channels) = input.dims3()?;
        if channels != 1 {
            return Err(NdiffError::ShapeMismatch {
                expected: vec![1],
                found: vec![channels],
            });
        }
        if len < self.spec.window {
            return Err(NdiffError::InputTooShort {
                needed: self.spec.window,
                found: len,
            });
        }
        let mut h: Vec<f64> = match self.spec.input_transform {
            Activation::Identity => input.data().to_vec(),
            act => input.data().iter().map(|v| act.apply(*v)).collect(),
        };
        let mut cur_len = len;
        let mut caches = Vec::new();
        let entries = self.params.entries();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let dims = ConvDims {
                batch,
                len: cur_len,
                c_in: layer.fan_in,
                kernel: layer.kernel,
                c_out: layer.fan_out,
            };
            let mut z = conv_forward(&h, &entries[2 * i].values, dims);
            let bias = &entries[2 * i + 1].values;
            for chunk in z.chunks_mut(layer.fan_out) {
                chunk.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
            }
            let out: Vec<f64> = z.iter().map(|v| layer.activation.apply(*v)).collect();
            if keep {
                let slopes = z
                    .iter()
                    .zip(&out)
                    .map(|(zz, yy)| layer.activation.derivative(*zz, *yy))
                    .collect();
                caches.push(Cache {
                    input: std::mem::take(&mut h),
                    dims,
                    slopes,
                });
            }
            h = out;
            cur_len = dims.out_len();
        }
        Ok((Tensor::new(vec![batch, cur_len, self.spec.outputs], h)?, caches))
    }

    /// Runs the network over a whole series, treating the `window - 1`
    /// samples before the start as zeros in the transformed input space.
    pub fn run_sequence(&self, seq: &[f64]) -> Result<Vec<f64>, NdiffError> {
        if seq.is_empty() {
            return Err(NdiffError::EmptySequence);
        }
        let pad = self.spec.window - 1;
        let pad_value = match self.spec.input_transform {
            // logit(0.5) = 0
            Activation::Logit => 0.5,
            _ => 0.0,
        };
        let mut padded = vec![pad_value; pad];
        padded.extend_from_slice(seq);
        let input = Tensor::new(vec![1, padded.len(), 1], padded)?;
        Ok(self.eval(&input)?.into_data())
    }

    /// For each row of a `[B, window, 1]` batch, the gradient of the scalar
    /// output with respect to the row, along with the activation slopes at
    /// every layer (needed by [`Network::apply_tangent`]).
    pub fn input_gradient(&self, input: &Tensor) -> Result<(Tensor, Vec<Vec<f64>>), NdiffError> {
        if !self.spec.is_piecewise_linear() {
            return Err(NdiffError::NotPiecewiseLinear);
        }
        if self.spec.outputs != 1 {
            return Err(NdiffError::InvalidSpec("input gradient needs a scalar network".into()));
        }
        let (batch, len, _) = input.dims3()?;
        if len != self.spec.window {
            return Err(NdiffError::ShapeMismatch {
                expected: vec![batch, self.spec.window, 1],
                found: input.shape().to_vec(),
            });
        }
        let (_, caches) = self.eval_inner(input, true)?;
        let entries = self.params.entries();
        let mut g = vec![1.0; batch];
        for (i, cache) in caches.iter().enumerate().rev() {
            g.iter_mut().zip(&cache.slopes).for_each(|(a, s)| *a *= s);
            let (gx, _) = conv_backward(&g, &cache.input, &entries[2 * i].values, cache.dims, true, false);
            g = gx.expect("input grad");
        }
        let slopes = caches.into_iter().map(|c| c.slopes).collect();
        Ok((Tensor::new(vec![batch, len, 1], g)?, slopes))
    }

    /// Records the directional derivative of the network along `tangent`,
    /// linearised at the point whose activation slopes are `slopes`.
    ///
    /// For piecewise-linear networks this is linear in the tangent and
    /// multilinear in the weights; differentiating it with respect to the
    /// weights gives the second-order terms of a gradient penalty.
    pub fn apply_tangent(&self, tape: &mut Tape, tangent: Var, slopes: &[Vec<f64>]) -> Result<Var, NdiffError> {
        if !self.spec.is_piecewise_linear() {
            return Err(NdiffError::NotPiecewiseLinear);
        }
        if slopes.len() != self.spec.layers.len() {
            return Err(NdiffError::LayoutMismatch);
        }
        let mut h = tangent;
        for (i, s) in slopes.iter().enumerate() {
            let w = tape.param(&self.params, 2 * i);
            let z = tape.conv(h, w)?;
            h = tape.scale_by(z, s.clone())?;
        }
        Ok(h)
    }
}

struct Cache {
    input: Vec<f64>,
    dims: ConvDims,
    slopes: Vec<f64>,
}
