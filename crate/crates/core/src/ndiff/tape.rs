//! Wengert tape over batched tensors.
//!
//! Every primitive records its output value and the handles of its inputs.
//! [`Tape::backward`] walks the records in reverse, accumulating adjoints.
//! Parameters enter the tape through [`Tape::param`], which remembers the
//! owning store's identity and version so that [`Gradients::for_store`] can
//! reject gradients computed from stale parameter values.

use super::activation::Activation;
use super::conv::{conv_backward, conv_forward, ConvDims};
use super::params::{GradStore, ParamStore};
use super::tensor::Tensor;
use super::NdiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { tracked: bool },
    Param { store: u64, version: u64, index: usize },
    Conv { x: Var, w: Var, dims: ConvDims },
    AddBias { x: Var, b: Var },
    Activate { z: Var, act: Activation },
    ScaleBy { x: Var, factors: Vec<f64> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, f64),
    AddScalar(Var),
    Square(Var),
    Mean(Var),
    Sum(Var),
    SliceLen { x: Var, start: usize },
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Constant input. Convolutions skip the input-gradient computation for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { tracked: false })
    }

    /// Leaf whose adjoint is wanted after [`Tape::backward`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { tracked: true })
    }

    fn wants_grad(&self, v: Var) -> bool {
        !matches!(self.nodes[v.0].op, Op::Leaf { tracked: false })
    }

    /// Binds parameter `index` of `store` as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, index: usize) -> Var {
        let entry = &store.entries()[index];
        let value = Tensor::new(entry.shape.clone(), entry.values.clone()).expect("param shape");
        self.push(
            value,
            Op::Param {
                store: store.id(),
                version: store.version(),
                index,
            },
        )
    }

    /// Valid causal convolution `[B, L, Cin] x [K, Cin, Cout] -> [B, L-K+1, Cout]`.
    pub fn conv(&mut self, x: Var, w: Var) -> Result<Var, NdiffError> {
        let (batch, len, c_in) = self.value(x).dims3()?;
        let (kernel, wc_in, c_out) = self.value(w).dims3()?;
        if wc_in != c_in {
            return Err(NdiffError::ShapeMismatch {
                expected: vec![kernel, c_in, c_out],
                found: self.shape(w).to_vec(),
            });
        }
        if len < kernel {
            return Err(NdiffError::InputTooShort { needed: kernel, found: len });
        }
        let dims = ConvDims { batch, len, c_in, kernel, c_out };
        let y = conv_forward(self.data(x), self.data(w), dims);
        let value = Tensor::new(vec![batch, dims.out_len(), c_out], y)?;
        Ok(self.push(value, Op::Conv { x, w, dims }))
    }

    /// Adds `b` (shape `[C]`) along the last axis.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, NdiffError> {
        let c = *self.shape(x).last().unwrap_or(&0);
        if self.shape(b) != [c] {
            return Err(NdiffError::ShapeMismatch {
                expected: vec![c],
                found: self.shape(b).to_vec(),
            });
        }
        let bias = self.data(b).to_vec();
        let mut value = self.value(x).clone();
        for chunk in value.data_mut().chunks_mut(c) {
            for (v, bb) in chunk.iter_mut().zip(&bias) {
                *v += bb;
            }
        }
        Ok(self.push(value, Op::AddBias { x, b }))
    }

    pub fn activate(&mut self, z: Var, act: Activation) -> Var {
        let mut value = self.value(z).clone();
        if act != Activation::Identity {
            value.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        }
        self.push(value, Op::Activate { z, act })
    }

    /// Elementwise product with a constant array of the same length.
    pub fn scale_by(&mut self, x: Var, factors: Vec<f64>) -> Result<Var, NdiffError> {
        if factors.len() != self.value(x).len() {
            return Err(NdiffError::ShapeMismatch {
                expected: self.shape(x).to_vec(),
                found: vec![factors.len()],
            });
        }
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().zip(&factors).for_each(|(v, f)| *v *= f);
        Ok(self.push(value, Op::ScaleBy { x, factors }))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<(), NdiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(NdiffError::ShapeMismatch {
                expected: self.shape(a).to_vec(),
                found: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, NdiffError> {
        self.same_shape(a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().for_each(|v| *v *= c);
        self.push(value, Op::MulScalar(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().for_each(|v| *v += c);
        self.push(value, Op::AddScalar(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().for_each(|v| *v *= *v);
        self.push(value, Op::Square(x))
    }

    /// Mean over all elements, producing a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let d = self.data(x);
        let m = d.iter().sum::<f64>() / d.len().max(1) as f64;
        self.push(Tensor::scalar(m), Op::Mean(x))
    }

    /// Sum over all elements, producing a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Positions `start..start + len` along axis 1 of a rank-3 tensor.
    pub fn slice_len(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NdiffError> {
        let (b, l, c) = self.value(x).dims3()?;
        if start + len > l {
            return Err(NdiffError::InputTooShort { needed: start + len, found: l });
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(b * len * c);
        for bi in 0..b {
            data.extend_from_slice(&src[(bi * l + start) * c..(bi * l + start + len) * c]);
        }
        let value = Tensor::new(vec![b, len, c], data)?;
        Ok(self.push(value, Op::SliceLen { x, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NdiffError> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Reverse sweep seeded with `seed` at `root`.
    pub fn backward(&self, root: Var, seed: &[f64]) -> Result<Gradients, NdiffError> {
        if root.0 >= self.nodes.len() {
            return Err(NdiffError::ForeignVar);
        }
        if seed.len() != self.value(root).len() {
            return Err(NdiffError::ShapeMismatch {
                expected: self.shape(root).to_vec(),
                found: vec![seed.len()],
            });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(seed.to_vec());

        fn acc(adj: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
            match &mut adj[v.0] {
                Some(a) => a.iter_mut().zip(&g).for_each(|(x, y)| *x += y),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf { .. } | Op::Param { .. } => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::Conv { x, w, dims } => {
                    let (gx, gw) = conv_backward(
                        &g,
                        self.data(*x),
                        self.data(*w),
                        *dims,
                        self.wants_grad(*x),
                        self.wants_grad(*w),
                    );
                    if let Some(gx) = gx {
                        acc(&mut adj, *x, gx);
                    }
                    if let Some(gw) = gw {
                        acc(&mut adj, *w, gw);
                    }
                }
                Op::AddBias { x, b } => {
                    let c = self.value(*b).len();
                    let mut gb = vec![0.0; c];
                    for chunk in g.chunks(c) {
                        gb.iter_mut().zip(chunk).for_each(|(a, y)| *a += y);
                    }
                    acc(&mut adj, *b, gb);
                    acc(&mut adj, *x, g);
                }
                Op::Activate { z, act } => {
                    let zs = self.data(*z);
                    let ys = node.value.data();
                    let gz = g
                        .iter()
                        .zip(zs.iter().zip(ys))
                        .map(|(gy, (zz, yy))| gy * act.derivative(*zz, *yy))
                        .collect();
                    acc(&mut adj, *z, gz);
                }
                Op::ScaleBy { x, factors } => {
                    let gx = g.iter().zip(factors).map(|(a, f)| a * f).collect();
                    acc(&mut adj, *x, gx);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.clone());
                    acc(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, g.iter().map(|v| -v).collect());
                    acc(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.iter().zip(self.data(*b)).map(|(x, y)| x * y).collect();
                    let gb = g.iter().zip(self.data(*a)).map(|(x, y)| x * y).collect();
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::MulScalar(x, c) => acc(&mut adj, *x, g.iter().map(|v| v * c).collect()),
                Op::AddScalar(x) | Op::Reshape(x) => acc(&mut adj, *x, g),
                Op::Square(x) => {
                    let gx = g.iter().zip(self.data(*x)).map(|(a, v)| 2.0 * a * v).collect();
                    acc(&mut adj, *x, gx);
                }
                Op::Mean(x) => {
                    let n = self.value(*x).len();
                    acc(&mut adj, *x, vec![g[0] / n.max(1) as f64; n]);
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    acc(&mut adj, *x, vec![g[0]; n]);
                }
                Op::SliceLen { x, start } => {
                    let (b, l, c) = self.value(*x).dims3()?;
                    let len = node.value.shape()[1];
                    let mut gx = vec![0.0; b * l * c];
                    for bi in 0..b {
                        gx[(bi * l + start) * c..(bi * l + start + len) * c]
                            .copy_from_slice(&g[bi * len * c..(bi + 1) * len * c]);
                    }
                    acc(&mut adj, *x, gx);
                }
            }
        }

        let params: Vec<(u64, u64, usize, Var)> = self.nodes[..=root.0]
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param { store, version, index } => Some((store, version, index, Var(i))),
                _ => None,
            })
            .collect();
        Ok(Gradients { adj, params })
    }
}

/// Adjoints produced by one reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    adj: Vec<Option<Vec<f64>>>,
    params: Vec<(u64, u64, usize, Var)>,
}

impl Gradients {
    /// Adjoint of a leaf (input, constant or parameter binding); `None` if the
    /// leaf did not influence the root.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.adj.get(v.0).and_then(|a| a.as_deref())
    }

    /// Sums the adjoints of every binding of `store`'s parameters.
    ///
    /// Fails if the tape recorded the store at a different version, or never
    /// touched it at all.
    pub fn for_store(&self, store: &ParamStore) -> Result<GradStore, NdiffError> {
        let mut out = GradStore::zeros_like(store);
        let mut touched = false;
        for &(id, version, index, var) in &self.params {
            if id != store.id() {
                continue;
            }
            if version != store.version() {
                return Err(NdiffError::StaleTape {
                    recorded: version,
                    current: store.version(),
                });
            }
            touched = true;
            if let Some(g) = self.wrt(var) {
                out.grads_mut()[index].iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        if !touched && !store.is_empty() {
            return Err(NdiffError::StoreNotOnTape);
        }
        Ok(out)
    }
}
