use serde::{Deserialize, Serialize};

use super::conv::Conv2d;
use super::dense::Dense;
use super::gru::BiGru;
use super::loss::softmax;
use super::ops::{Relu, TimeMean, ToSequence};
use super::pool::MaxPool2d;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    },
    /// Kernel equals stride.
    MaxPool2d { stride: (usize, usize) },
    Relu,
    /// `[B, H, W, C] -> [B, W, H*C]`
    ToSequence,
    BiGru { units: usize },
    TimeMean,
    Dense { units: usize },
    /// Only valid as the last layer; the network returns logits and the
    /// softmax is applied by [`Network::predict`] or the loss.
    Softmax,
}

#[derive(Debug, Clone)]
pub enum Layer<F> {
    Conv2d(Conv2d<F>),
    MaxPool2d(MaxPool2d),
    Relu(Relu),
    ToSequence(ToSequence),
    BiGru(BiGru<F>),
    TimeMean(TimeMean),
    Dense(Dense<F>),
    Softmax,
}

impl<F: Real> Layer<F> {
    fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::MaxPool2d(l) => l.forward(x),
            Layer::Relu(l) => l.forward(x),
            Layer::ToSequence(l) => l.forward(x),
            Layer::BiGru(l) => l.forward(x),
            Layer::TimeMean(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Softmax => Ok(x.clone()),
        }
    }

    fn backward(&mut self, g: &Tensor<F>) -> Result<Tensor<F>> {
        match self {
            Layer::Conv2d(l) => l.backward(g),
            Layer::MaxPool2d(l) => l.backward(g),
            Layer::Relu(l) => l.backward(g),
            Layer::ToSequence(l) => l.backward(g),
            Layer::BiGru(l) => l.backward(g),
            Layer::TimeMean(l) => l.backward(g),
            Layer::Dense(l) => l.backward(g),
            Layer::Softmax => Ok(g.clone()),
        }
    }

    /// `(suffix, tensor)` pairs in a fixed order.
    fn params(&self) -> Vec<(&'static str, &Tensor<F>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight", l.params()[0]), ("bias", l.params()[1])],
            Layer::Dense(l) => vec![("weight", l.params()[0]), ("bias", l.params()[1])],
            Layer::BiGru(l) => {
                let p = l.params();
                vec![
                    ("fwd.w", p[0]),
                    ("fwd.u", p[1]),
                    ("fwd.b", p[2]),
                    ("bwd.w", p[3]),
                    ("bwd.u", p[4]),
                    ("bwd.b", p[5]),
                ]
            }
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            Layer::Conv2d(l) => l.params_mut().into_iter().collect(),
            Layer::Dense(l) => l.params_mut().into_iter().collect(),
            Layer::BiGru(l) => l.params_mut().into_iter().collect(),
            _ => Vec::new(),
        }
    }
}

/// A feed-forward stack of named layers on NHWC input.
#[derive(Debug, Clone)]
pub struct Network<F> {
    specs: Vec<(String, LayerSpec)>,
    layers: Vec<Layer<F>>,
    input_shape: [usize; 3],
    trace: Vec<(String, Vec<usize>)>,
    pending_backward: bool,
}

/// Per-sample output shape after a layer, or an error if the layer cannot
/// follow its predecessor.
fn infer(spec: &LayerSpec, shape: &[usize]) -> Result<Vec<usize>> {
    let bad = |what: &str| Err(Error::Shape(format!("{what} cannot follow a layer with output {shape:?}")));
    match *spec {
        LayerSpec::Conv2d { filters, kernel, stride } => {
            if shape.len() != 3 {
                return bad("conv2d");
            }
            if filters == 0 || kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
                return Err(Error::Shape(format!("invalid conv2d {spec:?}")));
            }
            Ok(vec![shape[0].div_ceil(stride.0), shape[1].div_ceil(stride.1), filters])
        }
        LayerSpec::MaxPool2d { stride } => {
            if shape.len() != 3 {
                return bad("maxpool2d");
            }
            if stride.0 == 0 || stride.1 == 0 || stride.0 > shape[0] || stride.1 > shape[1] {
                return Err(Error::Shape(format!("pool stride {stride:?} for input {shape:?}")));
            }
            Ok(vec![shape[0].div_ceil(stride.0), shape[1].div_ceil(stride.1), shape[2]])
        }
        LayerSpec::Relu | LayerSpec::Softmax => Ok(shape.to_vec()),
        LayerSpec::ToSequence => match shape {
            [h, w, c] => Ok(vec![*w, h * c]),
            _ => bad("to_sequence"),
        },
        LayerSpec::BiGru { units } => match shape {
            [t, _] if units > 0 => Ok(vec![*t, 2 * units]),
            _ => bad("bigru"),
        },
        LayerSpec::TimeMean => match shape {
            [_, f] => Ok(vec![*f]),
            _ => bad("time_mean"),
        },
        LayerSpec::Dense { units } => match shape {
            [_] if units > 0 => Ok(vec![units]),
            _ => bad("dense"),
        },
    }
}

impl<F: Real> Network<F> {
    /// Builds and initializes the stack for per-sample input `[H, W, C]`.
    /// Layers are initialized in order from `rng`.
    pub fn new(specs: &[(String, LayerSpec)], input_shape: [usize; 3], rng: &mut Rng) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Shape("empty layer stack".into()));
        }
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, (name, spec)) in specs.iter().enumerate() {
            if matches!(spec, LayerSpec::Softmax) && i + 1 != specs.len() {
                return Err(Error::Shape(format!("softmax layer {name} must be last")));
            }
            if specs[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Shape(format!("duplicate layer name {name}")));
            }
            let next = infer(spec, &shape)?;
            let layer = match *spec {
                LayerSpec::Conv2d { filters, kernel, stride } => {
                    Layer::Conv2d(Conv2d::new(kernel, shape[2], filters, stride, rng)?)
                }
                LayerSpec::MaxPool2d { stride } => Layer::MaxPool2d(MaxPool2d::new(stride)?),
                LayerSpec::Relu => Layer::Relu(Relu::default()),
                LayerSpec::ToSequence => Layer::ToSequence(ToSequence::default()),
                LayerSpec::BiGru { units } => {
                    let f = *shape.last().unwrap();
                    Layer::BiGru(BiGru::new(f, units, rng)?)
                }
                LayerSpec::TimeMean => Layer::TimeMean(TimeMean::default()),
                LayerSpec::Dense { units } => Layer::Dense(Dense::new(shape[0], units, rng)?),
                LayerSpec::Softmax => Layer::Softmax,
            };
            shape = next;
            layers.push(layer);
        }
        Ok(Self {
            specs: specs.to_vec(),
            layers,
            input_shape,
            trace: Vec::new(),
            pending_backward: false,
        })
    }

    pub fn specs(&self) -> &[(String, LayerSpec)] {
        &self.specs
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn n_outputs(&self) -> Result<usize> {
        let mut shape = self.input_shape.to_vec();
        for (_, s) in &self.specs {
            shape = infer(s, &shape)?;
        }
        Ok(shape.iter().product())
    }

    /// Per-sample output shape of every layer, from the most recent forward.
    pub fn trace(&self) -> &[(String, Vec<usize>)] {
        &self.trace
    }

    /// Logits `[B, n_outputs]` for a `[B, H, W, C]` batch.
    pub fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let s = x.shape();
        if s.len() != 4 || s[1..] != self.input_shape {
            return Err(Error::Shape(format!(
                "network expects [B, {}, {}, {}], got {:?}",
                self.input_shape[0], self.input_shape[1], self.input_shape[2], s
            )));
        }
        self.trace.clear();
        let mut h = self.layers[0].forward(x)?;
        self.trace.push((self.specs[0].0.clone(), h.shape()[1..].to_vec()));
        for (layer, (name, _)) in self.layers.iter_mut().zip(&self.specs).skip(1) {
            h = layer.forward(&h)?;
            self.trace.push((name.clone(), h.shape()[1..].to_vec()));
        }
        self.pending_backward = true;
        Ok(h)
    }

    /// Class probabilities for a batch.
    pub fn predict(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let logits = self.forward(x)?;
        self.pending_backward = false;
        softmax(&logits)
    }

    /// Accumulates parameter gradients from the gradient wrt the logits and
    /// returns the gradient wrt the input.
    pub fn backward(&mut self, grad_logits: &Tensor<F>) -> Result<Tensor<F>> {
        if !self.pending_backward {
            return Err(Error::State("backward called without a preceding forward".into()));
        }
        self.pending_backward = false;
        let mut g = grad_logits.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Named parameters in layer order, e.g. `conv1.weight`, `gru1.fwd.u`.
    pub fn params(&self) -> Vec<(String, &Tensor<F>)> {
        self.layers
            .iter()
            .zip(&self.specs)
            .flat_map(|(l, (name, _))| l.params().into_iter().map(move |(s, t)| (format!("{name}.{s}"), t)))
            .collect()
    }

    /// Mutable parameters, in the same order as [`Network::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Replaces every parameter by name; names and shapes must match exactly.
    pub fn load_params(&mut self, named: &[(String, Tensor<F>)]) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> =
            self.params().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        if names.len() != named.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, network has {}",
                named.len(),
                names.len()
            )));
        }
        for ((n, s), (cn, ct)) in names.iter().zip(named) {
            if n != cn || s.as_slice() != ct.shape() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint tensor {cn} {:?} does not match network tensor {n} {s:?}",
                    ct.shape()
                )));
            }
        }
        for (p, (_, t)) in self.params_mut().into_iter().zip(named) {
            p.data.clone_from(&t.data);
            p.grad = None;
        }
        Ok(())
    }

    /// Same architecture and parameters at another precision.
    pub fn cast<G: Real>(&self) -> Result<Network<G>> {
        let mut out = Network::<G>::new(&self.specs, self.input_shape, &mut <Rng as rand::SeedableRng>::seed_from_u64(0))?;
        let named: Vec<(String, Tensor<G>)> = self.params().into_iter().map(|(n, t)| (n, t.cast())).collect();
        out.load_params(&named)?;
        Ok(out)
    }
}
