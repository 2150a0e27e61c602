use std::fmt;
use std::str::FromStr;

use crate::grid::{GRID_COLS, GRID_ROWS};

use super::adam::AdamState;
use super::layers::{Cache, Layer, LayerType, Mode};
use super::{NetError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetworkKind {
    /// Pose windows to a coarse pressure map.
    Tpn,
    /// Deformation windows to a pressure map.
    Tdn,
    /// Fusion of the two upstream maps.
    Psn,
    /// Pose-only comparison model.
    Baseline,
}

impl NetworkKind {
    pub const ALL: [NetworkKind; 4] = [
        NetworkKind::Tpn,
        NetworkKind::Tdn,
        NetworkKind::Psn,
        NetworkKind::Baseline,
    ];

    pub fn code(self) -> u8 {
        match self {
            NetworkKind::Tpn => 0,
            NetworkKind::Tdn => 1,
            NetworkKind::Psn => 2,
            NetworkKind::Baseline => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        NetworkKind::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkKind::Tpn => "tpn",
            NetworkKind::Tdn => "tdn",
            NetworkKind::Psn => "psn",
            NetworkKind::Baseline => "baseline",
        })
    }
}

impl FromStr for NetworkKind {
    type Err = NetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NetworkKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| NetError::UnknownKind(s.to_string()))
    }
}

/// Optimizer and schedule state carried with a network so that training can
/// resume from a checkpoint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainState<T> {
    pub adam: Option<AdamState<T>>,
    pub epochs_done: u64,
    /// Forward passes run in training mode; seeds the dropout masks.
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    pub(crate) kind: NetworkKind,
    pub(crate) layers: Vec<Layer<T>>,
    /// Per-sample shape of each input.
    pub(crate) input_shapes: Vec<Vec<usize>>,
    pub(crate) seed: u64,
    pub(crate) state: TrainState<T>,
}

pub(crate) struct Tape<T> {
    caches: Vec<Cache<T>>,
    /// Shape of the last layer's output.
    out_shape: Vec<usize>,
    /// Channel count of each input after lifting to 5-D, when concatenated.
    input_shapes: Vec<Vec<usize>>,
}

impl<T> Tape<T> {
    /// ReLU activation patterns, for kink detection in finite differences.
    pub(crate) fn relu_masks(&self) -> impl Iterator<Item = &[bool]> {
        self.caches.iter().filter_map(|c| match c {
            Cache::Mask(m) => Some(m.as_slice()),
            _ => None,
        })
    }
}

impl<T: Real> Tape<T> {
    /// Lets the gradient through a final ReLU wherever the target is
    /// positive. Without this, an output layer pushed entirely below zero
    /// early in training receives no gradient again and stays at zero.
    pub(crate) fn open_output_relu(&mut self, target: &Tensor<T>) {
        if let Some(Cache::Mask(mask)) = self.caches.last_mut() {
            for (m, t) in mask.iter_mut().zip(target.data()) {
                *m |= *t > T::zero();
            }
        }
    }
}

/// Lifts `[N, ...]` to `[N, 1, D, H, W]` by inserting a unit channel axis and
/// unit leading spatial axes.
fn lift(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![shape[0], 1];
    out.resize(2 + 3 - (shape.len() - 1).min(3), 1);
    out.extend_from_slice(&shape[1..]);
    out
}

impl<T: Real> Network<T> {
    pub(crate) fn from_parts(
        kind: NetworkKind,
        layers: Vec<Layer<T>>,
        input_shapes: Vec<Vec<usize>>,
        seed: u64,
    ) -> Self {
        Self {
            kind,
            layers,
            input_shapes,
            seed,
            state: TrainState::default(),
        }
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_shapes(&self) -> &[Vec<usize>] {
        &self.input_shapes
    }

    pub fn train_state(&self) -> &TrainState<T> {
        &self.state
    }

    pub fn epochs_done(&self) -> u64 {
        self.state.epochs_done
    }

    /// Total parameters, including batch-norm running statistics.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| {
                let n = l.trainable_count();
                l.params().into_iter().take(n)
            })
            .map(|(_, t)| t.len())
            .sum()
    }

    /// `(qualified name, tensor)` for every parameter, in a fixed order.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let ty = l.layer_type().name();
                l.params()
                    .into_iter()
                    .map(move |(n, t)| (format!("{i:02}.{ty}.{n}"), t))
            })
            .collect()
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                let ty = l.layer_type().name();
                l.params_mut()
                    .into_iter()
                    .map(move |(n, t)| (format!("{i:02}.{ty}.{n}"), t))
            })
            .collect()
    }

    /// Trainable tensors in gradient order.
    pub(crate) fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let n = l.trainable_count();
                l.params_mut().into_iter().take(n).map(|(_, t)| t)
            })
            .collect()
    }

    pub(crate) fn trainable(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| {
                let n = l.trainable_count();
                l.params().into_iter().take(n).map(|(_, t)| t)
            })
            .collect()
    }

    /// Layer index and type of each trainable tensor, in gradient order.
    pub(crate) fn trainable_owners(&self) -> Vec<(usize, LayerType)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| std::iter::repeat_n((i, l.layer_type()), l.trainable_count()))
            .collect()
    }

    pub(crate) fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.trainable()
            .into_iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect()
    }

    fn check_inputs(&self, inputs: &[&Tensor<T>]) -> Result<usize, NetError> {
        if inputs.len() != self.input_shapes.len() {
            return Err(NetError::InputCount {
                expected: self.input_shapes.len(),
                got: inputs.len(),
            });
        }
        let n = inputs[0].batch();
        for (t, shape) in inputs.iter().zip(&self.input_shapes) {
            let mut expected = vec![n];
            expected.extend_from_slice(shape);
            if t.shape() != expected.as_slice() {
                return Err(NetError::ShapeMismatch {
                    expected,
                    got: t.shape().to_vec(),
                });
            }
        }
        Ok(n)
    }

    fn prepare(&self, inputs: &[&Tensor<T>]) -> Result<(Tensor<T>, Vec<Vec<usize>>), NetError> {
        let n = self.check_inputs(inputs)?;
        let lifted: Vec<Vec<usize>> = inputs.iter().map(|t| lift(t.shape())).collect();
        if inputs.len() == 1 {
            let x = inputs[0].clone().reshape(&lifted[0])?;
            return Ok((x, lifted));
        }
        // channel-wise concatenation; lifted inputs share D, H, W
        let mut shape = lifted[0].clone();
        shape[1] = lifted.iter().map(|s| s[1]).sum();
        let mut data = Vec::with_capacity(shape.iter().product());
        for i in 0..n {
            for t in inputs {
                data.extend_from_slice(t.sample(i));
            }
        }
        Ok((Tensor::new(shape, data)?, lifted))
    }

    fn finish(y: Tensor<T>) -> Result<Tensor<T>, NetError> {
        let n = y.batch();
        y.reshape(&[n, GRID_ROWS, GRID_COLS])
    }

    /// Output `[N, 80, 28]` for the given mode; parameters are not modified.
    pub fn forward(&self, inputs: &[&Tensor<T>], mode: Mode) -> Result<Tensor<T>, NetError> {
        let (mut x, _) = self.prepare(inputs)?;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(x, mode, i)?.0;
        }
        debug_assert!(x.all_finite(), "non-finite network output");
        Self::finish(x)
    }

    /// Inference-mode forward pass.
    pub fn predict(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>, NetError> {
        self.forward(inputs, Mode::INFERENCE)
    }

    pub(crate) fn forward_tape(
        &self,
        inputs: &[&Tensor<T>],
        mode: Mode,
    ) -> Result<(Tensor<T>, Tape<T>), NetError> {
        let (mut x, input_shapes) = self.prepare(inputs)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(x, mode, i)?;
            caches.push(cache);
            x = y;
        }
        let out_shape = x.shape().to_vec();
        Ok((
            Self::finish(x)?,
            Tape {
                caches,
                out_shape,
                input_shapes,
            },
        ))
    }

    /// Parameter gradients (gradient order) and, when requested, gradients
    /// with respect to each input in its original shape.
    pub(crate) fn backward(
        &self,
        tape: &Tape<T>,
        dy: Tensor<T>,
        need_input: bool,
    ) -> (Vec<Tensor<T>>, Option<Vec<Tensor<T>>>) {
        let mut grads = self.zero_grads();
        let owners = self.trainable_owners();
        let mut g = dy.reshape(&tape.out_shape).expect("output shape");
        let mut dx = None;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let start = owners.iter().position(|&(l, _)| l == i).unwrap_or(0);
            let count = layer.trainable_count();
            let need = need_input || self.layers[..i].iter().any(|l| l.trainable_count() > 0);
            match layer.backward(&tape.caches[i], g, &mut grads[start..start + count], need) {
                Some(next) if i > 0 => g = next,
                Some(next) => {
                    dx = need_input.then_some(next);
                    break;
                }
                None => break,
            }
        }
        let inputs = dx.map(|d| self.split_input_grad(d, &tape.input_shapes));
        (grads, inputs)
    }

    fn split_input_grad(&self, d: Tensor<T>, lifted: &[Vec<usize>]) -> Vec<Tensor<T>> {
        let n = d.batch();
        let mut out: Vec<Vec<T>> = lifted.iter().map(|_| Vec::new()).collect();
        let sizes: Vec<usize> = self
            .input_shapes
            .iter()
            .map(|s| s.iter().product())
            .collect();
        for i in 0..n {
            let mut offset = 0;
            let sample = d.sample(i);
            for (k, &s) in sizes.iter().enumerate() {
                out[k].extend_from_slice(&sample[offset..offset + s]);
                offset += s;
            }
        }
        out.into_iter()
            .zip(&self.input_shapes)
            .map(|(data, shape)| {
                let mut full = vec![n];
                full.extend_from_slice(shape);
                Tensor::new(full, data).expect("input gradient shape")
            })
            .collect()
    }

    pub(crate) fn update_running(&mut self, tape: &Tape<T>) {
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches) {
            layer.update_running(cache);
        }
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Layer::Conv(super::layers::Conv {
                    temporal: c.temporal,
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    kernel: c.kernel,
                    pad: c.pad,
                    weight: c.weight.cast(),
                    bias: c.bias.cast(),
                }),
                Layer::BatchNorm(b) => Layer::BatchNorm(super::layers::BatchNorm {
                    channels: b.channels,
                    gamma: b.gamma.cast(),
                    beta: b.beta.cast(),
                    running_mean: b.running_mean.cast(),
                    running_var: b.running_var.cast(),
                    eps: b.eps,
                    momentum: b.momentum,
                }),
                Layer::Dense(d) => Layer::Dense(super::layers::Dense {
                    in_features: d.in_features,
                    out_features: d.out_features,
                    weight: d.weight.cast(),
                    bias: d.bias.cast(),
                }),
                Layer::Relu => Layer::Relu,
                Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
                Layer::Upsample { factor } => Layer::Upsample { factor: *factor },
                Layer::Flatten => Layer::Flatten,
                Layer::Reshape { shape } => Layer::Reshape {
                    shape: shape.clone(),
                },
                Layer::ConcatInputs => Layer::ConcatInputs,
            })
            .collect();
        Network {
            kind: self.kind,
            layers,
            input_shapes: self.input_shapes.clone(),
            seed: self.seed,
            state: TrainState {
                adam: self.state.adam.as_ref().map(|a| a.cast()),
                epochs_done: self.state.epochs_done,
                steps: self.state.steps,
            },
        }
    }
}
