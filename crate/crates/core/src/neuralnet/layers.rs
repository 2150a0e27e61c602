use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::real::{gemm, Mat};
use super::{NetError, Real, Tensor};

/// Layer families, used for parameter naming and per-type gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerType {
    TemporalConv3d,
    Conv2d,
    BatchNorm,
    Relu,
    Dropout,
    Upsample,
    Flatten,
    Dense,
    Reshape,
    ConcatInputs,
}

impl LayerType {
    pub fn name(self) -> &'static str {
        match self {
            LayerType::TemporalConv3d => "tconv3d",
            LayerType::Conv2d => "conv2d",
            LayerType::BatchNorm => "batchnorm",
            LayerType::Relu => "relu",
            LayerType::Dropout => "dropout",
            LayerType::Upsample => "upsample",
            LayerType::Flatten => "flatten",
            LayerType::Dense => "dense",
            LayerType::Reshape => "reshape",
            LayerType::ConcatInputs => "concat",
        }
    }
}

/// 3-D convolution over `[N, C, D, H, W]`; the 2-D variant is the special
/// case of a unit temporal kernel on a unit temporal axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub temporal: bool,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub pad: [usize; 3],
    /// `[out, in * kt * kh * kw]`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out, in]`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv<T>),
    BatchNorm(BatchNorm<T>),
    Relu,
    Dropout {
        rate: f64,
    },
    /// Nearest-neighbor upsampling of the last two axes.
    Upsample {
        factor: [usize; 2],
    },
    Flatten,
    Dense(Dense<T>),
    /// Reshape of each batch entry.
    Reshape {
        shape: Vec<usize>,
    },
    /// Channel-wise concatenation of the network inputs.
    ConcatInputs,
}

/// How a forward pass treats the stochastic and batch-dependent layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    /// Batch-norm normalizes with batch statistics instead of running ones.
    pub batch_stats: bool,
    /// Dropout stream seed; `None` disables dropout.
    pub dropout: Option<u64>,
}

impl Mode {
    pub const INFERENCE: Mode = Mode {
        batch_stats: false,
        dropout: None,
    };

    pub fn training(dropout_seed: u64) -> Self {
        Mode {
            batch_stats: true,
            dropout: Some(dropout_seed),
        }
    }

    /// Training-mode normalization without dropout, for gradient checks.
    pub const DETERMINISTIC_TRAINING: Mode = Mode {
        batch_stats: true,
        dropout: None,
    };
}

#[derive(Debug, Clone)]
pub(crate) enum Cache<T> {
    Input(Tensor<T>),
    BatchNorm {
        xhat: Vec<T>,
        /// gamma / sqrt(var + eps) per channel.
        scale: Vec<T>,
        batch: Option<(Vec<T>, Vec<T>)>,
        shape: Vec<usize>,
    },
    Mask(Vec<bool>),
    Dropout(Option<Vec<T>>),
    Shape(Vec<usize>),
}

/// Dot product with independent partial sums, so the loop vectorizes.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

fn uniform<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], limit: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-limit..=limit)))
}

impl<T: Real> Conv<T> {
    /// Fan-in-scaled uniform weights (limit `gain * sqrt(3 / fan_in)`), zero bias.
    pub fn new(
        temporal: bool,
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        pad: [usize; 3],
        gain: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel.iter().product::<usize>();
        let limit = gain * (3.0 / fan_in as f64).sqrt();
        Self {
            temporal,
            in_channels,
            out_channels,
            kernel,
            pad,
            weight: uniform(rng, &[out_channels, fan_in], limit),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    fn out_dims(&self, input: &[usize]) -> Result<[usize; 3], NetError> {
        let bad = || NetError::ShapeMismatch {
            expected: vec![
                0,
                self.in_channels,
                self.kernel[0],
                self.kernel[1],
                self.kernel[2],
            ],
            got: input.to_vec(),
        };
        if input.len() != 5 || input[1] != self.in_channels {
            return Err(bad());
        }
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[2 + a] + 2 * self.pad[a];
            if padded < self.kernel[a] {
                return Err(bad());
            }
            out[a] = padded - self.kernel[a] + 1;
        }
        Ok(out)
    }

    fn k_size(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    /// Calls `f(r, out, inp, len)` for every contiguous run in which row `r`
    /// of the unfolded `[K, Do*Ho*Wo]` matrix reads input `inp..inp + len`
    /// into output positions `out..out + len`. Padding cells are skipped.
    fn for_each_run(
        &self,
        dims: [usize; 3],
        out: [usize; 3],
        mut f: impl FnMut(usize, usize, usize, usize),
    ) {
        let [d, h, w] = dims;
        let [od, oh, ow] = out;
        let [kt, kh, kw] = self.kernel;
        let [pt, ph, pw] = self.pad;
        let mut r = 0;
        for c in 0..self.in_channels {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        // valid output columns: 0 <= xo + dw - pw < w
                        let lo = pw.saturating_sub(dw).min(ow);
                        let hi = (w + pw).saturating_sub(dw).min(ow).max(lo);
                        for zo in 0..od {
                            let zi = (zo + dt).wrapping_sub(pt);
                            if zi >= d || hi == lo {
                                continue;
                            }
                            for yo in 0..oh {
                                let yi = (yo + dh).wrapping_sub(ph);
                                if yi >= h {
                                    continue;
                                }
                                let inp = ((c * d + zi) * h + yi) * w + lo + dw - pw;
                                f(r, (zo * oh + yo) * ow + lo, inp, hi - lo);
                            }
                        }
                        r += 1;
                    }
                }
            }
        }
    }

    /// Unfolds one sample `[C, D, H, W]` into `[K, Do*Ho*Wo]`.
    fn im2col(&self, x: &[T], dims: [usize; 3], out: [usize; 3], cols: &mut [T]) {
        let p: usize = out.iter().product();
        cols.fill(T::zero());
        self.for_each_run(dims, out, |r, o, i, len| {
            cols[r * p + o..r * p + o + len].copy_from_slice(&x[i..i + len]);
        });
    }

    /// Adjoint of [`Self::im2col`], accumulating into `x`.
    fn col2im(&self, cols: &[T], dims: [usize; 3], out: [usize; 3], x: &mut [T]) {
        let p: usize = out.iter().product();
        self.for_each_run(dims, out, |r, o, i, len| {
            for (dst, &v) in x[i..i + len]
                .iter_mut()
                .zip(&cols[r * p + o..r * p + o + len])
            {
                *dst += v;
            }
        });
    }

    /// Few output channels waste most of a GEMM micro-kernel; such layers
    /// convolve directly.
    fn is_direct(&self) -> bool {
        self.out_channels < 4
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.pad == [0, 0, 0]
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let s = x.shape();
        let out = self.out_dims(s)?;
        let dims = [s[2], s[3], s[4]];
        let (n, k, p) = (s[0], self.k_size(), out.iter().product::<usize>());
        let oc = self.out_channels;
        let mut y = Tensor::zeros(&[n, oc, out[0], out[1], out[2]]);
        let unfold = !self.is_pointwise() && !self.is_direct();
        let mut cols = vec![T::zero(); if unfold { k * p } else { 0 }];
        let w = self.weight.data();
        for i in 0..n {
            let xi = x.sample(i);
            let yi = &mut y.data_mut()[i * oc * p..(i + 1) * oc * p];
            if self.is_direct() {
                self.for_each_run(dims, out, |r, o, inp, len| {
                    for ch in 0..oc {
                        let wv = w[ch * k + r];
                        let dst = &mut yi[ch * p + o..ch * p + o + len];
                        for (d, &v) in dst.iter_mut().zip(&xi[inp..inp + len]) {
                            *d += wv * v;
                        }
                    }
                });
            } else {
                let col_ref: &[T] = if unfold {
                    self.im2col(xi, dims, out, &mut cols);
                    &cols
                } else {
                    xi
                };
                gemm(Mat::new(w, oc, k), Mat::new(col_ref, k, p), T::zero(), yi);
            }
            for (o, &b) in self.bias.data().iter().enumerate() {
                for v in &mut yi[o * p..(o + 1) * p] {
                    *v += b;
                }
            }
        }
        Ok(y)
    }

    fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grads: &mut [Tensor<T>],
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let s = x.shape();
        let out = self.out_dims(s).expect("shape checked in forward");
        let dims = [s[2], s[3], s[4]];
        let (n, k, p) = (s[0], self.k_size(), out.iter().product::<usize>());
        let oc = self.out_channels;
        let unfold = !self.is_pointwise() && !self.is_direct();
        let mut cols = vec![T::zero(); if unfold { k * p } else { 0 }];
        let mut dcols = vec![T::zero(); if unfold { k * p } else { 0 }];
        let mut dx = need_dx.then(|| Tensor::zeros(s));
        let (gw, gb) = grads.split_at_mut(1);
        let w = self.weight.data();
        for i in 0..n {
            let xi = x.sample(i);
            let gi = dy.sample(i);
            for (o, b) in gb[0].data_mut().iter_mut().enumerate() {
                *b += gi[o * p..(o + 1) * p].iter().copied().sum::<T>();
            }
            let per = x.per_sample();
            let mut dxi = dx
                .as_mut()
                .map(|d| &mut d.data_mut()[i * per..(i + 1) * per]);
            if self.is_direct() {
                let gw = gw[0].data_mut();
                self.for_each_run(dims, out, |r, o, inp, len| {
                    let xs = &xi[inp..inp + len];
                    for ch in 0..oc {
                        let gs = &gi[ch * p + o..ch * p + o + len];
                        gw[ch * k + r] += dot(gs, xs);
                        if let Some(dxi) = dxi.as_deref_mut() {
                            let wv = w[ch * k + r];
                            for (d, &g) in dxi[inp..inp + len].iter_mut().zip(gs) {
                                *d += wv * g;
                            }
                        }
                    }
                });
                continue;
            }
            let col_ref: &[T] = if unfold {
                self.im2col(xi, dims, out, &mut cols);
                &cols
            } else {
                xi
            };
            gemm(
                Mat::new(gi, oc, p),
                Mat::new(col_ref, k, p).t(),
                T::one(),
                gw[0].data_mut(),
            );
            if let Some(dxi) = dxi {
                let wt = Mat::new(w, oc, k).t();
                if unfold {
                    gemm(wt, Mat::new(gi, oc, p), T::zero(), &mut dcols);
                    self.col2im(&dcols, dims, out, dxi);
                } else {
                    gemm(wt, Mat::new(gi, oc, p), T::zero(), dxi);
                }
            }
        }
        dx
    }
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Tensor::from_fn(&[channels], |_| T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_fn(&[channels], |_| T::one()),
            eps: 1e-3,
            momentum: 0.9,
        }
    }

    fn check(&self, s: &[usize]) -> Result<usize, NetError> {
        if s.len() < 2 || s[1] != self.channels {
            return Err(NetError::ShapeMismatch {
                expected: vec![0, self.channels],
                got: s.to_vec(),
            });
        }
        Ok(s[2..].iter().product())
    }

    fn forward(&self, x: &Tensor<T>, batch_stats: bool) -> Result<(Tensor<T>, Cache<T>), NetError> {
        let s = x.shape();
        let spatial = self.check(s)?;
        let (n, c) = (s[0], self.channels);
        let eps = T::lit(self.eps);
        let count = T::from_usize(n * spatial).expect("count");
        let (mean, var) = if batch_stats {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut acc = T::zero();
                for i in 0..n {
                    let base = (i * c + ch) * spatial;
                    acc += x.data()[base..base + spatial].iter().copied().sum::<T>();
                }
                let m = acc / count;
                let mut sq = T::zero();
                for i in 0..n {
                    let base = (i * c + ch) * spatial;
                    sq += x.data()[base..base + spatial]
                        .iter()
                        .map(|&v| (v - m) * (v - m))
                        .sum::<T>();
                }
                mean[ch] = m;
                var[ch] = sq / count;
            }
            (mean, var)
        } else {
            (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            )
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let scale: Vec<T> = inv_std
            .iter()
            .zip(self.gamma.data())
            .map(|(&is, &g)| is * g)
            .collect();
        let mut xhat = vec![T::zero(); x.len()];
        let mut y = Tensor::zeros(s);
        let planes = x
            .data()
            .chunks_exact(spatial)
            .zip(xhat.chunks_exact_mut(spatial))
            .zip(y.data_mut().chunks_exact_mut(spatial));
        for (plane, ((xs, hs), ys)) in planes.enumerate() {
            let ch = plane % c;
            let (m, is, g, b) = (
                mean[ch],
                inv_std[ch],
                self.gamma.data()[ch],
                self.beta.data()[ch],
            );
            for ((&v, h), out) in xs.iter().zip(hs.iter_mut()).zip(ys.iter_mut()) {
                *h = (v - m) * is;
                *out = g * *h + b;
            }
        }
        let batch = batch_stats.then_some((mean, var));
        Ok((
            y,
            Cache::BatchNorm {
                xhat,
                scale,
                batch,
                shape: s.to_vec(),
            },
        ))
    }

    fn backward(&self, cache: &Cache<T>, dy: &Tensor<T>, grads: &mut [Tensor<T>]) -> Tensor<T> {
        let Cache::BatchNorm {
            xhat,
            scale,
            batch,
            shape,
            ..
        } = cache
        else {
            unreachable!("batch-norm cache")
        };
        let spatial: usize = shape[2..].iter().product();
        let (n, c) = (shape[0], self.channels);
        let mut dx = Tensor::zeros(shape);
        let count = T::from_usize(n * spatial).expect("count");
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for (plane, (gs, hs)) in dy
            .data()
            .chunks_exact(spatial)
            .zip(xhat.chunks_exact(spatial))
            .enumerate()
        {
            let ch = plane % c;
            sum_dy[ch] += gs.iter().copied().sum::<T>();
            sum_dy_xhat[ch] += gs.iter().zip(hs).map(|(&g, &h)| g * h).sum::<T>();
        }
        for ch in 0..c {
            grads[0].data_mut()[ch] += sum_dy_xhat[ch];
            grads[1].data_mut()[ch] += sum_dy[ch];
        }
        let planes = dx
            .data_mut()
            .chunks_exact_mut(spatial)
            .zip(dy.data().chunks_exact(spatial))
            .zip(xhat.chunks_exact(spatial));
        for (plane, ((ds, gs), hs)) in planes.enumerate() {
            let ch = plane % c;
            let sc = scale[ch];
            if batch.is_some() {
                let (sd, sdh) = (sum_dy[ch] / count, sum_dy_xhat[ch] / count);
                for ((d, &g), &h) in ds.iter_mut().zip(gs).zip(hs) {
                    *d = sc * (g - sd - h * sdh);
                }
            } else {
                for (d, &g) in ds.iter_mut().zip(gs) {
                    *d = sc * g;
                }
            }
        }
        dx
    }

    fn update_running(&mut self, cache: &Cache<T>) {
        if let Cache::BatchNorm {
            batch: Some((mean, var)),
            ..
        } = cache
        {
            let mom = T::lit(self.momentum);
            let rest = T::one() - mom;
            for (r, &m) in self.running_mean.data_mut().iter_mut().zip(mean) {
                *r = mom * *r + rest * m;
            }
            for (r, &v) in self.running_var.data_mut().iter_mut().zip(var) {
                *r = mom * *r + rest * v;
            }
        }
    }
}

impl<T: Real> Dense<T> {
    pub fn new(in_features: usize, out_features: usize, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let limit = gain * (3.0 / in_features as f64).sqrt();
        Self {
            in_features,
            out_features,
            weight: uniform(rng, &[out_features, in_features], limit),
            bias: Tensor::zeros(&[out_features]),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let s = x.shape();
        if s.len() != 2 || s[1] != self.in_features {
            return Err(NetError::ShapeMismatch {
                expected: vec![0, self.in_features],
                got: s.to_vec(),
            });
        }
        let n = s[0];
        let mut y = Tensor::zeros(&[n, self.out_features]);
        for i in 0..n {
            y.data_mut()[i * self.out_features..(i + 1) * self.out_features]
                .copy_from_slice(self.bias.data());
        }
        gemm(
            Mat::new(x.data(), n, self.in_features),
            Mat::new(self.weight.data(), self.out_features, self.in_features).t(),
            T::one(),
            y.data_mut(),
        );
        Ok(y)
    }

    fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grads: &mut [Tensor<T>],
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let n = x.batch();
        let (fi, fo) = (self.in_features, self.out_features);
        gemm(
            Mat::new(dy.data(), n, fo).t(),
            Mat::new(x.data(), n, fi),
            T::one(),
            grads[0].data_mut(),
        );
        for i in 0..n {
            for (b, &g) in grads[1].data_mut().iter_mut().zip(dy.sample(i)) {
                *b += g;
            }
        }
        need_dx.then(|| {
            let mut dx = Tensor::zeros(&[n, fi]);
            gemm(
                Mat::new(dy.data(), n, fo),
                Mat::new(self.weight.data(), fo, fi),
                T::zero(),
                dx.data_mut(),
            );
            dx
        })
    }
}

fn upsample_shape(s: &[usize], f: [usize; 2]) -> Vec<usize> {
    let mut out = s.to_vec();
    let r = out.len();
    out[r - 2] *= f[0];
    out[r - 1] *= f[1];
    out
}

impl<T: Real> Layer<T> {
    pub fn layer_type(&self) -> LayerType {
        match self {
            Layer::Conv(c) if c.temporal => LayerType::TemporalConv3d,
            Layer::Conv(_) => LayerType::Conv2d,
            Layer::BatchNorm(_) => LayerType::BatchNorm,
            Layer::Relu => LayerType::Relu,
            Layer::Dropout { .. } => LayerType::Dropout,
            Layer::Upsample { .. } => LayerType::Upsample,
            Layer::Flatten => LayerType::Flatten,
            Layer::Dense(_) => LayerType::Dense,
            Layer::Reshape { .. } => LayerType::Reshape,
            Layer::ConcatInputs => LayerType::ConcatInputs,
        }
    }

    /// All parameters, trainable first, with their short names.
    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv(c) => vec![("weight", &c.weight), ("bias", &c.bias)],
            Layer::Dense(d) => vec![("weight", &d.weight), ("bias", &d.bias)],
            Layer::BatchNorm(b) => vec![
                ("gamma", &b.gamma),
                ("beta", &b.beta),
                ("running_mean", &b.running_mean),
                ("running_var", &b.running_var),
            ],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::Conv(c) => vec![("weight", &mut c.weight), ("bias", &mut c.bias)],
            Layer::Dense(d) => vec![("weight", &mut d.weight), ("bias", &mut d.bias)],
            Layer::BatchNorm(b) => vec![
                ("gamma", &mut b.gamma),
                ("beta", &mut b.beta),
                ("running_mean", &mut b.running_mean),
                ("running_var", &mut b.running_var),
            ],
            _ => vec![],
        }
    }

    /// Number of leading entries of [`Self::params`] that are trainable.
    pub fn trainable_count(&self) -> usize {
        match self {
            Layer::Conv(_) | Layer::Dense(_) | Layer::BatchNorm(_) => 2,
            _ => 0,
        }
    }

    pub(crate) fn forward(
        &self,
        x: Tensor<T>,
        mode: Mode,
        index: usize,
    ) -> Result<(Tensor<T>, Cache<T>), NetError> {
        match self {
            Layer::Conv(c) => {
                let y = c.forward(&x)?;
                Ok((y, Cache::Input(x)))
            }
            Layer::Dense(d) => {
                let y = d.forward(&x)?;
                Ok((y, Cache::Input(x)))
            }
            Layer::BatchNorm(b) => b.forward(&x, mode.batch_stats),
            Layer::Relu => {
                let mut y = x;
                let mask: Vec<bool> = y
                    .data_mut()
                    .iter_mut()
                    .map(|v| {
                        let on = *v > T::zero();
                        if !on {
                            *v = T::zero();
                        }
                        on
                    })
                    .collect();
                Ok((y, Cache::Mask(mask)))
            }
            Layer::Dropout { rate } => match mode.dropout {
                Some(seed) if *rate > 0.0 => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(index as u64);
                    let keep = T::lit(1.0 / (1.0 - rate));
                    let cut = (rate * 2f64.powi(32)).round().min(u32::MAX as f64) as u32;
                    let mask: Vec<T> = (0..x.len())
                        .map(|_| {
                            if rng.random::<u32>() < cut {
                                T::zero()
                            } else {
                                keep
                            }
                        })
                        .collect();
                    let mut y = x;
                    for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    Ok((y, Cache::Dropout(Some(mask))))
                }
                _ => Ok((x, Cache::Dropout(None))),
            },
            Layer::Upsample { factor } => {
                let s = x.shape().to_vec();
                if s.len() < 3 {
                    return Err(NetError::ShapeMismatch {
                        expected: vec![0, 0, 0],
                        got: s,
                    });
                }
                let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
                let planes = x.len() / (h * w);
                let out_shape = upsample_shape(&s, *factor);
                let (oh, ow) = (h * factor[0], w * factor[1]);
                let mut y = Tensor::zeros(&out_shape);
                for p in 0..planes {
                    let src = &x.data()[p * h * w..(p + 1) * h * w];
                    let dst = &mut y.data_mut()[p * oh * ow..(p + 1) * oh * ow];
                    for r in 0..oh {
                        for c in 0..ow {
                            dst[r * ow + c] = src[(r / factor[0]) * w + c / factor[1]];
                        }
                    }
                }
                Ok((y, Cache::Shape(s)))
            }
            Layer::Flatten => {
                let s = x.shape().to_vec();
                let per = x.per_sample();
                Ok((x.reshape(&[s[0], per])?, Cache::Shape(s)))
            }
            Layer::Reshape { shape } => {
                let s = x.shape().to_vec();
                let mut target = vec![s[0]];
                target.extend_from_slice(shape);
                Ok((x.reshape(&target)?, Cache::Shape(s)))
            }
            Layer::ConcatInputs => Ok((x, Cache::Shape(vec![]))),
        }
    }

    /// Accumulates parameter gradients into `grads` (one per trainable
    /// parameter) and returns the input gradient when `need_dx` is set.
    pub(crate) fn backward(
        &self,
        cache: &Cache<T>,
        dy: Tensor<T>,
        grads: &mut [Tensor<T>],
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        match (self, cache) {
            (Layer::Conv(c), Cache::Input(x)) => c.backward(x, &dy, grads, need_dx),
            (Layer::Dense(d), Cache::Input(x)) => d.backward(x, &dy, grads, need_dx),
            (Layer::BatchNorm(b), cache) => Some(b.backward(cache, &dy, grads)),
            (Layer::Relu, Cache::Mask(mask)) => {
                let mut dx = dy;
                for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
                    if !m {
                        *v = T::zero();
                    }
                }
                Some(dx)
            }
            (Layer::Dropout { .. }, Cache::Dropout(mask)) => {
                let mut dx = dy;
                if let Some(mask) = mask {
                    for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                Some(dx)
            }
            (Layer::Upsample { factor }, Cache::Shape(s)) => {
                let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
                let (oh, ow) = (h * factor[0], w * factor[1]);
                let mut dx = Tensor::zeros(s);
                let planes = dx.len() / (h * w);
                for p in 0..planes {
                    let src = &dy.data()[p * oh * ow..(p + 1) * oh * ow];
                    let dst = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
                    for r in 0..oh {
                        for c in 0..ow {
                            dst[(r / factor[0]) * w + c / factor[1]] += src[r * ow + c];
                        }
                    }
                }
                Some(dx)
            }
            (Layer::Flatten | Layer::Reshape { .. }, Cache::Shape(s)) => {
                Some(dy.reshape(s).expect("same element count"))
            }
            (Layer::ConcatInputs, _) => Some(dy),
            _ => unreachable!("cache does not match layer"),
        }
    }

    pub(crate) fn update_running(&mut self, cache: &Cache<T>) {
        if let Layer::BatchNorm(b) = self {
            b.update_running(cache);
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NetError> {
        let mut full = vec![1];
        full.extend_from_slice(input);
        let out = match self {
            Layer::Conv(c) => {
                let d = c.out_dims(&full)?;
                vec![c.out_channels, d[0], d[1], d[2]]
            }
            Layer::Dense(d) => {
                if input != [d.in_features] {
                    return Err(NetError::ShapeMismatch {
                        expected: vec![d.in_features],
                        got: input.to_vec(),
                    });
                }
                vec![d.out_features]
            }
            Layer::BatchNorm(b) => {
                b.check(&full)?;
                input.to_vec()
            }
            Layer::Upsample { factor } => upsample_shape(input, *factor),
            Layer::Flatten => vec![input.iter().product()],
            Layer::Reshape { shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(NetError::ShapeMismatch {
                        expected: shape.clone(),
                        got: input.to_vec(),
                    });
                }
                shape.clone()
            }
            Layer::Relu | Layer::Dropout { .. } | Layer::ConcatInputs => input.to_vec(),
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    /// Direct 3-D convolution, no unfolding.
    fn naive_conv(c: &Conv<f64>, x: &Tensor<f64>) -> Vec<f64> {
        let s = x.shape();
        let out = c.out_dims(s).unwrap();
        let [kt, kh, kw] = c.kernel;
        let [pt, ph, pw] = c.pad;
        let mut y = Vec::new();
        for n in 0..s[0] {
            for o in 0..c.out_channels {
                for zo in 0..out[0] {
                    for yo in 0..out[1] {
                        for xo in 0..out[2] {
                            let mut acc = c.bias.data()[o];
                            for ci in 0..c.in_channels {
                                for a in 0..kt {
                                    for b in 0..kh {
                                        for e in 0..kw {
                                            let zi = zo as isize + a as isize - pt as isize;
                                            let yi = yo as isize + b as isize - ph as isize;
                                            let xi = xo as isize + e as isize - pw as isize;
                                            if zi < 0 || yi < 0 || xi < 0 {
                                                continue;
                                            }
                                            let (zi, yi, xi) =
                                                (zi as usize, yi as usize, xi as usize);
                                            if zi >= s[2] || yi >= s[3] || xi >= s[4] {
                                                continue;
                                            }
                                            let w = c.weight.data()[o * c.k_size()
                                                + ((ci * kt + a) * kh + b) * kw
                                                + e];
                                            let v = x.data()[(((n * s[1] + ci) * s[2] + zi)
                                                * s[3]
                                                + yi)
                                                * s[4]
                                                + xi];
                                            acc += w * v;
                                        }
                                    }
                                }
                            }
                            y.push(acc);
                        }
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let mut r = rng();
        for (kernel, pad, dims) in [
            ([3, 3, 3], [0, 1, 1], [5, 6, 3]),
            ([2, 1, 3], [1, 0, 2], [3, 4, 5]),
            ([1, 1, 1], [0, 0, 0], [1, 4, 4]),
            ([1, 5, 5], [0, 2, 2], [1, 7, 6]),
        ] {
            let mut c = Conv::<f64>::new(true, 2, 3, kernel, pad, 1.0, &mut r);
            c.bias = Tensor::from_fn(&[3], |i| i as f64 * 0.1);
            let x = Tensor::from_fn(&[2, 2, dims[0], dims[1], dims[2]], |i| {
                ((i * 7 % 13) as f64 - 6.0) / 5.0
            });
            let y = c.forward(&x).unwrap();
            for (a, b) in y.data().iter().zip(naive_conv(&c, &x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// <dy, conv(x)> linearity: the input gradient must be the exact adjoint.
    #[test]
    fn conv_input_gradient_is_adjoint() {
        let mut r = rng();
        let c = Conv::<f64>::new(true, 2, 3, [2, 3, 3], [1, 1, 0], 1.0, &mut r);
        let x = Tensor::from_fn(&[2, 2, 3, 5, 4], |i| (i as f64 * 0.731).sin());
        let y = c.forward(&x).unwrap();
        let dy = Tensor::from_fn(y.shape(), |i| (i as f64 * 0.313).cos());
        let mut grads = vec![
            Tensor::zeros(c.weight.shape()),
            Tensor::zeros(c.bias.shape()),
        ];
        let dx = c.backward(&x, &dy, &mut grads, true).unwrap();
        let eps = 1e-6;
        for probe in [0usize, 17, 50, 111] {
            let mut xp = x.clone();
            xp.data_mut()[probe] += eps;
            let yp = c.forward(&xp).unwrap();
            let fd: f64 = yp
                .data()
                .iter()
                .zip(y.data())
                .zip(dy.data())
                .map(|((a, b), g)| (a - b) / eps * g)
                .sum();
            assert!((fd - dx.data()[probe]).abs() < 1e-6);
        }
    }

    #[test]
    fn upsample_and_adjoint() {
        let l = Layer::<f64>::Upsample { factor: [2, 3] };
        let x = Tensor::from_fn(&[1, 1, 2, 2], |i| i as f64);
        let (y, cache) = l.forward(x, Mode::INFERENCE, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 6]);
        assert_eq!(&y.data()[..6], &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let dx = l
            .backward(
                &cache,
                Tensor::from_fn(&[1, 1, 4, 6], |_| 1.0),
                &mut [],
                true,
            )
            .unwrap();
        assert_eq!(dx.data(), &[6.0; 4]);
    }

    #[test]
    fn batchnorm_inference_uses_running_stats() {
        let mut b = BatchNorm::<f64>::new(2);
        b.running_mean = Tensor::from_fn(&[2], |i| i as f64);
        b.running_var = Tensor::from_fn(&[2], |_| 4.0 - 1e-3);
        let x = Tensor::from_fn(&[1, 2, 1], |i| 2.0 + i as f64);
        let (y, _) = b.forward(&x, false).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!((y.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_batch_stats_normalize() {
        let b = BatchNorm::<f64>::new(1);
        let x = Tensor::from_fn(&[4, 1, 3], |i| i as f64 * 1.5 - 2.0);
        let (y, _) = b.forward(&x, true).unwrap();
        let mean: f64 = y.data().iter().sum::<f64>() / 12.0;
        let var: f64 = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
        assert!(mean.abs() < 1e-12);
        let expected = {
            let xs: Vec<f64> = x.data().to_vec();
            let m = xs.iter().sum::<f64>() / 12.0;
            let v = xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 12.0;
            v / (v + 1e-3)
        };
        assert!((var - expected).abs() < 1e-12);
    }

    #[test]
    fn dropout_is_seeded_and_inverted() {
        let l = Layer::<f64>::Dropout { rate: 0.3 };
        let x = Tensor::from_fn(&[1, 10_000], |_| 1.0);
        let (a, _) = l.forward(x.clone(), Mode::training(5), 2).unwrap();
        let (b, _) = l.forward(x.clone(), Mode::training(5), 2).unwrap();
        let (c, _) = l.forward(x.clone(), Mode::training(6), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let dropped = a.data().iter().filter(|&&v| v == 0.0).count();
        assert!((2700..3300).contains(&dropped), "{dropped}");
        let (d, _) = l.forward(x.clone(), Mode::INFERENCE, 2).unwrap();
        assert_eq!(d, x);
    }
}
