use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{AdamConfig, AdamState};
use super::layers::Mode;
use super::loss::{fused_abs, mse, sum_squared};
use super::{NetError, Network, NetworkKind, Real, Tensor};

/// Indexed supervised samples: network inputs plus one 80×28 target each.
pub trait SampleSource<T: Real> {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inputs and targets for `indices`, stacked in the given order.
    fn batch(&self, indices: &[usize]) -> (Vec<Tensor<T>>, Tensor<T>);
}

/// Fully materialized samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDataset<T> {
    inputs: Vec<Tensor<T>>,
    targets: Tensor<T>,
}

impl<T: Real> TensorDataset<T> {
    pub fn new(inputs: Vec<Tensor<T>>, targets: Tensor<T>) -> Result<Self, NetError> {
        let n = targets.batch();
        for t in &inputs {
            if t.batch() != n {
                return Err(NetError::ShapeMismatch {
                    expected: vec![n],
                    got: vec![t.batch()],
                });
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn inputs(&self) -> &[Tensor<T>] {
        &self.inputs
    }

    pub fn targets(&self) -> &Tensor<T> {
        &self.targets
    }
}

impl<T: Real> SampleSource<T> for TensorDataset<T> {
    fn len(&self) -> usize {
        self.targets.batch()
    }

    fn batch(&self, indices: &[usize]) -> (Vec<Tensor<T>>, Tensor<T>) {
        (
            self.inputs.iter().map(|t| t.gather(indices)).collect(),
            self.targets.gather(indices),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossMode {
    /// Squared error averaged over cells.
    Mse,
    /// Per-sample squared-error sums; joint pose/deformation training uses
    /// the weighted absolute-residual form.
    FusedAbs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub loss_mode: LossMode,
    /// Initial (alpha, beta) for joint training.
    pub fusion_weights: (f64, f64),
}

impl Default for Hyperparams {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            batch_size: 128,
            epochs: 1,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            loss_mode: LossMode::Mse,
            fusion_weights: (1.0, 1.0),
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::InvalidHyperparams(
                "learning_rate must be finite and >= 0",
            ));
        }
        if self.batch_size == 0 {
            return Err(NetError::InvalidHyperparams("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(NetError::InvalidHyperparams(
                "adam betas must lie in [0, 1)",
            ));
        }
        if self.adam_eps <= 0.0 {
            return Err(NetError::InvalidHyperparams("adam_eps must be > 0"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Metrics of one completed epoch, in normalized units. Training metrics are
/// accumulated over the epoch's training-mode forward passes; validation runs
/// in inference mode after the epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub train_mse: f64,
    pub train_mae: f64,
    pub val_mse: Option<f64>,
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,train_mae,val_mse,val_mae\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.epoch,
                r.train_mse,
                r.train_mae,
                opt(r.val_mse),
                opt(r.val_mae)
            );
        }
        s
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(epoch)));
    order.shuffle(&mut rng);
    order
}

fn dropout_seed(seed: u64, step: u64) -> u64 {
    splitmix(splitmix(seed).wrapping_add(step))
}

/// Running batch-size-weighted MSE and MAE.
#[derive(Default)]
struct Meter {
    se: f64,
    ae: f64,
    cells: usize,
}

impl Meter {
    fn add<T: Real>(&mut self, pred: &Tensor<T>, target: &Tensor<T>) {
        for (&p, &t) in pred.data().iter().zip(target.data()) {
            let d = (p - t).to_f64().unwrap_or(f64::NAN);
            self.se += d * d;
            self.ae += d.abs();
        }
        self.cells += pred.len();
    }

    fn finish(&self) -> (f64, f64) {
        let n = self.cells.max(1) as f64;
        (self.se / n, self.ae / n)
    }
}

fn ensure_adam<T: Real>(net: &mut Network<T>) {
    if net.state.adam.is_none() {
        let shapes: Vec<Vec<usize>> = net.trainable().iter().map(|t| t.shape().to_vec()).collect();
        let refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
        net.state.adam = Some(AdamState::new(&refs));
    }
}

/// One optimizer step on a batch; returns the training-mode prediction.
fn step<T: Real>(
    net: &mut Network<T>,
    inputs: &[Tensor<T>],
    target: &Tensor<T>,
    mode: LossMode,
    cfg: &AdamConfig,
) -> Result<(f64, Tensor<T>), NetError> {
    let refs: Vec<&Tensor<T>> = inputs.iter().collect();
    let fwd = Mode::training(dropout_seed(net.seed, net.state.steps));
    let (y, mut tape) = net.forward_tape(&refs, fwd)?;
    tape.open_output_relu(target);
    let (l, dy) = match mode {
        LossMode::Mse => mse(&y, target)?,
        LossMode::FusedAbs => sum_squared(&y, target)?,
    };
    net.state.steps += 1;
    if !l.is_finite() {
        return Ok((l, y));
    }
    let (grads, _) = net.backward(&tape, dy, false);
    net.update_running(&tape);
    ensure_adam(net);
    let mut adam = net.state.adam.take().expect("initialized");
    adam.update(net.trainable_mut(), &grads, cfg);
    net.state.adam = Some(adam);
    Ok((l, y))
}

/// Trains `net` for `hyper.epochs` further epochs. Shuffling and dropout
/// draw from streams keyed by the network seed and the epoch/step counters
/// stored in the network, so a run resumed from a checkpoint continues
/// exactly as an uninterrupted one.
pub fn train<T: Real>(
    mut net: Network<T>,
    data: &dyn SampleSource<T>,
    validation: Option<&dyn SampleSource<T>>,
    hyper: &Hyperparams,
) -> Result<(Network<T>, TrainHistory), NetError> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let cfg = hyper.adam();
    let mut history = TrainHistory::default();
    for _ in 0..hyper.epochs {
        let epoch = net.state.epochs_done;
        let order = epoch_order(net.seed, epoch, data.len());
        let mut meter = Meter::default();
        for idx in order.chunks(hyper.batch_size) {
            let (inputs, target) = data.batch(idx);
            let (l, y) = step(&mut net, &inputs, &target, hyper.loss_mode, &cfg)?;
            if !l.is_finite() || !net.trainable().iter().all(|t| t.all_finite()) {
                return Err(NetError::DivergenceDetected { epoch });
            }
            meter.add(&y, &target);
        }
        net.state.epochs_done += 1;
        let (train_mse, train_mae) = meter.finish();
        let (val_mse, val_mae) = match validation {
            Some(v) if !v.is_empty() => {
                let (m, a) = evaluate(&net, v, hyper.batch_size)?;
                (Some(m), Some(a))
            }
            _ => (None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_mse,
            train_mae,
            val_mse,
            val_mae,
        });
    }
    Ok((net, history))
}

/// Inference-mode MSE and MAE over a source.
pub fn evaluate<T: Real>(
    net: &Network<T>,
    data: &dyn SampleSource<T>,
    batch_size: usize,
) -> Result<(f64, f64), NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let mut meter = Meter::default();
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(batch_size.max(1)) {
        let (inputs, target) = data.batch(idx);
        let refs: Vec<&Tensor<T>> = inputs.iter().collect();
        meter.add(&net.predict(&refs)?, &target);
    }
    Ok(meter.finish())
}

/// Inference-mode predictions for every sample, in source order.
pub fn predict_all<T: Real>(
    net: &Network<T>,
    data: &dyn SampleSource<T>,
    batch_size: usize,
) -> Result<Tensor<T>, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len() * 2240);
    let mut shape = Vec::new();
    for idx in all.chunks(batch_size.max(1)) {
        let (inputs, _) = data.batch(idx);
        let refs: Vec<&Tensor<T>> = inputs.iter().collect();
        let y = net.predict(&refs)?;
        shape = y.shape().to_vec();
        out.extend(y.into_data());
    }
    shape[0] = data.len();
    Tensor::new(shape, out)
}

/// Result of joint pose/deformation training.
#[derive(Debug, Clone)]
pub struct FusedOutcome<T> {
    pub tpn: Network<T>,
    pub tdn: Network<T>,
    pub alpha: f64,
    pub beta: f64,
    pub history: TrainHistory,
}

/// Trains a pose network and a deformation network together on the
/// weighted absolute-residual loss with trainable weights. The weights are
/// kept non-negative and rescaled to sum to 2 after every step, since the
/// unconstrained minimum is the trivial alpha = beta = 0. Both sources must
/// index the same windows. History metrics are those of the deformation
/// network.
pub fn train_fused<T: Real>(
    mut tpn: Network<T>,
    mut tdn: Network<T>,
    pose: &dyn SampleSource<T>,
    deform: &dyn SampleSource<T>,
    hyper: &Hyperparams,
) -> Result<FusedOutcome<T>, NetError> {
    hyper.validate()?;
    if tpn.kind != NetworkKind::Tpn || tdn.kind != NetworkKind::Tdn {
        return Err(NetError::KindMismatch {
            expected: NetworkKind::Tpn,
            found: tpn.kind,
        });
    }
    if pose.is_empty() || pose.len() != deform.len() {
        return Err(NetError::EmptyDataset);
    }
    let cfg = hyper.adam();
    let (mut alpha, mut beta) = hyper.fusion_weights;
    let mut weights = Tensor::<f64>::from_fn(&[2], |i| [alpha, beta][i]);
    let mut weight_adam = AdamState::<f64>::new(&[&[2]]);
    let mut history = TrainHistory::default();
    ensure_adam(&mut tpn);
    ensure_adam(&mut tdn);
    for _ in 0..hyper.epochs {
        let epoch = tdn.state.epochs_done;
        let order = epoch_order(tdn.seed, epoch, pose.len());
        let mut meter = Meter::default();
        for idx in order.chunks(hyper.batch_size) {
            let (pi, pt) = pose.batch(idx);
            let (di, dt) = deform.batch(idx);
            let pr: Vec<&Tensor<T>> = pi.iter().collect();
            let dr: Vec<&Tensor<T>> = di.iter().collect();
            let (p, ptape) =
                tpn.forward_tape(&pr, Mode::training(dropout_seed(tpn.seed, tpn.state.steps)))?;
            let (q, qtape) =
                tdn.forward_tape(&dr, Mode::training(dropout_seed(tdn.seed, tdn.state.steps)))?;
            tpn.state.steps += 1;
            tdn.state.steps += 1;
            let f = fused_abs(&p, &q, &pt, &dt, alpha, beta)?;
            if !f.loss.is_finite() {
                return Err(NetError::DivergenceDetected { epoch });
            }
            for (net, tape, g) in [(&mut tpn, &ptape, f.grad_p), (&mut tdn, &qtape, f.grad_q)] {
                let (grads, _) = net.backward(tape, g, false);
                net.update_running(tape);
                let mut adam = net.state.adam.take().expect("initialized");
                adam.update(net.trainable_mut(), &grads, &cfg);
                net.state.adam = Some(adam);
            }
            let wg = Tensor::from_fn(&[2], |i| [f.grad_alpha, f.grad_beta][i]);
            weight_adam.update(vec![&mut weights], &[wg], &cfg);
            let w = weights.data_mut();
            w[0] = w[0].max(0.0);
            w[1] = w[1].max(0.0);
            let s = w[0] + w[1];
            if s > 0.0 {
                w[0] *= 2.0 / s;
                w[1] *= 2.0 / s;
            } else {
                w.fill(1.0);
            }
            (alpha, beta) = (w[0], w[1]);
            meter.add(&q, &dt);
        }
        tpn.state.epochs_done += 1;
        tdn.state.epochs_done += 1;
        let (train_mse, train_mae) = meter.finish();
        history.epochs.push(EpochRecord {
            epoch,
            train_mse,
            train_mae,
            val_mse: None,
            val_mae: None,
        });
    }
    Ok(FusedOutcome {
        tpn,
        tdn,
        alpha,
        beta,
        history,
    })
}
