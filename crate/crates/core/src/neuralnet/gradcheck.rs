use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{LayerType, Mode};
use super::{NetError, Network, Tensor};

/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Magnitude of the random output weights. Small weights keep the rounding
/// noise of structurally zero gradients (a bias feeding batch normalization)
/// well below the 1e-8 error floor.
const PROBE_SCALE: f64 = 1e-5;

/// Largest relative gradient error per layer type.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(layer type, parameters compared, max relative error)`.
    pub per_type: Vec<(LayerType, usize, f64)>,
    /// Perturbations that flipped a ReLU and were therefore not compared.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_type.iter().map(|&(_, _, e)| e).fold(0.0, f64::max)
    }

    pub fn for_type(&self, ty: LayerType) -> Option<f64> {
        self.per_type
            .iter()
            .find(|(t, _, _)| *t == ty)
            .map(|&(_, _, e)| e)
    }
}

fn relative_error(ga: f64, gn: f64) -> f64 {
    (ga - gn).abs() / (ga.abs() + gn.abs()).max(1e-8)
}

fn probe_and_masks(
    net: &Network<f64>,
    inputs: &[&Tensor<f64>],
    w: &Tensor<f64>,
) -> (f64, Vec<Vec<bool>>) {
    let (y, tape) = net
        .forward_tape(inputs, Mode::DETERMINISTIC_TRAINING)
        .expect("inputs already validated");
    let l = y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
    (l, tape.relu_masks().map(<[bool]>::to_vec).collect())
}

/// Compares analytic parameter gradients with central finite differences on
/// up to `per_type` randomly chosen parameters of every parameterized layer
/// type (all of them when fewer exist). Batch-norm uses batch statistics and
/// dropout is off. The differentiated scalar is a seeded random linear
/// functional of the output: backpropagation is linear in the output
/// gradient, so this exercises every path without the curvature a squared
/// loss adds to the finite differences. Perturbations that change any ReLU activation pattern are
/// skipped and replaced by further candidates.
pub fn grad_check(
    net: &Network<f64>,
    inputs: &[&Tensor<f64>],
    per_type: usize,
    seed: u64,
) -> Result<GradCheckReport, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, tape) = net.forward_tape(inputs, Mode::DETERMINISTIC_TRAINING)?;
    let w = Tensor::from_fn(y.shape(), |_| rng.random_range(-PROBE_SCALE..PROBE_SCALE));
    let (grads, _) = net.backward(&tape, w.clone(), false);
    let base_masks: Vec<Vec<bool>> = tape.relu_masks().map(<[bool]>::to_vec).collect();
    drop(tape);

    let owners = net.trainable_owners();
    let mut types: Vec<LayerType> = owners.iter().map(|&(_, t)| t).collect();
    types.dedup();
    let mut seen = Vec::new();
    types.retain(|t| {
        let fresh = !seen.contains(t);
        seen.push(*t);
        fresh
    });

    let mut probe = net.clone();
    let mut report = GradCheckReport {
        per_type: Vec::new(),
        skipped_kinks: 0,
    };
    for ty in types {
        let mut candidates: Vec<(usize, usize)> = owners
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| *t == ty)
            .flat_map(|(k, _)| (0..grads[k].len()).map(move |j| (k, j)))
            .collect();
        candidates.shuffle(&mut rng);
        let (mut checked, mut worst) = (0, 0.0f64);
        for (k, j) in candidates {
            if checked == per_type {
                break;
            }
            let original = probe.trainable()[k].data()[j];
            let mut eval = |v: f64| {
                probe.trainable_mut()[k].data_mut()[j] = v;
                probe_and_masks(&probe, inputs, &w)
            };
            let (lp, mp) = eval(original + FD_STEP);
            let (lm, mm) = eval(original - FD_STEP);
            probe.trainable_mut()[k].data_mut()[j] = original;
            if mp != base_masks || mm != base_masks {
                report.skipped_kinks += 1;
                continue;
            }
            let gn = (lp - lm) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grads[k].data()[j], gn));
            checked += 1;
        }
        report.per_type.push((ty, checked, worst));
    }
    Ok(report)
}
