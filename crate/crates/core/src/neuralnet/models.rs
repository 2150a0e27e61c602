//! Reference architectures.
//!
//! Layer counts and families follow the published descriptions; exact widths
//! are not published and were chosen to land within a factor of three of the
//! published parameter counts. Batch-norm channel budgets are fixed by the
//! published non-trainable counts (two running statistics per channel).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grid::{GRID_COLS, GRID_ROWS};

use super::layers::{BatchNorm, Conv, Dense, Layer};
use super::{Network, NetworkKind, Real};

/// Frames per input window.
pub const WINDOW: usize = 10;
pub const DROPOUT_RATE: f64 = 0.3;
/// Rows of the pose network's coarse profile before upsampling.
pub const TPN_PROFILE_ROWS: usize = 20;

const RELU_GAIN: f64 = std::f64::consts::SQRT_2;
/// Regression heads start near zero output.
const HEAD_GAIN: f64 = 0.05;

/// Builds a network for 17-joint pose input.
pub fn build_model(kind: NetworkKind, seed: u64) -> Network<f32> {
    build_model_for(kind, seed, 17)
}

/// Builds a network whose pose input has `joints` keypoints.
pub fn build_model_for<T: Real>(kind: NetworkKind, seed: u64, joints: usize) -> Network<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (layers, inputs) = match kind {
        NetworkKind::Tpn => (tpn_layers(&mut rng, joints), vec![vec![WINDOW, joints, 3]]),
        NetworkKind::Tdn => (
            tdn_layers(&mut rng),
            vec![vec![WINDOW, GRID_ROWS, GRID_COLS]],
        ),
        NetworkKind::Psn => (
            psn_layers(&mut rng),
            vec![vec![GRID_ROWS, GRID_COLS], vec![GRID_ROWS, GRID_COLS]],
        ),
        NetworkKind::Baseline => {
            let mut layers = tpn_layers(&mut rng, joints);
            layers.extend(baseline_head(&mut rng));
            (layers, vec![vec![WINDOW, joints, 3]])
        }
    };
    Network::from_parts(kind, layers, inputs, seed)
}

fn conv3<T: Real>(
    rng: &mut ChaCha8Rng,
    cin: usize,
    cout: usize,
    kernel: [usize; 3],
    pad: [usize; 3],
    gain: f64,
) -> Layer<T> {
    Layer::Conv(Conv::new(true, cin, cout, kernel, pad, gain, rng))
}

fn conv2<T: Real>(rng: &mut ChaCha8Rng, cin: usize, cout: usize, k: usize, gain: f64) -> Layer<T> {
    Layer::Conv(Conv::new(
        false,
        cin,
        cout,
        [1, k, k],
        [0, k / 2, k / 2],
        gain,
        rng,
    ))
}

fn bn<T: Real>(channels: usize) -> Layer<T> {
    Layer::BatchNorm(BatchNorm::new(channels))
}

/// Temporal pose network: a 3-D convolutional trunk over (time, joint, axis)
/// collapsing the window, a dense layer to a per-row profile, and nearest
/// upsampling to the mat grid.
fn tpn_layers<T: Real>(rng: &mut ChaCha8Rng, joints: usize) -> Vec<Layer<T>> {
    let c1 = 16;
    let c2 = 32;
    vec![
        conv3(rng, 1, c1, [3, 3, 3], [0, 1, 1], RELU_GAIN),
        bn(c1),
        Layer::Relu,
        conv3(rng, c1, c2, [WINDOW - 2, 1, 3], [0, 0, 0], RELU_GAIN),
        bn(c2),
        Layer::Relu,
        Layer::Dropout { rate: DROPOUT_RATE },
        Layer::Flatten,
        Layer::Dense(Dense::new(c2 * joints, TPN_PROFILE_ROWS, HEAD_GAIN, rng)),
        Layer::Reshape {
            shape: vec![1, 1, TPN_PROFILE_ROWS, 1],
        },
        Layer::Upsample {
            factor: [GRID_ROWS / TPN_PROFILE_ROWS, GRID_COLS],
        },
        conv2(rng, 1, 1, 3, HEAD_GAIN),
    ]
}

/// Temporal deformation network: one temporal convolution spanning the whole
/// window, then 2-D convolutions at full grid resolution.
fn tdn_layers<T: Real>(rng: &mut ChaCha8Rng) -> Vec<Layer<T>> {
    let c = 32;
    vec![
        conv3(rng, 1, c, [WINDOW, 3, 3], [0, 1, 1], RELU_GAIN),
        bn(c),
        Layer::Relu,
        conv2(rng, c, c, 3, RELU_GAIN),
        bn(c),
        Layer::Relu,
        conv2(rng, c, c, 1, RELU_GAIN),
        bn(c),
        Layer::Relu,
        Layer::Dropout { rate: DROPOUT_RATE },
        conv2(rng, c, 1, 7, HEAD_GAIN),
    ]
}

/// Fusion network: channel concatenation and three 2-D convolutions. The
/// final ReLU keeps off-contact cells at exactly zero.
fn psn_layers<T: Real>(rng: &mut ChaCha8Rng) -> Vec<Layer<T>> {
    let c = 24;
    vec![
        Layer::ConcatInputs,
        conv2(rng, 2, c, 7, RELU_GAIN),
        bn(c),
        Layer::Relu,
        conv2(rng, c, c, 3, RELU_GAIN),
        bn(c),
        Layer::Relu,
        conv2(rng, c, 1, 5, HEAD_GAIN),
        Layer::Relu,
    ]
}

/// Fully connected layers appended to the pose network for the baseline.
fn baseline_head<T: Real>(rng: &mut ChaCha8Rng) -> Vec<Layer<T>> {
    let hidden = 32;
    let cells = GRID_ROWS * GRID_COLS;
    vec![
        Layer::Flatten,
        Layer::Dense(Dense::new(cells, hidden, RELU_GAIN, rng)),
        Layer::Relu,
        Layer::Dropout { rate: DROPOUT_RATE },
        Layer::Dense(Dense::new(hidden, cells, HEAD_GAIN, rng)),
        Layer::Reshape {
            shape: vec![1, 1, GRID_ROWS, GRID_COLS],
        },
        Layer::Relu,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::Tensor;

    #[test]
    fn shapes_and_counts() {
        for (kind, published, non_trainable, layers) in [
            (NetworkKind::Tpn, 15_361.0, 96, 12),
            (NetworkKind::Tdn, 40_563.0, 192, 11),
            (NetworkKind::Psn, 23_873.0, 96, 9),
        ] {
            let net = build_model(kind, 42);
            let total = net.param_count();
            assert_eq!(total - net.trainable_param_count(), non_trainable, "{kind}");
            let ratio = total as f64 / published;
            assert!((1.0 / 3.0..=3.0).contains(&ratio), "{kind}: {total}");
            assert_eq!(net.layers().len(), layers, "{kind}");
        }
    }

    #[test]
    fn io_shapes() {
        let pose = Tensor::<f32>::zeros(&[3, 10, 17, 3]);
        let deform = Tensor::<f32>::zeros(&[3, 10, 80, 28]);
        let map = Tensor::<f32>::zeros(&[3, 80, 28]);
        for (kind, inputs) in [
            (NetworkKind::Tpn, vec![&pose]),
            (NetworkKind::Tdn, vec![&deform]),
            (NetworkKind::Psn, vec![&map, &map]),
            (NetworkKind::Baseline, vec![&pose]),
        ] {
            let y = build_model(kind, 42).predict(&inputs).unwrap();
            assert_eq!(y.shape(), &[3, 80, 28], "{kind}");
        }
        let body25 = Tensor::<f32>::zeros(&[2, 10, 25, 3]);
        let y = build_model_for::<f32>(NetworkKind::Tpn, 1, 25)
            .predict(&[&body25])
            .unwrap();
        assert_eq!(y.shape(), &[2, 80, 28]);
    }

    #[test]
    fn seeded_initialization() {
        for kind in NetworkKind::ALL {
            assert_eq!(build_model(kind, 42), build_model(kind, 42));
            assert_ne!(build_model(kind, 42), build_model(kind, 43));
        }
    }

    #[test]
    fn wrong_input_shape_is_an_error() {
        let net = build_model(NetworkKind::Tpn, 1);
        let bad = Tensor::<f32>::zeros(&[2, 10, 25, 3]);
        assert!(net.predict(&[&bad]).is_err());
        assert!(net.predict(&[]).is_err());
    }

    #[test]
    fn zero_head_gives_zero_output() {
        let mut net = build_model(NetworkKind::Tdn, 3);
        for (name, t) in net.named_params_mut() {
            if name.starts_with("10.") {
                t.data_mut().fill(0.0);
            }
        }
        let x = Tensor::from_fn(&[2, 10, 80, 28], |i| (i % 7) as f32 / 7.0);
        assert!(net.predict(&[&x]).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
