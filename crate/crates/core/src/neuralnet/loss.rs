//! Pressure-map losses. Every loss sums over the grid cells of each sample
//! and averages over the batch.

use super::{NetError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Sum of squared cell errors (the per-network losses).
    SumSquared,
    /// Sum of squared cell errors divided by the cell count.
    Mse,
    /// `sum (alpha |p - p_hat| + beta |q - q_hat|)^2` over two prediction/
    /// target pairs.
    FusedAbs { alpha: f64, beta: f64 },
}

fn check<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(), NetError> {
    if pred.shape() != target.shape() {
        return Err(NetError::ShapeMismatch {
            expected: target.shape().to_vec(),
            got: pred.shape().to_vec(),
        });
    }
    Ok(())
}

/// Batch-mean sum of squared errors and its gradient with respect to `pred`.
pub fn sum_squared<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
) -> Result<(f64, Tensor<T>), NetError> {
    check(pred, target)?;
    let n = pred.batch();
    let mut total = 0.0;
    for i in 0..n {
        let s: f64 = pred
            .sample(i)
            .iter()
            .zip(target.sample(i))
            .map(|(&p, &t)| {
                let d = (p - t).to_f64().unwrap_or(f64::NAN);
                d * d
            })
            .sum();
        total += s;
    }
    let scale = T::lit(2.0 / n as f64);
    let grad = Tensor::new(
        pred.shape().to_vec(),
        pred.data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| scale * (p - t))
            .collect(),
    )?;
    Ok((total / n as f64, grad))
}

/// Sum of squared errors divided by the per-sample cell count.
pub fn mse<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>), NetError> {
    let cells = pred.per_sample() as f64;
    let (l, mut g) = sum_squared(pred, target)?;
    let inv = T::lit(1.0 / cells);
    for v in g.data_mut() {
        *v *= inv;
    }
    Ok((l / cells, g))
}

/// Mean absolute error over all cells and samples.
pub fn mae<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64, NetError> {
    check(pred, target)?;
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t).abs().to_f64().unwrap_or(f64::NAN))
        .sum();
    Ok(s / pred.len() as f64)
}

/// Loss value and gradients of the weighted absolute-residual loss.
#[derive(Debug, Clone)]
pub struct FusedLoss<T> {
    pub loss: f64,
    pub grad_p: Tensor<T>,
    pub grad_q: Tensor<T>,
    pub grad_alpha: f64,
    pub grad_beta: f64,
}

pub fn fused_abs<T: Real>(
    p_pred: &Tensor<T>,
    q_pred: &Tensor<T>,
    p_target: &Tensor<T>,
    q_target: &Tensor<T>,
    alpha: f64,
    beta: f64,
) -> Result<FusedLoss<T>, NetError> {
    check(p_pred, p_target)?;
    check(q_pred, q_target)?;
    check(p_pred, q_pred)?;
    let n = p_pred.batch();
    let per = p_pred.per_sample();
    let mut grad_p = Tensor::zeros(p_pred.shape());
    let mut grad_q = Tensor::zeros(q_pred.shape());
    let (mut total, mut ga, mut gb) = (0.0, 0.0, 0.0);
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let mut s = 0.0;
        for j in i * per..(i + 1) * per {
            let dp = (p_pred.data()[j] - p_target.data()[j])
                .to_f64()
                .unwrap_or(f64::NAN);
            let dq = (q_pred.data()[j] - q_target.data()[j])
                .to_f64()
                .unwrap_or(f64::NAN);
            let e = alpha * dp.abs() + beta * dq.abs();
            s += e * e;
            let w = 2.0 * e * inv_n;
            grad_p.data_mut()[j] = T::lit(w * alpha * signum0(dp));
            grad_q.data_mut()[j] = T::lit(w * beta * signum0(dq));
            ga += w * dp.abs();
            gb += w * dq.abs();
        }
        total += s;
    }
    Ok(FusedLoss {
        loss: total / n as f64,
        grad_p,
        grad_q,
        grad_alpha: ga,
        grad_beta: gb,
    })
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss value for `kind`. `FusedAbs` takes two predictions and two targets;
/// the other kinds take one of each.
pub fn loss<T: Real>(
    kind: LossKind,
    preds: &[&Tensor<T>],
    targets: &[&Tensor<T>],
) -> Result<f64, NetError> {
    let arity = if matches!(kind, LossKind::FusedAbs { .. }) {
        2
    } else {
        1
    };
    if preds.len() != arity || targets.len() != arity {
        return Err(NetError::InputCount {
            expected: arity,
            got: preds.len().min(targets.len()),
        });
    }
    match kind {
        LossKind::SumSquared => Ok(sum_squared(preds[0], targets[0])?.0),
        LossKind::Mse => Ok(mse(preds[0], targets[0])?.0),
        LossKind::FusedAbs { alpha, beta } => {
            Ok(fused_abs(preds[0], preds[1], targets[0], targets[1], alpha, beta)?.loss)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Tensor<f64> {
        Tensor::from_fn(&[n, 80, 28], |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_at_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 2);
        for kind in [
            LossKind::SumSquared,
            LossKind::Mse,
            LossKind::FusedAbs {
                alpha: 0.7,
                beta: 1.3,
            },
        ] {
            let (p, t): (Vec<&Tensor<f64>>, Vec<&Tensor<f64>>) = match kind {
                LossKind::FusedAbs { .. } => (vec![&a, &a], vec![&a, &a]),
                _ => (vec![&a], vec![&a]),
            };
            assert_eq!(loss(kind, &p, &t).unwrap(), 0.0);
        }
    }

    #[test]
    fn unit_offset_values() {
        let t = Tensor::<f64>::zeros(&[1, 80, 28]);
        let p = Tensor::<f64>::from_fn(&[1, 80, 28], |_| 1.0);
        assert_eq!(loss(LossKind::SumSquared, &[&p], &[&t]).unwrap(), 2240.0);
        assert_eq!(loss(LossKind::Mse, &[&p], &[&t]).unwrap(), 1.0);
    }

    #[test]
    fn fused_degenerates_to_single_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (p, q, tp, tq) = (
            random(&mut rng, 3),
            random(&mut rng, 3),
            random(&mut rng, 3),
            random(&mut rng, 3),
        );
        let l10 = loss(
            LossKind::FusedAbs {
                alpha: 1.0,
                beta: 0.0,
            },
            &[&p, &q],
            &[&tp, &tq],
        )
        .unwrap();
        let l01 = loss(
            LossKind::FusedAbs {
                alpha: 0.0,
                beta: 1.0,
            },
            &[&p, &q],
            &[&tp, &tq],
        )
        .unwrap();
        assert_eq!(l10, loss(LossKind::SumSquared, &[&p], &[&tp]).unwrap());
        assert_eq!(l01, loss(LossKind::SumSquared, &[&q], &[&tq]).unwrap());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, q, tp, tq) = (
            random(&mut rng, 2),
            random(&mut rng, 2),
            random(&mut rng, 2),
            random(&mut rng, 2),
        );
        let h = 1e-6;
        let (_, g) = mse(&p, &tp).unwrap();
        let f = fused_abs(&p, &q, &tp, &tq, 0.8, 1.1).unwrap();
        for j in [0usize, 999, 4479] {
            let mut pp = p.clone();
            pp.data_mut()[j] += h;
            let mut pm = p.clone();
            pm.data_mut()[j] -= h;
            let fd = (mse(&pp, &tp).unwrap().0 - mse(&pm, &tp).unwrap().0) / (2.0 * h);
            assert!((fd - g.data()[j]).abs() < 1e-8);
            let fd = (fused_abs(&pp, &q, &tp, &tq, 0.8, 1.1).unwrap().loss
                - fused_abs(&pm, &q, &tp, &tq, 0.8, 1.1).unwrap().loss)
                / (2.0 * h);
            assert!((fd - f.grad_p.data()[j]).abs() < 1e-6 * fd.abs().max(1.0));
        }
        let fd = (fused_abs(&p, &q, &tp, &tq, 0.8 + h, 1.1).unwrap().loss
            - fused_abs(&p, &q, &tp, &tq, 0.8 - h, 1.1).unwrap().loss)
            / (2.0 * h);
        assert!((fd - f.grad_alpha).abs() < 1e-6 * fd.abs());
    }

    #[test]
    fn non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let (a, b) = (random(&mut rng, 1), random(&mut rng, 1));
            assert!(loss(LossKind::Mse, &[&a], &[&b]).unwrap() >= 0.0);
            assert!(
                loss(
                    LossKind::FusedAbs {
                        alpha: 0.5,
                        beta: 0.5
                    },
                    &[&a, &b],
                    &[&b, &a]
                )
                .unwrap()
                    >= 0.0
            );
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f64>::zeros(&[1, 80, 28]);
        let b = Tensor::<f64>::zeros(&[2, 80, 28]);
        assert!(matches!(
            loss(LossKind::Mse, &[&a], &[&b]),
            Err(NetError::ShapeMismatch { .. })
        ));
    }
}
