use super::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: &[&[usize]]) -> Self {
        Self {
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> AdamState<U> {
        AdamState {
            step: self.step,
            m: self.m.iter().map(Tensor::cast).collect(),
            v: self.v.iter().map(Tensor::cast).collect(),
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>], cfg: &AdamConfig) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(cfg.beta1);
        let b2 = T::lit(cfg.beta2);
        let c1 = T::lit(1.0 - cfg.beta1.powi(t));
        let c2 = T::lit(1.0 - cfg.beta2.powi(t));
        let lr = T::lit(cfg.learning_rate);
        let eps = T::lit(cfg.eps);
        let one = T::one();
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::<f64>::from_fn(&[3], |i| i as f64);
        let g = Tensor::<f64>::from_fn(&[3], |i| [2.0, -0.5, 0.0][i]);
        let mut st = AdamState::new(&[&[3]]);
        st.update(vec![&mut p], &[g], &AdamConfig::default());
        assert!((p.data()[0] - (0.0 - 1e-4)).abs() < 1e-10);
        assert!((p.data()[1] - (1.0 + 1e-4)).abs() < 1e-10);
        assert_eq!(p.data()[2], 2.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Tensor::<f64>::from_fn(&[1], |_| 3.0);
        let mut st = AdamState::new(&[&[1]]);
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        for _ in 0..2000 {
            let g = Tensor::from_fn(&[1], |_| 2.0 * (p.data()[0] - 1.0));
            st.update(vec![&mut p], &[g], &cfg);
        }
        assert!((p.data()[0] - 1.0).abs() < 1e-3);
    }
}
