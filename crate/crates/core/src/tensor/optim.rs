use serde::{Deserialize, Serialize};

use super::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

/// One SGD step with momentum and coupled L2 weight decay:
/// `g' = g + wd * w`, `buf = momentum * buf + g'`, `w -= lr * buf`.
/// Gradients are zeroed afterwards.
pub fn sgd_step(store: &mut ParamStore, cfg: &SgdConfig) {
    for p in store.params_mut() {
        let w = p.value.data_mut();
        let g = p.grad.data_mut();
        let buf = p.momentum.data_mut();
        for i in 0..w.len() {
            let gi = g[i] + cfg.weight_decay * w[i];
            buf[i] = cfg.momentum * buf[i] + gi;
            w[i] -= cfg.lr * buf[i];
            g[i] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        s.get_mut(id).grad = Tensor::new(&[3], vec![0.1, 0.2, -0.3]).unwrap();
        s
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut s = store();
        let before = s.value(crate::tensor::ParamId(0)).clone();
        sgd_step(&mut s, &SgdConfig { lr: 0.0, ..Default::default() });
        assert_eq!(s.value(crate::tensor::ParamId(0)), &before);
    }

    #[test]
    fn plain_gradient_descent() {
        let mut s = store();
        sgd_step(
            &mut s,
            &SgdConfig {
                lr: 0.5,
                momentum: 0.0,
                weight_decay: 0.0,
            },
        );
        let want = [1.0 - 0.05, -2.0 - 0.1, 0.5 + 0.15];
        for (a, b) in s.value(crate::tensor::ParamId(0)).data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(s.grad(crate::tensor::ParamId(0)).data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn momentum_accumulates() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::new(&[1], vec![0.0]).unwrap());
        let cfg = SgdConfig {
            lr: 1.0,
            momentum: 0.9,
            weight_decay: 0.0,
        };
        for _ in 0..2 {
            s.get_mut(id).grad = Tensor::new(&[1], vec![1.0]).unwrap();
            sgd_step(&mut s, &cfg);
        }
        // steps of 1 and 1.9
        assert!((s.value(id).data()[0] + 2.9).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks_with_zero_grad() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::new(&[2], vec![3.0, -4.0]).unwrap());
        let before = s.sq_norm();
        sgd_step(&mut s, &SgdConfig::default());
        assert!(s.sq_norm() < before);
        assert!(s.value(id).data()[0] > 0.0);
    }
}
