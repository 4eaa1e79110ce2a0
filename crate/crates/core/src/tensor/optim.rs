//! Adam with bias correction.

use super::{Real, TensorError, WeightStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Applies one Adam update (step `step`, counted from 1) in place and clears
/// the consumed gradients. Nothing is modified if any gradient is missing.
pub fn adam_step<T: Real>(store: &mut WeightStore<T>, cfg: &AdamConfig, step: u64) -> Result<(), TensorError> {
    if step == 0 {
        return Err(TensorError::InvalidArgument {
            op: "adam_step",
            detail: "step counts from 1".into(),
        });
    }
    if let Some((name, _)) = store.iter().find(|(_, p)| p.grad().is_none()) {
        return Err(TensorError::MissingGrad(name.to_owned()));
    }
    let t = step as i32;
    let c1 = T::lit(1.0 / (1.0 - cfg.beta1.powi(t)));
    let c2 = T::lit(1.0 / (1.0 - cfg.beta2.powi(t)));
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    let names: Vec<String> = store.names().map(str::to_owned).collect();
    for name in names {
        let grad = store.get_mut(&name).and_then(|p| p.take_grad()).expect("checked above");
        let update: Vec<T> = {
            let m = store.moments_mut(&name);
            grad.iter()
                .enumerate()
                .map(|(i, &g)| {
                    m.first[i] = b1 * m.first[i] + (T::one() - b1) * g;
                    m.second[i] = b2 * m.second[i] + (T::one() - b2) * g * g;
                    let m_hat = m.first[i] * c1;
                    let v_hat = m.second[i] * c2;
                    lr * m_hat / (v_hat.sqrt() + eps)
                })
                .collect()
        };
        let param = store.get_mut(&name).expect("name from store");
        param.data_mut().iter_mut().zip(update).for_each(|(p, u)| *p -= u);
    }
    store.set_step(step);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store_with_grad(value: f64, grad: f64) -> WeightStore<f64> {
        let mut s = WeightStore::new("");
        s.insert("p", Tensor::from_f64(&[1], &[value]).unwrap()).unwrap();
        s.get_mut("p").unwrap().set_grad(Some(vec![grad]));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store_with_grad(0.75, 0.0);
        adam_step(&mut s, &AdamConfig::default(), 1).unwrap();
        assert_eq!(s.get("p").unwrap().data(), &[0.75]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // t = 1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
        for g in [3.0, -0.02] {
            let mut s = store_with_grad(1.0, g);
            let cfg = AdamConfig::with_lr(1e-3);
            adam_step(&mut s, &cfg, 1).unwrap();
            let moved = 1.0 - s.get("p").unwrap().data()[0];
            let expected = 1e-3 * g / (g.abs() + 1e-8);
            assert!((moved - expected).abs() < 1e-15, "{moved} vs {expected}");
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = store_with_grad(1.0, 1.0);
        s.insert("q", Tensor::zeros(&[1]).unwrap()).unwrap();
        assert_eq!(
            adam_step(&mut s, &AdamConfig::default(), 1),
            Err(TensorError::MissingGrad("q".into()))
        );
        assert_eq!(s.get("p").unwrap().data(), &[1.0]);
        assert!(adam_step(&mut s, &AdamConfig::default(), 0).is_err());
    }

    #[test]
    fn moments_persist_between_steps() {
        let mut s = store_with_grad(0.0, 1.0);
        adam_step(&mut s, &AdamConfig::default(), 1).unwrap();
        assert!((s.moments("p").unwrap().first[0] - 0.1).abs() < 1e-15);
        s.get_mut("p").unwrap().set_grad(Some(vec![1.0]));
        adam_step(&mut s, &AdamConfig::default(), 2).unwrap();
        assert!((s.moments("p").unwrap().first[0] - 0.19).abs() < 1e-15);
        assert_eq!(s.step(), 2);
    }
}
