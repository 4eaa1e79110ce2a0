use crate::tensor::{Graph, Real, TensorError, Var};

/// Compression constant used for training and tone-mapped metrics.
pub const DEFAULT_MU: f64 = 5000.0;

/// μ-law tone map `log(1 + mu * h) / log(1 + mu)` with `h` clipped to
/// `[0, 1]`. `mu` must be positive.
///
/// ```
/// use hdrfeat::train::mu_law;
/// assert_eq!(mu_law(0.0, 5000.0), 0.0);
/// assert_eq!(mu_law(1.0, 5000.0), 1.0);
/// assert!((mu_law(0.5, 5000.0) - 0.91864).abs() < 1e-5);
/// ```
pub fn mu_law(h: f64, mu: f64) -> f64 {
    assert!(mu > 0.0, "mu must be positive, got {mu}");
    (mu * h.clamp(0.0, 1.0)).ln_1p() / mu.ln_1p()
}

/// Derivative of [`mu_law`] on the open interval `(0, 1)`.
pub fn mu_law_derivative(h: f64, mu: f64) -> f64 {
    mu / ((1.0 + mu * h) * mu.ln_1p())
}

/// Mean absolute difference of the tone-mapped prediction and target.
pub fn tonemapped_l1<T: Real>(g: &mut Graph<T>, pred: Var, target: Var, mu: f64) -> Result<Var, TensorError> {
    if g.shape(pred) != g.shape(target) {
        return Err(TensorError::ShapeMismatch {
            op: "loss",
            lhs: g.shape(pred).to_vec(),
            rhs: g.shape(target).to_vec(),
        });
    }
    let tp = g.mu_law(pred, mu)?;
    let tt = g.mu_law(target, mu)?;
    let d = g.sub(tp, tt)?;
    let a = g.abs(d)?;
    g.mean(a)
}

/// Scalar evaluation of [`tonemapped_l1`] over flat buffers.
pub fn tonemapped_l1_value(pred: &[f32], target: &[f32], mu: f64) -> f64 {
    assert_eq!(pred.len(), target.len(), "loss operands differ in length");
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| (mu_law(p as f64, mu) - mu_law(t as f64, mu)).abs())
        .sum();
    total / pred.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn strictly_increasing_and_clipped() {
        let mut prev = -1.0;
        for i in 0..=100 {
            let v = mu_law(i as f64 / 100.0, DEFAULT_MU);
            assert!(v > prev);
            prev = v;
        }
        assert_eq!(mu_law(-3.0, DEFAULT_MU), 0.0);
        assert_eq!(mu_law(7.0, DEFAULT_MU), 1.0);
    }

    #[test]
    fn derivative_matches_differences() {
        for h in [0.001, 0.1, 0.5, 0.93] {
            let fd = (mu_law(h + 1e-7, DEFAULT_MU) - mu_law(h - 1e-7, DEFAULT_MU)) / 2e-7;
            let an = mu_law_derivative(h, DEFAULT_MU);
            assert!((fd - an).abs() / an < 1e-6, "{h}: {fd} vs {an}");
        }
    }

    #[test]
    fn graph_loss_matches_scalar() {
        let p = [0.1f32, 0.7, 0.0, 1.0];
        let t = [0.3f32, 0.7, 0.5, 0.2];
        let mut g = Graph::<f64>::new();
        let pv = g.input(Tensor::from_f64(&[1, 1, 2, 2], &p.map(f64::from)).unwrap());
        let tv = g.input(Tensor::from_f64(&[1, 1, 2, 2], &t.map(f64::from)).unwrap());
        let l = tonemapped_l1(&mut g, pv, tv, DEFAULT_MU).unwrap();
        let got = g.value(l).item().unwrap();
        assert!((got - tonemapped_l1_value(&p, &t, DEFAULT_MU)).abs() < 1e-7);

        let other = g.input(Tensor::zeros(&[1, 1, 1, 1]).unwrap());
        assert!(tonemapped_l1(&mut g, pv, other, DEFAULT_MU).is_err());
    }
}
