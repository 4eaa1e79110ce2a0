//! Central finite-difference verification of analytic gradients.
//!
//! Always runs in 64-bit precision. Each checked coordinate is perturbed by
//! `+h` and `-h`; when either perturbed evaluation changes a branch decision
//! of a non-smooth op (rectifier sign, max winner, clip) the finite
//! difference straddles a kink and says nothing about the derivative, so the
//! coordinate is counted as skipped instead of compared.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Pass iff the maximum relative error stays below this.
    pub tolerance: f64,
    /// Finite-difference perturbation.
    pub step: f64,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// zero analytically are judged on absolute error `tolerance * floor`.
    pub floor: f64,
    /// Check at most this many coordinates per tensor (seeded sample).
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            step: 1e-5,
            floor: 1e-4,
            max_per_tensor: None,
            seed: 0,
        }
    }
}

impl GradCheckOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst: Option<GradEntry>,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error < self.tolerance
    }

    pub fn worst_tensor(&self) -> Option<&str> {
        self.worst.as_ref().map(|w| w.tensor.as_str())
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

struct Evaluation {
    loss: f64,
    signature: Vec<u64>,
}

/// Compares `build`'s analytic gradients with central differences.
///
/// `inputs` become graph leaves in order; tensors flagged `requires_grad`
/// are checked, the others are held constant. `build` must return a scalar.
pub fn grad_check<F>(
    inputs: &[(String, Tensor<f64>)],
    build: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let evaluate = |tensors: &[Tensor<f64>]| -> Result<Evaluation, TensorError> {
        let mut g = Graph::with_branch_tracking();
        let vars: Vec<Var> = tensors.iter().map(|t| g.input(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        let value = g
            .value(loss)
            .item()
            .ok_or_else(|| TensorError::NonScalarLoss(g.shape(loss).to_vec()))?;
        if !value.is_finite() {
            return Err(TensorError::NonFinite {
                tensor: "loss".into(),
                index: 0,
            });
        }
        Ok(Evaluation {
            loss: value,
            signature: g.branch_signature().unwrap_or_default().to_vec(),
        })
    };

    let mut tensors: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    for ((name, _), t) in inputs.iter().zip(&tensors) {
        if let Some(index) = t.first_non_finite() {
            return Err(TensorError::NonFinite {
                tensor: name.clone(),
                index,
            });
        }
    }

    let mut g = Graph::with_branch_tracking();
    let vars: Vec<Var> = tensors.iter().map(|t| g.input(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let base_signature = g.branch_signature().unwrap_or_default().to_vec();
    g.backward(loss)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
        tolerance: opts.tolerance,
    };
    for (k, (name, _)) in inputs.iter().enumerate() {
        if !tensors[k].requires_grad() {
            continue;
        }
        let numel = tensors[k].numel();
        let analytic = g.grad(vars[k]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; numel]);
        if let Some(index) = analytic.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                tensor: format!("grad of {name}"),
                index,
            });
        }
        let indices: Vec<usize> = match opts.max_per_tensor {
            Some(m) if m < numel => {
                let mut picked = sample(&mut rng, numel, m).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..numel).collect(),
        };
        for index in indices {
            let original = tensors[k].data()[index];
            tensors[k].data_mut()[index] = original + opts.step;
            let plus = evaluate(&tensors)?;
            tensors[k].data_mut()[index] = original - opts.step;
            let minus = evaluate(&tensors)?;
            tensors[k].data_mut()[index] = original;
            if plus.signature != base_signature || minus.signature != base_signature {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * opts.step);
            let rel = relative_error(analytic[index], numeric, opts.floor);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some(GradEntry {
                    tensor: name.clone(),
                    index,
                    analytic: analytic[index],
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(name: &str, shape: &[usize], v: &[f64], grad: bool) -> (String, Tensor<f64>) {
        (
            name.into(),
            Tensor::from_f64(shape, v).unwrap().with_requires_grad(grad),
        )
    }

    #[test]
    fn linear_l1_passes() {
        let inputs = vec![
            named("x", &[2, 3], &[0.3, -1.2, 0.7, 2.0, 0.1, -0.4], false),
            named("w", &[2, 3], &[0.5, -0.25, 1.5, -0.7, 0.9, 0.2], true),
            named("b", &[2], &[0.05, -0.3], true),
        ];
        let report = grad_check(
            &inputs,
            |g, v| {
                let y = g.linear(v[0], v[1], v[2])?;
                let a = g.abs(y)?;
                g.mean(a)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checked, 8);
        assert!(report.max_rel_error < 1e-6);
    }

    #[test]
    fn kink_coordinates_are_skipped() {
        // relu at an exact kink: analytic 0, but the +h side moves the loss
        let inputs = vec![named("x", &[1], &[0.0], true)];
        let report = grad_check(
            &inputs,
            |g, v| {
                let r = g.relu(v[0])?;
                g.sum(r)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(report.skipped_kinks, 1);
        assert!(!report.passed());
    }

    #[test]
    fn non_finite_input_reports_location() {
        let inputs = vec![named("x", &[2], &[1.0, f64::NAN], true)];
        let err = grad_check(&inputs, |g, v| g.sum(v[0]), &GradCheckOptions::default()).unwrap_err();
        assert_eq!(
            err,
            TensorError::NonFinite {
                tensor: "x".into(),
                index: 1
            }
        );
    }

    #[test]
    fn sampling_limits_coordinates() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let inputs = vec![named("x", &[50], &v, true)];
        let opts = GradCheckOptions {
            max_per_tensor: Some(7),
            ..Default::default()
        };
        let report = grad_check(
            &inputs,
            |g, v| {
                let s = g.sigmoid(v[0])?;
                g.sum(s)
            },
            &opts,
        )
        .unwrap();
        assert_eq!(report.checked, 7);
        assert!(report.passed());
    }
}
