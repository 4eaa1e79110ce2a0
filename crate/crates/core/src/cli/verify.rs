//! The gradient suite behind `hdrfeat gradcheck`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::{
    build_network, init_weights, network::residual_attention, AttentionMode, HdrFeatConfig, ModelError,
};
use crate::tensor::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
use crate::tensor::{Bindings, Conv2dParams, Graph, PoolAxis, PoolMode, Tensor, TensorError, Var};
use crate::train::{tonemapped_l1, DEFAULT_MU};

pub const KERNEL_TOLERANCE: f64 = 1e-6;
pub const ATTENTION_TOLERANCE: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub report: GradCheckReport,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }

    pub fn summary(&self) -> String {
        format!(
            "{:<28} max_rel={:.3e} tol={:.0e} checked={} kinks={}{}",
            self.name,
            self.report.max_rel_error,
            self.report.tolerance,
            self.report.checked,
            self.report.skipped_kinks,
            self.report
                .worst
                .as_ref()
                .map(|w| format!(" worst={}[{}]", w.tensor, w.index))
                .unwrap_or_default(),
        )
    }
}

type Inputs = Vec<(String, Tensor<f64>)>;
type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>>;

struct Gen(ChaCha8Rng);

impl Gen {
    fn normal(&mut self, name: &str, shape: &[usize], grad: bool) -> (String, Tensor<f64>) {
        let n = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| self.0.sample(StandardNormal)).collect();
        (
            name.into(),
            Tensor::new(shape, data).expect("shape").with_requires_grad(grad),
        )
    }

    fn uniform(&mut self, name: &str, shape: &[usize], lo: f64, hi: f64, grad: bool) -> (String, Tensor<f64>) {
        let n = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| self.0.random_range(lo..hi)).collect();
        (
            name.into(),
            Tensor::new(shape, data).expect("shape").with_requires_grad(grad),
        )
    }
}

/// `sum(y * r)` for the last input `r`, so every output element carries a
/// distinct weight.
fn weighted(g: &mut Graph<f64>, y: Var, r: Var) -> Result<Var, TensorError> {
    let p = g.mul(y, r)?;
    g.sum(p)
}

fn kernel_cases(rng: &mut Gen) -> Vec<(&'static str, Inputs, Build)> {
    let mut cases: Vec<(&'static str, Inputs, Build)> = Vec::new();
    let mut conv = |name, c: usize, o: usize, k: usize, dil: usize, hw: usize, rng: &mut Gen| {
        let p = Conv2dParams::same(k, dil);
        let inputs = vec![
            rng.normal("x", &[2, c, hw, hw], true),
            rng.normal("w", &[o, c, k, k], true),
            rng.normal("b", &[o], true),
            rng.normal("r", &[2, o, hw, hw], false),
        ];
        let build: Build = Box::new(move |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), p)?;
            weighted(g, y, v[3])
        });
        cases.push((name, inputs, build));
    };
    conv("conv2d 1x1", 3, 2, 1, 1, 4, rng);
    conv("conv2d 3x3", 2, 3, 3, 1, 5, rng);
    conv("conv2d 3x3 dilation 2", 2, 2, 3, 2, 6, rng);
    conv("conv2d 7x7", 2, 1, 7, 1, 6, rng);

    for (name, mode, axis, out) in [
        ("pool avg spatial", PoolMode::Avg, PoolAxis::Spatial, [2, 3, 1, 1]),
        ("pool max spatial", PoolMode::Max, PoolAxis::Spatial, [2, 3, 1, 1]),
        ("pool avg channel", PoolMode::Avg, PoolAxis::Channel, [2, 1, 4, 5]),
        ("pool max channel", PoolMode::Max, PoolAxis::Channel, [2, 1, 4, 5]),
    ] {
        let inputs = vec![rng.normal("x", &[2, 3, 4, 5], true), rng.normal("r", &out, false)];
        let build: Build = Box::new(move |g, v| {
            let y = g.pool(v[0], mode, axis)?;
            weighted(g, y, v[1])
        });
        cases.push((name, inputs, build));
    }

    let inputs = vec![
        rng.normal("x", &[1, 2, 8, 7], true),
        rng.normal("r", &[1, 2, 3, 3], false),
    ];
    cases.push((
        "max_pool2d k7 s3 p3",
        inputs,
        Box::new(|g, v| {
            let y = g.max_pool2d(v[0], 7, 3, 3)?;
            weighted(g, y, v[1])
        }),
    ));

    let inputs = vec![
        rng.normal("x", &[1, 2, 3, 3], true),
        rng.normal("r", &[1, 2, 7, 8], false),
    ];
    cases.push((
        "upsample_nearest",
        inputs,
        Box::new(|g, v| {
            let y = g.upsample_nearest(v[0], (7, 8))?;
            weighted(g, y, v[1])
        }),
    ));

    let inputs = vec![
        rng.normal("x", &[3, 4], true),
        rng.normal("w", &[2, 4], true),
        rng.normal("b", &[2], true),
        rng.normal("r", &[3, 2], false),
    ];
    cases.push((
        "linear",
        inputs,
        Box::new(|g, v| {
            let y = g.linear(v[0], v[1], v[2])?;
            weighted(g, y, v[3])
        }),
    ));

    type UnaryFn = fn(&mut Graph<f64>, Var) -> Result<Var, TensorError>;
    let unaries: [(&'static str, UnaryFn, f64, f64); 6] = [
        ("sigmoid", |g, x| g.sigmoid(x), -3.0, 3.0),
        ("relu", |g, x| g.relu(x), -1.0, 1.0),
        ("leaky_relu", |g, x| g.leaky_relu(x, 0.1), -1.0, 1.0),
        ("abs", |g, x| g.abs(x), -1.0, 1.0),
        ("mu_law", |g, x| g.mu_law(x, DEFAULT_MU), 0.05, 0.95),
        ("scale", |g, x| g.scale(x, -2.5), -1.0, 1.0),
    ];
    for (name, f, lo, hi) in unaries {
        let inputs = vec![
            rng.uniform("x", &[2, 2, 3, 3], lo, hi, true),
            rng.normal("r", &[2, 2, 3, 3], false),
        ];
        cases.push((
            name,
            inputs,
            Box::new(move |g, v| {
                let y = f(g, v[0])?;
                weighted(g, y, v[1])
            }),
        ));
    }

    type BinaryFn = fn(&mut Graph<f64>, Var, Var) -> Result<Var, TensorError>;
    let binaries: [(&'static str, BinaryFn, [usize; 4]); 7] = [
        ("add", |g, a, b| g.add(a, b), [2, 3, 4, 4]),
        ("sub", |g, a, b| g.sub(a, b), [2, 3, 4, 4]),
        ("mul", |g, a, b| g.mul(a, b), [2, 3, 4, 4]),
        ("mul broadcast channel", |g, a, b| g.mul(a, b), [2, 3, 1, 1]),
        ("mul broadcast spatial", |g, a, b| g.mul(a, b), [2, 1, 4, 4]),
        ("add broadcast channel", |g, a, b| g.add(a, b), [2, 3, 1, 1]),
        ("add broadcast spatial", |g, a, b| g.add(a, b), [2, 1, 4, 4]),
    ];
    for (name, f, rhs) in binaries {
        let inputs = vec![
            rng.normal("a", &[2, 3, 4, 4], true),
            rng.normal("b", &rhs, true),
            rng.normal("r", &[2, 3, 4, 4], false),
        ];
        cases.push((
            name,
            inputs,
            Box::new(move |g, v| {
                let y = f(g, v[0], v[1])?;
                weighted(g, y, v[2])
            }),
        ));
    }

    let inputs = vec![
        rng.normal("a", &[2, 1, 3, 3], true),
        rng.normal("b", &[2, 3, 3, 3], true),
        rng.normal("r", &[2, 4, 3, 3], false),
    ];
    cases.push((
        "concat",
        inputs,
        Box::new(|g, v| {
            let y = g.concat(&[v[0], v[1]])?;
            weighted(g, y, v[2])
        }),
    ));

    let inputs = vec![
        rng.normal("x", &[2, 5, 3, 3], true),
        rng.normal("r", &[2, 2, 3, 3], false),
    ];
    cases.push((
        "slice_channels",
        inputs,
        Box::new(|g, v| {
            let y = g.slice_channels(v[0], 1, 2)?;
            weighted(g, y, v[1])
        }),
    ));

    let inputs = vec![rng.normal("x", &[2, 3, 1, 1], true), rng.normal("r", &[2, 3], false)];
    cases.push((
        "reshape",
        inputs,
        Box::new(|g, v| {
            let y = g.reshape(v[0], &[2, 3])?;
            weighted(g, y, v[1])
        }),
    ));

    let inputs = vec![rng.normal("x", &[2, 3, 2, 2], true)];
    cases.push((
        "mean",
        inputs,
        Box::new(|g, v| {
            let y = g.sigmoid(v[0])?;
            g.mean(y)
        }),
    ));
    cases
}

/// Every differentiable kernel against central differences.
pub fn kernel_suite(seed: u64) -> Result<Vec<CheckOutcome>, TensorError> {
    let mut rng = Gen(ChaCha8Rng::seed_from_u64(seed));
    let opts = GradCheckOptions::with_tolerance(KERNEL_TOLERANCE);
    kernel_cases(&mut rng)
        .into_iter()
        .map(|(name, inputs, build)| {
            Ok(CheckOutcome {
                name: name.into(),
                report: grad_check(&inputs, build, &opts)?,
            })
        })
        .collect()
}

/// One residual attention block on 2-channel 4x4 features.
pub fn attention_check(mode: AttentionMode, seed: u64) -> Result<CheckOutcome, TensorError> {
    let mut rng = Gen(ChaCha8Rng::seed_from_u64(seed));
    let inputs = vec![
        rng.normal("a.fuse.weight", &[2, 4, 1, 1], true),
        rng.normal("a.fuse.bias", &[2], true),
        rng.normal("a.channel.fc1.weight", &[1, 2], true),
        rng.normal("a.channel.fc1.bias", &[1], true),
        rng.normal("a.channel.fc2.weight", &[2, 1], true),
        rng.normal("a.channel.fc2.bias", &[2], true),
        rng.normal("a.spatial.weight", &[1, 2, 7, 7], true),
        rng.normal("a.spatial.bias", &[1], true),
        rng.normal("f_t", &[1, 2, 4, 4], true),
        rng.normal("f_r", &[1, 2, 4, 4], true),
        rng.normal("r", &[1, 2, 4, 4], false),
    ];
    let names: Vec<String> = inputs.iter().map(|(n, _)| n.clone()).collect();
    let build = move |g: &mut Graph<f64>, v: &[Var]| {
        let p = Bindings::from_pairs(names.iter().cloned().zip(v.iter().copied()));
        let t = residual_attention(g, &p, "a", mode, v[8], v[9])?;
        weighted(g, t.output, v[10])
    };
    Ok(CheckOutcome {
        name: format!("attention {mode}"),
        report: grad_check(&inputs, build, &GradCheckOptions::with_tolerance(ATTENTION_TOLERANCE))?,
    })
}

/// Whole network plus the tone-mapped L1 loss on `size x size` inputs.
/// `max_per_tensor` samples coordinates; `None` checks every parameter.
pub fn model_check(
    cfg: &HdrFeatConfig,
    size: usize,
    max_per_tensor: Option<usize>,
    seed: u64,
) -> Result<CheckOutcome, ModelError> {
    let weights = init_weights::<f64>(cfg, seed)?;
    let mut rng = Gen(ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let mut inputs: Inputs = weights
        .iter()
        .map(|(n, t)| (n.to_owned(), t.clone().with_requires_grad(true)))
        .collect();
    let n_params = inputs.len();
    for name in ["x1", "x2", "x3"] {
        inputs.push(rng.uniform(name, &[1, 6, size, size], 0.0, 1.0, false));
    }
    inputs.push(rng.uniform("target", &[1, 3, size, size], 0.05, 0.95, false));
    let names: Vec<String> = inputs[..n_params].iter().map(|(n, _)| n.clone()).collect();
    let cfg_owned = cfg.clone();
    let build = move |g: &mut Graph<f64>, v: &[Var]| {
        let p = Bindings::from_pairs(names.iter().cloned().zip(v.iter().copied()));
        let x = [v[n_params], v[n_params + 1], v[n_params + 2]];
        let trace = build_network(g, &cfg_owned, &p, x).map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => TensorError::InvalidArgument {
                op: "build_network",
                detail: other.to_string(),
            },
        })?;
        tonemapped_l1(g, trace.output, v[n_params + 3], DEFAULT_MU)
    };
    let opts = GradCheckOptions {
        max_per_tensor,
        seed,
        ..GradCheckOptions::with_tolerance(MODEL_TOLERANCE)
    };
    Ok(CheckOutcome {
        name: format!("model depth {} {}", cfg.depth, cfg.attention),
        report: grad_check(&inputs, build, &opts)?,
    })
}
