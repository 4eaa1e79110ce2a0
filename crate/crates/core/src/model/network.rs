//! The network as graph-building functions over bound parameters.

use crate::tensor::{Bindings, Conv2dParams, Graph, PoolAxis, PoolMode, Real, TensorError, Var};

use super::params::{attention_prefix, extractor_prefix};
use super::{AttentionMode, HdrFeatConfig, ModelError, LEAKY_SLOPE};

/// Handles of the intermediate values of one attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionTrace {
    /// `F_F`, the 1x1 fusion of reference and target features.
    pub fused: Var,
    /// Channel gate, `N x C x 1 x 1`.
    pub channel_gate: Var,
    /// Spatial gate, `N x 1 x H x W`.
    pub spatial_gate: Var,
    /// `F_S`, the doubly gated map.
    pub gated: Var,
    /// `M = F_T + F_T * F_S`.
    pub output: Var,
}

/// Handles of every stage of one forward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForwardTrace {
    pub inputs: [Var; 3],
    /// `features[d][j]`: level `d + 1` features of exposure `j + 1`.
    pub features: Vec<[Var; 3]>,
    /// Attention for the short and long exposures.
    pub attention: Option<[AttentionTrace; 2]>,
    /// `merge_inputs[d]`: concatenation fed to the level `d + 1` merge.
    pub merge_inputs: Vec<Var>,
    /// `merged[d]`: `F_{d+1}`.
    pub merged: Vec<Var>,
    pub rfdb: Vec<Var>,
    pub output: Var,
}

fn conv<T: Real>(g: &mut Graph<T>, p: &Bindings, name: &str, x: Var, params: Conv2dParams) -> Result<Var, TensorError> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    g.conv2d(x, w, Some(b), params)
}

fn conv_same<T: Real>(g: &mut Graph<T>, p: &Bindings, name: &str, x: Var, k: usize) -> Result<Var, TensorError> {
    conv(g, p, name, x, Conv2dParams::same(k, 1))
}

fn conv_dilated<T: Real>(g: &mut Graph<T>, p: &Bindings, name: &str, x: Var) -> Result<Var, TensorError> {
    conv(g, p, name, x, Conv2dParams::new(2, 2))
}

fn leaky<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var, TensorError> {
    g.leaky_relu(x, LEAKY_SLOPE)
}

/// Per-level features of one exposure.
pub fn extract_features<T: Real>(
    g: &mut Graph<T>,
    cfg: &HdrFeatConfig,
    p: &Bindings,
    x: Var,
    exposure: usize,
) -> Result<Vec<Var>, TensorError> {
    let prefix = extractor_prefix(cfg, exposure);
    let mut cur = x;
    let mut out = Vec::with_capacity(cfg.depth);
    for d in 1..=cfg.depth {
        let y = conv_same(g, p, &format!("{prefix}.l{d}"), cur, 3)?;
        cur = leaky(g, y)?;
        out.push(cur);
    }
    Ok(out)
}

/// `sigmoid(MLP(avgpool(F)) + MLP(maxpool(F)))` with a shared one-hidden-layer
/// rectifier MLP.
pub fn channel_gate<T: Real>(g: &mut Graph<T>, p: &Bindings, prefix: &str, f: Var) -> Result<Var, TensorError> {
    let (n, c, _, _) = g.value(f).dims4("channel_gate")?;
    let fc1 = (
        p.get(&format!("{prefix}.channel.fc1.weight"))?,
        p.get(&format!("{prefix}.channel.fc1.bias"))?,
    );
    let fc2 = (
        p.get(&format!("{prefix}.channel.fc2.weight"))?,
        p.get(&format!("{prefix}.channel.fc2.bias"))?,
    );
    let mlp = |g: &mut Graph<T>, mode| -> Result<Var, TensorError> {
        let pooled = g.pool(f, mode, PoolAxis::Spatial)?;
        let flat = g.reshape(pooled, &[n, c])?;
        let h = g.linear(flat, fc1.0, fc1.1)?;
        let h = g.relu(h)?;
        g.linear(h, fc2.0, fc2.1)
    };
    let avg = mlp(g, PoolMode::Avg)?;
    let max = mlp(g, PoolMode::Max)?;
    let s = g.add(avg, max)?;
    let s = g.reshape(s, &[n, c, 1, 1])?;
    g.sigmoid(s)
}

/// `sigmoid(conv7x7([avg_c(F), max_c(F)]))`.
pub fn spatial_gate<T: Real>(g: &mut Graph<T>, p: &Bindings, prefix: &str, f: Var) -> Result<Var, TensorError> {
    let avg = g.pool(f, PoolMode::Avg, PoolAxis::Channel)?;
    let max = g.pool(f, PoolMode::Max, PoolAxis::Channel)?;
    let both = g.concat(&[avg, max])?;
    let s = conv_same(g, p, &format!("{prefix}.spatial"), both, 7)?;
    g.sigmoid(s)
}

/// Residual attention of target features `f_t` guided by reference `f_r`.
pub fn residual_attention<T: Real>(
    g: &mut Graph<T>,
    p: &Bindings,
    prefix: &str,
    mode: AttentionMode,
    f_t: Var,
    f_r: Var,
) -> Result<AttentionTrace, TensorError> {
    if g.shape(f_t) != g.shape(f_r) {
        return Err(TensorError::ShapeMismatch {
            op: "residual_attention",
            lhs: g.shape(f_t).to_vec(),
            rhs: g.shape(f_r).to_vec(),
        });
    }
    let both = g.concat(&[f_r, f_t])?;
    let fused = conv_same(g, p, &format!("{prefix}.fuse"), both, 1)?;
    let (channel_gate, spatial_gate, gated) = match mode {
        AttentionMode::Parallel => {
            let cg = channel_gate(g, p, prefix, fused)?;
            let sg = spatial_gate(g, p, prefix, fused)?;
            let fc = g.mul(fused, cg)?;
            (cg, sg, g.mul(fc, sg)?)
        }
        _ => {
            let cg = channel_gate(g, p, prefix, fused)?;
            let fc = g.mul(fused, cg)?;
            let sg = spatial_gate(g, p, prefix, fc)?;
            (cg, sg, g.mul(fc, sg)?)
        }
    };
    let modulated = g.mul(f_t, gated)?;
    let output = g.add(f_t, modulated)?;
    Ok(AttentionTrace {
        fused,
        channel_gate,
        spatial_gate,
        gated,
        output,
    })
}

/// Enhanced spatial attention: a gate computed at reduced width from a
/// pooled context, upsampled back and applied to `x`.
fn esa<T: Real>(g: &mut Graph<T>, p: &Bindings, prefix: &str, x: Var) -> Result<Var, TensorError> {
    let (_, _, h, w) = g.value(x).dims4("esa")?;
    let reduced = conv_same(g, p, &format!("{prefix}.reduce"), x, 1)?;
    let context = conv_same(g, p, &format!("{prefix}.context"), reduced, 3)?;
    let pooled = g.max_pool2d(context, 7, 3, 3)?;
    let range = conv_same(g, p, &format!("{prefix}.range"), pooled, 3)?;
    let range = leaky(g, range)?;
    let up = g.upsample_nearest(range, (h, w))?;
    let skip = conv_same(g, p, &format!("{prefix}.skip"), reduced, 1)?;
    let sum = g.add(up, skip)?;
    let restored = conv_same(g, p, &format!("{prefix}.restore"), sum, 1)?;
    let gate = g.sigmoid(restored)?;
    g.mul(x, gate)
}

/// Residual feature distillation block with dilated shallow-residual stages.
pub fn rfdb_forward<T: Real>(g: &mut Graph<T>, p: &Bindings, prefix: &str, x: Var) -> Result<Var, TensorError> {
    let mut distilled = Vec::with_capacity(4);
    let mut coarse = x;
    for s in 1..=3 {
        let d = conv_same(g, p, &format!("{prefix}.distill{s}"), coarse, 1)?;
        distilled.push(leaky(g, d)?);
        let r = conv_dilated(g, p, &format!("{prefix}.refine{s}"), coarse)?;
        let r = g.add(r, coarse)?;
        coarse = leaky(g, r)?;
    }
    let last = conv_dilated(g, p, &format!("{prefix}.final"), coarse)?;
    distilled.push(leaky(g, last)?);
    let cat = g.concat(&distilled)?;
    let fused = conv_same(g, p, &format!("{prefix}.fuse"), cat, 1)?;
    let attended = esa(g, p, &format!("{prefix}.esa"), fused)?;
    g.add(attended, x)
}

/// Top-down bottleneck merge. `level1` holds the three level-1 inputs after
/// any attention.
fn merge_bottlenecks<T: Real>(
    g: &mut Graph<T>,
    cfg: &HdrFeatConfig,
    p: &Bindings,
    features: &[[Var; 3]],
    level1: [Var; 3],
) -> Result<(Vec<Var>, Vec<Var>), TensorError> {
    let mut merged = vec![None; cfg.depth];
    let mut inputs = vec![None; cfg.depth];
    let mut above: Option<Var> = None;
    for d in (1..=cfg.depth).rev() {
        let mut parts = if d == 1 {
            level1.to_vec()
        } else {
            features[d - 1].to_vec()
        };
        parts.extend(above);
        let cat = g.concat(&parts)?;
        let f = conv_same(g, p, &format!("merge.f{d}"), cat, 3)?;
        inputs[d - 1] = Some(cat);
        merged[d - 1] = Some(f);
        above = Some(f);
    }
    Ok((
        merged.into_iter().flatten().collect(),
        inputs.into_iter().flatten().collect(),
    ))
}

/// RFDB trunk, fusion of all block outputs, the long skip from the
/// reference features and the output head.
fn reconstruct<T: Real>(
    g: &mut Graph<T>,
    cfg: &HdrFeatConfig,
    p: &Bindings,
    f1: Var,
    reference: Var,
) -> Result<(Vec<Var>, Var), TensorError> {
    let mut blocks = Vec::with_capacity(cfg.rfdb_count);
    let mut z = f1;
    for k in 1..=cfg.rfdb_count {
        z = rfdb_forward(g, p, &format!("rfdb{k}"), z)?;
        blocks.push(z);
    }
    let cat = g.concat(&blocks)?;
    let t = conv_same(g, p, "tail.fuse", cat, 1)?;
    let t = conv_same(g, p, "tail.pre_skip", t, 3)?;
    let t = g.add(t, reference)?;
    let t = conv_same(g, p, "tail.post_skip", t, 3)?;
    let t = leaky(g, t)?;
    let t = conv_same(g, p, "tail.out", t, 3)?;
    Ok((blocks, g.sigmoid(t)?))
}

/// Builds the whole network on `g` from three `N x 6 x H x W` inputs.
pub fn build_network<T: Real>(
    g: &mut Graph<T>,
    cfg: &HdrFeatConfig,
    p: &Bindings,
    inputs: [Var; 3],
) -> Result<ForwardTrace, ModelError> {
    cfg.validate()?;
    let first = g.shape(inputs[0]).to_vec();
    for &x in &inputs {
        let shape = g.shape(x);
        if shape.len() != 4 || shape[1] != 6 || shape != first.as_slice() {
            return Err(ModelError::InputShape(shape.to_vec()));
        }
    }
    let mut per_exposure = Vec::with_capacity(3);
    for (j, &x) in inputs.iter().enumerate() {
        per_exposure.push(extract_features(g, cfg, p, x, j + 1)?);
    }
    let features: Vec<[Var; 3]> = (0..cfg.depth)
        .map(|d| [per_exposure[0][d], per_exposure[1][d], per_exposure[2][d]])
        .collect();

    let [short, medium, long] = features[0];
    let attention = match cfg.attention {
        AttentionMode::None => None,
        mode => {
            let a1 = residual_attention(g, p, &attention_prefix(cfg, 1), mode, short, medium)?;
            let a3 = residual_attention(g, p, &attention_prefix(cfg, 3), mode, long, medium)?;
            Some([a1, a3])
        }
    };
    let level1 = match &attention {
        Some([a1, a3]) => [a1.output, medium, a3.output],
        None => [short, medium, long],
    };
    let (merged, merge_inputs) = merge_bottlenecks(g, cfg, p, &features, level1)?;
    let (rfdb, output) = reconstruct(g, cfg, p, merged[0], medium)?;
    Ok(ForwardTrace {
        inputs,
        features,
        attention,
        merge_inputs,
        merged,
        rfdb,
        output,
    })
}
