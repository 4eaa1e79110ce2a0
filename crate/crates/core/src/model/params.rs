use crate::tensor::init::kaiming_normal;
use crate::tensor::{Real, Tensor, WeightStore};

use super::{AttentionMode, HdrFeatConfig, ModelError};

/// One learnable tensor of the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Fan-in for Kaiming initialization; zero for biases.
    pub fan_in: usize,
    /// Component the tensor is counted under.
    pub component: &'static str,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_bias(&self) -> bool {
        self.fan_in == 0
    }
}

fn conv(out: &mut Vec<ParamSpec>, component: &'static str, name: String, oc: usize, ic: usize, k: usize) {
    out.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![oc, ic, k, k],
        fan_in: ic * k * k,
        component,
    });
    out.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![oc],
        fan_in: 0,
        component,
    });
}

fn dense(out: &mut Vec<ParamSpec>, component: &'static str, name: String, o: usize, i: usize) {
    out.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![o, i],
        fan_in: i,
        component,
    });
    out.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![o],
        fan_in: 0,
        component,
    });
}

/// Name prefix of the extractor used for exposure `j` (1-based).
pub fn extractor_prefix(cfg: &HdrFeatConfig, j: usize) -> String {
    if cfg.share_extractor_weights {
        "extract".into()
    } else {
        format!("extract.e{j}")
    }
}

/// Name prefix of the attention block for target exposure `j` (1 or 3).
pub fn attention_prefix(cfg: &HdrFeatConfig, j: usize) -> String {
    if cfg.share_attention_weights {
        "attn".into()
    } else {
        format!("attn.a{j}")
    }
}

/// Every parameter of `cfg` in a fixed order.
pub fn param_specs(cfg: &HdrFeatConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let extractors: &[usize] = if cfg.share_extractor_weights { &[1] } else { &[1, 2, 3] };
    for &j in extractors {
        let prefix = extractor_prefix(cfg, j);
        let mut c_in = 6;
        for (d, &w) in cfg.level_widths().iter().enumerate() {
            conv(&mut out, "extractor", format!("{prefix}.l{}", d + 1), w, c_in, 3);
            c_in = w;
        }
    }

    if cfg.attention != AttentionMode::None {
        let blocks: &[usize] = if cfg.share_attention_weights { &[1] } else { &[1, 3] };
        let (f, hid) = (cfg.fused_width(), cfg.channel_hidden());
        for &j in blocks {
            let prefix = attention_prefix(cfg, j);
            conv(&mut out, "attention", format!("{prefix}.fuse"), f, 2 * cfg.widths[0], 1);
            dense(&mut out, "attention", format!("{prefix}.channel.fc1"), hid, f);
            dense(&mut out, "attention", format!("{prefix}.channel.fc2"), f, hid);
            conv(&mut out, "attention", format!("{prefix}.spatial"), 1, 2, 7);
        }
    }

    let m = cfg.merged_width;
    for d in (1..=cfg.depth).rev() {
        conv(
            &mut out,
            "merge",
            format!("merge.f{d}"),
            m,
            cfg.merge_input_channels(d),
            3,
        );
    }

    let (dw, e) = (cfg.rfdb_distill_width, cfg.esa_width());
    for k in 1..=cfg.rfdb_count {
        let p = format!("rfdb{k}");
        for s in 1..=3 {
            conv(&mut out, "rfdb", format!("{p}.distill{s}"), dw, m, 1);
            conv(&mut out, "rfdb", format!("{p}.refine{s}"), m, m, 3);
        }
        conv(&mut out, "rfdb", format!("{p}.final"), dw, m, 3);
        conv(&mut out, "rfdb", format!("{p}.fuse"), m, 4 * dw, 1);
        conv(&mut out, "rfdb", format!("{p}.esa.reduce"), e, m, 1);
        conv(&mut out, "rfdb", format!("{p}.esa.context"), e, e, 3);
        conv(&mut out, "rfdb", format!("{p}.esa.range"), e, e, 3);
        conv(&mut out, "rfdb", format!("{p}.esa.skip"), e, e, 1);
        conv(&mut out, "rfdb", format!("{p}.esa.restore"), m, e, 1);
    }

    let w1 = cfg.widths[0];
    conv(&mut out, "tail", "tail.fuse".into(), m, cfg.rfdb_count * m, 1);
    conv(&mut out, "tail", "tail.pre_skip".into(), w1, m, 3);
    conv(&mut out, "tail", "tail.post_skip".into(), m, w1, 3);
    conv(&mut out, "tail", "tail.out".into(), 3, m, 3);
    out
}

/// Learnable scalar counts per component, in network order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub components: Vec<(&'static str, usize)>,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.components.iter().map(|(_, n)| n).sum()
    }

    pub fn get(&self, component: &str) -> usize {
        self.components
            .iter()
            .find(|(c, _)| *c == component)
            .map_or(0, |(_, n)| *n)
    }
}

/// Exact learnable-scalar count, broken down by component.
///
/// ```
/// use hdrfeat::model::{param_count, AttentionMode, HdrFeatConfig};
/// let with = param_count(&HdrFeatConfig::reduced());
/// let without = param_count(&HdrFeatConfig::reduced().with_attention(AttentionMode::None));
/// assert_eq!(without.get("attention"), 0);
/// assert_eq!(with.total() - without.total(), with.get("attention"));
/// ```
pub fn param_count(cfg: &HdrFeatConfig) -> ParamCount {
    let mut components: Vec<(&'static str, usize)> = Vec::new();
    for spec in param_specs(cfg) {
        match components.iter_mut().find(|(c, _)| *c == spec.component) {
            Some((_, n)) => *n += spec.numel(),
            None => components.push((spec.component, spec.numel())),
        }
    }
    if cfg.attention == AttentionMode::None {
        components.insert(1, ("attention", 0));
    }
    ParamCount { components }
}

/// Kaiming-initialized weights (zero biases) for `cfg`, deterministic in
/// `seed`.
pub fn init_weights<T: Real>(cfg: &HdrFeatConfig, seed: u64) -> Result<WeightStore<T>, ModelError> {
    cfg.validate()?;
    let mut store = WeightStore::new(cfg.fingerprint());
    for (i, spec) in param_specs(cfg).into_iter().enumerate() {
        let tensor = if spec.is_bias() {
            Tensor::zeros(&spec.shape)?
        } else {
            let tensor_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            kaiming_normal(&spec.shape, spec.fan_in, tensor_seed)?
        };
        store.insert(spec.name, tensor)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        for cfg in [
            HdrFeatConfig::default(),
            HdrFeatConfig {
                share_attention_weights: false,
                share_extractor_weights: false,
                ..HdrFeatConfig::reduced()
            },
        ] {
            let specs = param_specs(&cfg);
            let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            assert_eq!(names.len(), specs.len());
        }
    }

    #[test]
    fn init_matches_specs() {
        let cfg = HdrFeatConfig::reduced();
        let store = init_weights::<f32>(&cfg, 3).unwrap();
        assert_eq!(store.num_scalars(), param_count(&cfg).total());
        assert!(store.get("tail.out.bias").unwrap().data().iter().all(|&b| b == 0.0));
        assert_eq!(store.fingerprint(), cfg.fingerprint());
        let again = init_weights::<f32>(&cfg, 3).unwrap();
        assert!(store.iter().zip(again.iter()).all(|(a, b)| a.1.data() == b.1.data()));
    }
}
