use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelError;

/// Slope of the leaky rectifier after extractor, shallow-residual and tail
/// convolutions.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Channel-attention MLP reduction ratio.
pub const CHANNEL_REDUCTION: usize = 16;

/// How the level-1 short and long exposure features are attended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Raw features enter the merge.
    None,
    /// Channel gate, then a spatial gate computed from the channel-gated map.
    Sequential,
    /// Both gates computed from the fused map and applied together.
    Parallel,
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Sequential => "sequential",
            Self::Parallel => "parallel",
        })
    }
}

impl FromStr for AttentionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "sequential" => Ok(Self::Sequential),
            "parallel" => Ok(Self::Parallel),
            other => Err(format!("unknown attention mode {other:?} (none, sequential, parallel)")),
        }
    }
}

/// Network architecture.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdrFeatConfig {
    /// Number of hierarchical feature levels, 1 to 3.
    pub depth: usize,
    pub attention: AttentionMode,
    /// Channel count per level; only the first `depth` entries are used.
    pub widths: Vec<usize>,
    /// Channel count of the merged bottleneck features and the RFDB trunk.
    pub merged_width: usize,
    pub rfdb_count: usize,
    pub rfdb_distill_width: usize,
    /// One attention block serves both short and long exposures.
    pub share_attention_weights: bool,
    /// One extractor serves all three exposures.
    pub share_extractor_weights: bool,
}

impl Default for HdrFeatConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            attention: AttentionMode::Sequential,
            widths: vec![64, 128, 196],
            merged_width: 64,
            rfdb_count: 3,
            rfdb_distill_width: 32,
            share_attention_weights: true,
            share_extractor_weights: true,
        }
    }
}

impl HdrFeatConfig {
    /// Small configuration used for verification and smoke training.
    ///
    /// ```
    /// let cfg = hdrfeat::model::HdrFeatConfig::reduced();
    /// assert_eq!(cfg.widths, [8, 16, 24]);
    /// assert_eq!((cfg.merged_width, cfg.rfdb_distill_width, cfg.rfdb_count), (16, 8, 2));
    /// ```
    pub fn reduced() -> Self {
        Self {
            widths: vec![8, 16, 24],
            merged_width: 16,
            rfdb_count: 2,
            rfdb_distill_width: 8,
            ..Self::default()
        }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_attention(mut self, attention: AttentionMode) -> Self {
        self.attention = attention;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if !(1..=3).contains(&self.depth) {
            return bad(format!("depth must be 1, 2 or 3, got {}", self.depth));
        }
        if self.widths.len() < self.depth {
            return bad(format!(
                "depth {} needs {} widths, got {:?}",
                self.depth, self.depth, self.widths
            ));
        }
        if self.widths.contains(&0) {
            return bad(format!("widths must be positive, got {:?}", self.widths));
        }
        if self.merged_width == 0 || self.rfdb_count == 0 || self.rfdb_distill_width == 0 {
            return bad("merged_width, rfdb_count and rfdb_distill_width must be positive".into());
        }
        if self.rfdb_distill_width > self.merged_width {
            return bad(format!(
                "rfdb_distill_width {} exceeds merged_width {}",
                self.rfdb_distill_width, self.merged_width
            ));
        }
        Ok(())
    }

    /// Widths of the levels in use.
    pub fn level_widths(&self) -> &[usize] {
        &self.widths[..self.depth.min(self.widths.len())]
    }

    /// Channel count of the fused attention map, equal to the level-1 width
    /// so that it can gate the target features.
    pub fn fused_width(&self) -> usize {
        self.widths[0]
    }

    pub fn channel_hidden(&self) -> usize {
        (self.fused_width() / CHANNEL_REDUCTION).max(1)
    }

    pub fn esa_width(&self) -> usize {
        (self.merged_width / 4).max(1)
    }

    /// Input channels of the level-`d` merge convolution (`d` from 1).
    pub fn merge_input_channels(&self, d: usize) -> usize {
        let own = 3 * self.widths[d - 1];
        if d < self.depth {
            own + self.merged_width
        } else {
            own
        }
    }

    /// Line-oriented serialization that identifies the architecture.
    pub fn canonical(&self) -> String {
        let widths: Vec<String> = self.level_widths().iter().map(usize::to_string).collect();
        format!(
            "depth={}\nattention={}\nwidths={}\nmerged_width={}\nrfdb_count={}\nrfdb_distill_width={}\n\
             share_attention_weights={}\nshare_extractor_weights={}\n",
            self.depth,
            self.attention,
            widths.join(","),
            self.merged_width,
            self.rfdb_count,
            self.rfdb_distill_width,
            self.share_attention_weights,
            self.share_extractor_weights,
        )
    }

    pub fn from_canonical(text: &str) -> Result<Self, ModelError> {
        let mut cfg = Self::default();
        let bad = |line: &str| ModelError::InvalidConfig(format!("bad canonical line {line:?}"));
        let mut seen = 0;
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (key, value) = line.split_once('=').ok_or_else(|| bad(line))?;
            let num = || value.parse::<usize>().map_err(|_| bad(line));
            let flag = || value.parse::<bool>().map_err(|_| bad(line));
            match key {
                "depth" => cfg.depth = num()?,
                "attention" => cfg.attention = value.parse().map_err(|_| bad(line))?,
                "widths" => {
                    cfg.widths = value
                        .split(',')
                        .map(|w| w.parse().map_err(|_| bad(line)))
                        .collect::<Result<_, _>>()?
                }
                "merged_width" => cfg.merged_width = num()?,
                "rfdb_count" => cfg.rfdb_count = num()?,
                "rfdb_distill_width" => cfg.rfdb_distill_width = num()?,
                "share_attention_weights" => cfg.share_attention_weights = flag()?,
                "share_extractor_weights" => cfg.share_extractor_weights = flag()?,
                _ => return Err(bad(line)),
            }
            seen += 1;
        }
        if seen != 8 {
            return Err(ModelError::InvalidConfig(format!(
                "canonical config has {seen} of 8 fields"
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip() {
        let cfg = HdrFeatConfig::reduced().with_attention(AttentionMode::Parallel);
        let back = HdrFeatConfig::from_canonical(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
        assert_eq!(cfg.fingerprint().len(), 64);
        assert_ne!(cfg.fingerprint(), HdrFeatConfig::reduced().fingerprint());
    }

    #[test]
    fn unused_widths_do_not_change_fingerprint() {
        let a = HdrFeatConfig::reduced().with_depth(1);
        let mut b = a.clone();
        b.widths = vec![8];
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn validation() {
        assert!(HdrFeatConfig::default().validate().is_ok());
        assert!(HdrFeatConfig::default().with_depth(4).validate().is_err());
        let mut c = HdrFeatConfig::reduced();
        c.rfdb_distill_width = 17;
        assert!(c.validate().is_err());
        c = HdrFeatConfig::reduced();
        c.widths = vec![8, 16];
        assert!(c.validate().is_err());
    }

    #[test]
    fn merge_channel_arithmetic() {
        let cfg = HdrFeatConfig::default();
        assert_eq!([3, 2, 1].map(|d| cfg.merge_input_channels(d)), [588, 448, 256]);
        assert_eq!(cfg.channel_hidden(), 4);
    }
}
