use serde::{Deserialize, Serialize};

use crate::seqio::{GROUP_DIM, NUM_REGIONS, NUM_TYPES, RESIDUE_DIM, SEQ_LEN};

/// Layer widths of the network. [`ModelConfig::default`] is the reference
/// architecture; [`ModelConfig::compact`] keeps the topology at a fraction
/// of the cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub residue_dim: usize,
    pub group_dim: usize,
    pub fc1_units: usize,
    pub cnn_channels: [usize; 2],
    /// Odd kernel widths of the two convolutions.
    pub cnn_kernels: [usize; 2],
    pub lstm1_hidden: usize,
    pub heads: usize,
    pub d_k: usize,
    pub lstm2_hidden: usize,
    /// Hidden widths of the cleavage-site head; the output is always 11.
    pub cs_head_widths: [usize; 2],
    pub type_reduce: usize,
    /// Hidden widths of the external-embedding adapter.
    pub embed_adapter: [usize; 2],
    pub fuse_units: usize,
    pub embedding_dim: usize,
    /// `s` in `softmax(z / s)` over the cosine logits.
    pub logit_scale: f64,
    /// Score written over padded keys before the attention softmax.
    pub attention_mask_fill: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: SEQ_LEN,
            residue_dim: RESIDUE_DIM,
            group_dim: GROUP_DIM,
            fc1_units: 252,
            cnn_channels: [256, 512],
            cnn_kernels: [5, 3],
            lstm1_hidden: 128,
            heads: 2,
            d_k: 128,
            lstm2_hidden: 256,
            cs_head_widths: [512, 256],
            type_reduce: 512,
            embed_adapter: [256, 64],
            fuse_units: 256,
            embedding_dim: 768,
            logit_scale: 0.0625,
            attention_mask_fill: -1e9,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("invalid model config: {0}")]
pub struct ConfigError(pub String);

impl ModelConfig {
    /// Same topology with every width divided by four.
    pub fn compact() -> Self {
        Self {
            fc1_units: 60,
            cnn_channels: [64, 128],
            lstm1_hidden: 32,
            d_k: 32,
            lstm2_hidden: 64,
            cs_head_widths: [128, 64],
            type_reduce: 128,
            embed_adapter: [64, 16],
            fuse_units: 64,
            ..Self::default()
        }
    }

    /// Width of the first encoder output (FC plus group columns).
    pub fn d_model(&self) -> usize {
        self.fc1_units + self.group_dim
    }

    /// Width of the trunk after attention: attention output plus its query.
    pub fn trunk_width(&self) -> usize {
        self.d_model() + 2 * self.lstm1_hidden
    }

    pub fn flatten_width(&self) -> usize {
        self.seq_len * 2 * self.lstm2_hidden
    }

    pub fn num_types(&self) -> usize {
        NUM_TYPES
    }

    pub fn num_regions(&self) -> usize {
        NUM_REGIONS
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        let widths = [
            self.seq_len,
            self.fc1_units,
            self.cnn_channels[0],
            self.cnn_channels[1],
            self.lstm1_hidden,
            self.heads,
            self.d_k,
            self.lstm2_hidden,
            self.cs_head_widths[0],
            self.cs_head_widths[1],
            self.type_reduce,
            self.embed_adapter[0],
            self.embed_adapter[1],
            self.fuse_units,
            self.embedding_dim,
        ];
        if widths.contains(&0) {
            return err("all widths must be positive".into());
        }
        if self.residue_dim != RESIDUE_DIM || self.group_dim != GROUP_DIM {
            return err(format!(
                "input widths are fixed at {RESIDUE_DIM} residues and {GROUP_DIM} groups"
            ));
        }
        if self.cnn_kernels.iter().any(|k| k % 2 == 0) {
            return err(format!("kernel widths must be odd, got {:?}", self.cnn_kernels));
        }
        if self.trunk_width() != self.cnn_channels[1] {
            return err(format!(
                "attention concat width {} must equal the CNN output width {}",
                self.trunk_width(),
                self.cnn_channels[1]
            ));
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return err(format!("logit scale must be positive, got {}", self.logit_scale));
        }
        if !self.attention_mask_fill.is_finite() || self.attention_mask_fill >= 0.0 {
            return err("attention mask fill must be a finite negative number".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_widths_are_consistent() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.d_model(), 256);
        assert_eq!(c.trunk_width(), 512);
        assert_eq!(c.heads * c.d_k, 256);
        assert_eq!(c.type_reduce + c.embed_adapter[1], 576);
        assert_eq!(c.flatten_width(), 35840);
        ModelConfig::compact().validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let c = ModelConfig::compact();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
        let partial: ModelConfig = serde_json::from_str(r#"{"embedding_dim": 32}"#).unwrap();
        assert_eq!(partial.embedding_dim, 32);
        assert_eq!(partial.fc1_units, 252);
    }

    #[test]
    fn mismatched_trunk_is_rejected() {
        let c = ModelConfig {
            lstm1_hidden: 64,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
