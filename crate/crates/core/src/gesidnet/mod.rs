//! GesIDNet: multi-scale set abstraction over the gesture cloud, two feature
//! levels fused by learned softmax gates, and two classification heads
//! (primary at the low level, auxiliary at the high level).
//!
//! Everything runs on plain slices with hand-derived gradients; the network is
//! small enough that a per-sample forward/backward stays in the millisecond
//! range on one core for the compact configuration.

mod layers;
mod model_file;
mod network;
mod params;
mod sampling;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use model_file::{load_model, load_model_expecting, parse_model, render_model, save_model, MODEL_FORMAT_VERSION};
pub use network::{
    argmax, attention_fuse, backward, forward, global_feature, predict, resize_feature, sa_block_forward, softmax,
    total_loss, Forward, ForwardTrace, FusionTrace, Losses, SaTrace,
};
pub use params::{init_params, ModelParams, ParamBlock};
pub use sampling::{ball_query_group, farthest_point_sample};

/// One grouping scale of a set-abstraction block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    /// Ball radius in meters.
    pub radius: f64,
    /// Points per group.
    pub group_size: usize,
    /// Widths of the shared pointwise MLP.
    pub mlp: Vec<usize>,
}

impl ScaleSpec {
    pub fn new(radius: f64, group_size: usize, mlp: &[usize]) -> Self {
        Self { radius, group_size, mlp: mlp.to_vec() }
    }

    pub fn out_width(&self) -> usize {
        *self.mlp.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SABlockSpec {
    pub centers: usize,
    pub scales: Vec<ScaleSpec>,
}

impl SABlockSpec {
    /// Width of the concatenated multi-scale feature per center.
    pub fn out_width(&self) -> usize {
        self.scales.iter().map(ScaleSpec::out_width).sum()
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = self.centers == 0
            || self.scales.is_empty()
            || self.scales.iter().any(|s| {
                !(s.radius > 0.0) || s.group_size == 0 || s.mlp.is_empty() || s.mlp.contains(&0)
            });
        if bad {
            Err(Error::InvalidConfig(format!("{name}: {self:?}")))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GesIDNetConfig {
    /// Points per input cloud after resampling.
    pub point_count: usize,
    /// 5 for (x, y, z, doppler, intensity), 3 for xyz only.
    pub in_channels: usize,
    pub sa1: SABlockSpec,
    pub sa2: SABlockSpec,
    /// Hidden widths of the per-level global-feature MLPs, before the final
    /// layer of width `level_dims[k]`.
    pub global_hidden: [Vec<usize>; 2],
    pub level_dims: [usize; 2],
    pub head_fc_widths_l1: Vec<usize>,
    pub head_fc_widths_l2: Vec<usize>,
    pub num_classes: usize,
    /// Prepend each center's coordinates to its feature before the
    /// global-feature MLP, so the pooled level feature sees the layout of the
    /// centers and not only their local neighbourhoods.
    #[serde(default)]
    pub global_xyz: bool,
    /// With fusion off the network is a plain two-level extractor classified
    /// by the high-level head alone.
    pub fusion: bool,
}

impl GesIDNetConfig {
    /// Full-size architecture.
    pub fn standard(num_classes: usize) -> Self {
        Self {
            point_count: 256,
            in_channels: 5,
            sa1: SABlockSpec {
                centers: 64,
                scales: vec![ScaleSpec::new(0.2, 16, &[32, 32, 64]), ScaleSpec::new(0.4, 32, &[32, 32, 64])],
            },
            sa2: SABlockSpec {
                centers: 16,
                scales: vec![ScaleSpec::new(0.4, 16, &[64, 64, 128]), ScaleSpec::new(0.8, 32, &[64, 64, 128])],
            },
            global_hidden: [vec![], vec![]],
            level_dims: [256, 512],
            head_fc_widths_l1: vec![128, 64],
            head_fc_widths_l2: vec![128],
            num_classes,
            global_xyz: false,
            fusion: true,
        }
    }

    /// Reduced widths for CPU-only experiments on the synthetic benchmark.
    pub fn compact(num_classes: usize) -> Self {
        Self {
            point_count: 64,
            in_channels: 5,
            sa1: SABlockSpec {
                centers: 16,
                scales: vec![ScaleSpec::new(0.1, 8, &[16, 32]), ScaleSpec::new(0.25, 16, &[16, 32])],
            },
            sa2: SABlockSpec {
                centers: 4,
                scales: vec![ScaleSpec::new(0.25, 4, &[32, 32]), ScaleSpec::new(0.6, 8, &[32, 32])],
            },
            global_hidden: [vec![], vec![]],
            level_dims: [64, 128],
            head_fc_widths_l1: vec![64, 32],
            head_fc_widths_l2: vec![64],
            num_classes,
            global_xyz: false,
            fusion: true,
        }
    }

    /// Smallest configuration that still exercises every block; used for
    /// finite-difference gradient checks.
    pub fn tiny(num_classes: usize) -> Self {
        Self {
            point_count: 8,
            in_channels: 5,
            sa1: SABlockSpec {
                centers: 4,
                scales: vec![ScaleSpec::new(0.3, 3, &[4, 5]), ScaleSpec::new(0.6, 4, &[3])],
            },
            sa2: SABlockSpec {
                centers: 2,
                scales: vec![ScaleSpec::new(0.5, 2, &[4]), ScaleSpec::new(1.0, 3, &[3, 4])],
            },
            global_hidden: [vec![5], vec![]],
            level_dims: [6, 7],
            head_fc_widths_l1: vec![5, 4],
            head_fc_widths_l2: vec![3],
            num_classes,
            global_xyz: false,
            fusion: true,
        }
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.point_count == 0 {
            return Err(Error::InvalidConfig("point_count must be positive".into()));
        }
        if self.in_channels != 3 && self.in_channels != 5 {
            return Err(Error::InvalidConfig(format!("in_channels must be 3 or 5, got {}", self.in_channels)));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!("num_classes must be at least 2, got {}", self.num_classes)));
        }
        self.sa1.validate("sa1")?;
        self.sa2.validate("sa2")?;
        let zero = |v: &[usize]| v.contains(&0);
        if self.level_dims.contains(&0)
            || self.global_hidden.iter().any(|h| zero(h))
            || zero(&self.head_fc_widths_l1)
            || zero(&self.head_fc_widths_l2)
        {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Channels carried per point besides xyz.
    pub fn extra_channels(&self) -> usize {
        self.in_channels - 3
    }
}

impl Default for GesIDNetConfig {
    fn default() -> Self {
        Self::standard(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for c in [GesIDNetConfig::standard(5), GesIDNetConfig::compact(8), GesIDNetConfig::tiny(2)] {
            c.validate().unwrap();
        }
        assert_eq!(GesIDNetConfig::standard(3).sa1.out_width(), 128);
        assert_eq!(GesIDNetConfig::standard(3).sa2.out_width(), 256);
    }

    #[test]
    fn invalid_presets_rejected() {
        assert!(GesIDNetConfig::tiny(1).validate().is_err());
        let mut c = GesIDNetConfig::tiny(2);
        c.in_channels = 4;
        assert!(c.validate().is_err());
        let mut c = GesIDNetConfig::tiny(2);
        c.sa2.scales[0].radius = 0.0;
        assert!(c.validate().is_err());
        let mut c = GesIDNetConfig::tiny(2);
        c.level_dims[1] = 0;
        assert!(c.validate().is_err());
    }
}
