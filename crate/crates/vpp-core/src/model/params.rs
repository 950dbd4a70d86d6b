//! Trainable values partitioned into six named groups. Each group owns its
//! freeze flag and learning rate; each is initialized from its own seeded
//! stream, so toggling one component never perturbs another group's init.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::axis::AxisSpec;
use crate::overlay::init_global_vpp;
use crate::raster::{interpolate_to, PreprocessConfig};
use crate::Result;

use super::ModelConfig;

pub const GROUP_NAMES: [&str; 6] = [
    "global_vpp",
    "encoder",
    "local_vpp",
    "projector_g",
    "projector_l",
    "decoder",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupId {
    GlobalVpp = 0,
    Encoder = 1,
    LocalVpp = 2,
    ProjectorG = 3,
    ProjectorL = 4,
    Decoder = 5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub frozen: bool,
    pub lr: f64,
    pub tensors: Vec<ParamTensor>,
}

impl ParamGroup {
    pub fn tensor(&self, name: &str) -> &ParamTensor {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .unwrap_or_else(|| panic!("no tensor {name:?} in group {}", self.name))
    }

    pub fn tensor_index(&self, name: &str) -> usize {
        self.tensors
            .iter()
            .position(|t| t.name == name)
            .unwrap_or_else(|| panic!("no tensor {name:?} in group {}", self.name))
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub groups: Vec<ParamGroup>,
}

impl ModelParams {
    pub fn group(&self, id: GroupId) -> &ParamGroup {
        &self.groups[id as usize]
    }

    pub fn group_mut(&mut self, id: GroupId) -> &mut ParamGroup {
        &mut self.groups[id as usize]
    }

    pub fn n_values(&self) -> usize {
        self.groups.iter().map(|g| g.n_values()).sum()
    }

    /// Name of the first group holding a non-finite value, if any.
    pub fn first_non_finite_group(&self) -> Option<&str> {
        self.groups
            .iter()
            .find(|g| g.tensors.iter().any(|t| t.data.iter().any(|v| !v.is_finite())))
            .map(|g| g.name.as_str())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

struct GroupBuilder {
    rng: ChaCha8Rng,
    tensors: Vec<ParamTensor>,
}

impl GroupBuilder {
    fn new(seed: u64, group_idx: usize) -> Self {
        GroupBuilder {
            rng: ChaCha8Rng::seed_from_u64(splitmix64(seed ^ (group_idx as u64 + 1) * 0xA5A5_A5A5)),
            tensors: Vec::new(),
        }
    }

    fn normal(&mut self, name: &str, rows: usize, cols: usize, std: f64) {
        // Box-Muller keeps us off extra dependencies and is plenty here.
        let n = rows * cols;
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1: f64 = self.rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = self.rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            data.push(r * theta.cos() * std);
            if data.len() < n {
                data.push(r * theta.sin() * std);
            }
        }
        self.tensors.push(ParamTensor {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
    }

    fn constant(&mut self, name: &str, rows: usize, cols: usize, v: f64) {
        self.tensors.push(ParamTensor {
            name: name.to_string(),
            rows,
            cols,
            data: vec![v; rows * cols],
        });
    }

    fn explicit(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) {
        assert_eq!(data.len(), rows * cols);
        self.tensors.push(ParamTensor {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
    }

    fn attention_block(&mut self, prefix: &str, dim: usize, std: f64) {
        self.constant(&format!("{prefix}.ln1_g"), 1, dim, 1.0);
        self.constant(&format!("{prefix}.ln1_b"), 1, dim, 0.0);
        for w in ["wq", "wk", "wv", "wo"] {
            self.normal(&format!("{prefix}.{w}"), dim, dim, std);
        }
        for b in ["bq", "bk", "bv", "bo"] {
            self.constant(&format!("{prefix}.{b}"), 1, dim, 0.0);
        }
        self.constant(&format!("{prefix}.ln2_g"), 1, dim, 1.0);
        self.constant(&format!("{prefix}.ln2_b"), 1, dim, 0.0);
        self.normal(&format!("{prefix}.w1"), dim, 4 * dim, std);
        self.constant(&format!("{prefix}.b1"), 1, 4 * dim, 0.0);
        self.normal(&format!("{prefix}.w2"), 4 * dim, dim, std);
        self.constant(&format!("{prefix}.b2"), 1, dim, 0.0);
    }
}

/// Initializes all six parameter groups for a config and vocabulary size.
/// The prompt values come from the rendered axis image pushed through the
/// preprocessing transform, not from the random stream.
pub fn init_params(cfg: &ModelConfig, vocab_size: usize) -> Result<ModelParams> {
    cfg.validate()?;
    let d = cfg.dim;
    let grid = cfg.grid();
    let patch_dim = cfg.patch * cfg.patch * 3;
    // Width-scaled init keeps pre-norm activations O(1) at small dims.
    let std = 1.0 / (d as f64).sqrt();
    let seed = cfg.seed;

    // Group 0: the prompt parameter, initialized from the axis rendering.
    let delta = prompt_init(&cfg.axis, &cfg.preprocess_config(), cfg.image_side)?;
    let mut g0 = GroupBuilder::new(seed, 0);
    g0.explicit("values", cfg.image_side * cfg.image_side, 3, delta);

    let mut g1 = GroupBuilder::new(seed, 1);
    g1.normal("patch_w", patch_dim, d, std);
    g1.constant("patch_b", 1, d, 0.0);
    // Positions must be separable from content immediately; coordinate
    // decoding leans on them far more than classification would.
    g1.normal("pos_row", grid, d, 0.5);
    g1.normal("pos_col", grid, d, 0.5);
    for l in 0..cfg.encoder_layers {
        g1.attention_block(&format!("e{l}"), d, std);
    }
    g1.constant("lnf_g", 1, d, 1.0);
    g1.constant("lnf_b", 1, d, 0.0);

    let mut g2 = GroupBuilder::new(seed, 2);
    g2.normal("queries", cfg.k_queries.max(1), d, std);
    g2.normal("trunk_w", patch_dim, d, std);
    g2.constant("trunk_b", 1, d, 0.0);
    g2.normal("tpos_row", grid, d, 0.5);
    g2.normal("tpos_col", grid, d, 0.5);
    for l in 0..cfg.decoder_layers {
        g2.attention_block(&format!("l{l}"), d, std);
        g2.constant(&format!("l{l}.lnkv_g"), 1, d, 1.0);
        g2.constant(&format!("l{l}.lnkv_b"), 1, d, 0.0);
    }
    g2.constant("lnf_g", 1, d, 1.0);
    g2.constant("lnf_b", 1, d, 0.0);

    let mut g3 = GroupBuilder::new(seed, 3);
    g3.normal("w1", d, d, std);
    g3.constant("b1", 1, d, 0.0);
    g3.normal("w2", d, d, std);
    g3.constant("b2", 1, d, 0.0);

    // Fusion cross-attention weights live with the local projector: both map
    // local features into the space the decoder consumes, and they train at
    // the same rate.
    let mut g4 = GroupBuilder::new(seed, 4);
    g4.normal("w1", d, d, std);
    g4.constant("b1", 1, d, 0.0);
    g4.normal("w2", d, d, std);
    g4.constant("b2", 1, d, 0.0);
    for w in ["fus_wq", "fus_wk", "fus_wv", "fus_wo"] {
        g4.normal(w, d, d, std);
    }
    for b in ["fus_bq", "fus_bk", "fus_bv", "fus_bo"] {
        g4.constant(b, 1, d, 0.0);
    }

    let mut g5 = GroupBuilder::new(seed, 5);
    g5.normal("tok", vocab_size, d, std);
    g5.normal("pos", cfg.max_text_len, d, std);
    for l in 0..cfg.decoder_layers {
        g5.attention_block(&format!("d{l}"), d, std);
    }
    g5.constant("lnf_g", 1, d, 1.0);
    g5.constant("lnf_b", 1, d, 0.0);
    g5.normal("out_w", d, vocab_size, std);
    g5.constant("out_b", 1, vocab_size, 0.0);

    let builders = [g0, g1, g2, g3, g4, g5];
    let groups = builders
        .into_iter()
        .enumerate()
        .map(|(i, b)| ParamGroup {
            name: GROUP_NAMES[i].to_string(),
            frozen: cfg.frozen[i],
            lr: cfg.group_lr[i],
            tensors: b.tensors,
        })
        .collect();
    Ok(ModelParams { groups })
}

/// Axis rendering preprocessed to the model's input side, flattened
/// (pixel-major, channel-minor).
fn prompt_init(axis: &AxisSpec, pcfg: &PreprocessConfig, image_side: usize) -> Result<Vec<f64>> {
    let vpp = init_global_vpp(axis, pcfg)?;
    let at_side = if vpp.values.height == image_side {
        vpp.values
    } else {
        interpolate_to(&vpp.values, image_side)?
    };
    Ok(at_side.data)
}

/// Gradient buffers shaped like the parameter set.
pub fn zero_grads(params: &ModelParams) -> Vec<Vec<Vec<f64>>> {
    params
        .groups
        .iter()
        .map(|g| g.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            image_side: 16,
            patch: 8,
            dim: 16,
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 2,
            k_queries: 2,
            max_text_len: 32,
            axis: AxisSpec {
                canvas: 64,
                font_size: 5,
                unit_scale: 0.5,
                ..AxisSpec::default()
            },
            overlay: crate::overlay::OverlayConfig {
                alpha: 0.95,
                mask_width: 2,
            },
            ..ModelConfig::default()
        }
    }

    #[test]
    fn groups_are_named_and_ordered() {
        let p = init_params(&small_cfg(), 120).unwrap();
        let names: Vec<&str> = p.groups.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, GROUP_NAMES);
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(&small_cfg(), 120).unwrap();
        let b = init_params(&small_cfg(), 120).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn group_inits_independent_of_each_other() {
        // Changing the vocabulary (decoder shape) must not move encoder
        // values; per-group streams are independent.
        let a = init_params(&small_cfg(), 120).unwrap();
        let b = init_params(&small_cfg(), 140).unwrap();
        assert_eq!(
            a.group(GroupId::Encoder).tensors,
            b.group(GroupId::Encoder).tensors
        );
        assert_eq!(
            a.group(GroupId::LocalVpp).tensors,
            b.group(GroupId::LocalVpp).tensors
        );
    }

    #[test]
    fn prompt_group_comes_from_axis_rendering() {
        let p = init_params(&small_cfg(), 120).unwrap();
        let t = p.group(GroupId::GlobalVpp).tensor("values");
        assert_eq!(t.rows, 16 * 16);
        assert_eq!(t.cols, 3);
        // Standardized bi-level-ish content, not 0.02-std noise.
        let max = t.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max > 0.5);
    }

    #[test]
    fn seed_changes_all_random_groups() {
        let a = init_params(&small_cfg(), 120).unwrap();
        let mut cfg = small_cfg();
        cfg.seed = 9;
        let b = init_params(&cfg, 120).unwrap();
        assert_ne!(
            a.group(GroupId::Encoder).tensor("patch_w").data,
            b.group(GroupId::Encoder).tensor("patch_w").data
        );
        // The prompt init carries no randomness.
        assert_eq!(
            a.group(GroupId::GlobalVpp).tensor("values").data,
            b.group(GroupId::GlobalVpp).tensor("values").data
        );
    }
}
