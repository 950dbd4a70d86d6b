//! Versioned line-based checkpoint: config, vocabulary, and all parameter
//! groups as JSON. Doubles round-trip exactly through serde_json's shortest
//! representation, so a reloaded model is bit-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::net::Model;
use super::params::ModelParams;
use super::vocab::Vocab;
use super::ModelConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: ModelConfig,
    vocab: Vocab,
    params: ModelParams,
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: model.cfg.clone(),
        vocab: model.vocab.clone(),
        params: model.params.clone(),
    };
    let json = serde_json::to_string(&ck)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ck: Checkpoint = serde_json::from_str(&raw)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::validation(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    ck.vocab.rebuild_index();
    let expected = super::params::init_params(&ck.config, ck.vocab.len())?;
    for (a, b) in expected.groups.iter().zip(&ck.params.groups) {
        if a.name != b.name || a.tensors.len() != b.tensors.len() {
            return Err(Error::validation(format!(
                "checkpoint group {} does not match the config layout",
                b.name
            )));
        }
        for (ta, tb) in a.tensors.iter().zip(&b.tensors) {
            if ta.rows != tb.rows || ta.cols != tb.cols {
                return Err(Error::validation(format!(
                    "checkpoint tensor {}/{} has shape {}x{}, config expects {}x{}",
                    b.name, tb.name, tb.rows, tb.cols, ta.rows, ta.cols
                )));
            }
        }
    }
    Model::from_parts(ck.config, ck.vocab, ck.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axis::AxisSpec;
    use crate::model::vocab::Vocab;
    use crate::model::ModelConfig;
    use crate::overlay::OverlayConfig;
    use crate::raster::{Raster, Space};

    fn cfg() -> ModelConfig {
        ModelConfig {
            image_side: 16,
            patch: 8,
            dim: 16,
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 2,
            k_queries: 2,
            overlay: OverlayConfig {
                alpha: 0.95,
                mask_width: 2,
            },
            axis: AxisSpec {
                canvas: 64,
                font_size: 5,
                unit_scale: 0.5,
                ..AxisSpec::default()
            },
            ..ModelConfig::default()
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let vocab = Vocab::build(["the red box"].into_iter());
        let model = Model::new(cfg(), vocab).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.cfg, model.cfg);

        // Same generation behavior after reload.
        let mut img = Raster::new(16, 16, 3, Space::Pixel01);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i % 7) as f64 / 7.0;
        }
        let q = model.vocab.tokenize("the red");
        assert_eq!(
            model.generate(&img, &q, 5).unwrap(),
            loaded.generate(&img, &q, 5).unwrap()
        );
    }

    #[test]
    fn version_mismatch_rejected() {
        let vocab = Vocab::build(["x"].into_iter());
        let model = Model::new(cfg(), vocab).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\":1", "\"version\":99");
        std::fs::write(&path, text).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
