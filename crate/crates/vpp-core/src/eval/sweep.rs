//! Ablation sweep runner: trains one model per (value, seed) cell on the
//! synthetic corpus and scores held-out accuracy. Cells are independent and
//! may run in parallel; results are cached by configuration fingerprint so
//! repeated sweeps reuse finished cells.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{split_by_parity, synth_corpus, InstructionMode, Sample, Split, SynthSceneSpec};
use crate::model::{
    examples_from_pairs, train, vocab_from_examples, Model, ModelConfig, TrainSchedule,
};
use crate::overlay::OverlayConfig;
use crate::raster::Raster;
use crate::{Error, Result};

use super::evaluate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    MaskWidth,
    AxisVariant,
    FontSize,
    Fusion,
    InstructionMode,
    Components,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "mask-width" | "mask_width" => Ok(SweepParam::MaskWidth),
            "axis-variant" | "axis_variant" => Ok(SweepParam::AxisVariant),
            "font-size" | "font_size" => Ok(SweepParam::FontSize),
            "fusion" => Ok(SweepParam::Fusion),
            "instruction" | "instruction_mode" => Ok(SweepParam::InstructionMode),
            "components" => Ok(SweepParam::Components),
            other => Err(Error::contract(format!(
                "unknown sweep parameter {other:?}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::MaskWidth => "mask-width",
            SweepParam::AxisVariant => "axis-variant",
            SweepParam::FontSize => "font-size",
            SweepParam::Fusion => "fusion",
            SweepParam::InstructionMode => "instruction",
            SweepParam::Components => "components",
        }
    }

    /// Default value grid for the parameter.
    pub fn default_values(&self) -> Vec<String> {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        match self {
            SweepParam::Alpha => s(&["0.85", "0.9", "0.95", "1.0"]),
            SweepParam::MaskWidth => s(&["2", "4", "8", "none"]),
            SweepParam::AxisVariant => s(&["default", "internal005", "cross", "external"]),
            SweepParam::FontSize => s(&["5", "10", "15"]),
            SweepParam::Fusion => s(&["concat", "xattn-lq", "xattn-gq"]),
            SweepParam::InstructionMode => s(&["none", "system", "sample"]),
            SweepParam::Components => s(&["none", "global", "local", "both"]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
    /// Training epochs per cell.
    pub epochs: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            param: SweepParam::Components,
            values: Vec::new(),
            seeds: vec![1, 2, 3],
            epochs: 5,
        }
    }
}

/// Everything shared across sweep cells.
#[derive(Debug, Clone)]
pub struct SweepBase {
    pub model: ModelConfig,
    pub synth: SynthSceneSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub batch_size: usize,
    pub threshold: f64,
    pub instruction: InstructionMode,
    /// Split-assignment seed for the corpus shuffle.
    pub split_seed: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for SweepBase {
    fn default() -> Self {
        SweepBase {
            model: ModelConfig::default(),
            synth: SynthSceneSpec::default(),
            n_train: 1000,
            n_test: 200,
            batch_size: 8,
            threshold: 0.5,
            instruction: InstructionMode::None,
            split_seed: 17,
            cache_dir: None,
        }
    }
}

impl SweepBase {
    /// The calibrated desk-scale profile: a 32px scene grid aligned with the
    /// encoder patches, a small model, and a budget that keeps the full
    /// ablation grid within tens of minutes on one core.
    pub fn desk_profile() -> Self {
        let image_side = 32;
        SweepBase {
            model: ModelConfig {
                image_side,
                patch: 8,
                dim: 32,
                encoder_layers: 2,
                decoder_layers: 3,
                heads: 4,
                k_queries: 8,
                overlay: OverlayConfig {
                    alpha: 0.95,
                    mask_width: crate::model::scaled_mask_width(image_side),
                },
                max_text_len: 64,
                group_lr: [5e-3; 6],
                ..ModelConfig::default()
            },
            synth: SynthSceneSpec {
                canvas: image_side,
                min_side_frac: 0.2,
                max_side_frac: 0.55,
                position_grid_px: 8,
                ..SynthSceneSpec::default()
            },
            n_train: 1000,
            n_test: 200,
            batch_size: 2,
            threshold: 0.5,
            instruction: InstructionMode::None,
            split_seed: 17,
            cache_dir: None,
        }
    }
}

/// One trained-and-scored cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: String,
    pub seed: u64,
    pub accuracy: f64,
    pub parse_failures: usize,
    pub epoch_losses: Vec<f64>,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub cells: Vec<SweepCell>,
    pub mean: f64,
    pub spread: f64,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub param: SweepParam,
    pub threshold: f64,
    pub rows: Vec<SweepRow>,
    pub corpus_id: String,
}

impl SweepTable {
    pub fn row(&self, value: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Applies a sweep value to the base config. Returns the per-cell model
/// config and instruction mode.
fn apply_value(
    param: SweepParam,
    value: &str,
    base: &SweepBase,
) -> Result<(ModelConfig, InstructionMode)> {
    let mut cfg = base.model.clone();
    let mut mode = base.instruction;
    let side = cfg.image_side;
    let no_mask = side.div_ceil(2) as u32;
    match param {
        SweepParam::Alpha => {
            let v: f64 = value
                .parse()
                .map_err(|_| Error::contract(format!("bad alpha value {value:?}")))?;
            cfg.overlay.alpha = v;
        }
        SweepParam::MaskWidth => {
            cfg.overlay.mask_width = if value == "none" {
                // No mask: the prompt is visible everywhere.
                no_mask
            } else {
                value
                    .parse()
                    .map_err(|_| Error::contract(format!("bad mask width {value:?}")))?
            };
        }
        SweepParam::AxisVariant => {
            use crate::axis::AxisSpec;
            cfg.axis = match value {
                "default" => AxisSpec::default(),
                "internal005" => AxisSpec::internal_005(),
                // The centered and padded variants run without the border
                // mask, which would otherwise hide their markings.
                "cross" => {
                    cfg.overlay.mask_width = no_mask;
                    AxisSpec::cross_axis()
                }
                "external" => {
                    cfg.overlay.mask_width = no_mask;
                    AxisSpec::external_padded()
                }
                other => {
                    return Err(Error::contract(format!("unknown axis variant {other:?}")))
                }
            };
        }
        SweepParam::FontSize => {
            cfg.axis.font_size = value
                .parse()
                .map_err(|_| Error::contract(format!("bad font size {value:?}")))?;
        }
        SweepParam::Fusion => {
            cfg.fusion = crate::model::Fusion::parse(value)?;
        }
        SweepParam::InstructionMode => {
            mode = match value {
                "none" => InstructionMode::None,
                "system" => InstructionMode::System,
                "sample" | "sample_level" => InstructionMode::SampleLevel,
                other => {
                    return Err(Error::contract(format!(
                        "unknown instruction mode {other:?}"
                    )))
                }
            };
        }
        SweepParam::Components => {
            let (g, l) = match value {
                "none" => (false, false),
                "global" => (true, false),
                "local" => (false, true),
                "both" => (true, true),
                other => {
                    return Err(Error::contract(format!("unknown component set {other:?}")))
                }
            };
            cfg.use_global = g;
            cfg.use_local = l;
        }
    }
    Ok((cfg, mode))
}

/// Guarantees the protocol endpoints are present: the alpha grid includes
/// the no-prompt endpoint 1.0 and the mask grid includes the no-mask
/// endpoint.
fn with_endpoints(param: SweepParam, mut values: Vec<String>) -> Vec<String> {
    match param {
        SweepParam::Alpha => {
            if !values.iter().any(|v| v.parse::<f64>() == Ok(1.0)) {
                values.push("1.0".to_string());
            }
        }
        SweepParam::MaskWidth => {
            if !values.iter().any(|v| v == "none") {
                values.push("none".to_string());
            }
        }
        _ => {}
    }
    values
}

/// Builds the shared corpus: `2 * max(n_train, n_test)` scenes tagged
/// train/test by parity, truncated to the requested split sizes.
pub fn build_corpus(base: &SweepBase) -> Result<(Vec<(Raster, Sample)>, String)> {
    let total = 2 * base.n_train.max(base.n_test);
    let mut pairs = synth_corpus(&base.synth, total)?;
    split_by_parity(&mut pairs, base.split_seed);
    let mut train_kept = 0usize;
    let mut test_kept = 0usize;
    let pairs: Vec<(Raster, Sample)> = pairs
        .into_iter()
        .filter(|(_, s)| match s.split {
            Some(Split::Train) => {
                train_kept += 1;
                train_kept <= base.n_train
            }
            Some(Split::Test) => {
                test_kept += 1;
                test_kept <= base.n_test
            }
            None => false,
        })
        .collect();
    let id = format!(
        "synth(seed={},canvas={},train={},test={})",
        base.synth.seed, base.synth.canvas, base.n_train, base.n_test
    );
    Ok((pairs, id))
}

fn cell_cache_key(cfg: &ModelConfig, mode: InstructionMode, base: &SweepBase, epochs: usize, corpus_id: &str, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(cfg).expect("config serializes"));
    h.update(format!(
        "|{mode:?}|{epochs}|{}|{}|{corpus_id}|{seed}",
        base.batch_size, base.threshold
    ));
    let d = h.finalize();
    d.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

/// Trains and scores one cell.
fn run_cell(
    value: &str,
    seed: u64,
    base: &SweepBase,
    epochs: usize,
    pairs: &[(Raster, Sample)],
    corpus_id: &str,
    param: SweepParam,
) -> Result<SweepCell> {
    let (mut cfg, mode) = apply_value(param, value, base)?;
    cfg.seed = seed;

    let key = cell_cache_key(&cfg, mode, base, epochs, corpus_id, seed);
    if let Some(dir) = &base.cache_dir {
        let path = dir.join(format!("cell-{key}.json"));
        if let Ok(raw) = std::fs::read_to_string(&path) {
            if let Ok(cell) = serde_json::from_str::<SweepCell>(&raw) {
                return Ok(cell);
            }
        }
    }

    let train_examples = examples_from_pairs(pairs, mode, Some(Split::Train));
    let vocab = vocab_from_examples(&train_examples);
    let mut model = Model::new(cfg, vocab)?;
    let stats = train(
        &mut model,
        &train_examples,
        &TrainSchedule {
            epochs,
            batch_size: base.batch_size,
            shuffle_seed: splitmix64(seed),
        },
    )?;
    let report = evaluate(
        &model,
        pairs,
        Some(Split::Test),
        "test",
        base.threshold,
        mode,
        corpus_id,
    )?;
    let cell = SweepCell {
        value: value.to_string(),
        seed,
        accuracy: report.rows[0].accuracy,
        parse_failures: report.rows[0].parse_failures,
        epoch_losses: stats.epoch_losses,
        fingerprint: report.fingerprint,
    };
    if let Some(dir) = &base.cache_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("cell-{key}.json"));
        std::fs::write(&path, serde_json::to_string(&cell)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(cell)
}

/// Runs the full grid. Per-cell failures abort the affected cell but the
/// sweep continues; failed cells are reported with NaN accuracy.
pub fn run_sweep(spec: &SweepSpec, base: &SweepBase) -> Result<SweepTable> {
    if spec.seeds.is_empty() {
        return Err(Error::contract("sweep needs at least one seed".to_string()));
    }
    let values = if spec.values.is_empty() {
        spec.param.default_values()
    } else {
        with_endpoints(spec.param, spec.values.clone())
    };
    // Fail fast on unparseable values before spending training time.
    for v in &values {
        apply_value(spec.param, v, base)?;
    }

    let (pairs, corpus_id) = build_corpus(base)?;

    let jobs: Vec<(usize, String, u64)> = values
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| spec.seeds.iter().map(move |&s| (vi, v.clone(), s)))
        .collect();
    let cells: Vec<(usize, Result<SweepCell>)> = jobs
        .par_iter()
        .map(|(vi, v, s)| {
            (
                *vi,
                run_cell(v, *s, base, spec.epochs, &pairs, &corpus_id, spec.param),
            )
        })
        .collect();

    let mut rows: Vec<SweepRow> = values
        .iter()
        .map(|v| SweepRow {
            value: v.clone(),
            cells: Vec::new(),
            mean: f64::NAN,
            spread: f64::NAN,
        })
        .collect();
    for (vi, cell) in cells {
        match cell {
            Ok(c) => rows[vi].cells.push(c),
            Err(e) => {
                // Record the failure and keep sweeping.
                let value = rows[vi].value.clone();
                rows[vi].cells.push(SweepCell {
                    value,
                    seed: 0,
                    accuracy: f64::NAN,
                    parse_failures: 0,
                    epoch_losses: Vec::new(),
                    fingerprint: format!("failed: {e}"),
                });
            }
        }
    }
    for row in rows.iter_mut() {
        let accs: Vec<f64> = row
            .cells
            .iter()
            .map(|c| c.accuracy)
            .filter(|a| a.is_finite())
            .collect();
        if !accs.is_empty() {
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / accs.len() as f64;
            row.mean = mean;
            row.spread = var.sqrt();
        }
    }
    Ok(SweepTable {
        param: spec.param,
        threshold: base.threshold,
        rows,
        corpus_id,
    })
}
