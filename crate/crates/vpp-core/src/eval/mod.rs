//! Response parsing and IoU-threshold scoring, plus the ablation sweep
//! runners and table emission.

pub mod report;
pub mod sweep;

use sha2::{Digest, Sha256};

use crate::dataset::{inject_instruction, InstructionMode, Sample, Split};
use crate::geometry::{acc_at_iou, NormBox};
use crate::model::Model;
use crate::raster::Raster;
use crate::{Error, Result};

pub use report::{emit_report, render_report, ReportFormat};
pub use sweep::{run_sweep, SweepBase, SweepCell, SweepParam, SweepRow, SweepSpec, SweepTable};

/// Extracts the first bracketed comma-separated 4-tuple of decimals from a
/// response. Coordinates are clamped into [0, 1]; by default swapped corners
/// are reordered rather than rejected (small models emit them early in
/// training). Returns `None` when no tuple parses.
pub fn parse_box(response: &str) -> Option<NormBox> {
    parse_box_mode(response, false)
}

/// `strict` rejects responses whose corners are misordered instead of
/// reordering them.
pub fn parse_box_mode(response: &str, strict: bool) -> Option<NormBox> {
    let re = regex::Regex::new(
        r"\[\s*(-?\d*\.?\d+)\s*,\s*(-?\d*\.?\d+)\s*,\s*(-?\d*\.?\d+)\s*,\s*(-?\d*\.?\d+)\s*\]",
    )
    .unwrap();
    let cap = re.captures(response)?;
    let mut v = [0.0f64; 4];
    for (i, slot) in v.iter_mut().enumerate() {
        *slot = cap.get(i + 1)?.as_str().parse().ok()?;
    }
    let [x1, y1, x2, y2] = v.map(|c| c.clamp(0.0, 1.0));
    if strict && (x1 > x2 || y1 > y2) {
        return None;
    }
    NormBox::new(x1.min(x2), y1.min(y2), x1.max(x2), y1.max(y2)).ok()
}

/// One scored split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub split: String,
    pub n: usize,
    pub accuracy: f64,
    pub parse_failures: usize,
}

/// Scores plus the fingerprint of the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub fingerprint: String,
    pub threshold: f64,
}

/// Hex digest over the model config, overlay settings, and a dataset id;
/// stable across re-runs of the same setup.
pub fn config_fingerprint(model: &Model, dataset_id: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(&model.cfg).expect("config serializes"));
    hasher.update(dataset_id.as_bytes());
    let out = hasher.finalize();
    out.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Generation cap: a box answer is 12 tokens plus slack.
pub const GEN_BUDGET: usize = 20;

/// Runs generation over a split and scores Acc@threshold. Parse failures
/// count as misses.
pub fn evaluate(
    model: &Model,
    pairs: &[(Raster, Sample)],
    split: Option<Split>,
    split_name: &str,
    threshold: f64,
    mode: InstructionMode,
    dataset_id: &str,
) -> Result<EvalReport> {
    let subset: Vec<&(Raster, Sample)> = pairs
        .iter()
        .filter(|(_, s)| split.is_none() || s.split == split)
        .collect();
    if subset.is_empty() {
        return Err(Error::contract(format!("split {split_name:?} is empty")));
    }
    let mut preds = Vec::with_capacity(subset.len());
    let mut gts = Vec::with_capacity(subset.len());
    let mut parse_failures = 0usize;
    for (img, sample) in &subset {
        let s = inject_instruction(sample, mode);
        let mut query = s.first_human_text().unwrap_or_default().to_string();
        if mode == InstructionMode::System {
            query = format!("{} {query}", crate::dataset::VPP_INSTRUCTION);
        }
        let text = model.generate_text(img, &query, GEN_BUDGET)?;
        let parsed = parse_box(&text);
        if parsed.is_none() {
            parse_failures += 1;
        }
        preds.push(parsed);
        gts.push(sample.boxes[0].0);
    }
    let accuracy = acc_at_iou(&preds, &gts, threshold)?;
    Ok(EvalReport {
        rows: vec![EvalRow {
            split: split_name.to_string(),
            n: subset.len(),
            accuracy,
            parse_failures,
        }],
        fingerprint: config_fingerprint(model, dataset_id),
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_table_style_response() {
        let b = parse_box("I have provided the box. [0.52, 0.59, 0.82, 0.83]").unwrap();
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (0.52, 0.59, 0.82, 0.83));
    }

    #[test]
    fn no_box_is_none() {
        assert!(parse_box("no box here").is_none());
        assert!(parse_box("[0.1, 0.2, 0.3]").is_none());
        assert!(parse_box("").is_none());
    }

    #[test]
    fn swapped_corners_reorder_by_default() {
        let b = parse_box("[0.9, 0.9, 0.1, 0.1]").unwrap();
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (0.1, 0.1, 0.9, 0.9));
    }

    #[test]
    fn strict_mode_rejects_swapped_corners() {
        assert!(parse_box_mode("[0.9, 0.9, 0.1, 0.1]", true).is_none());
        assert!(parse_box_mode("[0.1, 0.1, 0.9, 0.9]", true).is_some());
    }

    #[test]
    fn out_of_range_values_clamp() {
        let b = parse_box("[-0.2, 0.5, 1.7, 0.75]").unwrap();
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (0.0, 0.5, 1.0, 0.75));
    }

    #[test]
    fn parse_is_idempotent_on_own_serialization() {
        let b = parse_box("[0.12, 0.34, 0.56, 0.78]").unwrap();
        let again = parse_box(&b.to_bracket_string()).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn first_tuple_wins() {
        let b = parse_box("[0.10, 0.10, 0.20, 0.20] then [0.5, 0.5, 0.9, 0.9]").unwrap();
        assert_eq!((b.x1, b.y1), (0.10, 0.10));
    }
}
