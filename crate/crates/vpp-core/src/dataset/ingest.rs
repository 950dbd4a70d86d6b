//! Ingest of the four source annotation schemas into unified samples.
//!
//! - `llava665k`: conversation lists whose box strings are already
//!   normalized; region captions carry the box in the human turn, grounding
//!   answers carry it in the assistant turn.
//! - `cb-grd` / `cb-ref`: conversations with `<phrase:[x1, y1, x2, y2]>`
//!   special tokens holding absolute pixel coordinates of the original
//!   image. The special scheme is stripped, the referring phrase kept.
//! - `genixer`: bare `{bbox, expression}` pairs with absolute coordinates,
//!   wrapped into the shared grounding question template.
//!
//! Absolute coordinates pass through padded-square normalization against the
//! supplied image dims (a sidecar table; the raw records do not carry dims)
//! and are snapped to the two-decimal grid used everywhere downstream.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::geometry::{normalize_box, ImageDims, NormBox, PixelBox};
use crate::{Error, Result};

use super::{
    InstructionMode, Role, Sample, SourceKind, Task, Turn, GROUNDING_TEMPLATE, REGION_TEMPLATE,
};

#[derive(Deserialize)]
struct RawTurn {
    from: String,
    value: String,
}

#[derive(Deserialize)]
struct RawConversationRecord {
    #[serde(default)]
    image: Option<String>,
    conversations: Vec<RawTurn>,
    #[serde(default)]
    dims: Option<ImageDims>,
    #[serde(default)]
    task: Option<Task>,
    #[serde(default)]
    instruction: Option<InstructionMode>,
    #[serde(default)]
    boxes: Option<Vec<RawBox>>,
    #[serde(default)]
    split: Option<super::Split>,
}

#[derive(Deserialize)]
struct RawBox {
    #[serde(rename = "box")]
    coords: [f64; 4],
    phrase: String,
}

#[derive(Deserialize)]
struct RawGenixerRecord {
    #[serde(default)]
    image: Option<String>,
    bbox: [f64; 4],
    expression: String,
}

const REGION_MARKER: &str = "short description for this region";

fn special_token_regex() -> regex::Regex {
    regex::Regex::new(r"<([^:<>]+):\[\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\]>").unwrap()
}

fn norm_tuple_regex() -> regex::Regex {
    regex::Regex::new(r"\[\s*(\d*\.?\d+)\s*,\s*(\d*\.?\d+)\s*,\s*(\d*\.?\d+)\s*,\s*(\d*\.?\d+)\s*\]")
        .unwrap()
}

fn parse_turns(raw: &[RawTurn]) -> Result<Vec<Turn>> {
    raw.iter()
        .map(|t| {
            let role = match t.from.as_str() {
                "human" => Role::Human,
                "gpt" | "assistant" => Role::Assistant,
                other => {
                    return Err(Error::validation(format!(
                        "unknown conversation role {other:?}"
                    )))
                }
            };
            // Image placement is implicit in the unified format.
            let text = t
                .value
                .replace("<image>\n", "")
                .replace("<image>", "")
                .trim()
                .to_string();
            Ok(Turn { role, text })
        })
        .collect()
}

/// Converts absolute pixel corners to a quantized normalized box.
fn absolute_to_norm(coords: [f64; 4], dims: ImageDims) -> Result<NormBox> {
    let pb = PixelBox::new(coords[0], coords[1], coords[2], coords[3], dims).map_err(|_| {
        Error::validation(format!(
            "box [{}, {}, {}, {}] outside {}x{} frame",
            coords[0], coords[1], coords[2], coords[3], dims.width, dims.height
        ))
    })?;
    Ok(normalize_box(&pb).quantized())
}

fn ingest_llava(rec: RawConversationRecord, dims: ImageDims) -> Result<Sample> {
    let turns = parse_turns(&rec.conversations)?;
    let dims = rec.dims.unwrap_or(dims);
    let tuple_re = norm_tuple_regex();

    let task = rec.task.unwrap_or_else(|| {
        let is_region = turns
            .iter()
            .any(|t| t.role == Role::Human && t.text.contains(REGION_MARKER));
        if is_region {
            Task::RegionCaption
        } else {
            Task::Grounding
        }
    });

    let boxes = if let Some(raw) = rec.boxes {
        raw.into_iter()
            .map(|b| {
                NormBox::new(b.coords[0], b.coords[1], b.coords[2], b.coords[3])
                    .map(|nb| (nb, b.phrase))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        // Derive from the conversation text: grounding answers end with the
        // tuple, region captions carry it in the question.
        let mut boxes = Vec::new();
        let source_text = match task {
            Task::Grounding => turns
                .iter()
                .rev()
                .find(|t| t.role == Role::Assistant)
                .map(|t| t.text.as_str()),
            Task::RegionCaption => turns
                .iter()
                .find(|t| t.role == Role::Human)
                .map(|t| t.text.as_str()),
        };
        if let Some(text) = source_text {
            if let Some(cap) = tuple_re.captures(text) {
                let v: Vec<f64> = (1..=4)
                    .map(|i| cap.get(i).unwrap().as_str().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::validation(format!("bad tuple number: {e}")))?;
                let nb = NormBox::new(v[0], v[1], v[2], v[3])?;
                let phrase = match task {
                    Task::Grounding => turns
                        .iter()
                        .find(|t| t.role == Role::Human)
                        .and_then(|t| t.text.rsplit_once(": ").map(|(_, p)| p))
                        .map(|p| p.trim_end_matches('.').to_string())
                        .unwrap_or_default(),
                    Task::RegionCaption => String::new(),
                };
                boxes.push((nb, phrase));
            }
        }
        boxes
    };

    Ok(Sample {
        image_ref: rec.image.unwrap_or_default(),
        dims,
        turns,
        boxes,
        task,
        instruction_mode: rec.instruction.unwrap_or(InstructionMode::None),
        split: rec.split,
    })
}

fn ingest_cb_grd(rec: RawConversationRecord, dims: ImageDims) -> Result<Sample> {
    let mut turns = parse_turns(&rec.conversations)?;
    let re = special_token_regex();
    let mut boxes = Vec::new();
    for turn in turns.iter_mut() {
        while let Some(cap) = re.captures(&turn.text) {
            let phrase = cap.get(1).unwrap().as_str().trim().to_string();
            let coords = [2, 3, 4, 5].map(|i| cap.get(i).unwrap().as_str().parse::<f64>().unwrap());
            let nb = absolute_to_norm(coords, dims)?;
            let replaced = turn
                .text
                .replace(cap.get(0).unwrap().as_str(), &nb.to_bracket_string());
            turn.text = replaced.trim().to_string();
            boxes.push((nb, phrase));
        }
    }
    if boxes.is_empty() {
        return Err(Error::validation(
            "cb-grd record carries no special-token box".to_string(),
        ));
    }
    Ok(Sample {
        image_ref: rec.image.unwrap_or_default(),
        dims,
        turns,
        boxes,
        task: Task::Grounding,
        instruction_mode: InstructionMode::None,
        split: None,
    })
}

fn ingest_cb_ref(rec: RawConversationRecord, dims: ImageDims) -> Result<Sample> {
    let turns = parse_turns(&rec.conversations)?;
    let re = special_token_regex();
    let human = turns
        .iter()
        .find(|t| t.role == Role::Human)
        .ok_or_else(|| Error::validation("cb-ref record has no human turn".to_string()))?;
    let cap = re.captures(&human.text).ok_or_else(|| {
        Error::validation("cb-ref record carries no special-token box".to_string())
    })?;
    let phrase = cap.get(1).unwrap().as_str().trim().to_string();
    let coords = [2, 3, 4, 5].map(|i| cap.get(i).unwrap().as_str().parse::<f64>().unwrap());
    let nb = absolute_to_norm(coords, dims)?;

    let caption = turns
        .iter()
        .rev()
        .find(|t| t.role == Role::Assistant)
        .map(|t| t.text.clone())
        .ok_or_else(|| Error::validation("cb-ref record has no assistant turn".to_string()))?;

    Ok(Sample {
        image_ref: rec.image.unwrap_or_default(),
        dims,
        turns: vec![
            Turn {
                role: Role::Human,
                text: format!("{REGION_TEMPLATE}{}.", nb.to_bracket_string()),
            },
            Turn {
                role: Role::Assistant,
                text: caption,
            },
        ],
        boxes: vec![(nb, phrase)],
        task: Task::RegionCaption,
        instruction_mode: InstructionMode::None,
        split: None,
    })
}

fn ingest_genixer(rec: RawGenixerRecord, dims: ImageDims) -> Result<Sample> {
    let nb = absolute_to_norm(rec.bbox, dims)?;
    let expression = rec.expression.trim().to_string();
    Ok(Sample {
        image_ref: rec.image.unwrap_or_default(),
        dims,
        turns: vec![
            Turn {
                role: Role::Human,
                text: format!("{GROUNDING_TEMPLATE}{expression}."),
            },
            Turn {
                role: Role::Assistant,
                text: nb.to_bracket_string(),
            },
        ],
        boxes: vec![(nb, expression)],
        task: Task::Grounding,
        instruction_mode: InstructionMode::None,
        split: None,
    })
}

/// Ingests one raw record under the given schema.
pub fn ingest(kind: SourceKind, record: &str, dims: ImageDims) -> Result<Sample> {
    match kind {
        SourceKind::Llava665k => ingest_llava(serde_json::from_str(record)?, dims),
        SourceKind::CbGrd => ingest_cb_grd(serde_json::from_str(record)?, dims),
        SourceKind::CbRef => ingest_cb_ref(serde_json::from_str(record)?, dims),
        SourceKind::Genixer => ingest_genixer(serde_json::from_str(record)?, dims),
    }
}

#[derive(Deserialize)]
struct ImageOnly {
    #[serde(default)]
    image: Option<String>,
}

/// Ingests line-delimited records, resolving per-record dims from the
/// sidecar table. Errors carry the 1-based record number.
pub fn ingest_lines(
    kind: SourceKind,
    lines: impl Iterator<Item = String>,
    dims_table: &BTreeMap<String, ImageDims>,
    context: &str,
) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let wrap = |e: Error| Error::Parse {
            context: context.to_string(),
            record: i + 1,
            msg: e.to_string(),
        };
        let probe: ImageOnly = serde_json::from_str(&line).map_err(|e| wrap(e.into()))?;
        let dims = match probe.image.as_deref().and_then(|im| dims_table.get(im)) {
            Some(&d) => d,
            None => {
                // Records that embed their own dims may proceed without a
                // sidecar row; others cannot be normalized safely.
                let has_embedded = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .map(|v| v.get("dims").is_some())
                    .unwrap_or(false);
                if has_embedded {
                    ImageDims::new(1, 1).unwrap()
                } else {
                    return Err(wrap(Error::validation(format!(
                        "no dims for image {:?} in the sidecar table",
                        probe.image.unwrap_or_default()
                    ))));
                }
            }
        };
        out.push(ingest(kind, &line, dims).map_err(wrap)?);
    }
    Ok(out)
}

/// Reads the `{"image", "width", "height"}` sidecar.
pub fn read_dims_sidecar(path: &std::path::Path) -> Result<BTreeMap<String, ImageDims>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    super::dims_table_from_reader(std::io::BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{from_unified_json, to_unified_json, validate};

    pub const LLAVA_FIXTURE: &str = include_str!("../../fixtures/llava665k.jsonl");
    pub const CB_GRD_FIXTURE: &str = include_str!("../../fixtures/cb_grd.jsonl");
    pub const CB_REF_FIXTURE: &str = include_str!("../../fixtures/cb_ref.jsonl");
    pub const GENIXER_FIXTURE: &str = include_str!("../../fixtures/genixer.jsonl");
    pub const DIMS_FIXTURE: &str = include_str!("../../fixtures/dims.jsonl");

    fn dims_table() -> BTreeMap<String, ImageDims> {
        crate::dataset::dims_table_from_reader(DIMS_FIXTURE.as_bytes(), "dims fixture").unwrap()
    }

    fn lines(s: &str) -> impl Iterator<Item = String> + '_ {
        s.lines().map(|l| l.to_string())
    }

    #[test]
    fn llava_grounding_box_passes_through_unchanged() {
        let samples =
            ingest_lines(SourceKind::Llava665k, lines(LLAVA_FIXTURE), &dims_table(), "t").unwrap();
        let grounding = samples.iter().find(|s| s.task == Task::Grounding).unwrap();
        let (b, phrase) = &grounding.boxes[0];
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (0.52, 0.59, 0.82, 0.83));
        assert_eq!(phrase, "white frosting");
        assert_eq!(
            grounding.final_assistant_text().unwrap(),
            "[0.52, 0.59, 0.82, 0.83]"
        );
    }

    #[test]
    fn llava_region_caption_detected() {
        let samples =
            ingest_lines(SourceKind::Llava665k, lines(LLAVA_FIXTURE), &dims_table(), "t").unwrap();
        let region = samples
            .iter()
            .find(|s| s.task == Task::RegionCaption)
            .unwrap();
        assert!(region.first_human_text().unwrap().contains("this region"));
        assert!(!region.first_human_text().unwrap().contains("<image>"));
    }

    #[test]
    fn cb_grd_strips_special_token_and_normalizes() {
        let samples =
            ingest_lines(SourceKind::CbGrd, lines(CB_GRD_FIXTURE), &dims_table(), "t").unwrap();
        let s = &samples[0];
        assert_eq!(s.boxes[0].1, "black pants");
        assert!(s.first_human_text().unwrap().contains("black pants"));
        let answer = s.final_assistant_text().unwrap();
        assert!(!answer.contains('<') && !answer.contains('>'));
        assert!(answer.contains("I have provided the box of the black pants."));
        // 245/1000 etc, quantized onto the two-decimal grid.
        let b = s.boxes[0].0;
        assert!((b.x1 - 0.25).abs() < 1e-9 || (b.x1 - 0.24).abs() < 1e-9);
        assert_eq!(b.y1, 0.38);
        assert_eq!(b.x2, 0.28);
        assert_eq!(b.y2, 0.50);
        assert!(answer.contains(&b.to_bracket_string()));
    }

    #[test]
    fn cb_ref_becomes_region_caption() {
        let samples =
            ingest_lines(SourceKind::CbRef, lines(CB_REF_FIXTURE), &dims_table(), "t").unwrap();
        let s = &samples[0];
        assert_eq!(s.task, Task::RegionCaption);
        assert_eq!(s.boxes[0].1, "black charger");
        assert_eq!(
            s.first_human_text().unwrap(),
            "Please provide a short description for this region: [0.35, 0.44, 0.45, 0.56]."
        );
        assert_eq!(s.final_assistant_text().unwrap(), "It is a black charger.");
    }

    #[test]
    fn genixer_wrapped_with_grounding_template() {
        let samples =
            ingest_lines(SourceKind::Genixer, lines(GENIXER_FIXTURE), &dims_table(), "t").unwrap();
        let s = &samples[0];
        assert_eq!(
            s.first_human_text().unwrap(),
            format!("{GROUNDING_TEMPLATE}the watch has a black strap.")
        );
        // 480x360 frame: side 480, y offset 60.
        let b = s.boxes[0].0;
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (0.16, 0.15, 0.50, 0.26));
        assert_eq!(s.final_assistant_text().unwrap(), "[0.16, 0.15, 0.50, 0.26]");
    }

    #[test]
    fn all_fixture_boxes_valid_and_report_empty() {
        let table = dims_table();
        let mut all = Vec::new();
        for (kind, text) in [
            (SourceKind::Llava665k, LLAVA_FIXTURE),
            (SourceKind::CbGrd, CB_GRD_FIXTURE),
            (SourceKind::CbRef, CB_REF_FIXTURE),
            (SourceKind::Genixer, GENIXER_FIXTURE),
        ] {
            all.extend(ingest_lines(kind, lines(text), &table, "t").unwrap());
        }
        assert_eq!(all.len(), 8);
        let report = validate(&all);
        assert!(report.is_empty(), "violations: {:?}", report.violations);
    }

    #[test]
    fn unification_idempotent_through_reserialization() {
        let table = dims_table();
        for (kind, text) in [
            (SourceKind::Llava665k, LLAVA_FIXTURE),
            (SourceKind::CbGrd, CB_GRD_FIXTURE),
            (SourceKind::CbRef, CB_REF_FIXTURE),
            (SourceKind::Genixer, GENIXER_FIXTURE),
        ] {
            for s in ingest_lines(kind, lines(text), &table, "t").unwrap() {
                let json = to_unified_json(&s).unwrap();
                let again = ingest(SourceKind::Llava665k, &json, s.dims).unwrap();
                assert_eq!(again, s, "idempotence failed for {kind:?}");
                assert_eq!(from_unified_json(&json).unwrap(), s);
            }
        }
    }

    #[test]
    fn box_outside_frame_is_validation_error() {
        let rec = r#"{"image": "x.jpg", "bbox": [0, 0, 900, 100], "expression": "too wide"}"#;
        let err = ingest(SourceKind::Genixer, rec, ImageDims::new(640, 480).unwrap()).unwrap_err();
        assert!(err.to_string().contains("outside"));
    }

    #[test]
    fn missing_dims_is_parse_error_with_record_number() {
        let table = BTreeMap::new();
        let err = ingest_lines(SourceKind::CbGrd, lines(CB_GRD_FIXTURE), &table, "cb.jsonl")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("record 1"), "{msg}");
        assert!(msg.contains("no dims"), "{msg}");
    }

    #[test]
    fn malformed_json_is_parse_error() {
        let table = dims_table();
        let err = ingest_lines(
            SourceKind::Llava665k,
            ["{not json".to_string()].into_iter(),
            &table,
            "bad.jsonl",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { record: 1, .. }));
    }
}
