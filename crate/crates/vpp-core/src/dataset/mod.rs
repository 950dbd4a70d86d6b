//! Construction of the unified grounding/instruction corpus: ingest of the
//! four heterogeneous source annotation formats, instruction injection, a
//! deterministic synthetic scene generator for desk-scale training, and a
//! validation pass over emitted records.
//!
//! The unified wire format is line-delimited JSON, one record per line, with
//! fields `image`, `dims`, `conversations`, `task`, plus the instruction
//! marker and the extracted boxes so records round-trip losslessly.

pub mod ingest;
pub mod io;
pub mod synth;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{ImageDims, NormBox};
use crate::{Error, Result};

pub use ingest::{ingest, ingest_lines, read_dims_sidecar};
pub use io::{read_corpus, write_corpus};
pub use synth::{split_by_parity, synth_corpus, Shape, SynthSceneSpec};

/// The four supported source annotation schemas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Llava665k,
    CbGrd,
    CbRef,
    Genixer,
}

impl SourceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "llava665k" => Ok(SourceKind::Llava665k),
            "cb-grd" | "cb_grd" => Ok(SourceKind::CbGrd),
            "cb-ref" | "cb_ref" => Ok(SourceKind::CbRef),
            "genixer" => Ok(SourceKind::Genixer),
            other => Err(Error::contract(format!(
                "unknown source kind {other:?}; expected llava665k, cb-grd, cb-ref or genixer"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Human,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Grounding,
    RegionCaption,
}

/// Where the axis-related text instruction is attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionMode {
    None,
    System,
    SampleLevel,
}

/// One training record in the unified format.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_ref: String,
    pub dims: ImageDims,
    pub turns: Vec<Turn>,
    pub boxes: Vec<(NormBox, String)>,
    pub task: Task,
    pub instruction_mode: InstructionMode,
    /// Train/test assignment for synthetic corpora; `None` for ingested data.
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Sample-level instruction injected ahead of grounding questions.
pub const VPP_INSTRUCTION: &str = "Each image is accompanied by axes. If the question pertains to \
                                   the bounding box coordinates, refer to the axes for the \
                                   response.";

/// Grounding question template shared by the unified sources.
pub const GROUNDING_TEMPLATE: &str =
    "Please provide the bounding box coordinate of the region this sentence describes: ";

/// Region-captioning question template.
pub const REGION_TEMPLATE: &str = "Please provide a short description for this region: ";

impl Sample {
    pub fn first_human_text(&self) -> Option<&str> {
        self.turns
            .iter()
            .find(|t| t.role == Role::Human)
            .map(|t| t.text.as_str())
    }

    pub fn final_assistant_text(&self) -> Option<&str> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == Role::Assistant)
            .map(|t| t.text.as_str())
    }
}

/// Attaches, moves or strips the axis instruction. Idempotent per mode: the
/// instruction is first removed from the sample text, then re-applied.
pub fn inject_instruction(sample: &Sample, mode: InstructionMode) -> Sample {
    let mut out = sample.clone();
    if let Some(turn) = out.turns.iter_mut().find(|t| t.role == Role::Human) {
        if let Some(rest) = turn.text.strip_prefix(VPP_INSTRUCTION) {
            turn.text = rest.trim_start().to_string();
        }
        if mode == InstructionMode::SampleLevel {
            turn.text = format!("{VPP_INSTRUCTION} {}", turn.text);
        }
    }
    out.instruction_mode = mode;
    out
}

// ---------------------------------------------------------------------------
// Unified wire format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireTurn {
    from: String,
    value: String,
}

#[derive(Serialize, Deserialize)]
struct WireBox {
    #[serde(rename = "box")]
    coords: [f64; 4],
    phrase: String,
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    image: String,
    dims: ImageDims,
    conversations: Vec<WireTurn>,
    task: Task,
    instruction: InstructionMode,
    boxes: Vec<WireBox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

pub fn to_unified_json(sample: &Sample) -> Result<String> {
    let rec = WireRecord {
        image: sample.image_ref.clone(),
        dims: sample.dims,
        conversations: sample
            .turns
            .iter()
            .map(|t| WireTurn {
                from: match t.role {
                    Role::Human => "human".to_string(),
                    Role::Assistant => "gpt".to_string(),
                },
                value: t.text.clone(),
            })
            .collect(),
        task: sample.task,
        instruction: sample.instruction_mode,
        boxes: sample
            .boxes
            .iter()
            .map(|(b, phrase)| WireBox {
                coords: [b.x1, b.y1, b.x2, b.y2],
                phrase: phrase.clone(),
            })
            .collect(),
        split: sample.split,
    };
    Ok(serde_json::to_string(&rec)?)
}

pub fn from_unified_json(line: &str) -> Result<Sample> {
    let rec: WireRecord = serde_json::from_str(line)?;
    let turns = rec
        .conversations
        .into_iter()
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
            Ok(Turn {
                role,
                text: t.value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let boxes = rec
        .boxes
        .into_iter()
        .map(|b| {
            NormBox::new(b.coords[0], b.coords[1], b.coords[2], b.coords[3])
                .map(|nb| (nb, b.phrase))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sample {
        image_ref: rec.image,
        dims: rec.dims,
        turns,
        boxes,
        task: rec.task,
        instruction_mode: rec.instruction,
        split: rec.split,
    })
}

pub fn write_unified(samples: &[Sample], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for s in samples {
        let line = to_unified_json(s)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_unified(path: &Path) -> Result<Vec<Sample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(from_unified_json(&line).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            record: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Report-only validation result; empty means every check passed.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks sample invariants and coordinate serialization regularity.
pub fn validate(samples: &[Sample]) -> ValidationReport {
    let bracket = regex::Regex::new(r"\[([^\[\]]*)\]").unwrap();
    let well_formed =
        regex::Regex::new(r"^\d+\.\d{2}, \d+\.\d{2}, \d+\.\d{2}, \d+\.\d{2}$").unwrap();
    let mut report = ValidationReport::default();
    for (i, s) in samples.iter().enumerate() {
        let mut flag = |msg: String| report.violations.push(format!("sample {i}: {msg}"));

        for (b, _) in &s.boxes {
            for v in [b.x1, b.y1, b.x2, b.y2] {
                if !(0.0..=1.0).contains(&v) {
                    flag(format!("box coordinate {v} out of [0, 1]"));
                }
                if (v * 100.0 - (v * 100.0).round()).abs() > 1e-9 {
                    flag(format!("box coordinate {v} not on the two-decimal grid"));
                }
            }
            if b.x1 > b.x2 || b.y1 > b.y2 {
                flag(format!("box {:?} misordered", (b.x1, b.y1, b.x2, b.y2)));
            }
        }

        if s.task == Task::Grounding {
            match s.final_assistant_text() {
                None => flag("grounding sample has no assistant turn".to_string()),
                Some(text) => {
                    let tuples = bracket.captures_iter(text).count();
                    if tuples != 1 {
                        flag(format!(
                            "grounding answer must contain exactly one bracketed tuple, found {tuples}"
                        ));
                    }
                }
            }
        }

        for turn in &s.turns {
            for cap in bracket.captures_iter(&turn.text) {
                let inner = cap.get(1).unwrap().as_str();
                // Only coordinate-like tuples are held to the format rule.
                if inner.split(',').count() == 4
                    && inner
                        .chars()
                        .all(|c| c.is_ascii_digit() || c == '.' || c == ',' || c == ' ')
                {
                    if !well_formed.is_match(inner) {
                        flag(format!(
                            "tuple [{inner}] not serialized as two-decimal comma-space form"
                        ));
                    } else {
                        for num in inner.split(", ") {
                            let v: f64 = num.parse().unwrap_or(f64::NAN);
                            if !(0.0..=1.0).contains(&v) {
                                flag(format!("serialized coordinate {num} out of [0, 1]"));
                            }
                        }
                    }
                }
            }
        }
    }
    report
}

/// Reads a dims table from JSONL lines of `{"image", "width", "height"}`.
pub fn dims_table_from_reader(reader: impl BufRead, context: &str) -> Result<BTreeMap<String, ImageDims>> {
    #[derive(Deserialize)]
    struct Row {
        image: String,
        width: u32,
        height: u32,
    }
    let mut map = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(context, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: context.to_string(),
            record: i + 1,
            msg: e.to_string(),
        })?;
        map.insert(row.image, ImageDims::new(row.width, row.height)?);
    }
    Ok(map)
}
