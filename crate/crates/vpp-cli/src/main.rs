//! Single executable exposing the toolkit: axis rendering, overlay preview,
//! dataset forging, synthetic corpus generation, training, evaluation, and
//! ablation sweeps.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 runtime failure.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{dump_effective, FileConfig};
use vpp_core::axis::{render_axis_layout, AxisSpec, AxisVariant};
use vpp_core::dataset::{
    ingest_lines, read_corpus, read_dims_sidecar, validate, write_corpus, write_unified,
    InstructionMode, SourceKind, Split, SynthSceneSpec,
};
use vpp_core::eval::{
    emit_report, evaluate, render_report, run_sweep, ReportFormat, SweepBase, SweepParam,
    SweepSpec,
};
use vpp_core::model::{
    examples_from_pairs, load_checkpoint, save_checkpoint, scaled_mask_width, train,
    vocab_from_examples, Fusion, Model, TrainSchedule,
};
use vpp_core::overlay::{init_global_vpp, make_mask, preview_overlay, OverlayConfig};
use vpp_core::raster::{read_png, write_png, PreprocessConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<vpp_core::Error> for CliError {
    fn from(e: vpp_core::Error) -> Self {
        use vpp_core::Error as E;
        match e {
            E::Contract(_) | E::Validation(_) | E::Parse { .. } | E::Render(_) => {
                CliError::Data(e.to_string())
            }
            E::Io { .. } | E::Image(_) | E::Json(_) | E::NonFinite { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "vpp",
    version,
    about = "Position-prompted visual grounding toolkit"
)]
struct Cli {
    /// Flat key = value file supplying flag defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default vpp-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed for seeded subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress chatter.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rasterize an axis prompt image to PNG.
    RenderAxis(AxisFlags),
    /// Blend the prompt over an image and write a viewable PNG.
    PreviewOverlay(PreviewArgs),
    /// Unify source annotation files into the shared record format.
    Forge(ForgeArgs),
    /// Generate a synthetic grounding corpus.
    Synth(SynthArgs),
    /// Train the grounding model on a corpus directory.
    Train(TrainArgs),
    /// Score a checkpoint on a corpus split.
    Eval(EvalArgs),
    /// Train/evaluate a grid over one parameter and emit tables.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct AxisFlags {
    /// Axis placement: edge, cross or external.
    #[arg(long)]
    variant: Option<String>,
    /// Tick spacing in normalized units.
    #[arg(long)]
    unit: Option<f64>,
    /// Glyph height in pixels.
    #[arg(long)]
    font: Option<u32>,
    /// Canvas side in pixels.
    #[arg(long)]
    canvas: Option<u32>,
    #[arg(long)]
    thickness: Option<u32>,
    #[arg(long)]
    tick: Option<u32>,
}

const AXIS_KEYS: [&str; 6] = ["variant", "unit", "font", "canvas", "thickness", "tick"];

fn axis_spec(flags: &AxisFlags, cfg: &FileConfig) -> Result<AxisSpec, CliError> {
    let d = AxisSpec::default();
    let variant = cfg.resolve_string(flags.variant.clone(), "variant", "edge");
    let variant = match variant.as_str() {
        "edge" => AxisVariant::EdgeInternal,
        "cross" => AxisVariant::CrossAxis,
        "external" => AxisVariant::ExternalPadded,
        other => {
            return Err(CliError::Usage(format!(
                "--variant {other:?}: expected edge, cross or external"
            )))
        }
    };
    Ok(AxisSpec {
        variant,
        unit_scale: cfg.resolve(flags.unit, "unit", d.unit_scale)?,
        font_size: cfg.resolve(flags.font, "font", d.font_size)?,
        canvas: cfg.resolve(flags.canvas, "canvas", d.canvas)?,
        axis_thickness: cfg.resolve(flags.thickness, "thickness", d.axis_thickness)?,
        tick_length: cfg.resolve(flags.tick, "tick", d.tick_length)?,
    })
}

#[derive(Args)]
struct PreviewArgs {
    /// Input image (PNG).
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    /// Border band width in pixels, or "none" for a full mask.
    #[arg(long)]
    mask_width: Option<String>,
    /// Preprocessing target side.
    #[arg(long)]
    target_side: Option<usize>,
    #[command(flatten)]
    axis: AxisFlags,
}

#[derive(Args)]
struct ForgeArgs {
    /// Source schema: llava665k, cb-grd, cb-ref or genixer.
    #[arg(long)]
    kind: String,
    /// Line-delimited source records.
    #[arg(long)]
    input: PathBuf,
    /// Dims sidecar (JSONL of image/width/height).
    #[arg(long)]
    dims: Option<PathBuf>,
    /// Instruction mode stamped on the output: none, system or sample.
    #[arg(long)]
    instruction: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    canvas: Option<usize>,
    #[arg(long)]
    objects_min: Option<usize>,
    #[arg(long)]
    objects_max: Option<usize>,
    #[arg(long)]
    min_side: Option<f64>,
    #[arg(long)]
    max_side: Option<f64>,
    /// Placement grid in pixels.
    #[arg(long)]
    grid: Option<usize>,
    /// Seed of the train/test shuffle.
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args, Clone)]
struct ModelFlags {
    #[arg(long)]
    image_side: Option<usize>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    encoder_layers: Option<usize>,
    #[arg(long)]
    decoder_layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Pixels, or "none" to expose the whole prompt.
    #[arg(long)]
    mask_width: Option<String>,
    /// concat, xattn-lq or xattn-gq.
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    use_global: Option<bool>,
    #[arg(long)]
    use_local: Option<bool>,
    /// Learning rate applied to every parameter group.
    #[arg(long)]
    lr: Option<f64>,
    /// none, system or sample.
    #[arg(long)]
    instruction: Option<String>,
    #[command(flatten)]
    axis: AxisFlags,
}

const MODEL_KEYS: [&str; 14] = [
    "image_side",
    "patch",
    "dim",
    "encoder_layers",
    "decoder_layers",
    "heads",
    "queries",
    "alpha",
    "mask_width",
    "fusion",
    "use_global",
    "use_local",
    "lr",
    "instruction",
];

fn parse_instruction(s: &str) -> Result<InstructionMode, CliError> {
    match s {
        "none" => Ok(InstructionMode::None),
        "system" => Ok(InstructionMode::System),
        "sample" | "sample_level" => Ok(InstructionMode::SampleLevel),
        other => Err(CliError::Usage(format!(
            "--instruction {other:?}: expected none, system or sample"
        ))),
    }
}

fn parse_mask_width(raw: &str, side: usize) -> Result<u32, CliError> {
    if raw == "none" {
        return Ok(side.div_ceil(2) as u32);
    }
    raw.parse()
        .map_err(|_| CliError::Usage(format!("--mask-width {raw:?}: expected pixels or none")))
}

struct ModelProfile {
    base: SweepBase,
    mode: InstructionMode,
}

fn resolve_model(flags: &ModelFlags, cfg: &FileConfig) -> Result<ModelProfile, CliError> {
    let mut base = SweepBase::desk_profile();
    let m = &mut base.model;
    m.image_side = cfg.resolve(flags.image_side, "image_side", m.image_side)?;
    m.patch = cfg.resolve(flags.patch, "patch", m.patch)?;
    m.dim = cfg.resolve(flags.dim, "dim", m.dim)?;
    m.encoder_layers = cfg.resolve(flags.encoder_layers, "encoder_layers", m.encoder_layers)?;
    m.decoder_layers = cfg.resolve(flags.decoder_layers, "decoder_layers", m.decoder_layers)?;
    m.heads = cfg.resolve(flags.heads, "heads", m.heads)?;
    m.k_queries = cfg.resolve(flags.queries, "queries", m.k_queries)?;
    m.overlay.alpha = cfg.resolve(flags.alpha, "alpha", m.overlay.alpha)?;
    m.overlay.mask_width = scaled_mask_width(m.image_side);
    let mask_raw = cfg.resolve_string(flags.mask_width.clone(), "mask_width", "");
    if !mask_raw.is_empty() {
        m.overlay.mask_width = parse_mask_width(&mask_raw, m.image_side)?;
    }
    let fusion = cfg.resolve_string(flags.fusion.clone(), "fusion", "concat");
    m.fusion = Fusion::parse(&fusion).map_err(|e| CliError::Usage(e.to_string()))?;
    m.use_global = cfg.resolve(flags.use_global, "use_global", m.use_global)?;
    m.use_local = cfg.resolve(flags.use_local, "use_local", m.use_local)?;
    m.axis = axis_spec(&flags.axis, cfg)?;
    let lr = match flags.lr {
        Some(v) => Some(v),
        None => cfg.resolve(None::<f64>, "lr", f64::NAN).ok().filter(|v| v.is_finite()),
    };
    if let Some(lr) = lr {
        m.group_lr = [lr; 6];
    }
    let mode = parse_instruction(&cfg.resolve_string(
        flags.instruction.clone(),
        "instruction",
        "none",
    ))?;
    base.instruction = mode;
    Ok(ModelProfile { base, mode })
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory or index.jsonl.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// train, test or all.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    /// none, system or sample.
    #[arg(long)]
    instruction: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// alpha, mask-width, axis-variant, font-size, fusion, instruction or
    /// components.
    #[arg(long)]
    param: String,
    /// Comma-separated grid values (defaults per parameter).
    #[arg(long)]
    values: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Cell cache directory (reused across runs).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
}

fn out_dir(cli: &Cli) -> Result<PathBuf, CliError> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("vpp-out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn say(cli: &Cli, msg: &str) {
    if !cli.quiet {
        println!("{msg}");
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::RenderAxis(flags) => {
            let cfg = FileConfig::load(cli.config.as_deref(), &AXIS_KEYS)?;
            let spec = axis_spec(flags, &cfg)?;
            let (raster, layout) = render_axis_layout(&spec)?;
            let dir = out_dir(cli)?;
            let path = dir.join("axis.png");
            write_png(&raster, &path)?;
            let eff = dump_effective(&[
                ("variant", format!("{:?}", spec.variant).to_lowercase()),
                ("unit", spec.unit_scale.to_string()),
                ("font", spec.font_size.to_string()),
                ("canvas", spec.canvas.to_string()),
                ("thickness", spec.axis_thickness.to_string()),
                ("tick", spec.tick_length.to_string()),
            ]);
            std::fs::write(dir.join("effective.cfg"), eff)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            say(
                cli,
                &format!(
                    "wrote {} ({} x-labels, {} y-labels, band depth {})",
                    path.display(),
                    layout.x_labels.len(),
                    layout.y_labels.len(),
                    layout.band_depth
                ),
            );
            Ok(())
        }
        Cmd::PreviewOverlay(args) => {
            let mut keys = AXIS_KEYS.to_vec();
            keys.extend(["alpha", "mask_width", "target_side"]);
            let cfg = FileConfig::load(cli.config.as_deref(), &keys)?;
            let spec = axis_spec(&args.axis, &cfg)?;
            let target = cfg.resolve(args.target_side, "target_side", 336usize)?;
            let alpha = cfg.resolve(args.alpha, "alpha", OverlayConfig::default().alpha)?;
            let mask_raw = cfg.resolve_string(
                args.mask_width.clone(),
                "mask_width",
                &OverlayConfig::default().mask_width.to_string(),
            );
            let mask_w = parse_mask_width(&mask_raw, target)?;
            let pcfg = PreprocessConfig {
                target_side: target,
                ..PreprocessConfig::default()
            };
            let image = read_png(&args.image)?;
            let vpp = init_global_vpp(&spec, &pcfg)?;
            let mask = make_mask(target, mask_w as usize)?;
            let out = preview_overlay(&image, &vpp, &mask, alpha, &pcfg)?;
            let dir = out_dir(cli)?;
            let path = dir.join("overlay.png");
            write_png(&out, &path)?;
            say(cli, &format!("wrote {}", path.display()));
            Ok(())
        }
        Cmd::Forge(args) => {
            let cfg = FileConfig::load(cli.config.as_deref(), &["instruction"])?;
            let kind = SourceKind::parse(&args.kind)
                .map_err(|e| CliError::Usage(format!("--kind: {e}")))?;
            let dims = match &args.dims {
                Some(path) => read_dims_sidecar(path)?,
                None => Default::default(),
            };
            let raw = std::fs::read_to_string(&args.input).map_err(|e| {
                CliError::Data(format!("--input {}: {e}", args.input.display()))
            })?;
            let mode = parse_instruction(&cfg.resolve_string(
                args.instruction.clone(),
                "instruction",
                "sample",
            ))?;
            let samples = ingest_lines(
                kind,
                raw.lines().map(|l| l.to_string()),
                &dims,
                &args.input.display().to_string(),
            )?;
            let samples: Vec<_> = samples
                .iter()
                .map(|s| vpp_core::dataset::inject_instruction(s, mode))
                .collect();
            let report = validate(&samples);
            let dir = out_dir(cli)?;
            let out_path = dir.join("unified.jsonl");
            write_unified(&samples, &out_path)?;
            let report_path = dir.join("validation.txt");
            let report_text = if report.is_empty() {
                "ok: no violations\n".to_string()
            } else {
                report.violations.join("\n") + "\n"
            };
            std::fs::write(&report_path, &report_text)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            say(
                cli,
                &format!(
                    "wrote {} ({} records); validation: {}",
                    out_path.display(),
                    samples.len(),
                    if report.is_empty() { "clean" } else { "violations" }
                ),
            );
            if !report.is_empty() {
                return Err(CliError::Data(format!(
                    "{} validation violations (see {})",
                    report.violations.len(),
                    report_path.display()
                )));
            }
            Ok(())
        }
        Cmd::Synth(args) => {
            let keys = [
                "n",
                "canvas",
                "objects_min",
                "objects_max",
                "min_side",
                "max_side",
                "grid",
                "split_seed",
                "seed",
            ];
            let cfg = FileConfig::load(cli.config.as_deref(), &keys)?;
            let d = SynthSceneSpec::default();
            let spec = SynthSceneSpec {
                seed: cfg.resolve(cli.seed, "seed", d.seed)?,
                n_objects_min: cfg.resolve(args.objects_min, "objects_min", d.n_objects_min)?,
                n_objects_max: cfg.resolve(args.objects_max, "objects_max", d.n_objects_max)?,
                canvas: cfg.resolve(args.canvas, "canvas", d.canvas)?,
                min_side_frac: cfg.resolve(args.min_side, "min_side", d.min_side_frac)?,
                max_side_frac: cfg.resolve(args.max_side, "max_side", d.max_side_frac)?,
                position_grid_px: cfg.resolve(args.grid, "grid", d.position_grid_px)?,
                ..d
            };
            let n = cfg.resolve(args.n, "n", 100usize)?;
            let split_seed = cfg.resolve(args.split_seed, "split_seed", 17u64)?;
            let mut pairs = vpp_core::dataset::synth_corpus(&spec, n)?;
            vpp_core::dataset::split_by_parity(&mut pairs, split_seed);
            let dir = out_dir(cli)?;
            let index = write_corpus(&dir, &pairs)?;
            let eff = dump_effective(&[
                ("n", n.to_string()),
                ("seed", spec.seed.to_string()),
                ("canvas", spec.canvas.to_string()),
                ("objects_min", spec.n_objects_min.to_string()),
                ("objects_max", spec.n_objects_max.to_string()),
                ("min_side", spec.min_side_frac.to_string()),
                ("max_side", spec.max_side_frac.to_string()),
                ("grid", spec.position_grid_px.to_string()),
                ("split_seed", split_seed.to_string()),
            ]);
            std::fs::write(dir.join("effective.cfg"), eff)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            say(cli, &format!("wrote {} scenes and {}", n, index.display()));
            Ok(())
        }
        Cmd::Train(args) => {
            let mut keys = MODEL_KEYS.to_vec();
            keys.extend(AXIS_KEYS);
            keys.extend(["epochs", "batch", "seed"]);
            let cfg = FileConfig::load(cli.config.as_deref(), &keys)?;
            let profile = resolve_model(&args.model, &cfg)?;
            let mut model_cfg = profile.base.model.clone();
            model_cfg.seed = cfg.resolve(cli.seed, "seed", 1u64)?;
            let epochs = cfg.resolve(args.epochs, "epochs", 5usize)?;
            let batch = cfg.resolve(args.batch, "batch", profile.base.batch_size)?;

            let pairs = read_corpus(&args.corpus)?;
            let has_split = pairs.iter().any(|(_, s)| s.split == Some(Split::Train));
            let split = has_split.then_some(Split::Train);
            let examples = examples_from_pairs(&pairs, profile.mode, split);
            if examples.is_empty() {
                return Err(CliError::Data("corpus has no training samples".to_string()));
            }
            let vocab = vocab_from_examples(&examples);
            let mut model =
                Model::new(model_cfg.clone(), vocab).map_err(CliError::from)?;
            say(
                cli,
                &format!(
                    "training on {} samples, {} epochs, batch {}",
                    examples.len(),
                    epochs,
                    batch
                ),
            );
            let stats = train(
                &mut model,
                &examples,
                &TrainSchedule {
                    epochs,
                    batch_size: batch,
                    shuffle_seed: model_cfg.seed,
                },
            )?;
            let dir = out_dir(cli)?;
            let ck = dir.join("checkpoint.json");
            save_checkpoint(&model, &ck)?;
            let mut csv = String::from("epoch,loss\n");
            for (i, l) in stats.epoch_losses.iter().enumerate() {
                csv.push_str(&format!("{},{}\n", i + 1, l));
            }
            std::fs::write(dir.join("loss.csv"), csv)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let eff = effective_model_pairs(&model_cfg, profile.mode, epochs, batch);
            std::fs::write(dir.join("effective.cfg"), dump_effective(&eff))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            say(
                cli,
                &format!(
                    "wrote {} (loss {} -> {})",
                    ck.display(),
                    stats.epoch_losses.first().map(|l| format!("{l:.3}")).unwrap_or_default(),
                    stats.epoch_losses.last().map(|l| format!("{l:.3}")).unwrap_or_default()
                ),
            );
            Ok(())
        }
        Cmd::Eval(args) => {
            let cfg = FileConfig::load(
                cli.config.as_deref(),
                &["split", "threshold", "instruction"],
            )?;
            let model = load_checkpoint(&args.checkpoint)?;
            let pairs = read_corpus(&args.corpus)?;
            let threshold = cfg.resolve(args.threshold, "threshold", 0.5f64)?;
            let mode = parse_instruction(&cfg.resolve_string(
                args.instruction.clone(),
                "instruction",
                "none",
            ))?;
            let split_name = cfg.resolve_string(args.split.clone(), "split", "test");
            let split = match split_name.as_str() {
                "train" => Some(Split::Train),
                "test" => Some(Split::Test),
                "all" => None,
                other => {
                    return Err(CliError::Usage(format!(
                        "--split {other:?}: expected train, test or all"
                    )))
                }
            };
            let report = evaluate(
                &model,
                &pairs,
                split,
                &split_name,
                threshold,
                mode,
                &args.corpus.display().to_string(),
            )?;
            let row = &report.rows[0];
            let dir = out_dir(cli)?;
            let md = format!(
                "# eval (Acc@{:.2})\n\nfingerprint: {}\n\n| split | n | accuracy | parse failures |\n|---|---|---|---|\n| {} | {} | {:.2} | {} |\n",
                report.threshold,
                report.fingerprint,
                row.split,
                row.n,
                row.accuracy * 100.0,
                row.parse_failures
            );
            std::fs::write(dir.join("eval.md"), &md)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            say(
                cli,
                &format!(
                    "split {} n {} acc {:.2}% parse-failures {} fingerprint {}",
                    row.split,
                    row.n,
                    row.accuracy * 100.0,
                    row.parse_failures,
                    report.fingerprint
                ),
            );
            Ok(())
        }
        Cmd::Sweep(args) => {
            let mut keys = MODEL_KEYS.to_vec();
            keys.extend(AXIS_KEYS);
            keys.extend([
                "values", "seeds", "epochs", "n_train", "n_test", "batch", "threshold", "seed",
            ]);
            let cfg = FileConfig::load(cli.config.as_deref(), &keys)?;
            let param =
                SweepParam::parse(&args.param).map_err(|e| CliError::Usage(e.to_string()))?;
            let profile = resolve_model(&args.model, &cfg)?;
            let mut base = profile.base;
            base.n_train = cfg.resolve(args.n_train, "n_train", base.n_train)?;
            base.n_test = cfg.resolve(args.n_test, "n_test", base.n_test)?;
            base.batch_size = cfg.resolve(args.batch, "batch", base.batch_size)?;
            base.threshold = cfg.resolve(args.threshold, "threshold", base.threshold)?;
            base.cache_dir = args.cache.clone();
            let values: Vec<String> = cfg
                .resolve_string(args.values.clone(), "values", "")
                .split(',')
                .filter(|v| !v.trim().is_empty())
                .map(|v| v.trim().to_string())
                .collect();
            let seeds: Vec<u64> = cfg
                .resolve_string(args.seeds.clone(), "seeds", "1,2,3")
                .split(',')
                .map(|v| {
                    v.trim().parse().map_err(|_| {
                        CliError::Usage(format!("--seeds: cannot parse {v:?}"))
                    })
                })
                .collect::<Result<_, _>>()?;
            let spec = SweepSpec {
                param,
                values,
                seeds,
                epochs: cfg.resolve(args.epochs, "epochs", 5usize)?,
            };
            say(
                cli,
                &format!(
                    "sweeping {} over {} seeds x values grid (epochs {})",
                    param.name(),
                    spec.seeds.len(),
                    spec.epochs
                ),
            );
            let table = run_sweep(&spec, &base)?;
            let dir = out_dir(cli)?;
            let md = emit_report(&table, ReportFormat::Markdown, &dir)?;
            let csvp = emit_report(&table, ReportFormat::Csv, &dir)?;
            if !cli.quiet {
                print!("{}", render_report(&table, ReportFormat::Markdown));
            }
            say(cli, &format!("wrote {} and {}", md.display(), csvp.display()));
            Ok(())
        }
    }
}

fn effective_model_pairs(
    cfg: &vpp_core::model::ModelConfig,
    mode: InstructionMode,
    epochs: usize,
    batch: usize,
) -> Vec<(&'static str, String)> {
    vec![
        ("image_side", cfg.image_side.to_string()),
        ("patch", cfg.patch.to_string()),
        ("dim", cfg.dim.to_string()),
        ("encoder_layers", cfg.encoder_layers.to_string()),
        ("decoder_layers", cfg.decoder_layers.to_string()),
        ("heads", cfg.heads.to_string()),
        ("queries", cfg.k_queries.to_string()),
        ("alpha", cfg.overlay.alpha.to_string()),
        ("mask_width", cfg.overlay.mask_width.to_string()),
        (
            "fusion",
            match cfg.fusion {
                Fusion::Concat => "concat".to_string(),
                Fusion::CrossAttnLpQ => "xattn-lq".to_string(),
                Fusion::CrossAttnGpQ => "xattn-gq".to_string(),
            },
        ),
        ("use_global", cfg.use_global.to_string()),
        ("use_local", cfg.use_local.to_string()),
        ("lr", cfg.group_lr[0].to_string()),
        (
            "instruction",
            match mode {
                InstructionMode::None => "none",
                InstructionMode::System => "system",
                InstructionMode::SampleLevel => "sample",
            }
            .to_string(),
        ),
        ("unit", cfg.axis.unit_scale.to_string()),
        ("font", cfg.axis.font_size.to_string()),
        ("canvas", cfg.axis.canvas.to_string()),
        ("seed", cfg.seed.to_string()),
        ("epochs", epochs.to_string()),
        ("batch", batch.to_string()),
    ]
}

fn main() -> ExitCode {
    // VPP_THREADS caps worker parallelism; 0 or unset means automatic.
    if let Ok(raw) = std::env::var("VPP_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems (including bare `vpp`) exit 1; --help/--version
            // exit 0.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
