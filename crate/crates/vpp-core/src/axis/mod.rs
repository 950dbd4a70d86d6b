//! Deterministic rasterization of axis-like prompt initialization images.
//!
//! Three variants: axes along the top/left edges, centered cross axes, and
//! axes drawn in a pad band around a shrunken content square. All markings
//! are black on a white canvas. Tick positions map coordinate fractions onto
//! pixels exactly (`t = round(v * (side - 1))`), which is the property the
//! prompt exists to convey.
//!
//! Labels use compact ruler notation: `0`, `.1`, `.2`, ... `1`. Where the two
//! axes cross, the label at the crossing value is drawn once and serves both
//! axes. Dense unit scales stagger labels into up to three rows (columns for
//! the y axis); anything still overlapping is a render error.

pub mod font;

use serde::{Deserialize, Serialize};

use crate::raster::{Raster, Space};
use crate::{Error, Result};

pub use font::{rasterize_label, GlyphBitmap};

/// Margin between ticks and labels and between stagger rows, in pixels.
pub const LABEL_MARGIN: usize = 2;

/// Content side of the padded variant as a fraction of the canvas (276/336).
const EXTERNAL_CONTENT_FRACTION: f64 = 276.0 / 336.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisVariant {
    /// Axes along the top and left canvas edges, origin at top-left.
    EdgeInternal,
    /// Cross-shaped axes centered in the canvas.
    CrossAxis,
    /// Content shrunk to an inner square; axes live in the pad band.
    ExternalPadded,
}

/// Full parametrization of an axis image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub variant: AxisVariant,
    pub unit_scale: f64,
    pub font_size: u32,
    pub canvas: u32,
    pub axis_thickness: u32,
    pub tick_length: u32,
}

impl Default for AxisSpec {
    fn default() -> Self {
        AxisSpec {
            variant: AxisVariant::EdgeInternal,
            unit_scale: 0.1,
            font_size: 10,
            canvas: 336,
            axis_thickness: 2,
            tick_length: 6,
        }
    }
}

impl AxisSpec {
    /// Edge axes at unit 0.05. Uses the smallest font so both stagger rows
    /// stay inside the default 30-pixel mask band.
    pub fn internal_005() -> Self {
        AxisSpec {
            unit_scale: 0.05,
            font_size: 5,
            ..AxisSpec::default()
        }
    }

    pub fn cross_axis() -> Self {
        AxisSpec {
            variant: AxisVariant::CrossAxis,
            ..AxisSpec::default()
        }
    }

    pub fn external_padded() -> Self {
        AxisSpec {
            variant: AxisVariant::ExternalPadded,
            ..AxisSpec::default()
        }
    }

    /// Number of tick labels per axis.
    pub fn labels_per_axis(&self) -> usize {
        (1.0 / self.unit_scale).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.unit_scale > 0.0 && self.unit_scale <= 0.5) {
            return Err(Error::contract(format!(
                "unit scale must lie in (0, 0.5], got {}",
                self.unit_scale
            )));
        }
        let n = 1.0 / self.unit_scale;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::contract(format!(
                "1/unit_scale must be integral, got 1/{} = {n}",
                self.unit_scale
            )));
        }
        if self.font_size < 5 {
            return Err(Error::contract(format!(
                "font size must be at least 5, got {}",
                self.font_size
            )));
        }
        if self.canvas < 64 {
            return Err(Error::contract(format!(
                "canvas must be at least 64, got {}",
                self.canvas
            )));
        }
        if self.axis_thickness < 1 || self.tick_length < self.axis_thickness {
            return Err(Error::contract(
                "axis thickness must be >= 1 and tick length >= thickness".to_string(),
            ));
        }
        Ok(())
    }
}

/// Placement of one rendered tick label.
#[derive(Debug, Clone)]
pub struct LabelBox {
    pub value: f64,
    pub text: String,
    pub row: usize,
    pub col: usize,
    pub width: usize,
    pub height: usize,
    pub rotated: bool,
    /// True when this axis entry is served by the perpendicular axis' label
    /// at the crossing point and therefore drawn only once.
    pub shared: bool,
}

impl LabelBox {
    fn rect(&self) -> (usize, usize, usize, usize) {
        (self.row, self.col, self.row + self.height, self.col + self.width)
    }
}

/// Geometry metadata emitted alongside the raster.
#[derive(Debug, Clone)]
pub struct AxisLayout {
    pub x_labels: Vec<LabelBox>,
    pub y_labels: Vec<LabelBox>,
    /// Depth of the marking band measured from its anchoring edge/line.
    pub band_depth: usize,
    /// (top, left, side) of the content square for the padded variant.
    pub content_rect: Option<(usize, usize, usize)>,
}

/// Compact ruler text for a tick value: `0`, `.1`, `.15`, `1`.
fn label_text(value: f64, decimals: usize) -> String {
    if value.abs() < 1e-9 {
        return "0".to_string();
    }
    if (value - 1.0).abs() < 1e-9 {
        return "1".to_string();
    }
    let mut s = format!("{value:.decimals$}");
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    if let Some(rest) = s.strip_prefix("0.") {
        s = format!(".{rest}");
    }
    s
}

/// Smallest decimal count that prints every tick value exactly.
fn tick_decimals(n_units: usize) -> usize {
    for d in 1..=6usize {
        let scale = 10f64.powi(d as i32);
        let ok = (0..=n_units).all(|i| {
            let v = i as f64 / n_units as f64 * scale;
            (v - v.round()).abs() < 1e-6
        });
        if ok {
            return d;
        }
    }
    6
}

fn rects_overlap(a: (usize, usize, usize, usize), b: (usize, usize, usize, usize)) -> bool {
    a.0 < b.2 && b.0 < a.2 && a.1 < b.3 && b.1 < a.3
}

struct Placed {
    label: LabelBox,
    bitmap: Option<GlyphBitmap>,
}

struct LayoutCtx {
    th: usize,
    tick: usize,
    pitch: f64,
    values: Vec<f64>,
    texts: Vec<String>,
    strips: Vec<GlyphBitmap>,
    glyph_h: usize,
}

impl LayoutCtx {
    fn new(spec: &AxisSpec, pitch: f64) -> Result<Self> {
        let n_units = (1.0 / spec.unit_scale).round() as usize;
        let decimals = tick_decimals(n_units);
        let values: Vec<f64> = (0..=n_units).map(|i| i as f64 / n_units as f64).collect();
        let texts: Vec<String> = values.iter().map(|&v| label_text(v, decimals)).collect();
        let strips: Vec<GlyphBitmap> = texts
            .iter()
            .map(|t| rasterize_label(t, spec.font_size))
            .collect::<Result<_>>()?;
        let glyph_h = font::BASE_H * font::glyph_scale(spec.font_size);
        Ok(LayoutCtx {
            th: spec.axis_thickness as usize,
            tick: spec.tick_length as usize,
            pitch,
            values,
            texts,
            strips,
            glyph_h,
        })
    }

    /// Smallest stagger count k <= 3 whose same-row pitch clears the widest
    /// label plus a one-pixel gap. Larger k may still be needed near the
    /// axes crossing; the caller retries upward with a collision check.
    fn min_stagger(&self) -> Result<usize> {
        let max_w = self.strips.iter().map(|s| s.width).max().unwrap_or(0);
        for k in 1..=3usize {
            if k as f64 * self.pitch >= (max_w + 1) as f64 {
                return Ok(k);
            }
        }
        let a = &self.texts[0];
        let b = self.texts.get(3).unwrap_or(&self.texts[1]);
        Err(Error::render(format!(
            "labels {a:?} and {b:?} overlap: width {max_w}px exceeds three staggered rows at \
             tick pitch {:.1}px; reduce font size or unit density",
            self.pitch
        )))
    }

    fn band_depth(&self, k: usize) -> usize {
        self.tick + LABEL_MARGIN + k * self.glyph_h + (k - 1) * LABEL_MARGIN
    }
}

fn tick_pixel(v: f64, extent: usize) -> isize {
    (v * (extent - 1) as f64).round() as isize
}

/// First pair of drawn labels whose boxes intersect, if any.
fn first_collision(placed: &[Placed]) -> Option<Error> {
    let drawn: Vec<&Placed> = placed.iter().filter(|p| !p.label.shared).collect();
    for i in 0..drawn.len() {
        for j in (i + 1)..drawn.len() {
            if rects_overlap(drawn[i].label.rect(), drawn[j].label.rect()) {
                return Some(Error::render(format!(
                    "label {:?} at ({}, {}) overlaps label {:?} at ({}, {})",
                    drawn[i].label.text,
                    drawn[i].label.row,
                    drawn[i].label.col,
                    drawn[j].label.text,
                    drawn[j].label.row,
                    drawn[j].label.col,
                )));
            }
        }
    }
    None
}

/// Renders an axis image plus its layout metadata. Stagger depth is raised
/// (up to three rows) until the layout is collision-free; a layout that
/// still collides at depth three is a render error naming the collision.
pub fn render_axis_layout(spec: &AxisSpec) -> Result<(Raster, AxisLayout)> {
    spec.validate()?;
    let canvas = spec.canvas as usize;

    let pitch = match spec.variant {
        AxisVariant::ExternalPadded => {
            let content = (canvas as f64 * EXTERNAL_CONTENT_FRACTION).round() as usize;
            spec.unit_scale * (content - 1) as f64
        }
        _ => spec.unit_scale * (canvas - 1) as f64,
    };
    let ctx = LayoutCtx::new(spec, pitch)?;
    let k_min = ctx.min_stagger()?;

    let mut chosen = None;
    let mut last_err = None;
    for k in k_min..=3 {
        let parts = match spec.variant {
            AxisVariant::EdgeInternal => layout_edge_internal(spec, &ctx, k)?,
            AxisVariant::CrossAxis => layout_cross_axis(spec, &ctx, k)?,
            AxisVariant::ExternalPadded => layout_external_padded(spec, &ctx, k)?,
        };
        match first_collision(&parts.2) {
            None => {
                chosen = Some(parts);
                break;
            }
            Some(err) => last_err = Some(err),
        }
    }
    let Some((lines, ticks, placed, layout)) = chosen else {
        return Err(last_err.expect("collision error recorded"));
    };

    let mut raster = Raster::constant(canvas, canvas, [1.0; 3], Space::Pixel01);
    for (r0, c0, r1, c1) in lines.into_iter().chain(ticks) {
        fill_rect(&mut raster, r0, c0, r1, c1, 0.0);
    }
    for p in &placed {
        if p.label.shared {
            continue;
        }
        let bmp = p.bitmap.as_ref().expect("drawn label has a bitmap");
        // Punch out the background so a label crossing an axis line stays
        // legible.
        fill_rect(
            &mut raster,
            p.label.row,
            p.label.col,
            p.label.row + p.label.height,
            p.label.col + p.label.width,
            1.0,
        );
        for r in 0..bmp.height {
            for c in 0..bmp.width {
                if bmp.bit(r, c) {
                    let row = p.label.row + r;
                    let col = p.label.col + c;
                    if row < canvas && col < canvas {
                        for ch in 0..3 {
                            raster.set(row, col, ch, 0.0);
                        }
                    }
                }
            }
        }
    }

    // The per-variant layouts push all x labels first, then all y labels.
    let mut lay = layout;
    lay.x_labels = placed
        .iter()
        .take(spec.labels_per_axis())
        .map(|p| p.label.clone())
        .collect();
    lay.y_labels = placed
        .iter()
        .skip(spec.labels_per_axis())
        .map(|p| p.label.clone())
        .collect();
    Ok((raster, lay))
}

/// Renders an axis image.
pub fn render_axis(spec: &AxisSpec) -> Result<Raster> {
    render_axis_layout(spec).map(|(r, _)| r)
}

type Rect = (usize, usize, usize, usize);

fn fill_rect(r: &mut Raster, r0: usize, c0: usize, r1: usize, c1: usize, v: f64) {
    for row in r0..r1.min(r.height) {
        for col in c0..c1.min(r.width) {
            for ch in 0..3 {
                r.set(row, col, ch, v);
            }
        }
    }
}

fn clamp_pos(want: isize, lo: isize, hi: isize) -> Result<usize> {
    if hi < lo {
        return Err(Error::render(
            "label does not fit inside the canvas".to_string(),
        ));
    }
    Ok(want.clamp(lo, hi) as usize)
}

/// Axes along the top and left edges. X labels are horizontal below the top
/// band; y labels are rotated a quarter turn so the label band stays as deep
/// as the x band. The origin label is shared. Y stagger slots are offset by
/// one so near-origin labels of the two axes never share a diagonal.
fn layout_edge_internal(
    spec: &AxisSpec,
    ctx: &LayoutCtx,
    k: usize,
) -> Result<(Vec<Rect>, Vec<Rect>, Vec<Placed>, AxisLayout)> {
    let canvas = spec.canvas as usize;
    let (th, tick) = (ctx.th, ctx.tick);

    let lines = vec![(0, 0, th, canvas), (0, 0, canvas, th)];
    let mut ticks = Vec::new();
    let mut placed = Vec::new();

    let band0 = tick + LABEL_MARGIN;
    for (i, (&v, strip)) in ctx.values.iter().zip(&ctx.strips).enumerate() {
        let t = tick_pixel(v, canvas);
        let c0 = clamp_pos(t - th as isize / 2, 0, (canvas - th) as isize)?;
        ticks.push((0, c0, tick, c0 + th));
        let row = band0 + (i % k) * (ctx.glyph_h + LABEL_MARGIN);
        let col = clamp_pos(
            t - strip.width as isize / 2,
            th as isize,
            (canvas - strip.width) as isize,
        )?;
        placed.push(Placed {
            label: LabelBox {
                value: v,
                text: strip.text.clone(),
                row,
                col,
                width: strip.width,
                height: strip.height,
                rotated: false,
                shared: false,
            },
            bitmap: Some(strip.clone()),
        });
    }

    for (i, (&v, strip)) in ctx.values.iter().zip(&ctx.strips).enumerate() {
        let t = tick_pixel(v, canvas);
        let r0 = clamp_pos(t - th as isize / 2, 0, (canvas - th) as isize)?;
        ticks.push((r0, 0, r0 + th, tick));
        if i == 0 {
            // Crossing value: the x axis' origin label serves both axes.
            let mut shared = placed[0].label.clone();
            shared.shared = true;
            placed.push(Placed {
                label: shared,
                bitmap: None,
            });
            continue;
        }
        let rot = strip.rotated_ccw();
        let col = band0 + ((i + 1) % k) * (ctx.glyph_h + LABEL_MARGIN);
        let row = clamp_pos(
            t - rot.height as isize / 2,
            th as isize,
            (canvas - rot.height) as isize,
        )?;
        placed.push(Placed {
            label: LabelBox {
                value: v,
                text: strip.text.clone(),
                row,
                col,
                width: rot.width,
                height: rot.height,
                rotated: true,
                shared: false,
            },
            bitmap: Some(rot),
        });
    }

    let band = ctx.band_depth(k);
    Ok((
        lines,
        ticks,
        placed,
        AxisLayout {
            x_labels: Vec::new(),
            y_labels: Vec::new(),
            band_depth: band,
            content_rect: None,
        },
    ))
}

/// Cross-shaped axes centered in the canvas. Labels sit below the horizontal
/// line and right of the vertical line; the label at the crossing value is
/// shared.
fn layout_cross_axis(
    spec: &AxisSpec,
    ctx: &LayoutCtx,
    k: usize,
) -> Result<(Vec<Rect>, Vec<Rect>, Vec<Placed>, AxisLayout)> {
    let canvas = spec.canvas as usize;
    let (th, tick) = (ctx.th, ctx.tick);
    let mid = (canvas - th) / 2;

    let lines = vec![(mid, 0, mid + th, canvas), (0, mid, canvas, mid + th)];
    let mut ticks = Vec::new();
    let mut placed = Vec::new();

    let crossing = 0.5;
    let x_band0 = mid + tick + LABEL_MARGIN;
    for (i, (&v, strip)) in ctx.values.iter().zip(&ctx.strips).enumerate() {
        let t = tick_pixel(v, canvas);
        let c0 = clamp_pos(t - th as isize / 2, 0, (canvas - th) as isize)?;
        ticks.push((mid, c0, mid + tick, c0 + th));
        let row = x_band0 + (i % k) * (ctx.glyph_h + LABEL_MARGIN);
        let col = clamp_pos(
            t - strip.width as isize / 2,
            0,
            (canvas - strip.width) as isize,
        )?;
        placed.push(Placed {
            label: LabelBox {
                value: v,
                text: strip.text.clone(),
                row,
                col,
                width: strip.width,
                height: strip.height,
                rotated: false,
                shared: false,
            },
            bitmap: Some(strip.clone()),
        });
    }

    let y_band0 = mid + tick + LABEL_MARGIN;
    for (i, (&v, strip)) in ctx.values.iter().zip(&ctx.strips).enumerate() {
        let t = tick_pixel(v, canvas);
        let r0 = clamp_pos(t - th as isize / 2, 0, (canvas - th) as isize)?;
        ticks.push((r0, mid, r0 + th, mid + tick));
        if (v - crossing).abs() < 1e-9 {
            let mut shared = placed[i].label.clone();
            shared.shared = true;
            placed.push(Placed {
                label: shared,
                bitmap: None,
            });
            continue;
        }
        let rot = strip.rotated_ccw();
        let col = y_band0 + ((i + 1) % k) * (ctx.glyph_h + LABEL_MARGIN);
        let row = clamp_pos(
            t - rot.height as isize / 2,
            0,
            (canvas - rot.height) as isize,
        )?;
        placed.push(Placed {
            label: LabelBox {
                value: v,
                text: strip.text.clone(),
                row,
                col,
                width: rot.width,
                height: rot.height,
                rotated: true,
                shared: false,
            },
            bitmap: Some(rot),
        });
    }

    let band = ctx.band_depth(k);
    Ok((
        lines,
        ticks,
        placed,
        AxisLayout {
            x_labels: Vec::new(),
            y_labels: Vec::new(),
            band_depth: band,
            content_rect: None,
        },
    ))
}

/// Content shrunk to a centered inner square; axes frame it from the pad
/// band, ticks pointing outward and labels beyond the ticks.
fn layout_external_padded(
    spec: &AxisSpec,
    ctx: &LayoutCtx,
    k: usize,
) -> Result<(Vec<Rect>, Vec<Rect>, Vec<Placed>, AxisLayout)> {
    let canvas = spec.canvas as usize;
    let content = (canvas as f64 * EXTERNAL_CONTENT_FRACTION).round() as usize;
    let origin = (canvas - content) / 2;
    let (th, tick) = (ctx.th, ctx.tick);

    let band = ctx.band_depth(k);
    if band > origin {
        return Err(Error::render(format!(
            "labels need a {band}px band but the pad band is only {origin}px; \
             reduce font size or unit density"
        )));
    }

    let lines = vec![
        (origin - th, origin - th, origin, origin + content),
        (origin - th, origin - th, origin + content, origin),
    ];
    let mut ticks = Vec::new();
    let mut placed = Vec::new();

    for (i, (&v, strip)) in ctx.values.iter().zip(&ctx.strips).enumerate() {
        let t = origin as isize + tick_pixel(v, content);
        let c0 = clamp_pos(t - th as isize / 2, 0, (canvas - th) as isize)?;
        ticks.push((origin - tick, c0, origin, c0 + th));
        let row = origin - tick - LABEL_MARGIN - ctx.glyph_h - (i % k) * (ctx.glyph_h + LABEL_MARGIN);
        let col = clamp_pos(
            t - strip.width as isize / 2,
            0,
            (canvas - strip.width) as isize,
        )?;
        placed.push(Placed {
            label: LabelBox {
                value: v,
                text: strip.text.clone(),
                row,
                col,
                width: strip.width,
                height: strip.height,
                rotated: false,
                shared: false,
            },
            bitmap: Some(strip.clone()),
        });
    }

    for (i, (&v, strip)) in ctx.values.iter().zip(&ctx.strips).enumerate() {
        let t = origin as isize + tick_pixel(v, content);
        let r0 = clamp_pos(t - th as isize / 2, 0, (canvas - th) as isize)?;
        ticks.push((r0, origin - tick, r0 + th, origin));
        if i == 0 {
            let mut shared = placed[0].label.clone();
            shared.shared = true;
            placed.push(Placed {
                label: shared,
                bitmap: None,
            });
            continue;
        }
        let rot = strip.rotated_ccw();
        let col = origin
            - tick
            - LABEL_MARGIN
            - ctx.glyph_h
            - ((i + 1) % k) * (ctx.glyph_h + LABEL_MARGIN);
        let row = clamp_pos(
            t - rot.height as isize / 2,
            0,
            (canvas - rot.height) as isize,
        )?;
        placed.push(Placed {
            label: LabelBox {
                value: v,
                text: strip.text.clone(),
                row,
                col,
                width: rot.width,
                height: rot.height,
                rotated: true,
                shared: false,
            },
            bitmap: Some(rot),
        });
    }

    Ok((
        lines,
        ticks,
        placed,
        AxisLayout {
            x_labels: Vec::new(),
            y_labels: Vec::new(),
            band_depth: band,
            content_rect: Some((origin, origin, content)),
        },
    ))
}
