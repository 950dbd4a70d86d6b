//! Box representations, padded-square coordinate normalization, IoU, and
//! threshold accuracy.
//!
//! Source-image pixel boxes are mapped into a square canvas whose side is the
//! longer image edge; the image is centered on the shorter axis. Normalized
//! coordinates are fractions of that square side, which is the coordinate
//! space every downstream consumer (dataset text, model vocabulary, scoring)
//! agrees on.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Width and height of a source image in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract(format!(
                "image dims must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }
}

/// Axis-aligned box in absolute pixel coordinates of a source frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub frame: ImageDims,
}

impl PixelBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, frame: ImageDims) -> Result<Self> {
        let (w, h) = (frame.width as f64, frame.height as f64);
        if !(0.0 <= x1 && x1 <= x2 && x2 <= w && 0.0 <= y1 && y1 <= y2 && y2 <= h) {
            return Err(Error::validation(format!(
                "pixel box [{x1}, {y1}, {x2}, {y2}] outside {w}x{h} frame or misordered"
            )));
        }
        Ok(Self { x1, y1, x2, y2, frame })
    }
}

/// Axis-aligned box in fractions of the padded square side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl NormBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let ok = 0.0 <= x1 && x1 <= x2 && x2 <= 1.0 && 0.0 <= y1 && y1 <= y2 && y2 <= 1.0;
        if !ok {
            return Err(Error::validation(format!(
                "normalized box [{x1}, {y1}, {x2}, {y2}] out of range or misordered"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Snaps every coordinate to two decimals (round half away from zero),
    /// the grid used by serialized conversations and the model vocabulary.
    pub fn quantized(&self) -> NormBox {
        let q = |v: f64| (v * 100.0).round() / 100.0;
        NormBox {
            x1: q(self.x1),
            y1: q(self.y1),
            x2: q(self.x2),
            y2: q(self.y2),
        }
    }

    /// Bracketed two-decimal form, e.g. `[0.52, 0.59, 0.82, 0.83]`.
    pub fn to_bracket_string(&self) -> String {
        format!(
            "[{:.2}, {:.2}, {:.2}, {:.2}]",
            self.x1, self.y1, self.x2, self.y2
        )
    }
}

/// Square canvas placement: side is the longer image edge, offsets center the
/// image along the shorter axis (floor division for odd paddings).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadPlacement {
    pub side: u32,
    pub offset_x: u32,
    pub offset_y: u32,
}

pub fn pad_placement(dims: ImageDims) -> PadPlacement {
    let side = dims.width.max(dims.height);
    PadPlacement {
        side,
        offset_x: (side - dims.width) / 2,
        offset_y: (side - dims.height) / 2,
    }
}

/// Maps a pixel box into padded-square fractions.
pub fn normalize_box(b: &PixelBox) -> NormBox {
    let place = pad_placement(b.frame);
    let side = place.side as f64;
    NormBox {
        x1: (b.x1 + place.offset_x as f64) / side,
        y1: (b.y1 + place.offset_y as f64) / side,
        x2: (b.x2 + place.offset_x as f64) / side,
        y2: (b.y2 + place.offset_y as f64) / side,
    }
}

/// Inverse of [`normalize_box`]; coordinates that land in the pad bands are
/// clamped back onto the frame.
pub fn denormalize_box(n: &NormBox, dims: ImageDims) -> PixelBox {
    let place = pad_placement(dims);
    let side = place.side as f64;
    let (w, h) = (dims.width as f64, dims.height as f64);
    let cx = |v: f64| (v * side - place.offset_x as f64).clamp(0.0, w);
    let cy = |v: f64| (v * side - place.offset_y as f64).clamp(0.0, h);
    PixelBox {
        x1: cx(n.x1),
        y1: cy(n.y1),
        x2: cx(n.x2),
        y2: cy(n.y2),
        frame: dims,
    }
}

/// Intersection over union. Defined as 0 when the union has zero area.
pub fn iou(a: &NormBox, b: &NormBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Fraction of prediction/ground-truth pairs with IoU at or above `threshold`.
/// Absent predictions count as misses; an IoU exactly at the threshold is a hit.
pub fn acc_at_iou(preds: &[Option<NormBox>], gts: &[NormBox], threshold: f64) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::contract(format!(
            "prediction/ground-truth length mismatch: {} vs {}",
            preds.len(),
            gts.len()
        )));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::contract(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )));
    }
    if gts.is_empty() {
        return Err(Error::contract("empty evaluation set".to_string()));
    }
    let hits = preds
        .iter()
        .zip(gts)
        .filter(|(p, gt)| p.map(|p| iou(&p, gt) >= threshold).unwrap_or(false))
        .count();
    Ok(hits as f64 / gts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dims(w: u32, h: u32) -> ImageDims {
        ImageDims::new(w, h).unwrap()
    }

    #[test]
    fn pad_placement_landscape() {
        let p = pad_placement(dims(640, 480));
        assert_eq!(p.side, 640);
        assert_eq!(p.offset_x, 0);
        assert_eq!(p.offset_y, 80);
    }

    #[test]
    fn pad_placement_square_identity() {
        let p = pad_placement(dims(336, 336));
        assert_eq!((p.side, p.offset_x, p.offset_y), (336, 0, 0));
    }

    #[test]
    fn pad_placement_portrait() {
        let p = pad_placement(dims(480, 640));
        assert_eq!(p.side, 640);
        assert_eq!(p.offset_x, 80);
        assert_eq!(p.offset_y, 0);
    }

    #[test]
    fn normalize_full_frame_landscape() {
        let b = PixelBox::new(0.0, 0.0, 640.0, 480.0, dims(640, 480)).unwrap();
        let n = normalize_box(&b);
        assert_eq!((n.x1, n.y1, n.x2, n.y2), (0.0, 0.125, 1.0, 0.875));
    }

    #[test]
    fn normalize_full_square() {
        let b = PixelBox::new(0.0, 0.0, 128.0, 128.0, dims(128, 128)).unwrap();
        let n = normalize_box(&b);
        assert_eq!((n.x1, n.y1, n.x2, n.y2), (0.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn normalize_square_frame_pass_through() {
        let b = PixelBox::new(245.0, 384.0, 283.0, 502.0, dims(1000, 1000)).unwrap();
        let n = normalize_box(&b);
        assert!((n.x1 - 0.245).abs() < 1e-12);
        assert!((n.y1 - 0.384).abs() < 1e-12);
        assert!((n.x2 - 0.283).abs() < 1e-12);
        assert!((n.y2 - 0.502).abs() < 1e-12);
    }

    #[test]
    fn denormalize_clamps_pad_overhang() {
        let n = NormBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = denormalize_box(&n, dims(640, 480));
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (0.0, 0.0, 640.0, 480.0));
    }

    #[test]
    fn denormalize_midpoint_degenerate() {
        let n = NormBox::new(0.5, 0.5, 0.5, 0.5).unwrap();
        let b = denormalize_box(&n, dims(100, 100));
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (50.0, 50.0, 50.0, 50.0));
    }

    #[test]
    fn roundtrip_within_half_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let w = rng.gen_range(1..2000);
            let h = rng.gen_range(1..2000);
            let d = dims(w, h);
            let x1 = rng.gen_range(0.0..w as f64);
            let x2 = rng.gen_range(x1..=w as f64);
            let y1 = rng.gen_range(0.0..h as f64);
            let y2 = rng.gen_range(y1..=h as f64);
            let b = PixelBox::new(x1, y1, x2, y2, d).unwrap();
            let back = denormalize_box(&normalize_box(&b), d);
            for (a, b) in [
                (b.x1, back.x1),
                (b.y1, back.y1),
                (b.x2, back.x2),
                (b.y2, back.y2),
            ] {
                assert!((a - b).abs() <= 0.5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn iou_identical() {
        let a = NormBox::new(0.1, 0.2, 0.6, 0.8).unwrap();
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint() {
        let a = NormBox::new(0.0, 0.0, 0.2, 0.2).unwrap();
        let b = NormBox::new(0.5, 0.5, 0.9, 0.9).unwrap();
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_quarter_overlap_is_one_seventh() {
        let a = NormBox::new(0.0, 0.0, 0.5, 0.5).unwrap();
        let b = NormBox::new(0.25, 0.25, 0.75, 0.75).unwrap();
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn iou_degenerate_pair_is_zero() {
        let a = NormBox::new(0.3, 0.3, 0.3, 0.3).unwrap();
        assert_eq!(iou(&a, &a), 0.0);
    }

    /// Brute-force membership counting on a 1000x1000 grid of pixel centers.
    /// Exact for boxes whose coordinates are multiples of 1/1000.
    fn iou_pixel_oracle(a: &NormBox, b: &NormBox) -> f64 {
        const G: usize = 1000;
        let inside = |bx: &NormBox, x: f64, y: f64| {
            bx.x1 <= x && x <= bx.x2 && bx.y1 <= y && y <= bx.y2
        };
        let (mut na, mut nb, mut ni) = (0u64, 0u64, 0u64);
        for i in 0..G {
            let y = (i as f64 + 0.5) / G as f64;
            for j in 0..G {
                let x = (j as f64 + 0.5) / G as f64;
                let ia = inside(a, x, y);
                let ib = inside(b, x, y);
                na += ia as u64;
                nb += ib as u64;
                ni += (ia && ib) as u64;
            }
        }
        let union = na + nb - ni;
        if union == 0 {
            0.0
        } else {
            ni as f64 / union as f64
        }
    }

    fn random_grid_box(rng: &mut ChaCha8Rng) -> NormBox {
        let mut c = || rng.gen_range(0..=1000) as f64 / 1000.0;
        let (a, b) = (c(), c());
        let (d, e) = (c(), c());
        NormBox::new(a.min(b), d.min(e), a.max(b), d.max(e)).unwrap()
    }

    #[test]
    fn iou_matches_pixel_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let a = random_grid_box(&mut rng);
            let b = random_grid_box(&mut rng);
            assert!((iou(&a, &b) - iou_pixel_oracle(&a, &b)).abs() < 1e-3);
        }
    }

    #[test]
    fn normalize_is_monotone_in_extent() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..2000 {
            let w = rng.gen_range(1..1200);
            let h = rng.gen_range(1..1200);
            let d = dims(w, h);
            let x1 = rng.gen_range(0.0..w as f64);
            let x2 = rng.gen_range(x1..=w as f64);
            let y1 = rng.gen_range(0.0..h as f64);
            let y2 = rng.gen_range(y1..=h as f64);
            let small = PixelBox::new(x1, y1, x2, y2, d).unwrap();
            let big = PixelBox::new(
                rng.gen_range(0.0..=x1),
                rng.gen_range(0.0..=y1),
                rng.gen_range(x2..=w as f64),
                rng.gen_range(y2..=h as f64),
                d,
            )
            .unwrap();
            let ns = normalize_box(&small);
            let nb = normalize_box(&big);
            assert!(nb.width() >= ns.width() - 1e-12);
            assert!(nb.height() >= ns.height() - 1e-12);
        }
    }

    #[test]
    fn acc_at_iou_basics() {
        let gt = NormBox::new(0.1, 0.1, 0.5, 0.5).unwrap();
        let gts = vec![gt; 3];
        let all_right = vec![Some(gt); 3];
        assert_eq!(acc_at_iou(&all_right, &gts, 0.5).unwrap(), 1.0);
        let absent = vec![None; 3];
        assert_eq!(acc_at_iou(&absent, &gts, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn acc_at_iou_two_hits_one_low_overlap() {
        let a = NormBox::new(0.0, 0.0, 0.5, 0.5).unwrap();
        let shifted = NormBox::new(0.25, 0.25, 0.75, 0.75).unwrap();
        let gts = vec![a, a, a];
        let preds = vec![Some(a), Some(a), Some(shifted)];
        let acc = acc_at_iou(&preds, &gts, 0.5).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn acc_at_iou_threshold_tie_is_hit() {
        // IoU exactly 0.5: boxes [0,0,1,0.5] vs [0,0,1,1].
        let half = NormBox::new(0.0, 0.0, 1.0, 0.5).unwrap();
        let full = NormBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(iou(&half, &full), 0.5);
        let acc = acc_at_iou(&[Some(half)], &[full], 0.5).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn acc_at_iou_rejects_length_mismatch() {
        let gt = NormBox::new(0.1, 0.1, 0.5, 0.5).unwrap();
        assert!(acc_at_iou(&[], &[gt], 0.5).is_err());
    }

    #[test]
    fn acc_at_iou_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gts: Vec<NormBox> = (0..40).map(|_| random_grid_box(&mut rng)).collect();
        let preds: Vec<Option<NormBox>> = (0..40)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    None
                } else {
                    Some(random_grid_box(&mut rng))
                }
            })
            .collect();
        let base = acc_at_iou(&preds, &gts, 0.5).unwrap();
        let mut idx: Vec<usize> = (0..40).collect();
        for _ in 0..5 {
            use rand::seq::SliceRandom;
            idx.shuffle(&mut rng);
            let p: Vec<_> = idx.iter().map(|&i| preds[i]).collect();
            let g: Vec<_> = idx.iter().map(|&i| gts[i]).collect();
            assert_eq!(acc_at_iou(&p, &g, 0.5).unwrap(), base);
        }
    }

    #[test]
    fn quantize_snaps_to_two_decimal_grid() {
        let b = NormBox::new(0.15625, 0.152083, 0.5, 0.264583).unwrap();
        let q = b.quantized();
        assert_eq!(q.to_bracket_string(), "[0.16, 0.15, 0.50, 0.26]");
    }
}
