//! Built-in 5x7 bitmap font for digits and the decimal point. Glyphs are
//! integer-scaled to the requested size, which keeps rendering byte-exact
//! across platforms with no font dependencies.

use crate::{Error, Result};

/// Base glyph grid dimensions.
pub const BASE_W: usize = 5;
pub const BASE_H: usize = 7;

/// Gap between glyphs in a label strip, in unscaled pixels.
pub const GLYPH_GAP: usize = 1;

/// One row per byte, low 5 bits used, MSB-first left to right.
const GLYPHS: [(char, [u8; 7]); 11] = [
    (
        '0',
        [
            0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110,
        ],
    ),
    (
        '1',
        [
            0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110,
        ],
    ),
    (
        '2',
        [
            0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111,
        ],
    ),
    (
        '3',
        [
            0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110,
        ],
    ),
    (
        '4',
        [
            0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010,
        ],
    ),
    (
        '5',
        [
            0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110,
        ],
    ),
    (
        '6',
        [
            0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110,
        ],
    ),
    (
        '7',
        [
            0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000,
        ],
    ),
    (
        '8',
        [
            0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110,
        ],
    ),
    (
        '9',
        [
            0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100,
        ],
    ),
    (
        '.',
        [
            0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100,
        ],
    ),
];

fn base_glyph(c: char) -> Option<&'static [u8; 7]> {
    GLYPHS.iter().find(|(g, _)| *g == c).map(|(_, rows)| rows)
}

/// Integer scale factor for a requested glyph height: the smallest multiple
/// of the 7-row base grid that reaches `font_size` (so a size-10 request
/// yields 14-pixel glyphs).
pub fn glyph_scale(font_size: u32) -> usize {
    (((font_size as usize) + BASE_H - 1) / BASE_H).max(1)
}

/// A rasterized label: a bit matrix where set bits are ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphBitmap {
    pub text: String,
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl GlyphBitmap {
    #[inline]
    pub fn bit(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// Rotates 90 degrees counter-clockwise, so horizontal text reads
    /// bottom-up along a vertical axis.
    pub fn rotated_ccw(&self) -> GlyphBitmap {
        let (w, h) = (self.height, self.width);
        let mut bits = vec![false; w * h];
        for r in 0..self.height {
            for c in 0..self.width {
                if self.bit(r, c) {
                    // (r, c) -> (h_out - 1 - c, r) with h_out = self.width
                    bits[(self.width - 1 - c) * w + r] = true;
                }
            }
        }
        GlyphBitmap {
            text: self.text.clone(),
            width: w,
            height: h,
            bits,
        }
    }
}

/// Lays out `text` as a horizontal strip: glyphs integer-scaled from the 5x7
/// grid, separated by a one-pixel gap.
pub fn rasterize_label(text: &str, font_size: u32) -> Result<GlyphBitmap> {
    if text.is_empty() {
        return Err(Error::render("empty label text".to_string()));
    }
    let scale = glyph_scale(font_size);
    let glyphs: Vec<&[u8; 7]> = text
        .chars()
        .map(|c| {
            base_glyph(c).ok_or_else(|| {
                Error::render(format!("unsupported label character {c:?} in {text:?}"))
            })
        })
        .collect::<Result<_>>()?;
    let n = glyphs.len();
    let width = n * BASE_W * scale + (n - 1) * GLYPH_GAP;
    let height = BASE_H * scale;
    let mut bits = vec![false; width * height];
    let mut x0 = 0usize;
    for rows in glyphs {
        for (gr, rowbits) in rows.iter().enumerate() {
            for gc in 0..BASE_W {
                if rowbits & (1 << (BASE_W - 1 - gc)) != 0 {
                    for dy in 0..scale {
                        for dx in 0..scale {
                            let r = gr * scale + dy;
                            let c = x0 + gc * scale + dx;
                            bits[r * width + c] = true;
                        }
                    }
                }
            }
        }
        x0 += BASE_W * scale + GLYPH_GAP;
    }
    Ok(GlyphBitmap {
        text: text.to_string(),
        width,
        height,
        bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_size_strip_width() {
        // "0.5" at base size: 3 glyphs plus 2 gaps.
        let strip = rasterize_label("0.5", 7).unwrap();
        assert_eq!(strip.width, 3 * 5 + 2);
        assert_eq!(strip.height, 7);
    }

    #[test]
    fn deterministic_rasterization() {
        let a = rasterize_label("1.0", 10).unwrap();
        let b = rasterize_label("1.0", 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn font_ten_scales_to_fourteen() {
        let strip = rasterize_label("0.05", 10).unwrap();
        assert_eq!(strip.height, 14);
        assert_eq!(strip.width, 4 * 10 + 3);
    }

    #[test]
    fn rejects_unsupported_character() {
        assert!(rasterize_label("1e-3", 10).is_err());
    }

    #[test]
    fn scale_rule() {
        assert_eq!(glyph_scale(5), 1);
        assert_eq!(glyph_scale(7), 1);
        assert_eq!(glyph_scale(8), 2);
        assert_eq!(glyph_scale(10), 2);
        assert_eq!(glyph_scale(14), 2);
        assert_eq!(glyph_scale(15), 3);
    }

    #[test]
    fn rotation_preserves_ink_count() {
        let strip = rasterize_label("0.5", 10).unwrap();
        let rot = strip.rotated_ccw();
        assert_eq!(rot.width, strip.height);
        assert_eq!(rot.height, strip.width);
        let ink = |b: &GlyphBitmap| b.bits.iter().filter(|&&x| x).count();
        assert_eq!(ink(&strip), ink(&rot));
    }
}
