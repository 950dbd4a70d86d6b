//! The learnable global position prompt: initialization from an axis image,
//! the border mask that limits where the prompt is visible, and the masked
//! alpha blend that lays it over a preprocessed input.
//!
//! The blend is `alpha * x + (1 - alpha) * interpolate(prompt * mask)`, per
//! channel, with the single-channel mask broadcast over channels. At matched
//! sizes the interpolation is the identity, so masked-out prompt entries can
//! never influence the output (and never receive gradient during training).

use serde::{Deserialize, Serialize};

use crate::axis::{render_axis, AxisSpec};
use crate::raster::{
    destandardize, interpolate_to, preprocess, PreprocessConfig, Raster, Space,
};
use crate::{Error, Result};

/// Blend weight and mask width for the global prompt overlay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayConfig {
    pub alpha: f64,
    pub mask_width: u32,
}

impl Default for OverlayConfig {
    fn default() -> Self {
        OverlayConfig {
            alpha: 0.95,
            mask_width: 30,
        }
    }
}

impl OverlayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::contract(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Border mask: ones in a band of width `w` along every edge, zeros inside.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub side: usize,
    pub width: usize,
    pub bits: Vec<u8>,
}

impl BinaryMask {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.side + col]
    }

    pub fn ones_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

/// Builds the border mask. `w = 0` is all zeros; `w >= side/2` is all ones.
pub fn make_mask(side: usize, w: usize) -> Result<BinaryMask> {
    let half_up = (side + 1) / 2;
    if w > half_up {
        return Err(Error::contract(format!(
            "mask width {w} exceeds ceil(side/2) = {half_up} for side {side}"
        )));
    }
    let mut bits = vec![0u8; side * side];
    for row in 0..side {
        for col in 0..side {
            let d = row.min(col).min(side - 1 - row).min(side - 1 - col);
            if d < w {
                bits[row * side + col] = 1;
            }
        }
    }
    Ok(BinaryMask {
        side,
        width: w,
        bits,
    })
}

/// The learnable global prompt parameter: a standardized raster plus a
/// trainable flag. Values live in the `global_vpp` parameter group during
/// training.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalVpp {
    pub values: Raster,
    pub trainable: bool,
}

/// Initializes the global prompt by pushing a rendered axis image through the
/// preprocessing transform. Trainable by default.
pub fn init_global_vpp(spec: &AxisSpec, cfg: &PreprocessConfig) -> Result<GlobalVpp> {
    let axis = render_axis(spec)?;
    let values = preprocess(&axis, cfg)?;
    Ok(GlobalVpp {
        values,
        trainable: true,
    })
}

/// Masked alpha blend of the prompt over a preprocessed input:
/// `alpha * x + (1 - alpha) * interpolate(prompt * mask)`.
pub fn overlay(
    x_processed: &Raster,
    vpp: &GlobalVpp,
    mask: &BinaryMask,
    alpha: f64,
) -> Result<Raster> {
    if x_processed.space != Space::Standardized {
        return Err(Error::contract(
            "overlay expects a standardized input raster".to_string(),
        ));
    }
    if !x_processed.is_square() || !vpp.values.is_square() {
        return Err(Error::contract(
            "overlay expects square rasters".to_string(),
        ));
    }
    if mask.side != vpp.values.height {
        return Err(Error::contract(format!(
            "mask side {} does not match prompt side {}",
            mask.side, vpp.values.height
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }

    let mut masked = vpp.values.clone();
    for row in 0..masked.height {
        for col in 0..masked.width {
            let m = mask.get(row, col) as f64;
            for ch in 0..masked.channels {
                let v = masked.get(row, col, ch);
                masked.set(row, col, ch, v * m);
            }
        }
    }
    let scaled = interpolate_to(&masked, x_processed.height)?;

    let mut out = x_processed.clone();
    for (o, p) in out.data.iter_mut().zip(&scaled.data) {
        *o = alpha * *o + (1.0 - alpha) * *p;
    }
    Ok(out)
}

/// Human-viewable overlay: standardizes a [0,1] image, blends, then maps back
/// to [0,1] with clamping.
pub fn preview_overlay(
    image: &Raster,
    vpp: &GlobalVpp,
    mask: &BinaryMask,
    alpha: f64,
    cfg: &PreprocessConfig,
) -> Result<Raster> {
    let processed = preprocess(image, cfg)?;
    let blended = overlay(&processed, vpp, mask, alpha)?;
    let mut out = destandardize(&blended, cfg)?;
    for v in out.data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}
