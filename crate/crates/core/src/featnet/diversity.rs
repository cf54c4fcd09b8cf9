//! Random crop-and-resize input diversity, with the exact adjoint used to pull
//! loss gradients back to the untransformed image.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::imagecore::ImageTensor;

fn default_fraction() -> f64 {
    0.07
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiversityConfig {
    pub enabled: bool,
    #[serde(default = "default_fraction")]
    pub max_crop_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            max_crop_fraction: default_fraction(),
            seed: 0,
        }
    }
}

impl DiversityConfig {
    pub fn enabled(seed: u64) -> Self {
        Self {
            enabled: true,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..0.5).contains(&self.max_crop_fraction) {
            Ok(())
        } else {
            contract(format!(
                "max_crop_fraction must lie in [0, 0.5), got {}",
                self.max_crop_fraction
            ))
        }
    }

    /// Largest crop, in pixels, allowed from an edge of the given length.
    pub fn max_crop(&self, edge: usize) -> usize {
        (self.max_crop_fraction * edge as f64).floor() as usize
    }
}

/// One sampled crop window, resized back to the full frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropResize {
    pub height: usize,
    pub width: usize,
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

/// Source taps `(lo, hi, frac)` for each output coordinate along one axis.
fn axis_taps(out_len: usize, start: usize, len: usize) -> Vec<(usize, usize, f64)> {
    let scale = len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            (start + lo, start + hi, s - lo as f64)
        })
        .collect()
}

impl CropResize {
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            top: 0,
            bottom: 0,
            left: 0,
            right: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.top == 0 && self.bottom == 0 && self.left == 0 && self.right == 0
    }

    fn taps(&self) -> (Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>) {
        let ch = self.height - self.top - self.bottom;
        let cw = self.width - self.left - self.right;
        (
            axis_taps(self.height, self.top, ch),
            axis_taps(self.width, self.left, cw),
        )
    }

    fn check(&self, x: &ImageTensor) -> Result<()> {
        if x.height() != self.height || x.width() != self.width {
            return contract("crop transform applied to an image of different size");
        }
        Ok(())
    }

    pub fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.check(x)?;
        if self.is_identity() {
            return Ok(x.clone());
        }
        let (ty, tx) = self.taps();
        let w = self.width;
        let mut out = ImageTensor::zeros(self.height, self.width, x.channels());
        for c in 0..x.channels() {
            let src = x.plane(c);
            let dst = out.plane_mut(c);
            for (i, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (j, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                    let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                    dst[i * w + j] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
        Ok(out)
    }

    /// Adjoint of [`forward`](Self::forward): maps a gradient on the
    /// transformed image back onto the source image.
    pub fn pullback(&self, grad: &ImageTensor) -> Result<ImageTensor> {
        self.check(grad)?;
        if self.is_identity() {
            return Ok(grad.clone());
        }
        let (ty, tx) = self.taps();
        let w = self.width;
        let mut out = ImageTensor::zeros(self.height, self.width, grad.channels());
        for c in 0..grad.channels() {
            let g = grad.plane(c);
            let dst = out.plane_mut(c);
            for (i, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (j, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let v = g[i * w + j];
                    if v == 0.0 {
                        continue;
                    }
                    dst[y0 * w + x0] += v * (1.0 - fy) * (1.0 - fx);
                    dst[y0 * w + x1] += v * (1.0 - fy) * fx;
                    dst[y1 * w + x0] += v * fy * (1.0 - fx);
                    dst[y1 * w + x1] += v * fy * fx;
                }
            }
        }
        Ok(out)
    }
}

/// Samples a crop of up to `floor(max_crop_fraction * edge)` pixels
/// independently for each edge and returns the resized image along with the
/// sampled transform. A disabled config yields the identity.
pub fn apply_input_diversity<R: Rng + ?Sized>(
    x: &ImageTensor,
    cfg: &DiversityConfig,
    rng: &mut R,
) -> Result<(ImageTensor, CropResize)> {
    cfg.validate()?;
    let (h, w) = (x.height(), x.width());
    if !cfg.enabled {
        return Ok((x.clone(), CropResize::identity(h, w)));
    }
    let (my, mx) = (cfg.max_crop(h), cfg.max_crop(w));
    let t = CropResize {
        height: h,
        width: w,
        top: rng.random_range(0..=my),
        bottom: rng.random_range(0..=my),
        left: rng.random_range(0..=mx),
        right: rng.random_range(0..=mx),
    };
    Ok((t.forward(x)?, t))
}
