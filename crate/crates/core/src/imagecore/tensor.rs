use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// A planar `channels × height × width` grid of `f64` pixel values.
///
/// Face and adversarial images live in `[0, 1]`; gradients and noise
/// deltas reuse the same carrier with signed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Wraps planar data (`data[c * h * w + i * w + j]`).
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return contract(format!(
                "image dims must be positive, got {height}x{width}x{channels}"
            ));
        }
        if data.len() != height * width * channels {
            return contract(format!(
                "image buffer holds {} values, expected {}",
                data.len(),
                height * width * channels
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for i in 0..height {
                for j in 0..width {
                    data.push(f(c, i, j));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, i: usize, j: usize) -> usize {
        c * self.height * self.width + i * self.width + j
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.index(c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let k = self.index(c, i, j);
        self.data[k] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_dims(&self, other: &ImageTensor) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn check_same_dims(&self, other: &ImageTensor, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            contract(format!(
                "{what}: dims {:?} differ from {:?}",
                other.dims(),
                self.dims()
            ))
        }
    }

    pub(crate) fn check_mask(&self, mask: &BinaryMask, what: &str) -> Result<()> {
        if mask.height() == self.height && mask.width() == self.width {
            Ok(())
        } else {
            contract(format!(
                "{what}: mask is {}x{}, image is {}x{}",
                mask.height(),
                mask.width(),
                self.height,
                self.width
            ))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageTensor {
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `self - other`. Panics on mismatched dims.
    pub fn sub(&self, other: &ImageTensor) -> ImageTensor {
        assert!(self.same_dims(other), "sub: dims mismatch");
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// `self += scale * other`. Panics on mismatched dims.
    pub fn add_scaled(&mut self, other: &ImageTensor, scale: f64) {
        assert!(self.same_dims(other), "add_scaled: dims mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self - other|` over all entries.
    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        assert!(self.same_dims(other), "max_abs_diff: dims mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    /// Rounds every value to the nearest multiple of 1/255, as an 8-bit
    /// store-and-reload would.
    pub fn quantize_u8(&self) -> ImageTensor {
        self.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }

    /// Luma (Rec. 709 weights) for 3-channel images, the single plane otherwise.
    pub fn luma(&self) -> Vec<f64> {
        if self.channels == 3 {
            let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
            r.iter()
                .zip(g)
                .zip(b)
                .map(|((r, g), b)| 0.2126 * r + 0.7152 * g + 0.0722 * b)
                .collect()
        } else {
            self.plane(0).to_vec()
        }
    }
}

/// Per-pixel `{0, 1}` mask shared by every channel of the image it masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return contract(format!(
                "mask buffer holds {} values, expected {}",
                data.len(),
                height * width
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn at(&self, k: usize) -> bool {
        self.data[k]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.width + j] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!(
            (self.height, self.width),
            (other.height, other.width),
            "union: dims mismatch"
        );
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    pub fn overlaps(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(&other.data).any(|(a, b)| *a && *b)
    }
}

/// Per-pixel activation thresholds for the masked smoothness loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMatrix {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ThresholdMatrix {
    pub fn uniform(height: usize, width: usize, tau: f64) -> Result<Self> {
        Self::from_vec(height, width, vec![tau; height * width])
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return contract(format!(
                "threshold buffer holds {} values, expected {}",
                data.len(),
                height * width
            ));
        }
        if let Some(bad) = data.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return contract(format!("thresholds must be finite and >= 0, found {bad}"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}
