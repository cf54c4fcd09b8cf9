use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::rng::derive_seed;

// Blurs are in digital pixels: 0.3 px at 32 px spans the face fraction
// that 1 px does at 112 px.
fn d_blur() -> f64 {
    0.3
}
fn d_noise() -> f64 {
    0.01
}
fn d_levels() -> u32 {
    64
}
fn d_dot_gain() -> f64 {
    1.02
}
fn d_print_blur() -> f64 {
    0.15
}
fn d_oversample() -> usize {
    4
}

/// One simulated print-and-capture condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureParams {
    /// Lux; 1200 is unit exposure.
    pub illuminance: f64,
    /// Kelvin.
    pub color_temperature: f64,
    /// Degrees about the vertical axis.
    pub yaw_degrees: f64,
    #[serde(default = "d_blur")]
    pub blur_sigma: f64,
    #[serde(default = "d_noise")]
    pub sensor_noise_sigma: f64,
    #[serde(default = "d_levels")]
    pub print_levels: u32,
    /// Exponent of the dot-gain curve `v^g`; 1 disables it.
    #[serde(default = "d_dot_gain")]
    pub dot_gain: f64,
    /// Std of the printer's own blur in pixels.
    #[serde(default = "d_print_blur")]
    pub print_blur: f64,
    /// Print and camera resolve `oversample` times the digital resolution;
    /// blur and noise are stated in digital pixels regardless.
    #[serde(default = "d_oversample")]
    pub oversample: usize,
    #[serde(default)]
    pub seed: u64,
}

impl CaptureParams {
    /// Default severity at the given condition.
    pub fn new(illuminance: f64, color_temperature: f64, yaw_degrees: f64) -> Self {
        Self {
            illuminance,
            color_temperature,
            yaw_degrees,
            blur_sigma: d_blur(),
            sensor_noise_sigma: d_noise(),
            print_levels: d_levels(),
            dot_gain: d_dot_gain(),
            print_blur: d_print_blur(),
            oversample: d_oversample(),
            seed: 0,
        }
    }

    /// 1200 lux, 6500 K, head-on, lossless print, no blur or noise.
    pub fn neutral() -> Self {
        Self {
            illuminance: 1200.0,
            color_temperature: 6500.0,
            yaw_degrees: 0.0,
            blur_sigma: 0.0,
            sensor_noise_sigma: 0.0,
            print_levels: 256,
            dot_gain: 1.0,
            print_blur: 0.0,
            oversample: 1,
            seed: 0,
        }
    }

    /// The same condition at print resolution, with blur and noise rescaled
    /// so their effect after box downsampling is unchanged.
    pub fn at_print_resolution(&self) -> Self {
        let k = self.oversample as f64;
        Self {
            blur_sigma: self.blur_sigma * k,
            print_blur: self.print_blur * k,
            // the box average of k*k independent draws has std sigma / k
            sensor_noise_sigma: self.sensor_noise_sigma * k,
            oversample: 1,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.illuminance.is_finite() && self.illuminance > 0.0) {
            return contract(format!("illuminance must be > 0, got {}", self.illuminance));
        }
        if !(1000.0..=12000.0).contains(&self.color_temperature) {
            return contract(format!(
                "color temperature must lie in [1000, 12000] K, got {}",
                self.color_temperature
            ));
        }
        if !(self.yaw_degrees.abs() < 90.0) {
            return contract(format!(
                "yaw must lie in (-90, 90) degrees, got {}",
                self.yaw_degrees
            ));
        }
        if self.oversample == 0 {
            return contract("oversample must be >= 1");
        }
        if self.print_levels < 2 {
            return contract(format!(
                "print_levels must be >= 2, got {}",
                self.print_levels
            ));
        }
        for (name, v) in [
            ("blur_sigma", self.blur_sigma),
            ("sensor_noise_sigma", self.sensor_noise_sigma),
            ("print_blur", self.print_blur),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return contract(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !(self.dot_gain.is_finite() && self.dot_gain > 0.0) {
            return contract(format!("dot_gain must be > 0, got {}", self.dot_gain));
        }
        Ok(())
    }
}

fn d_lux() -> Vec<f64> {
    vec![800.0, 1200.0]
}
fn d_kelvin() -> Vec<f64> {
    vec![3000.0, 5000.0]
}
fn d_angles() -> usize {
    5
}
fn d_max_yaw() -> f64 {
    22.5
}
fn d_floor() -> f64 {
    0.05
}

/// Parameter ranges of a capture grid, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureGridConfig {
    #[serde(default = "d_lux")]
    pub lux: Vec<f64>,
    #[serde(default = "d_kelvin")]
    pub kelvin: Vec<f64>,
    /// Yaws evenly spaced over `[-max_yaw, max_yaw]`.
    #[serde(default = "d_angles")]
    pub n_angles: usize,
    #[serde(default = "d_max_yaw")]
    pub max_yaw: f64,
    #[serde(default = "d_blur")]
    pub blur_sigma: f64,
    #[serde(default = "d_noise")]
    pub sensor_noise_sigma: f64,
    #[serde(default = "d_levels")]
    pub print_levels: u32,
    #[serde(default = "d_dot_gain")]
    pub dot_gain: f64,
    #[serde(default = "d_print_blur")]
    pub print_blur: f64,
    #[serde(default = "d_oversample")]
    pub oversample: usize,
    #[serde(default = "d_floor")]
    pub sharpness_floor: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for CaptureGridConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields default")
    }
}

impl CaptureGridConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("grid config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn yaws(&self) -> Vec<f64> {
        match self.n_angles {
            0 => Vec::new(),
            1 => vec![0.0],
            n => (0..n)
                .map(|k| -self.max_yaw + 2.0 * self.max_yaw * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    /// Cross product in lux, kelvin, yaw order; point `k` gets its own seed.
    pub fn build(&self) -> Result<CaptureGrid> {
        let mut points = Vec::new();
        for &lux in &self.lux {
            for &kelvin in &self.kelvin {
                for yaw in self.yaws() {
                    let seed = derive_seed(self.seed, &[points.len() as u64]);
                    points.push(CaptureParams {
                        illuminance: lux,
                        color_temperature: kelvin,
                        yaw_degrees: yaw,
                        blur_sigma: self.blur_sigma,
                        sensor_noise_sigma: self.sensor_noise_sigma,
                        print_levels: self.print_levels,
                        dot_gain: self.dot_gain,
                        print_blur: self.print_blur,
                        oversample: self.oversample,
                        seed,
                    });
                }
            }
        }
        CaptureGrid::new(points, self.sharpness_floor)
    }
}

/// Enumerated capture conditions plus the cleaning floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureGrid {
    points: Vec<CaptureParams>,
    /// A capture is kept if its Laplacian energy is at least this fraction of
    /// the digital image's.
    sharpness_floor: f64,
}

impl CaptureGrid {
    pub fn new(points: Vec<CaptureParams>, sharpness_floor: f64) -> Result<Self> {
        if points.is_empty() {
            return contract("capture grid is empty");
        }
        for p in &points {
            p.validate()?;
        }
        if !(sharpness_floor.is_finite() && sharpness_floor >= 0.0) {
            return contract("sharpness floor must be >= 0");
        }
        Ok(Self {
            points,
            sharpness_floor,
        })
    }

    /// 2 lux x 2 kelvin x 5 yaws at default severity.
    pub fn standard(seed: u64) -> Self {
        CaptureGridConfig {
            seed,
            ..CaptureGridConfig::default()
        }
        .build()
        .expect("default grid is valid")
    }

    pub fn points(&self) -> &[CaptureParams] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sharpness_floor(&self) -> f64 {
        self.sharpness_floor
    }

    pub fn with_sharpness_floor(mut self, floor: f64) -> Self {
        self.sharpness_floor = floor;
        self
    }
}
