use rand_distr::{Distribution, Normal};

use super::params::CaptureParams;
use crate::error::{contract, Result};
use crate::imagecore::{
    downsample_box, gaussian_blur, sample_bilinear, upsample_nearest, ImageTensor,
};
use crate::rng::rng_from;

/// Gray level written where a warp sees nothing.
pub const FILL: f64 = 0.5;

/// Uniform quantizer with round-half-up: `floor(v * (L - 1) + 0.5) / (L - 1)`.
pub fn quantize_levels(v: f64, levels: u32) -> f64 {
    let steps = (levels - 1) as f64;
    (v * steps + 0.5).floor() / steps
}

/// Quantization to `print_levels`, dot gain `v^dot_gain`, then the printer blur.
pub fn simulate_print(x: &ImageTensor, params: &CaptureParams) -> Result<ImageTensor> {
    params.validate()?;
    if !x.in_unit_range() {
        return contract("print input must lie in [0, 1]");
    }
    let levels = params.print_levels;
    let gain = params.dot_gain;
    let printed = x.map(|v| {
        let q = quantize_levels(v, levels);
        if gain == 1.0 {
            q
        } else {
            q.powf(gain)
        }
    });
    Ok(gaussian_blur(&printed, params.print_blur))
}

/// RGB of a blackbody at `kelvin`, scaled to `[0, 1]`, by Tanner Helland's
/// curve fit.
pub fn kelvin_to_rgb(kelvin: f64) -> [f64; 3] {
    let t = kelvin / 100.0;
    let r = if t <= 66.0 {
        255.0
    } else {
        329.698727446 * (t - 60.0).powf(-0.1332047592)
    };
    let g = if t <= 66.0 {
        99.4708025861 * t.ln() - 161.1195681661
    } else {
        288.1221695283 * (t - 60.0).powf(-0.0755148492)
    };
    let b = if t >= 66.0 {
        255.0
    } else if t <= 19.0 {
        0.0
    } else {
        138.5177312231 * (t - 10.0).ln() - 305.0447927307
    };
    [r, g, b].map(|v| v.clamp(0.0, 255.0) / 255.0)
}

/// Per-channel gains of an illuminant relative to 6500 K.
pub fn white_balance_gains(kelvin: f64) -> [f64; 3] {
    let rgb = kelvin_to_rgb(kelvin);
    let reference = kelvin_to_rgb(6500.0);
    [0, 1, 2].map(|c| rgb[c] / reference[c])
}

/// `illuminance / 1200`
pub fn exposure_factor(illuminance: f64) -> f64 {
    illuminance / 1200.0
}

/// Planar homography of a camera yawed by `theta` about the image's vertical
/// axis at distance `d = 1.5 * max(h, w)` pixels, in centered coordinates:
/// `[[d cos t, 0, 0], [0, d, 0], [sin t, 0, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawHomography {
    cos: f64,
    sin: f64,
    d: f64,
    cx: f64,
    cy: f64,
}

impl YawHomography {
    pub fn new(height: usize, width: usize, yaw_degrees: f64) -> Self {
        let t = yaw_degrees.to_radians();
        Self {
            cos: t.cos(),
            sin: t.sin(),
            d: 1.5 * height.max(width) as f64,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    /// Print-plane pixel `(y, x)` to its position in the captured frame.
    pub fn forward(&self, y: f64, x: f64) -> Option<(f64, f64)> {
        let (px, py) = (x - self.cx, y - self.cy);
        let den = self.sin * px + self.d;
        if den <= 0.0 {
            return None;
        }
        Some((
            self.d * py / den + self.cy,
            self.d * self.cos * px / den + self.cx,
        ))
    }

    /// Captured-frame pixel `(y, x)` back to the print plane.
    pub fn inverse(&self, y: f64, x: f64) -> Option<(f64, f64)> {
        let (qx, qy) = (x - self.cx, y - self.cy);
        let den = self.d * self.cos - qx * self.sin;
        if den <= 0.0 {
            return None;
        }
        let px = qx * self.d / den;
        let py = qy * (self.sin * px + self.d) / self.d;
        Some((py + self.cy, px + self.cx))
    }
}

/// Resamples `img` through `map` (output pixel to source position); returns
/// the warped image and how many output pixels saw the source.
fn warp(img: &ImageTensor, map: impl Fn(f64, f64) -> Option<(f64, f64)>) -> (ImageTensor, usize) {
    let (h, w, c) = img.dims();
    let mut out = ImageTensor::filled(h, w, c, FILL);
    let mut visible = 0;
    for i in 0..h {
        for j in 0..w {
            let Some((sy, sx)) = map(i as f64, j as f64) else {
                continue;
            };
            if sample_bilinear(img, 0, sy, sx).is_none() {
                continue;
            }
            visible += 1;
            for ch in 0..c {
                out.set(
                    ch,
                    i,
                    j,
                    sample_bilinear(img, ch, sy, sx).expect("checked in range"),
                );
            }
        }
    }
    (out, visible)
}

fn channel_gains(img: &ImageTensor, params: &CaptureParams) -> Vec<f64> {
    let wb = white_balance_gains(params.color_temperature);
    (0..img.channels())
        .map(|c| if img.channels() == 3 { wb[c] } else { 1.0 })
        .collect()
}

/// Exposure, white balance, yaw warp, blur, seeded sensor noise, clamp.
pub fn simulate_capture(x: &ImageTensor, params: &CaptureParams) -> Result<ImageTensor> {
    params.validate()?;
    let (h, w, _) = x.dims();
    let s = exposure_factor(params.illuminance);
    let mut lit = x.map(|v| (v * s).clamp(0.0, 1.0));
    for (c, g) in channel_gains(x, params).into_iter().enumerate() {
        for v in lit.plane_mut(c) {
            *v *= g;
        }
    }
    let hom = YawHomography::new(h, w, params.yaw_degrees);
    let (warped, visible) = warp(&lit, |y, x| hom.inverse(y, x));
    if visible == 0 {
        return contract(format!(
            "yaw {} leaves no visible region",
            params.yaw_degrees
        ));
    }
    let mut out = gaussian_blur(&warped, params.blur_sigma);
    if params.sensor_noise_sigma > 0.0 {
        let mut rng = rng_from(params.seed);
        let normal = Normal::new(0.0, params.sensor_noise_sigma).expect("sigma validated");
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    out.clamp01();
    Ok(out)
}

/// Undoes the known geometry and photometry of a capture: inverse warp back
/// to the print plane, then division by the exposure and white-balance gains.
pub fn realign(captured: &ImageTensor, params: &CaptureParams) -> Result<ImageTensor> {
    params.validate()?;
    let (h, w, _) = captured.dims();
    let hom = YawHomography::new(h, w, params.yaw_degrees);
    let (mut out, visible) = warp(captured, |y, x| hom.forward(y, x));
    if visible == 0 {
        return contract(format!(
            "yaw {} leaves no visible region",
            params.yaw_degrees
        ));
    }
    let s = exposure_factor(params.illuminance);
    for (c, g) in channel_gains(captured, params).into_iter().enumerate() {
        let k = s * g;
        for v in out.plane_mut(c) {
            *v /= k;
        }
    }
    out.clamp01();
    Ok(out)
}

/// Mean squared 4-neighbour Laplacian of the luma over interior pixels.
pub fn laplacian_energy(img: &ImageTensor) -> f64 {
    let (h, w) = (img.height(), img.width());
    if h < 3 || w < 3 {
        return 0.0;
    }
    let y = img.luma();
    let mut total = 0.0;
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            let k = i * w + j;
            let lap = 4.0 * y[k] - y[k - 1] - y[k + 1] - y[k - w] - y[k + w];
            total += lap * lap;
        }
    }
    total / ((h - 2) * (w - 2)) as f64
}

/// Intermediate images of one print-and-capture, all at digital resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureStages {
    pub printed: ImageTensor,
    /// 8-bit camera readout.
    pub captured: ImageTensor,
    pub realigned: ImageTensor,
}

/// Print, capture, 8-bit readout and realignment at `oversample` times the
/// digital resolution, each stage box-downsampled back.
pub fn capture_stages(x: &ImageTensor, params: &CaptureParams) -> Result<CaptureStages> {
    params.validate()?;
    let k = params.oversample;
    let fine = params.at_print_resolution();
    let printed = simulate_print(&upsample_nearest(x, k), &fine)?;
    let captured = simulate_capture(&printed, &fine)?.quantize_u8();
    let realigned = realign(&captured, &fine)?;
    Ok(CaptureStages {
        printed: downsample_box(&printed, k),
        captured: downsample_box(&captured, k),
        realigned: downsample_box(&realigned, k),
    })
}

/// What the verifier sees of a printed `x`.
pub fn print_and_capture(x: &ImageTensor, params: &CaptureParams) -> Result<ImageTensor> {
    Ok(capture_stages(x, params)?.realigned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::tv_loss;
    use crate::imagecore::BinaryMask;

    fn face_like(h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, 3, |c, i, j| {
            (0.5 + 0.3 * ((i as f64 * 0.4).sin() * (j as f64 * 0.3 + c as f64).cos()))
                .clamp(0.0, 1.0)
        })
        .quantize_u8()
    }

    #[test]
    fn neutral_print_and_capture_is_identity() {
        let x = face_like(24, 20);
        let p = CaptureParams::neutral();
        let printed = simulate_print(&x, &p).unwrap();
        assert!(printed.max_abs_diff(&x) <= 1.0 / 255.0 + 1e-12);
        let captured = simulate_capture(&printed, &p).unwrap();
        assert!(captured.max_abs_diff(&x) <= 1.0 / 255.0 + 1e-12);
        assert!(print_and_capture(&x, &p).unwrap().max_abs_diff(&x) <= 2.0 / 255.0);
    }

    #[test]
    fn two_level_print_rounds_half_up() {
        let mut p = CaptureParams::neutral();
        p.print_levels = 2;
        let x = ImageTensor::filled(3, 3, 1, 0.5);
        assert!(simulate_print(&x, &p)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
        let y = ImageTensor::filled(3, 3, 1, 0.49);
        assert!(simulate_print(&y, &p)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn print_blur_reduces_checkerboard_tv() {
        let mut p = CaptureParams::neutral();
        p.print_blur = 0.5;
        let region = BinaryMask::full(8, 8);
        let board = ImageTensor::from_fn(8, 8, 1, |_, i, j| ((i + j) % 2) as f64);
        let flat = ImageTensor::filled(8, 8, 1, 0.5);
        let tv_board = tv_loss(&board, &region).unwrap();
        let tv_after = tv_loss(&simulate_print(&board, &p).unwrap(), &region).unwrap();
        assert!(tv_after < tv_board);
        assert_eq!(
            tv_loss(&simulate_print(&flat, &p).unwrap(), &region).unwrap(),
            0.0
        );
    }

    #[test]
    fn exposure_ratio() {
        assert!((exposure_factor(800.0) - 2.0 / 3.0).abs() < 1e-15);
        let mut p = CaptureParams::neutral();
        p.illuminance = 800.0;
        let x = ImageTensor::filled(4, 4, 1, 0.9);
        let y = simulate_capture(&x, &p).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.6).abs() < 1e-12));
    }

    #[test]
    fn white_balance_is_neutral_at_6500() {
        let g = white_balance_gains(6500.0);
        assert!(g.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let warm = white_balance_gains(3000.0);
        assert!(warm[0] >= warm[1] && warm[1] > warm[2]);
    }

    #[test]
    fn homography_inverse_round_trips() {
        let hom = YawHomography::new(40, 30, 17.0);
        for (y, x) in [(0.0, 0.0), (12.3, 7.7), (39.0, 29.0)] {
            let (fy, fx) = hom.forward(y, x).unwrap();
            let (by, bx) = hom.inverse(fy, fx).unwrap();
            assert!((by - y).abs() < 1e-9 && (bx - x).abs() < 1e-9);
        }
    }

    #[test]
    fn yaw_realignment_recovers_interior() {
        let x = face_like(32, 32);
        let mut p = CaptureParams::neutral();
        p.yaw_degrees = 20.0;
        let back = realign(&simulate_capture(&x, &p).unwrap(), &p).unwrap();
        let mut worst: f64 = 0.0;
        for c in 0..3 {
            for i in 8..24 {
                for j in 8..24 {
                    worst = worst.max((back.get(c, i, j) - x.get(c, i, j)).abs());
                }
            }
        }
        assert!(worst < 0.15, "{worst}");
        assert!(back.max_abs_diff(&x) > 0.0);
    }

    #[test]
    fn capture_is_seeded() {
        let x = face_like(16, 16);
        let mut p = CaptureParams::new(800.0, 3000.0, 11.25);
        p.seed = 5;
        assert_eq!(
            simulate_capture(&x, &p).unwrap(),
            simulate_capture(&x, &p).unwrap()
        );
        let mut q = p;
        q.seed = 6;
        assert_ne!(
            simulate_capture(&x, &p).unwrap(),
            simulate_capture(&x, &q).unwrap()
        );
    }

    #[test]
    fn laplacian_energy_orders_sharpness() {
        let x = face_like(20, 20);
        assert!(laplacian_energy(&gaussian_blur(&x, 1.5)) < laplacian_energy(&x));
        assert!(laplacian_energy(&ImageTensor::filled(5, 5, 3, 0.2)) < 1e-20);
    }
}
