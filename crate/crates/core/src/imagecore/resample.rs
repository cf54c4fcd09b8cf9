use super::tensor::ImageTensor;

/// Bilinear sample of plane `c` at fractional `(y, x)` (pixel centers at
/// integer coordinates). Returns `None` outside `[0, h-1] x [0, w-1]`.
pub fn sample_bilinear(img: &ImageTensor, c: usize, y: f64, x: f64) -> Option<f64> {
    let (h, w) = (img.height() as f64, img.width() as f64);
    if !(y >= 0.0 && x >= 0.0 && y <= h - 1.0 && x <= w - 1.0) {
        return None;
    }
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let y1 = (y0 + 1).min(img.height() - 1);
    let x1 = (x0 + 1).min(img.width() - 1);
    let top = img.get(c, y0, x0) * (1.0 - fx) + img.get(c, y0, x1) * fx;
    let bottom = img.get(c, y1, x0) * (1.0 - fx) + img.get(c, y1, x1) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur with replicated borders. `sigma <= 0` is the identity.
pub fn gaussian_blur(img: &ImageTensor, sigma: f64) -> ImageTensor {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w, _) = img.dims();
    let mut tmp = img.clone();
    let mut out = img.clone();
    for c in 0..img.channels() {
        let src = img.plane(c);
        let mid = tmp.plane_mut(c);
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let jj = (j as isize + t as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += kv * src[i * w + jj];
                }
                mid[i * w + j] = acc;
            }
        }
        let mid = tmp.plane(c).to_vec();
        let dst = out.plane_mut(c);
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let ii = (i as isize + t as isize - r).clamp(0, h as isize - 1) as usize;
                    acc += kv * mid[ii * w + j];
                }
                dst[i * w + j] = acc;
            }
        }
    }
    out
}

/// Each pixel becomes a `k x k` block.
pub fn upsample_nearest(img: &ImageTensor, k: usize) -> ImageTensor {
    let (h, w, c) = img.dims();
    ImageTensor::from_fn(h * k, w * k, c, |ch, i, j| img.get(ch, i / k, j / k))
}

/// Mean of each `k x k` block; dimensions must be multiples of `k`.
pub fn downsample_box(img: &ImageTensor, k: usize) -> ImageTensor {
    let (h, w, c) = img.dims();
    debug_assert!(h % k == 0 && w % k == 0);
    let area = (k * k) as f64;
    ImageTensor::from_fn(h / k, w / k, c, |ch, i, j| {
        let mut acc = 0.0;
        for di in 0..k {
            for dj in 0..k {
                acc += img.get(ch, i * k + di, j * k + dj);
            }
        }
        acc / area
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_undoes_nearest() {
        let img = ImageTensor::from_fn(3, 4, 2, |c, i, j| (c * 12 + i * 4 + j) as f64 / 24.0);
        let up = upsample_nearest(&img, 3);
        assert_eq!(up.dims(), (9, 12, 2));
        assert!(downsample_box(&up, 3).max_abs_diff(&img) < 1e-15);
        assert_eq!(upsample_nearest(&img, 1), img);
    }

    #[test]
    fn bilinear_hits_grid_points_and_midpoints() {
        let img = ImageTensor::from_fn(2, 2, 1, |_, i, j| (i * 2 + j) as f64);
        assert_eq!(sample_bilinear(&img, 0, 1.0, 1.0), Some(3.0));
        assert_eq!(sample_bilinear(&img, 0, 0.5, 0.5), Some(1.5));
        assert_eq!(sample_bilinear(&img, 0, -0.1, 0.0), None);
        assert_eq!(sample_bilinear(&img, 0, 0.0, 1.01), None);
    }

    #[test]
    fn blur_preserves_constants_and_mean_of_interior_impulse() {
        let flat = ImageTensor::filled(6, 6, 1, 0.25);
        assert!(gaussian_blur(&flat, 1.3).max_abs_diff(&flat) < 1e-15);

        let mut imp = ImageTensor::zeros(15, 15, 1);
        imp.set(0, 7, 7, 1.0);
        let b = gaussian_blur(&imp, 1.0);
        let total: f64 = b.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(b.get(0, 7, 7) < 1.0);
    }
}
