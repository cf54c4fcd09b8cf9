use super::tensor::{BinaryMask, ImageTensor};
use crate::error::{contract, Result};

/// Builds `clamp(x_s + M_s * delta_s + M_p * delta_p, 0, 1)`.
///
/// Pixels outside both masks are copied from `source` untouched. The two
/// masks must be disjoint.
pub fn compose_combo(
    source: &ImageTensor,
    delta_patch: &ImageTensor,
    delta_small: &ImageTensor,
    patch_mask: &BinaryMask,
    small_mask: &BinaryMask,
) -> Result<ImageTensor> {
    source.check_same_dims(delta_patch, "patch delta")?;
    source.check_same_dims(delta_small, "small-noise delta")?;
    source.check_mask(patch_mask, "patch mask")?;
    source.check_mask(small_mask, "small-noise mask")?;
    if patch_mask.overlaps(small_mask) {
        return contract("patch and small-noise masks overlap");
    }
    let mut out = source.clone();
    let n = source.plane_len();
    for c in 0..source.channels() {
        for k in 0..n {
            let idx = c * n + k;
            let delta = if patch_mask.at(k) {
                delta_patch.data()[idx]
            } else if small_mask.at(k) {
                delta_small.data()[idx]
            } else {
                continue;
            };
            out.data_mut()[idx] = (source.data()[idx] + delta).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ImageTensor, BinaryMask, BinaryMask) {
        let src = ImageTensor::from_fn(4, 4, 3, |c, i, j| 0.1 + 0.05 * (c + i + j) as f64);
        let patch = BinaryMask::from_fn(4, 4, |i, _| i == 1);
        let small = BinaryMask::from_fn(4, 4, |i, _| i >= 2);
        (src, patch, small)
    }

    #[test]
    fn zero_deltas_are_identity() {
        let (src, patch, small) = setup();
        let z = ImageTensor::zeros(4, 4, 3);
        assert_eq!(compose_combo(&src, &z, &z, &patch, &small).unwrap(), src);
    }

    #[test]
    fn clips_at_one() {
        let mut src = ImageTensor::zeros(2, 2, 1);
        src.set(0, 0, 0, 0.9);
        let patch = BinaryMask::from_fn(2, 2, |i, j| i == 0 && j == 0);
        let dp = ImageTensor::filled(2, 2, 1, 0.3);
        let z = ImageTensor::zeros(2, 2, 1);
        let out = compose_combo(&src, &dp, &z, &patch, &BinaryMask::empty(2, 2)).unwrap();
        assert_eq!(out.get(0, 0, 0), 1.0);
    }

    #[test]
    fn unmasked_pixels_keep_source() {
        let (src, patch, small) = setup();
        let d = ImageTensor::filled(4, 4, 3, 0.7);
        let out = compose_combo(&src, &d, &d, &patch, &small).unwrap();
        for c in 0..3 {
            for j in 0..4 {
                assert_eq!(out.get(c, 0, j).to_bits(), src.get(c, 0, j).to_bits());
            }
        }
    }

    #[test]
    fn overlapping_masks_rejected() {
        let (src, patch, _) = setup();
        let z = ImageTensor::zeros(4, 4, 3);
        assert!(compose_combo(&src, &z, &z, &patch, &patch).is_err());
    }
}
