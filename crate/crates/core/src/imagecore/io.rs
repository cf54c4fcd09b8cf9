//! 8-bit raster I/O for images, masks, and threshold matrices.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageError, ImageFormat, ImageReader, RgbImage};

use super::tensor::{BinaryMask, ImageTensor, ThresholdMatrix};
use crate::error::{Error, Result};

fn map_image_error(path: &Path, err: ImageError) -> Error {
    match err {
        // a truncated stream surfaces as an I/O error from the decoder
        ImageError::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::CorruptImage {
                path: path.to_path_buf(),
                reason: e.to_string(),
            }
        }
        ImageError::IoError(e) => Error::io(path, e),
        ImageError::Unsupported(_) => Error::UnsupportedFormat(path.to_path_buf()),
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format().is_none() {
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    reader.decode().map_err(|e| map_image_error(path, e))
}

/// Loads a raster image with values mapped to `[0, 1]` by `v / 255`.
///
/// Gray images (with or without alpha) load as one channel, everything else
/// as RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let img = decode(path)?;
    match img.color() {
        image::ColorType::L8
        | image::ColorType::La8
        | image::ColorType::L16
        | image::ColorType::La16 => {
            let g = img.to_luma8();
            let (w, h) = g.dimensions();
            let data = g.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            ImageTensor::from_vec(h as usize, w as usize, 1, data)
        }
        _ => {
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            let (w, h) = (w as usize, h as usize);
            let raw = rgb.as_raw();
            Ok(ImageTensor::from_fn(h, w, 3, |c, i, j| {
                raw[(i * w + j) * 3 + c] as f64 / 255.0
            }))
        }
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn ensure_png(path: &Path) -> Result<()> {
    match ImageFormat::from_path(path) {
        Ok(ImageFormat::Png) => Ok(()),
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

/// Writes an image as 8-bit PNG (gray for one channel, RGB for three).
pub fn save_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    ensure_png(path)?;
    let (h, w, c) = img.dims();
    let dynimg = match c {
        1 => {
            let buf: Vec<u8> = img.data().iter().map(|&v| to_byte(v)).collect();
            DynamicImage::ImageLuma8(
                GrayImage::from_raw(w as u32, h as u32, buf).expect("buffer sized from dims"),
            )
        }
        3 => {
            let mut buf = Vec::with_capacity(h * w * 3);
            for i in 0..h {
                for j in 0..w {
                    for ch in 0..3 {
                        buf.push(to_byte(img.get(ch, i, j)));
                    }
                }
            }
            DynamicImage::ImageRgb8(
                RgbImage::from_raw(w as u32, h as u32, buf).expect("buffer sized from dims"),
            )
        }
        other => {
            return Err(Error::Contract(format!(
                "only 1- or 3-channel images can be saved, got {other}"
            )))
        }
    };
    dynimg
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| map_image_error(path, e))
}

/// Loads a mask from a raster where gray value `>= 128` means 1.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let g = decode(path)?.to_luma8();
    let (w, h) = g.dimensions();
    BinaryMask::from_vec(
        h as usize,
        w as usize,
        g.as_raw().iter().map(|&v| v >= 128).collect(),
    )
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    ensure_png(path)?;
    let buf = mask
        .data()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, buf)
        .expect("buffer sized from dims")
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| map_image_error(path, e))
}

/// Threshold matrix stored as a gray raster: `tau = byte * scale`.
pub fn load_threshold_image(path: impl AsRef<Path>, scale: f64) -> Result<ThresholdMatrix> {
    let path = path.as_ref();
    let g = decode(path)?.to_luma8();
    let (w, h) = g.dimensions();
    ThresholdMatrix::from_vec(
        h as usize,
        w as usize,
        g.as_raw().iter().map(|&v| v as f64 * scale).collect(),
    )
}

/// Parses a numeric threshold grid.
///
/// One matrix row per line, values separated by whitespace or commas; `#`
/// starts a comment. An optional `scale <factor>` line before the first row
/// multiplies every value.
pub fn parse_threshold_grid(text: &str) -> Result<ThresholdMatrix> {
    let mut scale = 1.0;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("scale") {
            if !rows.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: scale header must precede the grid",
                    lineno + 1
                )));
            }
            scale = rest
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("line {}: bad scale factor", lineno + 1)))?;
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("line {}: bad number {s:?}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Config(format!(
                    "line {}: ragged grid ({} values, expected {})",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    let (h, w) = (rows.len(), rows[0].len());
    ThresholdMatrix::from_vec(
        h,
        w,
        rows.into_iter().flatten().map(|v| v * scale).collect(),
    )
}

pub fn load_threshold_grid(path: impl AsRef<Path>) -> Result<ThresholdMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_threshold_grid(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageTensor::from_fn(7, 5, 3, |c, i, j| {
            ((c * 31 + i * 17 + j * 7) % 97) as f64 / 96.0
        });
        let p = dir.path().join("x.png");
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.dims(), img.dims());
        assert!(back.max_abs_diff(&img) <= 1.0 / 255.0);
    }

    #[test]
    fn black_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageTensor::zeros(4, 6, 1);
        let p = dir.path().join("black.png");
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.png");
        assert!(matches!(load_image(&missing), Err(Error::NotFound(_))));

        let junk = dir.path().join("junk.bin");
        std::fs::write(&junk, b"definitely not an image").unwrap();
        assert!(matches!(
            load_image(&junk),
            Err(Error::UnsupportedFormat(_))
        ));

        let corrupt = dir.path().join("bad.png");
        let mut bytes = b"\x89PNG\r\n\x1a\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 13, b'I', b'H', b'D', b'R', 1, 2, 3]);
        std::fs::write(&corrupt, bytes).unwrap();
        let err = load_image(&corrupt);
        assert!(matches!(err, Err(Error::CorruptImage { .. })), "{err:?}");

        let img = ImageTensor::zeros(2, 2, 1);
        assert!(matches!(
            save_image(&img, dir.path().join("x.jpg")),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn mask_threshold_at_128() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        GrayImage::from_raw(3, 1, vec![127, 128, 255])
            .unwrap()
            .save(&p)
            .unwrap();
        let m = load_mask(&p).unwrap();
        assert_eq!(m.data(), &[false, true, true]);
        let m2 = BinaryMask::from_fn(3, 4, |i, j| (i + j) % 2 == 0);
        let p2 = dir.path().join("m2.png");
        save_mask(&m2, &p2).unwrap();
        assert_eq!(load_mask(&p2).unwrap(), m2);
    }

    #[test]
    fn threshold_grid_parsing() {
        let z = parse_threshold_grid("# comment\nscale 0.5\n0.2 0.4\n0.6, 0.8 # tail\n").unwrap();
        assert_eq!((z.height(), z.width()), (2, 2));
        assert_eq!(z.data(), &[0.1, 0.2, 0.3, 0.4]);
        assert!(parse_threshold_grid("0.1 0.2\n0.3\n").is_err());
        assert!(parse_threshold_grid("0.1 -0.2\n").is_err());
        assert!(parse_threshold_grid("").is_err());
    }

    #[test]
    fn threshold_image_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.png");
        GrayImage::from_raw(2, 1, vec![0, 100])
            .unwrap()
            .save(&p)
            .unwrap();
        let z = load_threshold_image(&p, 0.001).unwrap();
        assert_eq!(z.data()[0], 0.0);
        assert!((z.data()[1] - 0.1).abs() < 1e-15);
    }
}
