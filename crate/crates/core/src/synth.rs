//! Procedural face fixtures: identities with distinct skin, hair, eye and
//! geometry parameters, nuisance-perturbed samples for threshold calibration,
//! and the eyeglass-frame patch mask.
//!
//! All rendering is a pure function of `(seed, identity, sample, dims)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::imagecore::{BinaryMask, ImageTensor};
use crate::rng::{derive_seed, rng_from};

/// Canonical eye centers `(x, y)` in normalized coordinates. Faces are
/// rendered pre-aligned, so every identity places its eyes near these.
const EYE_DX: f64 = 0.17;
const EYE_Y: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub skin: [f64; 3],
    pub hair: [f64; 3],
    pub iris: [f64; 3],
    pub lips: [f64; 3],
    pub background: [f64; 3],
    pub face_rx: f64,
    pub face_ry: f64,
    pub hairline: f64,
    pub eye_dx: f64,
    pub eye_y: f64,
    pub eye_r: f64,
    pub mouth_y: f64,
    pub mouth_w: f64,
    pub brow_tilt: f64,
}

impl Identity {
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut col = |lo: f64, hi: f64| -> [f64; 3] {
            [
                rng.random_range(lo..hi),
                rng.random_range(lo..hi),
                rng.random_range(lo..hi),
            ]
        };
        let tone = col(0.0, 1.0);
        let skin = [
            0.45 + 0.45 * tone[0],
            0.30 + 0.40 * tone[0] * (0.8 + 0.2 * tone[1]),
            0.22 + 0.35 * tone[0] * (0.7 + 0.3 * tone[2]),
        ];
        let hair = col(0.02, 0.65);
        let iris = col(0.05, 0.6);
        let lips = {
            let l = col(0.0, 1.0);
            [0.45 + 0.4 * l[0], 0.15 + 0.2 * l[1], 0.15 + 0.25 * l[2]]
        };
        let background = col(0.4, 0.6);
        Self {
            skin,
            hair,
            iris,
            lips,
            background,
            face_rx: rng.random_range(0.38..0.44),
            face_ry: rng.random_range(0.46..0.52),
            hairline: rng.random_range(0.22..0.32),
            eye_dx: EYE_DX + rng.random_range(-0.015..0.015),
            eye_y: EYE_Y + rng.random_range(-0.015..0.015),
            eye_r: rng.random_range(0.045..0.065),
            mouth_y: rng.random_range(0.70..0.78),
            mouth_w: rng.random_range(0.08..0.14),
            brow_tilt: rng.random_range(-0.03..0.03),
        }
    }
}

/// Smooth inside indicator for a signed "distance" (negative inside).
fn soft(d: f64, sharp: f64) -> f64 {
    1.0 / (1.0 + (d * sharp).exp())
}

fn ellipse(u: f64, v: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    (((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2)).sqrt() - 1.0
}

fn blend(base: &mut [f64; 3], color: [f64; 3], alpha: f64) {
    for c in 0..3 {
        base[c] = base[c] * (1.0 - alpha) + color[c] * alpha;
    }
}

/// Nuisance applied to non-canonical samples of an identity.
#[derive(Debug, Clone, Copy)]
struct Nuisance {
    dx: f64,
    dy: f64,
    gain: f64,
    tint: [f64; 3],
    noise: f64,
}

fn render(id: &Identity, h: usize, w: usize, nz: Option<Nuisance>, noise_seed: u64) -> ImageTensor {
    let sharp = 2.5 * h.max(w) as f64 / 10.0;
    let (dx, dy) = nz.map(|n| (n.dx, n.dy)).unwrap_or((0.0, 0.0));
    let mut pixels = vec![[0.0f64; 3]; h * w];
    for i in 0..h {
        for j in 0..w {
            let u = (j as f64 + 0.5) / w as f64 - dx;
            let v = (i as f64 + 0.5) / h as f64 - dy;
            let mut px = id.background;
            // hair mass behind the head
            let hair_d = ellipse(u, v, 0.5, 0.50, id.face_rx + 0.05, id.face_ry + 0.06);
            let hair_a = soft(hair_d, sharp) * soft((v - 0.62) * 8.0, sharp / 8.0);
            blend(&mut px, id.hair, hair_a);
            // face with a little vertical shading
            let face_a = soft(ellipse(u, v, 0.5, 0.55, id.face_rx, id.face_ry), sharp);
            let shade = 1.0 - 0.12 * ((u - 0.5) / id.face_rx).powi(2);
            blend(&mut px, id.skin.map(|s| s * shade), face_a);
            // fringe
            let fringe = soft((v - id.hairline) * 6.0, sharp / 6.0) * face_a;
            blend(&mut px, id.hair, fringe);
            for side in [-1.0, 1.0] {
                let ex = 0.5 + side * id.eye_dx;
                let brow_y = id.eye_y - 0.085 + side * id.brow_tilt * 0.5;
                let brow = soft(ellipse(u, v, ex, brow_y, 0.085, 0.018), sharp);
                blend(&mut px, id.hair.map(|c| c * 0.7), brow);
                let sclera = soft(
                    ellipse(u, v, ex, id.eye_y, id.eye_r * 1.5, id.eye_r * 0.8),
                    sharp,
                );
                blend(&mut px, [0.93, 0.92, 0.90], sclera);
                let iris = soft(
                    ellipse(u, v, ex, id.eye_y, id.eye_r * 0.7, id.eye_r * 0.7),
                    sharp,
                );
                blend(&mut px, id.iris, iris);
                let pupil = soft(
                    ellipse(u, v, ex, id.eye_y, id.eye_r * 0.3, id.eye_r * 0.3),
                    sharp,
                );
                blend(&mut px, [0.02, 0.02, 0.02], pupil);
            }
            let nose = soft(ellipse(u, v, 0.5, 0.60, 0.03, 0.08), sharp / 2.0);
            blend(&mut px, id.skin.map(|s| s * 0.85), nose * 0.6);
            let mouth = soft(ellipse(u, v, 0.5, id.mouth_y, id.mouth_w, 0.03), sharp);
            blend(&mut px, id.lips, mouth);
            pixels[i * w + j] = px;
        }
    }
    let mut rng = rng_from(noise_seed);
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
    let mut img = ImageTensor::from_fn(h, w, 3, |c, i, j| pixels[i * w + j][c]);
    if let Some(n) = nz {
        for c in 0..3 {
            for v in img.plane_mut(c) {
                let e: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
                *v = *v * n.gain * n.tint[c] + n.noise * e;
            }
        }
    }
    img.clamp01();
    img.quantize_u8()
}

/// A deterministic population of synthetic identities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticFaces {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
}

impl SyntheticFaces {
    pub fn new(seed: u64, height: usize, width: usize) -> Self {
        Self {
            seed,
            height,
            width,
        }
    }

    pub fn identity(&self, index: u64) -> Identity {
        let mut rng = rng_from(derive_seed(self.seed, &[0x1D, index]));
        Identity::sample(&mut rng)
    }

    /// The canonical (nuisance-free) image of an identity.
    pub fn face(&self, index: u64) -> ImageTensor {
        render(&self.identity(index), self.height, self.width, None, 0)
    }

    /// Sample `k` of an identity. Sample 0 is the canonical face; later samples
    /// add a small shift, exposure/tint change, and sensor noise.
    pub fn sample(&self, index: u64, k: u64) -> ImageTensor {
        if k == 0 {
            return self.face(index);
        }
        let s = derive_seed(self.seed, &[0x5A, index, k]);
        let mut rng = rng_from(s);
        let px = 1.0 / self.width as f64;
        let nz = Nuisance {
            dx: rng.random_range(-1.5..1.5) * px,
            dy: rng.random_range(-1.5..1.5) * px,
            gain: rng.random_range(0.92..1.08),
            tint: [
                rng.random_range(0.97..1.03),
                rng.random_range(0.97..1.03),
                rng.random_range(0.97..1.03),
            ],
            noise: 0.01,
        };
        render(&self.identity(index), self.height, self.width, Some(nz), s)
    }

    /// Eyeglass-frame patch mask for this face geometry.
    pub fn eyeglass_mask(&self) -> BinaryMask {
        eyeglass_mask(self.height, self.width)
    }
}

/// Thick eyeglass frames around the canonical eye positions plus a bridge.
pub fn eyeglass_mask(height: usize, width: usize) -> BinaryMask {
    BinaryMask::from_fn(height, width, |i, j| {
        let u = (j as f64 + 0.5) / width as f64;
        let v = (i as f64 + 0.5) / height as f64;
        let lens = [-1.0, 1.0].iter().any(|side| {
            let cx = 0.5 + side * EYE_DX;
            let outer = ellipse(u, v, cx, EYE_Y, 0.165, 0.125) <= 0.0;
            let inner = ellipse(u, v, cx, EYE_Y, 0.08, 0.045) <= 0.0;
            outer && !inner
        });
        let bridge = (u - 0.5).abs() <= 0.06 && (v - (EYE_Y - 0.035)).abs() <= 0.035;
        lens || bridge
    })
}

/// Deterministic `(source, target)` identity pairs with `source != target`.
pub fn identity_pairs(seed: u64, n_identities: u64, count: usize) -> Vec<(u64, u64)> {
    assert!(n_identities >= 2, "need at least two identities for pairs");
    let mut rng = rng_from(derive_seed(seed, &[0xBA1E]));
    (0..count)
        .map(|_| {
            let s = rng.random_range(0..n_identities);
            let mut t = rng.random_range(0..n_identities - 1);
            if t >= s {
                t += 1;
            }
            (s, t)
        })
        .collect()
}
