use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::imagecore::ImageTensor;

/// Stable identifier of a model, used for audits and result keys.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(pub String);

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModelId {
    fn from(s: &str) -> Self {
        ModelId(s.to_string())
    }
}

/// Anything that maps an image to an embedding and can pull embedding
/// gradients back to the input.
pub trait Embedder: Send + Sync {
    fn id(&self) -> &ModelId;

    /// `(height, width, channels)` the model accepts.
    fn input_dims(&self) -> (usize, usize, usize);

    fn embed(&self, x: &ImageTensor) -> Result<Vec<f64>>;

    /// `d(upstream . embed(x)) / dx`
    fn embed_input_grad(&self, x: &ImageTensor, upstream: &[f64]) -> Result<ImageTensor>;

    /// Forward pass, then a backward pass seeded by `upstream(embedding)`.
    fn embed_with_pullback(
        &self,
        x: &ImageTensor,
        upstream: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, ImageTensor)> {
        let e = self.embed(x)?;
        let u = upstream(&e)?;
        let g = self.embed_input_grad(x, &u)?;
        Ok((e, g))
    }

    fn check_input(&self, x: &ImageTensor) -> Result<()> {
        if x.dims() == self.input_dims() {
            Ok(())
        } else {
            contract(format!(
                "model {} expects input {:?}, got {:?}",
                self.id(),
                self.input_dims(),
                x.dims()
            ))
        }
    }
}

/// The four toy architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    A,
    B,
    C,
    D,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::A,
        Architecture::B,
        Architecture::C,
        Architecture::D,
    ];

    /// `(out_channels, kernel, stride)` per conv layer.
    fn layers(self) -> &'static [(usize, usize, usize)] {
        match self {
            Architecture::A => &[(8, 3, 2), (16, 3, 2)],
            Architecture::B => &[(12, 5, 2), (16, 3, 2), (24, 3, 1)],
            Architecture::C => &[(6, 3, 1), (12, 3, 2), (16, 3, 2)],
            Architecture::D => &[(16, 7, 3), (20, 3, 2)],
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Architecture::A => "A",
            Architecture::B => "B",
            Architecture::C => "C",
            Architecture::D => "D",
        }
    }
}

fn default_embed_dim() -> usize {
    128
}
fn default_side() -> usize {
    112
}
fn default_channels() -> usize {
    3
}
fn default_output_scale() -> f64 {
    1.0
}

/// Everything needed to rebuild an extractor bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorSpec {
    pub arch: Architecture,
    pub seed: u64,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Multiplies the linear head's weights.
    #[serde(default = "default_output_scale")]
    pub output_scale: f64,
}

impl ExtractorSpec {
    pub fn new(arch: Architecture, seed: u64) -> Self {
        Self {
            arch,
            seed,
            height: default_side(),
            width: default_side(),
            channels: default_channels(),
            embed_dim: default_embed_dim(),
            output_scale: default_output_scale(),
        }
    }

    pub fn with_input(mut self, height: usize, width: usize, channels: usize) -> Self {
        self.height = height;
        self.width = width;
        self.channels = channels;
        self
    }

    pub fn with_output_scale(mut self, scale: f64) -> Self {
        self.output_scale = scale;
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("extractor spec serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    in_ch: usize,
    out_ch: usize,
    k: usize,
    stride: usize,
    pad: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    /// `[out][in][ky][kx]`
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvLayer {
    fn out_len(&self) -> usize {
        self.out_ch * self.out_h * self.out_w
    }

    /// `tanh(conv(input) + bias)`
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let (ih, iw) = (self.in_h as isize, self.in_w as isize);
        let mut out = Vec::with_capacity(self.out_len());
        for o in 0..self.out_ch {
            let wo = &self.weights[o * self.in_ch * k * k..(o + 1) * self.in_ch * k * k];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let mut acc = self.bias[o];
                    let y0 = (oy * s) as isize - p;
                    let x0 = (ox * s) as isize - p;
                    for c in 0..self.in_ch {
                        let plane = &input[c * self.in_h * self.in_w..];
                        let wc = &wo[c * k * k..(c + 1) * k * k];
                        for ky in 0..k {
                            let iy = y0 + ky as isize;
                            if iy < 0 || iy >= ih {
                                continue;
                            }
                            let row = &plane[iy as usize * self.in_w..];
                            for kx in 0..k {
                                let ix = x0 + kx as isize;
                                if ix < 0 || ix >= iw {
                                    continue;
                                }
                                acc += wc[ky * k + kx] * row[ix as usize];
                            }
                        }
                    }
                    out.push(acc.tanh());
                }
            }
        }
        out
    }

    /// Given `d loss / d output` and the layer's output activations, returns
    /// `d loss / d input`.
    fn backward(&self, activ: &[f64], d_out: &[f64]) -> Vec<f64> {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let (ih, iw) = (self.in_h as isize, self.in_w as isize);
        let mut d_in = vec![0.0; self.in_ch * self.in_h * self.in_w];
        for o in 0..self.out_ch {
            let wo = &self.weights[o * self.in_ch * k * k..(o + 1) * self.in_ch * k * k];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let idx = (o * self.out_h + oy) * self.out_w + ox;
                    let a = activ[idx];
                    let d_pre = d_out[idx] * (1.0 - a * a);
                    if d_pre == 0.0 {
                        continue;
                    }
                    let y0 = (oy * s) as isize - p;
                    let x0 = (ox * s) as isize - p;
                    for c in 0..self.in_ch {
                        let base = c * self.in_h * self.in_w;
                        let wc = &wo[c * k * k..(c + 1) * k * k];
                        for ky in 0..k {
                            let iy = y0 + ky as isize;
                            if iy < 0 || iy >= ih {
                                continue;
                            }
                            let row = base + iy as usize * self.in_w;
                            for kx in 0..k {
                                let ix = x0 + kx as isize;
                                if ix < 0 || ix >= iw {
                                    continue;
                                }
                                d_in[row + ix as usize] += wc[ky * k + kx] * d_pre;
                            }
                        }
                    }
                }
            }
        }
        d_in
    }
}

/// Seeded random-weight feature extractor: a small strided convolution
/// stack with `tanh` activations, global average pooling, and a linear head.
///
/// Inputs are centered by subtracting 0.5 before the first convolution.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    id: ModelId,
    spec: ExtractorSpec,
    convs: Vec<ConvLayer>,
    /// `[embed_dim][last_channels]`
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

impl FeatureExtractor {
    pub fn new(spec: ExtractorSpec) -> Result<Self> {
        let id = ModelId(format!("{}-{}", spec.arch.letter(), spec.seed));
        Self::with_id(spec, id)
    }

    pub fn with_id(spec: ExtractorSpec, id: ModelId) -> Result<Self> {
        if spec.height < 2 || spec.width < 2 || spec.channels == 0 || spec.embed_dim == 0 {
            return contract(format!("invalid extractor dims in {spec:?}"));
        }
        if !spec.output_scale.is_finite() || spec.output_scale <= 0.0 {
            return contract("extractor output_scale must be positive");
        }
        // Mix the architecture into the stream so that equal seeds still give
        // unrelated weights across architectures.
        let stream = spec.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(spec.arch as u64 + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let mut convs = Vec::new();
        let (mut ch, mut h, mut w) = (spec.channels, spec.height, spec.width);
        for &(out_ch, k, stride) in spec.arch.layers() {
            let pad = k / 2;
            let out_h = (h + 2 * pad - k) / stride + 1;
            let out_w = (w + 2 * pad - k) / stride + 1;
            let fan_in = (ch * k * k) as f64;
            let wdist = Normal::new(0.0, 1.6 / fan_in.sqrt()).expect("valid std");
            let bdist = Normal::new(0.0, 0.2).expect("valid std");
            let weights = (0..out_ch * ch * k * k)
                .map(|_| wdist.sample(&mut rng))
                .collect();
            let bias = (0..out_ch).map(|_| bdist.sample(&mut rng)).collect();
            convs.push(ConvLayer {
                in_ch: ch,
                out_ch,
                k,
                stride,
                pad,
                in_h: h,
                in_w: w,
                out_h,
                out_w,
                weights,
                bias,
            });
            ch = out_ch;
            h = out_h;
            w = out_w;
        }
        let hdist = Normal::new(0.0, spec.output_scale / (ch as f64).sqrt()).expect("valid std");
        let head_w = (0..spec.embed_dim * ch)
            .map(|_| hdist.sample(&mut rng))
            .collect();
        let head_b = vec![0.0; spec.embed_dim];
        Ok(Self {
            id,
            spec,
            convs,
            head_w,
            head_b,
        })
    }

    pub fn spec(&self) -> &ExtractorSpec {
        &self.spec
    }

    pub fn embed_dim(&self) -> usize {
        self.spec.embed_dim
    }

    /// Post-activation outputs of every conv layer.
    fn forward_cache(&self, x: &ImageTensor) -> Vec<Vec<f64>> {
        let centered: Vec<f64> = x.data().iter().map(|v| v - 0.5).collect();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.convs.len());
        for (l, layer) in self.convs.iter().enumerate() {
            let input = if l == 0 { &centered } else { &acts[l - 1] };
            let out = layer.forward(input);
            acts.push(out);
        }
        acts
    }

    fn head(&self, last: &[f64]) -> Vec<f64> {
        let layer = self.convs.last().expect("at least one conv");
        let n = (layer.out_h * layer.out_w) as f64;
        let ch = layer.out_ch;
        let pooled: Vec<f64> = (0..ch)
            .map(|c| {
                last[c * layer.out_h * layer.out_w..(c + 1) * layer.out_h * layer.out_w]
                    .iter()
                    .sum::<f64>()
                    / n
            })
            .collect();
        (0..self.spec.embed_dim)
            .map(|e| {
                self.head_b[e]
                    + self.head_w[e * ch..(e + 1) * ch]
                        .iter()
                        .zip(&pooled)
                        .map(|(w, p)| w * p)
                        .sum::<f64>()
            })
            .collect()
    }

    fn backward(&self, acts: &[Vec<f64>], upstream: &[f64]) -> Vec<f64> {
        let layer = self.convs.last().expect("at least one conv");
        let ch = layer.out_ch;
        let plane = layer.out_h * layer.out_w;
        let n = plane as f64;
        let mut d_pooled = vec![0.0; ch];
        for (e, u) in upstream.iter().enumerate() {
            if *u == 0.0 {
                continue;
            }
            for (c, d) in d_pooled.iter_mut().enumerate() {
                *d += self.head_w[e * ch + c] * u;
            }
        }
        let mut d = vec![0.0; ch * plane];
        for c in 0..ch {
            let v = d_pooled[c] / n;
            d[c * plane..(c + 1) * plane]
                .iter_mut()
                .for_each(|x| *x = v);
        }
        for l in (0..self.convs.len()).rev() {
            d = self.convs[l].backward(&acts[l], &d);
        }
        d
    }

    fn check_upstream(&self, upstream: &[f64]) -> Result<()> {
        if upstream.len() == self.spec.embed_dim {
            Ok(())
        } else {
            contract(format!(
                "upstream gradient has {} entries, embedding has {}",
                upstream.len(),
                self.spec.embed_dim
            ))
        }
    }
}

impl Embedder for FeatureExtractor {
    fn id(&self) -> &ModelId {
        &self.id
    }

    fn input_dims(&self) -> (usize, usize, usize) {
        (self.spec.height, self.spec.width, self.spec.channels)
    }

    fn embed(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let acts = self.forward_cache(x);
        Ok(self.head(acts.last().expect("at least one conv")))
    }

    fn embed_input_grad(&self, x: &ImageTensor, upstream: &[f64]) -> Result<ImageTensor> {
        self.check_input(x)?;
        self.check_upstream(upstream)?;
        let acts = self.forward_cache(x);
        let g = self.backward(&acts, upstream);
        ImageTensor::from_vec(self.spec.height, self.spec.width, self.spec.channels, g)
    }

    fn embed_with_pullback(
        &self,
        x: &ImageTensor,
        upstream: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, ImageTensor)> {
        self.check_input(x)?;
        let acts = self.forward_cache(x);
        let e = self.head(acts.last().expect("at least one conv"));
        let u = upstream(&e)?;
        self.check_upstream(&u)?;
        let g = self.backward(&acts, &u);
        Ok((
            e,
            ImageTensor::from_vec(self.spec.height, self.spec.width, self.spec.channels, g)?,
        ))
    }
}
