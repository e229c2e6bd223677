//! Synthetic dumps with embedded images and known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image_io::Image;
use crate::model::{CarveConfig, LayoutHypothesis, MemoryDump, PixelFormat};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("scaled image would be {width}x{height}; both sides must be at least 2")]
    TooSmall { width: usize, height: usize },
    #[error("{what} [{start:#x}, {end:#x}) overlaps an earlier range")]
    Overlap { what: String, start: usize, end: usize },
    #[error("{what} [{start:#x}, {end:#x}) extends past the dump end {size:#x}")]
    OutOfBounds {
        what: String,
        start: usize,
        end: usize,
        size: usize,
    },
    #[error("dump size {size} is not a multiple of the block size {block}")]
    Size { size: usize, block: usize },
    #[error("placement offset {0:#x} is not 4-byte aligned")]
    Misaligned(usize),
    #[error("invalid transform: {0}")]
    Transform(String),
}

fn map_rgb(img: &Image, f: impl Fn(u8) -> u8) -> Image {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in &mut p[..3] {
            *c = f(*c);
        }
    }
    out
}

fn clamp_round(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Adds independent N(0, σ) noise to each colour channel.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    if sigma == 0.0 {
        return img.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in &mut p[..3] {
            *c = clamp_round(*c as f64 + normal.sample(&mut rng));
        }
    }
    out
}

pub fn adjust_brightness(img: &Image, factor: f64) -> Image {
    map_rgb(img, |c| clamp_round(c as f64 * (1.0 + factor)))
}

pub fn adjust_contrast(img: &Image, factor: f64) -> Image {
    map_rgb(img, |c| clamp_round((c as f64 - 128.0) * (1.0 + factor) + 128.0))
}

/// Bilinear resampling to `(round(w·ratio), round(h·ratio))`.
pub fn scale_image(img: &Image, ratio: f64) -> Result<Image, SynthError> {
    let nw = (img.width() as f64 * ratio).round() as usize;
    let nh = (img.height() as f64 * ratio).round() as usize;
    if nw < 2 || nh < 2 {
        return Err(SynthError::TooSmall { width: nw, height: nh });
    }
    if nw == img.width() && nh == img.height() {
        return Ok(img.clone());
    }
    Ok(resize_bilinear(img, nw, nh))
}

/// Per output sample: first input index and normalized tent weights.
///
/// When shrinking, the tent is widened by the reduction factor so every
/// input pixel contributes (the usual convention of image libraries);
/// plain two-tap interpolation would alias fine texture into noise.
fn tent_weights(n_in: usize, n_out: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = n_in as f64 / n_out as f64;
    let support = scale.max(1.0);
    (0..n_out)
        .map(|i| {
            let centre = (i as f64 + 0.5) * scale;
            let lo = ((centre - support).floor().max(0.0)) as usize;
            let hi = ((centre + support).ceil() as usize).min(n_in);
            let mut w: Vec<f64> = (lo..hi)
                .map(|j| (1.0 - ((j as f64 + 0.5 - centre) / support).abs()).max(0.0))
                .collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            (lo, w)
        })
        .collect()
}

pub fn resize_bilinear(img: &Image, nw: usize, nh: usize) -> Image {
    let (w, h) = (img.width(), img.height());
    let xs = tent_weights(w, nw);
    let ys = tent_weights(h, nh);
    // Horizontal pass into floats, then vertical pass with one final rounding.
    let mut mid = vec![[0.0f64; 4]; nw * h];
    for y in 0..h {
        let row = img.row(y);
        for (x, (lo, wt)) in xs.iter().enumerate() {
            let acc = &mut mid[y * nw + x];
            for (j, &c) in wt.iter().enumerate() {
                let p = row[lo + j];
                for k in 0..4 {
                    acc[k] += p[k] as f64 * c;
                }
            }
        }
    }
    Image::from_fn(nw, nh, |x, y| {
        let (lo, wt) = &ys[y];
        let mut acc = [0.0f64; 4];
        for (j, &c) in wt.iter().enumerate() {
            let p = mid[(lo + j) * nw + x];
            for k in 0..4 {
                acc[k] += p[k] * c;
            }
        }
        acc.map(clamp_round)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransformSpec {
    Noise { sigma: f64 },
    Brightness { factor: f64 },
    Contrast { factor: f64 },
    Scale { ratio: f64 },
}

impl TransformSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = match *self {
            TransformSpec::Noise { sigma } => sigma >= 0.0 && sigma.is_finite(),
            TransformSpec::Brightness { factor } | TransformSpec::Contrast { factor } => {
                (-1.0..=1.0).contains(&factor)
            }
            TransformSpec::Scale { ratio } => ratio > 0.0 && ratio <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SynthError::Transform(self.to_string()))
        }
    }

    pub fn apply(&self, img: &Image, seed: u64) -> Result<Image, SynthError> {
        self.validate()?;
        match *self {
            TransformSpec::Noise { sigma } => Ok(add_gaussian_noise(img, sigma, seed)),
            TransformSpec::Brightness { factor } => Ok(adjust_brightness(img, factor)),
            TransformSpec::Contrast { factor } => Ok(adjust_contrast(img, factor)),
            TransformSpec::Scale { ratio } => scale_image(img, ratio),
        }
    }
}

impl std::fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransformSpec::Noise { sigma } => write!(f, "noise:{sigma}"),
            TransformSpec::Brightness { factor } => write!(f, "brightness:{factor}"),
            TransformSpec::Contrast { factor } => write!(f, "contrast:{factor}"),
            TransformSpec::Scale { ratio } => write!(f, "scale:{ratio}"),
        }
    }
}

impl std::str::FromStr for TransformSpec {
    type Err = String;

    /// Parses `noise:<σ>`, `brightness:<f>`, `contrast:<f>` or `scale:<r>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("`{s}`: expected <kind>:<value>"))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("`{s}`: `{value}` is not a number"))?;
        let spec = match kind.trim().to_ascii_lowercase().as_str() {
            "noise" => TransformSpec::Noise { sigma: v },
            "brightness" => TransformSpec::Brightness { factor: v },
            "contrast" => TransformSpec::Contrast { factor: v },
            "scale" => TransformSpec::Scale { ratio: v },
            other => return Err(format!("`{s}`: unknown transform `{other}`")),
        };
        spec.validate().map_err(|_| format!("`{s}`: value out of range"))?;
        Ok(spec)
    }
}

/// Applies `specs` in order, deriving a distinct noise seed per step.
pub fn apply_transforms(img: &Image, specs: &[TransformSpec], seed: u64) -> Result<Image, SynthError> {
    let mut out = img.clone();
    for (i, t) in specs.iter().enumerate() {
        out = t.apply(&out, seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PadFill {
    Zero,
    Ff,
    Random,
}

impl std::str::FromStr for PadFill {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(PadFill::Zero),
            "ff" => Ok(PadFill::Ff),
            "random" => Ok(PadFill::Random),
            other => Err(format!("unknown pad fill `{other}` (expected zero, ff or random)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlacementSpec<'a> {
    pub image: &'a Image,
    pub format: PixelFormat,
    pub leading_pad: usize,
    pub trailing_pad: usize,
    pub pad_fill: PadFill,
    pub dump_offset: usize,
}

impl PlacementSpec<'_> {
    pub fn byte_len(&self) -> usize {
        4 * (self.leading_pad + self.image.width() * self.image.height() + self.trailing_pad)
    }
}

/// A byte range of uniform junk from {0x01..0xfe}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JunkSpec {
    pub offset: usize,
    pub length: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedImage {
    pub dump_offset: usize,
    pub format: PixelFormat,
    pub pad_fill: PadFill,
    #[serde(flatten)]
    pub layout: LayoutHypothesis,
    /// Row-major RGBA, base64.
    #[serde(with = "b64")]
    pub pixels: Vec<u8>,
}

impl PlacedImage {
    pub fn image(&self) -> Image {
        let px = self.pixels.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        Image::from_pixels(self.layout.width, self.layout.height, px)
            .expect("ground truth pixel count matches its layout")
    }
}

mod b64 {
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(text)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub dump_size: usize,
    pub block_size: usize,
    pub seed: u64,
    pub placements: Vec<PlacedImage>,
    pub junk: Vec<JunkSpec>,
}

fn fill_junk(buf: &mut [u8], rng: &mut impl Rng) {
    for b in buf {
        *b = rng.random_range(0x01..=0xfe);
    }
}

/// Builds a dump: 0xff everywhere, then each placement (padding, image,
/// padding) and each junk range written at its offset.
pub fn synth_dump(
    placements: &[PlacementSpec<'_>],
    total_size: usize,
    junk: &[JunkSpec],
    cfg: &CarveConfig,
    seed: u64,
) -> Result<(MemoryDump, GroundTruth), SynthError> {
    if total_size % cfg.block_size != 0 {
        return Err(SynthError::Size {
            size: total_size,
            block: cfg.block_size,
        });
    }
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut claim = |what: String, start: usize, len: usize| -> Result<(), SynthError> {
        let end = start.checked_add(len).unwrap_or(usize::MAX);
        if end > total_size {
            return Err(SynthError::OutOfBounds { what, start, end, size: total_size });
        }
        if taken.iter().any(|&(a, b)| start < b && a < end) {
            return Err(SynthError::Overlap { what, start, end });
        }
        taken.push((start, end));
        Ok(())
    };
    for (i, p) in placements.iter().enumerate() {
        if p.dump_offset % 4 != 0 {
            return Err(SynthError::Misaligned(p.dump_offset));
        }
        claim(format!("placement {i}"), p.dump_offset, p.byte_len())?;
    }
    for (i, j) in junk.iter().enumerate() {
        claim(format!("junk range {i}"), j.offset, j.length)?;
    }

    let mut bytes = vec![0xffu8; total_size];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = Vec::with_capacity(placements.len());
    for p in placements {
        let mut at = p.dump_offset;
        let mut pad = |bytes: &mut [u8], at: &mut usize, words: usize| {
            let region = &mut bytes[*at..*at + 4 * words];
            match p.pad_fill {
                PadFill::Zero => region.fill(0x00),
                PadFill::Ff => region.fill(0xff),
                PadFill::Random => rng.fill(region),
            }
            *at += 4 * words;
        };
        pad(&mut bytes, &mut at, p.leading_pad);
        for &px in p.image.pixels() {
            bytes[at..at + 4].copy_from_slice(&p.format.encode(px));
            at += 4;
        }
        pad(&mut bytes, &mut at, p.trailing_pad);
        truth.push(PlacedImage {
            dump_offset: p.dump_offset,
            format: p.format,
            pad_fill: p.pad_fill,
            layout: LayoutHypothesis {
                width: p.image.width(),
                height: p.image.height(),
                leading: p.leading_pad,
                trailing: p.trailing_pad,
            },
            pixels: p.image.pixels().concat(),
        });
    }
    for j in junk {
        let mut jrng = ChaCha8Rng::seed_from_u64(j.seed);
        fill_junk(&mut bytes[j.offset..j.offset + j.length], &mut jrng);
    }
    let gt = GroundTruth {
        dump_size: total_size,
        block_size: cfg.block_size,
        seed,
        placements: truth,
        junk: junk.to_vec(),
    };
    Ok((MemoryDump::new(bytes, format!("synthetic seed {seed}")), gt))
}

/// Rounds `n` up to a multiple of `block`.
pub fn round_up(n: usize, block: usize) -> usize {
    n.div_ceil(block) * block
}
