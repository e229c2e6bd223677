//! Domain types shared by every stage of the carving pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when constructing domain values with broken invariants.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("block size {0} must be a positive multiple of 4")]
    BlockSize(usize),
    #[error("alpha threshold {0} must lie strictly between 0 and 1")]
    AlphaThreshold(f64),
    #[error("threshold {name} = {value} must be positive")]
    Theta { name: &'static str, value: f64 },
    #[error("min_tile_pixels must be positive")]
    MinTilePixels,
    #[error("tile byte length {0} is not a positive multiple of 4")]
    TileLength(usize),
    #[error("tile offset {0} is not 4-byte aligned")]
    TileOffset(usize),
}

/// A raw memory snapshot. The byte content is fixed at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryDump {
    bytes: Vec<u8>,
    origin: String,
}

impl MemoryDump {
    pub fn new(bytes: Vec<u8>, origin: impl Into<String>) -> Self {
        Self {
            bytes,
            origin: origin.into(),
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// Channel order of a 4-byte pixel word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PixelFormat {
    /// Bytes are R, G, B, A.
    #[serde(rename = "RGBA")]
    Rgba,
    /// Bytes are A, R, G, B.
    #[serde(rename = "ARGB")]
    Argb,
}

impl PixelFormat {
    /// Maps a stored word to `[r, g, b, a]`.
    #[inline]
    pub fn decode(self, word: [u8; 4]) -> [u8; 4] {
        match self {
            PixelFormat::Rgba => word,
            PixelFormat::Argb => [word[1], word[2], word[3], word[0]],
        }
    }

    /// Maps `[r, g, b, a]` to the stored word layout.
    #[inline]
    pub fn encode(self, rgba: [u8; 4]) -> [u8; 4] {
        match self {
            PixelFormat::Rgba => rgba,
            PixelFormat::Argb => [rgba[3], rgba[0], rgba[1], rgba[2]],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PixelFormat::Rgba => "RGBA",
            PixelFormat::Argb => "ARGB",
        }
    }
}

impl std::fmt::Display for PixelFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PixelFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rgba" => Ok(PixelFormat::Rgba),
            "argb" => Ok(PixelFormat::Argb),
            other => Err(format!("unknown pixel format `{other}` (expected rgba or argb)")),
        }
    }
}

/// A contiguous run of pixel words believed to hold one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    bytes: Vec<u8>,
    format: PixelFormat,
    dump_offset: usize,
}

impl Tile {
    pub fn new(bytes: Vec<u8>, format: PixelFormat, dump_offset: usize) -> Result<Self, ModelError> {
        if bytes.is_empty() || bytes.len() % 4 != 0 {
            return Err(ModelError::TileLength(bytes.len()));
        }
        if dump_offset % 4 != 0 {
            return Err(ModelError::TileOffset(dump_offset));
        }
        Ok(Self {
            bytes,
            format,
            dump_offset,
        })
    }

    /// Builds a tile from already-laid-out pixel words.
    pub fn from_words(words: &[[u8; 4]], format: PixelFormat, dump_offset: usize) -> Result<Self, ModelError> {
        Self::new(words.concat(), format, dump_offset)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn words(&self) -> impl ExactSizeIterator<Item = [u8; 4]> + '_ {
        self.bytes
            .chunks_exact(4)
            .map(|w| [w[0], w[1], w[2], w[3]])
    }

    /// Number of pixel words.
    pub fn len(&self) -> usize {
        self.bytes.len() / 4
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn format(&self) -> PixelFormat {
        self.format
    }

    pub fn dump_offset(&self) -> usize {
        self.dump_offset
    }
}

/// Per-pixel grey levels of a tile, in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraySignal(pub Vec<f64>);

impl GraySignal {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Inferred placement of an image inside a tile of `N` words:
/// `leading + width * height + trailing == N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutHypothesis {
    #[serde(rename = "m")]
    pub width: usize,
    #[serde(rename = "n")]
    pub height: usize,
    #[serde(rename = "s")]
    pub leading: usize,
    #[serde(rename = "e")]
    pub trailing: usize,
}

impl LayoutHypothesis {
    pub fn tile_len(&self) -> usize {
        self.leading + self.width * self.height + self.trailing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Flag {
    #[serde(rename = "POTENTIAL_FALSE_POSITIVE")]
    PotentialFalsePositive,
}

/// An image reshaped out of a tile. Pixels are row-major `[r, g, b, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 4]>,
    pub format: PixelFormat,
    pub layout: LayoutHypothesis,
    pub flags: Vec<Flag>,
}

impl RecoveredImage {
    pub fn is_flagged(&self) -> bool {
        self.flags.contains(&Flag::PotentialFalsePositive)
    }

    pub fn to_image(&self) -> crate::image_io::Image {
        crate::image_io::Image::from_pixels(self.width, self.height, self.pixels.clone())
            .expect("recovered image dimensions match pixel count")
    }
}

/// Every tunable threshold of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarveConfig {
    /// Bytes per block when splitting a dump.
    pub block_size: usize,
    /// Minimum fraction of blank alpha bytes for a tile to count as graphical.
    #[serde(rename = "th")]
    pub alpha_threshold: f64,
    /// Minimum normalized peak height of the width component.
    pub theta0: f64,
    /// Upper bound on the normalized wrap-around column distance.
    pub theta1: f64,
    /// Minimum ratio between the largest and second-largest column distance.
    pub theta2: f64,
    /// Per-pixel grey difference that counts as a column mismatch.
    pub theta3: f64,
    pub min_tile_pixels: usize,
    /// Remove slow brightness trends before the spectral width search and
    /// settle the width on row differences; off runs the bare search.
    pub refine: bool,
}

impl Default for CarveConfig {
    fn default() -> Self {
        default_config()
    }
}

pub fn default_config() -> CarveConfig {
    CarveConfig {
        block_size: 4096,
        alpha_threshold: 0.20,
        theta0: 1.5,
        theta1: 2.0,
        theta2: 1.2,
        theta3: 5.0,
        min_tile_pixels: 256,
        refine: true,
    }
}

impl CarveConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.block_size == 0 || self.block_size % 4 != 0 {
            return Err(ModelError::BlockSize(self.block_size));
        }
        if !(self.alpha_threshold > 0.0 && self.alpha_threshold < 1.0) {
            return Err(ModelError::AlphaThreshold(self.alpha_threshold));
        }
        for (name, value) in [
            ("theta0", self.theta0),
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("theta3", self.theta3),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::Theta { name, value });
            }
        }
        if self.min_tile_pixels == 0 {
            return Err(ModelError::MinTilePixels);
        }
        Ok(())
    }
}
