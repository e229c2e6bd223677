//! Binary PPM (P6) decoding and PPM / raw pixel encoding.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::model::PixelFormat;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{width}x{height} image needs {expected} pixels, got {actual}")]
    Shape {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
}

/// Row-major RGBA raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 4]>,
}

impl Image {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[u8; 4]>) -> Result<Self, ImageError> {
        if width.checked_mul(height) != Some(pixels.len()) {
            return Err(ImageError::Shape {
                width,
                height,
                expected: width.saturating_mul(height),
                actual: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 4]) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 4]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[u8; 4]] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<[u8; 4]> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 4] {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[[u8; 4]] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeKind {
    /// Binary PPM; alpha is dropped.
    Ppm,
    /// Headerless words in the given channel order.
    Raw(PixelFormat),
}

pub fn decode(path: &Path) -> Result<Image, ImageError> {
    let bytes = std::fs::read(path).map_err(|source| ImageError::IoFailure {
        path: path.display().to_string(),
        source,
    })?;
    decode_ppm(&bytes)
}

struct Header<'a> {
    rest: &'a [u8],
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        loop {
            match self.rest.first() {
                Some(c) if c.is_ascii_whitespace() => self.rest = &self.rest[1..],
                Some(b'#') => {
                    let end = self.rest.iter().position(|&c| c == b'\n').unwrap_or(self.rest.len());
                    self.rest = &self.rest[end..];
                }
                _ => return,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, ImageError> {
        self.skip_space();
        let len = self.rest.iter().take_while(|c| c.is_ascii_digit()).count();
        if len == 0 {
            return Err(ImageError::CorruptFile(format!("missing {what} in header")));
        }
        let text = std::str::from_utf8(&self.rest[..len]).unwrap();
        self.rest = &self.rest[len..];
        text.parse()
            .map_err(|_| ImageError::CorruptFile(format!("{what} `{text}` out of range")))
    }
}

/// Decodes a binary PPM. Alpha is set to 0xff.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image, ImageError> {
    match bytes.get(..2) {
        Some(b"P6") => {}
        Some(m) if m[0] == b'P' => {
            return Err(ImageError::UnsupportedFormat(format!(
                "netpbm variant {}",
                String::from_utf8_lossy(m)
            )))
        }
        _ => return Err(ImageError::UnsupportedFormat("not a binary PPM".into())),
    }
    let mut h = Header { rest: &bytes[2..] };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval == 0 {
        return Err(ImageError::CorruptFile("maxval 0".into()));
    }
    if maxval > 255 {
        return Err(ImageError::UnsupportedFormat(format!("16-bit PPM (maxval {maxval})")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match h.rest.first() {
        Some(c) if c.is_ascii_whitespace() => h.rest = &h.rest[1..],
        _ => return Err(ImageError::CorruptFile("no separator after header".into())),
    }
    if width == 0 || height == 0 {
        return Err(ImageError::CorruptFile(format!("empty raster {width}x{height}")));
    }
    let count = width
        .checked_mul(height)
        .filter(|c| c.checked_mul(3).is_some())
        .ok_or_else(|| ImageError::CorruptFile("dimensions overflow".into()))?;
    if h.rest.len() < count * 3 {
        return Err(ImageError::CorruptFile(format!(
            "raster truncated: {} of {} bytes",
            h.rest.len(),
            count * 3
        )));
    }
    let scale = |v: u8| -> u8 {
        if maxval == 255 {
            v
        } else {
            ((v.min(maxval as u8) as usize * 255 + maxval / 2) / maxval) as u8
        }
    };
    let pixels = h.rest[..count * 3]
        .chunks_exact(3)
        .map(|p| [scale(p[0]), scale(p[1]), scale(p[2]), 0xff])
        .collect();
    Ok(Image { width, height, pixels })
}

pub fn encode_to_vec(img: &Image, kind: EncodeKind) -> Vec<u8> {
    match kind {
        EncodeKind::Ppm => {
            let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
            out.reserve(img.pixels.len() * 3);
            for p in &img.pixels {
                out.extend_from_slice(&p[..3]);
            }
            out
        }
        EncodeKind::Raw(fmt) => img.pixels.iter().flat_map(|&p| fmt.encode(p)).collect(),
    }
}

/// Writes `img` to `path` atomically: a temporary file in the same
/// directory is renamed over the target only after a complete write.
pub fn encode(img: &Image, path: &Path, kind: EncodeKind) -> Result<(), ImageError> {
    write_atomic(path, &encode_to_vec(img, kind))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ImageError> {
    let io = |source| ImageError::IoFailure {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    // Temp files default to 0600; outputs should look like ordinary files.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
