//! Whole-dump carving: extraction followed by layout inference per tile.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::extract::{scan_tiles, Candidate, Rejection};
use crate::layout::{recover_image, recover_image_or_flag, LayoutError};
use crate::model::{CarveConfig, Flag, LayoutHypothesis, MemoryDump, PixelFormat, RecoveredImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Recovered,
    /// Emitted despite a weak spectral peak.
    Flagged,
    NonGraphical,
    TooSmall,
    NotEnoughLength,
    Degenerate,
    WidthOutOfRange,
}

impl Verdict {
    pub fn is_emitted(self) -> bool {
        matches!(self, Verdict::Recovered | Verdict::Flagged)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CarveOptions {
    /// Emit weak-peak tiles flagged as potential false positives.
    pub keep_flagged: bool,
}

/// One manifest line: a coalesced run of blocks and its fate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    /// Byte offset of the tile after trimming (of the raw run if rejected earlier).
    pub offset: usize,
    /// Pixel words in the tile (after trimming), or the raw run's word count.
    #[serde(rename = "N")]
    pub words: usize,
    pub format: Option<PixelFormat>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub s: Option<usize>,
    pub e: Option<usize>,
    pub flags: Vec<Flag>,
    pub verdict: Verdict,
    /// Normalized spectral peak, when layout inference got that far.
    pub peak: Option<f64>,
}

impl TileRecord {
    fn new(offset: usize, words: usize, format: Option<PixelFormat>, verdict: Verdict) -> Self {
        Self {
            offset,
            words,
            format,
            m: None,
            n: None,
            s: None,
            e: None,
            flags: Vec::new(),
            verdict,
            peak: None,
        }
    }

    pub fn layout(&self) -> Option<LayoutHypothesis> {
        Some(LayoutHypothesis {
            width: self.m?,
            height: self.n?,
            leading: self.s?,
            trailing: self.e?,
        })
    }

    fn set_layout(&mut self, l: LayoutHypothesis) {
        self.m = Some(l.width);
        self.n = Some(l.height);
        self.s = Some(l.leading);
        self.e = Some(l.trailing);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarveReport {
    pub records: Vec<TileRecord>,
    /// Emitted images, in dump order; `record` indexes `records`.
    pub images: Vec<CarvedImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarvedImage {
    pub record: usize,
    pub offset: usize,
    pub image: RecoveredImage,
}

fn process(c: Candidate, cfg: &CarveConfig, opts: CarveOptions) -> (TileRecord, Option<RecoveredImage>) {
    let tile = match c.outcome {
        Ok(t) => t,
        Err(rej) => {
            let verdict = match rej {
                Rejection::NonGraphical { .. } => Verdict::NonGraphical,
                Rejection::TooSmall { .. } => Verdict::TooSmall,
            };
            let words = match rej {
                Rejection::TooSmall { words } => words,
                _ => c.byte_len / 4,
            };
            return (TileRecord::new(c.dump_offset, words, None, verdict), None);
        }
    };
    let result = if opts.keep_flagged {
        recover_image_or_flag(&tile, cfg)
    } else {
        recover_image(&tile, cfg)
    };
    let mut record = TileRecord::new(tile.dump_offset(), tile.len(), Some(tile.format()), Verdict::Recovered);
    match result {
        Ok(img) => {
            record.set_layout(img.layout);
            record.flags = img.flags.clone();
            if img.is_flagged() {
                record.verdict = Verdict::Flagged;
            }
            (record, Some(img))
        }
        Err(e) => {
            record.verdict = match e {
                LayoutError::NotEnoughLength { peak, .. } => {
                    record.peak = Some(peak);
                    Verdict::NotEnoughLength
                }
                LayoutError::Degenerate => Verdict::Degenerate,
                LayoutError::WidthOutOfRange { .. } => Verdict::WidthOutOfRange,
            };
            (record, None)
        }
    }
}

/// Carves every tile of `dump`. Tiles are analysed in parallel; output
/// order follows the dump.
pub fn carve_dump(dump: &MemoryDump, cfg: &CarveConfig, opts: CarveOptions) -> CarveReport {
    let results: Vec<_> = scan_tiles(dump, cfg)
        .into_par_iter()
        .map(|c| process(c, cfg, opts))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut images = Vec::new();
    for (i, (record, image)) in results.into_iter().enumerate() {
        if let Some(image) = image {
            images.push(CarvedImage {
                record: i,
                offset: record.offset,
                image,
            });
        }
        records.push(record);
    }
    CarveReport { records, images }
}
