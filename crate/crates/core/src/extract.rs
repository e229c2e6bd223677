//! Block splitting, blank filtering, coalescing and format classification.

use crate::model::{CarveConfig, MemoryDump, PixelFormat, Tile};

/// One fixed-size slice of a dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block<'a> {
    pub bytes: &'a [u8],
    pub index: usize,
}

/// A maximal run of consecutive non-blank blocks, before classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTile {
    pub bytes: Vec<u8>,
    pub dump_offset: usize,
}

/// Why a candidate tile never reached layout inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rejection {
    /// Neither end of the pixel words looks like an alpha channel.
    NonGraphical { p_first: f64, p_last: f64 },
    /// Fewer than `min_tile_pixels` words survived trimming.
    TooSmall { words: usize },
}

pub fn split_blocks<'a>(dump: &'a MemoryDump, cfg: &CarveConfig) -> Vec<Block<'a>> {
    dump.bytes()
        .chunks_exact(cfg.block_size)
        .enumerate()
        .map(|(index, bytes)| Block { bytes, index })
        .collect()
}

pub fn is_blank_block(b: &Block<'_>) -> bool {
    is_uniform(b.bytes, 0x00) || is_uniform(b.bytes, 0xff)
}

fn is_uniform(bytes: &[u8], v: u8) -> bool {
    // Compare eight bytes at a time; dumps run to hundreds of megabytes.
    let pattern = u64::from_ne_bytes([v; 8]);
    let mut chunks = bytes.chunks_exact(8);
    chunks.all(|c| u64::from_ne_bytes(c.try_into().unwrap()) == pattern)
        && chunks.remainder().iter().all(|&b| b == v)
}

/// Half-open block index ranges of maximal non-blank runs.
fn data_runs(blocks: &[Block<'_>]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    let mut prev_index = 0;
    for (pos, b) in blocks.iter().enumerate() {
        let blank = is_blank_block(b);
        match start {
            Some(s) if blank || b.index != prev_index + 1 => {
                runs.push((s, pos));
                start = if blank { None } else { Some(pos) };
            }
            None if !blank => start = Some(pos),
            _ => {}
        }
        prev_index = b.index;
    }
    if let Some(s) = start {
        runs.push((s, blocks.len()));
    }
    runs
}

/// Joins consecutive non-blank blocks into raw tiles, in dump order.
pub fn coalesce(blocks: &[Block<'_>]) -> Vec<RawTile> {
    data_runs(blocks)
        .into_iter()
        .map(|(a, b)| {
            let block_size = blocks[a].bytes.len();
            let bytes = blocks[a..b].iter().flat_map(|blk| blk.bytes.iter().copied()).collect();
            RawTile {
                bytes,
                dump_offset: blocks[a].index * block_size,
            }
        })
        .collect()
}

#[inline]
fn is_blank_byte(b: u8) -> bool {
    b == 0x00 || b == 0xff
}

/// Fractions of words whose first / last byte is 0x00 or 0xff.
pub fn alpha_fractions(bytes: &[u8]) -> (f64, f64) {
    let mut first = 0usize;
    let mut last = 0usize;
    let mut words = 0usize;
    for w in bytes.chunks_exact(4) {
        first += is_blank_byte(w[0]) as usize;
        last += is_blank_byte(w[3]) as usize;
        words += 1;
    }
    if words == 0 {
        return (0.0, 0.0);
    }
    (first as f64 / words as f64, last as f64 / words as f64)
}

pub fn classify_format(t: &RawTile, cfg: &CarveConfig) -> Result<PixelFormat, Rejection> {
    let (p_first, p_last) = alpha_fractions(&t.bytes);
    let th = cfg.alpha_threshold;
    if p_last > th && p_last >= p_first {
        Ok(PixelFormat::Rgba)
    } else if p_first > th {
        Ok(PixelFormat::Argb)
    } else {
        Err(Rejection::NonGraphical { p_first, p_last })
    }
}

#[inline]
fn is_blank_word(w: &[u8]) -> bool {
    w == [0, 0, 0, 0] || w == [0xff; 4]
}

/// Strips whole blank words from both ends of a classified tile.
pub fn trim_tile(t: RawTile, fmt: PixelFormat, cfg: &CarveConfig) -> Result<Tile, Rejection> {
    let words = t.bytes.len() / 4;
    let lead = t.bytes.chunks_exact(4).take_while(|w| is_blank_word(w)).count();
    let tail = if lead == words {
        0
    } else {
        t.bytes.chunks_exact(4).rev().take_while(|w| is_blank_word(w)).count()
    };
    let kept = words - lead - tail;
    if kept < cfg.min_tile_pixels || kept == 0 {
        return Err(Rejection::TooSmall { words: kept });
    }
    let mut bytes = t.bytes;
    bytes.truncate((lead + kept) * 4);
    bytes.drain(..lead * 4);
    Ok(Tile::new(bytes, fmt, t.dump_offset + lead * 4).expect("trimmed tile is word aligned"))
}

/// One coalesced run of blocks and what became of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub dump_offset: usize,
    pub byte_len: usize,
    pub outcome: Result<Tile, Rejection>,
}

/// Runs the whole extraction stage, keeping rejected runs for reporting.
pub fn scan_tiles(dump: &MemoryDump, cfg: &CarveConfig) -> Vec<Candidate> {
    let blocks = split_blocks(dump, cfg);
    data_runs(&blocks)
        .into_iter()
        .map(|(a, b)| {
            let dump_offset = blocks[a].index * cfg.block_size;
            let byte_len = (b - a) * cfg.block_size;
            let raw = RawTile {
                bytes: dump.bytes()[dump_offset..dump_offset + byte_len].to_vec(),
                dump_offset,
            };
            let outcome = classify_format(&raw, cfg).and_then(|fmt| trim_tile(raw, fmt, cfg));
            Candidate {
                dump_offset,
                byte_len,
                outcome,
            }
        })
        .collect()
}

/// Accepted tiles of a dump, in dump order.
pub fn extract_tiles(dump: &MemoryDump, cfg: &CarveConfig) -> Vec<Tile> {
    scan_tiles(dump, cfg)
        .into_iter()
        .filter_map(|c| c.outcome.ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_config;

    fn cfg() -> CarveConfig {
        default_config()
    }

    fn data_block(seed: u8) -> Vec<u8> {
        // Alpha last, colour bytes away from 0x00/0xff.
        (0..4096)
            .map(|i| if i % 4 == 3 { 0xff } else { 1 + ((i as u8).wrapping_mul(seed) % 0xfd) })
            .collect()
    }

    #[test]
    fn split_drops_partial_block() {
        let c = cfg();
        assert_eq!(split_blocks(&MemoryDump::new(vec![1; 8192], ""), &c).len(), 2);
        let d = MemoryDump::new(vec![1; 4100], "");
        let blocks = split_blocks(&d, &c);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].bytes.len(), 4096);
        assert!(split_blocks(&MemoryDump::new(vec![], ""), &c).is_empty());
    }

    #[test]
    fn blank_blocks() {
        let ff = vec![0xff; 4096];
        let zero = vec![0; 4096];
        let mut almost = vec![0xff; 4096];
        almost[4095] = 0x7a;
        assert!(is_blank_block(&Block { bytes: &ff, index: 0 }));
        assert!(is_blank_block(&Block { bytes: &zero, index: 0 }));
        assert!(!is_blank_block(&Block { bytes: &almost, index: 0 }));
        // half zero, half ff is not blank
        let mut mixed = vec![0; 4096];
        mixed[2048..].fill(0xff);
        assert!(!is_blank_block(&Block { bytes: &mixed, index: 0 }));
    }

    #[test]
    fn coalesce_runs() {
        let d = data_block(3);
        let blank = vec![0xff; 4096];
        let blocks = |kinds: &[bool]| -> Vec<Vec<u8>> {
            kinds.iter().map(|&k| if k { d.clone() } else { blank.clone() }).collect()
        };
        let mk = |v: &[Vec<u8>]| {
            let bytes: Vec<u8> = v.concat();
            coalesce(&split_blocks(&MemoryDump::new(bytes, ""), &cfg()))
        };
        let t = mk(&blocks(&[true, false, true]));
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].dump_offset, t[0].bytes.len()), (0, 4096));
        assert_eq!((t[1].dump_offset, t[1].bytes.len()), (8192, 4096));
        let t = mk(&blocks(&[true, true, true]));
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].bytes.len(), 3 * 4096);
        assert!(mk(&blocks(&[false, false])).is_empty());
    }

    #[test]
    fn coalesce_respects_index_gaps() {
        let d = data_block(5);
        let blocks = [Block { bytes: &d, index: 0 }, Block { bytes: &d, index: 2 }];
        assert_eq!(coalesce(&blocks).len(), 2);
    }

    #[test]
    fn classify_examples() {
        let c = cfg();
        let rgba = RawTile { bytes: data_block(7), dump_offset: 0 };
        assert_eq!(classify_format(&rgba, &c), Ok(PixelFormat::Rgba));

        let argb: Vec<u8> = (0..4096).map(|i| if i % 4 == 0 { 0 } else { 1 + (i % 200) as u8 }).collect();
        assert_eq!(
            classify_format(&RawTile { bytes: argb, dump_offset: 0 }, &c),
            Ok(PixelFormat::Argb)
        );

        let junk: Vec<u8> = (0..4096u32).map(|i| 1 + (i.wrapping_mul(2654435761) >> 24) as u8 % 0xfe).collect();
        assert!(matches!(
            classify_format(&RawTile { bytes: junk, dump_offset: 0 }, &c),
            Err(Rejection::NonGraphical { p_first, p_last }) if p_first == 0.0 && p_last == 0.0
        ));
    }

    #[test]
    fn classify_tie_prefers_rgba() {
        let bytes: Vec<u8> = (0..1024).flat_map(|_| [0xff, 9, 9, 0x00]).collect();
        let t = RawTile { bytes, dump_offset: 0 };
        assert_eq!(classify_format(&t, &cfg()), Ok(PixelFormat::Rgba));
    }

    #[test]
    fn trim_examples() {
        let c = CarveConfig { min_tile_pixels: 2, ..cfg() };
        let bytes = [[0xff; 4], [1, 2, 3, 0xff], [4, 5, 6, 0xff], [0; 4]].concat();
        let t = trim_tile(RawTile { bytes, dump_offset: 4096 }, PixelFormat::Rgba, &c).unwrap();
        assert_eq!(t.bytes(), &[1, 2, 3, 0xff, 4, 5, 6, 0xff]);
        assert_eq!(t.dump_offset(), 4100);

        let strict = cfg();
        let bytes = [[0xff; 4], [1, 2, 3, 0xff], [4, 5, 6, 0xff], [0; 4]].concat();
        assert_eq!(
            trim_tile(RawTile { bytes, dump_offset: 0 }, PixelFormat::Rgba, &strict),
            Err(Rejection::TooSmall { words: 2 })
        );

        let bytes = data_block(3);
        let t = trim_tile(RawTile { bytes: bytes.clone(), dump_offset: 0 }, PixelFormat::Rgba, &strict).unwrap();
        assert_eq!(t.bytes(), &bytes[..]);

        let bytes = [[0xff; 4], [0; 4]].repeat(512).concat();
        assert_eq!(
            trim_tile(RawTile { bytes, dump_offset: 0 }, PixelFormat::Rgba, &c),
            Err(Rejection::TooSmall { words: 0 })
        );
    }

    #[test]
    fn all_ff_dump_has_no_tiles() {
        let d = MemoryDump::new(vec![0xff; 5 * 4096], "");
        assert!(extract_tiles(&d, &cfg()).is_empty());
    }
}
