//! Recovery of raw bitmap images left behind in memory dumps.
//!
//! The pipeline has three stages: [`extract`] cuts a dump into candidate
//! tiles of pixel words, [`layout`] infers each tile's width and leading
//! offset from its spectrum and row/column similarity, and [`carve`] ties
//! the two together with per-tile verdicts. [`synth`] and [`eval`] build
//! synthetic dumps with known ground truth and score the pipeline on them.

pub mod carve;
pub mod eval;
pub mod extract;
pub mod image_io;
pub mod layout;
pub mod model;
pub mod spectrum;
pub mod standin;
pub mod synth;

pub use carve::{carve_dump, CarveOptions, CarveReport, TileRecord, Verdict};
pub use extract::{extract_tiles, Rejection};
pub use image_io::{Image, ImageError};
pub use layout::{recover_image, LayoutError};
pub use model::{
    default_config, CarveConfig, Flag, GraySignal, LayoutHypothesis, MemoryDump, PixelFormat,
    RecoveredImage, Tile,
};
