//! Scoring carved output against ground truth, and the accuracy harness.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carve::{carve_dump, CarveOptions};
use crate::image_io::{self, Image};
use crate::model::{CarveConfig, LayoutHypothesis, PixelFormat};
use crate::synth::{apply_transforms, round_up, synth_dump, JunkSpec, PadFill, PlacementSpec, TransformSpec};

/// Per-channel slack when comparing pixels.
pub const CHANNEL_TOLERANCE: u8 = 2;
pub const DEFAULT_MATCH_FRACTION: f64 = 0.99;
/// Rows the recovered image may carry above the original.
pub const MAX_ROWS_ABOVE: usize = 2;
/// Leading original rows that may be missing from the recovered image,
/// e.g. when a first row starting with white pixels was trimmed as blank.
pub const MAX_ROWS_LOST: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: bool,
    /// Recovered row index of original row 0; negative if leading
    /// original rows are missing.
    pub vertical_offset: i64,
    pub pixel_match_fraction: f64,
}

fn close(a: [u8; 4], b: [u8; 4]) -> bool {
    (0..3).all(|k| a[k].abs_diff(b[k]) <= CHANNEL_TOLERANCE)
}

/// Does `recovered` contain `original`, allowing a few extra rows above,
/// any rows below, and a couple of missing leading rows?
pub fn match_images(original: &Image, recovered: &Image, tolerance: f64) -> MatchResult {
    let no = MatchResult {
        matched: false,
        vertical_offset: 0,
        pixel_match_fraction: 0.0,
    };
    if original.width() != recovered.width() || original.height() == 0 || recovered.height() == 0 {
        return no;
    }
    let (oh, rh) = (original.height() as i64, recovered.height() as i64);
    let mut best = no;
    for d in -(MAX_ROWS_LOST as i64)..=MAX_ROWS_ABOVE as i64 {
        // recovered row r holds original row r - d
        let first = d.max(0);
        let last = rh.min(oh + d);
        let rows = last - first;
        if rows < 1 || rows < oh - MAX_ROWS_LOST as i64 {
            continue;
        }
        let mut agree = 0usize;
        for r in first..last {
            let a = recovered.row(r as usize);
            let b = original.row((r - d) as usize);
            agree += a.iter().zip(b).filter(|(p, q)| close(**p, **q)).count();
        }
        let frac = agree as f64 / (rows as usize * original.width()) as f64;
        if frac > best.pixel_match_fraction || (frac == best.pixel_match_fraction && d == 0) {
            best = MatchResult {
                matched: frac >= tolerance,
                vertical_offset: d,
                pixel_match_fraction: frac,
            };
        }
    }
    best
}

/// A named list of transforms applied in order, e.g. `scale:0.5,noise:10`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub transforms: Vec<TransformSpec>,
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let transforms = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<TransformSpec>, _>>()?;
        if transforms.is_empty() {
            return Err("empty scenario".into());
        }
        let name = transforms.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",");
        Ok(Scenario { name, transforms })
    }
}

impl Scenario {
    pub fn single(t: TransformSpec) -> Self {
        Scenario {
            name: t.to_string(),
            transforms: vec![t],
        }
    }
}

/// How padding words around an embedded image are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadPolicy {
    Zero,
    Ff,
    Random,
    /// Zero or 0xff, chosen per image.
    Blank,
}

impl std::str::FromStr for PadPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(PadPolicy::Zero),
            "ff" => Ok(PadPolicy::Ff),
            "random" => Ok(PadPolicy::Random),
            "blank" => Ok(PadPolicy::Blank),
            other => Err(format!("unknown pad policy `{other}` (expected zero, ff, random or blank)")),
        }
    }
}

impl PadPolicy {
    fn pick(self, rng: &mut impl Rng) -> PadFill {
        match self {
            PadPolicy::Zero => PadFill::Zero,
            PadPolicy::Ff => PadFill::Ff,
            PadPolicy::Random => PadFill::Random,
            PadPolicy::Blank => {
                if rng.random_bool(0.5) {
                    PadFill::Zero
                } else {
                    PadFill::Ff
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub pad: PadPolicy,
    /// Put a run of junk blocks in front of each image.
    pub junk: bool,
    pub carve: CarveOptions,
    pub match_fraction: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            pad: PadPolicy::Blank,
            junk: true,
            carve: CarveOptions::default(),
            match_fraction: DEFAULT_MATCH_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub format: PixelFormat,
    pub leading_pad: usize,
    pub trailing_pad: usize,
    /// Best match among the carved images.
    #[serde(rename = "match")]
    pub best: MatchResult,
    /// Carved images that matched nothing.
    pub extra: usize,
    /// Layouts of every image carved from the dump.
    pub carved: Vec<LayoutHypothesis>,
    /// Set if the transform itself failed (e.g. scaled below 2×2).
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub total: usize,
    pub recovered: usize,
    pub extra: usize,
    pub rate: f64,
    pub images: Vec<ImageResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub seed: u64,
    pub scenarios: Vec<ScenarioReport>,
    /// Input files that could not be decoded.
    pub skipped: Vec<String>,
}

impl AccuracyReport {
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<28} {:>10} {:>6} {:>9} {:>6} {:>7}\n",
            "scenario", "size", "total", "recovered", "extra", "rate"
        );
        for s in &self.scenarios {
            let size = s
                .images
                .first()
                .map(|i| format!("{}*{}", i.width, i.height))
                .unwrap_or_default();
            out += &format!(
                "{:<28} {:>10} {:>6} {:>9} {:>6} {:>6.1}%\n",
                s.scenario,
                size,
                s.total,
                s.recovered,
                s.extra,
                100.0 * s.rate
            );
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no decodable images in {0}")]
    NoImages(String),
    #[error("cannot list {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn cell_seed(seed: u64, scenario: usize, image: usize) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((scenario as u64) << 32) | image as u64);
    r.random()
}

/// Embeds one transformed image in a fresh dump, carves it and scores it.
pub fn run_cell(
    name: &str,
    original: &Image,
    scenario: &Scenario,
    cfg: &CarveConfig,
    opts: &EvalOptions,
    seed: u64,
) -> ImageResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let format = if rng.random_bool(0.5) { PixelFormat::Rgba } else { PixelFormat::Argb };
    let failed = |error: String, w, h| ImageResult {
        image: name.to_string(),
        width: w,
        height: h,
        format,
        leading_pad: 0,
        trailing_pad: 0,
        best: MatchResult {
            matched: false,
            vertical_offset: 0,
            pixel_match_fraction: 0.0,
        },
        extra: 0,
        carved: Vec::new(),
        error: Some(error),
    };
    let img = match apply_transforms(original, &scenario.transforms, rng.random()) {
        Ok(i) => i,
        Err(e) => return failed(e.to_string(), 0, 0),
    };
    let m = img.width();
    let leading = rng.random_range(0..m);
    let trailing = rng.random_range(0..m);
    let pad_fill = opts.pad.pick(&mut rng);
    let bs = cfg.block_size;

    let mut junk = Vec::new();
    let mut cursor = bs * rng.random_range(0..3);
    if opts.junk {
        let len = bs * rng.random_range(1..4);
        junk.push(JunkSpec {
            offset: cursor,
            length: len,
            seed: rng.random(),
        });
        cursor += len + bs * rng.random_range(1..3);
    }
    let placement = PlacementSpec {
        image: &img,
        format,
        leading_pad: leading,
        trailing_pad: trailing,
        pad_fill,
        dump_offset: cursor,
    };
    let total = round_up(cursor + placement.byte_len(), bs) + bs * rng.random_range(1..3);
    let (dump, _) = match synth_dump(&[placement], total, &junk, cfg, rng.random()) {
        Ok(d) => d,
        Err(e) => return failed(e.to_string(), img.width(), img.height()),
    };
    let report = carve_dump(&dump, cfg, opts.carve);
    let mut best = MatchResult {
        matched: false,
        vertical_offset: 0,
        pixel_match_fraction: 0.0,
    };
    let mut extra = 0;
    for c in &report.images {
        let r = match_images(&img, &c.image.to_image(), opts.match_fraction);
        if !r.matched {
            extra += 1;
        }
        if r.matched && !best.matched || r.pixel_match_fraction > best.pixel_match_fraction {
            best = r;
        }
    }
    if best.matched {
        // Only one copy of the image is in the dump; further matches are extras.
        extra += report
            .images
            .iter()
            .filter(|c| match_images(&img, &c.image.to_image(), opts.match_fraction).matched)
            .count()
            - 1;
    }
    ImageResult {
        image: name.to_string(),
        width: img.width(),
        height: img.height(),
        format,
        leading_pad: leading,
        trailing_pad: trailing,
        best,
        extra,
        carved: report.images.iter().map(|c| c.image.layout).collect(),
        error: None,
    }
}

/// Runs every scenario over every image. Cells run in parallel and are
/// seeded independently, so the report does not depend on scheduling.
pub fn run_on_images(
    images: &[(String, Image)],
    scenarios: &[Scenario],
    cfg: &CarveConfig,
    opts: &EvalOptions,
    seed: u64,
) -> AccuracyReport {
    let cells: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..images.len()).map(move |i| (s, i)))
        .collect();
    let results: Vec<ImageResult> = cells
        .par_iter()
        .map(|&(s, i)| {
            let (name, img) = &images[i];
            run_cell(name, img, &scenarios[s], cfg, opts, cell_seed(seed, s, i))
        })
        .collect();
    let mut it = results.into_iter();
    let scenarios = scenarios
        .iter()
        .map(|sc| {
            let images: Vec<ImageResult> = it.by_ref().take(images.len()).collect();
            let recovered = images.iter().filter(|r| r.best.matched).count();
            let total = images.len();
            ScenarioReport {
                scenario: sc.name.clone(),
                total,
                recovered,
                extra: images.iter().map(|r| r.extra).sum(),
                rate: if total == 0 { 0.0 } else { recovered as f64 / total as f64 },
                images,
            }
        })
        .collect();
    AccuracyReport {
        seed,
        scenarios,
        skipped: Vec::new(),
    }
}

/// Decodes every file in `dir` (sorted by name); undecodable files are
/// skipped and listed in the report.
pub fn load_image_dir(dir: &Path) -> Result<(Vec<(String, Image)>, Vec<String>), EvalError> {
    let io = |source| EvalError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for p in paths {
        let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
        match image_io::decode(&p) {
            Ok(img) => images.push((name, img)),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", p.display());
                skipped.push(name);
            }
        }
    }
    if images.is_empty() {
        return Err(EvalError::NoImages(dir.display().to_string()));
    }
    Ok((images, skipped))
}

pub fn run_accuracy_suite(
    image_dir: &Path,
    scenarios: &[Scenario],
    cfg: &CarveConfig,
    seed: u64,
) -> Result<AccuracyReport, EvalError> {
    run_accuracy_suite_with(image_dir, scenarios, cfg, &EvalOptions::default(), seed)
}

pub fn run_accuracy_suite_with(
    image_dir: &Path,
    scenarios: &[Scenario],
    cfg: &CarveConfig,
    opts: &EvalOptions,
    seed: u64,
) -> Result<AccuracyReport, EvalError> {
    let (images, skipped) = load_image_dir(image_dir)?;
    let mut report = run_on_images(&images, scenarios, cfg, opts, seed);
    report.skipped = skipped;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_config;

    fn picture(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let v = (40.0 + 150.0 * x as f64 / w as f64 + 50.0 * (y as f64 / 9.0).sin()) as u8;
            [v, v / 2 + 20, 255 - v, 0xff]
        })
    }

    #[test]
    fn identical_images_match() {
        let a = picture(50, 40);
        let r = match_images(&a, &a, 0.99);
        assert_eq!(
            r,
            MatchResult {
                matched: true,
                vertical_offset: 0,
                pixel_match_fraction: 1.0
            }
        );
    }

    #[test]
    fn extra_rows_above_and_below() {
        let a = picture(50, 40);
        let mut px = vec![[1, 2, 3, 255]; 50];
        px.extend_from_slice(a.pixels());
        px.extend(vec![[9, 9, 9, 255]; 150]);
        let rec = Image::from_pixels(50, 44, px).unwrap();
        let r = match_images(&a, &rec, 0.99);
        assert!(r.matched);
        assert_eq!(r.vertical_offset, 1);
        assert_eq!(r.pixel_match_fraction, 1.0);
    }

    #[test]
    fn width_and_content_must_agree() {
        let a = picture(50, 40);
        assert!(!match_images(&a, &picture(51, 40), 0.99).matched);
        let shuffled = Image::from_fn(50, 40, |x, y| a.get((x + 7) % 50, y));
        assert!(!match_images(&a, &shuffled, 0.99).matched);
        // Too many rows above.
        let mut px = vec![[1, 2, 3, 255]; 150];
        px.extend_from_slice(a.pixels());
        assert!(!match_images(&a, &Image::from_pixels(50, 43, px).unwrap(), 0.99).matched);
    }

    #[test]
    fn tolerance_is_symmetric() {
        let a = picture(20, 20);
        let b = Image::from_fn(20, 20, |x, y| {
            let p = a.get(x, y);
            [p[0].saturating_add(2), p[1].saturating_sub(2), p[2], 0xff]
        });
        assert_eq!(match_images(&a, &b, 0.99).matched, match_images(&b, &a, 0.99).matched);
        assert!(match_images(&a, &b, 0.99).matched);
    }

    #[test]
    fn scenario_parsing() {
        let s: Scenario = "scale:0.5,noise:10".parse().unwrap();
        assert_eq!(s.transforms.len(), 2);
        assert_eq!(s.name, "scale:0.5,noise:10");
        assert!("".parse::<Scenario>().is_err());
        assert!("scale:2".parse::<Scenario>().is_err());
    }

    #[test]
    fn harness_is_deterministic() {
        let imgs = vec![("a".to_string(), crate::standin::landscape(1, 256, 192))];
        let sc = vec!["noise:5".parse().unwrap()];
        let cfg = default_config();
        let a = run_on_images(&imgs, &sc, &cfg, &EvalOptions::default(), 11);
        let b = run_on_images(&imgs, &sc, &cfg, &EvalOptions::default(), 11);
        assert_eq!(a, b);
        assert_eq!(a.scenarios[0].total, 1);
        assert!(a.scenarios[0].recovered <= a.scenarios[0].total);
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("notes.txt"), "hi").unwrap();
        assert!(matches!(load_image_dir(dir.path()), Err(EvalError::NoImages(_))));
    }
}
