//! Width, height and leading-offset inference for a single tile.
//!
//! A tile holding an image of width `m` is, viewed as a 1-D grey signal,
//! close to periodic with period `m` because vertically adjacent pixels are
//! similar. The magnitude spectrum of that signal has its main components
//! spaced `n` apart; taking the magnitude spectrum a second time turns the
//! spacing back into a peak at `m`. Low indices of the second spectrum are
//! dominated by bulk similarity and are cut away before searching the peak.

use thiserror::Error;

use crate::model::{CarveConfig, Flag, GraySignal, LayoutHypothesis, RecoveredImage, Tile};
use crate::spectrum::Magnitude;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LayoutError {
    /// The strongest periodic component is too weak to trust.
    #[error("strongest component at width {width} has normalized height {peak:.3}")]
    NotEnoughLength { width: usize, peak: f64 },
    /// The second spectrum never drops below its mean, so no cutoff exists.
    #[error("spectrum never falls below its mean")]
    Degenerate,
    #[error("width {width} outside [2, N/2]")]
    WidthOutOfRange { width: usize },
}

/// Mean of R, G and B for every word.
pub fn grayscale(t: &Tile) -> GraySignal {
    let fmt = t.format();
    GraySignal(
        t.words()
            .map(|w| {
                let [r, g, b, _] = fmt.decode(w);
                (r as f64 + g as f64 + b as f64) / 3.0
            })
            .collect(),
    )
}

/// Window of the first trend-removing pass for a signal of length `n`.
pub fn detrend_window(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(2).min(n.max(1))
}

/// Subtracts a circular moving average and restores the global mean.
///
/// Slow brightness changes along the tile (a bright sky over dark ground,
/// a vignette) add a broad low-frequency hump to the second spectrum that
/// can push the cutoff past the true width.
pub fn detrend(g: &[f64]) -> Vec<f64> {
    detrend_with(g, detrend_window(g.len()))
}

/// [`detrend`] with an explicit window. A window of exactly one row (or a
/// whole number of rows) averages every row harmonic to zero, so the
/// subtraction removes the trend and nothing of the row structure.
pub fn detrend_with(g: &[f64], window: usize) -> Vec<f64> {
    let n = g.len();
    if n < 3 {
        return g.to_vec();
    }
    let w = window.clamp(2, n);
    let mean = g.iter().sum::<f64>() / n as f64;
    let back = w / 2;
    // Window for sample i covers i-back ..= i-back+w-1, wrapping.
    let mut acc: f64 = (0..w).map(|j| g[(j + n - back % n) % n]).sum();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(g[i] - acc / w as f64 + mean);
        let leaving = (i + n - back % n) % n;
        let entering = (i + n - back % n + w) % n;
        acc += g[entering] - g[leaving];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthEstimate {
    pub width: usize,
    /// Normalized height of the chosen component.
    pub peak: f64,
    /// First index searched for the peak.
    pub cutoff: usize,
}

/// Second magnitude spectrum of `sig`, normalized to mean 1.
/// `None` if the signal is identically zero.
fn normalized_double_spectrum(mag: &mut Magnitude, sig: &[f64]) -> Option<Vec<f64>> {
    let mut f1 = Vec::with_capacity(sig.len());
    let mut f2 = Vec::with_capacity(sig.len());
    mag.apply(sig, &mut f1);
    mag.apply(&f1, &mut f2);
    let mean = f2.iter().sum::<f64>() / f2.len() as f64;
    if !(mean > 0.0) {
        return None;
    }
    f2.iter_mut().for_each(|v| *v /= mean);
    Some(f2)
}

// Rounding noise keeps a flat spectrum from ever sitting exactly at 1.
const BELOW_MEAN: f64 = 1.0 - 1e-9;
const TIE: f64 = 1e-9;

/// Infers the image width of a tile from its grey signal.
///
/// With `cfg.refine` off this is the bare double-spectrum search. With it
/// on (the default):
/// 1. a first search runs on the signal with slow trends removed;
/// 2. the search is repeated with the trend window set to that width,
///    which keeps the row harmonics a shorter window would eat into;
/// 3. the width is settled within a few pixels of the spectral peak by the
///    smallest mean row-to-row difference. Smooth pictures have few row
///    harmonics, and their broad peak can sit a pixel or two off.
pub fn infer_width(g: &GraySignal, cfg: &CarveConfig) -> Result<WidthEstimate, LayoutError> {
    if g.len() / 2 < 2 {
        return Err(LayoutError::WidthOutOfRange { width: g.len() / 2 });
    }
    let mut mag = Magnitude::new(g.len());
    if !cfg.refine {
        return estimate_width(&mut mag, g.values(), cfg);
    }
    let first = estimate_width(&mut mag, &detrend(g.values()), cfg);
    let candidate = match first {
        Ok(e) => e.width,
        Err(LayoutError::NotEnoughLength { width, .. }) if width >= 2 => width,
        Err(_) => return first,
    };
    match estimate_width(&mut mag, &detrend_with(g.values(), candidate), cfg) {
        Ok(e) => Ok(WidthEstimate {
            width: closest_rows(g.values(), e.width),
            ..e
        }),
        Err(LayoutError::NotEnoughLength { width, peak }) if width >= 2 => Err(LayoutError::NotEnoughLength {
            width: closest_rows(g.values(), width),
            peak,
        }),
        other => other,
    }
}

/// Mean absolute difference between samples `lag` apart, wrapping around
/// so the result does not depend on where the tile starts.
fn lag_difference(g: &[f64], lag: usize) -> f64 {
    let n = g.len();
    let (head, tail) = g.split_at(lag);
    let straight: f64 = g.iter().zip(tail).map(|(a, b)| (a - b).abs()).sum();
    let wrapped: f64 = g[n - lag..].iter().zip(head).map(|(a, b)| (a - b).abs()).sum();
    (straight + wrapped) / n as f64
}

/// The width within reach of `w` whose rows differ least from the rows
/// below them; `w` itself on ties.
fn closest_rows(g: &[f64], w: usize) -> usize {
    let reach = (w / 32).clamp(2, 16);
    let lo = w.saturating_sub(reach).max(2);
    let hi = (w + reach).min(g.len() / 2);
    let mut best = (lag_difference(g, w), w);
    for cand in lo..=hi {
        let d = lag_difference(g, cand);
        if d < best.0 {
            best = (d, cand);
        }
    }
    best.1
}

fn estimate_width(mag: &mut Magnitude, sig: &[f64], cfg: &CarveConfig) -> Result<WidthEstimate, LayoutError> {
    let half = sig.len() / 2;
    let Some(f2) = normalized_double_spectrum(mag, sig) else {
        return Err(LayoutError::NotEnoughLength { width: 0, peak: 0.0 });
    };
    // An exactly periodic tile puts equal peaks at every multiple of its
    // width; rounding decides which one is largest, so take the first
    // index that ties with the maximum.
    let argmax_from = |from: usize| {
        let top = f2[from..=half].iter().copied().fold(f64::MIN, f64::max);
        let floor = top - top.abs() * TIE;
        (from..=half).find(|&k| f2[k] >= floor).unwrap_or(from)
    };
    let Some(cutoff) = (1..=half).find(|&k| f2[k] < BELOW_MEAN) else {
        let best = argmax_from(1);
        return if f2[best] < cfg.theta0 {
            Err(LayoutError::NotEnoughLength { width: best, peak: f2[best] })
        } else {
            Err(LayoutError::Degenerate)
        };
    };
    let width = argmax_from(cutoff);
    let peak = f2[width];
    if width < 2 {
        return Err(LayoutError::WidthOutOfRange { width });
    }
    if peak < cfg.theta0 {
        return Err(LayoutError::NotEnoughLength { width, peak });
    }
    Ok(WidthEstimate { width, peak, cutoff })
}

/// Row-major grey values, `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GrayMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix shape mismatch");
        Self { rows, cols, data }
    }

    /// Reshapes `values[skip..]` into as many full rows of `cols` as fit.
    pub fn reshape(values: &[f64], skip: usize, cols: usize) -> Self {
        let rows = values.len().saturating_sub(skip) / cols;
        Self::new(rows, cols, values[skip..skip + rows * cols].to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Rows where column `i` differs from its left neighbour (wrapping) by more than θ3.
pub fn column_distance(a: &GrayMatrix, i: usize, cfg: &CarveConfig) -> usize {
    let m = a.cols();
    let left = (i + m - 1) % m;
    (0..a.rows())
        .filter(|&r| (a.get(r, i) - a.get(r, left)).abs() > cfg.theta3)
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile {
    /// Column distances normalized to mean 1; raw counts if degenerate.
    pub dist: Vec<f64>,
    pub argmax: usize,
    /// Index of the largest value other than `argmax`.
    pub second: usize,
    /// All raw distances were zero.
    pub degenerate: bool,
}

pub fn distance_profile(a: &GrayMatrix, cfg: &CarveConfig) -> DistanceProfile {
    let m = a.cols();
    // One pass over rows is far friendlier to the cache than m column walks.
    let mut counts = vec![0usize; m];
    for r in 0..a.rows() {
        let row = &a.data[r * m..(r + 1) * m];
        let mut prev = row[m - 1];
        for (c, &v) in row.iter().enumerate() {
            counts[c] += ((v - prev).abs() > cfg.theta3) as usize;
            prev = v;
        }
    }
    let total: usize = counts.iter().sum();
    let mut dist: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let degenerate = total == 0;
    if !degenerate {
        let mean = total as f64 / m as f64;
        dist.iter_mut().for_each(|d| *d /= mean);
    }
    let mut argmax = 0;
    for (i, &d) in dist.iter().enumerate() {
        if d > dist[argmax] {
            argmax = i;
        }
    }
    let mut second = if argmax == 0 { 1.min(m - 1) } else { 0 };
    for (i, &d) in dist.iter().enumerate() {
        if i != argmax && d > dist[second] {
            second = i;
        }
    }
    DistanceProfile {
        dist,
        argmax,
        second,
        degenerate,
    }
}

/// Column at which image rows really start, or 0 if the evidence is weak.
pub fn infer_offset(a: &GrayMatrix, cfg: &CarveConfig) -> usize {
    if a.cols() < 2 || a.rows() == 0 {
        return 0;
    }
    let p = distance_profile(a, cfg);
    if p.degenerate {
        return 0;
    }
    let s = p.argmax;
    let runner_up = p.dist[p.second];
    let clear_winner = runner_up == 0.0 || p.dist[s] / runner_up > cfg.theta2;
    if p.dist[0] < cfg.theta1 && clear_winner {
        s
    } else {
        0
    }
}

fn reshape_words(t: &Tile, width: usize, gray: &GraySignal, cfg: &CarveConfig) -> (LayoutHypothesis, Vec<[u8; 4]>) {
    let n_words = t.len();
    let a = GrayMatrix::reshape(gray.values(), 0, width);
    let mut leading = infer_offset(&a, cfg);
    if (n_words - leading) / width < 2 {
        leading = 0;
    }
    let height = (n_words - leading) / width;
    let trailing = n_words - leading - height * width;
    let fmt = t.format();
    let pixels = t
        .words()
        .skip(leading)
        .take(height * width)
        .map(|w| fmt.decode(w))
        .collect();
    (
        LayoutHypothesis {
            width,
            height,
            leading,
            trailing,
        },
        pixels,
    )
}

fn assemble(t: &Tile, width: usize, gray: &GraySignal, cfg: &CarveConfig, flags: Vec<Flag>) -> RecoveredImage {
    let (layout, pixels) = reshape_words(t, width, gray, cfg);
    RecoveredImage {
        width: layout.width,
        height: layout.height,
        pixels,
        format: t.format(),
        layout,
        flags,
    }
}

/// Infers the layout of `t` and reshapes its words into an image.
pub fn recover_image(t: &Tile, cfg: &CarveConfig) -> Result<RecoveredImage, LayoutError> {
    let gray = grayscale(t);
    let est = infer_width(&gray, cfg)?;
    Ok(assemble(t, est.width, &gray, cfg, Vec::new()))
}

/// Like [`recover_image`], but a weak-peak rejection with a usable width and
/// a peak still above the spectrum mean yields a flagged image instead.
pub fn recover_image_or_flag(t: &Tile, cfg: &CarveConfig) -> Result<RecoveredImage, LayoutError> {
    let gray = grayscale(t);
    match infer_width(&gray, cfg) {
        Ok(est) => Ok(assemble(t, est.width, &gray, cfg, Vec::new())),
        Err(LayoutError::NotEnoughLength { width, peak })
            if width >= 2 && width <= t.len() / 2 && peak > 1.0 =>
        {
            Ok(assemble(t, width, &gray, cfg, vec![Flag::PotentialFalsePositive]))
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_config, PixelFormat};

    fn tile_from_gray(values: &[u8]) -> Tile {
        let words: Vec<[u8; 4]> = values.iter().map(|&v| [v, v, v, 0xff]).collect();
        Tile::from_words(&words, PixelFormat::Rgba, 0).unwrap()
    }

    // A smooth, non-repeating picture: gradients and a disc.
    fn picture(w: usize, h: usize) -> Vec<u8> {
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let fx = x as f64 / w as f64;
                let fy = y as f64 / h as f64;
                let mut g = 40.0 + 120.0 * fx + 40.0 * (fy * 3.1).sin();
                let dx = fx - 0.45;
                let dy = fy - 0.4;
                if dx * dx + dy * dy < 0.05 {
                    g = 220.0 - 50.0 * fy;
                }
                v.push(g.clamp(1.0, 254.0) as u8);
            }
        }
        v
    }

    #[test]
    fn grayscale_examples() {
        let t = Tile::from_words(&[[0, 0, 0, 255], [255, 255, 255, 255]], PixelFormat::Rgba, 0).unwrap();
        assert_eq!(grayscale(&t).values(), &[0.0, 255.0]);
        let t = Tile::from_words(&[[255, 30, 60, 90]], PixelFormat::Argb, 0).unwrap();
        assert_eq!(grayscale(&t).values(), &[60.0]);
    }

    #[test]
    fn detrend_keeps_mean_and_flattens_ramp() {
        let g: Vec<f64> = (0..10_000).map(|i| i as f64 / 100.0).collect();
        let d = detrend(&g);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&d) - mean(&g)).abs() < 1e-6);
        // Away from the wrap point the ramp is gone.
        let spread = d[200..9800].iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(spread.1 - spread.0 < 1e-6, "{spread:?}");
    }

    #[test]
    fn row_window_removes_trend_but_keeps_rows() {
        // Rows of a fixed pattern on a vertical ramp: averaging over exactly one
        // row cancels the pattern, so only the ramp is subtracted.
        let w = 20;
        let row: Vec<f64> = (0..w).map(|x| ((x * 37) % 11) as f64).collect();
        let g: Vec<f64> = (0..w * 30).map(|i| row[i % w] + (i / w) as f64 * 3.0).collect();
        let d = detrend_with(&g, w);
        // Away from the wrap-around, consecutive rows coincide.
        for i in 2 * w..d.len() - 3 * w {
            assert!((d[i] - d[i + w]).abs() < 1e-6, "{i}: {} vs {}", d[i], d[i + w]);
        }
    }

    #[test]
    fn closest_rows_moves_to_true_width() {
        let img = picture(100, 40);
        let g: Vec<f64> = img.iter().map(|&v| v as f64).collect();
        assert_eq!(closest_rows(&g, 100), 100);
        assert_eq!(closest_rows(&g, 98), 100);
        assert_eq!(closest_rows(&g, 103), 100);
        // Shift-invariant: the circular lag difference ignores where the signal starts.
        let mut r = g.clone();
        r.rotate_left(37);
        assert!((lag_difference(&g, 100) - lag_difference(&r, 100)).abs() < 1e-9);
    }

    #[test]
    fn repeated_row_gives_its_width() {
        let row: Vec<u8> = (0..64).map(|i| ((i * 37) % 200 + 20) as u8).collect();
        let values = row.repeat(48);
        for refine in [true, false] {
            let cfg = CarveConfig { refine, ..default_config() };
            let est = infer_width(&grayscale(&tile_from_gray(&values)), &cfg).unwrap();
            assert_eq!(est.width, 64);
        }
    }

    #[test]
    fn constant_signal_is_not_enough() {
        let t = tile_from_gray(&[77; 3072]);
        for refine in [true, false] {
            let cfg = CarveConfig { refine, ..default_config() };
            assert!(matches!(
                infer_width(&grayscale(&t), &cfg),
                Err(LayoutError::NotEnoughLength { .. })
            ));
            assert!(recover_image(&t, &cfg).is_err());
        }
    }

    #[test]
    fn column_distance_examples() {
        let cfg = default_config();
        let same = GrayMatrix::new(3, 2, vec![10.0, 10.0, 10.0, 10.0, 10.0, 10.0]);
        assert_eq!(column_distance(&same, 1, &cfg), 0);
        // column 1 = (10,14,30) against column 0 = (10,10,10)
        let a = GrayMatrix::new(3, 2, vec![10.0, 10.0, 10.0, 14.0, 10.0, 30.0]);
        assert_eq!(column_distance(&a, 1, &cfg), 1);
        let b = GrayMatrix::new(2, 2, vec![0.0, 5.0, 10.0, 15.0]);
        assert_eq!(column_distance(&b, 1, &cfg), 0);
        assert_eq!(column_distance(&b, 0, &cfg), 0);
    }

    #[test]
    fn profile_agrees_with_column_distance() {
        let cfg = default_config();
        let data: Vec<f64> = picture(40, 30).into_iter().map(f64::from).collect();
        let a = GrayMatrix::new(30, 40, data);
        let p = distance_profile(&a, &cfg);
        let raw: Vec<usize> = (0..40).map(|i| column_distance(&a, i, &cfg)).collect();
        let mean = raw.iter().sum::<usize>() as f64 / 40.0;
        for (d, r) in p.dist.iter().zip(&raw) {
            assert!((d - *r as f64 / mean).abs() < 1e-12);
        }
        assert!((p.dist.iter().sum::<f64>() / 40.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn offset_of_aligned_and_shifted_picture() {
        let cfg = default_config();
        let (w, h) = (64, 48);
        let pic = picture(w, h);
        let aligned = GrayMatrix::new(h, w, pic.iter().map(|&v| v as f64).collect());
        assert_eq!(infer_offset(&aligned, &cfg), 0);

        let mut shifted: Vec<f64> = vec![0.0; 10];
        shifted.extend(pic.iter().map(|&v| v as f64));
        let a = GrayMatrix::reshape(&shifted, 0, w);
        assert_eq!(infer_offset(&a, &cfg), 10);

        let uniform = GrayMatrix::new(4, 4, vec![9.0; 16]);
        assert_eq!(infer_offset(&uniform, &cfg), 0);
    }

    #[test]
    fn recover_exact_and_padded() {
        let cfg = default_config();
        let (w, h) = (64, 48);
        let pic = picture(w, h);
        let t = tile_from_gray(&pic);
        let img = recover_image(&t, &cfg).unwrap();
        assert_eq!((img.width, img.height, img.layout.leading), (64, 48, 0));
        assert!(img.pixels.iter().zip(&pic).all(|(p, &g)| p[0] == g));

        let mut padded = vec![3u8; 10];
        padded.extend(&pic);
        padded.extend(vec![3u8; 37]);
        let t = tile_from_gray(&padded);
        let img = recover_image(&t, &cfg).unwrap();
        let l = img.layout;
        assert_eq!((l.width, l.leading), (64, 10));
        assert_eq!(l.tile_len(), t.len());
        assert_eq!(&img.pixels[..w * h].iter().map(|p| p[0]).collect::<Vec<_>>(), &pic);
    }

    #[test]
    fn flagged_recovery_only_for_weak_peaks() {
        let pic = picture(64, 48);
        let t = tile_from_gray(&pic);
        let strict = CarveConfig { theta0: 1000.0, ..default_config() };
        assert!(matches!(recover_image(&t, &strict), Err(LayoutError::NotEnoughLength { .. })));
        let img = recover_image_or_flag(&t, &strict).unwrap();
        assert!(img.is_flagged());
        assert_eq!(img.width, 64);
        assert!(recover_image_or_flag(&tile_from_gray(&[5; 1000]), &strict).is_err());
    }
}
