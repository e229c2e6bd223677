//! Procedural photo-like scenes used when no real image set is at hand.
//!
//! Each scene is a small landscape: a graded sky with fractal clouds,
//! several ridge-lined terrain layers, and a scatter of buildings, trees and
//! rocks, finished with a vignette and sensor grain. What matters for carving
//! is that the pictures behave like photographs: strong vertical
//! correlation, uneven texture, large smooth areas, no exact repetition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::image_io::Image;

pub const BASE_WIDTH: usize = 1024;
pub const BASE_HEIGHT: usize = 768;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = mix64(seed ^ mix64((ix as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smoothly interpolated lattice noise in [0, 1).
fn value_noise(seed: u64, x: f64, y: f64, cell: f64) -> f64 {
    let (fx, fy) = (x / cell, y / cell);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (tx, ty) = (smooth(fx - x0), smooth(fy - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = lattice(seed, ix, iy);
    let b = lattice(seed, ix + 1, iy);
    let c = lattice(seed, ix, iy + 1);
    let d = lattice(seed, ix + 1, iy + 1);
    (a * (1.0 - tx) + b * tx) * (1.0 - ty) + (c * (1.0 - tx) + d * tx) * ty
}

/// Octave sum of centred noise; each octave spans roughly `[-amp, amp]`.
struct Fractal {
    seed: u64,
    octaves: Vec<(f64, f64)>,
}

impl Fractal {
    fn new(rng: &mut impl Rng, cells: &[f64], amps: &[f64]) -> Self {
        Self {
            seed: rng.random(),
            octaves: cells.iter().copied().zip(amps.iter().copied()).collect(),
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.octaves
            .iter()
            .enumerate()
            .map(|(i, &(cell, amp))| amp * 2.0 * (value_noise(self.seed.wrapping_add(i as u64), x, y, cell) - 0.5))
            .sum()
    }
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<[f64; 3]>,
}

impl Canvas {
    fn paint(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, mut f: impl FnMut(f64, f64, &mut [f64; 3])) {
        let xa = x0.floor().max(0.0) as usize;
        let ya = y0.floor().max(0.0) as usize;
        let xb = (x1.ceil().max(0.0) as usize).min(self.w);
        let yb = (y1.ceil().max(0.0) as usize).min(self.h);
        for y in ya..yb {
            for x in xa..xb {
                f(x as f64, y as f64, &mut self.px[y * self.w + x]);
            }
        }
    }
}

fn uniform3(rng: &mut impl Rng, lo: [f64; 3], hi: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|k| rng.random_range(lo[k]..hi[k]))
}

/// Cell boundaries covering `[0, span)` with pitches drawn from `range`.
fn pitches(rng: &mut impl Rng, span: f64, range: std::ops::Range<f64>) -> Vec<f64> {
    let mut edges = vec![0.0];
    while *edges.last().unwrap() < span {
        let next = edges.last().unwrap() + rng.random_range(range.clone());
        edges.push(next);
    }
    edges
}

/// Is `t` within the first `fill` fraction of its cell?
fn in_window(edges: &[f64], t: f64, fill: f64) -> bool {
    let i = edges.partition_point(|&e| e <= t);
    if i == 0 || i == edges.len() {
        return false;
    }
    let (a, b) = (edges[i - 1], edges[i]);
    t - a < (b - a) * fill
}

/// Renders scene `seed` at `w × h`. Geometry is laid out in a 1024×768
/// frame and mapped onto the requested size.
pub fn landscape(seed: u64, w: usize, h: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Work in base-frame units so a scene looks alike at every size.
    let sx = BASE_WIDTH as f64 / w as f64;
    let sy = BASE_HEIGHT as f64 / h as f64;
    let (bw, bh) = (BASE_WIDTH as f64, BASE_HEIGHT as f64);
    let mut cv = Canvas {
        w,
        h,
        px: vec![[0.0; 3]; w * h],
    };

    let horizon = rng.random_range(0.25..0.6) * bh;
    let top = uniform3(&mut rng, [50.0, 80.0, 140.0], [120.0, 160.0, 230.0]);
    let bottom = uniform3(&mut rng, [100.0, 140.0, 160.0], [140.0, 210.0, 240.0]);
    let clouds = Fractal::new(&mut rng, &[128.0, 48.0, 16.0, 6.0], &[50.0, 25.0, 12.0, 6.0]);
    let cloud_bias = rng.random_range(-40.0..0.0);
    let cloud_gain = rng.random_range(0.5..0.9);
    cv.paint(0.0, 0.0, w as f64, h as f64, |x, y, p| {
        let (u, v) = (x * sx, y * sy);
        let t = (v / horizon).min(1.0);
        let c = (clouds.at(u, v) + cloud_bias).max(0.0) * cloud_gain;
        for k in 0..3 {
            p[k] = top[k] * (1.0 - t) + bottom[k] * t + c;
        }
    });

    // Terrain, far to near.
    let layers = rng.random_range(2..5);
    let mut base = horizon;
    for layer in 0..layers {
        let ridge = Fractal::new(&mut rng, &[256.0, 64.0, 16.0, 4.0], &[40.0, 15.0, 5.0, 2.0]);
        let lift = rng.random_range(0.0..60.0);
        let col = uniform3(&mut rng, [40.0, 50.0, 20.0], [170.0, 180.0, 140.0]);
        let tex = Fractal::new(&mut rng, &[64.0, 16.0, 4.0, 2.0], &[20.0, 18.0, 15.0, 12.0]);
        let tex_gain = (0.6 + 0.4 * layer as f64) * rng.random_range(0.7..1.2);
        let line_min = base - lift - 62.0;
        cv.paint(0.0, line_min / sy, w as f64, h as f64, |x, y, p| {
            let (u, v) = (x * sx, y * sy);
            let line = base + ridge.at(u, 0.0) - lift;
            if v > line {
                let shade = 1.0 + 0.15 * (v - line) / bh;
                let t = tex.at(u, v) * tex_gain;
                for k in 0..3 {
                    p[k] = col[k] * shade + t;
                }
            }
        });
        base += (bh - base) * rng.random_range(0.15..0.4);
    }

    for _ in 0..rng.random_range(3..12) {
        let col = uniform3(&mut rng, [20.0; 3], [210.0; 3]);
        match rng.random_range(0..3) {
            0 => {
                // Building with a window grid.
                let width = rng.random_range(30.0..bw * 0.25);
                let height = rng.random_range(40.0..bh * 0.5);
                let x0 = rng.random_range(-width / 2.0..bw - width / 2.0);
                let y1 = rng.random_range(horizon..bh);
                let y0 = y1 - height;
                // Floors and window columns vary in pitch, as on real facades;
                // a perfectly regular grid would alias into exact repeats
                // once the scene is downscaled.
                let cols = pitches(&mut rng, width, 10.0..40.0);
                let floors = pitches(&mut rng, height, 14.0..48.0);
                let lit = if rng.random_bool(0.5) {
                    uniform3(&mut rng, [10.0; 3], [90.0; 3])
                } else {
                    uniform3(&mut rng, [150.0; 3], [230.0; 3])
                };
                let tex = Fractal::new(&mut rng, &[8.0, 3.0], &[8.0, 6.0]);
                cv.paint(x0 / sx, y0 / sy, (x0 + width) / sx, y1 / sy, |x, y, p| {
                    let (u, v) = (x * sx, y * sy);
                    if u < x0 || u >= x0 + width || v < y0 || v >= y1 {
                        return;
                    }
                    let window = in_window(&cols, u - x0, 0.5) && in_window(&floors, v - y0, 0.55);
                    let c = if window { lit } else { col };
                    let t = tex.at(u, v);
                    for k in 0..3 {
                        p[k] = c[k] + t;
                    }
                });
            }
            1 => {
                // Lumpy textured tree crown.
                let cx = rng.random_range(0.0..bw);
                let cy = rng.random_range(horizon * 0.8..bh);
                let r = rng.random_range(20.0..bh * 0.25);
                let lump_seed: u64 = rng.random();
                let tex = Fractal::new(&mut rng, &[8.0, 3.0, 2.0], &[35.0, 30.0, 25.0]);
                let reach = r * 1.25;
                cv.paint((cx - reach) / sx, (cy - reach) / sy, (cx + reach) / sx, (cy + reach) / sy, |x, y, p| {
                    let (u, v) = (x * sx, y * sy);
                    let lumpy = r * (1.0 + 0.25 * (value_noise(lump_seed, u, v, 12.0) - 0.5));
                    if (u - cx).hypot((v - cy) * 1.2) < lumpy {
                        let t = tex.at(u, v);
                        for k in 0..3 {
                            p[k] = col[k] * 0.6 + t;
                        }
                    }
                });
            }
            _ => {
                // Rock or bush.
                let cx = rng.random_range(0.0..bw);
                let cy = rng.random_range(horizon..bh);
                let rx = rng.random_range(6.0..60.0);
                let ry = rng.random_range(15.0..120.0);
                let tex = Fractal::new(&mut rng, &[6.0, 2.0], &[10.0, 8.0]);
                cv.paint((cx - rx) / sx, (cy - ry) / sy, (cx + rx) / sx, (cy + ry) / sy, |x, y, p| {
                    let (u, v) = (x * sx, y * sy);
                    let (dx, dy) = ((u - cx) / rx, (v - cy) / ry);
                    if dx * dx + dy * dy < 1.0 {
                        let t = tex.at(u, v);
                        for k in 0..3 {
                            p[k] = col[k] + t;
                        }
                    }
                });
            }
        }
    }

    let (hw, hh) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut pixels = Vec::with_capacity(w * h);
    for (i, p) in cv.px.iter().enumerate() {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let vig = 1.0 - 0.125 * (((x - hw) / hw).powi(2) + ((y - hh) / hh).powi(2));
        let mut out = [0xffu8; 4];
        for k in 0..3 {
            let grain: f64 = StandardNormal.sample(&mut rng);
            out[k] = (p[k] * vig + 2.0 * grain).round().clamp(0.0, 255.0) as u8;
        }
        pixels.push(out);
    }
    Image::from_pixels(w, h, pixels).expect("canvas matches its size")
}

/// `count` distinct scenes at the base resolution.
pub fn standin_set(count: usize, seed: u64) -> Vec<(String, Image)> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let scene = mix64(seed.wrapping_add(i as u64));
            (format!("scene{i:02}"), landscape(scene, BASE_WIDTH, BASE_HEIGHT))
        })
        .collect()
}
