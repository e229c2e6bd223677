//! Magnitude spectra of real signals at their exact length.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// `|DFT(x)|`, one amplitude per input sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    amplitudes: Vec<f64>,
}

impl Spectrum {
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.amplitudes
    }
}

/// A forward transform of real signals, planned once for a fixed length.
///
/// Even lengths run one complex transform of half the length on the
/// samples packed pairwise as `x[2t] + i·x[2t+1]` and untangle the result,
/// which halves the work on large tiles. Odd lengths use the full
/// complex transform.
pub(crate) struct Magnitude {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
    /// `exp(-2πik/len)` for `k` in `0..=len/2`; empty for odd lengths.
    twiddles: Vec<Complex<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Magnitude {
    pub(crate) fn new(len: usize) -> Self {
        let packed = len % 2 == 0 && len >= 2;
        let fft = FftPlanner::new().plan_fft_forward(if packed { len / 2 } else { len });
        let twiddles = if packed { twiddles(len) } else { Vec::new() };
        Self {
            len,
            scratch: vec![Complex::default(); fft.get_inplace_scratch_len()],
            buf: Vec::with_capacity(fft.len()),
            fft,
            twiddles,
        }
    }

    pub(crate) fn apply(&mut self, sig: &[f64], out: &mut Vec<f64>) {
        let n = self.len;
        assert_eq!(sig.len(), n, "signal length must match plan");
        self.buf.clear();
        out.clear();
        if self.twiddles.is_empty() {
            self.buf.extend(sig.iter().map(|&x| Complex::new(x, 0.0)));
            self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
            out.extend(self.buf.iter().map(|c| c.norm()));
            return;
        }
        let half = n / 2;
        self.buf.extend(sig.chunks_exact(2).map(|p| Complex::new(p[0], p[1])));
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        let z = &self.buf;
        for k in 0..=half {
            let a = z[k % half];
            let b = z[(half - k) % half].conj();
            let even = (a + b) * 0.5;
            let odd = (a - b) * Complex::new(0.0, -0.5);
            out.push((even + self.twiddles[k] * odd).norm());
        }
        // A real signal's spectrum is conjugate-symmetric: |X[n-k]| = |X[k]|.
        for k in half + 1..n {
            out.push(out[n - k]);
        }
    }
}

/// `exp(-2πik/n)` for `k` in `0..=n/2`. Rotating step by step is much
/// cheaper than a sine and cosine per entry; an exact value every 256
/// entries keeps the drift at rounding level.
fn twiddles(n: usize) -> Vec<Complex<f64>> {
    let at = |k: usize| Complex::from_polar(1.0, -2.0 * PI * k as f64 / n as f64);
    let step = at(1);
    let mut out = Vec::with_capacity(n / 2 + 1);
    let mut w = Complex::new(1.0, 0.0);
    for k in 0..=n / 2 {
        if k % 256 == 0 {
            w = at(k);
        }
        out.push(w);
        w *= step;
    }
    out
}

pub fn amplitude_spectrum(sig: &[f64]) -> Spectrum {
    if sig.is_empty() {
        return Spectrum { amplitudes: Vec::new() };
    }
    let mut out = Vec::with_capacity(sig.len());
    Magnitude::new(sig.len()).apply(sig, &mut out);
    Spectrum { amplitudes: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive(sig: &[f64]) -> Vec<f64> {
        let n = sig.len();
        (0..n)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &x) in sig.iter().enumerate() {
                    let a = -2.0 * PI * (k * t % n) as f64 / n as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                re.hypot(im)
            })
            .collect()
    }

    #[test]
    fn matches_direct_dft_at_awkward_lengths() {
        for n in [1usize, 2, 7, 12, 97, 210, 257] {
            let sig: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 23) as f64 - 4.0).collect();
            let got = amplitude_spectrum(&sig);
            let want = naive(&sig);
            assert_eq!(got.len(), n);
            for (g, w) in got.amplitudes().iter().zip(&want) {
                assert!((g - w).abs() < 1e-8 * (1.0 + w.abs()), "n={n}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn constant_is_dc_only() {
        let s = amplitude_spectrum(&[3.0; 50]);
        assert!((s.amplitudes()[0] - 150.0).abs() < 1e-9);
        assert!(s.amplitudes()[1..].iter().all(|&a| a < 1e-9));
    }

    #[test]
    fn cosine_has_two_lines() {
        let n = 120;
        let sig: Vec<f64> = (0..n).map(|t| (2.0 * PI * 9.0 * t as f64 / n as f64).cos()).collect();
        let s = amplitude_spectrum(&sig);
        for (k, &a) in s.amplitudes().iter().enumerate() {
            if k == 9 || k == n - 9 {
                assert!((a - 60.0).abs() < 1e-9);
            } else {
                assert!(a < 1e-9, "leak at {k}: {a}");
            }
        }
    }

    #[test]
    fn mirror_symmetric() {
        let sig: Vec<f64> = (0..101).map(|i| ((i * i) % 17) as f64).collect();
        let a = amplitude_spectrum(&sig).into_inner();
        for k in 1..a.len() {
            assert!((a[k] - a[a.len() - k]).abs() < 1e-9);
        }
    }
}
