//! Short-time Fourier transforms with continuous frame positions.
//!
//! For frame `i` with position `t = p + delta` (`p` integer, `delta` in
//! `[0, 1)`), the spectrum is
//!
//! ```text
//! S[i, f] = sum_k w(k - delta) s[p + k] exp(-2j pi (k - delta) f / N)
//! ```
//!
//! where `w` is the centered window of length `lambda_i`. The taps run over
//! `k = 0..=N`: a window of length at most `N` centered at `(N-1)/2` is
//! zero outside `[-1/2, N-1/2]`, and `k - delta` falls in that interval only
//! for `k` in `0..=N`. Keeping the extra tap makes `S` continuous when
//! `delta` wraps from just below 1 to 0. The Gaussian never reaches zero, so
//! it is truncated to the support `[0, N-1]`; at integer positions it then
//! reads exactly the classical slice. The tap at `k = N` has the same
//! Fourier phase as `k = 0`, so it is folded into the first FFT input and the
//! transform stays a plain `N`-point DFT times the phase `exp(2j pi delta f / N)`.
//!
//! Gradients use the adjoint pairing `dL = sum 2 Re(conj(G) dS)`, where `G`
//! is the cotangent of a real scalar loss `L`. For `L = |S|^2` the cotangent
//! is `S` itself.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::layout::FrameLayout;
use crate::par::map_frames;
use crate::signal::Signal;
use crate::window::{check_params, eval_unchecked, WindowEval, WindowKind};

/// `frames x bins` matrix of complex spectrum values, stored row-major by
/// frame. The bin count equals the window support (two-sided spectrum).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        ComplexSpectrogram {
            frames,
            bins,
            data: vec![Complex64::new(0.0, 0.0); frames * bins],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let frames = rows.len();
        let bins = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != bins) {
            return Err(Error::Shape {
                expected_frames: frames,
                expected_bins: bins,
                frames,
                bins: bad.len(),
            });
        }
        Ok(ComplexSpectrogram {
            frames,
            bins,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn get(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.bins + bin]
    }

    pub fn set(&mut self, frame: usize, bin: usize, value: Complex64) {
        self.data[frame * self.bins + bin] = value;
    }

    pub fn row(&self, frame: usize) -> &[Complex64] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks(self.bins.max(1)).take(self.frames)
    }

    pub fn magnitude(&self, frame: usize, bin: usize) -> f64 {
        self.get(frame, bin).norm()
    }

    pub(crate) fn check_shape(&self, frames: usize, bins: usize) -> Result<()> {
        if self.frames != frames || self.bins != bins {
            return Err(Error::Shape {
                expected_frames: frames,
                expected_bins: bins,
                frames: self.frames,
                bins: self.bins,
            });
        }
        Ok(())
    }
}

/// Per-frame partial derivatives of a real scalar loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d_t: Vec<f64>,
    pub d_lambda: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(frames: usize) -> Self {
        GradientSet {
            d_t: vec![0.0; frames],
            d_lambda: vec![0.0; frames],
        }
    }

    pub fn frames(&self) -> usize {
        self.d_t.len()
    }

    /// Iterates `d_t` followed by `d_lambda`.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.d_t.iter().chain(self.d_lambda.iter()).copied()
    }

    pub fn norm_sq(&self) -> f64 {
        self.flat().map(|g| g * g).sum()
    }

    pub fn inf_norm_t(&self) -> f64 {
        self.d_t.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn inf_norm_lambda(&self) -> f64 {
        self.d_lambda.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(f64::is_finite)
    }

    /// Returns `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &GradientSet, b: f64) -> GradientSet {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| a * x + b * y).collect();
        GradientSet {
            d_t: mix(&self.d_t, &other.d_t),
            d_lambda: mix(&self.d_lambda, &other.d_lambda),
        }
    }
}

/// Spectrum of one frame together with its derivatives in `t_i` and
/// `lambda_i`.
#[derive(Debug, Clone)]
pub(crate) struct FrameSpectra {
    pub spectrum: Vec<Complex64>,
    pub d_t: Vec<Complex64>,
    pub d_lambda: Vec<Complex64>,
}

/// Planned forward FFT of size `N`, shared across frames.
#[derive(Clone)]
pub(crate) struct Engine {
    support: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Engine {
    pub fn new(support: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(support);
        Engine { support, fft }
    }

    fn transform(&self, buf: &mut [Complex64]) {
        self.fft.process(buf);
    }

    /// Forward value of one frame (no derivatives).
    pub fn spectrum(&self, signal: &Signal, layout: &FrameLayout, i: usize) -> Vec<Complex64> {
        let n = self.support;
        let (p, delta) = split_position(layout.positions[i]);
        let lambda = layout.lengths[i];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..=n {
            let w = tap(layout.window, k as f64 - delta, n, lambda).value;
            if w != 0.0 {
                buf[k % n].re += w * signal.at(p + k as i64);
            }
        }
        self.transform(&mut buf);
        apply_shift_phase(&mut buf, delta);
        buf
    }

    /// Forward value plus analytic partials in position and length.
    pub fn spectra(&self, signal: &Signal, layout: &FrameLayout, i: usize) -> FrameSpectra {
        let n = self.support;
        let (p, delta) = split_position(layout.positions[i]);
        let lambda = layout.lengths[i];
        let zero = Complex64::new(0.0, 0.0);
        let mut value = vec![zero; n];
        let mut slope = vec![zero; n];
        let mut stretch = vec![zero; n];
        for k in 0..=n {
            let s = signal.at(p + k as i64);
            if s == 0.0 {
                continue;
            }
            let w = tap(layout.window, k as f64 - delta, n, lambda);
            value[k % n].re += w.value * s;
            slope[k % n].re += w.d_du * s;
            stretch[k % n].re += w.d_dlambda * s;
        }
        self.transform(&mut value);
        self.transform(&mut slope);
        self.transform(&mut stretch);

        // dS/dt = phase * sum_k (-w' + (2j pi f / N) w) s e^{-2j pi k f / N}
        let mut d_t = Vec::with_capacity(n);
        for f in 0..n {
            let omega = 2.0 * PI * f as f64 / n as f64;
            d_t.push(Complex64::new(0.0, omega) * value[f] - slope[f]);
        }
        apply_shift_phase(&mut value, delta);
        apply_shift_phase(&mut d_t, delta);
        apply_shift_phase(&mut stretch, delta);
        FrameSpectra {
            spectrum: value,
            d_t,
            d_lambda: stretch,
        }
    }
}

/// Window seen by the tap at offset `u`: the Gaussian is cut to `[0, N-1]`,
/// the Hann window is already zero outside its own support.
#[inline]
pub(crate) fn tap(kind: WindowKind, u: f64, n: usize, lambda: f64) -> WindowEval {
    match kind {
        WindowKind::Gaussian if u < 0.0 || u > (n - 1) as f64 => WindowEval::default(),
        _ => eval_unchecked(kind, u, n, lambda),
    }
}

/// Splits `t` into `(floor(t), t - floor(t))`.
#[inline]
pub(crate) fn split_position(t: f64) -> (i64, f64) {
    let p = t.floor();
    (p as i64, t - p)
}

fn apply_shift_phase(buf: &mut [Complex64], delta: f64) {
    if delta == 0.0 {
        return;
    }
    let n = buf.len() as f64;
    for (f, x) in buf.iter_mut().enumerate() {
        *x *= Complex64::from_polar(1.0, 2.0 * PI * delta * f as f64 / n);
    }
}

/// Twiddle table `exp(-2j pi m / N)` for `m` in `0..N`.
fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64))
        .collect()
}

/// Classical STFT by direct summation over `k = 0..N-1`, with integer
/// start indices and one window length shared by all frames. Samples past
/// either end of the signal read as zero.
pub fn classical_stft(
    signal: &Signal,
    starts: &[i64],
    support: usize,
    window: WindowKind,
    lambda: f64,
) -> Result<ComplexSpectrogram> {
    if starts.is_empty() {
        return Err(Error::Layout("no start indices given".into()));
    }
    check_params(support, lambda)?;
    let n = support;
    let taps: Vec<f64> = (0..n)
        .map(|k| eval_unchecked(window, k as f64, n, lambda).value)
        .collect();
    let tw = twiddles(n);
    let rows = map_frames(starts.len(), |i| {
        let slice: Vec<f64> = (0..n)
            .map(|k| taps[k] * signal.at(starts[i] + k as i64))
            .collect();
        (0..n)
            .map(|f| {
                slice
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| x * tw[(k * f) % n])
                    .sum::<Complex64>()
            })
            .collect()
    });
    ComplexSpectrogram::from_rows(rows)
}

/// Differentiable STFT with fractional frame positions and per-frame
/// window lengths.
pub fn dstft_forward(signal: &Signal, layout: &FrameLayout) -> Result<ComplexSpectrogram> {
    layout.validate(signal.len())?;
    let engine = Engine::new(layout.support);
    let rows = map_frames(layout.frames(), |i| engine.spectrum(signal, layout, i));
    ComplexSpectrogram::from_rows(rows)
}

/// Analytic gradient of a real scalar loss with respect to every frame
/// position and window length, given the loss cotangent on each spectrum
/// entry.
pub fn dstft_backward(
    signal: &Signal,
    layout: &FrameLayout,
    cotangent: &ComplexSpectrogram,
) -> Result<GradientSet> {
    layout.validate(signal.len())?;
    cotangent.check_shape(layout.frames(), layout.support)?;
    let engine = Engine::new(layout.support);
    let per_frame = map_frames(layout.frames(), |i| {
        let g = cotangent.row(i);
        if g.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
            return (0.0, 0.0);
        }
        let spectra = engine.spectra(signal, layout, i);
        (pair(g, &spectra.d_t), pair(g, &spectra.d_lambda))
    });
    let (d_t, d_lambda) = per_frame.into_iter().unzip();
    Ok(GradientSet { d_t, d_lambda })
}

/// `sum_f 2 Re(conj(g_f) * d_f)`
#[inline]
pub(crate) fn pair(g: &[Complex64], d: &[Complex64]) -> f64 {
    2.0 * g
        .iter()
        .zip(d)
        .map(|(g, d)| g.re * d.re + g.im * d.im)
        .sum::<f64>()
}
