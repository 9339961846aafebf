//! Test-side oracles, written from the definitions and sharing no code with
//! the library's transform.
#![allow(dead_code)]

use std::f64::consts::PI;

use dstft::{FrameLayout, Signal, WindowKind};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn noise_signal(rng: &mut ChaCha8Rng, len: usize) -> Signal {
    Signal::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 1.0).unwrap()
}

/// Centered window value, Gaussian cut to the support `[0, N-1]`.
pub fn window(kind: WindowKind, u: f64, n: usize, lambda: f64) -> f64 {
    let x = u - (n as f64 - 1.0) / 2.0;
    match kind {
        WindowKind::Hann if x.abs() < lambda / 2.0 => 0.5 + 0.5 * (2.0 * PI * x / lambda).cos(),
        WindowKind::Hann => 0.0,
        WindowKind::Gaussian if (0.0..=(n - 1) as f64).contains(&u) => {
            let sigma = lambda / 6.0;
            (-x * x / (2.0 * sigma * sigma)).exp()
        }
        WindowKind::Gaussian => 0.0,
    }
}

/// Direct summation of the fractional-shift transform, one frame.
pub fn naive_frame(signal: &Signal, layout: &FrameLayout, i: usize) -> Vec<Complex64> {
    let n = layout.support;
    let t = layout.positions[i];
    let p = t.floor();
    let delta = t - p;
    (0..n)
        .map(|f| {
            (0..=n)
                .map(|k| {
                    let u = k as f64 - delta;
                    let w = window(layout.window, u, n, layout.lengths[i]);
                    let s = signal.at(p as i64 + k as i64);
                    Complex64::from_polar(w * s, -2.0 * PI * u * f as f64 / n as f64)
                })
                .sum()
        })
        .collect()
}

pub fn naive_dstft(signal: &Signal, layout: &FrameLayout) -> Vec<Vec<Complex64>> {
    (0..layout.frames())
        .map(|i| naive_frame(signal, layout, i))
        .collect()
}

pub fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn l2(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}
