//! Adaptation criteria: weighted spectral kurtosis (energy concentration)
//! and spectrogram coverage, their gradients in the layout parameters, and
//! the two-objective gradient combiner.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::layout::{true_hop_lengths, FrameLayout};
use crate::par::map_frames;
use crate::signal::Signal;
use crate::stft::{pair, ComplexSpectrogram, Engine, GradientSet};

/// Frames whose mean spectral power is below this are treated as silent.
pub const SILENT_POWER: f64 = 1e-30;

/// Below this distance the two gradients are considered identical.
pub const MIN_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub kurtosis: f64,
    pub coverage: f64,
    pub combined: f64,
}

/// How the kurtosis and coverage gradients are merged into one ascent
/// direction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Combiner {
    /// `alpha * grad_K + (1 - alpha) * grad_C`
    WeightedSum(f64),
    /// Minimum-norm point of the segment between the two gradients.
    #[default]
    MinNorm,
}

impl Combiner {
    pub const DEFAULT_ALPHA: f64 = 0.5;

    /// Weight of the kurtosis term in the reported scalar objective.
    pub fn alpha(&self) -> f64 {
        match *self {
            Combiner::WeightedSum(alpha) => alpha,
            Combiner::MinNorm => Self::DEFAULT_ALPHA,
        }
    }

    /// Scalar progress measure `alpha K + (1 - alpha) C`.
    pub fn scalar(&self, kurtosis: f64, coverage: f64) -> f64 {
        let a = self.alpha();
        a * kurtosis + (1.0 - a) * coverage
    }
}

impl fmt::Display for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Combiner::WeightedSum(a) => write!(f, "weighted:{a}"),
            Combiner::MinNorm => f.write_str("minnorm"),
        }
    }
}

impl FromStr for Combiner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "minnorm" || s == "min_norm" {
            return Ok(Combiner::MinNorm);
        }
        let rest = s.strip_prefix("weighted").ok_or_else(|| {
            Error::Domain(format!(
                "unknown combiner '{s}', expected weighted:<alpha> or minnorm"
            ))
        })?;
        let alpha = match rest.strip_prefix(':') {
            Some(a) => a
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("bad combiner weight '{a}'")))?,
            None if rest.is_empty() => Self::DEFAULT_ALPHA,
            None => return Err(Error::Domain(format!("unknown combiner '{s}'"))),
        };
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!(
                "combiner weight {alpha} outside [0, 1]"
            )));
        }
        Ok(Combiner::WeightedSum(alpha))
    }
}

/// Frame weights that discount frames crowded together: the first and last
/// frames get their single neighbour spacing, inner frames half the distance
/// between their neighbours. A lone frame gets weight 1.
pub fn frame_weights(layout: &FrameLayout) -> Vec<f64> {
    let t = &layout.positions;
    let n = t.len();
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                t[1] - t[0]
            } else if i == n - 1 {
                t[n - 1] - t[n - 2]
            } else {
                0.5 * (t[i + 1] - t[i - 1])
            }
        })
        .collect()
}

/// Kurtosis of one frame's magnitude spectrum,
/// `mean |S|^4 / (mean |S|^2)^2`, with silent frames pinned to 1.
pub fn frame_kurtosis(row: &[Complex64]) -> f64 {
    moments(row).map_or(1.0, |(p, q)| row.len() as f64 * q / (p * p))
}

/// `(sum |S|^2, sum |S|^4)`, or `None` for a silent frame.
fn moments(row: &[Complex64]) -> Option<(f64, f64)> {
    let (mut p, mut q) = (0.0, 0.0);
    for c in row {
        let m = c.norm_sqr();
        p += m;
        q += m * m;
    }
    if row.is_empty() || p / (row.len() as f64) < SILENT_POWER {
        None
    } else {
        Some((p, q))
    }
}

/// Cotangent of the frame kurtosis with respect to each bin:
/// `2F S_f (|S_f|^2 / P^2 - Q / P^3)`.
fn kurtosis_cotangent(row: &[Complex64]) -> Option<Vec<Complex64>> {
    let (p, q) = moments(row)?;
    let f = row.len() as f64;
    let (p2, p3) = (p * p, p * p * p);
    Some(
        row.iter()
            .map(|s| s * (2.0 * f * (s.norm_sqr() / p2 - q / p3)))
            .collect(),
    )
}

fn weighted_mean(weights: &[f64], values: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / total
}

/// Weighted mean of per-frame spectral kurtosis.
pub fn kurtosis_objective(spec: &ComplexSpectrogram, layout: &FrameLayout) -> Result<f64> {
    spec.check_shape(layout.frames(), spec.bins())?;
    let kurt: Vec<f64> = spec.rows().map(frame_kurtosis).collect();
    Ok(weighted_mean(&frame_weights(layout), &kurt))
}

/// Portion of frame `i`'s window extent lying inside `[0, M]`, with its
/// partials in `(t_i, lambda_i)`.
fn effective_length(layout: &FrameLayout, i: usize, m: f64) -> (f64, f64, f64) {
    let half = 0.5 * layout.lengths[i];
    let center = layout.center(i);
    let (lo, hi) = (center - half, center + half);
    let overlap = hi.min(m) - lo.max(0.0);
    if overlap <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let right_free = if hi < m { 1.0 } else { 0.0 };
    let left_free = if lo > 0.0 { 1.0 } else { 0.0 };
    (
        overlap,
        right_free - left_free,
        0.5 * (right_free + left_free),
    )
}

fn coverage_with_gradient(layout: &FrameLayout, signal_len: usize) -> (f64, GradientSet) {
    let n = layout.frames();
    let m = signal_len as f64;
    let true_hops = true_hop_lengths(layout);
    let mut grad = GradientSet::zeros(n);
    let mut total = 0.0;
    for i in 0..n {
        let (len, dl_dt, dl_dlambda) = effective_length(layout, i, m);
        // The next frame's true hop bounds the part this window covers alone.
        let next = (i + 1 < n).then(|| true_hops[i + 1]);
        match next {
            Some(h) if h < len => {
                total += h;
                grad.d_t[i + 1] += 1.0;
                grad.d_t[i] -= 1.0;
                grad.d_lambda[i + 1] += 0.5;
                grad.d_lambda[i] -= 0.5;
            }
            Some(h) if h == len => total += len,
            _ => {
                total += len;
                grad.d_t[i] += dl_dt;
                grad.d_lambda[i] += dl_dlambda;
            }
        }
    }
    let raw = total / m;
    if raw > 0.0 && raw < 1.0 {
        for g in grad.d_t.iter_mut().chain(grad.d_lambda.iter_mut()) {
            *g /= m;
        }
        (raw, grad)
    } else {
        (raw.clamp(0.0, 1.0), GradientSet::zeros(n))
    }
}

/// Fraction of the signal covered by the analysis windows, clamped to
/// `[0, 1]`. Only the part of each window that overlaps the signal counts.
pub fn coverage_objective(layout: &FrameLayout, signal_len: usize) -> f64 {
    coverage_with_gradient(layout, signal_len).0
}

/// Objective values and the gradient of each objective.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: ObjectiveValue,
    pub kurtosis_grad: GradientSet,
    pub coverage_grad: GradientSet,
}

/// Evaluates both objectives and their gradients in one pass over the
/// frames. The kurtosis gradient includes the dependence of the frame
/// weights on the positions.
pub fn evaluate(signal: &Signal, layout: &FrameLayout, combiner: Combiner) -> Result<Evaluation> {
    layout.validate(signal.len())?;
    let engine = Engine::new(layout.support);
    let frames = map_frames(layout.frames(), |i| {
        let spectra = engine.spectra(signal, layout, i);
        match kurtosis_cotangent(&spectra.spectrum) {
            Some(cot) => (
                frame_kurtosis(&spectra.spectrum),
                pair(&cot, &spectra.d_t),
                pair(&cot, &spectra.d_lambda),
            ),
            None => (1.0, 0.0, 0.0),
        }
    });

    let n = layout.frames();
    let weights = frame_weights(layout);
    let total: f64 = weights.iter().sum();
    let kurt: Vec<f64> = frames.iter().map(|f| f.0).collect();
    let k = weighted_mean(&weights, &kurt);

    let mut kg = GradientSet::zeros(n);
    for (i, &(_, dt, dl)) in frames.iter().enumerate() {
        kg.d_t[i] = weights[i] / total * dt;
        kg.d_lambda[i] = weights[i] / total * dl;
    }
    if n > 1 {
        for (j, kj) in kurt.iter().enumerate() {
            let c = (kj - k) / total;
            if j == 0 {
                kg.d_t[1] += c;
                kg.d_t[0] -= c;
            } else if j == n - 1 {
                kg.d_t[n - 1] += c;
                kg.d_t[n - 2] -= c;
            } else {
                kg.d_t[j + 1] += 0.5 * c;
                kg.d_t[j - 1] -= 0.5 * c;
            }
        }
    }

    let (c, cg) = coverage_with_gradient(layout, signal.len());
    Ok(Evaluation {
        value: ObjectiveValue {
            kurtosis: k,
            coverage: c,
            combined: combiner.scalar(k, c),
        },
        kurtosis_grad: kg,
        coverage_grad: cg,
    })
}

/// Gradients of the weighted kurtosis and of the coverage.
pub fn objective_gradients(
    signal: &Signal,
    layout: &FrameLayout,
) -> Result<(GradientSet, GradientSet)> {
    let eval = evaluate(signal, layout, Combiner::default())?;
    Ok((eval.kurtosis_grad, eval.coverage_grad))
}

/// Merges the two objective gradients into a single ascent direction.
pub fn combine_objectives(
    grad_k: &GradientSet,
    grad_c: &GradientSet,
    mode: Combiner,
) -> Result<GradientSet> {
    if grad_k.frames() != grad_c.frames() || grad_k.d_lambda.len() != grad_c.d_lambda.len() {
        return Err(Error::Shape {
            expected_frames: grad_k.frames(),
            expected_bins: 2,
            frames: grad_c.frames(),
            bins: 2,
        });
    }
    match mode {
        Combiner::WeightedSum(alpha) => Ok(grad_k.axpby(alpha, grad_c, 1.0 - alpha)),
        Combiner::MinNorm => {
            let diff = grad_k.axpby(1.0, grad_c, -1.0);
            let denom = diff.norm_sq();
            if denom.sqrt() < MIN_NORM_EPS {
                return Ok(grad_k.clone());
            }
            // <g2 - g1, g2> / |g1 - g2|^2
            let num: f64 = grad_c.flat().zip(diff.flat()).map(|(c, d)| -d * c).sum();
            let gamma = (num / denom).clamp(0.0, 1.0);
            Ok(grad_k.axpby(gamma, grad_c, 1.0 - gamma))
        }
    }
}
