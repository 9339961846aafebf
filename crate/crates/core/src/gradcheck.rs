//! Finite-difference validation of the analytic gradients.
//!
//! Each case draws a random signal and layout, then compares every analytic
//! partial against a central difference of the forward computation. Three
//! losses are checked: the power of one spectrum bin, the weighted kurtosis
//! and the coverage. Positions are kept at least 0.01 samples away from
//! integers. Coverage is piecewise linear; probes whose one-sided
//! differences disagree straddle a kink and are skipped.

use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layout::FrameLayout;
use crate::objectives::{coverage_objective, evaluate, kurtosis_objective, Combiner};
use crate::signal::Signal;
use crate::stft::{dstft_backward, dstft_forward, ComplexSpectrogram, GradientSet};
use crate::window::WindowKind;

/// Denominator floor of the relative error, so that two gradients that are
/// both essentially zero compare as equal.
pub const ABS_FLOOR: f64 = 1e-8;

/// A difference quotient of a loss of size `|L|` carries rounding noise of
/// about `eps |L| / h`. The denominator is floored at this many times that
/// noise, so an exact zero gradient is not failed by the noise alone.
pub const NOISE_MARGIN: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub cases: usize,
    pub step: f64,
    pub rtol: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seed: 0,
            cases: 100,
            step: 1e-4,
            rtol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    BinPower,
    Kurtosis,
    Coverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Position,
    Length,
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::BinPower => "bin-power",
            Loss::Kurtosis => "kurtosis",
            Loss::Coverage => "coverage",
        })
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Param::Position => "d_t",
            Param::Length => "d_lambda",
        })
    }
}

/// Worst error seen for one (loss, parameter) class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub loss: Loss,
    pub param: Param,
    pub checks: usize,
    pub worst: f64,
    pub worst_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub seed: u64,
    pub loss: Loss,
    pub param: Param,
    pub frame: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradcheckReport {
    pub classes: Vec<ClassSummary>,
    pub failures: Vec<Failure>,
    pub skipped_kinks: usize,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn worst(&self, loss: Loss, param: Param) -> f64 {
        self.classes
            .iter()
            .find(|c| c.loss == loss && c.param == param)
            .map_or(0.0, |c| c.worst)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Denominator floor for a loss of magnitude `loss` probed with step `h`.
pub fn noise_floor(loss: f64, h: f64) -> f64 {
    ABS_FLOOR.max(NOISE_MARGIN * f64::EPSILON * loss.abs() / h)
}

/// A random problem instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub signal: Signal,
    pub layout: FrameLayout,
    pub bin: (usize, usize),
}

/// Draws the instance for one case seed.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = [16usize, 32, 64][rng.random_range(0..3)];
    let frames = rng.random_range(2..=4usize);
    let len = rng.random_range(2 * support..=4 * support);
    let window = if rng.random_bool(0.5) {
        WindowKind::Hann
    } else {
        WindowKind::Gaussian
    };
    let samples = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let signal = Signal::new(samples, 1.0).expect("finite samples");

    // distinct integer anchors in [-N/2, M-2], then a fractional offset
    let lo = -(support as i64) / 2;
    let span = (len as i64 - 2 - lo + 1) as usize;
    let mut anchors: Vec<i64> = sample(&mut rng, span, frames)
        .into_iter()
        .map(|k| lo + k as i64)
        .collect();
    anchors.sort_unstable();
    let positions = anchors
        .iter()
        .map(|&a| a as f64 + rng.random_range(0.01..0.99))
        .collect();
    let n = support as f64;
    let lengths = (0..frames)
        .map(|_| rng.random_range((0.25 * n).max(2.0)..n - 0.01))
        .collect();
    let layout = FrameLayout::new(support, positions, lengths, window).expect("valid layout");
    let bin = (rng.random_range(0..frames), rng.random_range(0..support));
    Instance {
        signal,
        layout,
        bin,
    }
}

fn perturbed(layout: &FrameLayout, param: Param, frame: usize, delta: f64) -> FrameLayout {
    let mut l = layout.clone();
    match param {
        Param::Position => l.positions[frame] += delta,
        Param::Length => l.lengths[frame] += delta,
    }
    l
}

fn loss_value(inst: &Instance, layout: &FrameLayout, loss: Loss) -> Result<f64> {
    match loss {
        Loss::BinPower => {
            let (i, f) = inst.bin;
            Ok(dstft_forward(&inst.signal, layout)?.get(i, f).norm_sqr())
        }
        Loss::Kurtosis => kurtosis_objective(&dstft_forward(&inst.signal, layout)?, layout),
        Loss::Coverage => Ok(coverage_objective(layout, inst.signal.len())),
    }
}

fn analytic(inst: &Instance, loss: Loss) -> Result<GradientSet> {
    match loss {
        Loss::BinPower => {
            let spec = dstft_forward(&inst.signal, &inst.layout)?;
            let (i, f) = inst.bin;
            let mut cot = ComplexSpectrogram::zeros(spec.frames(), spec.bins());
            cot.set(i, f, spec.get(i, f));
            dstft_backward(&inst.signal, &inst.layout, &cot)
        }
        Loss::Kurtosis => {
            Ok(evaluate(&inst.signal, &inst.layout, Combiner::default())?.kurtosis_grad)
        }
        Loss::Coverage => {
            Ok(evaluate(&inst.signal, &inst.layout, Combiner::default())?.coverage_grad)
        }
    }
}

/// Runs the finite-difference suite.
pub fn run_gradcheck(config: &GradcheckConfig) -> Result<GradcheckReport> {
    const LOSSES: [Loss; 3] = [Loss::BinPower, Loss::Kurtosis, Loss::Coverage];
    const PARAMS: [Param; 2] = [Param::Position, Param::Length];
    let mut report = GradcheckReport {
        classes: LOSSES
            .iter()
            .flat_map(|&loss| {
                PARAMS.iter().map(move |&param| ClassSummary {
                    loss,
                    param,
                    checks: 0,
                    worst: 0.0,
                    worst_seed: None,
                })
            })
            .collect(),
        ..Default::default()
    };
    let h = config.step;
    for case in 0..config.cases {
        let seed = config.seed.wrapping_add(case as u64);
        let inst = random_instance(seed);
        for (li, &loss) in LOSSES.iter().enumerate() {
            let grad = analytic(&inst, loss)?;
            let mid = loss_value(&inst, &inst.layout, loss)?;
            for (pi, &param) in PARAMS.iter().enumerate() {
                for frame in 0..inst.layout.frames() {
                    let up = loss_value(&inst, &perturbed(&inst.layout, param, frame, h), loss)?;
                    let dn = loss_value(&inst, &perturbed(&inst.layout, param, frame, -h), loss)?;
                    let floor = noise_floor(mid, h);
                    if loss == Loss::Coverage {
                        let (fwd, bwd) = ((up - mid) / h, (mid - dn) / h);
                        if relative_error(fwd, bwd, floor) > 1e-6 {
                            report.skipped_kinks += 1;
                            continue;
                        }
                    }
                    let numeric = (up - dn) / (2.0 * h);
                    let a = match param {
                        Param::Position => grad.d_t[frame],
                        Param::Length => grad.d_lambda[frame],
                    };
                    let err = relative_error(a, numeric, floor);
                    let class = &mut report.classes[li * PARAMS.len() + pi];
                    class.checks += 1;
                    if err > class.worst || class.worst_seed.is_none() {
                        class.worst = class.worst.max(err);
                        class.worst_seed = Some(seed);
                    }
                    if err.is_nan() || err >= config.rtol {
                        report.failures.push(Failure {
                            seed,
                            loss,
                            param,
                            frame,
                            analytic: a,
                            numeric,
                            rel_err: err,
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}
