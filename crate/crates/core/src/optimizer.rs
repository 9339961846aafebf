//! Projected gradient ascent over frame positions and window lengths.
//!
//! The loop starts from a classical (uniform, full-length) layout and
//! repeatedly moves every frame along the combined ascent direction of the
//! kurtosis and coverage objectives. After each update the lengths are
//! clipped to `[lambda_min, N]` and the positions are projected back to a
//! strictly increasing sequence inside `[-N/2, M)`.

use crate::error::{Error, Result};
use crate::layout::FrameLayout;
use crate::objectives::{combine_objectives, evaluate, Combiner, Evaluation, ObjectiveValue};
use crate::signal::Signal;
use crate::stft::GradientSet;
use crate::window::WindowKind;

/// Smallest gap kept between consecutive frame positions, in samples.
pub const MIN_HOP: f64 = 1e-3;

/// Number of consecutive small relative changes that count as convergence.
pub const CONVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub support: usize,
    pub window: WindowKind,
    /// Step size for positions, in samples per unit gradient.
    pub lr_position: f64,
    /// Step size for window lengths, in samples per unit gradient.
    pub lr_length: f64,
    pub max_iters: usize,
    /// Relative change of the combined objective regarded as stalled.
    pub tolerance: f64,
    pub combiner: Combiner,
    /// One shared hop and one shared length instead of per-frame values.
    pub share_parameters: bool,
    /// Rescale each objective gradient to unit norm before combining.
    pub normalize_gradients: bool,
    pub lambda_min: f64,
}

impl OptimizerConfig {
    pub fn new(support: usize) -> Self {
        OptimizerConfig {
            support,
            window: WindowKind::Hann,
            lr_position: 0.1,
            lr_length: 0.1,
            max_iters: 500,
            tolerance: 1e-9,
            combiner: Combiner::default(),
            share_parameters: false,
            normalize_gradients: true,
            lambda_min: 2.0,
        }
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        if self.support < 2 {
            return bad(format!("support {} must be >= 2", self.support));
        }
        if !(self.lr_position >= 0.0 && self.lr_position.is_finite()) {
            return bad(format!(
                "position learning rate {} must be >= 0",
                self.lr_position
            ));
        }
        if !(self.lr_length >= 0.0 && self.lr_length.is_finite()) {
            return bad(format!(
                "length learning rate {} must be >= 0",
                self.lr_length
            ));
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance {} must be positive", self.tolerance));
        }
        if !(self.lambda_min >= 2.0 && self.lambda_min <= self.support as f64) {
            return bad(format!(
                "lambda_min {} outside [2, {}]",
                self.lambda_min, self.support
            ));
        }
        if let Combiner::WeightedSum(a) = self.combiner {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("combiner weight {a} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// One iteration of the trace: the layout at that iteration, the objectives
/// evaluated on it, and the size of the ascent direction computed there.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub layout: FrameLayout,
    pub value: ObjectiveValue,
    pub grad_inf_t: f64,
    pub grad_inf_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
}

impl OptimizationTrace {
    pub fn first(&self) -> Option<&TraceRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Places `frames` full-length windows with centers at `(i + 1/2) M / T`,
/// which tiles `[0, M]` exactly when `T * N = M`.
pub fn init_uniform(
    signal_len: usize,
    frames: usize,
    support: usize,
    window: WindowKind,
) -> Result<FrameLayout> {
    if frames == 0 {
        return Err(Error::Domain("at least one frame is required".into()));
    }
    if frames > signal_len {
        return Err(Error::Domain(format!(
            "{frames} frames exceed the {signal_len} signal samples"
        )));
    }
    if support > signal_len {
        return Err(Error::Domain(format!(
            "support {support} exceeds the {signal_len} signal samples"
        )));
    }
    let m = signal_len as f64;
    let offset = 0.5 * (support as f64 - 1.0);
    let positions = (0..frames)
        .map(|i| (i as f64 + 0.5) * m / frames as f64 - offset)
        .collect();
    FrameLayout::new(support, positions, vec![support as f64; frames], window)
}

fn check_finite(grad: &GradientSet, iteration: usize) -> Result<()> {
    match grad
        .d_t
        .iter()
        .zip(&grad.d_lambda)
        .position(|(a, b)| !a.is_finite() || !b.is_finite())
    {
        Some(frame) => Err(Error::NonFiniteGradient { iteration, frame }),
        None => Ok(()),
    }
}

fn normalized(g: &GradientSet) -> GradientSet {
    let norm = g.norm_sq().sqrt();
    if norm > 0.0 {
        g.axpby(1.0 / norm, g, 0.0)
    } else {
        g.clone()
    }
}

/// Combined ascent direction at an evaluated layout.
fn ascent_direction(eval: &Evaluation, config: &OptimizerConfig) -> Result<GradientSet> {
    let (gk, gc) = (&eval.kurtosis_grad, &eval.coverage_grad);
    if !config.normalize_gradients {
        return combine_objectives(gk, gc, config.combiner);
    }
    let Combiner::MinNorm = config.combiner else {
        return combine_objectives(&normalized(gk), &normalized(gc), config.combiner);
    };
    // A zero gradient marks a saturated objective (coverage at its clamp,
    // silent signal); follow the other objective alone.
    let (zk, zc) = (gk.norm_sq() == 0.0, gc.norm_sq() == 0.0);
    match (zk, zc) {
        (true, true) => Ok(gk.clone()),
        (false, true) => Ok(normalized(gk)),
        (true, false) => Ok(normalized(gc)),
        (false, false) => combine_objectives(&normalized(gk), &normalized(gc), config.combiner),
    }
}

fn project_lengths(lengths: &mut [f64], config: &OptimizerConfig) {
    let hi = config.support as f64;
    for l in lengths {
        *l = l.clamp(config.lambda_min, hi);
    }
}

/// Sorts frames by position and enforces `t` strictly increasing (gap at
/// least [`MIN_HOP`]) inside `[-N/2, M)`.
fn project_positions(layout: &mut FrameLayout, signal_len: usize) {
    let lo = -0.5 * layout.support as f64;
    let hi = signal_len as f64 - MIN_HOP;
    if layout.positions.windows(2).any(|w| w[1] < w[0]) {
        let mut frames: Vec<(f64, f64)> = layout
            .positions
            .iter()
            .copied()
            .zip(layout.lengths.iter().copied())
            .collect();
        frames.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, (t, l)) in frames.into_iter().enumerate() {
            layout.positions[i] = t;
            layout.lengths[i] = l;
        }
    }
    let t = &mut layout.positions;
    for x in t.iter_mut() {
        *x = x.clamp(lo, hi);
    }
    for i in 1..t.len() {
        t[i] = t[i].max(t[i - 1] + MIN_HOP);
    }
    let last = t.len() - 1;
    t[last] = t[last].min(hi);
    for i in (0..last).rev() {
        t[i] = t[i].min(t[i + 1] - MIN_HOP);
    }
}

fn apply_per_frame(
    layout: &FrameLayout,
    dir: &GradientSet,
    config: &OptimizerConfig,
    signal_len: usize,
) -> FrameLayout {
    let mut next = layout.clone();
    for (t, g) in next.positions.iter_mut().zip(&dir.d_t) {
        *t += config.lr_position * g;
    }
    for (l, g) in next.lengths.iter_mut().zip(&dir.d_lambda) {
        *l += config.lr_length * g;
    }
    project_lengths(&mut next.lengths, config);
    project_positions(&mut next, signal_len);
    next
}

/// Shared-parameter update: positions stay `t_0 + i H` and all lengths stay
/// equal. The start moves with the mean position gradient, the hop with the
/// mean gradient over the individual hops, the length with the mean length
/// gradient.
fn apply_shared(
    layout: &FrameLayout,
    dir: &GradientSet,
    config: &OptimizerConfig,
    signal_len: usize,
) -> FrameLayout {
    let n = layout.frames();
    let t0 = layout.positions[0];
    let hop = if n > 1 {
        (layout.positions[n - 1] - t0) / (n - 1) as f64
    } else {
        0.0
    };
    let g_start = dir.d_t.iter().sum::<f64>() / n as f64;
    let g_hop = if n > 1 {
        dir.d_t
            .iter()
            .enumerate()
            .map(|(i, g)| i as f64 * g)
            .sum::<f64>()
            / (n - 1) as f64
    } else {
        0.0
    };
    let g_len = dir.d_lambda.iter().sum::<f64>() / n as f64;

    let mut len = [layout.lengths[0] + config.lr_length * g_len];
    project_lengths(&mut len, config);

    let lo = -0.5 * layout.support as f64;
    let hi = signal_len as f64 - MIN_HOP;
    let mut start = t0 + config.lr_position * g_start;
    let mut hop = hop + config.lr_position * g_hop;
    if n > 1 {
        let span = (n - 1) as f64;
        start = start.clamp(lo, hi - span * MIN_HOP);
        // rounding can put the room left just under MIN_HOP
        hop = hop.clamp(MIN_HOP, ((hi - start) / span).max(MIN_HOP));
    } else {
        start = start.clamp(lo, hi);
    }
    FrameLayout {
        support: layout.support,
        positions: (0..n).map(|i| start + i as f64 * hop).collect(),
        lengths: vec![len[0]; n],
        window: layout.window,
    }
}

fn advance(
    signal: &Signal,
    layout: &FrameLayout,
    config: &OptimizerConfig,
    iteration: usize,
) -> Result<(Evaluation, GradientSet)> {
    let eval = evaluate(signal, layout, config.combiner)?;
    check_finite(&eval.kurtosis_grad, iteration)?;
    check_finite(&eval.coverage_grad, iteration)?;
    let dir = ascent_direction(&eval, config)?;
    check_finite(&dir, iteration)?;
    Ok((eval, dir))
}

fn update(
    layout: &FrameLayout,
    dir: &GradientSet,
    config: &OptimizerConfig,
    signal_len: usize,
) -> FrameLayout {
    if config.share_parameters {
        apply_shared(layout, dir, config, signal_len)
    } else {
        apply_per_frame(layout, dir, config, signal_len)
    }
}

/// One ascent step. Returns the updated layout and the objectives evaluated
/// at the input layout.
pub fn step(
    signal: &Signal,
    layout: &FrameLayout,
    config: &OptimizerConfig,
) -> Result<(FrameLayout, ObjectiveValue)> {
    config.validate()?;
    let (eval, dir) = advance(signal, layout, config, 0)?;
    Ok((update(layout, &dir, config, signal.len()), eval.value))
}

/// Runs the ascent from the uniform initialization with `frames` frames.
pub fn run(
    signal: &Signal,
    config: &OptimizerConfig,
    frames: usize,
) -> Result<(FrameLayout, OptimizationTrace)> {
    config.validate()?;
    let init = init_uniform(signal.len(), frames, config.support, config.window)?;
    run_from(signal, init, config)
}

/// Runs the ascent from a given layout until `max_iters` steps have been
/// taken or the combined objective has changed by less than `tolerance`
/// (relative) for [`CONVERGENCE_WINDOW`] consecutive iterations.
pub fn run_from(
    signal: &Signal,
    init: FrameLayout,
    config: &OptimizerConfig,
) -> Result<(FrameLayout, OptimizationTrace)> {
    config.validate()?;
    init.validate(signal.len())?;
    let mut trace = OptimizationTrace::default();
    let mut layout = init;
    let mut streak = 0;
    for iteration in 0..=config.max_iters {
        let (eval, dir) = advance(signal, &layout, config, iteration)?;
        if let Some(prev) = trace.last() {
            let (a, b) = (prev.value.combined, eval.value.combined);
            let rel = (b - a).abs() / a.abs().max(f64::MIN_POSITIVE);
            streak = if rel < config.tolerance {
                streak + 1
            } else {
                0
            };
        }
        trace.records.push(TraceRecord {
            iteration,
            layout: layout.clone(),
            value: eval.value,
            grad_inf_t: dir.inf_norm_t(),
            grad_inf_lambda: dir.inf_norm_lambda(),
        });
        if streak >= CONVERGENCE_WINDOW {
            trace.converged = true;
            break;
        }
        if iteration == config.max_iters {
            break;
        }
        layout = update(&layout, &dir, config, signal.len());
    }
    Ok((layout, trace))
}
