//! Differentiable short-time Fourier transform.
//!
//! Frame positions and window lengths are continuous parameters. The
//! forward transform shifts each window by the fractional part of its
//! position and compensates the Fourier phase, which makes every spectrum
//! value differentiable in both parameters. On top of the transform sit two
//! adaptation criteria (weighted spectral kurtosis and coverage) and a
//! projected gradient-ascent loop that moves and resizes the frames.
//!
//! Per-frame work runs on the rayon pool when the `parallel` feature is on
//! (the default). Results are bit-identical for any thread count.

pub mod error;
pub mod gradcheck;
pub mod io;
pub mod layout;
pub mod objectives;
pub mod optimizer;
mod par;
pub mod signal;
pub mod stft;
pub mod window;

pub use error::{Error, Result};
pub use layout::{true_hop_lengths, FrameLayout};
pub use objectives::{
    combine_objectives, coverage_objective, evaluate, frame_weights, kurtosis_objective,
    objective_gradients, Combiner, ObjectiveValue,
};
pub use optimizer::{init_uniform, run, run_from, step, OptimizationTrace, OptimizerConfig};
pub use par::current_threads;
pub use signal::Signal;
pub use stft::{classical_stft, dstft_backward, dstft_forward, ComplexSpectrogram, GradientSet};
pub use window::{eval_window, WindowEval, WindowKind};
