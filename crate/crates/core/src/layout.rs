//! Frame placement: continuous positions and window lengths.
//!
//! Frame `i` reads samples starting at `floor(t_i)` and its window of length
//! `lambda_i` is centered at `t_i + (N-1)/2` in signal coordinates. Hop
//! lengths are differences of consecutive positions, with the first hop
//! measured from the origin (`H_1 = t_1`).

use crate::error::{Error, Result};
use crate::window::{check_params, WindowKind};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLayout {
    pub support: usize,
    pub positions: Vec<f64>,
    pub lengths: Vec<f64>,
    pub window: WindowKind,
}

impl FrameLayout {
    pub fn new(
        support: usize,
        positions: Vec<f64>,
        lengths: Vec<f64>,
        window: WindowKind,
    ) -> Result<Self> {
        let layout = FrameLayout {
            support,
            positions,
            lengths,
            window,
        };
        layout.check_shape()?;
        Ok(layout)
    }

    /// Integer positions spaced `hop` apart with every length equal to the
    /// support; this is the classical transform.
    pub fn uniform(
        support: usize,
        first: i64,
        hop: usize,
        frames: usize,
        window: WindowKind,
    ) -> Result<Self> {
        if hop == 0 {
            return Err(Error::Layout("hop must be positive".into()));
        }
        let positions = (0..frames)
            .map(|i| (first + (i * hop) as i64) as f64)
            .collect();
        FrameLayout::new(support, positions, vec![support as f64; frames], window)
    }

    pub fn frames(&self) -> usize {
        self.positions.len()
    }

    /// Signal-coordinate center of frame `i`'s window.
    pub fn center(&self, i: usize) -> f64 {
        self.positions[i] + 0.5 * (self.support as f64 - 1.0)
    }

    /// Hop lengths `H_i = t_i - t_{i-1}` with `H_1 = t_1`.
    pub fn hops(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.positions
            .iter()
            .map(|&t| {
                let h = t - prev;
                prev = t;
                h
            })
            .collect()
    }

    /// Invariants that do not depend on the signal.
    fn check_shape(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::Layout("at least one frame is required".into()));
        }
        if self.positions.len() != self.lengths.len() {
            return Err(Error::Layout(format!(
                "{} positions but {} lengths",
                self.positions.len(),
                self.lengths.len()
            )));
        }
        for (i, &lambda) in self.lengths.iter().enumerate() {
            check_params(self.support, lambda)
                .map_err(|e| Error::Layout(format!("frame {i}: {e}")))?;
        }
        if let Some(i) = self.positions.iter().position(|t| !t.is_finite()) {
            return Err(Error::Layout(format!("frame {i}: position is not finite")));
        }
        if let Some(i) = self.positions.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Layout(format!(
                "positions must be strictly increasing (frames {i} and {})",
                i + 1
            )));
        }
        Ok(())
    }

    /// Full invariant check against a signal of `signal_len` samples: every
    /// position must lie in `[-N, M)` so each frame overlaps the signal.
    pub fn validate(&self, signal_len: usize) -> Result<()> {
        self.check_shape()?;
        let lo = -(self.support as f64);
        let hi = signal_len as f64;
        if let Some(i) = self.positions.iter().position(|&t| t < lo || t >= hi) {
            return Err(Error::Layout(format!(
                "frame {i}: position {} outside [{lo}, {hi})",
                self.positions[i]
            )));
        }
        Ok(())
    }
}

/// "True" hop lengths accounting for differing window lengths:
/// `H~_1 = H_1 + (N - lambda_1)/2` and
/// `H~_i = H_i + (lambda_i - lambda_{i-1})/2` for later frames.
pub fn true_hop_lengths(layout: &FrameLayout) -> Vec<f64> {
    let n = layout.support as f64;
    layout
        .hops()
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            if i == 0 {
                h + 0.5 * (n - layout.lengths[0])
            } else {
                h + 0.5 * (layout.lengths[i] - layout.lengths[i - 1])
            }
        })
        .collect()
}
