//! Tapering functions with a continuous window length.
//!
//! Both windows are centered on the middle of the integer support, so a
//! window of length `lambda` occupies `[(N-1-lambda)/2, (N-1+lambda)/2]`.
//! Besides the value, every evaluation returns the exact partial
//! derivatives with respect to the time argument and the window length,
//! which the backward pass of the transform consumes directly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WindowKind {
    /// Raised cosine, exactly zero outside `|u - c| <= lambda/2`.
    #[default]
    Hann,
    /// Gaussian with standard deviation `lambda/6`, never exactly zero.
    Gaussian,
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowKind::Hann => f.write_str("hann"),
            WindowKind::Gaussian => f.write_str("gauss"),
        }
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" => Ok(WindowKind::Hann),
            "gauss" | "gaussian" => Ok(WindowKind::Gaussian),
            other => Err(Error::Domain(format!(
                "unknown window '{other}', expected 'hann' or 'gauss'"
            ))),
        }
    }
}

/// Window value and its two partial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowEval {
    pub value: f64,
    /// Partial derivative with respect to the time argument `u`.
    pub d_du: f64,
    /// Partial derivative with respect to the window length `lambda`.
    pub d_dlambda: f64,
}

/// Checks the `(support, lambda)` pair once so hot loops can call
/// [`eval_unchecked`] afterwards.
pub fn check_params(support: usize, lambda: f64) -> Result<()> {
    if support < 2 {
        return Err(Error::Domain(format!("support N = {support} must be >= 2")));
    }
    if !(lambda.is_finite() && lambda > 0.0 && lambda <= support as f64) {
        return Err(Error::Domain(format!(
            "window length {lambda} outside (0, {support}]"
        )));
    }
    Ok(())
}

/// Evaluates the centered window of length `lambda` inside a support of
/// `support` samples at the (possibly fractional) offset `u`.
pub fn eval_window(kind: WindowKind, u: f64, support: usize, lambda: f64) -> Result<WindowEval> {
    if !u.is_finite() {
        return Err(Error::Domain(format!("window argument {u} is not finite")));
    }
    check_params(support, lambda)?;
    Ok(eval_unchecked(kind, u, support, lambda))
}

#[inline]
pub(crate) fn eval_unchecked(kind: WindowKind, u: f64, support: usize, lambda: f64) -> WindowEval {
    let x = u - 0.5 * (support as f64 - 1.0);
    match kind {
        WindowKind::Hann => {
            // The boundary itself evaluates to zero for all three outputs.
            if x.abs() >= 0.5 * lambda {
                return WindowEval::default();
            }
            let phase = 2.0 * PI * x / lambda;
            let (sin, cos) = phase.sin_cos();
            WindowEval {
                value: 0.5 * (1.0 + cos),
                d_du: -PI / lambda * sin,
                d_dlambda: PI * x / (lambda * lambda) * sin,
            }
        }
        WindowKind::Gaussian => {
            // exp(-x^2 / (2 (lambda/6)^2)) = exp(-18 x^2 / lambda^2)
            let inv = 1.0 / lambda;
            let value = (-18.0 * x * x * inv * inv).exp();
            WindowEval {
                value,
                d_du: -36.0 * x * inv * inv * value,
                d_dlambda: 36.0 * x * x * inv * inv * inv * value,
            }
        }
    }
}
