//! End-to-end ε-DP regression fitters.
//!
//! All fitters take records already mapped into the unit square; use
//! [`normalize`] and [`denormalize_fit`] for data with general bounds.

mod bounds;
mod poly;
mod rss;
mod ss;
mod theil_sen;

pub use bounds::{denormalize_fit, denormalize_poly, normalize, Bounds};
pub use poly::{dp_rss_poly_fit, poly_refined_stats, PolyNoisyStats, PolyRefinedStats};
pub use rss::dp_rss_fit;
pub use ss::{dp_ss_fit, SsNoisyStats, SsSums};
pub use theil_sen::{dp_theil_sen_fit, pair_projections, random_matching, theil_sen_projections, TheilSenHyper};

use crate::error::{DpError, Result};

/// Total privacy budget ε of one mechanism run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_finite() && epsilon > 0.0 {
            Ok(PrivacyBudget { epsilon })
        } else {
            Err(DpError::invalid("epsilon", format!("must be positive and finite, got {epsilon}")))
        }
    }

    pub fn epsilon(self) -> f64 {
        self.epsilon
    }

    /// Equal share of the budget for one of `parts` sub-releases.
    pub fn share(self, parts: u32) -> f64 {
        self.epsilon / f64::from(parts)
    }
}

/// Slope and intercept of a private line fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    /// Set when the privatized statistics were degenerate.
    pub fallback: bool,
}

impl FitResult {
    pub const FALLBACK_ALPHA: f64 = 0.0;
    pub const FALLBACK_BETA: f64 = 0.5;

    pub fn fitted(alpha_hat: f64, beta_hat: f64) -> Self {
        FitResult {
            alpha_hat,
            beta_hat,
            fallback: false,
        }
    }

    /// The constant midline `y = 0.5`.
    pub fn fallback() -> Self {
        FitResult {
            alpha_hat: Self::FALLBACK_ALPHA,
            beta_hat: Self::FALLBACK_BETA,
            fallback: true,
        }
    }
}

/// Polynomial coefficients ordered from the highest degree down: `[a_d, …, a_0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFitResult {
    pub coeffs: Vec<f64>,
    pub fallback: bool,
}

impl PolyFitResult {
    pub fn fallback(degree: usize) -> Self {
        let mut coeffs = vec![0.0; degree + 1];
        coeffs[degree] = FitResult::FALLBACK_BETA;
        PolyFitResult {
            coeffs,
            fallback: true,
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Closed-form solve of the 2×2 normal equations
/// `[[s_x2, s_x], [s_x, n]] · (α, β) = (s_xy, s_y)`.
///
/// Returns `None` when `n ≤ 0` or the determinant is not positive.
pub(crate) fn solve_line(n: f64, s_x: f64, s_y: f64, s_x2: f64, s_xy: f64) -> Option<(f64, f64)> {
    if !(n > 0.0) {
        return None;
    }
    let det = s_x2 * n - s_x * s_x;
    if !(det > 0.0) {
        return None;
    }
    let alpha = (n * s_xy - s_x * s_y) / det;
    let beta = (s_x2 * s_y - s_x * s_xy) / det;
    Some((alpha, beta))
}
