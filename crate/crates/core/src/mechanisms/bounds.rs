use super::{FitResult, PolyFitResult};
use crate::error::{DpError, Result};
use crate::simplex::Record;

/// Declared data rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Bounds {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok(x_min, x_max) {
            return Err(DpError::invalid("x bounds", format!("need x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if !ok(y_min, y_max) {
            return Err(DpError::invalid("y bounds", format!("need y_min < y_max, got [{y_min}, {y_max}]")));
        }
        Ok(Bounds {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn unit() -> Self {
        Bounds {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn dx(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dy(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Affinely maps raw pairs into the unit square.
pub fn normalize(data: &[(f64, f64)], bounds: &Bounds) -> Result<Vec<Record>> {
    data.iter()
        .enumerate()
        .map(|(index, &(x, y))| {
            let inside = |v: f64, lo: f64, hi: f64| v >= lo && v <= hi;
            if !inside(x, bounds.x_min, bounds.x_max) {
                return Err(DpError::OutOfBounds {
                    index,
                    reason: format!("x = {x} outside [{}, {}]", bounds.x_min, bounds.x_max),
                });
            }
            if !inside(y, bounds.y_min, bounds.y_max) {
                return Err(DpError::OutOfBounds {
                    index,
                    reason: format!("y = {y} outside [{}, {}]", bounds.y_min, bounds.y_max),
                });
            }
            let xn = ((x - bounds.x_min) / bounds.dx()).clamp(0.0, 1.0);
            let yn = ((y - bounds.y_min) / bounds.dy()).clamp(0.0, 1.0);
            Record::new(xn, yn).map_err(|e| DpError::OutOfBounds {
                index,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Maps a line fitted on normalized data back to original coordinates.
///
/// The fallback flag is carried over; a fallback line becomes the horizontal
/// midline of the declared y range.
pub fn denormalize_fit(fit: FitResult, bounds: &Bounds) -> FitResult {
    let alpha = bounds.dy() / bounds.dx() * fit.alpha_hat;
    let beta = bounds.y_min + bounds.dy() * (fit.beta_hat - bounds.x_min / bounds.dx() * fit.alpha_hat);
    FitResult {
        alpha_hat: alpha,
        beta_hat: beta,
        fallback: fit.fallback,
    }
}

/// Polynomial analogue of [`denormalize_fit`]: expands
/// `y_min + Δy · q((x − x_min)/Δx)` into coefficients in x.
pub fn denormalize_poly(fit: &PolyFitResult, bounds: &Bounds) -> PolyFitResult {
    let d = fit.degree();
    // ascending[k] is the coefficient of t^k
    let ascending: Vec<f64> = fit.coeffs.iter().rev().copied().collect();
    let shift = -bounds.x_min;
    let mut out = vec![0.0; d + 1];
    for (k, &c) in ascending.iter().enumerate() {
        let scaled = bounds.dy() * c / bounds.dx().powi(k as i32);
        let mut binom = 1.0;
        for j in 0..=k {
            // C(k, j) · shift^(k − j)
            out[j] += scaled * binom * shift.powi((k - j) as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    out[0] += bounds.y_min;
    out.reverse();
    PolyFitResult {
        coeffs: out,
        fallback: fit.fallback,
    }
}
