use super::{FitResult, PrivacyBudget};
use crate::error::{DpError, Result};
use crate::noise::{dp_median, LaplaceScale, NoiseSource, Release};
use crate::simplex::Record;

/// Matching rounds and the clipping range handed to the private median.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheilSenHyper {
    k: usize,
    r_lo: f64,
    r_hi: f64,
}

impl TheilSenHyper {
    pub fn new(k: usize, r_lo: f64, r_hi: f64) -> Result<Self> {
        if k == 0 {
            return Err(DpError::invalid("k", "need at least one matching round"));
        }
        if !(r_lo.is_finite() && r_hi.is_finite() && r_lo < r_hi) {
            return Err(DpError::invalid("r_lo/r_hi", format!("need r_lo < r_hi, got [{r_lo}, {r_hi}]")));
        }
        Ok(TheilSenHyper { k, r_lo, r_hi })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r_lo(&self) -> f64 {
        self.r_lo
    }

    pub fn r_hi(&self) -> f64 {
        self.r_hi
    }
}

impl Default for TheilSenHyper {
    fn default() -> Self {
        TheilSenHyper {
            k: 1,
            r_lo: -2.0,
            r_hi: 2.0,
        }
    }
}

/// Uniform random perfect matching of `0..n`. For odd `n` the index left
/// over after the shuffle is dropped.
pub fn random_matching<N: NoiseSource + ?Sized>(n: usize, noise: &mut N) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = noise.index_below(i + 1);
        idx.swap(i, j);
    }
    idx.chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

/// Values of the line through `a` and `b` at x = 0.25 and x = 0.75, or
/// `None` when the two share an x coordinate.
pub fn pair_projections(a: Record, b: Record) -> Option<(f64, f64)> {
    if a.x() == b.x() {
        return None;
    }
    let slope = (b.y() - a.y()) / (b.x() - a.x());
    let mid_x = (a.x() + b.x()) / 2.0;
    let mid_y = (a.y() + b.y()) / 2.0;
    Some((slope * (0.25 - mid_x) + mid_y, slope * (0.75 - mid_x) + mid_y))
}

/// Projections at x = 0.25 and x = 0.75 over `k` random matchings,
/// accumulated across rounds.
pub fn theil_sen_projections<N: NoiseSource + ?Sized>(
    data: &[Record],
    k: usize,
    noise: &mut N,
) -> (Vec<f64>, Vec<f64>) {
    let mut z25 = Vec::with_capacity(k * data.len() / 2);
    let mut z75 = Vec::with_capacity(k * data.len() / 2);
    for _ in 0..k {
        for (i, j) in random_matching(data.len(), noise) {
            if let Some((p25, p75)) = pair_projections(data[i], data[j]) {
                z25.push(p25);
                z75.push(p75);
            }
        }
    }
    (z25, z75)
}

/// DP-Theil-Sen with random matchings, budget split ε/3 three ways: a noisy
/// size and the private medians of the two projection lists.
pub fn dp_theil_sen_fit<N: NoiseSource + ?Sized>(
    data: &[Record],
    budget: PrivacyBudget,
    hyper: TheilSenHyper,
    noise: &mut N,
) -> FitResult {
    if data.len() < 2 {
        return FitResult::fallback();
    }
    let third = budget.share(3);

    // The noisy size only fills the median's hyperparameter slot; the
    // rank utility does not depend on it.
    let scale = LaplaceScale::calibrated(1.0, third).expect("budget already validated");
    let _n_tilde = data.len() as f64 + noise.laplace(scale);
    noise.charge(Release {
        label: "size",
        epsilon: third,
    });

    let (z25, z75) = theil_sen_projections(data, hyper.k, noise);

    // One record lands in at most k pairs, so the rank utility moves by up
    // to k and each median runs at ε/(3k).
    let median_eps = third / hyper.k as f64;
    let p25 = dp_median(&z25, median_eps, hyper.r_lo, hyper.r_hi, noise).expect("validated median parameters");
    noise.charge(Release {
        label: "median_p25",
        epsilon: third,
    });
    let p75 = dp_median(&z75, median_eps, hyper.r_lo, hyper.r_hi, noise).expect("validated median parameters");
    noise.charge(Release {
        label: "median_p75",
        epsilon: third,
    });

    if p25.degenerate || p75.degenerate {
        return FitResult::fallback();
    }
    let alpha = (p75.value - p25.value) / 0.5;
    let beta = p25.value - alpha * 0.25;
    FitResult::fitted(alpha, beta)
}
