//! Degree-d generalization of DP-RSS.
//!
//! Group 1 has `2d + 1` components `[x^{2d}, x^{2d−1} − x^{2d}, …, 1 − x]`
//! and Group 2 has `d + 2` components `[x^d y, (x^{d−1} − x^d) y, …, 1 − y]`.
//! Every statistic gets a direct estimate (telescoping partial sum of its own
//! group) and an indirect one (the other group's size estimate minus the
//! complementary partial sum). Under the equal split all Laplace terms share
//! one variance, so each estimate's variance is proportional to its term
//! count and the inverse-variance weights follow from those counts.

use super::{solve_line, PolyFitResult, PrivacyBudget};
use crate::error::Result;
use crate::noise::{LaplaceScale, NoiseSource, Release};
use crate::simplex::{check_degree, optimal_weights, poly_x_unchecked, poly_xy_unchecked, CompensatedSum, Record};

#[derive(Debug, Clone, PartialEq)]
pub struct PolyNoisyStats {
    pub degree: usize,
    /// `[S̃_{x^{2d}}, S̃_{x^{2d−1}−x^{2d}}, …, S̃_{1−x}]`.
    pub g1: Vec<f64>,
    /// `[S̃_{x^d y}, S̃_{(x^{d−1}−x^d)y}, …, S̃_{(1−x)y}, S̃_{1−y}]`.
    pub g2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyRefinedStats {
    pub n_hat: f64,
    /// `Ŝ_{x^l}` for `l = 0..=2d`, with `Ŝ_{x^0} = n̂`.
    pub s_x_pow: Vec<f64>,
    /// `Ŝ_{x^l y}` for `l = 0..=d`.
    pub s_x_pow_y: Vec<f64>,
}

impl PolyNoisyStats {
    fn n_x(&self) -> f64 {
        self.g1.iter().sum()
    }

    fn n_y(&self) -> f64 {
        self.g2.iter().sum()
    }

    /// `S̃_{x^{j−1} − x^j}` for `j = 1..=2d`.
    fn diff_x(&self, j: usize) -> f64 {
        self.g1[2 * self.degree - j + 1]
    }

    /// `S̃_{(x^{j−1} − x^j) y}` for `j = 1..=d`.
    fn diff_xy(&self, j: usize) -> f64 {
        self.g2[self.degree - j + 1]
    }

    fn one_minus_y(&self) -> f64 {
        self.g2[self.degree + 1]
    }
}

fn exact_poly_groups(data: &[Record], degree: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![CompensatedSum::default(); 2 * degree + 1];
    let mut b = vec![CompensatedSum::default(); degree + 2];
    for r in data {
        for (acc, v) in a.iter_mut().zip(poly_x_unchecked(r.x(), degree)) {
            acc.add(v);
        }
        for (acc, v) in b.iter_mut().zip(poly_xy_unchecked(r.x(), r.y(), degree)) {
            acc.add(v);
        }
    }
    (
        a.iter().map(CompensatedSum::value).collect(),
        b.iter().map(CompensatedSum::value).collect(),
    )
}

fn weighted(direct: f64, m_direct: usize, indirect: f64, m_indirect: usize) -> f64 {
    let (w1, w2) = optimal_weights(m_direct as f64, m_indirect as f64).expect("positive term counts");
    w1 * direct + w2 * indirect
}

/// Refined sufficient statistics from a noisy equal-split release.
pub fn poly_refined_stats(noisy: &PolyNoisyStats) -> PolyRefinedStats {
    let d = noisy.degree;
    let n_x = noisy.n_x();
    let n_y = noisy.n_y();
    let n_hat = weighted(n_x, 2 * d + 1, n_y, d + 2);

    let mut s_x_pow = vec![n_hat; 2 * d + 1];
    for (l, slot) in s_x_pow.iter_mut().enumerate().skip(1) {
        let direct = ((l + 1)..=2 * d).fold(noisy.g1[0], |acc, j| acc + noisy.diff_x(j));
        let indirect = (1..=l).fold(n_y, |acc, j| acc - noisy.diff_x(j));
        *slot = weighted(direct, 1 + 2 * d - l, indirect, d + 2 + l);
    }

    let mut s_x_pow_y = vec![0.0; d + 1];
    for (l, slot) in s_x_pow_y.iter_mut().enumerate() {
        let direct = ((l + 1)..=d).fold(noisy.g2[0], |acc, j| acc + noisy.diff_xy(j));
        let indirect = (1..=l).fold(n_x, |acc, j| acc - noisy.diff_xy(j)) - noisy.one_minus_y();
        *slot = weighted(direct, 1 + d - l, indirect, 2 * d + 2 + l);
    }

    PolyRefinedStats {
        n_hat,
        s_x_pow,
        s_x_pow_y,
    }
}

const PIVOT_TOLERANCE: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e12;

/// LU factorization with partial pivoting, row-major, in place.
struct Lu {
    a: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(mut a: Vec<Vec<f64>>) -> Option<Lu> {
        let n = a.len();
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .expect("non-empty range");
            if a[pivot_row][col].abs() < PIVOT_TOLERANCE * scale {
                return None;
            }
            a.swap(col, pivot_row);
            perm.swap(col, pivot_row);
            for row in (col + 1)..n {
                let factor = a[row][col] / a[col][col];
                a[row][col] = factor;
                for k in (col + 1)..n {
                    a[row][k] -= factor * a[col][k];
                }
            }
        }
        Some(Lu { a, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.a.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.a[i][k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.a[i][k] * x[k];
            }
            x[i] /= self.a[i][i];
        }
        x
    }
}

fn norm_1(a: &[Vec<f64>]) -> f64 {
    (0..a.len())
        .map(|c| a.iter().map(|row| row[c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `a · x = b`, or `None` if `a` is numerically singular.
pub(crate) fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let lu = Lu::factor(a.to_vec())?;
    // Exact 1-norm condition number via the explicit inverse; n is tiny.
    let inv_cols: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            lu.solve(&e)
        })
        .collect();
    let inv_norm = inv_cols
        .iter()
        .map(|col| col.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let cond = norm_1(a) * inv_norm;
    if !(cond.is_finite() && cond <= MAX_CONDITION) {
        return None;
    }
    let x = lu.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// DP-RSS polynomial fit of degree `d`, budget split ε/2 per group.
pub fn dp_rss_poly_fit<N: NoiseSource + ?Sized>(
    data: &[Record],
    degree: usize,
    budget: PrivacyBudget,
    noise: &mut N,
) -> Result<PolyFitResult> {
    check_degree(degree)?;
    let half = budget.share(2);
    let scale = LaplaceScale::calibrated(1.0, half)?;

    let (mut g1, mut g2) = exact_poly_groups(data, degree);
    for v in &mut g1 {
        *v += noise.laplace(scale);
    }
    noise.charge(Release {
        label: "poly_group1",
        epsilon: half,
    });
    for v in &mut g2 {
        *v += noise.laplace(scale);
    }
    noise.charge(Release {
        label: "poly_group2",
        epsilon: half,
    });

    let stats = poly_refined_stats(&PolyNoisyStats { degree, g1, g2 });
    Ok(solve_poly(&stats, degree))
}

fn solve_poly(stats: &PolyRefinedStats, degree: usize) -> PolyFitResult {
    if !(stats.n_hat > 0.0) {
        return PolyFitResult::fallback(degree);
    }
    if degree == 1 {
        return match solve_line(
            stats.n_hat,
            stats.s_x_pow[1],
            stats.s_x_pow_y[0],
            stats.s_x_pow[2],
            stats.s_x_pow_y[1],
        ) {
            Some((a1, a0)) => PolyFitResult {
                coeffs: vec![a1, a0],
                fallback: false,
            },
            None => PolyFitResult::fallback(degree),
        };
    }

    let d = degree;
    let x: Vec<Vec<f64>> = (0..=d)
        .map(|i| (0..=d).map(|j| stats.s_x_pow[2 * d - i - j]).collect())
        .collect();
    let y: Vec<f64> = (0..=d).map(|i| stats.s_x_pow_y[d - i]).collect();
    match solve_dense(&x, &y) {
        Some(coeffs) => PolyFitResult {
            coeffs,
            fallback: false,
        },
        None => PolyFitResult::fallback(degree),
    }
}
