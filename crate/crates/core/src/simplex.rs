//! Simplex transformations of bounded records and the refined sufficient
//! statistics built from them.
//!
//! Each record maps to two non-negative triples that sum to one:
//! `x ↦ (x², x − x², 1 − x)` and `(x, y) ↦ (xy, (1 − x)y, 1 − y)`. Summed
//! over a dataset, both groups total `n`, and adding or removing one record
//! moves each group by a vector of ℓ1 norm exactly one. After Laplace noise,
//! the redundancy gives two independent estimates of every sufficient
//! statistic, which [`refine`] combines by inverse-variance weighting.

use crate::error::{DpError, Result};
use crate::noise::{LaplaceScale, NoiseSource, Release};

/// A data point in the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    x: f64,
    y: f64,
}

impl Record {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        check_unit("x", x)?;
        check_unit("y", y)?;
        Ok(Record { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

fn check_unit(field: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(DpError::Domain { field, value })
    }
}

/// Validates raw pairs, reporting the index of the first offending pair.
pub fn records_from_pairs(pairs: &[(f64, f64)]) -> Result<Vec<Record>> {
    pairs
        .iter()
        .enumerate()
        .map(|(index, &(x, y))| {
            Record::new(x, y).map_err(|e| DpError::OutOfBounds {
                index,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// `x ↦ (x², x − x², 1 − x)`.
pub fn simplex_transform_x(x: f64) -> Result<[f64; 3]> {
    check_unit("x", x)?;
    Ok(transform_x(x))
}

/// `(x, y) ↦ (xy, (1 − x)y, 1 − y)`.
pub fn simplex_transform_xy(x: f64, y: f64) -> Result<[f64; 3]> {
    check_unit("x", x)?;
    check_unit("y", y)?;
    Ok(transform_xy(x, y))
}

#[inline]
fn transform_x(x: f64) -> [f64; 3] {
    let x2 = x * x;
    [x2, x - x2, 1.0 - x]
}

#[inline]
fn transform_xy(x: f64, y: f64) -> [f64; 3] {
    [x * y, (1.0 - x) * y, 1.0 - y]
}

/// Degree-`d` generalization of the x transform, length `2d + 1`:
/// `[x^{2d}, x^{2d−1} − x^{2d}, …, x − x², 1 − x]`.
pub fn poly_transform_x(x: f64, degree: usize) -> Result<Vec<f64>> {
    check_unit("x", x)?;
    check_degree(degree)?;
    Ok(poly_x_unchecked(x, degree))
}

/// Degree-`d` generalization of the joint transform, length `d + 2`:
/// `[x^d y, (x^{d−1} − x^d) y, …, (1 − x) y, 1 − y]`.
pub fn poly_transform_xy(x: f64, y: f64, degree: usize) -> Result<Vec<f64>> {
    check_unit("x", x)?;
    check_unit("y", y)?;
    check_degree(degree)?;
    Ok(poly_xy_unchecked(x, y, degree))
}

pub(crate) fn check_degree(degree: usize) -> Result<()> {
    if degree == 0 {
        Err(DpError::invalid("degree", "must be at least 1"))
    } else {
        Ok(())
    }
}

pub(crate) fn poly_x_unchecked(x: f64, degree: usize) -> Vec<f64> {
    let top = 2 * degree;
    let powers = powers(x, top);
    let mut out = Vec::with_capacity(top + 1);
    out.push(powers[top]);
    for j in (1..=top).rev() {
        out.push(powers[j - 1] - powers[j]);
    }
    out
}

pub(crate) fn poly_xy_unchecked(x: f64, y: f64, degree: usize) -> Vec<f64> {
    let powers = powers(x, degree);
    let mut out = Vec::with_capacity(degree + 2);
    out.push(powers[degree] * y);
    for l in (1..=degree).rev() {
        out.push((powers[l - 1] - powers[l]) * y);
    }
    out.push(1.0 - y);
    out
}

fn powers(x: f64, max: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(max + 1);
    let mut acc = 1.0;
    for _ in 0..=max {
        p.push(acc);
        acc *= x;
    }
    p
}

/// `(S_{x²}, S_{x−x²}, S_{1−x})`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Group1Stats {
    pub s_x2: f64,
    pub s_x_minus_x2: f64,
    pub s_1_minus_x: f64,
}

/// `(S_{xy}, S_{(1−x)y}, S_{1−y})`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Group2Stats {
    pub s_xy: f64,
    pub s_1mx_y: f64,
    pub s_1_minus_y: f64,
}

impl Group1Stats {
    pub fn to_array(self) -> [f64; 3] {
        [self.s_x2, self.s_x_minus_x2, self.s_1_minus_x]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Group1Stats {
            s_x2: a[0],
            s_x_minus_x2: a[1],
            s_1_minus_x: a[2],
        }
    }

    pub fn total(self) -> f64 {
        self.s_x2 + self.s_x_minus_x2 + self.s_1_minus_x
    }
}

impl Group2Stats {
    pub fn to_array(self) -> [f64; 3] {
        [self.s_xy, self.s_1mx_y, self.s_1_minus_y]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Group2Stats {
            s_xy: a[0],
            s_1mx_y: a[1],
            s_1_minus_y: a[2],
        }
    }

    pub fn total(self) -> f64 {
        self.s_xy + self.s_1mx_y + self.s_1_minus_y
    }
}

/// Noisy release of both groups with the budgets that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyGroupStats {
    pub g1: Group1Stats,
    pub g2: Group2Stats,
    pub eps1: f64,
    pub eps2: f64,
}

impl NoisyGroupStats {
    /// `ñ_x`, the Group 1 estimate of the dataset size.
    pub fn n_x(&self) -> f64 {
        self.g1.total()
    }

    /// `ñ_y`, the Group 2 estimate of the dataset size.
    pub fn n_y(&self) -> f64 {
        self.g2.total()
    }
}

/// Post-processed estimates of the OLS sufficient statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedStats {
    pub n_hat: f64,
    pub s_x: f64,
    pub s_y: f64,
    pub s_x2: f64,
    pub s_xy: f64,
}

/// Exact group sums over `data`, using compensated summation.
pub fn exact_group_stats(data: &[Record]) -> (Group1Stats, Group2Stats) {
    let mut acc = [CompensatedSum::default(); 6];
    for r in data {
        let a = transform_x(r.x);
        let b = transform_xy(r.x, r.y);
        for k in 0..3 {
            acc[k].add(a[k]);
            acc[k + 3].add(b[k]);
        }
    }
    let v: Vec<f64> = acc.iter().map(CompensatedSum::value).collect();
    (
        Group1Stats::from_array([v[0], v[1], v[2]]),
        Group2Stats::from_array([v[3], v[4], v[5]]),
    )
}

fn check_epsilon(name: &'static str, eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(DpError::invalid(name, format!("must be positive, got {eps}")))
    }
}

/// Adds `Lap(1/eps1)` to each Group 1 component and `Lap(1/eps2)` to each
/// Group 2 component. The joint release is `(eps1 + eps2)`-DP.
pub fn privatize_groups<N: NoiseSource + ?Sized>(
    g1: Group1Stats,
    g2: Group2Stats,
    eps1: f64,
    eps2: f64,
    noise: &mut N,
) -> Result<NoisyGroupStats> {
    check_epsilon("eps1", eps1)?;
    check_epsilon("eps2", eps2)?;
    let b1 = LaplaceScale::calibrated(1.0, eps1)?;
    let b2 = LaplaceScale::calibrated(1.0, eps2)?;

    let mut a = g1.to_array();
    for v in &mut a {
        *v += noise.laplace(b1);
    }
    noise.charge(Release {
        label: "group1",
        epsilon: eps1,
    });

    let mut b = g2.to_array();
    for v in &mut b {
        *v += noise.laplace(b2);
    }
    noise.charge(Release {
        label: "group2",
        epsilon: eps2,
    });

    Ok(NoisyGroupStats {
        g1: Group1Stats::from_array(a),
        g2: Group2Stats::from_array(b),
        eps1,
        eps2,
    })
}

/// Direct and indirect estimates of one statistic. The two use disjoint sets
/// of noise coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorPair {
    pub direct: f64,
    pub indirect: f64,
}

impl EstimatorPair {
    fn combine(self, w_direct: f64, w_indirect: f64) -> f64 {
        w_direct * self.direct + w_indirect * self.indirect
    }
}

/// The two sub-estimators behind each refined statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorPairs {
    /// `(ñ_x, ñ_y)`.
    pub n: EstimatorPair,
    /// `(S̃_{x²}, ñ_y − S̃_{x−x²} − S̃_{1−x})`.
    pub s_x2: EstimatorPair,
    /// `(S̃_{xy}, ñ_x − S̃_{(1−x)y} − S̃_{1−y})`.
    pub s_xy: EstimatorPair,
    /// `(S̃_{x²} + S̃_{x−x²}, ñ_y − S̃_{1−x})`.
    pub s_x: EstimatorPair,
    /// `(S̃_{xy} + S̃_{(1−x)y}, ñ_x − S̃_{1−y})`.
    pub s_y: EstimatorPair,
}

pub fn estimator_pairs(noisy: &NoisyGroupStats) -> EstimatorPairs {
    let g1 = noisy.g1;
    let g2 = noisy.g2;
    let n_x = noisy.n_x();
    let n_y = noisy.n_y();
    EstimatorPairs {
        n: EstimatorPair {
            direct: n_x,
            indirect: n_y,
        },
        s_x2: EstimatorPair {
            direct: g1.s_x2,
            indirect: n_y - (g1.s_x_minus_x2 + g1.s_1_minus_x),
        },
        s_xy: EstimatorPair {
            direct: g2.s_xy,
            indirect: n_x - (g2.s_1mx_y + g2.s_1_minus_y),
        },
        s_x: EstimatorPair {
            direct: g1.s_x2 + g1.s_x_minus_x2,
            indirect: n_y - g1.s_1_minus_x,
        },
        s_y: EstimatorPair {
            direct: g2.s_xy + g2.s_1mx_y,
            indirect: n_x - g2.s_1_minus_y,
        },
    }
}

// Inverse-variance weights for the equal-split case. Every noise term has the
// same variance, so a sub-estimator's variance is proportional to its term
// count: (1, 5) terms for S_{x²} and S_{xy}, (2, 4) for S_x and S_y.
const W_QUADRATIC: (f64, f64) = (5.0 / 6.0, 1.0 / 6.0);
const W_LINEAR: (f64, f64) = (2.0 / 3.0, 1.0 / 3.0);
const W_SIZE: (f64, f64) = (0.5, 0.5);

/// Refined estimates `n̂, Ŝx, Ŝy, Ŝ_{x²}, Ŝ_{xy}` from an equal-split release.
pub fn refine(noisy: &NoisyGroupStats) -> Result<RefinedStats> {
    let scale = noisy.eps1.abs().max(noisy.eps2.abs());
    if (noisy.eps1 - noisy.eps2).abs() > 1e-12 * scale {
        return Err(DpError::invalid(
            "eps1/eps2",
            format!(
                "refined weights assume an equal split, got {} and {}",
                noisy.eps1, noisy.eps2
            ),
        ));
    }
    let p = estimator_pairs(noisy);
    Ok(RefinedStats {
        n_hat: p.n.combine(W_SIZE.0, W_SIZE.1),
        s_x: p.s_x.combine(W_LINEAR.0, W_LINEAR.1),
        s_y: p.s_y.combine(W_LINEAR.0, W_LINEAR.1),
        s_x2: p.s_x2.combine(W_QUADRATIC.0, W_QUADRATIC.1),
        s_xy: p.s_xy.combine(W_QUADRATIC.0, W_QUADRATIC.1),
    })
}

/// Minimum-variance weights `(w1, w2)` for two independent unbiased estimators.
pub fn optimal_weights(var1: f64, var2: f64) -> Result<(f64, f64)> {
    for (name, v) in [("var1", var1), ("var2", var2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(DpError::invalid(name, format!("must be positive, got {v}")));
        }
    }
    let total = var1 + var2;
    Ok((var2 / total, var1 / total))
}

/// Variance of the optimally weighted combination.
pub fn combined_variance(var1: f64, var2: f64) -> f64 {
    var1 * var2 / (var1 + var2)
}

/// Which statistic vector to probe in [`sensitivity_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatGroup {
    Group1,
    Group2,
    PolyGroup1 { degree: usize },
    PolyGroup2 { degree: usize },
}

impl StatGroup {
    fn vector(self, data: &[Record]) -> Vec<f64> {
        match self {
            StatGroup::Group1 => exact_group_stats(data).0.to_array().to_vec(),
            StatGroup::Group2 => exact_group_stats(data).1.to_array().to_vec(),
            StatGroup::PolyGroup1 { degree } => {
                sum_vectors(data.iter().map(|r| poly_x_unchecked(r.x, degree)), 2 * degree + 1)
            }
            StatGroup::PolyGroup2 { degree } => sum_vectors(
                data.iter().map(|r| poly_xy_unchecked(r.x, r.y, degree)),
                degree + 2,
            ),
        }
    }
}

fn sum_vectors(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::default(); dim];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            a.add(v);
        }
    }
    acc.iter().map(CompensatedSum::value).collect()
}

/// Extremes of the ℓ1 change over all probed neighbouring datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    pub max_l1: f64,
    pub min_l1: f64,
    pub points: usize,
}

/// Brute-force ℓ1 change of a group vector when one record is added.
///
/// The added record ranges over a `grid_step` lattice of the unit square; the
/// base dataset is a fixed handful of records.
pub fn sensitivity_oracle(group: StatGroup, grid_step: f64) -> Result<SensitivityReport> {
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(DpError::invalid("grid_step", format!("must be in (0, 0.1], got {grid_step}")));
    }
    if let StatGroup::PolyGroup1 { degree } | StatGroup::PolyGroup2 { degree } = group {
        check_degree(degree)?;
    }

    let base: Vec<Record> = [(0.1, 0.9), (0.35, 0.2), (0.8, 0.65), (1.0, 0.0)]
        .iter()
        .map(|&(x, y)| Record { x, y })
        .collect();
    let before = group.vector(&base);

    let steps = (1.0 / grid_step).round() as usize;
    let coord = |k: usize| ((k as f64) * grid_step).min(1.0);
    let mut report = SensitivityReport {
        max_l1: f64::NEG_INFINITY,
        min_l1: f64::INFINITY,
        points: 0,
    };
    let mut with = base.clone();
    with.push(Record { x: 0.0, y: 0.0 });
    for i in 0..=steps {
        for j in 0..=steps {
            *with.last_mut().expect("non-empty") = Record {
                x: coord(i),
                y: coord(j),
            };
            let after = group.vector(&with);
            let l1: f64 = after.iter().zip(&before).map(|(a, b)| (a - b).abs()).sum();
            report.max_l1 = report.max_l1.max(l1);
            report.min_l1 = report.min_l1.min(l1);
            report.points += 1;
        }
    }
    Ok(report)
}
