//! Seeded randomness, Laplace sampling and the exponential-mechanism median.
//!
//! Every randomized routine in the crate draws through [`NoiseSource`], so a
//! mechanism can be run against a real [`RandomStream`], a [`ZeroNoise`] stub
//! that removes all privacy noise, or a [`Recording`] wrapper that keeps a
//! ledger of every draw and budget charge.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{DpError, Result};

/// Scale `b` of a zero-mean Laplace distribution. A draw has variance `2 b²`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LaplaceScale(f64);

impl LaplaceScale {
    pub fn new(b: f64) -> Result<Self> {
        if b.is_finite() && b > 0.0 {
            Ok(LaplaceScale(b))
        } else {
            Err(DpError::invalid("scale", format!("must be positive and finite, got {b}")))
        }
    }

    /// Scale calibrated to an ℓ1 sensitivity and a privacy budget.
    pub fn calibrated(sensitivity: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(DpError::invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        LaplaceScale::new(sensitivity / epsilon)
    }

    pub fn b(self) -> f64 {
        self.0
    }

    pub fn variance(self) -> f64 {
        2.0 * self.0 * self.0
    }
}

/// One sub-release of a mechanism and the share of ε it consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Release {
    pub label: &'static str,
    pub epsilon: f64,
}

/// Source of all randomness consumed by the mechanisms.
pub trait NoiseSource {
    /// Uniform draw from the open interval (0, 1).
    fn uniform(&mut self) -> f64;

    /// Laplace draw by inverse-CDF transform of one uniform.
    fn laplace(&mut self, scale: LaplaceScale) -> f64 {
        let v = self.uniform() - 0.5;
        -scale.b() * v.signum() * (1.0 - 2.0 * v.abs()).ln()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    fn index_below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Notification that a mechanism released something under `release.epsilon`.
    fn charge(&mut self, _release: Release) {}
}

impl<N: NoiseSource + ?Sized> NoiseSource for &mut N {
    fn uniform(&mut self) -> f64 {
        (**self).uniform()
    }
    fn laplace(&mut self, scale: LaplaceScale) -> f64 {
        (**self).laplace(scale)
    }
    fn index_below(&mut self, n: usize) -> usize {
        (**self).index_below(n)
    }
    fn charge(&mut self, release: Release) {
        (**self).charge(release)
    }
}

/// Deterministic ChaCha20 stream identified by `(seed, stream_index)`.
///
/// Distinct stream indices select disjoint ChaCha keystreams, so Monte Carlo
/// workers can each own a substream without coordination.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_index: u64,
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_index);
        RandomStream {
            seed,
            stream_index,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }
}

impl NoiseSource for RandomStream {
    fn uniform(&mut self) -> f64 {
        // 53 random bits, shifted half a step off zero: never 0 and never 1.
        let k = self.rng.next_u64() >> 11;
        (k as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    fn index_below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

/// Stub source whose Laplace draws are exactly zero.
///
/// Uniform draws return 0.5, so sampling steps stay deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn uniform(&mut self) -> f64 {
        0.5
    }

    fn laplace(&mut self, _scale: LaplaceScale) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseEvent {
    Laplace { scale: f64, draw: f64 },
    Charge(Release),
}

/// Wraps a source and keeps a ledger of Laplace draws and budget charges.
#[derive(Debug, Clone)]
pub struct Recording<N> {
    inner: N,
    events: Vec<NoiseEvent>,
}

impl<N: NoiseSource> Recording<N> {
    pub fn new(inner: N) -> Self {
        Recording {
            inner,
            events: Vec::new(),
        }
    }

    pub fn events(&self) -> &[NoiseEvent] {
        &self.events
    }

    pub fn charges(&self) -> impl Iterator<Item = &Release> {
        self.events.iter().filter_map(|e| match e {
            NoiseEvent::Charge(r) => Some(r),
            _ => None,
        })
    }

    pub fn laplace_scales(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter_map(|e| match e {
                NoiseEvent::Laplace { scale, .. } => Some(*scale),
                _ => None,
            })
            .collect()
    }

    /// Sum of ε over all recorded charges.
    pub fn total_epsilon(&self) -> f64 {
        self.charges().map(|r| r.epsilon).sum()
    }

    pub fn into_inner(self) -> N {
        self.inner
    }
}

impl<N: NoiseSource> NoiseSource for Recording<N> {
    fn uniform(&mut self) -> f64 {
        self.inner.uniform()
    }

    fn laplace(&mut self, scale: LaplaceScale) -> f64 {
        let draw = self.inner.laplace(scale);
        self.events.push(NoiseEvent::Laplace {
            scale: scale.b(),
            draw,
        });
        draw
    }

    fn index_below(&mut self, n: usize) -> usize {
        self.inner.index_below(n)
    }

    fn charge(&mut self, release: Release) {
        self.events.push(NoiseEvent::Charge(release.clone()));
        self.inner.charge(release);
    }
}

/// One draw from `Lap(0, b)`.
pub fn laplace_sample<N: NoiseSource + ?Sized>(noise: &mut N, scale: LaplaceScale) -> f64 {
    noise.laplace(scale)
}

/// Candidate output interval of the private median with its selection probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianInterval {
    pub lo: f64,
    pub hi: f64,
    /// Number of clipped values at or below `lo` (the interval's rank position).
    pub rank: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianRelease {
    pub value: f64,
    /// Set when the input list was empty and the midpoint was returned.
    pub degenerate: bool,
}

fn check_median_params(epsilon: f64, clip_lo: f64, clip_hi: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(DpError::invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(clip_lo.is_finite() && clip_hi.is_finite() && clip_lo < clip_hi) {
        return Err(DpError::invalid(
            "clip bounds",
            format!("need finite clip_lo < clip_hi, got [{clip_lo}, {clip_hi}]"),
        ));
    }
    Ok(())
}

/// Selection distribution of the interval exponential mechanism for the median.
///
/// Values are clipped to `[clip_lo, clip_hi]` and sorted; the `m + 1` gaps
/// between consecutive edges `clip_lo, v_1, …, v_m, clip_hi` are the
/// candidates. Gap `i` has `i` values below it and `m − i` at or above it,
/// utility `−|i − (m − i)| / 2` and weight `length · exp(ε · u / 2)`.
/// Zero-length gaps get probability zero. Returns an empty vector for an
/// empty input.
pub fn median_selection_probabilities(
    values: &[f64],
    epsilon: f64,
    clip_lo: f64,
    clip_hi: f64,
) -> Result<Vec<MedianInterval>> {
    check_median_params(epsilon, clip_lo, clip_hi)?;
    if values.iter().any(|v| v.is_nan()) {
        return Err(DpError::invalid("values", "NaN in median input"));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }

    let mut sorted: Vec<f64> = values.iter().map(|v| v.clamp(clip_lo, clip_hi)).collect();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();

    let edge = |k: usize| -> f64 {
        if k == 0 {
            clip_lo
        } else if k == m + 1 {
            clip_hi
        } else {
            sorted[k - 1]
        }
    };

    let mut intervals = Vec::with_capacity(m + 1);
    let mut log_weights = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let (lo, hi) = (edge(i), edge(i + 1));
        let len = hi - lo;
        let utility = -((i as f64) - ((m - i) as f64)).abs() / 2.0;
        let lw = if len > 0.0 {
            len.ln() + epsilon * utility / 2.0
        } else {
            f64::NEG_INFINITY
        };
        intervals.push(MedianInterval {
            lo,
            hi,
            rank: i,
            probability: 0.0,
        });
        log_weights.push(lw);
    }

    // clip_lo < clip_hi guarantees at least one finite weight.
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for (iv, w) in intervals.iter_mut().zip(&weights) {
        iv.probability = w / total;
    }
    Ok(intervals)
}

/// ε-DP median of `values` restricted to `[clip_lo, clip_hi]`.
///
/// An empty list yields the midpoint of the clipping range with the
/// `degenerate` flag set; no randomness is consumed in that case.
pub fn dp_median<N: NoiseSource + ?Sized>(
    values: &[f64],
    epsilon: f64,
    clip_lo: f64,
    clip_hi: f64,
    noise: &mut N,
) -> Result<MedianRelease> {
    let intervals = median_selection_probabilities(values, epsilon, clip_lo, clip_hi)?;
    if intervals.is_empty() {
        return Ok(MedianRelease {
            value: (clip_lo + clip_hi) / 2.0,
            degenerate: true,
        });
    }

    let target = noise.uniform();
    let mut cumulative = 0.0;
    // Last interval with positive mass absorbs any rounding shortfall.
    let mut chosen = intervals
        .iter()
        .rposition(|iv| iv.probability > 0.0)
        .expect("at least one interval has positive length");
    for (k, iv) in intervals.iter().enumerate() {
        if iv.probability <= 0.0 {
            continue;
        }
        cumulative += iv.probability;
        if target < cumulative {
            chosen = k;
            break;
        }
    }

    let iv = intervals[chosen];
    let value = (iv.lo + noise.uniform() * (iv.hi - iv.lo)).clamp(clip_lo, clip_hi);
    Ok(MedianRelease {
        value,
        degenerate: false,
    })
}
