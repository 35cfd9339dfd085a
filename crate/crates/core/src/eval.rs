//! Line-error metrics, the Monte Carlo experiment runner and the variance
//! verification report.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::datagen::{fresh_data_stream, generate_from_stream, generate_setup, SetupConfig};
use crate::error::{DpError, Result};
use crate::mechanisms::{dp_rss_fit, dp_ss_fit, dp_theil_sen_fit, FitResult, PrivacyBudget, SsSums, TheilSenHyper};
use crate::noise::{NoiseSource, RandomStream};
use crate::simplex::{combined_variance, exact_group_stats, privatize_groups, refine, CompensatedSum, Record};

/// Grid size of the L1 approximation.
pub const L1_POINTS: usize = 1000;

/// Mean of `|(αx + β) − (α̂x + β̂)|` over `x = i/1000`, `i = 1..=1000`.
pub fn l1_error(true_fit: (f64, f64), est_fit: (f64, f64)) -> f64 {
    let a = true_fit.0 - est_fit.0;
    let b = true_fit.1 - est_fit.1;
    let sum: CompensatedSum = (1..=L1_POINTS)
        .map(|i| (a * (i as f64 / L1_POINTS as f64) + b).abs())
        .collect();
    sum.value() / L1_POINTS as f64
}

/// `∫₀¹ (Ax + B)² dx = A²/3 + AB + B²`.
pub fn l2_error(true_fit: (f64, f64), est_fit: (f64, f64)) -> f64 {
    let a = true_fit.0 - est_fit.0;
    let b = true_fit.1 - est_fit.1;
    a * a / 3.0 + a * b + b * b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricResult {
    pub l1: f64,
    pub l2: f64,
}

pub fn line_errors(true_fit: (f64, f64), fit: &FitResult) -> MetricResult {
    let est = (fit.alpha_hat, fit.beta_hat);
    MetricResult {
        l1: l1_error(true_fit, est),
        l2: l2_error(true_fit, est),
    }
}

/// Linear-regression mechanisms compared by the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    DpRss,
    DpSs,
    DpTheilSen,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DpRss, Method::DpSs, Method::DpTheilSen];

    pub fn name(self) -> &'static str {
        match self {
            Method::DpRss => "dp_rss",
            Method::DpSs => "dp_ss",
            Method::DpTheilSen => "dp_theil_sen",
        }
    }

    pub fn fit<N: NoiseSource + ?Sized>(self, data: &[Record], budget: PrivacyBudget, noise: &mut N) -> FitResult {
        match self {
            Method::DpRss => dp_rss_fit(data, budget, noise),
            Method::DpSs => dp_ss_fit(data, budget, noise),
            Method::DpTheilSen => dp_theil_sen_fit(data, budget, TheilSenHyper::default(), noise),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| DpError::config("methods", format!("unknown method `{s}`")))
    }
}

/// Privacy budgets, repetitions and methods of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub epsilons: Vec<f64>,
    pub iterations: usize,
    pub methods: Vec<Method>,
    /// Draw a new dataset for every iteration instead of reusing one.
    pub fresh_data_per_iteration: bool,
}

impl ExperimentGrid {
    /// ε values used when none are configured.
    pub const DEFAULT_EPSILONS: [f64; 7] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(DpError::config("epsilons", "must not be empty"));
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(DpError::config("epsilons", "every value must be positive and finite"));
        }
        if self.epsilons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DpError::config("epsilons", "must be strictly increasing"));
        }
        if self.iterations == 0 {
            return Err(DpError::config("iterations", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(DpError::config("methods", "must not be empty"));
        }
        Ok(())
    }
}

/// Aggregated errors of one `(method, ε)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub method: Method,
    pub epsilon: f64,
    pub mean_l1: f64,
    /// Sample standard deviation; `None` for a single iteration.
    pub std_l1: Option<f64>,
    pub mean_l2: f64,
    pub std_l2: Option<f64>,
    pub median_l1: f64,
    pub median_l2: f64,
    pub iterations: usize,
}

impl ExperimentRow {
    pub fn se_l1(&self) -> f64 {
        self.std_l1.unwrap_or(0.0) / (self.iterations as f64).sqrt()
    }

    pub fn se_l2(&self) -> f64 {
        self.std_l2.unwrap_or(0.0) / (self.iterations as f64).sqrt()
    }
}

fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss: CompensatedSum = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, Some((ss.value() / (n - 1.0)).sqrt()))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) / 2.0
    }
}

/// Runs every `(method, ε, iteration)` and aggregates L1/L2 errors.
///
/// Iteration `i` of every cell uses mechanism substream `(seed, i)`. Results
/// are gathered into an indexed buffer, so the output does not depend on
/// thread scheduling. Rows are sorted by `(method, ε)`.
pub fn run_experiment(setup: &SetupConfig, grid: &ExperimentGrid) -> Result<Vec<ExperimentRow>> {
    setup.validate()?;
    grid.validate()?;

    let mut methods = grid.methods.clone();
    methods.sort();
    methods.dedup();

    let shared = (!grid.fresh_data_per_iteration).then(|| generate_setup(setup));
    let truth = setup.true_line();

    let cells: Vec<(Method, f64)> = methods
        .iter()
        .flat_map(|&m| grid.epsilons.iter().map(move |&e| (m, e)))
        .collect();
    let iterations = grid.iterations;

    let metrics: Vec<MetricResult> = (0..cells.len() * iterations)
        .into_par_iter()
        .map(|job| {
            let (method, epsilon) = cells[job / iterations];
            let iteration = (job % iterations) as u64;
            let budget = PrivacyBudget::new(epsilon).expect("validated grid");
            let mut noise = RandomStream::new(setup.seed, iteration);
            let fit = match &shared {
                Some(data) => method.fit(data, budget, &mut noise),
                None => {
                    let data = generate_from_stream(setup, fresh_data_stream(iteration));
                    method.fit(&data, budget, &mut noise)
                }
            };
            line_errors(truth, &fit)
        })
        .collect();

    Ok(cells
        .iter()
        .zip(metrics.chunks(iterations))
        .map(|(&(method, epsilon), chunk)| {
            let l1: Vec<f64> = chunk.iter().map(|m| m.l1).collect();
            let l2: Vec<f64> = chunk.iter().map(|m| m.l2).collect();
            let (mean_l1, std_l1) = mean_std(&l1);
            let (mean_l2, std_l2) = mean_std(&l2);
            ExperimentRow {
                method,
                epsilon,
                mean_l1,
                std_l1,
                mean_l2,
                std_l2,
                median_l1: median(&l1),
                median_l2: median(&l2),
                iterations,
            }
        })
        .collect())
}

/// Statistics compared in the variance report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    N,
    SX2,
    SXy,
    SX,
    SY,
}

impl Statistic {
    pub const ALL: [Statistic; 5] = [Statistic::N, Statistic::SX2, Statistic::SXy, Statistic::SX, Statistic::SY];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::N => "n",
            Statistic::SX2 => "S_x2",
            Statistic::SXy => "S_xy",
            Statistic::SX => "S_x",
            Statistic::SY => "S_y",
        }
    }
}

/// Analytic variance of a statistic's private estimate at budget ε.
///
/// DP-RSS: every Laplace term has scale 2/ε; the refined estimators combine
/// a direct and an indirect estimate with (3, 3), (1, 5) or (2, 4) terms.
/// DP-SS: every sum carries one term of scale 4/ε and `ñ` averages eight.
pub fn theoretical_variance(stat: Statistic, method: Method, epsilon: f64) -> f64 {
    match method {
        Method::DpRss => {
            let v = 2.0 * (2.0 / epsilon).powi(2);
            let (m1, m2) = match stat {
                Statistic::N => (3.0, 3.0),
                Statistic::SX2 | Statistic::SXy => (1.0, 5.0),
                Statistic::SX | Statistic::SY => (2.0, 4.0),
            };
            combined_variance(m1 * v, m2 * v)
        }
        Method::DpSs => {
            let v = 2.0 * (4.0 / epsilon).powi(2);
            match stat {
                Statistic::N => 8.0 * v / 16.0,
                _ => v,
            }
        }
        Method::DpTheilSen => f64::NAN,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub statistic: Statistic,
    pub method: Method,
    pub empirical_var: f64,
    pub theoretical_var: f64,
    pub relative_error: f64,
    /// Empirical DP-SS variance over empirical DP-RSS variance.
    pub improvement_ratio: f64,
}

/// Minimum trial count accepted by [`verify_variances`].
pub const MIN_VERIFY_TRIALS: usize = 100_000;

const VERIFY_BLOCK: usize = 1000;

/// Running mean and sum of squared deviations (Welford), mergeable.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0.0 {
            return other;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + d * other.count / count,
            m2: self.m2 + other.m2 + d * d * self.count * other.count / count,
        }
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.count - 1.0)
    }
}

/// Dataset the variance report privatizes; the variances do not depend on it.
pub fn verification_dataset(seed: u64) -> Vec<Record> {
    generate_setup(&SetupConfig {
        n: 1000,
        alpha: 0.5,
        beta: 0.2,
        sigma: 0.1,
        seed,
    })
}

/// Empirical variances of the DP-RSS refined statistics and the DP-SS noisy
/// statistics against their analytic values.
///
/// Trials run in blocks of 1000; block `b` uses substream `(seed, b)`.
pub fn verify_variances(epsilon: f64, trials: usize, stream: &RandomStream) -> Result<Vec<VarianceRow>> {
    let budget = PrivacyBudget::new(epsilon)?;
    if trials < MIN_VERIFY_TRIALS {
        return Err(DpError::invalid(
            "trials",
            format!("need at least {MIN_VERIFY_TRIALS}, got {trials}"),
        ));
    }
    let seed = stream.seed();
    let data = verification_dataset(seed);
    let (g1, g2) = exact_group_stats(&data);
    let ss_sums = SsSums::from_records(&data);
    let n = data.len() as f64;
    let exact = [n, g1.s_x2, g2.s_xy, g1.s_x2 + g1.s_x_minus_x2, g2.s_xy + g2.s_1mx_y];

    let blocks = trials.div_ceil(VERIFY_BLOCK);
    let half = budget.share(2);
    let per_block: Vec<[Moments; 10]> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut s = RandomStream::new(seed, b as u64);
            let count = VERIFY_BLOCK.min(trials - b * VERIFY_BLOCK);
            let mut m = [Moments::default(); 10];
            for _ in 0..count {
                let noisy = privatize_groups(g1, g2, half, half, &mut s).expect("valid budget");
                let r = refine(&noisy).expect("equal split");
                let rss = [r.n_hat, r.s_x2, r.s_xy, r.s_x, r.s_y];
                let ss = ss_sums.privatize(budget, &mut s);
                let ssv = [ss.n_tilde(), ss.0.s_x2, ss.0.s_xy, ss.0.s_x, ss.0.s_y];
                for k in 0..5 {
                    m[2 * k].push(rss[k] - exact[k]);
                    m[2 * k + 1].push(ssv[k] - exact[k]);
                }
            }
            m
        })
        .collect();

    let total = per_block.into_iter().fold([Moments::default(); 10], |mut acc, m| {
        for k in 0..10 {
            acc[k] = acc[k].merge(m[k]);
        }
        acc
    });

    let mut rows = Vec::with_capacity(10);
    for (k, stat) in Statistic::ALL.into_iter().enumerate() {
        let rss_var = total[2 * k].variance();
        let ss_var = total[2 * k + 1].variance();
        for (method, var) in [(Method::DpRss, rss_var), (Method::DpSs, ss_var)] {
            let theory = theoretical_variance(stat, method, epsilon);
            rows.push(VarianceRow {
                statistic: stat,
                method,
                empirical_var: var,
                theoretical_var: theory,
                relative_error: (var - theory).abs() / theory,
                improvement_ratio: ss_var / rss_var,
            });
        }
    }
    Ok(rows)
}
