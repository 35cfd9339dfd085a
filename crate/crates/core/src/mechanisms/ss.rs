use super::{FitResult, PrivacyBudget};
use crate::noise::{LaplaceScale, NoiseSource, Release};
use crate::simplex::{CompensatedSum, Record};

/// The eight complementary sums privatized by DP-SS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsSums {
    pub s_x: f64,
    pub s_1_minus_x: f64,
    pub s_y: f64,
    pub s_1_minus_y: f64,
    pub s_xy: f64,
    pub s_1_minus_xy: f64,
    pub s_x2: f64,
    pub s_1_minus_x2: f64,
}

/// Noisy DP-SS sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsNoisyStats(pub SsSums);

impl SsSums {
    pub fn from_records(data: &[Record]) -> Self {
        let mut acc = [CompensatedSum::default(); 8];
        for r in data {
            let (x, y) = (r.x(), r.y());
            let xy = x * y;
            let x2 = x * x;
            let terms = [x, 1.0 - x, y, 1.0 - y, xy, 1.0 - xy, x2, 1.0 - x2];
            for (a, t) in acc.iter_mut().zip(terms) {
                a.add(t);
            }
        }
        let v = acc.map(|a| a.value());
        SsSums {
            s_x: v[0],
            s_1_minus_x: v[1],
            s_y: v[2],
            s_1_minus_y: v[3],
            s_xy: v[4],
            s_1_minus_xy: v[5],
            s_x2: v[6],
            s_1_minus_x2: v[7],
        }
    }

    fn to_array(self) -> [f64; 8] {
        [
            self.s_x,
            self.s_1_minus_x,
            self.s_y,
            self.s_1_minus_y,
            self.s_xy,
            self.s_1_minus_xy,
            self.s_x2,
            self.s_1_minus_x2,
        ]
    }

    fn from_array(v: [f64; 8]) -> Self {
        SsSums {
            s_x: v[0],
            s_1_minus_x: v[1],
            s_y: v[2],
            s_1_minus_y: v[3],
            s_xy: v[4],
            s_1_minus_xy: v[5],
            s_x2: v[6],
            s_1_minus_x2: v[7],
        }
    }

    /// Adds `Lap(4/ε)` to each sum; each of the four complementary pairs
    /// has sensitivity 1 and receives ε/4.
    pub fn privatize<N: NoiseSource + ?Sized>(&self, budget: PrivacyBudget, noise: &mut N) -> SsNoisyStats {
        const PAIRS: [&str; 4] = ["pair_x", "pair_y", "pair_xy", "pair_x2"];
        let quarter = budget.share(4);
        let scale = LaplaceScale::calibrated(1.0, quarter).expect("budget already validated");
        let mut v = self.to_array();
        for (k, label) in PAIRS.iter().enumerate() {
            v[2 * k] += noise.laplace(scale);
            v[2 * k + 1] += noise.laplace(scale);
            noise.charge(Release {
                label,
                epsilon: quarter,
            });
        }
        SsNoisyStats(SsSums::from_array(v))
    }
}

impl SsNoisyStats {
    /// `ñ`: each complementary pair sums to `n`, so the eight sums total `4n`.
    pub fn n_tilde(&self) -> f64 {
        self.0.to_array().iter().sum::<f64>() / 4.0
    }
}

/// DP-SS baseline line fit.
pub fn dp_ss_fit<N: NoiseSource + ?Sized>(
    data: &[Record],
    budget: PrivacyBudget,
    noise: &mut N,
) -> FitResult {
    let noisy = SsSums::from_records(data).privatize(budget, noise);
    let n = noisy.n_tilde();
    if !(n > 0.0) {
        return FitResult::fallback();
    }
    let s = noisy.0;
    let ncov = s.s_xy - s.s_x * s.s_y / n;
    let nvar = s.s_x2 - s.s_x * s.s_x / n;
    if !(nvar > 0.0) {
        return FitResult::fallback();
    }
    let alpha = ncov / nvar;
    let beta = (s.s_y - alpha * s.s_x) / n;
    FitResult::fitted(alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{RandomStream, Recording, ZeroNoise};
    use crate::simplex::records_from_pairs;

    struct NegativeNoise;

    impl NoiseSource for NegativeNoise {
        fn uniform(&mut self) -> f64 {
            0.5
        }
        fn laplace(&mut self, _scale: LaplaceScale) -> f64 {
            -2.0
        }
    }

    #[test]
    fn zero_noise_recovers_ols() {
        let data = records_from_pairs(&[(0.0, 0.2), (0.5, 0.45), (1.0, 0.7)]).unwrap();
        let fit = dp_ss_fit(&data, PrivacyBudget::new(1.0).unwrap(), &mut ZeroNoise);
        assert!(!fit.fallback);
        assert!((fit.alpha_hat - 0.5).abs() < 1e-12);
        assert!((fit.beta_hat - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_data_with_negative_noise_falls_back() {
        let fit = dp_ss_fit(&[], PrivacyBudget::new(1.0).unwrap(), &mut NegativeNoise);
        assert_eq!(fit, FitResult::fallback());
    }

    #[test]
    fn exact_size_is_recovered() {
        let data = records_from_pairs(&[(0.3, 0.3), (0.1, 0.8), (0.9, 0.0)]).unwrap();
        let noisy = SsSums::from_records(&data).privatize(PrivacyBudget::new(1.0).unwrap(), &mut ZeroNoise);
        assert!((noisy.n_tilde() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ledger_has_four_quarter_charges() {
        let mut rec = Recording::new(RandomStream::new(4, 0));
        let data = records_from_pairs(&[(0.3, 0.3)]).unwrap();
        dp_ss_fit(&data, PrivacyBudget::new(2.0).unwrap(), &mut rec);
        let charges: Vec<f64> = rec.charges().map(|r| r.epsilon).collect();
        assert_eq!(charges, vec![0.5; 4]);
        assert_eq!(rec.total_epsilon(), 2.0);
        assert!(rec.laplace_scales().iter().all(|&b| b == 2.0));
    }

    #[test]
    fn baseline_variances() {
        let data = records_from_pairs(&[(0.2, 0.4), (0.7, 0.1), (0.5, 0.9)]).unwrap();
        let sums = SsSums::from_records(&data);
        let budget = PrivacyBudget::new(1.0).unwrap();
        let mut s = RandomStream::new(21, 0);
        let trials = 1_000_000;
        let (mut a1, mut a2, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..trials {
            let noisy = sums.privatize(budget, &mut s);
            let d = noisy.0.s_x2 - sums.s_x2;
            let e = noisy.n_tilde() - 3.0;
            a1 += d;
            a2 += d * d;
            b1 += e;
            b2 += e * e;
        }
        let n = trials as f64;
        let var_x2 = (a2 - a1 * a1 / n) / (n - 1.0);
        let var_n = (b2 - b1 * b1 / n) / (n - 1.0);
        assert!((var_x2 / 32.0 - 1.0).abs() < 0.02, "Var(S_x2) = {var_x2}");
        assert!((var_n / 16.0 - 1.0).abs() < 0.02, "Var(n) = {var_n}");
    }
}
