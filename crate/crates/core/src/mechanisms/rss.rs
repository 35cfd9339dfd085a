use super::{solve_line, FitResult, PrivacyBudget};
use crate::noise::NoiseSource;
use crate::simplex::{exact_group_stats, privatize_groups, refine, Record};

/// DP-RSS line fit: privatize both simplex groups with ε/2 each, refine, and
/// solve the normal equations on the refined statistics.
pub fn dp_rss_fit<N: NoiseSource + ?Sized>(
    data: &[Record],
    budget: PrivacyBudget,
    noise: &mut N,
) -> FitResult {
    let (g1, g2) = exact_group_stats(data);
    let half = budget.share(2);
    let noisy = privatize_groups(g1, g2, half, half, noise).expect("budget already validated");
    let stats = refine(&noisy).expect("equal split");

    match solve_line(stats.n_hat, stats.s_x, stats.s_y, stats.s_x2, stats.s_xy) {
        Some((alpha, beta)) => FitResult::fitted(alpha, beta),
        None => FitResult::fallback(),
    }
}
