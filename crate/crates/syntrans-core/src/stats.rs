//! Spearman rank correlation and least-squares regression, the two
//! estimators the sweep analysis reports.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("input vector is constant; statistic undefined")]
    ConstantInput,
}

fn is_constant(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

/// Ranks with average ranks for ties (1-based).
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j hold ties; assign their average 1-based rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx * vy).sqrt()
}

/// Standard normal CDF (Abramowitz & Stegun 26.2.17, |error| < 7.5e-8).
fn normal_cdf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.2316419 * x.abs());
    let poly = t
        * (0.319381530
            + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
    let pdf = (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let upper = pdf * poly;
    if x >= 0.0 {
        1.0 - upper
    } else {
        upper
    }
}

fn heap_permutations(items: &mut Vec<f64>, visit: &mut impl FnMut(&[f64])) {
    fn go(k: usize, items: &mut Vec<f64>, visit: &mut impl FnMut(&[f64])) {
        if k <= 1 {
            visit(items);
            return;
        }
        for i in 0..k {
            go(k - 1, items, visit);
            if k % 2 == 0 {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
        }
    }
    let k = items.len();
    go(k, items, visit);
}

/// Spearman rank-order correlation with a two-sided p-value: exact by
/// permutation for n <= 8, normal approximation (z = rho * sqrt(n-1))
/// otherwise.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(StatsError::TooFewPoints { needed: 3, got: xs.len() });
    }
    if is_constant(xs) || is_constant(ys) {
        return Err(StatsError::ConstantInput);
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let rho = pearson(&rx, &ry);

    let n = xs.len();
    let p = if n <= 8 {
        let observed = rho.abs() - 1e-12;
        let mut hits = 0u64;
        let mut total = 0u64;
        let mut perm = ry.clone();
        heap_permutations(&mut perm, &mut |p| {
            total += 1;
            if pearson(&rx, p).abs() >= observed {
                hits += 1;
            }
        });
        hits as f64 / total as f64
    } else {
        let z = rho.abs() * ((n - 1) as f64).sqrt();
        2.0 * (1.0 - normal_cdf(z))
    };
    Ok((rho, p.min(1.0)))
}

/// Least-squares slope of y on x.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFewPoints { needed: 2, got: xs.len() });
    }
    if is_constant(xs) {
        return Err(StatsError::ConstantInput);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        var += (x - mx) * (x - mx);
    }
    Ok(cov / var)
}

/// Affine map of `xs` onto `[lo, hi]` by min-max, the normalization applied
/// to parameter counts before regressing accuracy on them.
pub fn minmax_normalize(xs: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::TooFewPoints { needed: 1, got: 0 });
    }
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(StatsError::ConstantInput);
    }
    Ok(xs.iter().map(|x| lo + (x - min) / (max - min) * (hi - lo)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// No-ties closed form, used as an independent oracle.
    fn spearman_d2(xs: &[f64], ys: &[f64]) -> f64 {
        let rx = average_ranks(xs);
        let ry = average_ranks(ys);
        let n = xs.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn perfect_orders() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (rho, _) = spearman(&xs, &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        let (rho, _) = spearman(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert!((rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_the_d2_oracle_without_ties() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0, 1.0, 4.0, 3.0, 5.0];
        let (rho, _) = spearman(&xs, &ys).unwrap();
        assert!((rho - spearman_d2(&xs, &ys)).abs() < 1e-12);
        assert!((rho - 0.8).abs() < 1e-12);
    }

    #[test]
    fn tied_values_get_average_ranks() {
        let ranks = average_ranks(&[10.0, 20.0, 20.0, 30.0]);
        assert_eq!(ranks, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn exact_permutation_p_for_small_n() {
        // For n=4 and a perfect correlation, only the identity and the
        // reversal reach |rho|=1: p = 2/24.
        let (rho, p) = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        assert!((p - 2.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn normal_approximation_for_large_n() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * 2.0 + 1.0).collect();
        let (rho, p) = spearman(&xs, &ys).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        assert!(p < 1e-4);
    }

    #[test]
    fn monotone_transform_invariance() {
        let xs = [0.3, 1.5, 0.9, 2.2, 1.1, 0.2];
        let ys = [4.0, 2.0, 5.0, 1.0, 3.0, 6.0];
        let (rho, _) = spearman(&xs, &ys).unwrap();
        let xs2: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let ys2: Vec<f64> = ys.iter().map(|y| y * 3.0 + 100.0).collect();
        let (rho2, _) = spearman(&xs2, &ys2).unwrap();
        assert!((rho - rho2).abs() < 1e-12);
    }

    #[test]
    fn constant_inputs_error() {
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::ConstantInput)
        );
        assert_eq!(regression_slope(&[2.0, 2.0], &[1.0, 5.0]), Err(StatsError::ConstantInput));
    }

    #[test]
    fn slope_cases() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert!((regression_slope(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!(regression_slope(&xs, &[5.0; 4]).unwrap().abs() < 1e-12);
        // Hand-computed three-point case.
        let slope = regression_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 4.0]).unwrap();
        assert!((slope - 1.5).abs() < 1e-12);
        // Adding a constant to y leaves the slope unchanged.
        let shifted: Vec<f64> = [1.0, 3.0, 4.0].iter().map(|y| y + 17.0).collect();
        let slope2 = regression_slope(&[0.0, 1.0, 2.0], &shifted).unwrap();
        assert!((slope - slope2).abs() < 1e-12);
    }

    #[test]
    fn minmax_maps_onto_target_range() {
        let out = minmax_normalize(&[10.0, 20.0, 30.0], 0.25, 0.75).unwrap();
        assert_eq!(out, vec![0.25, 0.5, 0.75]);
        assert_eq!(minmax_normalize(&[5.0, 5.0], 0.0, 1.0), Err(StatsError::ConstantInput));
    }
}
