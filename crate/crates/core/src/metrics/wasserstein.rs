//! One-dimensional earth mover's distance between empirical distributions.

use alloc::vec::Vec;

use super::MetricsError;

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// W₁ by quantile coupling: ∫₀¹ |Q_x(u) − Q_y(u)| du over the merged
/// quantile breakpoints. Equal sizes reduce to the mean sorted difference.
pub fn wasserstein1(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (x, y) = (sorted(xs), sorted(ys));
    let (n, m) = (x.len(), y.len());
    if n == m {
        return Ok(x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64);
    }
    // Walk the breakpoints i/n and j/m in integer units of 1/(n·m).
    let (mut i, mut j) = (0usize, 0usize);
    let (mut u, mut total) = (0usize, 0.0);
    while i < n && j < m {
        let next_x = (i + 1) * m;
        let next_y = (j + 1) * n;
        let next = next_x.min(next_y);
        total += (next - u) as f64 * (x[i] - y[j]).abs();
        u = next;
        if next_x == next {
            i += 1;
        }
        if next_y == next {
            j += 1;
        }
    }
    Ok(total / (n * m) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    /// ∫ |F_x(t) − F_y(t)| dt over the merged support.
    fn cdf_integral(xs: &[f64], ys: &[f64]) -> f64 {
        let mut pts: Vec<f64> = xs.iter().chain(ys).copied().collect();
        pts.sort_by(f64::total_cmp);
        let cdf = |v: &[f64], t: f64| v.iter().filter(|&&a| a <= t).count() as f64 / v.len() as f64;
        pts.windows(2).map(|w| (cdf(xs, w[0]) - cdf(ys, w[0])).abs() * (w[1] - w[0])).sum()
    }

    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }

    /// Exhaustive transport: replicate both samples to lcm(n, m) equal-mass
    /// points and minimize over every bijection.
    fn exhaustive(xs: &[f64], ys: &[f64]) -> f64 {
        let l = xs.len() * ys.len() / gcd(xs.len(), ys.len());
        let rep = |v: &[f64]| v.iter().flat_map(|&a| core::iter::repeat_n(a, l / v.len())).collect::<Vec<_>>();
        let (a, b) = (rep(xs), rep(ys));
        fn rec(a: &[f64], b: &[f64], k: usize, used: &mut Vec<bool>) -> f64 {
            if k == a.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            let mut tried: Vec<f64> = Vec::new();
            for j in 0..b.len() {
                if used[j] || tried.contains(&b[j]) {
                    continue;
                }
                tried.push(b[j]);
                used[j] = true;
                best = best.min((a[k] - b[j]).abs() + rec(a, b, k + 1, used));
                used[j] = false;
            }
            best
        }
        rec(&a, &b, 0, &mut vec![false; l]) / l as f64
    }

    #[test]
    fn examples() {
        assert_eq!(wasserstein1(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[1.0], &[3.0]).unwrap(), 2.0);
        let w = wasserstein1(&[0.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((w - 0.5).abs() < 1e-12);
        assert!((w - exhaustive(&[0.0, 1.0], &[0.0, 1.0, 2.0])).abs() < 1e-12);
        assert_eq!(wasserstein1(&[], &[1.0]), Err(MetricsError::EmptyInput));
    }

    proptest! {
        #[test]
        fn agrees_with_oracles(xs in prop::collection::vec(-5.0f64..5.0, 1..5), ys in prop::collection::vec(-5.0f64..5.0, 1..5)) {
            let w = wasserstein1(&xs, &ys).unwrap();
            prop_assert!((w - cdf_integral(&xs, &ys)).abs() < 1e-9);
            let l = xs.len() * ys.len() / gcd(xs.len(), ys.len());
            if l <= 8 {
                prop_assert!((w - exhaustive(&xs, &ys)).abs() < 1e-9);
            }
        }

        #[test]
        fn metric_laws(a in prop::collection::vec(-5.0f64..5.0, 1..8), b in prop::collection::vec(-5.0f64..5.0, 1..8), c in prop::collection::vec(-5.0f64..5.0, 1..8)) {
            let d = |x: &[f64], y: &[f64]| wasserstein1(x, y).unwrap();
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
        }
    }
}
