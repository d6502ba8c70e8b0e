//! Small statistics helpers shared by the trainer, evaluator, and tests.

/// Arithmetic mean; 0.0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n−1 denominator); 0.0 for fewer than two points.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Fractional ranks (1-based), ties receiving the average of their span.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("rank of non-finite value"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // Positions i..=j share the same value; average their 1-based ranks.
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
///
/// Returns an error message if lengths differ, fewer than two points are
/// given, or either side is constant (correlation undefined).
pub fn spearman(xs: &[f64], ys: &[f64]) -> crate::Result<f64> {
    if xs.len() != ys.len() {
        return Err(crate::Error::invalid("spearman: length mismatch"));
    }
    if xs.len() < 2 {
        return Err(crate::Error::invalid("spearman: need at least two points"));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

/// Pearson correlation of two equal-length slices.
pub fn pearson(xs: &[f64], ys: &[f64]) -> crate::Result<f64> {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(crate::Error::Numeric(
            "correlation undefined for constant sequence".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Kolmogorov–Smirnov statistic of a sample against the uniform
/// distribution on `[0, 1]`.
pub fn ks_uniform01(samples: &[f64]) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let cdf = x.clamp(0.0, 1.0);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_and_std_match_hand_values() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_relative_eq!(mean(&xs), 5.0);
        // Sample variance of the set above is 32/7.
        assert_relative_eq!(std_dev(&xs), (32.0f64 / 7.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn spearman_detects_monotone_relations() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let inc: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let dec: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_relative_eq!(spearman(&xs, &inc).unwrap(), 1.0);
        assert_relative_eq!(spearman(&xs, &dec).unwrap(), -1.0);
    }

    #[test]
    fn spearman_handles_ties_with_average_ranks() {
        // Hand-computed: xs ranks [1.5, 1.5, 3, 4], ys ranks [1, 2, 3, 4]
        // → Pearson of ranks = 4.5 / sqrt(4.5 · 5.0) = 0.9486832...
        let xs = [1.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 1.0, 2.0, 3.0];
        let got = spearman(&xs, &ys).unwrap();
        assert_relative_eq!(got, 0.948_683_298_050_513_8, max_relative = 1e-9);
    }

    #[test]
    fn spearman_rejects_degenerate_input() {
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ks_statistic_small_for_uniform_grid() {
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_uniform01(&samples) < 0.001);
        let clumped: Vec<f64> = (0..n).map(|i| 0.5 * (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_uniform01(&clumped) > 0.4);
    }
}
