//! Goodness-of-fit and comparison statistics used by the verification suite.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Asymptotic Kolmogorov quantile for α = 0.01.
pub const KOLMOGOROV_C_01: f64 = 1.628;

/// Cells with fewer expected counts are pooled before a χ² test.
pub const CHI_SQUARE_MIN_EXPECTED: f64 = 5.0;

/// A sorted sample with its first two moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    sorted: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl EmpiricalSummary {
    /// Panics if the sample is empty or contains NaN.
    pub fn new(mut sample: Vec<f64>) -> Self {
        assert!(!sample.is_empty(), "empty sample");
        assert!(sample.iter().all(|x| !x.is_nan()), "NaN in sample");
        sample.sort_by(f64::total_cmp);
        let n = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / n;
        let variance = if sample.len() > 1 {
            sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            sorted: sample,
            mean,
            variance,
        }
    }

    pub fn sorted_sample(&self) -> &[f64] {
        &self.sorted
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for a single observation.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn count(&self) -> usize {
        self.sorted.len()
    }

    /// Empirical CDF `#{x_i <= x} / n`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Fraction of observations strictly above `x`.
    pub fn fraction_above(&self, x: f64) -> f64 {
        1.0 - self.ecdf(x)
    }
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &EmpiricalSummary, cdf: F) -> f64 {
    ks_one_sample_with_atoms(sample, &cdf, &cdf)
}

/// One-sample KS statistic against a CDF that may have atoms.
///
/// `cdf` is the right-continuous distribution function and `cdf_left` its
/// left limit `F(x-)`. For every distinct sample value the empirical CDF and
/// its left limit are compared with `F(x)` and `F(x-)` respectively, which
/// is the exact supremum distance.
pub fn ks_one_sample_with_atoms<F, G>(sample: &EmpiricalSummary, cdf: F, cdf_left: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let xs = &sample.sorted;
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut start = 0;
    while start < xs.len() {
        let x = xs[start];
        let mut end = start + 1;
        while end < xs.len() && xs[end] == x {
            end += 1;
        }
        let below = start as f64 / n;
        let at = end as f64 / n;
        d = d.max((at - cdf(x)).abs()).max((below - cdf_left(x)).abs());
        start = end;
    }
    d
}

/// Two-sample KS statistic: the sup-distance between the empirical CDFs.
pub fn ks_two_sample(a: &EmpiricalSummary, b: &EmpiricalSummary) -> f64 {
    let (xs, ys) = (&a.sorted, &b.sorted);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    // Once one sample is exhausted its CDF is 1 and the other only grows,
    // so the last evaluated gap (or the one right after) is final.
    d.max((i as f64 / na - j as f64 / nb).abs())
}

/// Critical value `c(α)·√((m+n)/(mn))` of the two-sample test at α = 0.01.
pub fn ks_critical_two_sample(m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    KOLMOGOROV_C_01 * ((m + n) / (m * n)).sqrt()
}

/// Critical value `c(α)/√n` of the one-sample test at α = 0.01.
pub fn ks_critical_one_sample(n: usize) -> f64 {
    KOLMOGOROV_C_01 / (n as f64).sqrt()
}

/// Half the L1 distance between two probability vectors.
pub fn tv_distance_discrete<K: Ord + Clone>(
    p: &BTreeMap<K, f64>,
    q: &BTreeMap<K, f64>,
) -> Result<f64> {
    for dist in [p, q] {
        let total: f64 = dist.values().sum();
        if (total - 1.0).abs() > 1e-9 || dist.values().any(|&v| v < 0.0) {
            return Err(Error::NotNormalized(total));
        }
    }
    let mut sum = 0.0;
    for (k, &pv) in p {
        sum += (pv - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &qv) in q {
        if !p.contains_key(k) {
            sum += qv;
        }
    }
    Ok((0.5 * sum).min(1.0))
}

/// Pearson χ² statistic with degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
}

impl ChiSquare {
    /// Upper-tail probability under the χ² law with `dof` degrees of freedom.
    pub fn p_value(&self) -> f64 {
        if self.dof == 0 || self.statistic <= 0.0 {
            return 1.0;
        }
        statrs::function::gamma::gamma_ur(self.dof as f64 / 2.0, self.statistic / 2.0)
    }
}

/// Pearson χ² goodness of fit.
///
/// Cells whose expected count `total·p` is below 5 are pooled into one
/// tail cell; if that pooled cell is itself below 5 it is merged into the
/// last retained cell.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], total: u64) -> Result<ChiSquare> {
    if observed.len() != expected.len() {
        return Err(Error::Domain(format!(
            "{} observed cells but {} expected",
            observed.len(),
            expected.len()
        )));
    }
    let total = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(expected) {
        if p.is_nan() || p <= 0.0 {
            return Err(Error::Domain(format!("expected mass must be positive, got {p}")));
        }
        let e = total * p;
        if e < CHI_SQUARE_MIN_EXPECTED {
            pooled_o += o as f64;
            pooled_e += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pooled_e > 0.0 {
        if pooled_e >= CHI_SQUARE_MIN_EXPECTED || cells.is_empty() {
            cells.push((pooled_o, pooled_e));
        } else {
            let last = cells.last_mut().expect("nonempty");
            last.0 += pooled_o;
            last.1 += pooled_e;
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyCells);
    }
    let statistic = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    Ok(ChiSquare {
        statistic,
        dof: cells.len() - 1,
    })
}

/// Normal-approximation interval `mean ± z·√(variance / n)`.
pub fn mean_ci(sample: &EmpiricalSummary, z: f64) -> Result<(f64, f64)> {
    if sample.count() < 2 {
        return Err(Error::Domain("mean_ci needs at least two observations".into()));
    }
    let half = z * (sample.variance / sample.count() as f64).sqrt();
    Ok((sample.mean - half, sample.mean + half))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Domain("slope needs at least two points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Domain("log-log slope needs positive coordinates".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all x coordinates coincide".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1};

    fn summary(v: &[f64]) -> EmpiricalSummary {
        EmpiricalSummary::new(v.to_vec())
    }

    #[test]
    fn ks_one_sample_at_quantiles() {
        let n = 200;
        let xs: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let d = ks_one_sample(&summary(&xs), |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn ks_one_sample_single_point() {
        let d = ks_one_sample(&summary(&[0.5]), |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_one_sample_shrinks_with_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..100_000).map(|_| Exp1.sample(&mut rng)).collect();
        let d = ks_one_sample(&summary(&xs), |x: f64| 1.0 - (-x.max(0.0)).exp());
        assert!(d < ks_critical_one_sample(100_000));
    }

    #[test]
    fn ks_handles_atoms() {
        // Half the mass at 1, half uniform on [0, 1).
        let cdf = |x: f64| {
            if x < 0.0 {
                0.0
            } else if x < 1.0 {
                0.5 * x
            } else {
                1.0
            }
        };
        let left = |x: f64| if x <= 1.0 { 0.5 * x.max(0.0) } else { 1.0 };
        let mut xs: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        xs.extend(std::iter::repeat_n(1.0, 500));
        let s = summary(&xs);
        assert!(ks_one_sample_with_atoms(&s, cdf, left) < 0.01);
        // Ignoring the atom's left limit inflates the distance.
        assert!(ks_one_sample(&s, cdf) > 0.4);
    }

    #[test]
    fn ks_two_sample_examples() {
        let a = summary(&[0.3, 1.0, 2.5]);
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&summary(&[0.0]), &summary(&[1.0])), 1.0);
        assert_eq!(ks_two_sample(&summary(&[0.0, 2.0]), &summary(&[1.0, 3.0])), 0.5);
    }

    #[test]
    fn ks_two_sample_with_ties() {
        let a = summary(&[1.0, 1.0, 2.0, 2.0]);
        let b = summary(&[1.0, 2.0, 2.0, 2.0]);
        assert!((ks_two_sample(&a, &b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn critical_values() {
        assert!((ks_critical_two_sample(10_000, 10_000) - 0.023023).abs() < 1e-6);
        assert!((ks_critical_one_sample(100_000) - 0.005148).abs() < 1e-6);
    }

    #[test]
    fn tv_examples() {
        let p: BTreeMap<u32, f64> = [(0, 0.5), (1, 0.5)].into();
        let q: BTreeMap<u32, f64> = [(0, 0.25), (1, 0.75)].into();
        assert_eq!(tv_distance_discrete(&p, &p).unwrap(), 0.0);
        assert!((tv_distance_discrete(&p, &q).unwrap() - 0.25).abs() < 1e-15);
        let a: BTreeMap<u32, f64> = [(0, 1.0)].into();
        let b: BTreeMap<u32, f64> = [(1, 1.0)].into();
        assert_eq!(tv_distance_discrete(&a, &b).unwrap(), 1.0);
        let bad: BTreeMap<u32, f64> = [(0, 0.7)].into();
        assert!(tv_distance_discrete(&bad, &a).is_err());
    }

    #[test]
    fn chi_square_examples() {
        let c = chi_square_gof(&[60, 40], &[0.5, 0.5], 100).unwrap();
        assert!((c.statistic - 4.0).abs() < 1e-12);
        assert_eq!(c.dof, 1);
        let c = chi_square_gof(&[25, 50, 25], &[0.25, 0.5, 0.25], 100).unwrap();
        assert_eq!(c.statistic, 0.0);
        assert!((c.p_value() - 1.0).abs() < 1e-12);
        // Cells below five expected counts get pooled.
        let c = chi_square_gof(&[50, 45, 3, 2], &[0.5, 0.45, 0.03, 0.02], 100).unwrap();
        assert_eq!(c.dof, 2);
        assert!(chi_square_gof(&[1], &[0.0], 1).is_err());
    }

    #[test]
    fn chi_square_p_value_reference() {
        // P(χ²₁ > 3.841459) = 0.05
        let c = ChiSquare {
            statistic: 3.841_458_820_694_124,
            dof: 1,
        };
        assert!((c.p_value() - 0.05).abs() < 1e-9);
    }

    #[test]
    fn mean_ci_examples() {
        let s = summary(&[2.0, 2.0, 2.0]);
        assert_eq!(mean_ci(&s, 3.0).unwrap(), (2.0, 2.0));
        let s = summary(&[1.0, 2.0, 6.0]);
        assert_eq!(mean_ci(&s, 0.0).unwrap(), (3.0, 3.0));
        assert!(mean_ci(&summary(&[1.0]), 1.0).is_err());
    }

    #[test]
    fn mean_ci_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let runs = 400;
        let covered = (0..runs)
            .filter(|_| {
                let xs: Vec<f64> = (0..10_000).map(|_| Exp1.sample(&mut rng)).collect();
                let (lo, hi) = mean_ci(&summary(&xs), 3.0).unwrap();
                lo <= 1.0 && 1.0 <= hi
            })
            .count();
        // Nominal coverage 99.73%; allow a few misses.
        assert!(covered >= runs - 6, "{covered}");
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(-0.4))).collect();
        assert!((log_log_slope(&pts).unwrap() + 0.4).abs() < 1e-12);
        assert!(log_log_slope(&pts[..1]).is_err());
    }

    fn normalized(raw: &[f64]) -> BTreeMap<usize, f64> {
        let total: f64 = raw.iter().sum();
        raw.iter().enumerate().map(|(i, v)| (i, v / total)).collect()
    }

    proptest! {
        #[test]
        fn ks_two_sample_symmetric_and_bounded(
            a in prop::collection::vec(-5.0f64..5.0, 1..60),
            b in prop::collection::vec(-5.0f64..5.0, 1..60),
        ) {
            let (a, b) = (summary(&a), summary(&b));
            let d = ks_two_sample(&a, &b);
            prop_assert_eq!(d, ks_two_sample(&b, &a));
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn tv_triangle_inequality(
            a in prop::collection::vec(0.01f64..1.0, 6),
            b in prop::collection::vec(0.01f64..1.0, 6),
            c in prop::collection::vec(0.01f64..1.0, 6),
        ) {
            let (p, q, r) = (normalized(&a), normalized(&b), normalized(&c));
            let pq = tv_distance_discrete(&p, &q).unwrap();
            let qr = tv_distance_discrete(&q, &r).unwrap();
            let pr = tv_distance_discrete(&p, &r).unwrap();
            prop_assert!(pr <= pq + qr + 1e-12);
            prop_assert!((0.0..=1.0).contains(&pq));
        }

        #[test]
        fn ks_one_sample_bounded(xs in prop::collection::vec(0.0f64..1.0, 1..80)) {
            let d = ks_one_sample(&summary(&xs), |x| x.clamp(0.0, 1.0));
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
