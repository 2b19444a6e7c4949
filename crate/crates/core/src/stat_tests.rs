//! Goodness-of-fit tests used by the validation suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs non-empty samples");
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    TestResult {
        statistic: d,
        p_value: ks_p_value(d, n * m / (n + m)),
    }
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> TestResult {
    assert!(!xs.is_empty(), "KS test needs a non-empty sample");
    let v = sorted(xs);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (k, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    TestResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    }
}

/// Chi-square test of homogeneity for two count vectors over the same bins.
/// Bins empty in both samples are dropped.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> TestResult {
    assert_eq!(a.len(), b.len());
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x + y == 0 {
            continue;
        }
        let (x, y) = (x as f64, y as f64);
        stat += (ka * x - kb * y).powi(2) / (x + y);
        bins += 1;
    }
    p_from_chi2(stat, bins.saturating_sub(1))
}

/// Pearson goodness-of-fit of observed counts against expected probabilities.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> TestResult {
    assert_eq!(observed.len(), probs.len());
    let n = observed.iter().sum::<u64>() as f64;
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            assert_eq!(o, 0, "count in a bin of zero probability");
            continue;
        }
        let e = n * p;
        stat += (o as f64 - e).powi(2) / e;
        bins += 1;
    }
    p_from_chi2(stat, bins.saturating_sub(1))
}

fn p_from_chi2(stat: f64, dof: usize) -> TestResult {
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).expect("positive degrees of freedom").sf(stat)
    };
    TestResult { statistic: stat, p_value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_accepts_same_law_and_rejects_shift() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..4000).map(|_| r.random::<f64>()).collect();
        let b: Vec<f64> = (0..4000).map(|_| r.random::<f64>()).collect();
        let c: Vec<f64> = (0..4000).map(|_| r.random::<f64>() + 0.1).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
        assert!(ks_two_sample(&a, &c).p_value < 1e-6);
        assert!(ks_one_sample(&a, |x| x.clamp(0.0, 1.0)).p_value > 0.01);
        assert!(ks_one_sample(&c, |x| x.clamp(0.0, 1.0)).p_value < 1e-6);
    }

    #[test]
    fn ks_statistic_of_disjoint_samples_is_one() {
        let t = ks_two_sample(&[1.0, 2.0], &[3.0, 4.0, 5.0]);
        assert_eq!(t.statistic, 1.0);
    }

    #[test]
    fn kolmogorov_tail_matches_known_quantile() {
        // The 95% quantile of the Kolmogorov distribution is 1.3581.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn chi_square_examples() {
        let t = chi_square_gof(&[50, 50], &[0.5, 0.5]);
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let t = chi_square_gof(&[90, 10], &[0.5, 0.5]);
        assert!((t.statistic - 64.0).abs() < 1e-12);
        assert!(t.p_value < 1e-10);
        assert!(chi_square_two_sample(&[30, 70], &[300, 700]).p_value > 0.99);
        assert!(chi_square_two_sample(&[70, 30], &[300, 700]).p_value < 1e-10);
    }
}
