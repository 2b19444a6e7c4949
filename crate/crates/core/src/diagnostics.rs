//! Posterior summaries, effective sample sizes and correlations.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SampleChain;

/// Quantile levels reported for each parameter, in percent.
pub const QUANTILE_LEVELS: [f64; 5] = [2.5, 25.0, 52.0, 75.0, 97.5];

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {need} rows, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("rows have {got} values, expected {expected}")]
    Ragged { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Values at [`QUANTILE_LEVELS`].
    pub quantiles: Vec<f64>,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    pub params: Vec<ParamSummary>,
    pub correlation: Vec<Vec<f64>>,
}

impl Summary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn mean_ess(&self) -> f64 {
        if self.params.is_empty() {
            return 0.0;
        }
        self.params.iter().map(|p| p.ess).sum::<f64>() / self.params.len() as f64
    }

    pub fn min_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min)
    }

    /// Text table: one line per parameter with mean, sd, quantiles and ESS.
    pub fn table(&self) -> String {
        let width = self.params.iter().map(|p| p.name.len()).max().unwrap_or(4).max(9);
        let mut s = String::new();
        let _ = write!(s, "{:<width$} {:>9} {:>9}", "parameter", "mean", "sd");
        for q in QUANTILE_LEVELS {
            let _ = write!(s, " {:>9}", format!("{q}%"));
        }
        let _ = writeln!(s, " {:>9}", "ess");
        for p in &self.params {
            let _ = write!(s, "{:<width$} {:>9.4} {:>9.4}", p.name, p.mean, p.sd);
            for q in &p.quantiles {
                let _ = write!(s, " {q:>9.4}");
            }
            let _ = writeln!(s, " {:>9.0}", p.ess);
        }
        s
    }

    /// Correlation matrix as CSV with a header row and a name column.
    pub fn write_correlation_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let names: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        writeln!(w, ",{}", names.join(","))?;
        for (name, row) in names.iter().zip(&self.correlation) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{name},{}", vals.join(","))?;
        }
        Ok(())
    }
}

/// Mean, shifted by the first value so that constant input is reproduced exactly.
fn mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divisor `n - 1`).
fn sd(xs: &[f64], m: f64) -> f64 {
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Quantile at level `level` in `[0, 1]` by linear interpolation between
/// order statistics at positions `level * (n - 1)`.
pub fn quantile(sorted: &[f64], level: f64) -> f64 {
    let h = level * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Effective sample size `N / (1 + 2 sum rho_l)`, with the autocorrelation sum
/// truncated by Geyer's initial positive sequence rule and lags capped at
/// `N / 10`. A series without variance has ESS `N`; the result never exceeds `N`.
pub fn ess(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return n as f64;
    }
    let m = mean(series);
    let dev: Vec<f64> = series.iter().map(|x| x - m).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return n as f64;
    }
    let rho = |lag: usize| dev[..n - lag].iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * c0);
    let max_lag = (n / 10).max(1);
    // Pairs Gamma_k = rho_{2k} + rho_{2k+1}, summed while positive.
    let mut sum = -1.0;
    let mut k = 0;
    while 2 * k + 1 <= max_lag {
        let g = if k == 0 { 1.0 } else { rho(2 * k) } + rho(2 * k + 1);
        if g <= 0.0 {
            break;
        }
        sum += 2.0 * g;
        k += 1;
    }
    let tau = sum.max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}

/// Pearson correlations between columns. A column without variance gets
/// zero correlation with every other column (and 1 with itself).
pub fn correlation_matrix(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = columns.len();
    let centred: Vec<(Vec<f64>, f64)> = columns
        .iter()
        .map(|c| {
            let m = mean(c);
            let d: Vec<f64> = c.iter().map(|x| x - m).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            (d, norm)
        })
        .collect();
    let mut out = vec![vec![0.0; k]; k];
    for a in 0..k {
        out[a][a] = 1.0;
        if !(centred[a].1 > 0.0) {
            log::warn!("column {a} has no variance; its correlations are reported as 0");
        }
        for b in 0..a {
            let (da, na) = &centred[a];
            let (db, nb) = &centred[b];
            let r = if *na > 0.0 && *nb > 0.0 {
                (da.iter().zip(db).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out[a][b] = r;
            out[b][a] = r;
        }
    }
    out
}

/// Summary of named columns.
pub fn summarize_columns(names: &[String], columns: &[Vec<f64>]) -> Result<Summary, DiagnosticsError> {
    let rows = columns.first().map_or(0, Vec::len);
    if rows < 2 {
        return Err(DiagnosticsError::TooShort { need: 2, got: rows });
    }
    if let Some(c) = columns.iter().find(|c| c.len() != rows) {
        return Err(DiagnosticsError::Ragged {
            expected: rows,
            got: c.len(),
        });
    }
    let params = names
        .iter()
        .zip(columns)
        .map(|(name, col)| {
            let m = mean(col);
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            ParamSummary {
                name: name.clone(),
                mean: m,
                sd: sd(col, m),
                quantiles: QUANTILE_LEVELS.iter().map(|q| quantile(&sorted, q / 100.0)).collect(),
                ess: ess(col),
            }
        })
        .collect();
    Ok(Summary {
        rows,
        params,
        correlation: correlation_matrix(columns),
    })
}

pub fn summarize(chain: &SampleChain) -> Result<Summary, DiagnosticsError> {
    if let Some(r) = chain.rows.iter().find(|r| r.len() != chain.names.len()) {
        return Err(DiagnosticsError::Ragged {
            expected: chain.names.len(),
            got: r.len(),
        });
    }
    summarize_columns(&chain.names, &chain.columns())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| r.sample(StandardNormal)).collect()
    }

    fn chain_of(cols: &[Vec<f64>]) -> SampleChain {
        SampleChain {
            names: (0..cols.len()).map(|k| format!("x{k}")).collect(),
            rows: (0..cols[0].len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect(),
            kept: (0..cols[0].len()).collect(),
            trace: vec![],
        }
    }

    #[test]
    fn constant_chain() {
        let s = summarize(&chain_of(&[vec![0.3; 50]])).unwrap();
        let p = &s.params[0];
        assert!((p.mean - 0.3).abs() < 1e-15);
        assert_eq!(p.sd, 0.0);
        assert!(p.quantiles.iter().all(|q| (q - 0.3).abs() < 1e-15));
        assert_eq!(p.ess, 50.0);
        assert_eq!(s.correlation, vec![vec![1.0]]);
    }

    #[test]
    fn tenths_have_mean_055() {
        let col: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        let s = summarize(&chain_of(&[col])).unwrap();
        assert!((s.params[0].mean - 0.55).abs() < 1e-12);
        // Position 0.52 * 9 = 4.68 between 0.5 and 0.6.
        assert!((s.params[0].quantiles[2] - 0.568).abs() < 1e-12);
    }

    #[test]
    fn short_or_ragged_chains_are_rejected() {
        assert_eq!(summarize(&chain_of(&[vec![1.0]])), Err(DiagnosticsError::TooShort { need: 2, got: 1 }));
        let mut c = chain_of(&[vec![1.0, 2.0]]);
        c.rows[1].push(3.0);
        assert!(matches!(summarize(&c), Err(DiagnosticsError::Ragged { .. })));
    }

    #[test]
    fn ess_of_iid_normals_is_about_n() {
        let e = ess(&normals(10_000, 1));
        assert!((e - 10_000.0).abs() < 1_000.0, "{e}");
    }

    #[test]
    fn ess_of_ar1_matches_analytic_factor() {
        let rho = 0.5;
        let z = normals(100_000, 2);
        let mut x = vec![0.0; z.len()];
        for i in 1..z.len() {
            x[i] = rho * x[i - 1] + z[i];
        }
        let want = 100_000.0 * (1.0 - rho) / (1.0 + rho);
        let e = ess(&x);
        assert!((e - want).abs() < 0.1 * want, "{e} vs {want}");
    }

    #[test]
    fn constant_series_has_full_ess() {
        assert_eq!(ess(&[2.0; 40]), 40.0);
    }

    #[test]
    fn correlation_examples() {
        let a = normals(100_000, 3);
        let b = normals(100_000, 4);
        let c = vec![1.0; 100_000];
        let m = correlation_matrix(&[a.clone(), a.clone(), b, c]);
        assert!((m[0][1] - 1.0).abs() < 1e-12);
        assert!(m[0][2].abs() < 0.01 && m[1][2].abs() < 0.01);
        assert_eq!(m[3][0], 0.0);
        assert_eq!(m[3][3], 1.0);
    }

    #[test]
    fn table_and_csv_layout() {
        let s = summarize(&chain_of(&[normals(20, 5), normals(20, 6)])).unwrap();
        let t = s.table();
        assert!(t.lines().next().unwrap().contains("52%"));
        assert_eq!(t.lines().count(), 3);
        let mut buf = Vec::new();
        s.write_correlation_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some(",x0,x1"));
    }

    proptest! {
        #[test]
        fn summary_invariants(
            cols in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 12..60), 1..4),
            seed in any::<u64>(),
        ) {
            let n = cols.iter().map(Vec::len).min().unwrap();
            let cols: Vec<Vec<f64>> = cols.into_iter().map(|c| c[..n].to_vec()).collect();
            let s = summarize(&chain_of(&cols)).unwrap();
            for p in &s.params {
                prop_assert!(p.quantiles.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(p.ess <= n as f64 && p.ess > 0.0);
            }
            let k = cols.len();
            for a in 0..k {
                prop_assert!((s.correlation[a][a] - 1.0).abs() <= 1e-12);
                for b in 0..k {
                    prop_assert!((s.correlation[a][b] - s.correlation[b][a]).abs() <= 1e-12);
                }
            }
            let m = DMatrix::from_fn(k, k, |a, b| s.correlation[a][b]);
            prop_assert!(SymmetricEigen::new(m).eigenvalues.min() > -1e-8);

            // Row order does not change anything but ESS.
            let mut perm: Vec<usize> = (0..n).collect();
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..n).rev() {
                perm.swap(i, r.random_range(0..=i));
            }
            let shuffled: Vec<Vec<f64>> = cols.iter().map(|c| perm.iter().map(|&i| c[i]).collect()).collect();
            let t = summarize(&chain_of(&shuffled)).unwrap();
            for (p, q) in s.params.iter().zip(&t.params) {
                prop_assert!((p.mean - q.mean).abs() <= 1e-9 * (1.0 + p.mean.abs()));
                prop_assert!((p.sd - q.sd).abs() <= 1e-9 * (1.0 + p.sd));
                prop_assert_eq!(&p.quantiles, &q.quantiles);
            }
        }
    }

    #[test]
    fn shuffled_input_has_ess_near_n() {
        let mut x: Vec<f64> = (0..10_000).map(|i| (i as f64 / 500.0).sin()).collect();
        let mut r = ChaCha8Rng::seed_from_u64(9);
        for i in (1..x.len()).rev() {
            x.swap(i, r.random_range(0..=i));
        }
        let e = ess(&x);
        assert!((e - 10_000.0).abs() < 1_000.0, "{e}");
    }
}
