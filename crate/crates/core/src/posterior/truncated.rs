//! Gamma draws restricted to an interval.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

fn log_density(a: f64, y: f64) -> f64 {
    (a - 1.0) * y.ln() - y - ln_gamma(a)
}

fn lower(a: f64, y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y.is_infinite() {
        1.0
    } else {
        gamma_lr(a, y)
    }
}

fn upper(a: f64, y: f64) -> f64 {
    if y <= 0.0 {
        1.0
    } else if y.is_infinite() {
        0.0
    } else {
        gamma_ur(a, y)
    }
}

/// Exponential with rate `r` truncated to `[0, w]`.
fn truncated_exp<R: Rng + ?Sized>(r: f64, w: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if w.is_infinite() {
        -(1.0 - u).ln() / r
    } else {
        -(u * (-r * w).exp_m1()).ln_1p() / r
    }
}

/// Solves `g(y) = target` on `[lo, hi]` for monotone `g` with derivative
/// `dg`, by Newton steps kept inside a shrinking bracket.
fn solve(g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    let increasing = g(hi) >= g(lo);
    let mut y = 0.5 * (lo + hi);
    for _ in 0..300 {
        let diff = g(y) - target;
        if diff.abs() <= 1e-15 * target {
            return y;
        }
        if (diff > 0.0) == increasing {
            hi = y;
        } else {
            lo = y;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            break;
        }
        let step = y - diff / dg(y);
        y = if step > lo && step < hi && step.is_finite() {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    y
}

/// Draws from Gamma(`shape`, `rate`) restricted to `[lo, hi]`.
///
/// Narrow intervals use uniform rejection; otherwise the CDF (or survival
/// function, above the median) is inverted on the interval; when the
/// interval's mass underflows, a tangent envelope at the near endpoint is
/// used for rejection.
pub fn truncated_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let a = shape;
    let (ylo, yhi) = (rate * lo.max(0.0), rate * hi);
    assert!(a > 0.0 && rate > 0.0 && ylo <= yhi, "invalid truncated Gamma({a}, {rate}) on [{lo}, {hi}]");
    if ylo == 0.0 && yhi.is_infinite() {
        return Gamma::new(a, 1.0 / rate).expect("valid Gamma").sample(rng);
    }
    if ylo == yhi {
        return lo;
    }
    let logf = |y: f64| log_density(a, y);

    if yhi.is_finite() && ylo > 0.0 {
        let mode = (a - 1.0).max(0.0);
        let mut peak = logf(ylo).max(logf(yhi));
        if mode > ylo && mode < yhi {
            peak = peak.max(logf(mode));
        }
        let floor = logf(ylo).min(logf(yhi));
        if peak - floor <= 4f64.ln() {
            loop {
                let y = ylo + rng.random::<f64>() * (yhi - ylo);
                if rng.random::<f64>().ln() <= logf(y) - peak {
                    return y / rate;
                }
            }
        }
    }

    let density = |y: f64| logf(y).exp();
    let y = if ylo >= a {
        let (qlo, qhi) = (upper(a, ylo), upper(a, yhi));
        let mass = qlo - qhi;
        if mass > 1e-280 {
            let target = qhi + rng.random::<f64>() * mass;
            let top = if yhi.is_finite() { yhi } else { bracket_above(|y| upper(a, y) <= target, ylo) };
            solve(|y| upper(a, y), |y| -density(y), target, ylo, top)
        } else {
            upper_tail(a, ylo, yhi, rng)
        }
    } else {
        let (plo, phi) = (lower(a, ylo), lower(a, yhi));
        let mass = phi - plo;
        if mass > 1e-280 {
            let target = plo + rng.random::<f64>() * mass;
            let top = if yhi.is_finite() { yhi } else { bracket_above(|y| lower(a, y) >= target, a) };
            solve(|y| lower(a, y), density, target, ylo, top)
        } else {
            lower_tail(a, ylo, yhi, rng)
        }
    };
    (y / rate).clamp(lo.max(0.0), hi)
}

fn bracket_above(done: impl Fn(f64) -> bool, start: f64) -> f64 {
    let mut y = start.max(1.0) * 2.0;
    while !done(y) {
        y *= 2.0;
    }
    y
}

fn upper_tail<R: Rng + ?Sized>(a: f64, ylo: f64, yhi: f64, rng: &mut R) -> f64 {
    let w = yhi - ylo;
    loop {
        if a >= 1.0 {
            // Log-concave: the tangent at ylo dominates.
            let slope = (a - 1.0) / ylo - 1.0;
            let y = ylo + truncated_exp(-slope, w, rng);
            let excess = log_density(a, y) - (log_density(a, ylo) + slope * (y - ylo));
            if rng.random::<f64>().ln() <= excess {
                return y;
            }
        } else {
            let y = ylo + truncated_exp(1.0, w, rng);
            if rng.random::<f64>().ln() <= (a - 1.0) * (y / ylo).ln() {
                return y;
            }
        }
    }
}

fn lower_tail<R: Rng + ?Sized>(a: f64, ylo: f64, yhi: f64, rng: &mut R) -> f64 {
    let slope = (a - 1.0) / yhi - 1.0;
    loop {
        if a >= 1.0 && slope > 0.0 {
            let y = yhi - truncated_exp(slope, yhi - ylo, rng);
            let excess = log_density(a, y) - (log_density(a, yhi) + slope * (y - yhi));
            if rng.random::<f64>().ln() <= excess {
                return y;
            }
        } else {
            // Density below y^(a-1) e^(-ylo); sample the power law exactly.
            let u: f64 = rng.random();
            let (l, h) = (ylo.powf(a), yhi.powf(a));
            let y = (l + u * (h - l)).powf(1.0 / a);
            if rng.random::<f64>().ln() <= -(y - ylo) {
                return y;
            }
        }
    }
}
