//! Elementary inequalities used to bound kernels and determinants, checked
//! pointwise on log-spaced grids.
//!
//! Each check evaluates both sides with cancellation-free formulas and
//! counts grid points where the left side exceeds the right one.

use serde::Serialize;
use std::f64::consts::E;

/// Points per inequality.
pub const GRID_POINTS: usize = 200;

/// Outcome of one inequality on its grid.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub domain: &'static str,
    pub points: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` over the grid (over every link of a chain).
    pub min_margin: f64,
    /// Where the smallest margin occurs.
    pub argmin: f64,
}

impl InequalityCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `n` points with logarithms equally spaced between `ln lo` and `ln hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

fn run(name: &'static str, domain: &'static str, xs: &[f64], chain: impl Fn(f64) -> Vec<f64>) -> InequalityCheck {
    run_at(name, domain, xs, |x| x, chain)
}

fn run_at<P: Copy>(
    name: &'static str,
    domain: &'static str,
    xs: &[P],
    first: impl Fn(P) -> f64,
    chain: impl Fn(P) -> Vec<f64>,
) -> InequalityCheck {
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    let mut argmin = f64::NAN;
    for &p in xs {
        let x = first(p);
        let c = chain(p);
        let mut bad = false;
        for w in c.windows(2) {
            let m = w[1] - w[0];
            if !(m >= 0.0) {
                bad = true;
            }
            if m < min_margin || min_margin.is_nan() {
                min_margin = m;
                argmin = x;
            }
        }
        if bad {
            violations += 1;
        }
    }
    InequalityCheck { name, domain, points: xs.len(), violations, min_margin, argmin }
}

/// `2x / (1 - e^(-2x))`.
fn g(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        2.0 * x / -(-2.0 * x).exp_m1()
    }
}

/// Relative allowance added to the sharp constants, which are attained at
/// the end of the interval and would otherwise be decided by rounding.
const SHARP_SLACK: f64 = 1e-12;

/// `A` with `(2x / (1 - e^(-2x)))^(d/2) - 1 <= A x` on `[0, 1]`.
///
/// For `d >= 2` the left side is convex and vanishes at 0, so the chord
/// through `x = 1` bounds it; for `d = 1`, `sqrt(g) - 1 <= (g - 1)/2` and
/// `g` itself is convex. The sharp value is inflated by [`SHARP_SLACK`].
pub fn kei2_constant(dim: usize) -> f64 {
    let g1 = g(1.0);
    let sharp = if dim >= 2 { g1.powf(dim as f64 / 2.0) - 1.0 } else { 0.5 * (g1 - 1.0) };
    sharp * (1.0 + SHARP_SLACK)
}

/// `B` with `(1 - e^(-2x))^(-d/2) - 1 <= B e^(-2x)` for `x >= 1`:
/// the left side is convex in `t = e^(-2x)` and vanishes at `t = 0`.
pub fn kei3_constant(dim: usize) -> f64 {
    let t = (-2.0f64).exp();
    ((1.0 - t).powf(-(dim as f64) / 2.0) - 1.0) / t * (1.0 + SHARP_SLACK)
}

/// All inequalities for a given dimension (only `kei2`/`kei3` depend on it).
pub fn check_all(dim: usize) -> Vec<InequalityCheck> {
    let n = GRID_POINTS;
    let half = dim as f64 / 2.0;
    let pos = log_grid(1e-6, 1e3, n);
    let unit = log_grid(1e-6, 1.0, n);
    let tail = log_grid(1.0, 1e3, n);
    let a = kei2_constant(dim);
    let b = kei3_constant(dim);
    // x paired with the ratio y / x, log-spaced in [1, 1e3] in reverse order
    let pairs: Vec<(f64, f64)> = pos.iter().copied().zip(log_grid(1.0, 1e3, n).into_iter().rev()).collect();
    // x in [0, 1): half near 0, half accumulating at 1
    let mut below_one = log_grid(1e-6, 0.5, n / 2);
    below_one.extend(log_grid(1e-6, 0.5, n - n / 2).into_iter().rev().map(|t| 1.0 - t));
    vec![
        run("kei1", "x > 0", &pos, |x| vec![x / -(-x).exp_m1(), 1.0 + x, (2.0f64).max(2.0 * x)]),
        run("kei2", "x in [0, 1]", &unit, |x| {
            // (g^(d/2) - 1) via expm1 of the logarithm
            let v = (half * (g(x)).ln()).exp_m1();
            vec![0.0, v, a * x]
        }),
        run("kei3", "x >= 1", &tail, |x| {
            let t = (-2.0 * x).exp();
            let v = (-half * (-t).ln_1p()).exp_m1();
            vec![0.0, v, b * t]
        }),
        run("exp1", "x >= 0", &pos, |x| vec![-(-x).exp_m1(), x]),
        run_at("exp2", "0 < x <= y", &pairs, |(x, _)| x, |(x, s)| {
            // y = x s; e^(-x) - e^(-y) = e^(-x) (1 - e^(-(y - x)))
            vec![(-x).exp() * -(-(x * (s - 1.0))).exp_m1(), (s - 1.0) / E]
        }),
        run("th1", "x >= 0", &pos, |x| vec![x.tanh(), x.min(1.0)]),
        run("th2", "x >= 1", &tail, |x| {
            let t = (-2.0 * x).exp();
            vec![2.0 * t / (1.0 - t), 2.0 * E / (E - 1.0) * (-x).exp()]
        }),
        run("sh1", "x in [0, 1]", &unit, |x| vec![1.0, x.sinh() / x, 1.0 + x * x]),
        run("sh2", "x >= 1", &tail, |x| {
            let t = (-2.0 * x).exp();
            vec![2.0 * (-x).exp() / (1.0 - t), 2.0 / (1.0 - (-2.0f64).exp()) * (-x).exp()]
        }),
        run("log1", "x in [0, 1)", &below_one, |x| vec![(-(-x).ln_1p() - x).abs(), x * x / (2.0 * (1.0 - x))]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_inequality_holds_on_its_grid() {
        for d in 1..=4 {
            for c in check_all(d) {
                assert!(c.passed(), "d={d}: {c:?}");
                assert_eq!(c.points, GRID_POINTS);
            }
        }
    }

    #[test]
    fn kei1_at_one() {
        let v = 1.0 / -(-1.0f64).exp_m1();
        assert!((v - 1.5819767068693265).abs() < 1e-15);
    }

    #[test]
    fn constants_are_sharp() {
        // equality at the chord end points, up to the rounding allowance
        for d in 1..=4 {
            let half = d as f64 / 2.0;
            if d >= 2 {
                assert!(((g(1.0).powf(half) - 1.0) / kei2_constant(d) - 1.0).abs() < 2e-12);
            }
            let t = (-2.0f64).exp();
            assert!((((1.0 - t).powf(-half) - 1.0) / (kei3_constant(d) * t) - 1.0).abs() < 2e-12);
        }
    }

    #[test]
    fn log_bound_fails_for_negative_arguments() {
        // the x^2 / 2(1 - x) bound only holds for x in [0, 1)
        let x: f64 = -1.0;
        let lhs = (-(-x).ln_1p() - x).abs();
        assert!(lhs > x * x / (2.0 * (1.0 - x)));
        assert!(lhs <= x * x / 2.0);
    }
}
