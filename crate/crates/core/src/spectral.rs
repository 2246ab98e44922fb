//! Harmonic-trap Gibbs semigroup: kernels, spectrum and eigenfunctions.
//!
//! The one-particle Hamiltonian is the oscillator with confinement
//! `|x|^2 / (2 kappa^2)`; its Gibbs operator `G = exp(-beta h)` has level
//! `m` eigenvalue `exp(-beta m / kappa)` with degeneracy `C(m+d-1, d-1)`.

use crate::error::{domain, Result};
use crate::special::degeneracy;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapParams {
    pub kappa: f64,
    pub beta: f64,
    pub dim: usize,
}

impl TrapParams {
    pub fn new(kappa: f64, beta: f64, dim: usize) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return domain(format!("kappa must be positive, got {kappa}"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return domain(format!("beta must be positive, got {beta}"));
        }
        if dim == 0 {
            return domain("dimension must be at least 1");
        }
        Ok(Self { kappa, beta, dim })
    }

    /// `exp(-beta / kappa)`, the ratio of successive eigenvalues.
    pub fn level_ratio(&self) -> f64 {
        (-self.beta / self.kappa).exp()
    }

    /// `kappa^d`, the effective volume.
    pub fn volume(&self) -> f64 {
        self.kappa.powi(self.dim as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenLevel {
    pub level: u64,
    pub energy: f64,
    pub eigenvalue: f64,
    pub degeneracy: u64,
}

/// Truncation of the level sum at `max_level` with a certified bound on the
/// discarded trace mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTruncation {
    pub max_level: u64,
    pub tail_bound: f64,
}

/// Relative tail tolerance used by [`SpectrumTruncation::adaptive`].
pub const DEFAULT_TAIL_RTOL: f64 = 1e-12;

impl SpectrumTruncation {
    /// Geometric majorant of `sum_{m > M} C(m+d-1, d-1) q^m`.
    ///
    /// Successive terms have ratio `q (m+d)/(m+1)`, decreasing in `m`, so the
    /// tail is bounded by its first term over `1 - q (M+1+d)/(M+2)`.
    pub fn with_max_level(trap: &TrapParams, max_level: u64) -> Self {
        let q = trap.level_ratio();
        let d = trap.dim as f64;
        let m1 = (max_level + 1) as f64;
        let ratio = q * (m1 + d) / (m1 + 1.0);
        let tail_bound = if ratio < 1.0 {
            (ln_degeneracy(max_level + 1, trap.dim) + m1 * q.ln()).exp() / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
        Self { max_level, tail_bound }
    }

    /// Smallest `M` whose tail bound is below `rtol` times the retained trace.
    pub fn adaptive(trap: &TrapParams, rtol: f64) -> Self {
        let q = trap.level_ratio();
        let mut retained = 0.0;
        let mut m = 0u64;
        loop {
            retained += (ln_degeneracy(m, trap.dim) + m as f64 * q.ln()).exp();
            let t = Self::with_max_level(trap, m);
            if t.tail_bound < rtol * retained {
                return t;
            }
            m += 1;
        }
    }
}

fn ln_degeneracy(m: u64, d: usize) -> f64 {
    let mut s = 0.0;
    for i in 1..d {
        s += ((m as f64 + i as f64) / i as f64).ln();
    }
    s
}

/// Eigenvalues and degeneracies of `G` up to a truncation, as flat arrays.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub trap: TrapParams,
    pub trunc: SpectrumTruncation,
    pub eigenvalues: Vec<f64>,
    pub degeneracies: Vec<f64>,
}

impl Spectrum {
    pub fn new(trap: &TrapParams, trunc: SpectrumTruncation) -> Self {
        let q = trap.level_ratio();
        let n = trunc.max_level as usize + 1;
        let mut eigenvalues = Vec::with_capacity(n);
        let mut degeneracies = Vec::with_capacity(n);
        for m in 0..n as u64 {
            eigenvalues.push(q.powf(m as f64));
            degeneracies.push(degeneracy(m, trap.dim) as f64);
        }
        Self { trap: *trap, trunc, eigenvalues, degeneracies }
    }

    pub fn adaptive(trap: &TrapParams) -> Self {
        Self::new(trap, SpectrumTruncation::adaptive(trap, DEFAULT_TAIL_RTOL))
    }

    /// `sum_m deg_m f(g_m)` over retained levels.
    pub fn sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.degeneracies)
            .map(|(g, d)| d * f(*g))
            .sum()
    }

    /// Same as [`Self::sum`] but skipping the ground level.
    pub fn sum_excited(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.degeneracies)
            .skip(1)
            .map(|(g, d)| d * f(*g))
            .sum()
    }
}

/// Exact level list `0..=M`.
pub fn spectrum_levels(trap: &TrapParams, trunc: &SpectrumTruncation) -> Vec<EigenLevel> {
    let q = trap.level_ratio();
    (0..=trunc.max_level)
        .map(|m| EigenLevel {
            level: m,
            energy: m as f64 / trap.kappa,
            eigenvalue: q.powf(m as f64),
            degeneracy: degeneracy(m, trap.dim),
        })
        .collect()
}

/// `Tr G = (1 - exp(-beta/kappa))^(-d)`.
pub fn trace_gibbs(trap: &TrapParams) -> f64 {
    (-(-trap.beta / trap.kappa).exp_m1()).powi(-(trap.dim as i32))
}

/// Coefficients of the one-dimensional Mehler factor at time `t`:
/// `pref * exp(-a (x^2 + y^2) - b (x - y)^2)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MehlerFactor {
    pub pref: f64,
    pub a: f64,
    pub b: f64,
}

impl MehlerFactor {
    pub fn new(kappa: f64, t: f64) -> Self {
        let u = t / kappa;
        Self {
            pref: (PI * kappa * -(-2.0 * u).exp_m1()).powf(-0.5),
            a: (0.5 * u).tanh() / (2.0 * kappa),
            b: 1.0 / (2.0 * kappa * u.sinh()),
        }
    }

    pub fn exponent(&self, x: f64, y: f64) -> f64 {
        -self.a * (x * x + y * y) - self.b * (x - y) * (x - y)
    }
}

fn check_points(x: &[f64], y: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim || y.len() != dim {
        return domain(format!("points must have {dim} coordinates"));
    }
    Ok(())
}

/// Mehler kernel `G_kappa(t; x, y)`: the integral kernel of `exp(-t h)`.
pub fn mehler_kernel(trap: &TrapParams, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("kernel time must be positive, got {t}"));
    }
    check_points(x, y, trap.dim)?;
    let m = MehlerFactor::new(trap.kappa, t);
    let e: f64 = x.iter().zip(y).map(|(a, b)| m.exponent(*a, *b)).sum();
    Ok(m.pref.powi(trap.dim as i32) * e.exp())
}

/// Free heat kernel `(2 pi beta)^(-d/2) exp(-|x-y|^2 / (2 beta))`.
pub fn heat_kernel(beta: f64, dim: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(beta > 0.0) {
        return domain(format!("beta must be positive, got {beta}"));
    }
    check_points(x, y, dim)?;
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((2.0 * PI * beta).powf(-(dim as f64) / 2.0) * (-r2 / (2.0 * beta)).exp())
}

/// Normalized ground state `(pi kappa)^(-d/4) exp(-|x|^2 / (2 kappa))`.
pub fn ground_state(trap: &TrapParams, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (PI * trap.kappa).powf(-(trap.dim as f64) / 4.0) * (-r2 / (2.0 * trap.kappa)).exp()
}

/// Normalized Hermite function `phi_s(x)` of the unit oscillator.
///
/// Runs the three-term recurrence from `phi_0 = 1` and carries the Gaussian
/// envelope as a separate log-scale, so large `|x|` does not underflow.
pub fn eigenfunction_1d(s: usize, x: f64) -> f64 {
    let mut log_scale = -0.5 * x * x - 0.25 * PI.ln();
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..s {
        let kf = k as f64;
        let next = x * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        let a = cur.abs();
        if a > 1e150 {
            cur /= 1e150;
            prev /= 1e150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        } else if a < 1e-150 && a > 0.0 && prev.abs() < 1e-150 {
            cur *= 1e150;
            prev *= 1e150;
            log_scale -= 150.0 * std::f64::consts::LN_10;
        }
    }
    cur * log_scale.exp()
}

/// Values `phi_0(x), ..., phi_smax(x)` in one recurrence pass.
pub fn eigenfunctions_1d_upto(smax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(smax + 1);
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(cur);
    for k in 0..smax {
        let kf = k as f64;
        let next = x * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        out.push(cur);
    }
    out
}

/// Trap eigenfunction `prod_k kappa^(-1/4) phi_(s_k)(x_k / sqrt(kappa))`.
pub fn eigenfunction_trap(trap: &TrapParams, s: &[usize], x: &[f64]) -> f64 {
    let sk = trap.kappa.sqrt();
    s.iter()
        .zip(x)
        .map(|(&n, &v)| trap.kappa.powf(-0.25) * eigenfunction_1d(n, v / sk))
        .product()
}

/// Which semigroup a resolvent or kernel power is taken from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpace {
    Trap(TrapParams),
    Flat { beta: f64, dim: usize },
}

impl KernelSpace {
    pub fn dim(&self) -> usize {
        match self {
            KernelSpace::Trap(t) => t.dim,
            KernelSpace::Flat { dim, .. } => *dim,
        }
    }
    pub fn beta(&self) -> f64 {
        match self {
            KernelSpace::Trap(t) => t.beta,
            KernelSpace::Flat { beta, .. } => *beta,
        }
    }

    /// Kernel of the `n`-th power of the one-step operator.
    pub fn power_kernel(&self, n: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            KernelSpace::Trap(t) => mehler_kernel(t, n as f64 * t.beta, x, y),
            KernelSpace::Flat { beta, dim } => heat_kernel(n as f64 * beta, *dim, x, y),
        }
    }

    /// Upper bound of the `n`-th power kernel over all pairs of points
    /// (Cauchy-Schwarz against the diagonal).
    pub fn power_sup(&self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            KernelSpace::Trap(t) => {
                (PI * t.kappa * -(-2.0 * nf * t.beta / t.kappa).exp_m1()).powf(-(t.dim as f64) / 2.0)
            }
            KernelSpace::Flat { beta, dim } => (2.0 * PI * nf * beta).powf(-(*dim as f64) / 2.0),
        }
    }
}

/// `sum_{n>=1} r^n G^n(x, y)` summed until the certified tail is below `tol`.
///
/// The powers are nonincreasing in `n` on the diagonal bound, so the tail
/// after `N` terms is at most `sup G^(N+1) r^(N+1) / (1 - r)`.
pub fn resolvent_kernel(r: f64, space: &KernelSpace, x: &[f64], y: &[f64], tol: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("resolvent parameter must lie in (0, 1), got {r}"));
    }
    check_points(x, y, space.dim())?;
    let mut sum = 0.0;
    let mut rn = 1.0;
    let mut n = 1;
    loop {
        rn *= r;
        sum += rn * space.power_kernel(n, x, y)?;
        if space.power_sup(n + 1) * rn * r / (1.0 - r) < tol {
            return Ok(sum);
        }
        n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mehler_origin_value() {
        let t = TrapParams::new(1.0, 1.0, 1).unwrap();
        let v = mehler_kernel(&t, 1.0, &[0.0], &[0.0]).unwrap();
        assert!((v - (PI * (1.0 - (-2.0f64).exp())).powf(-0.5)).abs() < 1e-15);
        assert!((v - 0.606737998837383).abs() < 1e-14);
    }

    #[test]
    fn heat_kernel_values() {
        let v = heat_kernel(1.0, 3, &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]).unwrap();
        assert!((v - 0.0634936359342410).abs() < 1e-15);
        let w = heat_kernel(1.0, 1, &[0.0], &[1.0]).unwrap();
        assert!((w - (2.0 * PI).powf(-0.5) * (-0.5f64).exp()).abs() < 1e-16);
        assert!(heat_kernel(0.0, 1, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn ground_state_origin() {
        let t = TrapParams::new(1.0, 1.0, 1).unwrap();
        assert!((ground_state(&t, &[0.0]) - 0.7511255444649425).abs() < 1e-15);
    }

    #[test]
    fn hermite_low_orders() {
        for &x in &[-2.0, -0.3, 0.0, 1.7] {
            let h0 = PI.powf(-0.25) * (-x * x / 2.0f64).exp();
            assert!((eigenfunction_1d(0, x) - h0).abs() < 1e-15);
            assert!((eigenfunction_1d(1, x) - 2f64.sqrt() * x * h0).abs() < 1e-15);
            let h2 = (2.0 * x * x - 1.0) / 2f64.sqrt() * h0;
            assert!((eigenfunction_1d(2, x) - h2).abs() < 1e-15);
        }
        assert_eq!(eigenfunction_1d(1, 0.0), 0.0);
        let all = eigenfunctions_1d_upto(6, 0.8);
        for (s, v) in all.iter().enumerate() {
            assert!((v - eigenfunction_1d(s, 0.8)).abs() < 1e-14);
        }
    }

    #[test]
    fn hermite_large_argument_does_not_underflow() {
        // far outside the Gaussian but inside the classical region of s
        let v = eigenfunction_1d(2000, 50.0);
        assert!(v.is_finite() && v != 0.0);
        assert!(v.abs() < 1.0);
    }

    #[test]
    fn trace_and_levels() {
        let t = TrapParams::new(1.0, 1.0, 3).unwrap();
        assert!((trace_gibbs(&t) - 3.95913448174351).abs() < 1e-13);
        let t1 = TrapParams::new(1.0, 2f64.ln(), 1).unwrap();
        assert!((trace_gibbs(&t1) - 2.0).abs() < 1e-14);
        let tr = SpectrumTruncation::with_max_level(&t, 40);
        let lv = spectrum_levels(&t, &tr);
        assert_eq!(lv[2].degeneracy, 6);
        let total: u64 = lv.iter().map(|l| l.degeneracy).sum();
        assert_eq!(total, crate::special::degeneracy(40, 4));
        let kept: f64 = lv.iter().map(|l| l.degeneracy as f64 * l.eigenvalue).sum();
        let exact = trace_gibbs(&t);
        // rounding slack only: the tail itself is about 1e-15 here
        assert!(kept <= exact * (1.0 + 1e-14) && kept + tr.tail_bound >= exact * (1.0 - 1e-14));
    }

    #[test]
    fn resolvent_flat_diagonal() {
        let v = resolvent_kernel(0.5, &KernelSpace::Flat { beta: 1.0, dim: 3 }, &[0.0; 3], &[0.0; 3], 1e-15)
            .unwrap();
        // independent: sum 0.5^n (2 pi n)^(-3/2) to 200 terms
        let oracle: f64 = (1..200).map(|n| 0.5f64.powi(n) * (2.0 * PI * n as f64).powf(-1.5)).sum();
        assert!((v - oracle).abs() < 1e-14);
        assert!((v - 0.039674).abs() < 1e-6);
        assert!(resolvent_kernel(1.0, &KernelSpace::Flat { beta: 1.0, dim: 3 }, &[0.0; 3], &[0.0; 3], 1e-9).is_err());
    }
}
