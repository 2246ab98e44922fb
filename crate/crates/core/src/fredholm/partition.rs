//! Grand-canonical partition function: brute-force sum over particle
//! numbers, the Gaussian-linearised contour integral, the residue at the
//! top eigenvalue, and the two saddle-point asymptotics.

use super::nystrom::{complete_homogeneous, log_complete_homogeneous, PowerSums};
use super::testfn::TestFunction;
use super::trapgrid::TrapGrid;
use crate::error::{domain, Error, Result};
use crate::meanfield::{classify_phase, solve_fixed_point, PhaseLabel, CRITICAL_BAND};
use crate::quadrature::{integrate_adaptive, GridQuadrature};
use crate::special::{log_sum_exp, zeta};
use crate::spectral::{Spectrum, SpectrumTruncation, TrapParams};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Relative size of the certified tail beyond `n_max` that is accepted.
pub const TAIL_RTOL: f64 = 1e-12;

pub(crate) fn check_coupling(mu: f64, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("mean-field coupling must be positive, got {lambda}"));
    }
    if !mu.is_finite() {
        return domain("mu must be finite");
    }
    Ok(())
}

/// `ln Det(1 - rho G)` over the spectrum (`rho < 1`).
fn log_det_trap(spec: &Spectrum, rho: f64) -> f64 {
    spec.sum(|g| (-rho * g).ln_1p())
}

/// `sum_{m>=1} deg ln(1 - z g_m)`, the determinant with the ground level removed.
pub(crate) fn log_det_q(spec: &Spectrum, z: f64) -> f64 {
    spec.sum_excited(|g| (-z * g).ln_1p())
}

/// `ln h_n`, in log space when every power sum is positive (always so for
/// the trap) and otherwise from the direct recursion.
pub(crate) fn log_h(psums: &PowerSums, n: usize) -> Result<Vec<f64>> {
    match log_complete_homogeneous(psums, n) {
        Ok(lh) => Ok(lh),
        Err(_) => Ok(complete_homogeneous(psums, n)?
            .iter()
            .map(|h| if *h > 0.0 { h.ln() } else { f64::NEG_INFINITY })
            .collect()),
    }
}

/// `ln(e^(beta mu n - beta lambda n^2 / 2 kappa^d) h_n)` for `n = 0..=n_max`,
/// after checking that the tail beyond `n_max` is below [`TAIL_RTOL`].
///
/// The tail uses `h_n rho^n <= 1/Det(1 - rho G)` for any `rho < 1`, which
/// also holds for the `f`-modified operator since it is dominated by `G`.
pub(crate) fn number_log_weights(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    psums: &PowerSums,
    n_max: usize,
) -> Result<Vec<f64>> {
    check_coupling(mu, lambda)?;
    let lh = log_h(psums, n_max)?;
    let b = trap.beta * lambda / (2.0 * trap.volume());
    let bm = trap.beta * mu;
    let lw: Vec<f64> = lh
        .iter()
        .enumerate()
        .map(|(n, lhn)| {
            let nf = n as f64;
            bm * nf - b * nf * nf + lhn
        })
        .collect();
    let total = log_sum_exp(&lw);
    let spec = Spectrum::adaptive(trap);
    let mut best = f64::INFINITY;
    for rho in [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99] {
        let ld = log_det_trap(&spec, rho);
        let n1 = (n_max + 1) as f64;
        let log_ratio = bm - b * (2.0 * n1 + 1.0) - rho.ln();
        if log_ratio >= 0.0 {
            continue;
        }
        let log_first = bm * n1 - b * n1 * n1 - n1 * rho.ln() - ld;
        best = best.min(log_first - (-log_ratio.exp()).ln_1p());
    }
    if !(best - total < TAIL_RTOL.ln()) {
        return Err(Error::Truncation(format!(
            "n_max = {n_max} leaves a tail bound of exp({:.3}) relative to the partial sum",
            best - total
        )));
    }
    Ok(lw)
}

/// Power sums `Tr (G e^(-f))^k`, `k = 1..=n_max`.
///
/// With `A_a = U G^a U` and `U = sqrt(w (1 - e^(-f)))`,
/// `-ln Det(1 + sum_a z^a A_a) = sum_k z^k (p~_k - p_k) / k`, so
/// `p~_k = p_k - sum_{a=1}^k a Tr[C_(k-a) A_a]` with `C` the coefficients of
/// `(1 + A(z))^(-1)`.
pub fn modified_power_sums(
    trap: &TrapParams,
    f: &TestFunction,
    grid: &GridQuadrature,
    n_max: usize,
) -> Result<PowerSums> {
    let base = PowerSums::trap(trap, n_max);
    let tg = TrapGrid::new(trap, f, grid)?;
    let n = tg.len();
    if n == 0 {
        return Ok(base);
    }
    let a: Vec<DMatrix<f64>> = (1..=n_max).map(|k| tg.kernel_matrix(k, false)).collect();
    let mut c: Vec<DMatrix<f64>> = vec![DMatrix::identity(n, n)];
    let mut p = Vec::with_capacity(n_max);
    for k in 1..=n_max {
        let mut corr = 0.0;
        for j in 1..=k {
            corr += j as f64 * c[k - j].dot(&a[j - 1]);
        }
        p.push(base.get(k) - corr);
        let mut next = DMatrix::zeros(n, n);
        for j in 1..=k {
            next -= &a[j - 1] * &c[k - j];
        }
        c.push(next);
    }
    Ok(PowerSums::new(p))
}

/// `ln Xi` by summing `e^(beta mu n - beta lambda n^2 / 2 kappa^d) h_n` to
/// `n_max`; with `f` the power sums are those of `G^(1/2) e^(-f) G^(1/2)`.
pub fn log_xi_bruteforce(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    f: Option<(&TestFunction, &GridQuadrature)>,
    n_max: usize,
) -> Result<f64> {
    let ps = match f {
        None => PowerSums::trap(trap, n_max),
        Some((f, g)) => modified_power_sums(trap, f, g, n_max)?,
    };
    Ok(log_sum_exp(&number_log_weights(trap, mu, lambda, &ps, n_max)?))
}

pub fn xi_bruteforce(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    f: Option<(&TestFunction, &GridQuadrature)>,
    n_max: usize,
) -> Result<f64> {
    Ok(log_xi_bruteforce(trap, mu, lambda, f, n_max)?.exp())
}

/// Smallest `n_max` whose certified tail passes, searched upwards from a
/// guess around the mean-field particle number.
pub fn default_n_max(trap: &TrapParams, mu: f64, lambda: f64) -> Result<usize> {
    check_coupling(mu, lambda)?;
    let fp = solve_fixed_point(trap, mu, lambda, None, 1e-12)?;
    let spread = (trap.volume() / (trap.beta * lambda)).sqrt();
    let mut n = (fp.s + 10.0 * spread + 10.0).ceil() as usize;
    let ps = PowerSums::trap(trap, 4 * n + 64);
    for _ in 0..200 {
        if n > ps.len() {
            break;
        }
        if number_log_weights(trap, mu, lambda, &ps, n).is_ok() {
            return Ok(n);
        }
        n += n / 4 + 4;
    }
    Err(Error::Truncation("no n_max found with a certified tail".into()))
}

/// Gaussian window on the real line: `exp(-i s x - a x^2)`, periodised over
/// `2 pi` once the cutoff reaches `pi` so the integral over `[0, pi]` is exact.
pub(crate) struct LineWindow {
    pub a: f64,
    pub s: f64,
    pub cutoff: f64,
    periodic: bool,
}

impl LineWindow {
    /// Cutoff `X = sqrt(14 ln 10 / a)` clipped to `[1e-3, pi]`.
    pub fn new(a: f64, s: f64) -> Self {
        let x = (14.0 * std::f64::consts::LN_10 / a).sqrt();
        let periodic = x >= PI;
        Self { a, s, cutoff: x.clamp(1e-3, PI), periodic }
    }

    pub fn weight(&self, x: f64) -> Complex64 {
        let one = |y: f64| Complex64::new(-self.a * y * y, -self.s * y).exp();
        if !self.periodic {
            return one(x);
        }
        let mut acc = one(x);
        for k in 1.. {
            let shift = 2.0 * PI * k as f64;
            let t1 = one(x + shift);
            let t2 = one(x - shift);
            acc += t1 + t2;
            if self.a * (shift - PI).powi(2) > 745.0 {
                break;
            }
        }
        acc
    }

    /// `int_R window(x) F(x) dx` for `F(-x) = conj F(x)`, given `ln F`.
    pub fn integrate(&self, log_f: impl Fn(f64) -> Complex64, narrow: f64) -> Result<f64> {
        let x_max = self.cutoff;
        let mut breaks = Vec::new();
        let floor = narrow.min(1.0 / self.a.sqrt()).max(1e-300) / 4.0;
        let mut b = x_max / 2.0;
        while b > floor && breaks.len() < 60 {
            breaks.push(b);
            b /= 2.0;
        }
        let res = integrate_adaptive(
            |x| 2.0 * (self.weight(x) * log_f(x).exp()).re,
            0.0,
            x_max,
            &breaks,
            1e-300,
            1e-13,
            4000,
        );
        if !(res.value > 0.0) || res.abs_value > 1e6 * res.value.abs() {
            return Err(Error::Numerical(format!(
                "contour integrand cancels: value {:e}, absolute mass {:e}",
                res.value, res.abs_value
            )));
        }
        Ok(res.value)
    }
}

/// `ln Phi(x) = -sum_m deg ln(1 - (e^(ix) - 1) p_m)` with `p_m = r g/(1 - r g)`.
pub(crate) fn log_phi(spec: &Spectrum, r: f64, one_minus_r: f64, x: f64) -> Complex64 {
    let e = Complex64::new(-2.0 * (0.5 * x).sin().powi(2), x.sin());
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, (g, d)) in spec.eigenvalues.iter().zip(&spec.degeneracies).enumerate() {
        let p = if m == 0 { r / one_minus_r } else { r * g / (1.0 - r * g) };
        acc -= *d * (Complex64::new(1.0, 0.0) - e * p).ln();
    }
    acc
}

/// `ln Xi` from the Gaussian-linearised representation with an admissible
/// `s`, i.e. `r = exp(beta mu - beta lambda s / kappa^d) < 1`:
/// `Xi = sqrt(a/pi) e^(s^2/4a) / Det(1 - rG) int e^(-isx - ax^2) Phi(x) dx`,
/// `a = kappa^d / (2 beta lambda)`.
pub fn log_xi_contour_integral(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    s: f64,
    trunc: &SpectrumTruncation,
) -> Result<f64> {
    check_coupling(mu, lambda)?;
    let a = trap.volume() / (2.0 * trap.beta * lambda);
    let ln_r = trap.beta * mu - s / (2.0 * a);
    if !(ln_r < 0.0) {
        return domain(format!("s = {s} gives exp(beta mu - beta lambda s/kappa^d) >= 1"));
    }
    let r = ln_r.exp();
    let omr = -ln_r.exp_m1();
    let spec = Spectrum::new(trap, *trunc);
    let ld = spec.sum_excited(|g| (-r * g).ln_1p()) + omr.ln();
    let win = LineWindow::new(a, s);
    let integral = win.integrate(|x| log_phi(&spec, r, omr, x), omr / r)?;
    Ok(0.5 * (a / PI).ln() + s * s / (4.0 * a) - ld + integral.ln())
}

pub fn xi_contour_integral(trap: &TrapParams, mu: f64, lambda: f64, s: f64, trunc: &SpectrumTruncation) -> Result<f64> {
    Ok(log_xi_contour_integral(trap, mu, lambda, s, trunc)?.exp())
}

fn require_phase(trap: &TrapParams, mu: f64, lambda: f64, want: PhaseLabel) -> Result<()> {
    let got = classify_phase(trap.beta, mu, lambda, trap.dim as f64, CRITICAL_BAND)?;
    if got != want {
        return Err(Error::WrongPhase(format!("parameters are {got}, this expansion needs {want}")));
    }
    Ok(())
}

/// Normal-phase saddle point:
/// `e^(kappa^d (beta mu - ln r)^2 / 2 beta lambda) / (sqrt(1 + beta lambda kappa^(-d) Tr[rG(1-rG)^(-2)]) Det(1 - rG))`.
pub fn log_xi_saddle_normal(trap: &TrapParams, mu: f64, lambda: f64, trunc: &SpectrumTruncation) -> Result<f64> {
    check_coupling(mu, lambda)?;
    require_phase(trap, mu, lambda, PhaseLabel::Normal)?;
    let fp = solve_fixed_point(trap, mu, lambda, Some(trunc), 1e-14)?;
    let spec = Spectrum::new(trap, *trunc);
    let r = fp.r;
    let omr = fp.one_minus_r;
    let tr2 = r / (omr * omr) + spec.sum_excited(|g| r * g / (1.0 - r * g).powi(2));
    let ld = omr.ln() + log_det_q(&spec, r);
    let kd = trap.volume();
    let bl = trap.beta * lambda;
    Ok(kd * (trap.beta * mu - r.ln()).powi(2) / (2.0 * bl) - 0.5 * (bl * tr2 / kd).ln_1p() - ld)
}

pub fn xi_saddle_normal(trap: &TrapParams, mu: f64, lambda: f64, trunc: &SpectrumTruncation) -> Result<f64> {
    Ok(log_xi_saddle_normal(trap, mu, lambda, trunc)?.exp())
}

/// Condensed-phase asymptotics:
/// `sqrt(2 pi beta lambda / (e^2 kappa^d)) beta^(d-1) e^(kappa^d (beta mu - ln r)^2 / 2 beta lambda) / ((beta^d mu - zeta(d) lambda) Det(1 - rG))`.
pub fn log_xi_saddle_condensed(trap: &TrapParams, mu: f64, lambda: f64, trunc: &SpectrumTruncation) -> Result<f64> {
    check_coupling(mu, lambda)?;
    if trap.dim <= 2 {
        return domain("the condensed asymptotics need d > 2");
    }
    require_phase(trap, mu, lambda, PhaseLabel::Condensed)?;
    let fp = solve_fixed_point(trap, mu, lambda, Some(trunc), 1e-14)?;
    let spec = Spectrum::new(trap, *trunc);
    let d = trap.dim as f64;
    let kd = trap.volume();
    let bl = trap.beta * lambda;
    let ld = fp.one_minus_r.ln() + log_det_q(&spec, fp.r);
    let gap = trap.beta.powf(d) * mu - zeta(d)? * lambda;
    Ok(0.5 * (2.0 * PI * bl / kd).ln() - 1.0 + (d - 1.0) * trap.beta.ln()
        + kd * (trap.beta * mu - fp.r.ln()).powi(2) / (2.0 * bl)
        - gap.ln()
        - ld)
}

pub fn xi_saddle_condensed(trap: &TrapParams, mu: f64, lambda: f64, trunc: &SpectrumTruncation) -> Result<f64> {
    Ok(log_xi_saddle_condensed(trap, mu, lambda, trunc)?.exp())
}

/// `1 + 2 sum_k e^(-4 pi^2 k^2 a) cos(4 pi k a (u - beta mu))`: the residues
/// at the periodic images `u + 2 pi i k` relative to the one at `u`.
pub(crate) fn periodic_images(a: f64, shift: f64) -> f64 {
    let mut acc = 1.0;
    for k in 1..4 {
        let kf = k as f64;
        acc += 2.0 * (-4.0 * PI * PI * kf * kf * a).exp() * (4.0 * PI * kf * a * shift).cos();
    }
    acc
}

/// Minimum over `ln R in (lo, hi)` of a unimodal-ish bound, by golden section.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

/// `ln Xi` from the residue of the contour integrand at `z = 1`:
/// `ln Xi = (1/2) ln(2 pi kappa^d / beta lambda) + kappa^d (beta mu)^2 / (2 beta lambda) - ln Det_Q(1 - G)`.
///
/// Returns the value together with a certified bound on `ln |remainder / residue|`
/// from the shifted line `|z| = R`, `1 < R < 1/g_1`.
pub fn log_xi_residue(trap: &TrapParams, mu: f64, lambda: f64, trunc: &SpectrumTruncation) -> Result<(f64, f64)> {
    check_coupling(mu, lambda)?;
    let spec = Spectrum::new(trap, *trunc);
    let a = trap.volume() / (2.0 * trap.beta * lambda);
    let bm = trap.beta * mu;
    let ldq = log_det_q(&spec, 1.0);
    let main = 0.5 * (4.0 * PI * a).ln() + a * bm * bm - ldq;
    let images = periodic_images(a, -bm);
    if !(images > 0.0) {
        return Err(Error::Numerical("periodic residues cancel the main one".into()));
    }
    let q1 = trap.level_ratio();
    let bound = golden_min(
        |lr| {
            let r = lr.exp();
            a * (lr - bm).powi(2) - (r - 1.0).ln() - log_det_q(&spec, r) - main
        },
        1e-12,
        -q1.ln() * (1.0 - 1e-9),
    );
    Ok((main + images.ln(), bound))
}
