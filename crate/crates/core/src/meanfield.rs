//! Mean-field self-consistency: the pair `(r, s)` with
//! `r = exp(beta mu - beta lambda s / kappa^d)` and `s = Tr[rG(1-rG)^(-1)]`,
//! its large-trap limit and the total-density phase diagram.

use crate::error::{domain, Error, Result};
use crate::spectral::{Spectrum, SpectrumTruncation, TrapParams, DEFAULT_TAIL_RTOL};
use crate::special::{polylog, zeta};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub r: f64,
    /// `1 - r`, kept separately for accuracy in the condensed phase.
    pub one_minus_r: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseLabel {
    Normal,
    Condensed,
    Critical,
}

impl std::fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhaseLabel::Normal => "normal",
            PhaseLabel::Condensed => "condensed",
            PhaseLabel::Critical => "critical",
        })
    }
}

/// Default relative band around `mu_c` labelled critical.
pub const CRITICAL_BAND: f64 = 1e-9;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("mean-field coupling must be positive, got {lambda}"));
    }
    Ok(())
}

/// `kappa^(-d) Tr[rG(1-rG)^(-1)]` written in the logit `y = ln(r/(1-r))`
/// so that the ground-level term `r/(1-r) = e^y` keeps full precision.
fn occupation_density(spec: &Spectrum, y: f64) -> f64 {
    let r = 1.0 / (1.0 + (-y).exp());
    let omr = 1.0 / (1.0 + y.exp());
    let trap = &spec.trap;
    let q = trap.beta / trap.kappa;
    let mut sum = y.exp();
    for (m, (g, d)) in spec.eigenvalues.iter().zip(&spec.degeneracies).enumerate().skip(1) {
        let one_minus_g = -(-(m as f64) * q).exp_m1();
        sum += d * r * g / (one_minus_g + g * omr);
    }
    sum / trap.volume()
}

fn logit_to_r(y: f64) -> (f64, f64, f64) {
    let r = 1.0 / (1.0 + (-y).exp());
    let omr = 1.0 / (1.0 + y.exp());
    let ln_r = -(-y).exp().ln_1p();
    (r, omr, ln_r)
}

/// `ln r / (beta lambda) + kappa^(-d) sum_m deg r g / (1 - r g)`.
pub fn h_kappa(r: f64, trap: &TrapParams, lambda: f64, trunc: &SpectrumTruncation) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("r must lie in (0, 1), got {r}"));
    }
    check_lambda(lambda)?;
    let spec = Spectrum::new(trap, *trunc);
    Ok(r.ln() / (trap.beta * lambda) + spec.sum(|g| r * g / (1.0 - r * g)) / trap.volume())
}

fn solve_with_spectrum(spec: &Spectrum, mu: f64, lambda: f64, tol: f64) -> FixedPoint {
    let trap = &spec.trap;
    let target = mu / lambda;
    let f = |y: f64| {
        let (_, _, ln_r) = logit_to_r(y);
        ln_r / (trap.beta * lambda) + occupation_density(spec, y) - target
    };
    // bracket: f is increasing in y
    let mut lo = -1.0;
    while f(lo) > 0.0 {
        lo = 2.0 * lo - 1.0;
    }
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi = 2.0 * hi + 1.0;
    }
    let (mut flo, mut fhi) = (f(lo), f(hi));
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm < 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        let (r, omr, _) = logit_to_r(mid);
        if (hi - lo) * r * omr < 0.01 * tol && hi - lo < 1e-9 * (1.0 + mid.abs()) {
            break;
        }
    }
    // secant refinement inside the bracket
    let mut y = if fhi != flo { lo - flo * (hi - lo) / (fhi - flo) } else { 0.5 * (lo + hi) };
    for _ in 0..4 {
        let fy = f(y);
        let h = 1e-7 * (1.0 + y.abs());
        let d = (f(y + h) - fy) / h;
        if d > 0.0 {
            let next = y - fy / d;
            if next > lo && next < hi {
                y = next;
            }
        }
    }
    let (r, omr, ln_r) = logit_to_r(y);
    let s = trap.volume() * (trap.beta * mu - ln_r) / (trap.beta * lambda);
    FixedPoint { r, one_minus_r: omr, s }
}

/// Unique root of `h_kappa(r) = mu / lambda`, with
/// `s = kappa^d (beta mu - ln r) / (beta lambda)`.
///
/// Without an explicit truncation the level cutoff is grown until the root
/// moves by less than `tol`.
pub fn solve_fixed_point(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    trunc: Option<&SpectrumTruncation>,
    tol: f64,
) -> Result<FixedPoint> {
    check_lambda(lambda)?;
    if !mu.is_finite() {
        return domain("mu must be finite");
    }
    if let Some(t) = trunc {
        return Ok(solve_with_spectrum(&Spectrum::new(trap, *t), mu, lambda, tol));
    }
    let mut t = SpectrumTruncation::adaptive(trap, DEFAULT_TAIL_RTOL);
    let mut fp = solve_with_spectrum(&Spectrum::new(trap, t), mu, lambda, tol);
    for _ in 0..8 {
        t = SpectrumTruncation::with_max_level(trap, t.max_level + t.max_level / 2 + 1);
        let next = solve_with_spectrum(&Spectrum::new(trap, t), mu, lambda, tol);
        let moved = (next.r - fp.r).abs();
        fp = next;
        if moved < tol {
            return Ok(fp);
        }
    }
    Err(Error::Numerical("fixed point did not stabilize under truncation growth".into()))
}

/// Residual of the pair `(r, s)` in both self-consistency equations.
pub fn fixed_point_residual(trap: &TrapParams, mu: f64, lambda: f64, fp: &FixedPoint) -> (f64, f64) {
    let spec = Spectrum::adaptive(trap);
    let r_eq = fp.r - (trap.beta * mu - trap.beta * lambda * fp.s / trap.volume()).exp();
    let y = (fp.r / fp.one_minus_r).ln();
    let s_eq = fp.s - occupation_density(&spec, y) * trap.volume();
    (r_eq, s_eq)
}

/// Limit root of `beta mu = ln r + lambda beta Li_d(r) / beta^d`.
pub fn r_star(beta: f64, mu: f64, lambda: f64, dim: f64, tol: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let mc = crate::thermo::mu_crit(beta, lambda, dim)?;
    if !(mu < mc) {
        return Err(Error::NoSolution(format!("mu = {mu} is not below mu_c = {mc}")));
    }
    let f = |y: f64| {
        let (r, _, ln_r) = logit_to_r(y);
        ln_r + lambda * beta * polylog(dim, r).unwrap_or(f64::INFINITY) / beta.powf(dim) - beta * mu
    };
    let mut lo = -1.0;
    while f(lo) > 0.0 {
        lo = 2.0 * lo - 1.0;
    }
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi = 2.0 * hi + 1.0;
        if hi > 700.0 {
            return Err(Error::Numerical("r_* bracket escaped".into()));
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let (r, omr, _) = logit_to_r(mid);
        if (hi - lo) * r * omr < 0.01 * tol {
            break;
        }
    }
    Ok(logit_to_r(0.5 * (lo + hi)).0)
}

/// Compares `mu` with `mu_c = lambda zeta(d) / beta^d` within the relative band `tol`.
pub fn classify_phase(beta: f64, mu: f64, lambda: f64, dim: f64, tol: f64) -> Result<PhaseLabel> {
    let mc = crate::thermo::mu_crit(beta, lambda, dim)?;
    Ok(if (mu - mc).abs() < tol * mc.abs().max(1.0) {
        PhaseLabel::Critical
    } else if mu < mc {
        PhaseLabel::Normal
    } else {
        PhaseLabel::Condensed
    })
}

/// Limit of `kappa^d (1 - r_kappa)` in the condensed phase:
/// `beta^d lambda / (beta^d mu - zeta(d) lambda)`.
pub fn condensed_rate(beta: f64, mu: f64, lambda: f64, dim: f64) -> Result<f64> {
    let bd = beta.powf(dim);
    let denom = bd * mu - zeta(dim)? * lambda;
    if !(denom > 0.0) {
        return Err(Error::WrongPhase(format!("mu = {mu} is not above the critical value")));
    }
    Ok(bd * lambda / denom)
}

/// Total density in the large-trap limit: `Li_d(r_*)/beta^d` below `mu_c`,
/// `mu / lambda` above, `zeta(d)/beta^d` at `mu_c`.
pub fn rho_total(beta: f64, mu: f64, lambda: f64, dim: f64) -> Result<f64> {
    check_lambda(lambda)?;
    match classify_phase(beta, mu, lambda, dim, 0.0)? {
        PhaseLabel::Normal => {
            let r = r_star(beta, mu, lambda, dim, 1e-14)?;
            Ok(polylog(dim, r)? / beta.powf(dim))
        }
        PhaseLabel::Condensed => Ok(mu / lambda),
        PhaseLabel::Critical => crate::thermo::rho_crit(beta, dim),
    }
}

/// `s_kappa / kappa^d`.
pub fn rho_total_kappa(trap: &TrapParams, mu: f64, lambda: f64, trunc: Option<&SpectrumTruncation>) -> Result<f64> {
    Ok(solve_fixed_point(trap, mu, lambda, trunc, 1e-13)?.s / trap.volume())
}

/// `a_nu(p; r) = r e^(-|p|_1) / (1 - r e^(-|p|_1))^nu`.
pub fn a_nu(p: &[f64], r: f64, nu: u32) -> f64 {
    let e = (-p.iter().map(|v| v.abs()).sum::<f64>()).exp();
    r * e / (1.0 - r * e).powi(nu as i32)
}

/// Staircase version of [`a_nu`]: constant on the boxes
/// `beta/kappa (n + [0,1)^d)`, equal to `a_nu(beta n / kappa; r)` there,
/// and zero on the box at the origin.
pub fn a_nu_kappa(p: &[f64], r: f64, nu: u32, beta: f64, kappa: f64) -> f64 {
    let h = beta / kappa;
    let corner: Vec<f64> = p.iter().map(|v| (v / h).floor() * h).collect();
    if corner.iter().all(|c| *c == 0.0) {
        return 0.0;
    }
    a_nu(&corner, r, nu)
}

/// A constant `c` with `a_nu_kappa(p; r) <= a_nu(c p; 1)` for all `p`, `r`, `kappa`.
///
/// On the box with corner `n != 0`, `|p|_1 <= beta/kappa (|n|_1 + d)`, and
/// `c (|n|_1 + d) <= |n|_1` holds for every `|n|_1 >= 1` once `c = 1/(d+1)`.
pub fn a_nu_domination_constant(dim: usize) -> f64 {
    1.0 / (dim as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_examples() {
        assert_eq!(classify_phase(1.0, 0.0, 1.0, 3.0, CRITICAL_BAND).unwrap(), PhaseLabel::Normal);
        assert_eq!(classify_phase(1.0, 2.0, 1.0, 3.0, CRITICAL_BAND).unwrap(), PhaseLabel::Condensed);
        let z3 = zeta(3.0).unwrap();
        assert_eq!(classify_phase(1.0, z3, 1.0, 3.0, 1e-12).unwrap(), PhaseLabel::Critical);
    }

    #[test]
    fn rate_and_total() {
        assert!((condensed_rate(1.0, 2.0, 1.0, 3.0).unwrap() - 1.25322219586794).abs() < 1e-13);
        assert!(condensed_rate(1.0, 1.0, 1.0, 3.0).is_err());
        assert!(condensed_rate(1.0, 2.0, 1e-12, 3.0).unwrap() < 1e-11);
        assert_eq!(rho_total(1.0, 2.0, 1.0, 3.0).unwrap(), 2.0);
        let mu = 0.5f64.ln() + polylog(3.0, 0.5).unwrap();
        assert!((mu + 0.1559340).abs() < 1e-7);
        assert!((r_star(1.0, mu, 1.0, 3.0, 1e-14).unwrap() - 0.5).abs() < 1e-12);
        assert!((rho_total(1.0, mu, 1.0, 3.0).unwrap() - 0.5372132).abs() < 1e-7);
        assert!(r_star(1.0, 2.0, 1.0, 3.0, 1e-12).is_err());
    }

    #[test]
    fn staircase_examples() {
        assert!((a_nu(&[0.0, 0.0], 0.3, 1) - 0.3 / 0.7).abs() < 1e-15);
        assert_eq!(a_nu_kappa(&[0.001, 0.002], 0.3, 1, 1.0, 10.0), 0.0);
        let v = a_nu_kappa(&[0.15, 0.02], 0.3, 2, 1.0, 10.0);
        assert!((v - a_nu(&[0.1, 0.0], 0.3, 2)).abs() < 1e-15);
    }

    #[test]
    fn free_gas_limit() {
        let t = TrapParams::new(3.0, 1.0, 3).unwrap();
        let fp = solve_fixed_point(&t, -30.0, 1.0, None, 1e-14).unwrap();
        assert!((fp.r / (-30f64).exp() - 1.0).abs() < 1e-9);
    }
}
