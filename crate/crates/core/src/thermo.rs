//! Ideal-gas densities, critical values and densities of states.

use crate::error::{domain, Error, Result};
use crate::spectral::{ground_state, Spectrum, SpectrumTruncation, TrapParams};
use crate::special::{polylog, zeta};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoParams {
    pub beta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub dim: usize,
}

impl ThermoParams {
    pub fn new(beta: f64, mu: f64, lambda: f64, dim: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return domain(format!("beta must be positive, got {beta}"));
        }
        if !mu.is_finite() {
            return domain("mu must be finite");
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return domain(format!("lambda must be non-negative, got {lambda}"));
        }
        if lambda == 0.0 && mu >= 0.0 {
            return domain("the ideal gas (lambda = 0) requires mu < 0");
        }
        if dim == 0 {
            return domain("dimension must be at least 1");
        }
        Ok(Self { beta, mu, lambda, dim })
    }
}

/// Density of states of the scaled harmonic spectrum or of free particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DosKind {
    Harmonic,
    Translational,
}

impl DosKind {
    /// `dN/dE` at energy `e`.
    pub fn density(&self, e: f64, dim: f64) -> f64 {
        if e <= 0.0 {
            return 0.0;
        }
        match self {
            DosKind::Harmonic => e.powf(dim - 1.0) / gamma(dim),
            DosKind::Translational => {
                e.powf((dim - 2.0) / 2.0) / ((2.0 * PI).powf(dim / 2.0) * gamma(dim / 2.0))
            }
        }
    }

    /// Closed-form Laplace transform `int exp(-t E) dN(E)`.
    pub fn laplace(&self, t: f64, dim: f64) -> f64 {
        match self {
            DosKind::Harmonic => t.powf(-dim),
            DosKind::Translational => (2.0 * PI * t).powf(-dim / 2.0),
        }
    }
}

/// Laplace transform of the truncated scaled staircase
/// `kappa^(-d) sum_m deg_m exp(-t m / kappa)`; the exact value is
/// `[kappa (1 - exp(-t/kappa))]^(-d)`.
pub fn harmonic_staircase_laplace(trap: &TrapParams, t: f64, trunc: &SpectrumTruncation) -> f64 {
    let scaled = TrapParams { beta: t, ..*trap };
    Spectrum::new(&scaled, *trunc).sum(|g| g) / trap.volume()
}

/// `kappa^(-d) sum_m deg_m / (exp(beta(m/kappa - mu)) - 1)` with the
/// truncation tail added as a bound-consistent estimate.
pub fn rho_kappa_ideal(trap: &TrapParams, mu: f64, trunc: &SpectrumTruncation) -> Result<f64> {
    if !(mu < 0.0) {
        return domain(format!("the ideal gas requires mu < 0, got {mu}"));
    }
    Ok(rho_kappa_sum(trap, mu, trunc))
}

fn rho_kappa_sum(trap: &TrapParams, mu: f64, trunc: &SpectrumTruncation) -> f64 {
    let z = (trap.beta * mu).exp();
    let spec = Spectrum::new(trap, *trunc);
    spec.sum(|g| z * g / (1.0 - z * g)) / trap.volume()
}

/// `Li_d(exp(beta mu)) / beta^d`.
pub fn rho_ideal_limit(beta: f64, mu: f64, dim: f64) -> Result<f64> {
    if !(mu < 0.0) {
        return domain(format!("the ideal gas requires mu < 0, got {mu}"));
    }
    Ok(polylog(dim, (beta * mu).exp())? / beta.powf(dim))
}

/// `zeta(d) / beta^d`, finite for `d > 1`.
pub fn rho_crit(beta: f64, dim: f64) -> Result<f64> {
    if dim <= 1.0 {
        return Err(Error::Divergence(format!("critical density is infinite for d = {dim}")));
    }
    Ok(zeta(dim)? / beta.powf(dim))
}

/// Free-space critical density `zeta(d/2) / (2 pi beta)^(d/2)`, finite for `d > 2`.
pub fn rho_crit_tdl(beta: f64, dim: f64) -> Result<f64> {
    if dim <= 2.0 {
        return Err(Error::Divergence(format!("free-space critical density is infinite for d = {dim}")));
    }
    Ok(zeta(dim / 2.0)? / (2.0 * PI * beta).powf(dim / 2.0))
}

/// Mean-field critical chemical potential `lambda zeta(d) / beta^d`.
pub fn mu_crit(beta: f64, lambda: f64, dim: f64) -> Result<f64> {
    Ok(lambda * rho_crit(beta, dim)?)
}

/// The unique `mu < 0` with `rho_kappa_ideal(mu) = rho`.
///
/// Bisection in `ln(-mu)`: the density is increasing in `mu` and blows up
/// as `mu -> 0-` through the ground level.
pub fn mu_bar_kappa(trap: &TrapParams, rho: f64, trunc: &SpectrumTruncation) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return domain(format!("density must be positive, got {rho}"));
    }
    let f = |t: f64| rho_kappa_sum(trap, -t.exp(), trunc) - rho;
    // f decreasing in t
    let mut hi = ((1.0 + rho.ln().abs()) / trap.beta).ln();
    while f(hi) > 0.0 {
        hi += 1.0;
    }
    let mut lo = hi - 1.0;
    while f(lo) < 0.0 {
        lo -= 1.0;
        if lo < -745.0 {
            return Err(Error::NoSolution("density unreachable below mu = 0".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(-(0.5 * (lo + hi)).exp())
}

/// Scaled condensate profile `(rho - rho_c) pi^(-d/2) exp(-|u|^2)`, with
/// `u = x / sqrt(kappa)`.
pub fn condensate_profile(beta: f64, rho: f64, u: &[f64]) -> Result<f64> {
    let d = u.len() as f64;
    let rc = rho_crit(beta, d)?;
    if rho < rc {
        return domain(format!("density {rho} is below the critical density {rc}"));
    }
    let u2: f64 = u.iter().map(|v| v * v).sum();
    Ok((rho - rc) * PI.powf(-d / 2.0) * (-u2).exp())
}

/// Finite-kappa ground-level density `kappa^(-d) Omega(x)^2 / (exp(-beta mu_bar) - 1)`.
///
/// Multiplied by `kappa^(d/2)` at `x = sqrt(kappa) u` it approaches
/// [`condensate_profile`].
pub fn condensate_density_finite(
    trap: &TrapParams,
    rho: f64,
    x: &[f64],
    trunc: &SpectrumTruncation,
) -> Result<f64> {
    let mu = mu_bar_kappa(trap, rho, trunc)?;
    let om = ground_state(trap, x);
    Ok(om * om / (-(trap.beta * mu)).exp_m1() / trap.volume())
}
