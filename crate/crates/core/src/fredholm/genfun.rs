//! Generating functional `E[exp(-<f, xi>)] = Xi~(f) / Xi` at finite trap
//! size and in the two large-trap limits.
//!
//! With `U = sqrt(w (1 - e^(-f)))` on a grid over supp f, `Omega` the ground
//! state and `v = U Omega`,
//! `Det(1 - z G~) = Det_Q(1 - zG) Det(1 + A^Q(z)) gamma(z)` where
//! `A^Q(z) = U zQG(1 - zQG)^(-1) U`, `q(z) = v^T (1 + A^Q(z))^(-1) v` and
//! `gamma(z) = 1 - z + z q(z)`. The top eigenvalue of `G~` is `1/z*` with
//! `gamma(z*) = 0`.

use super::nystrom::{log_det_complex, log_det_real, DiscretizedOperator};
use super::partition::{
    check_coupling, golden_min, log_det_q, log_phi, log_xi_bruteforce, log_xi_residue, periodic_images,
    LineWindow,
};
use super::testfn::TestFunction;
use super::trapgrid::{SeriesValue, TrapGrid};
use crate::error::{domain, Error, Result};
use crate::meanfield::{classify_phase, solve_fixed_point, FixedPoint, PhaseLabel, CRITICAL_BAND};
use crate::quadrature::GridQuadrature;
use crate::spectral::{resolvent_kernel, KernelSpace, Spectrum, SpectrumTruncation, TrapParams};
use crate::special::zeta;
use crate::thermo::mu_crit;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// Accept the residue representation when the certified remainder is below this.
const RESIDUE_LOG_RTOL: f64 = -30.0;

/// Scalars derived from `A^Q` at one real `z`.
#[derive(Debug, Clone, Copy)]
struct RealEval {
    log_det: f64,
    q: f64,
    /// `dq/dz`, when the derivative was accumulated.
    dq: f64,
    /// `Tr[(1 + A^Q)^(-1) dA^Q/dz]`.
    tr_inv_da: f64,
}

fn eval_real(tg: &TrapGrid, sv: &SeriesValue) -> Result<RealEval> {
    let n = tg.len();
    let m = DMatrix::<f64>::identity(n, n) + sv.a.map(|c| c.re);
    let (log_det, sign) = log_det_real(m.clone());
    if sign <= 0.0 {
        return Err(Error::Numerical("1 + A^Q is not positive definite".into()));
    }
    let lu = m.lu();
    let v = DVector::from_column_slice(&tg.v);
    let w = lu.solve(&v).ok_or_else(|| Error::Numerical("singular 1 + A^Q".into()))?;
    let q = v.dot(&w);
    let (dq, tr_inv_da) = match &sv.da {
        Some(da) => {
            let da = da.map(|c| c.re);
            let dq = -w.dot(&(&da * &w));
            let x = lu.solve(&da).ok_or_else(|| Error::Numerical("singular 1 + A^Q".into()))?;
            (dq, x.trace())
        }
        None => (f64::NAN, f64::NAN),
    };
    Ok(RealEval { log_det, q, dq, tr_inv_da })
}

/// `(ln Det(1 + A^Q(z)), q(z))` at complex `z`.
fn eval_complex(tg: &TrapGrid, sv: &SeriesValue) -> Result<(Complex64, Complex64)> {
    let n = tg.len();
    let m = DMatrix::<Complex64>::identity(n, n) + &sv.a;
    let ld = log_det_complex(m.clone());
    let v = DVector::from_iterator(n, tg.v.iter().map(|x| Complex64::new(*x, 0.0)));
    let w = m.lu().solve(&v).ok_or_else(|| Error::Numerical("singular 1 + A^Q".into()))?;
    let q = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
    Ok((ld, q))
}

fn real_pass(tg: &TrapGrid, z: f64, derivative: bool) -> Result<RealEval> {
    let sv = tg.projected_series(&[Complex64::new(z, 0.0)], derivative)?;
    eval_real(tg, &sv[0])
}

/// Top eigenvalue of `G~` as `1/z*`, from Newton steps on `gamma(z) = 0`
/// started at the fixed-point iterate `1/(1 - q(1))`.
#[derive(Debug, Clone, Copy)]
struct TopLevel {
    z: f64,
    /// `z* - 1`, kept separately for accuracy.
    z_minus_one: f64,
    log_det: f64,
    /// `d gamma / dz` at `z*`.
    dgamma: f64,
}

fn top_level(tg: &TrapGrid) -> Result<TopLevel> {
    let at_one = real_pass(tg, 1.0, false)?;
    let mut q = at_one.q;
    let mut z = 1.0 / (1.0 - q);
    for _ in 0..20 {
        let e = real_pass(tg, z, true)?;
        let gamma = 1.0 - z + z * e.q;
        let dgamma = -1.0 + e.q + z * e.dq;
        let step = gamma / dgamma;
        q = e.q;
        if step.abs() < 1e-15 * z {
            return Ok(TopLevel { z, z_minus_one: q / (1.0 - q), log_det: e.log_det, dgamma });
        }
        z -= step;
    }
    Err(Error::Numerical(format!("top eigenvalue iteration stalled near z = {z}, q = {q}")))
}

/// How a finite-kappa generating functional was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GenfunMethod {
    BruteForce,
    Residue,
    RealLine,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GenfunEvaluation {
    pub log_value: f64,
    pub method: GenfunMethod,
    /// Certified `ln |remainder / main term|` for the residue path.
    pub log_remainder_bound: Option<f64>,
}

fn residue_path(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    tg: &TrapGrid,
    spec: &Spectrum,
) -> Result<Option<GenfunEvaluation>> {
    let (ln_xi, bound0) = log_xi_residue(trap, mu, lambda, &spec.trunc)?;
    if bound0 > RESIDUE_LOG_RTOL {
        return Ok(None);
    }
    let g1 = trap.level_ratio();
    let vv = tg.v_norm2();
    let r_lo = 1.0 / (1.0 - vv);
    if !(r_lo * g1 < 1.0) {
        return Ok(None);
    }
    let top = top_level(tg)?;
    if !(top.z * g1 < 1.0) {
        return Ok(None);
    }
    let a = trap.volume() / (2.0 * trap.beta * lambda);
    let bm = trap.beta * mu;
    let ell = top.z_minus_one.ln_1p();
    let neg_zdg = -top.z * top.dgamma;
    if !(neg_zdg > 0.0) {
        return Err(Error::Numerical("derivative of gamma at the top level is not negative".into()));
    }
    // ln Det_Q(1 - G) - ln Det_Q(1 - z* G), summed without cancellation
    let zm1 = top.z_minus_one;
    let ln_q = g1.ln();
    let mut ldq_diff = 0.0;
    for (m, d) in spec.degeneracies.iter().enumerate().skip(1) {
        let one_minus_g = -(m as f64 * ln_q).exp_m1();
        let g = 1.0 - one_minus_g;
        ldq_diff -= d * (-zm1 * g / one_minus_g).ln_1p();
    }
    let images = periodic_images(a, ell - bm) / periodic_images(a, -bm);
    if !(images > 0.0) {
        return Err(Error::Numerical("periodic residues cancel the main one".into()));
    }
    let log_value = a * ell * (ell - 2.0 * bm) + ldq_diff - top.log_det - neg_zdg.ln() + images.ln();
    // remainder of Xi~ on |z| = R, with |Det(1 - R G~)| >= Det_Q(1 - RG) (R(1 - |v|^2) - 1)
    let main_tilde = ln_xi + log_value;
    let bound1 = golden_min(
        |lr| {
            let r = lr.exp();
            a * (lr - bm).powi(2) - log_det_q(spec, r) - (r * (1.0 - vv) - 1.0).ln() - main_tilde
        },
        r_lo.ln() + 1e-14,
        -g1.ln() * (1.0 - 1e-9),
    );
    if bound1 > RESIDUE_LOG_RTOL {
        return Ok(None);
    }
    Ok(Some(GenfunEvaluation {
        log_value,
        method: GenfunMethod::Residue,
        log_remainder_bound: Some(bound0.max(bound1)),
    }))
}

/// Barycentric interpolation on Chebyshev-Lobatto nodes of `[0, x_max]`.
struct Lobatto {
    x: Vec<f64>,
    vals: Vec<[Complex64; 2]>,
}

impl Lobatto {
    fn nodes(k: usize, x_max: f64) -> Vec<f64> {
        (0..k).map(|j| 0.5 * x_max * (1.0 - (PI * j as f64 / (k - 1) as f64).cos())).collect()
    }

    fn eval(&self, t: f64) -> [Complex64; 2] {
        let k = self.x.len();
        let mut num = [Complex64::new(0.0, 0.0); 2];
        let mut den = 0.0;
        for j in 0..k {
            let dx = t - self.x[j];
            if dx == 0.0 {
                return self.vals[j];
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == k - 1 {
                w *= 0.5;
            }
            let c = w / dx;
            num[0] += self.vals[j][0] * c;
            num[1] += self.vals[j][1] * c;
            den += c;
        }
        [num[0] / den, num[1] / den]
    }
}

fn real_line_path(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    tg: &TrapGrid,
    spec: &Spectrum,
) -> Result<GenfunEvaluation> {
    let fp = solve_fixed_point(trap, mu, lambda, Some(&spec.trunc), 1e-14)?;
    let (r, omr) = (fp.r, fp.one_minus_r);
    let a = trap.volume() / (2.0 * trap.beta * lambda);
    let win = LineWindow::new(a, fp.s);
    let x_max = win.cutoff;
    let sample = |xs: &[f64]| -> Result<Vec<[Complex64; 2]>> {
        let zs: Vec<Complex64> = xs.iter().map(|x| Complex64::from_polar(r, *x)).collect();
        let svs = tg.projected_series(&zs, false)?;
        svs.iter().map(|sv| eval_complex(tg, sv).map(|(l, q)| [l, q])).collect()
    };
    let mut k = 5;
    let mut x = Lobatto::nodes(k, x_max);
    let mut vals = sample(&x)?;
    let mut interp;
    loop {
        unwrap_imag(&mut vals);
        interp = Lobatto { x: x.clone(), vals: vals.clone() };
        if k >= 129 {
            return Err(Error::Numerical("interpolation of the f-dependent factor did not converge".into()));
        }
        let k2 = 2 * k - 1;
        let x2 = Lobatto::nodes(k2, x_max);
        let fresh: Vec<f64> = x2.iter().enumerate().filter(|(j, _)| j % 2 == 1).map(|(_, v)| *v).collect();
        let new_vals = sample(&fresh)?;
        let mut err: f64 = 0.0;
        for (t, nv) in fresh.iter().zip(&new_vals) {
            let p = interp.eval(*t);
            // compare modulo 2 pi i in the log-determinant
            let dl = nv[0] - p[0];
            let dl = Complex64::new(dl.re, dl.im - 2.0 * PI * (dl.im / (2.0 * PI)).round());
            err = err.max(dl.norm()).max((nv[1] - p[1]).norm() / nv[1].norm().max(1e-300));
        }
        let mut merged = Vec::with_capacity(k2);
        for j in 0..k2 {
            merged.push(if j % 2 == 0 { vals[j / 2] } else { new_vals[j / 2] });
        }
        x = x2;
        vals = merged;
        k = k2;
        if err < 1e-11 {
            unwrap_imag(&mut vals);
            interp = Lobatto { x: x.clone(), vals: vals.clone() };
            break;
        }
    }
    let ell = |t: f64| -> Complex64 {
        let [l1, q] = interp.eval(t);
        let z = Complex64::from_polar(r, t);
        let one_minus_z = Complex64::new(omr + 2.0 * r * (0.5 * t).sin().powi(2), -r * t.sin());
        l1 + (Complex64::new(1.0, 0.0) + z * q / one_minus_z).ln()
    };
    let ell0 = ell(0.0);
    let narrow = omr / r;
    let i0 = win.integrate(|t| log_phi(spec, r, omr, t), narrow)?;
    let i1 = win.integrate(|t| log_phi(spec, r, omr, t) - (ell(t) - ell0), narrow)?;
    Ok(GenfunEvaluation { log_value: -ell0.re + i1.ln() - i0.ln(), method: GenfunMethod::RealLine, log_remainder_bound: None })
}

fn unwrap_imag(vals: &mut [[Complex64; 2]]) {
    for j in 1..vals.len() {
        let prev = vals[j - 1][0].im;
        let cur = vals[j][0].im;
        vals[j][0].im = cur - 2.0 * PI * ((cur - prev) / (2.0 * PI)).round();
    }
}

/// `ln E[exp(-<f, xi>)]` at finite `kappa`.
///
/// With `n_max` the ratio of brute-force sums over particle numbers is used.
/// Without it the contour representation is evaluated: the residue at the
/// top eigenvalue when its remainder is certified negligible, otherwise the
/// real-line integral at the mean-field saddle `s_kappa`.
pub fn log_genfun_finite_detailed(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    f: &TestFunction,
    n_max: Option<usize>,
    grid: &GridQuadrature,
) -> Result<GenfunEvaluation> {
    check_coupling(mu, lambda)?;
    if grid.is_empty() {
        return Ok(GenfunEvaluation { log_value: 0.0, method: GenfunMethod::BruteForce, log_remainder_bound: None });
    }
    if let Some(n) = n_max {
        let lt = log_xi_bruteforce(trap, mu, lambda, Some((f, grid)), n)?;
        let l0 = log_xi_bruteforce(trap, mu, lambda, None, n)?;
        return Ok(GenfunEvaluation { log_value: lt - l0, method: GenfunMethod::BruteForce, log_remainder_bound: None });
    }
    let tg = TrapGrid::new(trap, f, grid)?;
    let spec = Spectrum::adaptive(trap);
    if let Some(ev) = residue_path(trap, mu, lambda, &tg, &spec)? {
        return Ok(ev);
    }
    real_line_path(trap, mu, lambda, &tg, &spec)
}

/// Contour evaluation with a forced method: [`GenfunMethod::Residue`] fails
/// with [`Error::Truncation`] when its remainder cannot be certified.
pub fn log_genfun_contour(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    f: &TestFunction,
    grid: &GridQuadrature,
    method: GenfunMethod,
) -> Result<GenfunEvaluation> {
    check_coupling(mu, lambda)?;
    let tg = TrapGrid::new(trap, f, grid)?;
    if tg.len() == 0 {
        return Ok(GenfunEvaluation { log_value: 0.0, method, log_remainder_bound: None });
    }
    let spec = Spectrum::adaptive(trap);
    match method {
        GenfunMethod::Residue => residue_path(trap, mu, lambda, &tg, &spec)?
            .ok_or_else(|| Error::Truncation("residue remainder is not certified negligible".into())),
        GenfunMethod::RealLine => real_line_path(trap, mu, lambda, &tg, &spec),
        GenfunMethod::BruteForce => domain("brute force is not a contour method"),
    }
}

pub fn log_genfun_finite(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    f: &TestFunction,
    n_max: Option<usize>,
    grid: &GridQuadrature,
) -> Result<f64> {
    Ok(log_genfun_finite_detailed(trap, mu, lambda, f, n_max, grid)?.log_value)
}

/// `Xi~(f) / Xi`, a value in `(0, 1]`.
pub fn genfun_finite(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    f: &TestFunction,
    n_max: Option<usize>,
    grid: &GridQuadrature,
) -> Result<f64> {
    Ok(log_genfun_finite(trap, mu, lambda, f, n_max, grid)?.exp())
}

fn sandwich(grid: &GridQuadrature, f: &TestFunction) -> Vec<f64> {
    (0..grid.len()).map(|i| (grid.weights()[i] * f.one_minus_exp(grid.point(i))).sqrt()).collect()
}

/// `-ln Det[1 + sqrt(1-e^(-f)) r G (1 - r G)^(-1) sqrt(1-e^(-f))]` with the
/// free heat semigroup.
pub fn log_genfun_normal_limit(beta: f64, r_star: f64, dim: usize, f: &TestFunction, grid: &GridQuadrature) -> Result<f64> {
    if !(r_star > 0.0 && r_star < 1.0) {
        return domain(format!("r_* must lie in (0, 1), got {r_star}"));
    }
    if grid.dim() != dim {
        return domain("grid dimension differs from d");
    }
    let u = sandwich(grid, f);
    let space = KernelSpace::Flat { beta, dim };
    let n = grid.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in i..n {
            let k = u[i] * resolvent_kernel(r_star, &space, grid.point(i), grid.point(j), 1e-17)? * u[j];
            m[(i, j)] += k;
            if i != j {
                m[(j, i)] += k;
            }
        }
    }
    let (ld, sign) = log_det_real(m);
    if sign <= 0.0 {
        return Err(Error::Numerical("limit determinant is not positive".into()));
    }
    Ok(-ld)
}

pub fn genfun_normal_limit(beta: f64, r_star: f64, dim: usize, f: &TestFunction, grid: &GridQuadrature) -> Result<f64> {
    Ok(log_genfun_normal_limit(beta, r_star, dim, f, grid)?.exp())
}

/// `sum_{n>=1} (2 pi n beta)^(-d/2) exp(-|x-y|^2 / (2 n beta))`, `d > 2`.
///
/// Direct sum below `N0 = 200`; the tail from `N0` on is its integral
/// (a series in `c = |x-y|^2 / 2 beta`) plus the first two Euler-Maclaurin
/// corrections.
pub fn flat_green_kernel(beta: f64, dim: usize, r2: f64) -> Result<f64> {
    if dim <= 2 {
        return Err(Error::NotTraceClass(format!("sum of heat kernels diverges for d = {dim}")));
    }
    const N0: usize = 200;
    let a = dim as f64 / 2.0;
    let c = r2 / (2.0 * beta);
    let pref = (2.0 * PI * beta).powf(-a);
    let term = |n: f64| n.powf(-a) * (-c / n).exp();
    let mut sum = 0.0;
    for n in 1..N0 {
        sum += term(n as f64);
    }
    let n0 = N0 as f64;
    let mut integral = 0.0;
    let mut coef = 1.0;
    for j in 0..60 {
        let jf = j as f64;
        if j > 0 {
            coef *= -c / jf;
        }
        let t = coef / ((a + jf - 1.0) * n0.powf(a + jf - 1.0));
        integral += t;
        if t.abs() < 1e-18 * integral.abs() {
            break;
        }
    }
    let f0 = term(n0);
    let df0 = f0 * (-a / n0 + c / (n0 * n0));
    Ok(pref * (sum + integral + 0.5 * f0 - df0 / 12.0))
}

/// Nystrom matrix of `sqrt(1 - e^(-f)) [sum_{n>=1} G^n(beta)] sqrt(1 - e^(-f))`
/// for the free semigroup, `d > 2`.
pub fn build_kf(beta: f64, dim: usize, f: &TestFunction, grid: &GridQuadrature) -> Result<DiscretizedOperator> {
    if dim <= 2 {
        return Err(Error::NotTraceClass(format!("K_f is not trace class for d = {dim}")));
    }
    if grid.dim() != dim {
        return domain("grid dimension differs from d");
    }
    let u = sandwich(grid, f);
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let r2: f64 = grid.point(i).iter().zip(grid.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let k = u[i] * flat_green_kernel(beta, dim, r2)? * u[j];
            m[(i, j)] = k;
            m[(j, i)] = k;
        }
    }
    Ok(DiscretizedOperator { grid: Some(grid.clone()), entries: m })
}

/// `<sqrt(1-e^(-f)), (1 + K)^(-1) sqrt(1-e^(-f))>` for a sandwiched operator.
fn resolvent_form(k: &DMatrix<f64>, u: &[f64]) -> Result<f64> {
    let n = u.len();
    if n == 0 {
        return Ok(0.0);
    }
    let m = DMatrix::<f64>::identity(n, n) + k;
    let uv = DVector::from_column_slice(u);
    let w = m.lu().solve(&uv).ok_or_else(|| Error::Numerical("singular 1 + K".into()))?;
    Ok(uv.dot(&w))
}

/// Limit of `kappa^(-d/2) ln E[exp(-<f, xi>)]` in the condensed phase:
/// `-(mu - mu_c) / (pi^(d/2) lambda) <sqrt(1-e^(-f)), (1 + K_f)^(-1) sqrt(1-e^(-f))>`.
pub fn condensed_rate_functional(
    beta: f64,
    mu: f64,
    lambda: f64,
    dim: usize,
    f: &TestFunction,
    grid: &GridQuadrature,
) -> Result<f64> {
    check_coupling(mu, lambda)?;
    if dim <= 2 {
        return Err(Error::NotTraceClass(format!("K_f is not trace class for d = {dim}")));
    }
    let d = dim as f64;
    if classify_phase(beta, mu, lambda, d, CRITICAL_BAND)? != PhaseLabel::Condensed {
        return Err(Error::WrongPhase(format!("mu = {mu} is not in the condensed phase")));
    }
    let kf = build_kf(beta, dim, f, grid)?;
    let form = resolvent_form(&kf.entries, &sandwich(grid, f))?;
    Ok(-(mu - mu_crit(beta, lambda, d)?) / (PI.powf(d / 2.0) * lambda) * form)
}

/// Both sides of the eigenvalue-gap asymptotics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EigengapCheck {
    /// `(pi kappa)^(d/2) (g_0 - g~_0)`.
    pub lhs: f64,
    /// `<sqrt(1-e^(-f)), (1 + K_f^kappa)^(-1) sqrt(1-e^(-f))>` with the
    /// ground-state-projected trap kernels.
    pub rhs: f64,
    /// `||sqrt(1-e^(-f))||^2` on the grid, the upper end of the bracket.
    pub upper: f64,
}

pub fn eigengap_check(trap: &TrapParams, f: &TestFunction, grid: &GridQuadrature) -> Result<EigengapCheck> {
    if trap.dim <= 2 {
        return domain("the eigenvalue gap asymptotics need d > 2");
    }
    let tg = TrapGrid::new(trap, f, grid)?;
    let upper = tg.u_norm2();
    if tg.len() == 0 {
        return Ok(EigengapCheck { lhs: 0.0, rhs: 0.0, upper });
    }
    let at_one = tg.projected_series(&[Complex64::new(1.0, 0.0)], false)?;
    let rhs = resolvent_form(&at_one[0].a.map(|c| c.re), &tg.u)?;
    let top = top_level(&tg)?;
    // g_0 - g~_0 = 1 - 1/z* = q(z*)
    let gap = top.z_minus_one / top.z;
    Ok(EigengapCheck { lhs: (PI * trap.kappa).powf(trap.dim as f64 / 2.0) * gap, rhs, upper })
}

/// `-ln G(t f) / t` extrapolated to `t -> 0` by Richardson over `t in {h, h/2}`.
///
/// `log_genfun` returns `ln E[exp(-<g, xi>)]` for a test function `g`.
pub fn expectation_from_genfun(
    log_genfun: impl Fn(&TestFunction) -> Result<f64>,
    f: &TestFunction,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return domain(format!("step must be positive, got {h}"));
    }
    let e1 = -log_genfun(&f.scaled(h))? / h;
    let e2 = -log_genfun(&f.scaled(h / 2.0))? / (h / 2.0);
    Ok(2.0 * e2 - e1)
}

/// Default step for [`expectation_from_genfun`].
pub const DEFAULT_EXPECTATION_STEP: f64 = 1e-4;

/// Exact `E<f, xi>` from `(1/Xi) sum_n w_n sum_(a=1)^n h_(n-a) tau_a` with
/// `tau_a = int f(x) G^a(x, x) dx` (quadrature on `grid`).
pub fn linear_statistic_mean_exact(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    f: &TestFunction,
    grid: &GridQuadrature,
    n_max: usize,
) -> Result<f64> {
    use super::nystrom::PowerSums;
    let ps = PowerSums::trap(trap, n_max);
    let lw = super::partition::number_log_weights(trap, mu, lambda, &ps, n_max)?;
    let lh = super::partition::log_h(&ps, n_max)?;
    let tau: Vec<f64> = (1..=n_max)
        .map(|a| {
            grid.integrate(|x| {
                f.eval(x) * crate::spectral::mehler_kernel(trap, a as f64 * trap.beta, x, x).unwrap_or(0.0)
            })
        })
        .collect();
    let norm = crate::special::log_sum_exp(&lw);
    let mut acc = 0.0;
    for n in 1..=n_max {
        if !lw[n].is_finite() {
            continue;
        }
        // w_n = exp(lw_n) / h_n
        let inner: f64 = (1..=n).map(|a| (lh[n - a] - lh[n]).exp() * tau[a - 1]).sum();
        acc += (lw[n] - norm).exp() * inner;
    }
    Ok(acc)
}

/// Mean-field pair for the `f`-modified operator `G~`: root of
/// `ln r / (beta lambda) + kappa^(-d) Tr[r G~ (1 - r G~)^(-1)] = mu / lambda`
/// on `(0, z*)`.
pub fn solve_fixed_point_modified(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    f: &TestFunction,
    grid: &GridQuadrature,
    trunc: &SpectrumTruncation,
) -> Result<FixedPoint> {
    check_coupling(mu, lambda)?;
    let tg = TrapGrid::new(trap, f, grid)?;
    if tg.len() == 0 {
        return solve_fixed_point(trap, mu, lambda, Some(trunc), 1e-13);
    }
    let spec = Spectrum::new(trap, *trunc);
    let top = top_level(&tg)?;
    let zs = top.z;
    let kd = trap.volume();
    let bl = trap.beta * lambda;
    let h = |y: f64| -> Result<f64> {
        let s = 1.0 / (1.0 + (-y).exp());
        let r = zs * s;
        let e = real_pass(&tg, r, true)?;
        let gamma = 1.0 - r + r * e.q;
        let dgamma = -1.0 + e.q + r * e.dq;
        let excited = spec.sum_excited(|g| r * g / (1.0 - r * g));
        let occ = excited - r * e.tr_inv_da - r * dgamma / gamma;
        Ok(r.ln() / bl + occ / kd - mu / lambda)
    };
    let (mut lo, mut hi) = (-2.0, 2.0);
    let mut flo = h(lo)?;
    while flo > 0.0 {
        lo = 2.0 * lo - 2.0;
        flo = h(lo)?;
    }
    let mut fhi = h(hi)?;
    while fhi < 0.0 {
        hi = 2.0 * hi + 2.0;
        if hi > 60.0 {
            return Err(Error::NoSolution("modified fixed point escaped the bracket".into()));
        }
        fhi = h(hi)?;
    }
    // Illinois false position in the logit
    let mut side = 0i32;
    for _ in 0..200 {
        let y = (lo * fhi - hi * flo) / (fhi - flo);
        let fy = h(y)?;
        if fy < 0.0 {
            lo = y;
            flo = fy;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = y;
            fhi = fy;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
        if (hi - lo).abs() < 1e-13 * (1.0 + y.abs()) || fy == 0.0 {
            break;
        }
    }
    let y = 0.5 * (lo + hi);
    let r = zs / (1.0 + (-y).exp());
    Ok(FixedPoint { r, one_minus_r: 1.0 - r, s: kd * (trap.beta * mu - r.ln()) / bl })
}

/// `ln Det(1 - r G~)` through the ground-state split.
fn log_det_tilde(tg: &TrapGrid, spec: &Spectrum, r: f64) -> Result<f64> {
    let e = real_pass(tg, r, false)?;
    let gamma = 1.0 - r + r * e.q;
    if !(gamma > 0.0) {
        return Err(Error::Numerical(format!("r = {r} is not below the top level of G~")));
    }
    Ok(log_det_q(spec, r) + e.log_det + gamma.ln())
}

/// Condensed-phase saddle asymptotics of `ln Xi~(f)`:
/// `(1/2) ln(2 pi beta lambda / e^2 kappa^d) + (d-1) ln beta + kappa^d (beta mu - ln r~)^2 / 2 beta lambda
///  - ln(beta^d mu - zeta(d) lambda) - ln Det(1 - r~ G~)`.
///
/// The prefactor uses `lambda`, matching the untilded asymptotics.
pub fn log_xi_tilde_saddle_condensed(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    f: &TestFunction,
    grid: &GridQuadrature,
    trunc: &SpectrumTruncation,
) -> Result<f64> {
    check_coupling(mu, lambda)?;
    let d = trap.dim as f64;
    if trap.dim <= 2 {
        return Err(Error::NotTraceClass(format!("no condensed asymptotics for d = {}", trap.dim)));
    }
    if classify_phase(trap.beta, mu, lambda, d, CRITICAL_BAND)? != PhaseLabel::Condensed {
        return Err(Error::WrongPhase(format!("mu = {mu} is not in the condensed phase")));
    }
    let fp = solve_fixed_point_modified(trap, mu, lambda, f, grid, trunc)?;
    let tg = TrapGrid::new(trap, f, grid)?;
    let spec = Spectrum::new(trap, *trunc);
    let ld = if tg.len() == 0 { spec.sum(|g| (-fp.r * g).ln_1p()) } else { log_det_tilde(&tg, &spec, fp.r)? };
    let (b, kd) = (trap.beta, trap.volume());
    let excess = b.powf(d) * mu - zeta(d)? * lambda;
    Ok(0.5 * (2.0 * PI * b * lambda / kd).ln() - 1.0
        + (d - 1.0) * b.ln()
        + kd * (b * mu - fp.r.ln()).powi(2) / (2.0 * b * lambda)
        - excess.ln()
        - ld)
}
