use crate::error::{domain, Error, Result};
use crate::quadrature::GridQuadrature;
use crate::sampler::permanent;
use crate::spectral::{Spectrum, TrapParams};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Nystrom matrix `sqrt(w_i) K(x_i, x_j) sqrt(w_j)` of a symmetric kernel.
///
/// With `grid == None` the points carry counting measure and `entries` is
/// the kernel matrix itself.
#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    pub grid: Option<GridQuadrature>,
    pub entries: DMatrix<f64>,
}

impl DiscretizedOperator {
    pub fn from_kernel(grid: &GridQuadrature, kernel: impl Fn(&[f64], &[f64]) -> Result<f64>) -> Result<Self> {
        let n = grid.len();
        let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = sw[i] * kernel(grid.point(i), grid.point(j))? * sw[j];
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(Self { grid: Some(grid.clone()), entries: m })
    }

    /// Kernel matrix on a finite point set with counting measure.
    pub fn counting(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return domain("kernel matrix must be square");
        }
        Ok(Self { grid: None, entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(self.entries.clone()).eigenvalues.iter().cloned().collect();
        e.sort_by(|a, b| b.total_cmp(a));
        e
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Operand of [`fredholm_det`].
#[derive(Debug, Clone, Copy)]
pub enum OperatorInput<'a> {
    Spectral { eigenvalues: &'a [f64], multiplicities: &'a [f64] },
    Matrix(&'a DiscretizedOperator),
}

impl<'a> From<&'a Spectrum> for OperatorInput<'a> {
    fn from(s: &'a Spectrum) -> Self {
        OperatorInput::Spectral { eigenvalues: &s.eigenvalues, multiplicities: &s.degeneracies }
    }
}

impl<'a> From<&'a DiscretizedOperator> for OperatorInput<'a> {
    fn from(op: &'a DiscretizedOperator) -> Self {
        OperatorInput::Matrix(op)
    }
}

/// Principal-branch-free `ln det` of a complex matrix: sum of logs of the
/// LU pivots plus the permutation sign.
pub(crate) fn log_det_complex(m: DMatrix<Complex64>) -> Complex64 {
    if m.nrows() == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let lu = m.lu();
    let sign: f64 = lu.p().determinant();
    let u = lu.u();
    let mut s: Complex64 = u.diagonal().iter().map(|d| d.ln()).sum();
    if sign < 0.0 {
        s += Complex64::new(0.0, PI);
    }
    s
}

/// `(ln |det|, sign)` of a real matrix.
pub(crate) fn log_det_real(m: DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 1.0);
    }
    let lu = m.lu();
    let mut sign: f64 = lu.p().determinant();
    let mut s = 0.0;
    for d in lu.u().diagonal().iter() {
        if *d < 0.0 {
            sign = -sign;
        }
        s += d.abs().ln();
    }
    (s, sign)
}

/// `ln Det(1 - z K)`.
pub fn log_fredholm_det(op: OperatorInput<'_>, z: Complex64) -> Complex64 {
    match op {
        OperatorInput::Spectral { eigenvalues, multiplicities } => eigenvalues
            .iter()
            .zip(multiplicities)
            .map(|(g, m)| *m * (Complex64::new(1.0, 0.0) - z * g).ln())
            .sum(),
        OperatorInput::Matrix(op) => {
            let n = op.dim();
            let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
                let id = if i == j { 1.0 } else { 0.0 };
                Complex64::new(id, 0.0) - z * op.entries[(i, j)]
            });
            log_det_complex(m)
        }
    }
}

/// `Det(1 - z K)`: a finite product over the spectrum or a matrix determinant.
pub fn fredholm_det(op: OperatorInput<'_>, z: Complex64) -> Complex64 {
    match op {
        OperatorInput::Spectral { eigenvalues, multiplicities } => eigenvalues
            .iter()
            .zip(multiplicities)
            .map(|(g, m)| (Complex64::new(1.0, 0.0) - z * g).powf(*m))
            .product(),
        OperatorInput::Matrix(op) => {
            let n = op.dim();
            if n == 0 {
                return Complex64::new(1.0, 0.0);
            }
            DMatrix::<Complex64>::from_fn(n, n, |i, j| {
                let id = if i == j { 1.0 } else { 0.0 };
                Complex64::new(id, 0.0) - z * op.entries[(i, j)]
            })
            .determinant()
        }
    }
}

/// `|Det(1 - (e^(ix) - 1) A (1 - A)^(-1))|` for `0 <= A < 1`.
///
/// Each eigenvalue `a` contributes `|1 - (e^(ix) - 1) p|` with
/// `p = a / (1 - a)`, whose square is `1 + 4 sin^2(x/2) p (1 + p)`, so the
/// product is at least 1.
pub fn phase_det_modulus(op: OperatorInput<'_>, x: f64) -> Result<f64> {
    let (eigenvalues, multiplicities) = match op {
        OperatorInput::Spectral { eigenvalues, multiplicities } => (eigenvalues.to_vec(), multiplicities.to_vec()),
        OperatorInput::Matrix(op) => {
            let ev = op.eigenvalues();
            let ones = vec![1.0; ev.len()];
            (ev, ones)
        }
    };
    let s2 = (0.5 * x).sin().powi(2);
    let mut log_mod = 0.0;
    for (a, m) in eigenvalues.iter().zip(&multiplicities) {
        if !(*a < 1.0) || *a < -1e-12 {
            return domain(format!("eigenvalue {a} outside [0, 1)"));
        }
        let p = a.max(0.0) / (1.0 - a);
        log_mod += 0.5 * m * (4.0 * s2 * p * (1.0 + p)).ln_1p();
    }
    Ok(log_mod.exp())
}

/// Traces of operator powers, `p(k) = Tr A^k` for `k = 1..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSums {
    p: Vec<f64>,
}

impl PowerSums {
    pub fn new(p: Vec<f64>) -> Self {
        Self { p }
    }

    pub fn from_eigenvalues(eigenvalues: &[f64], multiplicities: &[f64], n_max: usize) -> Self {
        let mut p = vec![0.0; n_max];
        for (g, m) in eigenvalues.iter().zip(multiplicities) {
            let mut gk = 1.0;
            for pk in p.iter_mut() {
                gk *= g;
                *pk += m * gk;
            }
        }
        Self { p }
    }

    pub fn from_operator(op: &DiscretizedOperator, n_max: usize) -> Self {
        let e = op.eigenvalues();
        Self::from_eigenvalues(&e, &vec![1.0; e.len()], n_max)
    }

    /// Closed form `Tr G^k = (1 - exp(-k beta / kappa))^(-d)` for the trap.
    pub fn trap(trap: &TrapParams, n_max: usize) -> Self {
        let p = (1..=n_max)
            .map(|k| (-(-(k as f64) * trap.beta / trap.kappa).exp_m1()).powi(-(trap.dim as i32)))
            .collect();
        Self { p }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// `Tr A^k`, `k >= 1`.
    pub fn get(&self, k: usize) -> f64 {
        self.p[k - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// `h_0, ..., h_n` by the Newton recursion `h_n = (1/n) sum_k p_k h_(n-k)`.
pub fn complete_homogeneous(psums: &PowerSums, n: usize) -> Result<Vec<f64>> {
    if psums.len() < n {
        return domain(format!("need {n} power sums, have {}", psums.len()));
    }
    let mut h = vec![1.0; n + 1];
    for m in 1..=n {
        let s: f64 = (1..=m).map(|k| psums.get(k) * h[m - k]).sum();
        h[m] = s / m as f64;
    }
    Ok(h)
}

/// `ln h_0, ..., ln h_n` by the same recursion carried out in log space, so
/// that `h_n` far beyond the `f64` range stays usable. Every term is
/// positive, hence the log-sum-exp form loses nothing; a non-positive power
/// sum is rejected.
pub fn log_complete_homogeneous(psums: &PowerSums, n: usize) -> Result<Vec<f64>> {
    if psums.len() < n {
        return domain(format!("need {n} power sums, have {}", psums.len()));
    }
    let lp: Vec<f64> = (1..=n)
        .map(|k| match psums.get(k) {
            p if p > 0.0 && p.is_finite() => Ok(p.ln()),
            p => Err(Error::Domain(format!("power sum p_{k} = {p} is not positive and finite"))),
        })
        .collect::<Result<_>>()?;
    let mut lh = vec![0.0; n + 1];
    let mut terms = Vec::with_capacity(n);
    for m in 1..=n {
        terms.clear();
        terms.extend((1..=m).map(|k| lp[k - 1] + lh[m - k]));
        lh[m] = crate::special::log_sum_exp(&terms) - (m as f64).ln();
    }
    Ok(lh)
}

/// Trace of `A` on the `n`-fold symmetric tensor power: the complete
/// homogeneous symmetric polynomial `h_n` of the eigenvalues.
pub fn sym_trace_hn(psums: &PowerSums, n: i64) -> Result<f64> {
    if n < 0 {
        return domain(format!("tensor power must be non-negative, got {n}"));
    }
    Ok(complete_homogeneous(psums, n as usize)?[n as usize])
}

fn check_vere_jones(op: &DiscretizedOperator, n: usize) -> Result<()> {
    if n > 6 {
        return domain(format!("tuple enumeration is limited to n <= 6, got {n}"));
    }
    let rho = op.spectral_radius();
    if !(rho < 1.0) {
        return Err(Error::Numerical(format!("spectral radius {rho} is not below 1")));
    }
    Ok(())
}

/// Both sides of the Vere-Jones identity on a finite point set:
/// `(1/n!) sum over index n-tuples of Per J[i_a, i_b]` and `h_n(J)`.
pub fn vere_jones_check(op: &DiscretizedOperator, n: usize) -> Result<(f64, f64)> {
    check_vere_jones(op, n)?;
    let m = op.dim();
    let rhs = sym_trace_hn(&PowerSums::from_operator(op, n), n as i64)?;
    let mut idx = vec![0usize; n];
    let mut total = 0.0;
    let count = m.pow(n as u32);
    for _ in 0..count {
        let minor = DMatrix::from_fn(n, n, |a, b| op.entries[(idx[a], idx[b])]);
        total += permanent(&minor)?;
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < m {
                break;
            }
            *slot = 0;
        }
    }
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    Ok((total / fact, rhs))
}

/// `h_n` as the contour integral `(1/2 pi i) oint dz / (z^(n+1) Det(1 - zJ))`
/// on the circle of radius `0.9 / rho(J)`, trapezoidal in the angle.
pub fn vere_jones_circle(op: &DiscretizedOperator, n: usize, nodes: usize) -> Result<f64> {
    check_vere_jones(op, n)?;
    let rho = op.spectral_radius();
    let r = if rho > 0.0 { 0.9 / rho } else { 1.0 };
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..nodes {
        let th = 2.0 * PI * k as f64 / nodes as f64;
        let z = Complex64::from_polar(r, th);
        let ld = log_fredholm_det(OperatorInput::Matrix(op), z);
        acc += (-ld - z.ln() * n as f64).exp();
    }
    Ok(acc.re / nodes as f64)
}
