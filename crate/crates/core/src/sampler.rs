//! Finite-kappa permanental point field: exact particle-number law and
//! Metropolis-Hastings sampling of positions from the Janossy densities.

use crate::error::{domain, Error, Result};
use crate::fredholm::{complete_homogeneous, PowerSums, TestFunction};
use crate::spectral::{mehler_kernel, Spectrum, SpectrumTruncation, TrapParams};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Largest matrix size accepted by [`permanent`].
pub const MAX_PERMANENT_SIZE: usize = 14;

/// Permanent by Ryser's formula with Gray-code subset updates.
pub fn permanent(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    if m.ncols() != n {
        return domain("permanent needs a square matrix");
    }
    if n > MAX_PERMANENT_SIZE {
        return Err(Error::Size(n));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let mut row_sums = vec![0.0; n];
    let mut total = 0.0;
    let mut gray = 0u32;
    for k in 1u32..(1 << n) {
        let next = k ^ (k >> 1);
        let bit = (next ^ gray).trailing_zeros() as usize;
        let sign = if next & (1 << bit) != 0 { 1.0 } else { -1.0 };
        for (i, s) in row_sums.iter_mut().enumerate() {
            *s += sign * m[(i, bit)];
        }
        gray = next;
        let prod: f64 = row_sums.iter().product();
        if next.count_ones() % 2 == n as u32 % 2 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(total)
}

/// A finite configuration of points in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointConfiguration {
    pub points: Vec<Vec<f64>>,
}

impl PointConfiguration {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return domain("configuration coordinates must be finite");
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self { points: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `<f, xi> = sum_i f(x_i)`.
    pub fn linear_statistic(&self, f: &TestFunction) -> f64 {
        self.points.iter().map(|x| f.eval(x)).sum()
    }
}

fn gibbs_matrix(trap: &TrapParams, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let g = mehler_kernel(trap, trap.beta, &points[i], &points[j])?;
            m[(i, j)] = g;
            m[(j, i)] = g;
        }
    }
    Ok(m)
}

fn log_number_factor(trap: &TrapParams, mu: f64, lambda: f64, n: usize) -> f64 {
    let nf = n as f64;
    trap.beta * mu * nf - trap.beta * lambda * nf * nf / (2.0 * trap.volume())
}

/// Unnormalised Janossy density `e^(beta mu n - beta lambda n^2 / 2 kappa^d) Per[G(x_i, x_j)] / n!`.
pub fn janossy_weight(points: &PointConfiguration, trap: &TrapParams, mu: f64, lambda: f64) -> Result<f64> {
    let n = points.len();
    if n > MAX_PERMANENT_SIZE {
        return Err(Error::Size(n));
    }
    if points.points.iter().any(|x| x.len() != trap.dim) {
        return domain(format!("points must have {} coordinates", trap.dim));
    }
    let per = permanent(&gibbs_matrix(trap, &points.points)?)?;
    let log_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    Ok((log_number_factor(trap, mu, lambda, n) - log_fact).exp() * per)
}

/// `P(n)` for `n = 0..=n_max`.
#[derive(Debug, Clone, Serialize)]
pub struct NumberDistribution {
    pub weights: Vec<f64>,
}

impl NumberDistribution {
    /// Normalises non-negative weights.
    pub fn from_weights(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return domain("number weights must be finite, non-negative and non-empty");
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return domain("number weights sum to zero");
        }
        Ok(Self { weights: w.into_iter().map(|x| x / total).collect() })
    }

    pub fn n_max(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn prob(&self, n: usize) -> f64 {
        self.weights.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.weights.iter().enumerate().map(|(n, p)| (n as f64 - m).powi(2) * p).sum()
    }

    /// Inverse-CDF draw from a uniform `u` in `[0, 1)`.
    fn invert(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (n, p) in self.weights.iter().enumerate() {
            acc += p;
            if u < acc {
                return n;
            }
        }
        self.weights.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

fn normalise_log(lw: &[f64]) -> Result<NumberDistribution> {
    let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    NumberDistribution::from_weights(lw.iter().map(|x| (x - m).exp()).collect())
}

/// `P(n)` from the Newton recursion for `h_n`, with the tail beyond
/// `n_max` certified below the crate-wide tail tolerance.
pub fn number_distribution(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    trunc: &SpectrumTruncation,
    n_max: usize,
) -> Result<NumberDistribution> {
    let spec = Spectrum::new(trap, *trunc);
    let ps = PowerSums::from_eigenvalues(&spec.eigenvalues, &spec.degeneracies, n_max);
    let lw = crate::fredholm::number_log_weights(trap, mu, lambda, &ps, n_max)?;
    normalise_log(&lw)
}

/// `P(n)` computed independently of the Newton recursion: `h_n` as the
/// Cauchy coefficient of `1 / Det(1 - zG)` on the saddle-point circle
/// `sum_j rho g_j / (1 - rho g_j) = n`, and the Gaussian factor `e^(-beta lambda n^2 / 2 kappa^d)` as the
/// Fourier coefficient of the periodised Gaussian weight of the
/// linearisation identity, both by trapezoidal sums.
pub fn number_distribution_contour(
    trap: &TrapParams,
    mu: f64,
    lambda: f64,
    trunc: &SpectrumTruncation,
    n_max: usize,
) -> Result<NumberDistribution> {
    let spec = Spectrum::new(trap, *trunc);
    let log_det = |z: Complex64| -> Complex64 {
        spec.eigenvalues
            .iter()
            .zip(&spec.degeneracies)
            .map(|(g, d)| (Complex64::new(1.0, 0.0) - z * g).ln() * d)
            .sum()
    };
    // the saddle radius keeps the integrand free of cancellation
    let mean_count = |rho: f64| -> f64 {
        spec.eigenvalues.iter().zip(&spec.degeneracies).map(|(g, d)| d * rho * g / (1.0 - rho * g)).sum()
    };
    let saddle = |n: usize| -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0 / spec.eigenvalues[0]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_count(mid) < n as f64 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    // aliasing falls like (rho_n / rho_(n+nodes))^nodes
    let nodes_for = |n: usize| 1024.max(48 * (n + 1));
    let a = trap.volume() / (2.0 * trap.beta * lambda);
    // ln of the n-th Fourier coefficient of the periodised e^(-a x^2): a
    // trapezoidal sum on the line shifted by -i n/(2a), where the integrand
    // has no oscillation to cancel; the factor e^(-n^2/4a) is pulled out
    const GAUSS_NODES: usize = 256;
    let log_gauss = |n: usize| -> f64 {
        let sigma = n as f64 / (2.0 * a);
        let shift = -((n * n) as f64) / (4.0 * a);
        let mut acc = Complex64::new(0.0, 0.0);
        for l in 0..GAUSS_NODES {
            let y = -PI + 2.0 * PI * l as f64 / GAUSS_NODES as f64;
            for k in -12..=12 {
                let z = Complex64::new(y + 2.0 * PI * k as f64, -sigma);
                acc += (-a * z * z - Complex64::new(0.0, n as f64) * z - shift).exp();
            }
        }
        shift + acc.re.ln()
    };
    let log_norm = log_gauss(0);
    let mut lw = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let log_h = if n == 0 {
            0.0
        } else {
            let rho = saddle(n);
            let nodes = nodes_for(n);
            let mut h = 0.0;
            for k in 0..nodes {
                let th = 2.0 * PI * k as f64 / nodes as f64;
                let z = Complex64::from_polar(rho, th);
                h += (-log_det(z) - Complex64::new(rho.ln(), th) * n as f64).exp().re;
            }
            h /= nodes as f64;
            if !(h > 0.0) {
                return Err(Error::Numerical(format!("contour coefficient h_{n} is not positive")));
            }
            h.ln()
        };
        lw.push(trap.beta * mu * n as f64 + log_gauss(n) - log_norm + log_h);
    }
    normalise_log(&lw)
}

/// Settings of the position chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub burn_in: usize,
    pub thin: usize,
    /// Total chain steps budget: `(steps - burn_in) / thin` configurations are emitted.
    pub steps: usize,
    /// Random-walk step in units of `sqrt(kappa)`.
    pub walk_scale: f64,
    /// Probability of an independence proposal from `Omega^2`.
    pub independence_prob: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { seed: 0, burn_in: 10_000, thin: 10, steps: 10_000 + 100_000, walk_scale: 0.5, independence_prob: 0.2 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return domain("thin must be at least 1");
        }
        if self.steps < self.burn_in {
            return domain("steps must not be smaller than burn_in");
        }
        if !(self.walk_scale > 0.0 && self.walk_scale.is_finite()) {
            return domain("walk_scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.independence_prob) {
            return domain("independence_prob must lie in [0, 1]");
        }
        Ok(())
    }

    /// Number of configurations a sampler with this config emits.
    pub fn emissions(&self) -> usize {
        (self.steps - self.burn_in) / self.thin
    }
}

/// Single-site proposal density of moving a point from `from` to `to`:
/// the mixture of the `Omega^2` independence draw and the Gaussian walk.
fn log_proposal(trap: &TrapParams, cfg: &SamplerConfig, from: &[f64], to: &[f64]) -> f64 {
    let d = trap.dim as f64;
    let var_ind = trap.kappa / 2.0;
    let sigma = cfg.walk_scale * trap.kappa.sqrt();
    let r2_ind: f64 = to.iter().map(|x| x * x).sum();
    let r2_walk: f64 = to.iter().zip(from).map(|(a, b)| (a - b) * (a - b)).sum();
    let ind = (-r2_ind / (2.0 * var_ind)).exp() / (2.0 * PI * var_ind).powf(d / 2.0);
    let walk = (-r2_walk / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma).powf(d / 2.0);
    (cfg.independence_prob * ind + (1.0 - cfg.independence_prob) * walk).ln()
}

/// Metropolis-Hastings acceptance probability for replacing point `k` of
/// `x` by `y_k`, targeting `Per[G(x_i, x_j)]` at fixed `n`.
pub fn acceptance_probability(
    trap: &TrapParams,
    cfg: &SamplerConfig,
    x: &PointConfiguration,
    k: usize,
    y_k: &[f64],
) -> Result<f64> {
    if k >= x.len() {
        return domain("moved index out of range");
    }
    let mut y = x.clone();
    y.points[k] = y_k.to_vec();
    let px = permanent(&gibbs_matrix(trap, &x.points)?)?;
    let py = permanent(&gibbs_matrix(trap, &y.points)?)?;
    let lr = py.ln() - px.ln() + log_proposal(trap, cfg, y_k, &x.points[k]) - log_proposal(trap, cfg, &x.points[k], y_k);
    Ok(lr.exp().min(1.0))
}

/// Density of proposing `y_k` from `x` (uniform choice of the moved index).
pub fn proposal_density(trap: &TrapParams, cfg: &SamplerConfig, x: &PointConfiguration, k: usize, y_k: &[f64]) -> f64 {
    log_proposal(trap, cfg, &x.points[k], y_k).exp() / x.len() as f64
}

struct Chain {
    rng: ChaCha20Rng,
    points: Vec<Vec<f64>>,
    gram: DMatrix<f64>,
    per: f64,
    accepted: u64,
    proposed: u64,
}

impl Chain {
    fn new(trap: &TrapParams, seed: u64, n: usize) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(n as u64 + 1);
        let sd = (trap.kappa / 2.0).sqrt();
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..trap.dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let gram = gibbs_matrix(trap, &points)?;
        let per = permanent(&gram)?;
        Ok(Self { rng, points, gram, per, accepted: 0, proposed: 0 })
    }

    fn step(&mut self, trap: &TrapParams, cfg: &SamplerConfig) -> Result<()> {
        let n = self.points.len();
        let k = self.rng.random_range(0..n);
        let y: Vec<f64> = if self.rng.random::<f64>() < cfg.independence_prob {
            let sd = (trap.kappa / 2.0).sqrt();
            (0..trap.dim).map(|_| sd * self.rng.sample::<f64, _>(StandardNormal)).collect()
        } else {
            let sd = cfg.walk_scale * trap.kappa.sqrt();
            self.points[k].iter().map(|x| x + sd * self.rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let mut gram = self.gram.clone();
        for j in 0..n {
            let g = if j == k {
                mehler_kernel(trap, trap.beta, &y, &y)?
            } else {
                mehler_kernel(trap, trap.beta, &y, &self.points[j])?
            };
            gram[(k, j)] = g;
            gram[(j, k)] = g;
        }
        let per = permanent(&gram)?;
        let lr = per.ln() - self.per.ln() + log_proposal(trap, cfg, &y, &self.points[k])
            - log_proposal(trap, cfg, &self.points[k], &y);
        self.proposed += 1;
        if lr >= 0.0 || self.rng.random::<f64>() < lr.exp() {
            self.points[k] = y;
            self.gram = gram;
            self.per = per;
            self.accepted += 1;
        }
        Ok(())
    }
}

/// Two-stage sampler: `n` is drawn exactly from the number law, positions
/// come from one Metropolis-Hastings chain per `n`, burned in on first use
/// and advanced `thin` steps per emitted configuration.
///
/// Stream 0 of the seeded ChaCha20 generator drives the `n` draws and
/// stream `n + 1` the chain at `n`, so the output is a function of the seed
/// and config alone.
pub struct Sampler {
    trap: TrapParams,
    cfg: SamplerConfig,
    ndist: NumberDistribution,
    number_rng: ChaCha20Rng,
    chains: BTreeMap<usize, Chain>,
    emitted: usize,
}

impl Sampler {
    pub fn new(trap: &TrapParams, cfg: SamplerConfig, ndist: NumberDistribution) -> Result<Self> {
        cfg.validate()?;
        if ndist.weights.iter().enumerate().any(|(n, p)| *p > 0.0 && n > MAX_PERMANENT_SIZE) {
            return Err(Error::Size(ndist.n_max()));
        }
        let mut number_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        number_rng.set_stream(0);
        Ok(Self { trap: *trap, cfg, ndist, number_rng, chains: BTreeMap::new(), emitted: 0 })
    }

    /// Fraction of accepted moves over all chains so far.
    pub fn acceptance_rate(&self) -> f64 {
        let (a, p) = self.chains.values().fold((0, 0), |(a, p), c| (a + c.accepted, p + c.proposed));
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    }

    fn draw(&mut self) -> Result<PointConfiguration> {
        let n = self.ndist.invert(self.number_rng.random::<f64>());
        if n == 0 {
            return Ok(PointConfiguration::empty());
        }
        if !self.chains.contains_key(&n) {
            let mut chain = Chain::new(&self.trap, self.cfg.seed, n)?;
            for _ in 0..self.cfg.burn_in {
                chain.step(&self.trap, &self.cfg)?;
            }
            self.chains.insert(n, chain);
        }
        let chain = self.chains.get_mut(&n).expect("chain inserted above");
        for _ in 0..self.cfg.thin {
            chain.step(&self.trap, &self.cfg)?;
        }
        Ok(PointConfiguration { points: chain.points.clone() })
    }
}

impl Iterator for Sampler {
    type Item = Result<PointConfiguration>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.emitted >= self.cfg.emissions() {
            return None;
        }
        self.emitted += 1;
        Some(self.draw())
    }
}

/// Stream of configurations of the finite-kappa field.
pub fn sample_configuration(
    trap: &TrapParams,
    cfg: SamplerConfig,
    ndist: NumberDistribution,
) -> Result<Sampler> {
    Sampler::new(trap, cfg, ndist)
}

/// Sample mean of `<f, xi>` with two standard errors: batch means over
/// `floor(sqrt(N))` consecutive batches, which absorbs chain
/// autocorrelation, and the naive i.i.d. one.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearStatistic {
    pub mean: f64,
    pub std_error: f64,
    pub naive_std_error: f64,
    pub samples: usize,
}

pub fn empirical_linear_statistic(samples: &[PointConfiguration], f: &TestFunction) -> Result<LinearStatistic> {
    let values: Vec<f64> = samples.iter().map(|c| c.linear_statistic(f)).collect();
    mean_with_errors(&values)
}

/// Mean of a sample path with batch-means and naive standard errors.
pub fn mean_with_errors(values: &[f64]) -> Result<LinearStatistic> {
    let n = values.len();
    if n < 2 {
        return domain("at least two samples are needed");
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let naive = (var / n as f64).sqrt();
    let batches = ((n as f64).sqrt().floor() as usize).max(2);
    let size = n / batches;
    let std_error = if size == 0 {
        naive
    } else {
        let means: Vec<f64> =
            (0..batches).map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
        let bm = means.iter().sum::<f64>() / batches as f64;
        let bvar = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
        (bvar / batches as f64).sqrt()
    };
    Ok(LinearStatistic { mean, std_error, naive_std_error: naive, samples: n })
}

/// Pearson goodness of fit of observed counts to probabilities.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Bins are merged from the tail inward until every expected count is at
/// least 5; counts beyond `probs` fall into the last bin.
pub fn chi_square_test(counts: &[u64], probs: &[f64]) -> Result<ChiSquareTest> {
    let total: u64 = counts.iter().sum();
    if total == 0 || probs.is_empty() {
        return domain("chi-square test needs counts and probabilities");
    }
    let len = probs.len().max(counts.len());
    let obs: Vec<f64> = (0..len).map(|i| counts.get(i).copied().unwrap_or(0) as f64).collect();
    let exp: Vec<f64> = (0..len).map(|i| probs.get(i).copied().unwrap_or(0.0) * total as f64).collect();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for i in 0..len {
        o += obs[i];
        e += exp[i];
        if e >= 5.0 {
            bins.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += o;
        last.1 += e;
    } else {
        bins.push((o, e));
    }
    if bins.len() < 2 {
        return domain("fewer than two bins with expected count >= 5");
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(ChiSquareTest { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

/// `h_n` of the trap spectrum, exposed for cross-checks of the Janossy
/// normalisation.
pub fn trap_complete_homogeneous(trap: &TrapParams, trunc: &SpectrumTruncation, n: usize) -> Result<Vec<f64>> {
    let spec = Spectrum::new(trap, *trunc);
    complete_homogeneous(&PowerSums::from_eigenvalues(&spec.eigenvalues, &spec.degeneracies, n), n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_permanent(m: &DMatrix<f64>) -> f64 {
        fn rec(m: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == m.nrows() {
                return 1.0;
            }
            let mut s = 0.0;
            for j in 0..m.ncols() {
                if !used[j] {
                    used[j] = true;
                    s += m[(row, j)] * rec(m, row + 1, used);
                    used[j] = false;
                }
            }
            s
        }
        rec(m, 0, &mut vec![false; m.ncols()])
    }

    #[test]
    fn permanent_small_cases() {
        assert_eq!(permanent(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(permanent(&m).unwrap(), 10.0);
        assert_eq!(permanent(&DMatrix::zeros(0, 0)).unwrap(), 1.0);
        assert!(matches!(permanent(&DMatrix::zeros(15, 15)), Err(Error::Size(15))));
    }

    #[test]
    fn permanent_matches_factorial_expansion() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let m = DMatrix::from_fn(7, 7, |_, _| rng.random::<f64>() - 0.3);
        let a = permanent(&m).unwrap();
        let b = naive_permanent(&m);
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn janossy_small_cases() {
        let trap = TrapParams::new(1.5, 1.0, 2).unwrap();
        assert_eq!(janossy_weight(&PointConfiguration::empty(), &trap, 0.3, 1.0).unwrap(), 1.0);
        let x = vec![0.2, -0.4];
        let one = PointConfiguration::new(vec![x.clone()]).unwrap();
        let want = (0.3 - 1.0 / (2.0 * trap.volume())).exp() * mehler_kernel(&trap, 1.0, &x, &x).unwrap();
        assert!((janossy_weight(&one, &trap, 0.3, 1.0).unwrap() / want - 1.0).abs() < 1e-14);
        let p = vec![vec![0.1, 0.0], vec![-0.5, 0.7], vec![1.0, 0.3]];
        let q = vec![p[2].clone(), p[0].clone(), p[1].clone()];
        let a = janossy_weight(&PointConfiguration::new(p).unwrap(), &trap, 0.3, 1.0).unwrap();
        let b = janossy_weight(&PointConfiguration::new(q).unwrap(), &trap, 0.3, 1.0).unwrap();
        assert!((a / b - 1.0).abs() < 1e-14);
    }

    #[test]
    fn janossy_integrates_to_number_weight() {
        // int J_n = e^(beta mu n - ...) h_n for n = 2 in d = 1, since int Per = n! h_n
        let trap = TrapParams::new(1.0, 1.0, 1).unwrap();
        let (mu, lambda) = (0.2, 1.0);
        let (xs, ws) = crate::quadrature::gauss_legendre(60, -8.0, 8.0);
        let mut total = 0.0;
        for (x, wx) in xs.iter().zip(&ws) {
            for (y, wy) in xs.iter().zip(&ws) {
                let c = PointConfiguration::new(vec![vec![*x], vec![*y]]).unwrap();
                total += wx * wy * janossy_weight(&c, &trap, mu, lambda).unwrap();
            }
        }
        let h = trap_complete_homogeneous(&trap, &SpectrumTruncation::adaptive(&trap, 1e-14), 2).unwrap();
        let want = log_number_factor(&trap, mu, lambda, 2).exp() * h[2];
        assert!((total / want - 1.0).abs() < 1e-10, "{total} vs {want}");
    }

    #[test]
    fn number_distribution_two_ways() {
        let trap = TrapParams::new(1.0, 1.0, 3).unwrap();
        let tr = SpectrumTruncation::adaptive(&trap, 1e-14);
        let a = number_distribution(&trap, 0.0, 1.0, &tr, 12).unwrap();
        let b = number_distribution_contour(&trap, 0.0, 1.0, &tr, 12).unwrap();
        for n in 0..=12 {
            assert!((a.prob(n) - b.prob(n)).abs() < 1e-10, "n={n}: {} vs {}", a.prob(n), b.prob(n));
        }
        assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn number_distribution_two_ways_condensed() {
        // the weight peaks near n = 2 kappa^3, where e^(-n^2/2 kappa^3) is tiny
        let trap = TrapParams::new(3.0, 1.0, 3).unwrap();
        let tr = SpectrumTruncation::adaptive(&trap, 1e-14);
        let n_max = crate::fredholm::default_n_max(&trap, 2.0, 1.0).unwrap();
        let a = number_distribution(&trap, 2.0, 1.0, &tr, n_max).unwrap();
        let b = number_distribution_contour(&trap, 2.0, 1.0, &tr, n_max).unwrap();
        for n in 0..=n_max {
            let rel = (a.prob(n) - b.prob(n)).abs() / a.prob(n);
            assert!(rel < 1e-10 || a.prob(n) < 1e-200, "n={n}: {} vs {}", a.prob(n), b.prob(n));
        }
    }

    #[test]
    fn number_distribution_limits() {
        let trap = TrapParams::new(1.0, 1.0, 3).unwrap();
        let tr = SpectrumTruncation::adaptive(&trap, 1e-14);
        assert!(number_distribution(&trap, -40.0, 1.0, &tr, 5).unwrap().prob(0) > 1.0 - 1e-12);
        assert!(number_distribution(&trap, 0.0, 1e4, &tr, 5).unwrap().prob(0) > 1.0 - 1e-12);
        assert!(matches!(number_distribution(&trap, 3.0, 1.0, &tr, 3), Err(Error::Truncation(_))));
    }

    #[test]
    fn detailed_balance_on_random_pairs() {
        let trap = TrapParams::new(2.0, 1.0, 2).unwrap();
        let cfg = SamplerConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pts: Vec<Vec<f64>> = (0..4).map(|_| (0..2).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()).collect();
            let x = PointConfiguration::new(pts).unwrap();
            let k = rng.random_range(0..4);
            let yk: Vec<f64> = (0..2).map(|_| 3.0 * rng.random::<f64>() - 1.5).collect();
            let mut y = x.clone();
            y.points[k] = yk.clone();
            let pix = permanent(&gibbs_matrix(&trap, &x.points).unwrap()).unwrap();
            let piy = permanent(&gibbs_matrix(&trap, &y.points).unwrap()).unwrap();
            let fwd = pix * proposal_density(&trap, &cfg, &x, k, &yk) * acceptance_probability(&trap, &cfg, &x, k, &yk).unwrap();
            let xk = x.points[k].clone();
            let bwd = piy * proposal_density(&trap, &cfg, &y, k, &xk) * acceptance_probability(&trap, &cfg, &y, k, &xk).unwrap();
            assert!((fwd / bwd - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_is_deterministic_and_respects_budget() {
        let trap = TrapParams::new(1.0, 1.0, 1).unwrap();
        let nd = NumberDistribution::from_weights(vec![0.2, 0.5, 0.3]).unwrap();
        let cfg = SamplerConfig { seed: 11, burn_in: 50, thin: 2, steps: 250, ..Default::default() };
        let a: Vec<_> = sample_configuration(&trap, cfg, nd.clone()).unwrap().map(|c| c.unwrap()).collect();
        let b: Vec<_> = sample_configuration(&trap, cfg, nd.clone()).unwrap().map(|c| c.unwrap()).collect();
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        let none = SamplerConfig { steps: 50, ..cfg };
        assert_eq!(sample_configuration(&trap, none, nd).unwrap().count(), 0);
    }

    #[test]
    fn heavy_interaction_gives_empty_configurations() {
        let trap = TrapParams::new(1.0, 1.0, 2).unwrap();
        let tr = SpectrumTruncation::adaptive(&trap, 1e-14);
        let nd = number_distribution(&trap, 0.0, 1e3, &tr, 4).unwrap();
        let cfg = SamplerConfig { burn_in: 0, thin: 1, steps: 200, ..Default::default() };
        assert!(sample_configuration(&trap, cfg, nd).unwrap().all(|c| c.unwrap().is_empty()));
    }

    #[test]
    fn one_point_marginal_matches_diagonal() {
        // n = 1 density is G(x, x) / Tr G, a centred Gaussian in d = 1
        let trap = TrapParams::new(1.0, 1.0, 1).unwrap();
        let nd = NumberDistribution::from_weights(vec![0.0, 1.0]).unwrap();
        let cfg = SamplerConfig { seed: 5, burn_in: 1000, thin: 5, steps: 1000 + 5 * 20_000, ..Default::default() };
        let xs: Vec<f64> = sample_configuration(&trap, cfg, nd).unwrap().map(|c| c.unwrap().points[0][0]).collect();
        // G(x,x) = pref exp(-2 a x^2), a = tanh(beta / 2 kappa) / 2 kappa
        let a = (0.5f64).tanh() / 2.0;
        let sd = (1.0 / (4.0 * a)).sqrt();
        let normal = statrs::distribution::Normal::new(0.0, sd).unwrap();
        let edges: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.5 * sd).collect();
        let mut counts = vec![0u64; edges.len() + 1];
        for x in &xs {
            counts[edges.iter().filter(|e| x >= e).count()] += 1;
        }
        let mut probs = Vec::new();
        let mut prev = 0.0;
        for e in &edges {
            let c = normal.cdf(*e);
            probs.push(c - prev);
            prev = c;
        }
        probs.push(1.0 - prev);
        // thinned chain: batch the counts to reduce correlation effects
        let t = chi_square_test(&counts, &probs).unwrap();
        assert!(t.p_value > 1e-3, "{t:?}");
    }

    #[test]
    fn linear_statistic_errors() {
        let f = TestFunction::zero(2);
        let s = vec![PointConfiguration::empty(), PointConfiguration::new(vec![vec![0.0, 0.0]]).unwrap()];
        let r = empirical_linear_statistic(&s, &f).unwrap();
        assert_eq!((r.mean, r.std_error), (0.0, 0.0));
        assert!(empirical_linear_statistic(&s[..1], &f).is_err());
        let c = TestFunction::constant(2.0, crate::quadrature::BoxDomain::cube(&[0.0, 0.0], 10.0).unwrap()).unwrap();
        let s3 = vec![s[0].clone(), s[1].clone(), PointConfiguration::new(vec![vec![1.0, 1.0], vec![2.0, 0.0]]).unwrap()];
        assert!((empirical_linear_statistic(&s3, &c).unwrap().mean - 2.0).abs() < 1e-15);
    }

    #[test]
    fn chi_square_merges_sparse_bins() {
        let t = chi_square_test(&[50, 30, 15, 4, 1], &[0.5, 0.3, 0.15, 0.04, 0.01]).unwrap();
        assert_eq!(t.dof, 3);
        assert!(t.statistic < 1e-12 && t.p_value > 0.999);
    }
}
