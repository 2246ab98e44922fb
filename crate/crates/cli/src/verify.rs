//! Registered property checks, each reported with its measured margin.

use crate::config::Resolved;
use crate::output::{emit, Cell, Table};
use crate::CliError;
use bosefield::fredholm::{
    build_kf, complete_homogeneous, default_n_max, eigengap_check, fredholm_det, phase_det_modulus, vere_jones_check,
    DiscretizedOperator, OperatorInput, PowerSums, TestFunction,
};
use bosefield::inequalities::check_all;
use bosefield::quadrature::{BoxDomain, GridQuadrature};
use bosefield::sampler::{number_distribution, number_distribution_contour};
use bosefield::spectral::{mehler_kernel, trace_gibbs, Spectrum, SpectrumTruncation, TrapParams};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// One row of the report. Identity checks pass when `measured <= threshold`;
/// inequality rows report the smallest margin, which must not be negative.
struct Outcome {
    name: String,
    measured: f64,
    threshold: f64,
    passed: bool,
}

fn within(name: &str, measured: f64, threshold: f64) -> Outcome {
    Outcome { name: name.into(), measured, threshold, passed: measured <= threshold }
}

fn semigroup() -> Result<f64, CliError> {
    let t = TrapParams::new(2.0, 0.7, 1)?;
    let grid = GridQuadrature::gauss_legendre(BoxDomain::cube(&[0.0], 25.0)?, 240)?;
    let pts = [-3.0, -1.5, 0.0, 1.5, 3.0];
    let mut worst: f64 = 0.0;
    for &x in &pts {
        for &y in &pts {
            let comp = grid.integrate(|z| {
                mehler_kernel(&t, 0.7, &[x], z).unwrap_or(f64::NAN) * mehler_kernel(&t, 0.7, z, &[y]).unwrap_or(f64::NAN)
            });
            let direct = mehler_kernel(&t, 1.4, &[x], &[y])?;
            worst = worst.max((comp / direct - 1.0).abs());
        }
    }
    Ok(worst)
}

fn trace() -> Result<f64, CliError> {
    let mut worst: f64 = 0.0;
    for dim in [1, 2] {
        for kappa in [1.0, 10.0] {
            let t = TrapParams::new(kappa, 1.0, dim)?;
            let half = (40.0 * kappa / (0.5 / kappa).tanh()).sqrt();
            let grid = GridQuadrature::gauss_legendre(BoxDomain::cube(&vec![0.0; dim], half)?, 160)?;
            let tr = grid.integrate(|x| mehler_kernel(&t, 1.0, x, x).unwrap_or(f64::NAN));
            worst = worst.max((tr / trace_gibbs(&t) - 1.0).abs());
        }
    }
    Ok(worst)
}

fn random_psd(rng: &mut ChaCha20Rng, n: usize, radius: f64) -> Result<DiscretizedOperator, CliError> {
    let b = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    let a = &b * b.transpose();
    let rho = a.symmetric_eigenvalues().max();
    Ok(DiscretizedOperator::counting(a * (radius / rho))?)
}

fn vere_jones(seed: u64) -> Result<f64, CliError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let op = random_psd(&mut rng, 5, 0.8)?;
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        let (lhs, rhs) = vere_jones_check(&op, n)?;
        worst = worst.max((lhs / rhs - 1.0).abs());
    }
    Ok(worst)
}

/// `|sum_n h_n z^n Det(1 - zG) - 1|` on the trap spectrum, and the largest
/// gap between the two independent particle-number distributions.
fn duality() -> Result<(f64, f64), CliError> {
    let t = TrapParams::new(3.0, 1.0, 3)?;
    let spec = Spectrum::adaptive(&t);
    let z: f64 = 0.5;
    let n = 400;
    let h = complete_homogeneous(&PowerSums::from_eigenvalues(&spec.eigenvalues, &spec.degeneracies, n), n)?;
    let series: f64 = h.iter().enumerate().map(|(k, hk)| hk * z.powi(k as i32)).sum();
    let det = fredholm_det((&spec).into(), Complex64::new(z, 0.0)).re;
    let tr = SpectrumTruncation::adaptive(&t, 1e-14);
    let n_max = default_n_max(&t, 0.0, 1.0)?;
    let a = number_distribution(&t, 0.0, 1.0, &tr, n_max)?;
    let b = number_distribution_contour(&t, 0.0, 1.0, &tr, n_max)?;
    let gap = a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(((series * det - 1.0).abs(), gap))
}

/// `1 - min |Det(1 - (e^(ix) - 1) A (1 - A)^(-1))|` over random draws.
fn det_bound(seed: u64) -> Result<f64, CliError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for i in 0..100 {
        let x = rng.random_range(-10.0..10.0);
        let r = rng.random_range(0.0..1.0);
        let v = if i % 2 == 0 {
            let t = TrapParams::new(rng.random_range(0.5..20.0), rng.random_range(0.2..3.0), rng.random_range(1..=3))?;
            let s = Spectrum::adaptive(&t);
            let ev: Vec<f64> = s.eigenvalues.iter().map(|g| r * g).collect();
            phase_det_modulus(OperatorInput::Spectral { eigenvalues: &ev, multiplicities: &s.degeneracies }, x)?
        } else {
            let n = rng.random_range(2..=8);
            phase_det_modulus(OperatorInput::Matrix(&random_psd(&mut rng, n, r)?), x)?
        };
        worst = worst.min(v);
    }
    Ok(1.0 - worst)
}

/// Relative gap between the scaled eigenvalue shift and its flat-space form
/// at increasing `kappa`; also whether each value stays in its bracket.
fn eigengap_trend() -> Result<(Vec<f64>, bool), CliError> {
    let f = TestFunction::bump(&[0.0; 3], 1.0, 1.0)?;
    let g = f.grid(6)?;
    let kf = build_kf(1.0, 3, &f, &g)?;
    let u = DVector::from_iterator(g.len(), (0..g.len()).map(|i| (g.weights()[i] * f.one_minus_exp(g.point(i))).sqrt()));
    let m = DMatrix::<f64>::identity(g.len(), g.len()) + &kf.entries;
    let flat = u.dot(&m.lu().solve(&u).ok_or_else(|| CliError::Numerical("singular 1 + K_f".into()))?);
    let mut gaps = Vec::new();
    let mut bracketed = true;
    for k in [25.0, 50.0, 100.0] {
        let e = eigengap_check(&TrapParams::new(k, 1.0, 3)?, &f, &g)?;
        bracketed &= 0.0 <= e.lhs && e.lhs <= e.upper;
        gaps.push((e.lhs / flat - 1.0).abs());
    }
    Ok((gaps, bracketed))
}

pub fn run(cfg: &Resolved) -> Result<bool, CliError> {
    // `--tol` replaces the thresholds of the identity checks
    let th = |default: f64| if cfg.tol_given { cfg.tol } else { default };
    let mut out = vec![
        within("semigroup identity", semigroup()?, th(1e-8)),
        within("trace identity", trace()?, th(1e-6)),
        within("Vere-Jones identity", vere_jones(cfg.seed)?, th(1e-10)),
    ];
    let (series, ndist) = duality()?;
    out.push(within("h_n series times determinant", series, th(1e-10)));
    out.push(within("number distribution, recursion vs contour", ndist, th(1e-10)));
    out.push(within("determinant modulus deficit", det_bound(cfg.seed)?, 1e-12));
    for d in 1..=3 {
        for c in check_all(d) {
            out.push(Outcome {
                name: format!("inequality {} ({}), d={d}", c.name, c.domain),
                measured: c.min_margin,
                threshold: 0.0,
                passed: c.passed(),
            });
        }
    }
    let (gaps, bracketed) = eigengap_trend()?;
    let trend = gaps.windows(2).all(|w| w[1] < w[0]);
    out.push(Outcome {
        name: "eigenvalue gap trend at kappa 25, 50, 100".into(),
        measured: gaps[2],
        threshold: 0.1,
        passed: trend && bracketed && gaps[2] <= 0.1,
    });

    let mut t = Table::new("verify", &["check", "measured", "threshold", "passed"]);
    for o in &out {
        t.push(vec![Cell::Text(o.name.clone()), o.measured.into(), o.threshold.into(), o.passed.into()]);
    }
    emit(cfg.out.as_deref(), &t.render(cfg))?;
    Ok(out.iter().all(|o| o.passed))
}
