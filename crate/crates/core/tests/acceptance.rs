//! End-to-end acceptance checks. Each check prints one PASS/FAIL line with
//! the measured numbers; the process exits nonzero if any check fails.

use bosefield::fredholm::*;
use bosefield::inequalities::check_all;
use bosefield::meanfield::{condensed_rate, solve_fixed_point};
use bosefield::quadrature::{BoxDomain, GridQuadrature};
use bosefield::sampler::*;
use bosefield::spectral::{mehler_kernel, trace_gibbs, Spectrum, SpectrumTruncation, TrapParams};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

type Check = (&'static str, fn() -> (bool, String));

/// `mu` at which the limiting fixed point is `r* = 1/2` for `beta = lambda = 1`, `d = 3`.
const MU_NORMAL: f64 = -0.1559340;
const MU_CONDENSED: f64 = 2.0;

fn trap(kappa: f64, dim: usize) -> TrapParams {
    TrapParams::new(kappa, 1.0, dim).unwrap()
}

fn bump() -> TestFunction {
    TestFunction::bump(&[0.0; 3], 1.0, 1.0).unwrap()
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ")
}

fn semigroup_identity() -> (bool, String) {
    let t = trap(2.0, 1);
    let (b1, b2) = (0.7, 0.7);
    let grid = GridQuadrature::gauss_legendre(BoxDomain::cube(&[0.0], 25.0).unwrap(), 240).unwrap();
    let pts = [-3.0, -1.5, 0.0, 1.5, 3.0];
    let mut worst: f64 = 0.0;
    for &x in &pts {
        for &y in &pts {
            let comp = grid.integrate(|z| mehler_kernel(&t, b1, &[x], z).unwrap() * mehler_kernel(&t, b2, z, &[y]).unwrap());
            let direct = mehler_kernel(&t, b1 + b2, &[x], &[y]).unwrap();
            worst = worst.max((comp / direct - 1.0).abs());
        }
    }
    (worst < 1e-8, format!("max relative error {worst:.3e} over 25 pairs (< 1e-8)"))
}

fn trace_identity() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for dim in [1, 2] {
        for kappa in [1.0, 10.0] {
            let t = trap(kappa, dim);
            // the diagonal decays like exp(-tanh(beta/2 kappa) |x|^2 / kappa)
            let half = (40.0 * kappa / (0.5 / kappa).tanh()).sqrt();
            let grid = GridQuadrature::gauss_legendre(BoxDomain::cube(&vec![0.0; dim], half).unwrap(), 160).unwrap();
            let tr = grid.integrate(|x| mehler_kernel(&t, 1.0, x, x).unwrap());
            worst = worst.max((tr / trace_gibbs(&t) - 1.0).abs());
        }
    }
    (worst < 1e-6, format!("max relative error {worst:.3e} over d in {{1,2}}, kappa in {{1,10}} (< 1e-6)"))
}

fn vere_jones() -> (bool, String) {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let b = DMatrix::<f64>::from_fn(5, 5, |_, _| rng.random::<f64>() - 0.5);
    let a = &b * b.transpose();
    let rho = a.symmetric_eigenvalues().max();
    let op = DiscretizedOperator::counting(a * (0.8 / rho)).unwrap();
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        let (lhs, rhs) = vere_jones_check(&op, n).unwrap();
        worst = worst.max((lhs / rhs - 1.0).abs());
    }
    (worst < 1e-10, format!("max relative error {worst:.3e} for n = 1..4 (< 1e-10)"))
}

fn fixed_point_normal() -> (bool, String) {
    let ks = [25.0, 50.0, 100.0, 200.0];
    let gaps: Vec<f64> = ks
        .iter()
        .map(|&k| (solve_fixed_point(&trap(k, 3), MU_NORMAL, 1.0, None, 1e-13).unwrap().r - 0.5).abs())
        .collect();
    let ok = decreasing(&gaps) && gaps[3] < 1e-2;
    (ok, format!("|r - 1/2| at kappa 25, 50, 100, 200: {} (< 1e-2 at 200, decreasing)", fmt(&gaps)))
}

fn fixed_point_condensed() -> (bool, String) {
    let limit = condensed_rate(1.0, MU_CONDENSED, 1.0, 3.0).unwrap();
    let ks = [30.0, 50.0, 100.0, 200.0];
    let mut errs = Vec::new();
    let mut s50 = f64::NAN;
    for &k in &ks {
        let fp = solve_fixed_point(&trap(k, 3), MU_CONDENSED, 1.0, None, 1e-15).unwrap();
        errs.push((k.powi(3) * fp.one_minus_r / limit - 1.0).abs());
        if k == 50.0 {
            s50 = fp.s / k.powi(3);
        }
    }
    let s_err = (s50 / MU_CONDENSED - 1.0).abs();
    let ok = errs.iter().all(|e| *e < 0.02) && decreasing(&errs) && s_err < 0.01;
    (
        ok,
        format!(
            "kappa^3 (1 - r) relative error at kappa 30, 50, 100, 200: {} (< 2e-2 for all, decreasing); s/kappa^3 at 50 off by {s_err:.3e} (< 1e-2)",
            fmt(&errs)
        ),
    )
}

fn saddle_vs_brute_force() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for mu in [-0.5, MU_CONDENSED] {
        let mut errs = Vec::new();
        for k in [2.0, 3.0, 4.0] {
            let t = trap(k, 3);
            let tr = SpectrumTruncation::adaptive(&t, 1e-14);
            let n = default_n_max(&t, mu, 1.0).unwrap();
            let brute = log_xi_bruteforce(&t, mu, 1.0, None, n).unwrap();
            let saddle = if mu < 0.0 {
                log_xi_saddle_normal(&t, mu, 1.0, &tr)
            } else {
                log_xi_saddle_condensed(&t, mu, 1.0, &tr)
            }
            .unwrap();
            errs.push(((saddle - brute) / brute).abs());
        }
        ok &= decreasing(&errs) && errs[2] < 0.05;
        parts.push(format!("mu {mu}: {}", fmt(&errs)));
    }
    (ok, format!("relative error at kappa 2, 3, 4 ({}) (decreasing, < 5e-2 at 4)", parts.join("; ")))
}

fn genfun_normal() -> (bool, String) {
    let f = bump();
    let g = f.grid(6).unwrap();
    let limit = genfun_normal_limit(1.0, 0.5, 3, &f, &g).unwrap();
    let gaps: Vec<f64> = [25.0, 50.0, 100.0]
        .iter()
        .map(|&k| (genfun_finite(&trap(k, 3), MU_NORMAL, 1.0, &f, None, &g).unwrap() / limit - 1.0).abs())
        .collect();
    let ok = decreasing(&gaps) && gaps[2] < 0.02;
    (ok, format!("relative gap to the limit at kappa 25, 50, 100: {} (< 2e-2 at 100, decreasing)", fmt(&gaps)))
}

fn condensed_scaling() -> (bool, String) {
    let f = bump();
    let g = f.grid(10).unwrap();
    let limit = condensed_rate_functional(1.0, MU_CONDENSED, 1.0, 3, &f, &g).unwrap();
    let errs: Vec<f64> = [10.0, 20.0, 40.0, 80.0]
        .iter()
        .map(|&k| {
            let ev = log_genfun_contour(&trap(k, 3), MU_CONDENSED, 1.0, &f, &g, GenfunMethod::Residue).unwrap();
            (ev.log_value / k.powf(1.5) / limit - 1.0).abs()
        })
        .collect();
    let ok = decreasing(&errs) && errs[3] < 0.1;
    (ok, format!("relative error at kappa 10, 20, 40, 80: {} (< 1e-1 at 80, decreasing); limit {limit:.6}", fmt(&errs)))
}

fn eigengap() -> (bool, String) {
    let f = bump();
    let g = f.grid(10).unwrap();
    let e = eigengap_check(&trap(200.0, 3), &f, &g).unwrap();
    let kf = build_kf(1.0, 3, &f, &g).unwrap();
    let u = DVector::from_iterator(g.len(), (0..g.len()).map(|i| (g.weights()[i] * f.one_minus_exp(g.point(i))).sqrt()));
    let m = DMatrix::<f64>::identity(g.len(), g.len()) + &kf.entries;
    let flat = u.dot(&m.lu().solve(&u).unwrap());
    let err = (e.lhs / flat - 1.0).abs();
    let ok = err < 0.1 && e.lhs >= 0.0 && e.lhs <= e.upper && flat >= 0.0 && flat <= e.upper;
    (
        ok,
        format!("scaled gap {:.6} vs {flat:.6}: relative error {err:.3e} (< 1e-1); bracket [0, {:.6}]", e.lhs, e.upper),
    )
}

fn expectation_identity() -> (bool, String) {
    let f = bump();
    let g = f.grid(10).unwrap();
    let est = expectation_from_genfun(|h| log_genfun_normal_limit(1.0, 0.5, 3, h, &g), &f, DEFAULT_EXPECTATION_STEP).unwrap();
    // sum_n 2^(-n) (2 pi n)^(-3/2)
    let rho = 0.039_673_174_318_175_355;
    let want = rho * f.integral().unwrap();
    let err = (est / want - 1.0).abs();
    (err < 1e-3, format!("expectation {est:.8} vs {want:.8}: relative error {err:.3e} (< 1e-3)"))
}

fn number_derivative() -> (bool, String) {
    let t = trap(2.0, 3);
    let vol = t.volume();
    let h = 1e-4;
    let mut ok = true;
    let mut parts = Vec::new();
    for mu in [-0.5, MU_CONDENSED] {
        let n = default_n_max(&t, mu + h, 1.0).unwrap();
        let lx = |m: f64| log_xi_bruteforce(&t, m, 1.0, None, n).unwrap();
        let deriv = (lx(mu + h) - lx(mu - h)) / (2.0 * h) / vol;
        let s = solve_fixed_point(&t, mu, 1.0, None, 1e-13).unwrap().s / vol;
        let err = (deriv / s - 1.0).abs();
        ok &= err < 1e-3;
        parts.push(format!("mu {mu}: {deriv:.6} vs {s:.6} (relative error {err:.3e})"));
    }
    (ok, format!("{} (< 1e-3)", parts.join("; ")))
}

fn sampler() -> (bool, String) {
    let t = trap(1.0, 3);
    let tr = SpectrumTruncation::adaptive(&t, 1e-14);
    let nd = number_distribution(&t, 0.0, 1.0, &tr, 12).unwrap();
    let f = bump();
    let g = f.grid(10).unwrap();
    let exact = linear_statistic_mean_exact(&t, 0.0, 1.0, &f, &g, 12).unwrap();
    let cfg = SamplerConfig { seed: 2024, burn_in: 10_000, thin: 10, steps: 10_000 + 1_000_000, ..Default::default() };
    let samples: Vec<PointConfiguration> =
        sample_configuration(&t, cfg, nd.clone()).unwrap().collect::<bosefield::Result<_>>().unwrap();
    let mut counts = vec![0u64; nd.n_max() + 1];
    for c in &samples {
        counts[c.len()] += 1;
    }
    let chi = chi_square_test(&counts, &nd.weights).unwrap();
    let st = empirical_linear_statistic(&samples, &f).unwrap();
    let z = (st.mean - exact) / st.std_error;
    let ok = samples.len() == 100_000 && chi.p_value > 1e-3 && z.abs() < 3.0;
    (
        ok,
        format!(
            "{} draws; chi-square {:.3} on {} dof, p = {:.4} (> 1e-3); E<f,xi> {:.6} vs exact {exact:.6}, z = {z:.2} (|z| < 3)",
            samples.len(),
            chi.statistic,
            chi.dof,
            chi.p_value,
            st.mean
        ),
    )
}

fn inequalities() -> (bool, String) {
    let mut total = 0;
    let mut violations = 0;
    let mut worst = (f64::INFINITY, "");
    for d in 1..=4 {
        for c in check_all(d) {
            total += 1;
            violations += c.violations;
            if c.min_margin < worst.0 {
                worst = (c.min_margin, c.name);
            }
        }
    }
    (violations == 0, format!("{total} grids, {violations} violations; smallest margin {:.3e} ({})", worst.0, worst.1))
}

fn determinant_modulus() -> (bool, String) {
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    let mut worst = f64::INFINITY;
    for i in 0..100 {
        let x = rng.random_range(-10.0..10.0);
        let r = rng.random_range(0.0..1.0);
        let value = if i % 2 == 0 {
            // r times a trap spectrum
            let t = TrapParams::new(rng.random_range(0.5..20.0), rng.random_range(0.2..3.0), rng.random_range(1..=3)).unwrap();
            let s = Spectrum::adaptive(&t);
            let ev: Vec<f64> = s.eigenvalues.iter().map(|g| r * g).collect();
            phase_det_modulus(OperatorInput::Spectral { eigenvalues: &ev, multiplicities: &s.degeneracies }, x).unwrap()
        } else {
            // r times a random PSD matrix of unit norm
            let n = rng.random_range(2..=8);
            let b = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
            let a = &b * b.transpose();
            let rho = a.symmetric_eigenvalues().max();
            let op = DiscretizedOperator::counting(a * (r / rho)).unwrap();
            phase_det_modulus(OperatorInput::Matrix(&op), x).unwrap()
        };
        worst = worst.min(value);
    }
    (worst >= 1.0 - 1e-12, format!("smallest modulus {worst:.15} over 100 draws (>= 1 - 1e-12)"))
}

fn main() {
    let checks: [Check; 14] = [
        ("semigroup identity", semigroup_identity),
        ("trace identity", trace_identity),
        ("Vere-Jones identity", vere_jones),
        ("fixed point, normal phase", fixed_point_normal),
        ("fixed point, condensed phase", fixed_point_condensed),
        ("saddle point vs brute force", saddle_vs_brute_force),
        ("generating functional, normal phase", genfun_normal),
        ("condensed scaling law", condensed_scaling),
        ("eigenvalue gap", eigengap),
        ("expectation identity", expectation_identity),
        ("particle number from mu-derivative", number_derivative),
        ("sampler", sampler),
        ("elementary inequalities", inequalities),
        ("determinant modulus bound", determinant_modulus),
    ];
    let mut failed = 0;
    for (i, (name, run)) in checks.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run();
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
