use crate::config::{Format, Resolved};
use crate::output::{emit, num, Cell, Table};
use crate::CliError;
use bosefield::fredholm::{
    condensed_rate_functional, default_n_max, genfun_normal_limit, linear_statistic_mean_exact,
    log_genfun_finite_detailed, log_xi_bruteforce, log_xi_saddle_condensed, log_xi_saddle_normal, GenfunMethod,
};
use bosefield::meanfield::{
    classify_phase, condensed_rate, r_star, rho_total, solve_fixed_point, PhaseLabel, CRITICAL_BAND,
};
use bosefield::sampler::{
    empirical_linear_statistic, mean_with_errors, number_distribution, sample_configuration, PointConfiguration,
};
use bosefield::spectral::TrapParams;
use bosefield::thermo::mu_crit;
use rayon::prelude::*;
use serde_json::json;

/// Brute-force partition sums are attempted only up to this many particles.
const BRUTE_FORCE_LIMIT: f64 = 3000.0;

fn phase(cfg: &Resolved, beta: f64, mu: f64, lambda: f64) -> Result<PhaseLabel, CliError> {
    Ok(classify_phase(beta, mu, lambda, cfg.dim as f64, CRITICAL_BAND)?)
}

pub fn phase_diagram(cfg: &Resolved) -> Result<(), CliError> {
    if cfg.mus.is_empty() {
        return Err(CliError::Usage("empty chemical potential grid: give --mu, --mu-list or --mu-range".into()));
    }
    let d = cfg.dim as f64;
    let mut points = Vec::new();
    for &b in &cfg.betas {
        for &l in &cfg.lambdas {
            for &m in &cfg.mus {
                points.push((b, l, m));
            }
        }
    }
    let rows: Vec<Vec<Cell>> = points
        .par_iter()
        .map(|&(b, l, m)| -> Result<Vec<Cell>, CliError> {
            let ph = phase(cfg, b, m, l)?;
            let rs = if ph == PhaseLabel::Normal { Some(r_star(b, m, l, d, cfg.tol)?) } else { None };
            Ok(vec![b.into(), l.into(), m.into(), ph.to_string().into(), rs.into(), rho_total(b, m, l, d)?.into(), mu_crit(b, l, d)?.into()])
        })
        .collect::<Result<_, _>>()?;
    let mut t = Table::new("phase-diagram", &["beta", "lambda", "mu", "phase", "r_star", "rho_total", "mu_c"]);
    rows.into_iter().for_each(|r| t.push(r));
    emit(cfg.out.as_deref(), &t.render(cfg))
}

/// `ln Xi_brute - ln Xi_saddle`, or `None` when brute force is out of reach.
fn xi_log_ratio(cfg: &Resolved, trap: &TrapParams, mu: f64, ph: PhaseLabel, s: f64) -> Result<Option<f64>, CliError> {
    if ph == PhaseLabel::Critical || (cfg.n_max.is_none() && s > BRUTE_FORCE_LIMIT) {
        return Ok(None);
    }
    let n = match cfg.n_max {
        Some(n) => n,
        None => default_n_max(trap, mu, cfg.lambda)?,
    };
    let tr = cfg.truncation_or_adaptive(trap);
    let saddle = match ph {
        PhaseLabel::Normal => log_xi_saddle_normal(trap, mu, cfg.lambda, &tr)?,
        _ => log_xi_saddle_condensed(trap, mu, cfg.lambda, &tr)?,
    };
    Ok(Some(log_xi_bruteforce(trap, mu, cfg.lambda, None, n)? - saddle))
}

/// Finite-`kappa` generating functional and its large-trap counterpart:
/// `(method, ln G, remainder bound, limit, scaled)` where `scaled` is `G`
/// in the normal phase and `kappa^(-d/2) ln G` in the condensed one.
fn genfun_row(
    cfg: &Resolved,
    trap: &TrapParams,
    mu: f64,
    ph: PhaseLabel,
) -> Result<(GenfunMethod, f64, Option<f64>, Option<f64>, f64), CliError> {
    let f = cfg.f_bump.function(cfg.dim)?;
    let grid = f.grid(cfg.grid_nodes)?;
    let ev = log_genfun_finite_detailed(trap, mu, cfg.lambda, &f, cfg.n_max, &grid)?;
    let (limit, scaled) = match ph {
        PhaseLabel::Normal => {
            let rs = r_star(cfg.beta, mu, cfg.lambda, cfg.dim as f64, cfg.tol)?;
            (Some(genfun_normal_limit(cfg.beta, rs, cfg.dim, &f, &grid)?), ev.log_value.exp())
        }
        PhaseLabel::Condensed if cfg.dim > 2 => (
            Some(condensed_rate_functional(cfg.beta, mu, cfg.lambda, cfg.dim, &f, &grid)?),
            ev.log_value / trap.kappa.powf(cfg.dim as f64 / 2.0),
        ),
        _ => (None, ev.log_value.exp()),
    };
    Ok((ev.method, ev.log_value, ev.log_remainder_bound, limit, scaled))
}

fn method_name(m: GenfunMethod) -> &'static str {
    match m {
        GenfunMethod::BruteForce => "brute-force",
        GenfunMethod::Residue => "residue",
        GenfunMethod::RealLine => "real-line",
    }
}

pub fn convergence(cfg: &Resolved) -> Result<(), CliError> {
    cfg.ascending_kappas()?;
    let with_genfun = cfg.f_given;
    let mu = cfg.mu()?;
    let ph = phase(cfg, cfg.beta, mu, cfg.lambda)?;
    let d = cfg.dim as f64;
    // distance of each row to the large-trap limit, for the trend flag
    let limit = match ph {
        PhaseLabel::Normal => Some(r_star(cfg.beta, mu, cfg.lambda, d, cfg.tol)?),
        PhaseLabel::Condensed => Some(condensed_rate(cfg.beta, mu, cfg.lambda, d)?),
        PhaseLabel::Critical => None,
    };
    let rows: Vec<(Vec<Cell>, Option<f64>)> = cfg
        .kappas
        .par_iter()
        .map(|&k| -> Result<_, CliError> {
            let trap = cfg.trap(k)?;
            let tr = cfg.truncation(&trap);
            let fp = solve_fixed_point(&trap, mu, cfg.lambda, tr.as_ref(), cfg.tol)?;
            let vol = trap.volume();
            let rate = vol * fp.one_minus_r;
            let gap = limit.map(|l| if ph == PhaseLabel::Normal { (fp.r - l).abs() } else { (rate - l).abs() });
            let xi = xi_log_ratio(cfg, &trap, mu, ph, fp.s)?.map(f64::exp);
            let mut row = vec![k.into(), fp.r.into(), fp.one_minus_r.into(), rate.into(), (fp.s / vol).into(), xi.into()];
            if with_genfun {
                let (_, _, _, lim, scaled) = genfun_row(cfg, &trap, mu, ph)?;
                row.push(lim.map(|l| scaled / l).into());
            }
            row.push(gap.into());
            Ok((row, gap))
        })
        .collect::<Result<_, _>>()?;
    let mut cols = vec!["kappa", "r", "one_minus_r", "kappa_d_one_minus_r", "s_over_kappa_d", "xi_brute_over_saddle"];
    if with_genfun {
        cols.push("genfun_ratio_to_limit");
    }
    cols.extend(["limit_gap", "approaching"]);
    let mut t = Table::new("convergence", &cols);
    let many = rows.len() > 1;
    let mut prev: Option<f64> = None;
    for (mut row, gap) in rows {
        let flag = match (many, prev, gap) {
            (true, Some(p), Some(g)) => Cell::Bool(g < p),
            _ => Cell::Empty,
        };
        row.push(flag);
        prev = gap;
        t.push(row);
    }
    emit(cfg.out.as_deref(), &t.render(cfg))
}

pub fn genfun(cfg: &Resolved) -> Result<(), CliError> {
    let mu = cfg.mu()?;
    let ph = phase(cfg, cfg.beta, mu, cfg.lambda)?;
    let rows: Vec<Vec<Cell>> = cfg
        .kappas
        .par_iter()
        .map(|&k| -> Result<_, CliError> {
            let trap = cfg.trap(k)?;
            let (m, lg, bound, lim, scaled) = genfun_row(cfg, &trap, mu, ph)?;
            Ok(vec![
                k.into(),
                ph.to_string().into(),
                method_name(m).into(),
                lg.into(),
                lg.exp().into(),
                bound.into(),
                lim.into(),
                scaled.into(),
                lim.map(|l| (scaled / l - 1.0).abs()).into(),
            ])
        })
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(
        "genfun",
        &["kappa", "phase", "method", "log_genfun", "genfun", "log_remainder_bound", "limit", "scaled", "relative_gap"],
    );
    rows.into_iter().for_each(|r| t.push(r));
    emit(cfg.out.as_deref(), &t.render(cfg))
}

fn dump(cfg: &Resolved, samples: &[PointConfiguration], n_max: usize) -> String {
    match cfg.format {
        Format::Csv => {
            let mut s = String::from("n");
            for i in 1..=n_max * cfg.dim {
                s.push_str(&format!(",x{i}"));
            }
            s.push('\n');
            for c in samples {
                s.push_str(&c.len().to_string());
                for p in &c.points {
                    for x in p {
                        s.push(',');
                        s.push_str(&num(*x));
                    }
                }
                s.push('\n');
            }
            s
        }
        Format::Json => {
            let v: Vec<_> = samples.iter().map(|c| json!({ "n": c.len(), "points": c.points })).collect();
            serde_json::to_string(&v).expect("samples serialize") + "\n"
        }
    }
}

pub fn sample(cfg: &Resolved) -> Result<(), CliError> {
    let mu = cfg.mu()?;
    let kappa = match cfg.kappas[..] {
        [k] => k,
        _ => return Err(CliError::Usage("sample takes a single --kappa".into())),
    };
    let trap = cfg.trap(kappa)?;
    let n_max = match cfg.n_max {
        Some(n) => n,
        None => default_n_max(&trap, mu, cfg.lambda)?,
    };
    let tr = cfg.truncation_or_adaptive(&trap);
    let nd = number_distribution(&trap, mu, cfg.lambda, &tr, n_max)?;
    let exact_n = nd.mean();
    let mut sampler = sample_configuration(&trap, cfg.sampler, nd)?;
    let samples: Vec<PointConfiguration> = sampler.by_ref().collect::<bosefield::Result<_>>()?;
    emit(cfg.out.as_deref(), &dump(cfg, &samples, n_max))?;

    let f = cfg.f_bump.function(cfg.dim)?;
    let grid = f.grid(cfg.grid_nodes)?;
    let exact_f = linear_statistic_mean_exact(&trap, mu, cfg.lambda, &f, &grid, n_max)?;
    let counts: Vec<f64> = samples.iter().map(|c| c.len() as f64).collect();
    let summary = if samples.len() < 2 {
        json!({ "samples": samples.len(), "insufficient_samples": true, "exact_mean_n": exact_n, "exact_mean_f": exact_f })
    } else {
        let n_stat = mean_with_errors(&counts)?;
        let f_stat = empirical_linear_statistic(&samples, &f)?;
        json!({
            "samples": samples.len(),
            "insufficient_samples": false,
            "n_max": n_max,
            "mean_n": n_stat.mean,
            "mean_n_std_error": n_stat.std_error,
            "exact_mean_n": exact_n,
            "mean_f": f_stat.mean,
            "mean_f_std_error": f_stat.std_error,
            "exact_mean_f": exact_f,
            "acceptance_rate": sampler.acceptance_rate(),
            "config": cfg,
        })
    };
    eprintln!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}
