//! Run parameters: a JSON file merged under command-line flags, then
//! resolved to concrete values and validated before any command runs.

use crate::CliError;
use bosefield::fredholm::{TestFunction, DEFAULT_GRID_NODES};
use bosefield::sampler::SamplerConfig;
use bosefield::spectral::{SpectrumTruncation, TrapParams};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Every tunable of every command. Each field is optional so that a JSON
/// config file and the flags can be layered; flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct Params {
    /// Inverse temperature
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Chemical potential
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Mean-field coupling
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Space dimension
    #[arg(long)]
    pub dim: Option<usize>,
    /// Trap width parameter
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// Comma-separated trap widths, ascending
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub kappa_list: Option<Vec<f64>>,
    /// Test function as "center,radius,height"; the center is repeated in every coordinate
    #[arg(long, allow_hyphen_values = true)]
    pub f_bump: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Solver tolerance; for `verify`, overrides the thresholds of the identity checks
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<f64>,
    /// Fixed spectral cutoff level instead of the adaptive one
    #[arg(long)]
    pub max_level: Option<u64>,
    /// Particle-number cutoff for brute-force sums and the sampler
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Gauss-Legendre nodes per dimension on the support of f
    #[arg(long)]
    pub grid_nodes: Option<usize>,
    /// Comma-separated chemical potentials (phase-diagram)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mu_list: Option<Vec<f64>>,
    /// Chemical potential sweep "start,stop,count" (phase-diagram)
    #[arg(long, allow_hyphen_values = true)]
    pub mu_range: Option<String>,
    /// Comma-separated inverse temperatures (phase-diagram)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta_list: Option<Vec<f64>>,
    /// Comma-separated couplings (phase-diagram)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda_list: Option<Vec<f64>>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Total chain steps including burn-in
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub walk_scale: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub independence_prob: Option<f64>,
}

macro_rules! layer {
    ($top:expr, $base:expr, $($f:ident),*) => {
        Params { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Params {
    /// Flags in `self` override values from `file`.
    pub fn over(self, file: Params) -> Params {
        layer!(
            self, file, beta, mu, lambda, dim, kappa, kappa_list, f_bump, seed, out, format, tol, max_level, n_max,
            grid_nodes, mu_list, mu_range, beta_list, lambda_list, burn_in, thin, steps, walk_scale, independence_prob
        )
    }

    pub fn load(path: &std::path::Path) -> Result<Params, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// The bump test function together with its description.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
    pub height: f64,
}

impl Bump {
    fn parse(s: &str) -> Result<Bump, CliError> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("--f-bump expects \"center,radius,height\", got {s:?}")))?;
        match v[..] {
            [center, radius, height] => Ok(Bump { center, radius, height }),
            _ => Err(CliError::Usage(format!("--f-bump expects three numbers, got {}", v.len()))),
        }
    }

    pub fn function(&self, dim: usize) -> Result<TestFunction, CliError> {
        Ok(TestFunction::bump(&vec![self.center; dim], self.radius, self.height)?)
    }
}

/// Parameters with every default filled in. Serialized into output headers.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub beta: f64,
    pub mu: Option<f64>,
    pub lambda: f64,
    pub dim: usize,
    pub kappas: Vec<f64>,
    pub f_bump: Bump,
    pub seed: u64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub format: Format,
    pub tol: f64,
    /// `None` means adaptive.
    pub max_level: Option<u64>,
    pub n_max: Option<usize>,
    pub grid_nodes: usize,
    pub mus: Vec<f64>,
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub sampler: SamplerConfig,
    /// Whether `--tol` was given explicitly.
    #[serde(skip)]
    pub tol_given: bool,
    /// Whether a test function was given explicitly.
    #[serde(skip)]
    pub f_given: bool,
}

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_KAPPA: f64 = 10.0;

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be positive and finite, got {v}")))
    }
}

fn mu_range(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("--mu-range expects \"start,stop,count\", got {s:?}"));
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    Ok(match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    })
}

impl Resolved {
    pub fn from_params(p: Params) -> Result<Resolved, CliError> {
        let beta = positive("beta", p.beta.unwrap_or(1.0))?;
        let lambda = positive("lambda", p.lambda.unwrap_or(1.0))?;
        let dim = p.dim.unwrap_or(3);
        if dim == 0 {
            return Err(CliError::Usage("dim must be at least 1".into()));
        }
        if let Some(mu) = p.mu {
            if !mu.is_finite() {
                return Err(CliError::Usage(format!("mu must be finite, got {mu}")));
            }
        }
        let kappas = match (&p.kappa_list, p.kappa) {
            (Some(l), _) => l.clone(),
            (None, Some(k)) => vec![k],
            (None, None) => vec![DEFAULT_KAPPA],
        };
        for k in &kappas {
            positive("kappa", *k)?;
        }
        let tol = positive("tol", p.tol.unwrap_or(DEFAULT_TOL))?;
        let grid_nodes = p.grid_nodes.unwrap_or(DEFAULT_GRID_NODES);
        if grid_nodes < 2 {
            return Err(CliError::Usage("grid-nodes must be at least 2".into()));
        }
        let f_bump = match &p.f_bump {
            Some(s) => Bump::parse(s)?,
            None => Bump { center: 0.0, radius: 1.0, height: 1.0 },
        };
        f_bump.function(dim)?;
        let mut mus = match (&p.mu_list, &p.mu_range) {
            (Some(l), _) => l.clone(),
            (None, Some(r)) => mu_range(r)?,
            (None, None) => p.mu.into_iter().collect(),
        };
        if mus.iter().any(|m| !m.is_finite()) {
            return Err(CliError::Usage("chemical potentials must be finite".into()));
        }
        mus.dedup();
        let betas = p.beta_list.clone().unwrap_or_else(|| vec![beta]);
        let lambdas = p.lambda_list.clone().unwrap_or_else(|| vec![lambda]);
        for b in &betas {
            positive("beta", *b)?;
        }
        for l in &lambdas {
            positive("lambda", *l)?;
        }
        let defaults = SamplerConfig::default();
        let burn_in = p.burn_in.unwrap_or(defaults.burn_in);
        let sampler = SamplerConfig {
            seed: p.seed.unwrap_or(0),
            burn_in,
            thin: p.thin.unwrap_or(defaults.thin),
            steps: p.steps.unwrap_or(burn_in + (defaults.steps - defaults.burn_in)),
            walk_scale: p.walk_scale.unwrap_or(defaults.walk_scale),
            independence_prob: p.independence_prob.unwrap_or(defaults.independence_prob),
        };
        sampler.validate()?;
        Ok(Resolved {
            beta,
            mu: p.mu,
            lambda,
            dim,
            kappas,
            f_bump,
            seed: sampler.seed,
            out: p.out,
            format: p.format.unwrap_or(Format::Csv),
            tol,
            max_level: p.max_level,
            n_max: p.n_max,
            grid_nodes,
            mus,
            betas,
            lambdas,
            sampler,
            tol_given: p.tol.is_some(),
            f_given: p.f_bump.is_some(),
        })
    }

    pub fn mu(&self) -> Result<f64, CliError> {
        self.mu.ok_or_else(|| CliError::Usage("--mu is required for this command".into()))
    }

    pub fn trap(&self, kappa: f64) -> Result<TrapParams, CliError> {
        Ok(TrapParams::new(kappa, self.beta, self.dim)?)
    }

    pub fn truncation(&self, trap: &TrapParams) -> Option<SpectrumTruncation> {
        self.max_level.map(|m| SpectrumTruncation::with_max_level(trap, m))
    }

    /// The explicit cutoff or the adaptive one.
    pub fn truncation_or_adaptive(&self, trap: &TrapParams) -> SpectrumTruncation {
        self.truncation(trap).unwrap_or_else(|| SpectrumTruncation::adaptive(trap, self.tol.min(1e-12)))
    }

    pub fn ascending_kappas(&self) -> Result<(), CliError> {
        if self.kappas.windows(2).all(|w| w[0] < w[1]) {
            Ok(())
        } else {
            Err(CliError::Usage("kappa list must be strictly ascending".into()))
        }
    }
}
