use crate::error::{domain, Result};
use crate::quadrature::{BoxDomain, GridQuadrature};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A non-negative function with compact support inside an axis-aligned box.
///
/// Outside `support` the value is 0 regardless of the evaluator.
#[derive(Clone)]
pub struct TestFunction {
    eval: Evaluator,
    support: BoxDomain,
    integral: Option<f64>,
    label: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("support", &self.support)
            .finish()
    }
}

impl TestFunction {
    pub fn new(support: BoxDomain, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(eval), support, integral: None, label: "custom".into() }
    }

    /// The zero function on the unit cube around the origin.
    pub fn zero(dim: usize) -> Self {
        let support = BoxDomain::cube(&vec![0.0; dim.max(1)], 1.0).expect("unit cube");
        Self { eval: Arc::new(|_| 0.0), support, integral: Some(0.0), label: "zero".into() }
    }

    /// `height (1 - |x-c|^2 / R^2)^4` inside the ball, 0 outside.
    ///
    /// The fourth power makes it C^3 across the boundary sphere, which keeps
    /// tensor Gauss-Legendre rules on the bounding box accurate.
    pub fn bump(center: &[f64], radius: f64, height: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return domain(format!("bump radius must be positive, got {radius}"));
        }
        if !(height >= 0.0 && height.is_finite()) {
            return domain(format!("bump height must be non-negative, got {height}"));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return domain("bump center must be a finite point");
        }
        let c = center.to_vec();
        let r2 = radius * radius;
        let eval = move |x: &[f64]| {
            let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 >= r2 {
                0.0
            } else {
                height * (1.0 - d2 / r2).powi(4)
            }
        };
        let d = center.len() as f64;
        // int (1-|y|^2)^4 over the unit ball = pi^(d/2) 4! / Gamma(d/2 + 5)
        let integral = height * radius.powf(d) * PI.powf(d / 2.0) * 24.0 / gamma_half(center.len() + 10);
        Ok(Self {
            eval: Arc::new(eval),
            support: BoxDomain::cube(center, radius)?,
            integral: Some(integral),
            label: format!("bump(center={center:?}, radius={radius}, height={height})"),
        })
    }

    /// The constant `c` on a box.
    pub fn constant(c: f64, support: BoxDomain) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return domain(format!("constant must be non-negative, got {c}"));
        }
        let vol: f64 = support.lo.iter().zip(&support.hi).map(|(a, b)| b - a).product();
        Ok(Self { eval: Arc::new(move |_| c), support, integral: Some(c * vol), label: format!("constant({c})") })
    }

    /// `t f`.
    pub fn scaled(&self, t: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            eval: Arc::new(move |x| t * inner(x)),
            support: self.support.clone(),
            integral: self.integral.map(|v| t * v),
            label: format!("{t} * {}", self.label),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.support.contains(x) {
            (self.eval)(x)
        } else {
            0.0
        }
    }

    /// `1 - exp(-f(x))`.
    pub fn one_minus_exp(&self, x: &[f64]) -> f64 {
        -(-self.eval(x)).exp_m1()
    }

    pub fn support(&self) -> &BoxDomain {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    /// Closed-form integral when the constructor knows it.
    pub fn integral(&self) -> Option<f64> {
        self.integral
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Gauss-Legendre grid on the support box, keeping only nodes where
    /// `f > 0`; rejects negative values met at the nodes.
    pub fn grid(&self, nodes_per_dim: usize) -> Result<GridQuadrature> {
        let full = GridQuadrature::gauss_legendre(self.support.clone(), nodes_per_dim)?;
        for i in 0..full.len() {
            let v = self.eval(full.point(i));
            if !(v >= 0.0) {
                return domain(format!("test function is negative or NaN at {:?}", full.point(i)));
            }
        }
        Ok(full.restrict(|x| self.eval(x) > 0.0))
    }
}

/// `Gamma(k / 2)` for a positive integer `k`, by the exact recursion.
fn gamma_half(k: usize) -> f64 {
    let (mut x, mut acc) = if k.is_multiple_of(2) { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    while x < k as f64 / 2.0 - 0.25 {
        acc *= x;
        x += 1.0;
    }
    acc
}

/// Default nodes per dimension for grids on the support of a test function.
pub const DEFAULT_GRID_NODES: usize = 10;
