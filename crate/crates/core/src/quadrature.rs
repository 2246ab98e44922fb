//! Tensor Gauss-Legendre grids and an adaptive Gauss-Kronrod integrator.

use crate::error::{domain, Result};
use gauss_quad::GaussLegendre;
use std::num::NonZeroUsize;

/// Gauss-Legendre nodes and weights on `[a, b]`, nodes ascending.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let n = NonZeroUsize::new(n.max(1)).expect("nonzero");
    let rule = GaussLegendre::new(n);
    let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    pairs.iter().map(|&(x, w)| (mid + half * x, half * w)).unzip()
}

/// Axis-aligned box `[lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return domain("box bounds must have equal, nonzero length");
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return domain("box must have lo < hi in every coordinate");
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(center: &[f64], half_width: f64) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - half_width).collect(),
            center.iter().map(|c| c + half_width).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// Product quadrature on a box, possibly restricted to a subset of its
/// tensor nodes.
///
/// The tensor structure is retained (`axes`, `index`) so that separable
/// kernels can be tabulated per coordinate.
#[derive(Debug, Clone)]
pub struct GridQuadrature {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    domain: BoxDomain,
    axes: Vec<Vec<f64>>,
    index: Vec<usize>,
}

impl GridQuadrature {
    pub fn gauss_legendre(bounds: BoxDomain, nodes_per_dim: usize) -> Result<Self> {
        if nodes_per_dim == 0 {
            return domain("grid needs at least one node per dimension");
        }
        let d = bounds.dim();
        let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..d)
            .map(|k| gauss_legendre(nodes_per_dim, bounds.lo[k], bounds.hi[k]))
            .collect();
        let total = nodes_per_dim.pow(d as u32);
        let mut points = Vec::with_capacity(total * d);
        let mut weights = Vec::with_capacity(total);
        let mut index = Vec::with_capacity(total * d);
        let mut multi = vec![0usize; d];
        for _ in 0..total {
            let mut w = 1.0;
            for k in 0..d {
                points.push(rules[k].0[multi[k]]);
                index.push(multi[k]);
                w *= rules[k].1[multi[k]];
            }
            weights.push(w);
            for k in (0..d).rev() {
                multi[k] += 1;
                if multi[k] < nodes_per_dim {
                    break;
                }
                multi[k] = 0;
            }
        }
        Ok(Self {
            dim: d,
            points,
            weights,
            domain: bounds,
            axes: rules.into_iter().map(|r| r.0).collect(),
            index,
        })
    }

    /// Keep only the nodes for which `keep(point)` holds.
    pub fn restrict(&self, keep: impl Fn(&[f64]) -> bool) -> Self {
        let d = self.dim;
        let mut out = Self {
            dim: d,
            points: Vec::new(),
            weights: Vec::new(),
            domain: self.domain.clone(),
            axes: self.axes.clone(),
            index: Vec::new(),
        };
        for i in 0..self.len() {
            let p = self.point(i);
            if keep(p) {
                out.points.extend_from_slice(p);
                out.index.extend_from_slice(&self.index[i * d..(i + 1) * d]);
                out.weights.push(self.weights[i]);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    /// One-dimensional nodes along coordinate `k`.
    pub fn axis(&self, k: usize) -> &[f64] {
        &self.axes[k]
    }
    /// Position of node `i` along coordinate `k` in [`Self::axis`].
    pub fn axis_index(&self, i: usize, k: usize) -> usize {
        self.index[i * self.dim + k]
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).sum()
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Result of [`integrate_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    /// Integral of |f|, used to judge cancellation.
    pub abs_value: f64,
    pub evaluations: usize,
}

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        k += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs(), abs * h.abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature over `[a, b]` split initially at
/// `breaks`; bisects the interval with the largest error estimate until the
/// total estimate is below `max(abs_tol, rel_tol |I|)`.
pub fn integrate_adaptive(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Integral {
    let mut pts = vec![a];
    pts.extend(breaks.iter().cloned().filter(|x| *x > a && *x < b));
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    let mut segs: Vec<(f64, f64, f64, f64, f64)> = pts
        .windows(2)
        .map(|w| {
            let (v, e, s) = gk15(&mut f, w[0], w[1]);
            (w[0], w[1], v, e, s)
        })
        .collect();
    let mut evals = 15 * segs.len();
    loop {
        let value: f64 = segs.iter().map(|s| s.2).sum();
        let error: f64 = segs.iter().map(|s| s.3).sum();
        let abs_value: f64 = segs.iter().map(|s| s.4).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || segs.len() >= max_intervals {
            return Integral { value, error, abs_value, evaluations: evals };
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .max_by(|p, q| p.1 .3.total_cmp(&q.1 .3))
            .expect("nonempty");
        let (lo, hi, ..) = segs.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval at floating-point resolution; accept as is
            let (v, _, s) = gk15(&mut f, lo, hi);
            segs.push((lo, hi, v, 0.0, s));
            evals += 15;
            continue;
        }
        for (x0, x1) in [(lo, mid), (mid, hi)] {
            let (v, e, s) = gk15(&mut f, x0, x1);
            segs.push((x0, x1, v, e, s));
        }
        evals += 30;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(5, -1.0, 2.0);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((v - (2f64.powi(10) - 1.0) / 10.0).abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn grid_restriction_keeps_tensor_indices() {
        let b = BoxDomain::cube(&[0.0, 0.0], 1.0).unwrap();
        let g = GridQuadrature::gauss_legendre(b, 4).unwrap();
        assert_eq!(g.len(), 16);
        let total: f64 = g.weights().iter().sum();
        assert!((total - 4.0).abs() < 1e-13);
        let r = g.restrict(|p| p[0] > 0.0);
        assert_eq!(r.len(), 8);
        for i in 0..r.len() {
            for k in 0..2 {
                assert_eq!(r.axis(k)[r.axis_index(i, k)], r.point(i)[k]);
            }
        }
    }

    #[test]
    fn adaptive_handles_sharp_peak() {
        let eps = 1e-6;
        let r = integrate_adaptive(|x| eps / (x * x + eps * eps), 0.0, 1.0, &[], 1e-13, 1e-12, 500);
        let exact = (1.0 / eps).atan();
        assert!((r.value - exact).abs() < 1e-10, "{} vs {}", r.value, exact);
    }
}
