//! One Euler frozen-coefficient Gaussian step on a uniform grid (d = 1, 2).
//!
//! Row `i` holds `K_ij`, the sampled density of `N(x_i + B_i dt, C_i dt)` at the
//! nodes `y_j`, scaled so that `sum_j w_j K_ij` equals the probability that the
//! Gaussian lands inside the domain (or to 1 for row-stochastic steps).
//! Push-forward and pull-back are then
//! exactly dual: `sum_j w_j (K^T rho)_j f_j = sum_i w_i rho_i (K f)_i`.

use rayon::prelude::*;

use crate::coeffs::GeneratorCoefficients;
use crate::error::{Error, Result};
use crate::grid::Axis;
use crate::measure::{cell_weight, node_point};

/// Rows are truncated at this many standard deviations.
const WINDOW_SDS: f64 = 12.0;
/// Sources per work item when pushing; fixed so results do not depend on
/// the thread count.
const PUSH_CHUNK: usize = 64;

/// Target value of `sum_j w_j K_ij` for each row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowMass {
    /// Gaussian probability of staying inside the domain; lost mass is a leak.
    InDomain,
    /// Exactly 1, so constants are preserved up to rounding.
    Unit,
}

#[derive(Debug, Clone)]
struct Row {
    /// Inclusive lower and exclusive upper node index per axis.
    lo: [usize; 2],
    hi: [usize; 2],
    vals: Vec<f64>,
    /// Gaussian mass inside the domain.
    #[cfg_attr(not(test), allow(dead_code))]
    inside: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct GaussStep {
    axes: Vec<Axis>,
    /// Trapezoid weights of the target nodes.
    weights: Vec<f64>,
    /// Quadrature weight of each source (trapezoid for nodes, 1 for atoms).
    src_weights: Vec<f64>,
    rows: Vec<Row>,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn interval_prob(axis: &Axis, mean: f64, sd: f64) -> f64 {
    (normal_cdf((axis.max - mean) / sd) - normal_cdf((axis.min - mean) / sd)).clamp(0.0, 1.0)
}

fn window(axis: &Axis, mean: f64, sd: f64) -> (usize, usize) {
    let reach = WINDOW_SDS * sd + axis.spacing();
    let lo = ((mean - reach - axis.min) / axis.spacing()).ceil().max(0.0);
    let hi = ((mean + reach - axis.min) / axis.spacing()).floor() + 1.0;
    let hi = hi.min(axis.nodes as f64);
    if hi <= lo {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

/// Linear split of the mass between the two nodes bracketing `mean`.
fn bracket(axis: &Axis, mean: f64) -> (usize, f64) {
    let pos = ((mean - axis.min) / axis.spacing()).clamp(0.0, (axis.nodes - 1) as f64);
    let i = (pos.floor() as usize).min(axis.nodes - 2);
    (i, pos - i as f64)
}

fn target(mass: RowMass, inside: impl FnOnce() -> f64) -> f64 {
    match mass {
        RowMass::InDomain => inside(),
        RowMass::Unit => 1.0,
    }
}

impl GaussStep {
    /// Step whose sources are the grid nodes; `coeffs` is evaluated there.
    pub fn build(axes: &[Axis], coeffs: &GeneratorCoefficients, dt: f64, mass: RowMass) -> Result<Self> {
        let d = axes.len();
        let n: usize = axes.iter().map(|a| a.nodes).product();
        let mut points = vec![0.0; n * d];
        for (i, p) in points.chunks_exact_mut(d).enumerate() {
            node_point(axes, i, p);
        }
        let src_weights = (0..n).map(|i| cell_weight(axes, i)).collect();
        Self::from_sources(axes, &points, src_weights, coeffs, dt, mass)
    }

    /// Step from arbitrary source points (unit source weights); `coeffs` is
    /// evaluated at those points.
    pub fn from_points(
        axes: &[Axis],
        points: &[f64],
        coeffs: &GeneratorCoefficients,
        dt: f64,
        mass: RowMass,
    ) -> Result<Self> {
        let n = points.len() / axes.len();
        Self::from_sources(axes, points, vec![1.0; n], coeffs, dt, mass)
    }

    fn from_sources(
        axes: &[Axis],
        points: &[f64],
        src_weights: Vec<f64>,
        coeffs: &GeneratorCoefficients,
        dt: f64,
        mass: RowMass,
    ) -> Result<Self> {
        let d = axes.len();
        debug_assert!(d == 1 || d == 2);
        debug_assert_eq!(coeffs.dim, d);
        let n: usize = axes.iter().map(|a| a.nodes).product();
        let weights: Vec<f64> = (0..n).map(|i| cell_weight(axes, i)).collect();
        let rows = (0..src_weights.len())
            .into_par_iter()
            .map(|i| {
                let mut x = [0.0; 2];
                x[..d].copy_from_slice(&points[i * d..(i + 1) * d]);
                let b = coeffs.drift_at(i);
                let c = coeffs.cmatrix_at(i);
                let mut mean = [0.0; 2];
                for k in 0..d {
                    mean[k] = x[k] + b[k] * dt;
                }
                if d == 1 {
                    Self::row_1d(&axes[0], mean[0], c[0] * dt, &weights, mass)
                } else {
                    Self::row_2d(axes, mean, [c[0] * dt, 0.5 * (c[1] + c[2]) * dt, c[3] * dt], &weights, mass)
                }
                .map_err(|e| match e {
                    Error::DegenerateDiffusion(msg) => {
                        Error::DegenerateDiffusion(format!("{msg} at x = {:?}", &x[..d]))
                    }
                    other => other,
                })
            })
            .collect::<Result<Vec<Row>>>()?;
        Ok(Self { axes: axes.to_vec(), weights, src_weights, rows })
    }

    fn row_1d(axis: &Axis, mean: f64, var: f64, weights: &[f64], mass: RowMass) -> Result<Row> {
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::DegenerateDiffusion(format!("step variance {var:e}")));
        }
        let sd = var.sqrt();
        let inside = target(mass, || interval_prob(axis, mean, sd));
        let (lo, hi) = window(axis, mean, sd);
        let mut vals: Vec<f64> = (lo..hi)
            .map(|j| {
                let z = axis.node(j) - mean;
                (-0.5 * z * z / var).exp()
            })
            .collect();
        let raw: f64 = vals.iter().zip(&weights[lo..hi]).map(|(v, w)| v * w).sum();
        if raw > 1e-280 {
            let scale = inside / raw;
            vals.iter_mut().for_each(|v| *v *= scale);
            return Ok(Row { lo: [lo, 0], hi: [hi, 1], vals, inside });
        }
        // Far narrower than the spacing: hat split between neighbours.
        let (i, frac) = bracket(axis, mean);
        let vals = vec![inside * (1.0 - frac) / weights[i], inside * frac / weights[i + 1]];
        Ok(Row { lo: [i, 0], hi: [i + 2, 1], vals, inside })
    }

    fn row_2d(axes: &[Axis], mean: [f64; 2], cov: [f64; 3], weights: &[f64], mass: RowMass) -> Result<Row> {
        let [a, b, c] = cov;
        let det = a * c - b * b;
        if !(a > 0.0 && c > 0.0 && det > 1e-13 * (a * c)) {
            return Err(Error::DegenerateDiffusion(format!("step covariance [[{a:e}, {b:e}], [{b:e}, {c:e}]]")));
        }
        let (ia, ib, ic) = (c / det, -b / det, a / det);
        let sd = [a.sqrt(), c.sqrt()];
        // Exact for diagonal covariance, an approximation otherwise.
        let inside = target(mass, || interval_prob(&axes[0], mean[0], sd[0]) * interval_prob(&axes[1], mean[1], sd[1]));
        let w0 = window(&axes[0], mean[0], sd[0]);
        let w1 = window(&axes[1], mean[1], sd[1]);
        let ny = axes[1].nodes;
        let mut vals = Vec::with_capacity((w0.1 - w0.0) * (w1.1 - w1.0));
        let mut raw = 0.0;
        for j0 in w0.0..w0.1 {
            let z0 = axes[0].node(j0) - mean[0];
            for j1 in w1.0..w1.1 {
                let z1 = axes[1].node(j1) - mean[1];
                let v = (-0.5 * (ia * z0 * z0 + 2.0 * ib * z0 * z1 + ic * z1 * z1)).exp();
                raw += v * weights[j0 * ny + j1];
                vals.push(v);
            }
        }
        if raw > 1e-280 {
            let scale = inside / raw;
            vals.iter_mut().for_each(|v| *v *= scale);
            return Ok(Row { lo: [w0.0, w1.0], hi: [w0.1, w1.1], vals, inside });
        }
        let (i0, f0) = bracket(&axes[0], mean[0]);
        let (i1, f1) = bracket(&axes[1], mean[1]);
        let mut vals = Vec::with_capacity(4);
        for (k0, p0) in [(i0, 1.0 - f0), (i0 + 1, f0)] {
            for (k1, p1) in [(i1, 1.0 - f1), (i1 + 1, f1)] {
                vals.push(inside * p0 * p1 / weights[k0 * ny + k1]);
            }
        }
        Ok(Row { lo: [i0, i1], hi: [i0 + 2, i1 + 2], vals, inside })
    }

    fn for_each_entry(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        let row = &self.rows[i];
        if self.axes.len() == 1 {
            for (j, &v) in (row.lo[0]..row.hi[0]).zip(&row.vals) {
                f(j, v);
            }
        } else {
            let ny = self.axes[1].nodes;
            let width = row.hi[1] - row.lo[1];
            for (r, j0) in (row.lo[0]..row.hi[0]).enumerate() {
                for (c, j1) in (row.lo[1]..row.hi[1]).enumerate() {
                    f(j0 * ny + j1, row.vals[r * width + c]);
                }
            }
        }
    }

    /// `rho'(y_j) = sum_i w_i rho_i K_ij` over the sources `i`.
    pub fn push(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.weights.len();
        let sources = self.rows.len();
        let partials: Vec<Vec<f64>> = (0..sources.div_ceil(PUSH_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; n];
                let range = c * PUSH_CHUNK..((c + 1) * PUSH_CHUNK).min(sources);
                for (i, (w, r)) in self.src_weights[range.clone()].iter().zip(&rho[range.clone()]).enumerate() {
                    let i = range.start + i;
                    let m = w * r;
                    if m != 0.0 {
                        self.for_each_entry(i, |j, k| acc[j] += m * k);
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; n];
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }

    /// `(K f)_i = sum_j w_j K_ij f_j` for every source `i`.
    pub fn pull(&self, f: &[f64]) -> Vec<f64> {
        (0..self.rows.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                self.for_each_entry(i, |j, k| acc += self.weights[j] * k * f[j]);
                acc
            })
            .collect()
    }

    /// In-domain probability of each row.
    #[cfg(test)]
    pub fn inside(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.inside).collect()
    }

    /// `K_ij` as a dense matrix.
    #[cfg(test)]
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.weights.len();
        (0..self.rows.len())
            .map(|i| {
                let mut row = vec![0.0; n];
                self.for_each_entry(i, |j, k| row[j] = k);
                row
            })
            .collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientSpec;
    use crate::measure::EmpiricalMeasure;

    fn step(axes: &[Axis], beta: f64, c: f64, dt: f64) -> GaussStep {
        let spec = CoefficientSpec::constant_1d(beta, c).unwrap();
        let xs = axes[0].points();
        let mu = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let coeffs = spec.generator_coefficients(0.0, &xs, &mu).unwrap();
        GaussStep::build(axes, &coeffs, dt, RowMass::InDomain).unwrap()
    }

    #[test]
    fn rows_carry_their_in_domain_mass() {
        let axes = [Axis::new(-5.0, 5.0, 101).unwrap()];
        let k = step(&axes, 0.0, 1.0, 0.5);
        let ones = vec![1.0; 101];
        let pulled = k.pull(&ones);
        for (p, q) in pulled.iter().zip(k.inside()) {
            assert!((p - q).abs() < 1e-13);
        }
        assert!((pulled[50] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn push_and_pull_are_dual() {
        let axes = [Axis::new(-4.0, 4.0, 81).unwrap()];
        let k = step(&axes, 0.2, 0.7, 0.3);
        let rho: Vec<f64> = axes[0].points().iter().map(|x| (-x * x).exp()).collect();
        let f: Vec<f64> = axes[0].points().iter().map(|x| x.sin() + 0.3).collect();
        let w = axes[0].trapezoid_weights();
        let lhs: f64 = k.push(&rho).iter().zip(&f).zip(&w).map(|((a, b), c)| a * b * c).sum();
        let rhs: f64 = k.pull(&f).iter().zip(&rho).zip(&w).map(|((a, b), c)| a * b * c).sum();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn tiny_variance_falls_back_to_a_hat_split() {
        let axes = [Axis::new(0.0, 1.0, 11).unwrap()];
        let w = axes[0].trapezoid_weights();
        let row = GaussStep::row_1d(&axes[0], 0.33, 1e-12, &w, RowMass::InDomain).unwrap();
        let mass: f64 = (row.lo[0]..row.hi[0]).zip(&row.vals).map(|(j, v)| v * w[j]).sum();
        let mean: f64 = (row.lo[0]..row.hi[0]).zip(&row.vals).map(|(j, v)| v * w[j] * axes[0].node(j)).sum();
        assert!((mass - 1.0).abs() < 1e-14);
        assert!((mean - 0.33).abs() < 1e-14);
    }
}
