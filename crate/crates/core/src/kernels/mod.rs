//! Transition kernels of the linearized equation on a 1-D grid.
//!
//! A kernel over `[t, s]` is the composition of Euler-Gauss steps of length
//! at most `max_step`, each using the coefficients at its left time. With
//! coefficients constant in `x` and `t` one step is exact up to truncation.

mod field;
mod inversion;

use rayon::prelude::*;

pub use field::{FieldOnGrid, TestFunction, TEST_FUNCTION_NAMES};
pub use inversion::{default_inversion_axis, verify_inversion, InversionOptions, InversionParams, InversionReport};

use crate::coeffs::{CoefficientSpec, GeneratorCoefficients};
use crate::engine::gauss::{GaussStep, RowMass};
use crate::error::{Error, Result};
use crate::grid::Axis;
use crate::measure::{EmpiricalMeasure, GridDensity, MeasureFlow};
use field::{derivative, shrink};

/// Slack when comparing times against the frozen horizon.
const TIME_SLACK: f64 = 1e-12;
/// Width of the unreliable boundary band in standard deviations of the kernel.
pub const RELIABLE_SDS: f64 = 6.0;
/// Largest mass a push-forward may leave on the end nodes.
const PUSH_EDGE_TOL: f64 = 1e-6;

/// Step order as `(step index, left time)`, the distinct steps, and `max C`.
type NodeSteps = (Vec<(usize, f64)>, Vec<GaussStep>, f64);

#[derive(Debug, Clone)]
pub struct TransitionKernel {
    spec: CoefficientSpec,
    frozen: MeasureFlow,
    axis: Axis,
    max_step: f64,
}

impl TransitionKernel {
    pub fn new(spec: CoefficientSpec, frozen: MeasureFlow, axis: Axis, max_step: f64) -> Result<Self> {
        if spec.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: spec.dim() });
        }
        if frozen.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: frozen.dim() });
        }
        if !(max_step > 0.0 && max_step.is_finite()) {
            return Err(Error::param(format!("max_step must be positive, got {max_step}")));
        }
        Ok(Self { spec, frozen, axis, max_step })
    }

    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    pub fn frozen(&self) -> &MeasureFlow {
        &self.frozen
    }

    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    fn check_times(&self, t: f64, s: f64) -> Result<()> {
        if t > s {
            return Err(Error::ReversedTimes { t, s });
        }
        let horizon = self.frozen.horizon();
        if t < 0.0 || s > horizon + TIME_SLACK {
            return Err(Error::OutOfDomain(format!(
                "times [{t}, {s}] leave the frozen flow's horizon [0, {horizon}]"
            )));
        }
        Ok(())
    }

    /// Left endpoints and lengths of the Euler substeps covering `[t, s]`.
    fn substeps(&self, t: f64, s: f64) -> Vec<(f64, f64)> {
        let n = (((s - t) / self.max_step) - 1e-9).ceil().max(1.0) as usize;
        let dt = (s - t) / n as f64;
        (0..n).map(|k| (t + k as f64 * dt, dt)).collect()
    }

    fn coefficients(&self, t: f64, points: &[f64]) -> Result<GeneratorCoefficients> {
        let mu = self.frozen.at(t).to_empirical();
        self.spec.generator_coefficients(t, points, &mu)
    }

    /// Node-to-node steps over `[t, s]` (consecutive duplicates shared) and
    /// the largest `C` seen.
    fn node_steps(&self, t: f64, s: f64) -> Result<NodeSteps> {
        let points = self.axis.points();
        let mut steps: Vec<GaussStep> = Vec::new();
        let mut order = Vec::new();
        let mut last: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        let mut c_max: f64 = 0.0;
        for (left, dt) in self.substeps(t, s) {
            let g = self.coefficients(left, &points)?;
            c_max = g.cmatrix.iter().fold(c_max, |m, &c| m.max(c));
            let same = matches!(&last, Some((b, c, h)) if *b == g.drift && *c == g.cmatrix && *h == dt);
            if !same {
                steps.push(GaussStep::build(&[self.axis], &g, dt, RowMass::Unit)?);
                last = Some((g.drift, g.cmatrix, dt));
            }
            order.push((steps.len() - 1, left));
        }
        Ok((order, steps, c_max))
    }

    /// First step from off-grid atoms, then node-to-node steps.
    fn atom_steps(&self, points: &[f64], t: f64, s: f64) -> Result<(GaussStep, Vec<GaussStep>)> {
        let sub = self.substeps(t, s);
        let (left, dt) = sub[0];
        let first = GaussStep::from_points(&[self.axis], points, &self.coefficients(left, points)?, dt, RowMass::Unit)?;
        let rest = if sub.len() > 1 {
            let (order, steps, _) = self.node_steps(left + dt, s)?;
            order.into_iter().map(|(i, _)| steps[i].clone()).collect()
        } else {
            Vec::new()
        };
        Ok((first, rest))
    }

    fn check_atoms(&self, mu0: &EmpiricalMeasure) -> Result<()> {
        if mu0.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: mu0.dim() });
        }
        let a = &self.axis;
        if let Some(&x) = mu0.coords().iter().find(|&&x| !(x > a.min && x < a.max)) {
            return Err(Error::OutOfDomain(format!("atom {x} is not inside ({}, {})", a.min, a.max)));
        }
        Ok(())
    }

    /// Unnormalized density of `P_{t,s} mu0` on the nodes.
    fn push_raw(&self, mu0: &EmpiricalMeasure, t: f64, s: f64) -> Result<Vec<f64>> {
        self.check_times(t, s)?;
        self.check_atoms(mu0)?;
        if s == t {
            return Ok(hat_split(&self.axis, mu0));
        }
        let (first, rest) = self.atom_steps(mu0.coords(), t, s)?;
        let mut rho = first.push(mu0.weights());
        for step in &rest {
            rho = step.push(&rho);
        }
        Ok(rho)
    }

    /// `(P_{t,s} v)` on the nodes plus the largest `C` over the substeps.
    fn pull_raw(&self, values: &[f64], t: f64, s: f64) -> Result<(Vec<f64>, f64)> {
        self.check_times(t, s)?;
        if s == t {
            return Ok((values.to_vec(), 0.0));
        }
        let (order, steps, c_max) = self.node_steps(t, s)?;
        let mut v = values.to_vec();
        for &(i, _) in order.iter().rev() {
            v = steps[i].pull(&v);
        }
        Ok((v, c_max))
    }

    /// `(P_{t,s} v)(x_a)` at the given points.
    fn pull_at_points(&self, values: &[f64], points: &[f64], t: f64, s: f64) -> Result<Vec<f64>> {
        self.check_times(t, s)?;
        if s == t {
            return Ok(points.iter().map(|&x| self.axis.interpolate(values, x)).collect());
        }
        let (first, rest) = self.atom_steps(points, t, s)?;
        let mut v = values.to_vec();
        for step in rest.iter().rev() {
            v = step.pull(&v);
        }
        Ok(first.pull(&v))
    }
}

/// Linear split of each atom between its two bracketing nodes, as a density.
fn hat_split(axis: &Axis, mu: &EmpiricalMeasure) -> Vec<f64> {
    let mut rho = vec![0.0; axis.nodes];
    let h = axis.spacing();
    for (x, w) in mu.coords().iter().zip(mu.weights()) {
        let pos = (x - axis.min) / h;
        let i = (pos.floor() as usize).min(axis.nodes - 2);
        let frac = pos - i as f64;
        rho[i] += w * (1.0 - frac);
        rho[i + 1] += w * frac;
    }
    for (i, r) in rho.iter_mut().enumerate() {
        *r /= axis.trapezoid_weight(i);
    }
    rho
}

/// Density of `P_{0,s} mu0` on the kernel's axis, renormalized to unit mass.
pub fn push_forward(k: &TransitionKernel, mu0: &EmpiricalMeasure, s: f64) -> Result<GridDensity> {
    let rho = k.push_raw(mu0, 0.0, s)?;
    let w = k.axis.trapezoid_weights();
    let mass: f64 = rho.iter().zip(&w).map(|(r, w)| r * w).sum();
    let g = GridDensity::new(vec![k.axis], rho.into_iter().map(|r| r / mass).collect())?;
    let edge = g.boundary_mass();
    if edge > PUSH_EDGE_TOL {
        return Err(Error::OutOfDomain(format!("push-forward puts {edge:e} on the axis ends; widen the axis")));
    }
    Ok(g)
}

/// `(P_{t,s} f)(x) = int p(t, x; s, y) f(y) dy` on the nodes.
///
/// Nodes within `RELIABLE_SDS sqrt(C_max (s - t))` of either end are flagged
/// unreliable.
pub fn pull_back(k: &TransitionKernel, f: &FieldOnGrid, t: f64, s: f64) -> Result<FieldOnGrid> {
    if f.axis() != k.axis() {
        return Err(Error::GridMismatch("field and kernel use different axes".into()));
    }
    let (v, c_max) = k.pull_raw(f.quadrature_values(), t, s)?;
    let band = k.axis.band_nodes(RELIABLE_SDS * (c_max * (s - t)).sqrt());
    Ok(FieldOnGrid::new(k.axis, v)?.with_reliable(shrink(f.reliable(), band)))
}

/// Finite-difference derivative of order 1 or 2 of `P_{t,s} f`.
pub fn pull_back_derivative(
    k: &TransitionKernel,
    f: &FieldOnGrid,
    t: f64,
    s: f64,
    order: usize,
) -> Result<FieldOnGrid> {
    if order != 1 && order != 2 {
        return Err(Error::param(format!("derivative order must be 1 or 2, got {order}")));
    }
    let g = pull_back(k, f, t, s)?;
    let d = derivative(g.values(), k.axis.spacing(), order);
    Ok(FieldOnGrid::new(k.axis, d)?.with_reliable(shrink(g.reliable(), 2)))
}

fn diff_values(
    spec_a: &CoefficientSpec,
    spec_b: &CoefficientSpec,
    mu_flow: &MeasureFlow,
    nu_flow: &MeasureFlow,
    axis: &Axis,
    g: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    for d in [spec_a.dim(), spec_b.dim(), mu_flow.dim(), nu_flow.dim()] {
        if d != 1 {
            return Err(Error::GridMismatch(format!("generator differences need d = 1, found {d}")));
        }
    }
    let points = axis.points();
    let ga = spec_a.generator_coefficients(t, &points, &mu_flow.at(t).to_empirical())?;
    let gb = spec_b.generator_coefficients(t, &points, &nu_flow.at(t).to_empirical())?;
    let h = axis.spacing();
    let d1 = derivative(g, h, 1);
    let d2 = derivative(g, h, 2);
    Ok((0..axis.nodes)
        .map(|i| {
            let db = ga.drift[i] - gb.drift[i];
            let dc = ga.cmatrix[i] - gb.cmatrix[i];
            let mut v = 0.0;
            if db != 0.0 {
                v += db * d1[i];
            }
            if dc != 0.0 {
                v += 0.5 * dc * d2[i];
            }
            v
        })
        .collect())
}

/// `((A^mu_t - A^nu_t) g)` at the nodes, with `A` the generator of `spec_a`
/// frozen at `mu_flow` (resp. `spec_b` at `nu_flow`).
pub fn generator_apply_diff(
    spec_a: &CoefficientSpec,
    spec_b: &CoefficientSpec,
    mu_flow: &MeasureFlow,
    nu_flow: &MeasureFlow,
    g: &FieldOnGrid,
    t: f64,
) -> Result<FieldOnGrid> {
    let v = diff_values(spec_a, spec_b, mu_flow, nu_flow, g.axis(), g.quadrature_values(), t)?;
    Ok(FieldOnGrid::new(*g.axis(), v)?.with_reliable(shrink(g.reliable(), 2)))
}

/// Sup over reliable nodes of `|d^2/dx^2 P_{s-tau,s} f|` for each lag `tau`.
pub fn second_derivative_profile(
    k: &TransitionKernel,
    f: &FieldOnGrid,
    s: f64,
    lags: &[f64],
) -> Result<Vec<f64>> {
    lags.par_iter()
        .map(|&tau| Ok(pull_back_derivative(k, f, s - tau, s, 2)?.sup_reliable()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::KernelFn;
    use crate::fit::linear_fit;

    fn dirac_flow(horizon: f64) -> MeasureFlow {
        MeasureFlow::constant(vec![0.0, horizon], EmpiricalMeasure::dirac(&[0.0]).unwrap().into()).unwrap()
    }

    fn kernel(beta: f64, c: f64, axis: Axis, horizon: f64) -> TransitionKernel {
        TransitionKernel::new(CoefficientSpec::constant_1d(beta, c).unwrap(), dirac_flow(horizon), axis, horizon)
            .unwrap()
    }

    fn gauss(x: f64, m: f64, v: f64) -> f64 {
        (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }

    fn axis() -> Axis {
        Axis::new(-8.0, 8.0, 401).unwrap()
    }

    #[test]
    fn heat_kernel_from_a_dirac() {
        let k = kernel(0.0, 1.0, axis(), 1.0);
        let rho = push_forward(&k, &EmpiricalMeasure::dirac(&[0.0]).unwrap(), 1.0).unwrap();
        let err = rho.values().iter().zip(axis().points()).fold(0.0f64, |m, (r, x)| m.max((r - gauss(x, 0.0, 1.0)).abs()));
        assert!(err < 1e-3, "sup error {err}");
    }

    #[test]
    fn drifted_brownian_motion() {
        let ax = Axis::new(-10.0, 12.0, 551).unwrap();
        let k = kernel(0.7, 1.0, ax, 2.0);
        let rho = push_forward(&k, &EmpiricalMeasure::dirac(&[0.0]).unwrap(), 2.0).unwrap();
        let err = rho.values().iter().zip(ax.points()).fold(0.0f64, |m, (r, x)| m.max((r - gauss(x, 1.4, 2.0)).abs()));
        assert!(err < 1e-3, "sup error {err}");
        assert!((rho.mean()[0] - 1.4).abs() < 1e-6);
    }

    #[test]
    fn gridded_gaussian_initial_law() {
        let k = kernel(0.0, 1.0, axis(), 1.0);
        let init = crate::measure::grid_to_measure(&GridDensity::gaussian(vec![axis()], &[0.0], 1.0).unwrap());
        let init = init.without_null_atoms().into_owned();
        let inside: Vec<f64> = init.coords().iter().copied().filter(|x| x.abs() < 7.9).collect();
        let w: Vec<f64> = init
            .coords()
            .iter()
            .zip(init.weights())
            .filter(|(x, _)| x.abs() < 7.9)
            .map(|(_, w)| *w)
            .collect();
        let init = EmpiricalMeasure::from_flat(1, inside, Some(w)).unwrap();
        let rho = push_forward(&k, &init, 1.0).unwrap();
        let err = rho.values().iter().zip(axis().points()).fold(0.0f64, |m, (r, x)| m.max((r - gauss(x, 0.0, 2.0)).abs()));
        assert!(err < 1e-3, "sup error {err}");
    }

    #[test]
    fn atoms_outside_the_axis_are_rejected() {
        let k = kernel(0.0, 1.0, axis(), 1.0);
        let far = EmpiricalMeasure::dirac(&[9.0]).unwrap();
        assert!(matches!(push_forward(&k, &far, 1.0), Err(Error::OutOfDomain(_))));
        let edge = EmpiricalMeasure::dirac(&[8.0]).unwrap();
        assert!(matches!(push_forward(&k, &edge, 1.0), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn pull_back_examples() {
        let k = kernel(0.0, 1.0, axis(), 1.0);
        let one = FieldOnGrid::from_fn(axis(), |_| 1.0).unwrap();
        let p = pull_back(&k, &one, 0.25, 1.0).unwrap();
        assert!(p.reliable().len() > 100);
        for i in p.reliable() {
            assert!((p.values()[i] - 1.0).abs() < 1e-8);
        }
        let lin = FieldOnGrid::from_fn(axis(), |x| x).unwrap();
        let p = pull_back(&k, &lin, 0.25, 1.0).unwrap();
        for i in p.reliable() {
            assert!((p.values()[i] - axis().node(i)).abs() < 1e-4);
        }
        let sq = FieldOnGrid::from_fn(axis(), |x| x * x).unwrap();
        let p = pull_back(&k, &sq, 0.25, 1.0).unwrap();
        for i in p.reliable() {
            let x = axis().node(i);
            assert!((p.values()[i] - (x * x + 0.75)).abs() < 1e-3);
        }
    }

    #[test]
    fn reversed_and_out_of_range_times() {
        let k = kernel(0.0, 1.0, axis(), 1.0);
        let one = FieldOnGrid::from_fn(axis(), |_| 1.0).unwrap();
        assert!(matches!(pull_back(&k, &one, 0.8, 0.2), Err(Error::ReversedTimes { .. })));
        assert!(matches!(pull_back(&k, &one, 0.2, 1.5), Err(Error::OutOfDomain(_))));
        let other = FieldOnGrid::from_fn(Axis::new(-4.0, 4.0, 101).unwrap(), |_| 1.0).unwrap();
        assert!(matches!(pull_back(&k, &other, 0.2, 0.5), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn derivative_examples() {
        let k = kernel(0.0, 1.0, axis(), 1.0);
        let lin = FieldOnGrid::from_fn(axis(), |x| 2.0 * x - 1.0).unwrap();
        let d = pull_back_derivative(&k, &lin, 0.5, 1.0, 2).unwrap();
        for i in d.reliable() {
            assert!(d.values()[i].abs() < 1e-3);
        }
        let sq = FieldOnGrid::from_fn(axis(), |x| x * x).unwrap();
        let d = pull_back_derivative(&k, &sq, 0.5, 1.0, 2).unwrap();
        for i in d.reliable() {
            assert!((d.values()[i] - 2.0).abs() < 1e-2);
        }
        assert!(pull_back_derivative(&k, &sq, 0.5, 1.0, 3).is_err());
    }

    #[test]
    fn generator_difference_examples() {
        let flow = dirac_flow(1.0);
        let a = CoefficientSpec::constant_1d(0.0, 1.0).unwrap();
        let b = CoefficientSpec::constant_1d(0.3, 1.0).unwrap();
        let lin = FieldOnGrid::from_fn(axis(), |x| x).unwrap();
        let same = generator_apply_diff(&a, &a, &flow, &flow, &lin, 0.5).unwrap();
        assert!(same.values().iter().all(|&v| v == 0.0));
        let g = generator_apply_diff(&a, &b, &flow, &flow, &lin, 0.5).unwrap();
        for i in g.reliable() {
            assert!((g.values()[i] + 0.3).abs() < 1e-12);
        }
        let c = CoefficientSpec::constant_1d(0.0, 1.2).unwrap();
        let sq = FieldOnGrid::from_fn(axis(), |x| x * x).unwrap();
        let g = generator_apply_diff(&c, &a, &flow, &flow, &sq, 0.5).unwrap();
        for i in g.reliable() {
            assert!((g.values()[i] - 0.2).abs() < 1e-9);
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let ax = Axis::new(-6.0, 6.0, 301).unwrap();
        let spec = CoefficientSpec::constant_1d(0.2, 0.8).unwrap();
        let points = ax.points();
        let g = spec.generator_coefficients(0.0, &points, &EmpiricalMeasure::dirac(&[0.0]).unwrap()).unwrap();
        let dense = |dt: f64| GaussStep::build(&[ax], &g, dt, RowMass::Unit).unwrap().dense();
        let (k1, k2, k12) = (dense(0.3), dense(0.45), dense(0.75));
        let w = ax.trapezoid_weights();
        let mut err: f64 = 0.0;
        for i in 112..189 {
            for j in 0..ax.nodes {
                let composed: f64 = (0..ax.nodes).map(|m| k1[i][m] * w[m] * k2[m][j]).sum();
                err = err.max((composed - k12[i][j]).abs());
            }
        }
        assert!(err < 1e-6, "composition error {err}");
    }

    #[test]
    fn one_step_rows_are_stochastic() {
        let ax = axis();
        let spec = CoefficientSpec::scalar(1.0, 0.5, KernelFn::trig(0.4, 0.0, 0), KernelFn::holder_bump(0.3, 1.0, 1.0))
            .unwrap();
        let k = TransitionKernel::new(spec, dirac_flow(1.0), ax, 0.1).unwrap();
        let one = FieldOnGrid::from_fn(ax, |_| 1.0).unwrap();
        let p = pull_back(&k, &one, 0.0, 1.0).unwrap();
        for i in p.reliable() {
            assert!((p.values()[i] - 1.0).abs() < 1e-8);
            assert!(p.values()[i] <= 1.0 + 1e-12);
        }
    }

    /// The heat semigroup smooths a C^alpha cusp so that its second
    /// derivative grows like (s - t)^(alpha/2 - 1).
    #[test]
    fn second_derivative_exponent() {
        let lags: Vec<f64> = (0..6).map(|k| 0.02 * 2f64.powi(k)).collect();
        let logs: Vec<f64> = lags.iter().map(|t| t.ln()).collect();
        for alpha in [0.5, 1.0] {
            let k = kernel(0.0, 1.0, axis(), 1.0);
            let f = TestFunction::HolderCusp { exponent: alpha, radius: 4.0, center: 0.0 };
            let field = FieldOnGrid::from_test_function(axis(), &f).unwrap();
            let sup = second_derivative_profile(&k, &field, 1.0, &lags).unwrap();
            let (slope, _) = linear_fit(&logs, &sup.iter().map(|v| v.ln()).collect::<Vec<_>>()).unwrap();
            assert!((slope + 1.0 - alpha / 2.0).abs() < 0.1, "alpha {alpha}: slope {slope}");
        }
    }
}
