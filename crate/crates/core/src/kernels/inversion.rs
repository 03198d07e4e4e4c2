//! Numerical check that the difference of two push-forwards equals the
//! time integral of pulled-back generator differences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{diff_values, FieldOnGrid, TransitionKernel};
use crate::coeffs::CoefficientSpec;
use crate::error::{Error, Result};
use crate::grid::Axis;
use crate::measure::{EmpiricalMeasure, MeasureFlow};

/// Below this `|lhs|` the relative gap falls back to the absolute gap.
const REL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionOptions {
    /// Number of graded time intervals on `[0, s]`.
    pub time_nodes: usize,
    /// Longest Euler substep; `None` uses a single step per interval.
    pub max_step: Option<f64>,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self { time_nodes: 64, max_step: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionParams {
    pub nodes: usize,
    pub dx: f64,
    pub domain: [f64; 2],
    pub time_nodes: usize,
    pub max_step: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub params: InversionParams,
}

/// Axis centred at 0 with half-width `max(8, 6 sqrt(C_max s))` plus the
/// support radius of `mu0`; `C_max` is sampled on that base range.
pub fn default_inversion_axis(
    pairs: &[(&CoefficientSpec, &MeasureFlow)],
    mu0: &EmpiricalMeasure,
    s: f64,
    nodes: usize,
) -> Result<Axis> {
    let radius = mu0.support_radius();
    let probe = Axis::centered(0.0, 8.0 + radius, 201)?.points();
    let mut c_max: f64 = 0.0;
    for (spec, flow) in pairs {
        for t in [0.0, 0.5 * s, s] {
            let g = spec.generator_coefficients(t, &probe, &flow.at(t).to_empirical())?;
            c_max = g.cmatrix.iter().fold(c_max, |m, &c| m.max(c));
        }
    }
    Axis::centered(0.0, 8f64.max(6.0 * (c_max * s).sqrt()) + radius, nodes)
}

/// Compares `int f d(P^mu_{0,s} - P^nu_{0,s}) mu0` with
/// `int_0^s int P^mu_{0,t} (A^mu_t - A^nu_t) P^nu_{t,s} f dmu0 dt`.
///
/// Both sides use the same step matrices, so the gap measures the time
/// quadrature and the finite differences. Time nodes are
/// `t_j = s (1 - (j/m)^2)`, clustered at `t = s` where the integrand blows
/// up for rough `f`.
#[allow(clippy::too_many_arguments)]
pub fn verify_inversion(
    spec_a: &CoefficientSpec,
    spec_b: &CoefficientSpec,
    mu_flow: &MeasureFlow,
    nu_flow: &MeasureFlow,
    mu0: &EmpiricalMeasure,
    f: &FieldOnGrid,
    s: f64,
    opts: &InversionOptions,
) -> Result<InversionReport> {
    if mu0.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: mu0.dim() });
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::param(format!("s must be positive, got {s}")));
    }
    if opts.time_nodes < 2 {
        return Err(Error::param("need at least two time intervals"));
    }
    let axis = *f.axis();
    let max_step = opts.max_step.unwrap_or(s);
    let ka = TransitionKernel::new(spec_a.clone(), mu_flow.clone(), axis, max_step)?;
    let kb = TransitionKernel::new(spec_b.clone(), nu_flow.clone(), axis, max_step)?;
    let fq = f.quadrature_values();
    let w = axis.trapezoid_weights();

    let rho_a = ka.push_raw(mu0, 0.0, s)?;
    let rho_b = kb.push_raw(mu0, 0.0, s)?;
    let lhs: f64 = (0..axis.nodes).map(|j| w[j] * fq[j] * (rho_a[j] - rho_b[j])).sum();

    let m = opts.time_nodes;
    let times: Vec<f64> = (0..=m)
        .map(|j| if j == m { 0.0 } else { s * (1.0 - (j as f64 / m as f64).powi(2)) })
        .collect();
    let integrand: Vec<f64> = times
        .par_iter()
        .enumerate()
        .map(|(j, &t)| -> Result<f64> {
            let g = if j == 0 { fq.to_vec() } else { kb.pull_raw(fq, t, s)?.0 };
            let h = diff_values(spec_a, spec_b, mu_flow, nu_flow, &axis, &g, t)?;
            let at_atoms = ka.pull_at_points(&h, mu0.coords(), 0.0, t)?;
            Ok(at_atoms.iter().zip(mu0.weights()).map(|(v, w)| v * w).sum())
        })
        .collect::<Result<_>>()?;
    let rhs: f64 = (0..m).map(|j| 0.5 * (integrand[j] + integrand[j + 1]) * (times[j] - times[j + 1])).sum();

    let abs_gap = (lhs - rhs).abs();
    let rel_gap = if lhs.abs() > REL_FLOOR { abs_gap / lhs.abs() } else { abs_gap };
    Ok(InversionReport {
        lhs,
        rhs,
        abs_gap,
        rel_gap,
        params: InversionParams {
            nodes: axis.nodes,
            dx: axis.spacing(),
            domain: [axis.min, axis.max],
            time_nodes: m,
            max_step,
            s,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::TestFunction;

    fn flow() -> MeasureFlow {
        MeasureFlow::constant(vec![0.0, 1.0], EmpiricalMeasure::dirac(&[0.0]).unwrap().into()).unwrap()
    }

    fn cusp(axis: Axis) -> FieldOnGrid {
        let f = TestFunction::HolderCusp { exponent: 0.5, radius: 1.0, center: 0.0 };
        FieldOnGrid::from_test_function(axis, &f).unwrap()
    }

    #[test]
    fn identical_specs_give_zero() {
        let axis = Axis::new(-8.0, 8.0, 201).unwrap();
        let a = CoefficientSpec::constant_1d(0.1, 1.0).unwrap();
        let mu0 = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let r = verify_inversion(&a, &a, &flow(), &flow(), &mu0, &cusp(axis), 1.0, &InversionOptions::default())
            .unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.abs_gap <= 1e-12);
    }

    #[test]
    fn constant_test_function_gives_zero() {
        let axis = Axis::new(-8.0, 8.0, 201).unwrap();
        let a = CoefficientSpec::constant_1d(0.0, 1.0).unwrap();
        let b = CoefficientSpec::constant_1d(0.3, 1.2).unwrap();
        let one = FieldOnGrid::from_fn(axis, |_| 1.0).unwrap();
        let mu0 = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let r = verify_inversion(&a, &b, &flow(), &flow(), &mu0, &one, 1.0, &InversionOptions::default()).unwrap();
        assert!(r.lhs.abs() < 1e-10 && r.rhs.abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn default_axis_covers_the_support() {
        let a = CoefficientSpec::constant_1d(0.0, 4.0).unwrap();
        let mu0 = EmpiricalMeasure::new(&[vec![-1.0], vec![2.0]], None).unwrap();
        let axis = default_inversion_axis(&[(&a, &flow())], &mu0, 4.0, 401).unwrap();
        assert!((axis.max - 26.0).abs() < 1e-12 && (axis.min + 26.0).abs() < 1e-12);
    }
}
