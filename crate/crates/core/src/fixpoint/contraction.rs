//! Empirical contraction rate of the Picard map against the horizon.

use serde::{Deserialize, Serialize};

use super::{gridded_initial, picard_distance, picard_metric};
use crate::coeffs::CoefficientSpec;
use crate::engine::{propagate_density, TimeGrid};
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::Axis;
use crate::measure::{EmpiricalMeasure, Measure, MeasureFlow};

/// Inputs of a contraction study. Each horizon gets its own density grid
/// of `nodes` points and `steps` time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionStudy {
    pub spec: CoefficientSpec,
    pub initial: EmpiricalMeasure,
    /// The two frozen laws, held constant in time.
    pub mu: EmpiricalMeasure,
    pub nu: EmpiricalMeasure,
    pub alpha: f64,
    pub horizons: Vec<f64>,
    pub nodes: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub alpha: f64,
    pub horizons: Vec<f64>,
    /// `M_alpha(Phi mu, Phi nu) / M_alpha(mu, nu)` per horizon.
    pub rates: Vec<f64>,
    /// Least-squares fit of `log rate` on `log T`; absent with fewer than
    /// two positive rates.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

/// Sup of `|B|` and of `C` over a probe range, under both frozen laws.
fn coefficient_bounds(study: &ContractionStudy, reach: f64) -> Result<(f64, f64)> {
    let d = study.spec.dim();
    let probe = Axis::centered(0.0, reach, 101)?.points();
    let xs: Vec<f64> = probe.iter().flat_map(|&x| std::iter::repeat_n(x, d)).collect();
    let (mut b_max, mut c_max): (f64, f64) = (0.0, 0.0);
    let t_max = study.horizons.iter().fold(0.0f64, |m, &t| m.max(t));
    for law in [&study.mu, &study.nu] {
        for t in [0.0, 0.5 * t_max, t_max] {
            let g = study.spec.generator_coefficients(t, &xs, law)?;
            b_max = g.drift.iter().fold(b_max, |m, v| m.max(v.abs()));
            c_max = g.cmatrix.iter().fold(c_max, |m, v| m.max(v.abs()));
        }
    }
    Ok((b_max, c_max))
}

/// Measures `r(T)` for each horizon and fits `log r = slope log T + c`.
pub fn estimate_contraction(study: &ContractionStudy) -> Result<ContractionEstimate> {
    let d = study.spec.dim();
    for m in [&study.initial, &study.mu, &study.nu] {
        if m.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: m.dim() });
        }
    }
    if study.horizons.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::param("horizons must be positive"));
    }
    let mu: Measure = study.mu.clone().into();
    let nu: Measure = study.nu.clone().into();
    let base = picard_metric(&mu, &nu, study.alpha)?;
    if base == 0.0 {
        return Err(Error::DegenerateInput("the two frozen laws coincide".into()));
    }
    let center = study.initial.mean();
    let radius = study.initial.support_radius();
    let reach = 8.0 + study.mu.support_radius().max(study.nu.support_radius());
    let (b_max, c_max) = coefficient_bounds(study, reach)?;

    let mut rates = Vec::with_capacity(study.horizons.len());
    for &horizon in &study.horizons {
        let half = 6.0 * (c_max * horizon).sqrt() + b_max * horizon + radius;
        let axes: Vec<Axis> =
            center.iter().map(|&c| Axis::centered(c, half, study.nodes)).collect::<Result<_>>()?;
        let init = gridded_initial(axes, &study.initial)?;
        let grid = TimeGrid::new(horizon, study.steps)?;
        let frozen_mu = MeasureFlow::constant(grid.nodes(), mu.clone())?;
        let frozen_nu = MeasureFlow::constant(grid.nodes(), nu.clone())?;
        let a = propagate_density(&study.spec, &frozen_mu, &init, &grid)?.flow;
        let b = propagate_density(&study.spec, &frozen_nu, &init, &grid)?.flow;
        let r = picard_distance(&a, &b, study.alpha)? / base;
        log::info!("contraction: T = {horizon}, rate = {r}");
        rates.push(r);
    }

    let (xs, ys): (Vec<f64>, Vec<f64>) = study
        .horizons
        .iter()
        .zip(&rates)
        .filter(|(_, &r)| r > 0.0)
        .map(|(t, r)| (t.ln(), r.ln()))
        .unzip();
    let fit = if xs.len() >= 2 { linear_fit(&xs, &ys).ok() } else { None };
    Ok(ContractionEstimate {
        alpha: study.alpha,
        horizons: study.horizons.clone(),
        rates,
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
    })
}
