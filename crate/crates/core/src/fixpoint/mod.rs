//! Picard iteration `mu -> Law(X^mu)` on flows of marginals.

mod contraction;

pub use contraction::{estimate_contraction, ContractionEstimate, ContractionStudy};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{validate_spec, CoefficientSpec, MIN_SAMPLE_BUDGET};
use crate::engine::{propagate_density, simulate_particles, TimeGrid};
use crate::error::{Error, Result};
use crate::grid::Axis;
use crate::measure::{metric_bl_alpha, EmpiricalMeasure, GridDensity, Measure, MeasureFlow};

/// Pairs whose joint support has more distinct points than this are
/// projected onto a lattice before the bounded-Hoelder LP.
pub const MAX_METRIC_ATOMS: usize = 512;
const LATTICE_NODES_1D: usize = 512;
const LATTICE_NODES_2D: usize = 32;
/// Halvings tried on a window that fails to converge.
const MAX_HALVINGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineChoice {
    Particle { particles: usize, seed: u64 },
    /// Works on the grid of the initial density.
    Density,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: CoefficientSpec,
    pub initial: Measure,
    pub grid: TimeGrid,
    pub engine: EngineChoice,
    pub alpha: f64,
}

impl Scenario {
    pub fn new(
        spec: CoefficientSpec,
        initial: Measure,
        grid: TimeGrid,
        engine: EngineChoice,
        alpha: f64,
    ) -> Result<Self> {
        if initial.dim() != spec.dim() {
            return Err(Error::DimensionMismatch { expected: spec.dim(), found: initial.dim() });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        match engine {
            EngineChoice::Density if initial.as_grid().is_none() => {
                return Err(Error::param("the density engine needs a gridded initial law"));
            }
            EngineChoice::Particle { particles: 0, .. } => {
                return Err(Error::param("need at least one particle"));
            }
            _ => {}
        }
        let report = validate_spec(&spec, MIN_SAMPLE_BUDGET)?;
        if !report.pass {
            log::warn!(
                "coefficient check did not pass: lambda_hat = {}, holder ratio = {}",
                report.lambda_hat,
                report.holder_ratio
            );
        }
        Ok(Self { spec, initial, grid, engine, alpha })
    }

    /// Same data on another window.
    fn window(&self, initial: Measure, grid: TimeGrid, engine: EngineChoice) -> Self {
        Self { spec: self.spec.clone(), initial, grid, engine, alpha: self.alpha }
    }

    /// `mu^0`: the initial law at every node.
    pub fn constant_flow(&self) -> MeasureFlow {
        MeasureFlow::constant(self.grid.nodes(), self.initial.clone()).expect("time grid nodes are increasing")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PicardDiagnostics {
    pub iterations: usize,
    /// `M_alpha(mu^{k+1}, mu^k)` for `k = 0, 1, ...`.
    pub distances: Vec<f64>,
    /// `distances[k] / distances[k - 1]` wherever the denominator is positive.
    pub rates: Vec<f64>,
    pub converged: bool,
}

impl PicardDiagnostics {
    fn record(&mut self, d: f64) {
        if let Some(&prev) = self.distances.last() {
            if prev > 0.0 {
                self.rates.push(d / prev);
            }
        }
        self.distances.push(d);
        self.iterations += 1;
    }
}

fn check_times(sc: &Scenario, mu: &MeasureFlow) -> Result<()> {
    let nodes = sc.grid.nodes();
    if mu.len() != nodes.len() || mu.times().iter().zip(&nodes).any(|(a, b)| (a - b).abs() > 1e-12 * b.max(1.0)) {
        return Err(Error::GridMismatch(format!(
            "flow has {} nodes up to {}, scenario grid has {} up to {}",
            mu.len(),
            mu.horizon(),
            nodes.len(),
            sc.grid.horizon()
        )));
    }
    Ok(())
}

/// Marginal flow of the linearized equation with `mu` frozen.
pub fn picard_step(sc: &Scenario, mu: &MeasureFlow) -> Result<MeasureFlow> {
    check_times(sc, mu)?;
    let out = match sc.engine {
        EngineChoice::Density => {
            let init = sc.initial.as_grid().expect("checked in Scenario::new");
            propagate_density(&sc.spec, mu, init, &sc.grid)?
        }
        EngineChoice::Particle { particles, seed } => {
            simulate_particles(&sc.spec, mu, &sc.initial.to_empirical(), &sc.grid, particles, seed)?
        }
    };
    Ok(out.flow)
}

/// Cloud-in-cell projection onto a lattice spanning both measures.
fn project_pair(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<(EmpiricalMeasure, EmpiricalMeasure)> {
    let d = a.dim();
    let per_axis = if d == 1 { LATTICE_NODES_1D } else { LATTICE_NODES_2D };
    let mut axes = Vec::with_capacity(d);
    for k in 0..d {
        let coord = a.coords().iter().chain(b.coords()).skip(k).step_by(d);
        let (lo, hi) = coord.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        let pad = 1e-9 * (hi - lo).max(1.0);
        axes.push(Axis::new(lo - pad, hi + pad, per_axis)?);
    }
    Ok((lattice(a, &axes), lattice(b, &axes)))
}

fn lattice(m: &EmpiricalMeasure, axes: &[Axis]) -> EmpiricalMeasure {
    let d = axes.len();
    let dims: Vec<usize> = axes.iter().map(|a| a.nodes).collect();
    let mut w = vec![0.0; dims.iter().product()];
    for (p, &mass) in m.points().zip(m.weights()) {
        let mut corners = vec![(0usize, mass)];
        for k in 0..d {
            let pos = (p[k] - axes[k].min) / axes[k].spacing();
            let i = (pos.floor() as usize).min(dims[k] - 2);
            let f = pos - i as f64;
            corners = corners
                .into_iter()
                .flat_map(|(flat, m)| [(flat * dims[k] + i, m * (1.0 - f)), (flat * dims[k] + i + 1, m * f)])
                .collect();
        }
        for (flat, v) in corners {
            w[flat] += v;
        }
    }
    let mut coords = Vec::with_capacity(w.len() * d);
    for flat in 0..w.len() {
        let mut rem = flat;
        let mut idx = vec![0; d];
        for k in (0..d).rev() {
            idx[k] = rem % dims[k];
            rem /= dims[k];
        }
        coords.extend(idx.iter().zip(axes).map(|(&i, a)| a.node(i)));
    }
    EmpiricalMeasure::from_flat(d, coords, Some(w)).expect("lattice weights are a probability vector")
}

/// Number of distinct points in the union of both supports.
fn joint_support(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> usize {
    let mut pts: Vec<&[f64]> = a.points().chain(b.points()).collect();
    pts.sort_by(|p, q| p.iter().zip(*q).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    pts.len()
}

/// `BL_alpha` between two measures, projecting large ones onto a lattice.
pub fn picard_metric(a: &Measure, b: &Measure, alpha: f64) -> Result<f64> {
    let (a, b) = (a.to_empirical(), b.to_empirical());
    if joint_support(&a, &b) > MAX_METRIC_ATOMS {
        let (pa, pb) = project_pair(&a, &b)?;
        return metric_bl_alpha(&pa, &pb, alpha);
    }
    metric_bl_alpha(&a, &b, alpha)
}

/// Per-node `BL_alpha` between flows on the same grid.
pub fn picard_distance_profile(a: &MeasureFlow, b: &MeasureFlow, alpha: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("flows have {} and {} nodes", a.len(), b.len())));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    a.measures()
        .par_iter()
        .zip(b.measures())
        .map(|(x, y)| if x == y { Ok(0.0) } else { picard_metric(x, y, alpha) })
        .collect()
}

/// `max_t BL_alpha(a_t, b_t)` over the shared nodes.
pub fn picard_distance(a: &MeasureFlow, b: &MeasureFlow, alpha: f64) -> Result<f64> {
    Ok(picard_distance_profile(a, b, alpha)?.into_iter().fold(0.0, f64::max))
}

/// Iterates from the constant flow of the initial law.
pub fn solve_fixed_point(sc: &Scenario, tol: f64, max_iter: usize) -> Result<(MeasureFlow, PicardDiagnostics)> {
    solve_fixed_point_from(sc, sc.constant_flow(), tol, max_iter)
}

/// Iterates `mu^{k+1} = picard_step(mu^k)` from `start` until successive
/// iterates are within `tol`.
pub fn solve_fixed_point_from(
    sc: &Scenario,
    start: MeasureFlow,
    tol: f64,
    max_iter: usize,
) -> Result<(MeasureFlow, PicardDiagnostics)> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::param("max_iter must be at least 1"));
    }
    check_times(sc, &start)?;
    let mut diag = PicardDiagnostics::default();
    let mut current = start;
    for k in 0..max_iter {
        let next = picard_step(sc, &current)?;
        let d = picard_distance(&next, &current, sc.alpha)?;
        diag.record(d);
        log::info!("Picard iteration {}: distance {d:e}", k + 1);
        current = next;
        if d < tol {
            diag.converged = true;
            return Ok((current, diag));
        }
    }
    let last_distance = *diag.distances.last().expect("at least one iteration");
    Err(Error::MaxIterationsExceeded { iterations: max_iter, last_distance, diagnostics: Box::new(diag) })
}

/// One solved window of a chained run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub start: f64,
    pub end: f64,
    pub diagnostics: PicardDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainedSolution {
    /// Flow on `[0, T_total]`; junction nodes appear once.
    pub flow: MeasureFlow,
    pub windows: Vec<WindowReport>,
}

/// Solves on consecutive windows of length at most `t_sub`, each started
/// from the previous window's terminal marginal. A window that fails to
/// converge is halved and retried a few times.
///
/// The time step is that of `sc.grid`; the particle engine uses a distinct
/// seed per window.
pub fn chain_solve(sc: &Scenario, t_total: f64, t_sub: f64, tol: f64, max_iter: usize) -> Result<ChainedSolution> {
    if !(t_total > 0.0 && t_sub > 0.0 && t_sub <= t_total * (1.0 + 1e-12)) {
        return Err(Error::param(format!("need 0 < T_sub <= T_total, got T_sub = {t_sub}, T_total = {t_total}")));
    }
    let dt = sc.grid.dt();
    let n_windows = ((t_total / t_sub) - 1e-9).ceil().max(1.0) as usize;
    let mut bounds: Vec<f64> = (0..=n_windows).map(|k| t_total * k as f64 / n_windows as f64).collect();
    bounds[n_windows] = t_total;

    let mut times = vec![0.0];
    let mut measures = vec![sc.initial.clone()];
    let mut windows = Vec::new();
    let mut queue: Vec<(f64, f64, usize)> = bounds.windows(2).rev().map(|w| (w[0], w[1], 0)).collect();
    while let Some((start, end, depth)) = queue.pop() {
        let len = end - start;
        let steps = ((len / dt) - 1e-9).ceil().max(1.0) as usize;
        let grid = TimeGrid::new(len, steps)?.with_offset(start);
        let engine = match sc.engine {
            EngineChoice::Particle { particles, seed } => {
                EngineChoice::Particle { particles, seed: window_seed(seed, windows.len()) }
            }
            other => other,
        };
        let initial = measures.last().expect("flow starts with the initial law").clone();
        let window = sc.window(initial, grid, engine);
        match solve_fixed_point(&window, tol, max_iter) {
            Ok((flow, diagnostics)) => {
                let (local, ms) = flow.into_parts();
                for (t, m) in local.into_iter().zip(ms).skip(1) {
                    times.push(start + t);
                    measures.push(m);
                }
                *times.last_mut().expect("nonempty") = end;
                windows.push(WindowReport { start, end, diagnostics });
            }
            Err(Error::MaxIterationsExceeded { .. }) if depth < MAX_HALVINGS && steps > 1 => {
                log::warn!("window [{start}, {end}] did not converge; halving");
                let mid = 0.5 * (start + end);
                queue.push((mid, end, depth + 1));
                queue.push((start, mid, depth + 1));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ChainedSolution { flow: MeasureFlow::new(times, measures)?, windows })
}

fn window_seed(seed: u64, window: usize) -> u64 {
    if window == 0 {
        seed
    } else {
        seed ^ (window as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }
}

/// Gridded initial law for the density engine.
pub fn gridded_initial(axes: Vec<Axis>, law: &EmpiricalMeasure) -> Result<GridDensity> {
    if law.len() == 1 {
        return GridDensity::spike(axes, law.point(0));
    }
    let projected = lattice(law, &axes);
    let values = projected
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| w / crate::measure::cell_weight(&axes, i))
        .collect();
    GridDensity::new(axes, values)
}
