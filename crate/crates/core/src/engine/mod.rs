//! The linearized equation with a frozen measure flow: Euler-Maruyama
//! particles and deterministic density propagation.

pub(crate) mod gauss;
mod particles;

pub use particles::{simulate_particles, ParticleEnsemble};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientSpec;
use crate::error::{Error, Result};
use crate::measure::{GridDensity, Measure, MeasureFlow, MeasureKind};

use gauss::{GaussStep, RowMass};

/// Pre-renormalization mass deficit that aborts density propagation.
pub const MASS_LEAK_TOL: f64 = 1e-4;
/// Largest admissible initial mass on the outermost grid layer.
pub const BOUNDARY_MASS_TOL: f64 = 1e-8;

/// Uniform partition `0 = t_0 < ... < t_steps = horizon`.
///
/// Coefficients are evaluated at `offset + t_k`, so a window of a longer run
/// keeps local node times while seeing absolute time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    #[serde(default)]
    offset: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::param("time grid needs at least one step"));
        }
        Ok(Self { horizon, steps, offset: 0.0 })
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Grid with steps of length at most `max_dt`.
    pub fn with_max_step(horizon: f64, max_dt: f64) -> Result<Self> {
        Self::new(horizon, ((horizon / max_dt) - 1e-9).ceil().max(1.0) as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Particle,
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub flow: MeasureFlow,
    pub engine: EngineKind,
    /// Particle engine only.
    pub seed: Option<u64>,
    /// Density engine only: factor applied at each step to restore unit mass.
    pub renormalization: Vec<f64>,
}

pub fn extract_marginal_flow(out: &SimulationOutput) -> MeasureFlow {
    out.flow.clone()
}

pub(crate) fn check_frozen(spec: &CoefficientSpec, frozen: &MeasureFlow, grid: &TimeGrid) -> Result<()> {
    if frozen.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: frozen.dim() });
    }
    if frozen.horizon() < grid.horizon() * (1.0 - 1e-9) - 1e-12 {
        return Err(Error::GridMismatch(format!(
            "frozen flow ends at {} before the horizon {}",
            frozen.horizon(),
            grid.horizon()
        )));
    }
    Ok(())
}

/// Evolves a gridded density under the frozen flow.
///
/// Each step applies the Gaussian step operator of the Euler scheme at the
/// left time node and restores unit mass; the factor is recorded.
pub fn propagate_density(
    spec: &CoefficientSpec,
    frozen: &MeasureFlow,
    init: &GridDensity,
    grid: &TimeGrid,
) -> Result<SimulationOutput> {
    if init.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: init.dim() });
    }
    check_frozen(spec, frozen, grid)?;
    let edge = init.boundary_mass();
    if edge > BOUNDARY_MASS_TOL {
        return Err(Error::MassLeak(format!(
            "initial density puts {edge:e} on the grid boundary; widen the grid"
        )));
    }
    let axes = init.axes().to_vec();
    let points: Vec<f64> = (0..init.len()).flat_map(|i| init.node_point(i)).collect();
    let dt = grid.dt();
    let mut measures = Vec::with_capacity(grid.steps() + 1);
    let mut factors = Vec::with_capacity(grid.steps());
    measures.push(Measure::Grid(init.clone()));
    let mut rho = init.values().to_vec();
    let mut cached: Option<(Vec<f64>, Vec<f64>, GaussStep)> = None;
    for k in 0..grid.steps() {
        let t = grid.node(k);
        let mu = frozen.at(t).to_empirical();
        let coeffs = spec.generator_coefficients(grid.offset() + t, &points, &mu)?;
        let reuse = matches!(&cached, Some((b, c, _)) if *b == coeffs.drift && *c == coeffs.cmatrix);
        if !reuse {
            let step = GaussStep::build(&axes, &coeffs, dt, RowMass::InDomain)?;
            cached = Some((coeffs.drift, coeffs.cmatrix, step));
        }
        let step = &cached.as_ref().expect("step built above").2;
        let next = step.push(&rho);
        let mass: f64 = next.iter().zip(step.weights()).map(|(v, w)| v * w).sum();
        if (1.0 - mass).abs() > MASS_LEAK_TOL {
            return Err(Error::MassLeak(format!(
                "step {k} (t = {t}) kept mass {mass}; widen the grid"
            )));
        }
        let factor = 1.0 / mass;
        log::debug!("density step {k}: renormalization factor {factor}");
        let g = GridDensity::new(axes.clone(), next.into_iter().map(|v| v * factor).collect())?;
        rho = g.values().to_vec();
        factors.push(factor);
        measures.push(Measure::Grid(g));
    }
    Ok(SimulationOutput {
        flow: MeasureFlow::new(grid.nodes(), measures)?,
        engine: EngineKind::Density,
        seed: None,
        renormalization: factors,
    })
}

/// Marginals as CSV: `t,x,density` (or `t,x1,x2,density`) for grid flows,
/// `t,particle_id,x1..xd` for empirical flows.
pub fn flow_to_csv(flow: &MeasureFlow) -> String {
    let mut out = String::new();
    let d = flow.dim();
    match flow.kind() {
        MeasureKind::Grid => {
            if d == 1 {
                out.push_str("t,x,density\n");
            } else {
                let cols: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
                let _ = writeln!(out, "t,{},density", cols.join(","));
            }
            for (t, m) in flow.times().iter().zip(flow.measures()) {
                let g = m.as_grid().expect("homogeneous flow");
                for (i, v) in g.values().iter().enumerate() {
                    let _ = write!(out, "{t:?}");
                    for c in g.node_point(i) {
                        let _ = write!(out, ",{c:?}");
                    }
                    let _ = writeln!(out, ",{v:?}");
                }
            }
        }
        MeasureKind::Empirical => {
            let cols: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
            let _ = writeln!(out, "t,particle_id,{}", cols.join(","));
            for (t, m) in flow.times().iter().zip(flow.measures()) {
                let e = m.as_empirical().expect("homogeneous flow");
                for (i, p) in e.points().enumerate() {
                    let _ = write!(out, "{t:?},{i}");
                    for c in p {
                        let _ = write!(out, ",{c:?}");
                    }
                    out.push('\n');
                }
            }
        }
    }
    out
}
