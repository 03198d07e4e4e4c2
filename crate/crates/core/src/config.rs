//! TOML scenario documents for runs, inversion checks and contraction
//! studies. Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coeffs::{Coefficient, CoefficientMode, CoefficientSpec, FunctionalFn, KernelFn, FUNCTIONAL_NAMES};
use crate::engine::TimeGrid;
use crate::error::{Error, Result};
use crate::fixpoint::{gridded_initial, ContractionStudy, EngineChoice, Scenario};
use crate::grid::Axis;
use crate::kernels::{default_inversion_axis, FieldOnGrid, InversionOptions, TestFunction};
use crate::measure::{grid_to_measure, read_measure, EmpiricalMeasure, GridDensity, Measure, MeasureFlow};

const DEFAULT_GAUSSIAN_SDS: f64 = 8.0;
const DEFAULT_LAW_NODES_1D: usize = 401;
const DEFAULT_LAW_NODES_2D: usize = 81;

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
}

/// One registry entry of `B` or `Sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub declared_alpha: Option<f64>,
    pub declared_bound: Option<f64>,
}

impl EntryConfig {
    fn build(&self, mode: CoefficientMode) -> Result<Coefficient> {
        if FUNCTIONAL_NAMES.contains(&self.name.as_str()) {
            if mode != CoefficientMode::GeneralForm {
                return Err(Error::ConfigParse(format!(
                    "`{}` is a functional; set mode = \"general_form\"",
                    self.name
                )));
            }
            if self.declared_alpha.is_some() {
                return Err(Error::ConfigParse(format!("`{}` takes no declared_alpha", self.name)));
            }
            return Ok(FunctionalFn::from_registry(&self.name, &self.params, self.declared_bound)?.into());
        }
        Ok(KernelFn::from_registry(&self.name, &self.params, self.declared_alpha, self.declared_bound)?.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    #[serde(default = "one")]
    pub dim: usize,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(default = "kernel_form")]
    pub mode: CoefficientMode,
    pub drift: Vec<EntryConfig>,
    /// Row-major `dim x dim`.
    pub diffusion: Vec<EntryConfig>,
}

fn one() -> usize {
    1
}

fn kernel_form() -> CoefficientMode {
    CoefficientMode::KernelForm
}

impl CoefficientsConfig {
    pub fn build(&self) -> Result<CoefficientSpec> {
        let drift = self.drift.iter().map(|e| e.build(self.mode)).collect::<Result<_>>()?;
        let diffusion = self.diffusion.iter().map(|e| e.build(self.mode)).collect::<Result<_>>()?;
        CoefficientSpec::new(self.dim, self.alpha, self.lambda, self.mode, drift, diffusion)
    }
}

/// A probability law given by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Dirac {
        point: Vec<f64>,
    },
    /// Isotropic Gaussian. As an atomic law it is quantized on `nodes` points
    /// per axis over `mean +- half_width` (default 8 standard deviations).
    Gaussian {
        mean: Vec<f64>,
        variance: f64,
        half_width: Option<f64>,
        nodes: Option<usize>,
    },
    /// Measure CSV; relative paths resolve against the config's directory.
    EmpiricalFile {
        path: PathBuf,
    },
}

impl LawConfig {
    pub fn dim(&self, base: &Path) -> Result<usize> {
        Ok(match self {
            Self::Dirac { point } => point.len(),
            Self::Gaussian { mean, .. } => mean.len(),
            Self::EmpiricalFile { .. } => self.load(base)?.dim(),
        })
    }

    fn load(&self, base: &Path) -> Result<Measure> {
        match self {
            Self::EmpiricalFile { path } => read_measure(base.join(path)),
            _ => unreachable!("only file laws are loaded"),
        }
    }

    fn gaussian_axes(mean: &[f64], variance: f64, half_width: Option<f64>, nodes: Option<usize>) -> Result<Vec<Axis>> {
        if !(variance > 0.0) {
            return Err(Error::ConfigParse(format!("gaussian variance must be positive, got {variance}")));
        }
        let half = half_width.unwrap_or(DEFAULT_GAUSSIAN_SDS * variance.sqrt());
        let n = nodes.unwrap_or(if mean.len() == 1 { DEFAULT_LAW_NODES_1D } else { DEFAULT_LAW_NODES_2D });
        mean.iter().map(|&m| Axis::centered(m, half, n)).collect()
    }

    /// The law as atoms.
    pub fn empirical(&self, base: &Path) -> Result<EmpiricalMeasure> {
        match self {
            Self::Dirac { point } => EmpiricalMeasure::dirac(point),
            Self::Gaussian { mean, variance, half_width, nodes } => {
                let axes = Self::gaussian_axes(mean, *variance, *half_width, *nodes)?;
                let g = GridDensity::gaussian(axes, mean, *variance)?;
                Ok(grid_to_measure(&g).without_null_atoms().into_owned())
            }
            Self::EmpiricalFile { .. } => Ok(self.load(base)?.to_empirical().into_owned()),
        }
    }

    /// The law as a density on `axes`.
    pub fn gridded(&self, axes: Vec<Axis>, base: &Path) -> Result<GridDensity> {
        match self {
            Self::Gaussian { mean, variance, .. } => GridDensity::gaussian(axes, mean, *variance),
            Self::EmpiricalFile { .. } => match self.load(base)? {
                Measure::Grid(g) if g.axes() == axes.as_slice() => Ok(g),
                m => gridded_initial(axes, &m.to_empirical()),
            },
            Self::Dirac { .. } => gridded_initial(axes, &self.empirical(base)?),
        }
    }

    /// Centre and radius of a ball holding essentially all the mass.
    fn extent(&self, base: &Path) -> Result<(Vec<f64>, f64)> {
        Ok(match self {
            Self::Dirac { point } => (point.clone(), 0.0),
            Self::Gaussian { mean, variance, .. } => (mean.clone(), DEFAULT_GAUSSIAN_SDS * variance.sqrt()),
            Self::EmpiricalFile { .. } => {
                let m = self.empirical(base)?;
                let c = m.mean();
                let r = m
                    .points()
                    .map(|p| p.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                (c, r)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineConfig {
    /// Grid of `nodes` points per axis centred at the initial mean; the
    /// half-width defaults to the initial spread plus `6 sqrt(C T) + |B| T`.
    Density {
        #[serde(default = "default_density_nodes")]
        nodes: usize,
        half_width: Option<f64>,
    },
    Particle {
        particles: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_density_nodes() -> usize {
    241
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Window length for chained solves; absent means one window.
    #[serde(rename = "T_sub")]
    pub t_sub: Option<f64>,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    30
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter(), t_sub: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub coefficients: CoefficientsConfig,
    pub initial: LawConfig,
    pub time: TimeConfig,
    pub engine: EngineConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Largest `|B|` and `C` entries on a box around `center`, under `law`.
fn coefficient_bounds(
    spec: &CoefficientSpec,
    law: &EmpiricalMeasure,
    center: &[f64],
    reach: f64,
    horizon: f64,
) -> Result<(f64, f64)> {
    let d = spec.dim();
    let probe: Vec<f64> = (0..=40)
        .flat_map(|i| {
            let u = -reach + 2.0 * reach * i as f64 / 40.0;
            center.iter().map(move |c| c + u)
        })
        .collect();
    debug_assert_eq!(probe.len() % d, 0);
    let (mut b, mut c): (f64, f64) = (0.0, 0.0);
    for t in [0.0, 0.5 * horizon, horizon] {
        let g = spec.generator_coefficients(t, &probe, law)?;
        b = g.drift.iter().fold(b, |m, v| m.max(v.abs()));
        c = g.cmatrix.iter().fold(c, |m, v| m.max(v.abs()));
    }
    Ok((b, c))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        parse(text)
    }

    /// Builds the scenario; relative file paths resolve against `base`.
    /// `seed` overrides the particle seed.
    pub fn build(&self, base: &Path, seed: Option<u64>) -> Result<Scenario> {
        let spec = self.coefficients.build()?;
        let d = spec.dim();
        let init_dim = self.initial.dim(base)?;
        if init_dim != d {
            return Err(Error::DimensionMismatch { expected: d, found: init_dim });
        }
        let grid = TimeGrid::new(self.time.horizon, self.time.steps)?;
        let (initial, engine) = match &self.engine {
            EngineConfig::Particle { particles, seed: s } => (
                Measure::Empirical(self.initial.empirical(base)?),
                EngineChoice::Particle { particles: *particles, seed: seed.unwrap_or(*s) },
            ),
            EngineConfig::Density { nodes, half_width } => {
                let (center, spread) = self.initial.extent(base)?;
                let half = match half_width {
                    Some(h) => *h,
                    None => {
                        let law = self.initial.empirical(base)?;
                        let t = self.horizon();
                        let (b, c) = coefficient_bounds(&spec, &law, &center, spread + 8.0, t)?;
                        spread + 6.0 * (c * t).sqrt() + b * t + 1.0
                    }
                };
                let axes = center.iter().map(|&c| Axis::centered(c, half, *nodes)).collect::<Result<Vec<_>>>()?;
                (Measure::Grid(self.initial.gridded(axes, base)?), EngineChoice::Density)
            }
        };
        Scenario::new(spec, initial, grid, engine, self.coefficients.alpha)
    }

    /// Total horizon of the run.
    pub fn horizon(&self) -> f64 {
        self.time.horizon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Document for `verify-inversion`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    pub s: f64,
    #[serde(default = "default_inversion_nodes")]
    pub nodes: usize,
    #[serde(default = "default_time_nodes")]
    pub time_nodes: usize,
    pub max_step: Option<f64>,
    pub half_width: Option<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub mu: CoefficientsConfig,
    pub nu: CoefficientsConfig,
    pub initial: LawConfig,
    /// Frozen laws of the two specs (constant in time); default `initial`.
    pub mu_law: Option<LawConfig>,
    pub nu_law: Option<LawConfig>,
    pub f: TestFunctionConfig,
}

fn default_inversion_nodes() -> usize {
    401
}

fn default_time_nodes() -> usize {
    64
}

fn default_threshold() -> f64 {
    5e-3
}

/// Everything `verify_inversion` needs.
#[derive(Debug, Clone)]
pub struct InversionSetup {
    pub spec_a: CoefficientSpec,
    pub spec_b: CoefficientSpec,
    pub mu_flow: MeasureFlow,
    pub nu_flow: MeasureFlow,
    pub mu0: EmpiricalMeasure,
    pub f: FieldOnGrid,
    pub s: f64,
    pub options: InversionOptions,
    pub threshold: f64,
}

impl InversionConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        parse(text)
    }

    pub fn build(&self, base: &Path) -> Result<InversionSetup> {
        let spec_a = self.mu.build()?;
        let spec_b = self.nu.build()?;
        let mu0 = self.initial.empirical(base)?;
        let times = vec![0.0, self.s];
        let flow = |law: &Option<LawConfig>| -> Result<MeasureFlow> {
            let m = match law {
                Some(l) => l.empirical(base)?,
                None => mu0.clone(),
            };
            MeasureFlow::constant(times.clone(), m.into())
        };
        let mu_flow = flow(&self.mu_law)?;
        let nu_flow = flow(&self.nu_law)?;
        let axis = match self.half_width {
            Some(h) => Axis::centered(0.0, h, self.nodes)?,
            None => default_inversion_axis(&[(&spec_a, &mu_flow), (&spec_b, &nu_flow)], &mu0, self.s, self.nodes)?,
        };
        let f = TestFunction::from_registry(&self.f.name, &self.f.params)?;
        Ok(InversionSetup {
            spec_a,
            spec_b,
            mu_flow,
            nu_flow,
            mu0,
            f: FieldOnGrid::from_test_function(axis, &f)?,
            s: self.s,
            options: InversionOptions { time_nodes: self.time_nodes, max_step: self.max_step },
            threshold: self.threshold,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionCase {
    pub nodes: usize,
    pub coefficients: CoefficientsConfig,
}

/// Document for `contraction`: one study per case, all sharing the laws and
/// horizons. Each case uses its coefficients' `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionConfig {
    pub horizons: Vec<f64>,
    #[serde(default = "default_contraction_steps")]
    pub steps: usize,
    pub initial: LawConfig,
    pub mu: LawConfig,
    pub nu: LawConfig,
    pub cases: Vec<ContractionCase>,
}

fn default_contraction_steps() -> usize {
    16
}

impl ContractionConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        parse(text)
    }

    pub fn build(&self, base: &Path) -> Result<Vec<ContractionStudy>> {
        if self.horizons.is_empty() {
            return Err(Error::ConfigParse("list at least one horizon".into()));
        }
        let initial = self.initial.empirical(base)?;
        let mu = self.mu.empirical(base)?;
        let nu = self.nu.empirical(base)?;
        self.cases
            .iter()
            .map(|c| {
                Ok(ContractionStudy {
                    spec: c.coefficients.build()?,
                    initial: initial.clone(),
                    mu: mu.clone(),
                    nu: nu.clone(),
                    alpha: c.coefficients.alpha,
                    horizons: self.horizons.clone(),
                    nodes: c.nodes,
                    steps: self.steps,
                })
            })
            .collect()
    }
}
