//! Finitely supported probability measures, gridded densities and time-indexed
//! flows of either kind, plus the dual metrics between them.

mod csv;
mod metric;

pub use self::csv::{read_measure, read_measure_str, write_measure, write_measure_string};
pub use self::metric::{flow_distance, flow_distance_profile, metric_bl_alpha, metric_w_alpha, MetricKind};

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Axis;

/// Tolerance on the total weight of an empirical measure.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Tolerance on the trapezoidal mass of a grid density.
pub const GRID_MASS_TOL: f64 = 1e-6;

/// A probability measure `sum_i w_i delta_{x_i}` on R^d.
///
/// Points are stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Builds a measure from points and optional (unnormalized) weights.
    ///
    /// Missing weights default to uniform; given weights are normalized to
    /// sum to one.
    pub fn new(points: &[Vec<f64>], weights: Option<&[f64]>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptySupport)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, weights.map(|w| w.to_vec()))
    }

    /// Builds a measure from a flat row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if coords.is_empty() {
            return Err(Error::EmptySupport);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: coords.len() % dim });
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::param(format!("non-finite coordinate {bad}")));
        }
        let n = coords.len() / dim;
        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: w.len() });
                }
                for (index, &weight) in w.iter().enumerate() {
                    if weight < 0.0 || weight.is_nan() {
                        return Err(Error::NegativeWeight { index, weight });
                    }
                    if !weight.is_finite() {
                        return Err(Error::param(format!("non-finite weight at atom {index}")));
                    }
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::EmptySupport);
                }
                if (total - 1.0).abs() <= 4.0 * f64::EPSILON {
                    w
                } else {
                    w.into_iter().map(|x| x / total).collect()
                }
            }
        };
        Ok(Self { dim, coords, weights })
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(&[point.to_vec()], None)
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
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, &w) in self.points().zip(&self.weights) {
            for (mk, &pk) in m.iter_mut().zip(p) {
                *mk += w * pk;
            }
        }
        m
    }

    /// Covariance-free second moment `sum_i w_i |x_i - c|^2` about a center.
    pub fn second_moment_about(&self, center: &[f64]) -> f64 {
        self.points()
            .zip(&self.weights)
            .map(|(p, &w)| w * p.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum()
    }

    /// Largest distance of an atom from the origin.
    pub fn support_radius(&self) -> f64 {
        self.points()
            .map(|p| p.iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Merges atoms with identical coordinates (weights summed) and sorts the
    /// support lexicographically.
    pub fn merged(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(self.point(a), self.point(b)));
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut weights: Vec<f64> = Vec::with_capacity(self.len());
        let mut last: Option<usize> = None;
        for i in order {
            match last {
                Some(j) if self.point(j) == self.point(i) => {
                    *weights.last_mut().expect("nonempty") += self.weights[i];
                }
                _ => {
                    coords.extend_from_slice(self.point(i));
                    weights.push(self.weights[i]);
                    last = Some(i);
                }
            }
        }
        Self { dim: self.dim, coords, weights }
    }

    /// Drops atoms of exactly zero weight, keeping at least one atom.
    pub fn without_null_atoms(&self) -> Cow<'_, Self> {
        if self.weights.iter().all(|&w| w > 0.0) {
            return Cow::Borrowed(self);
        }
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (p, &w) in self.points().zip(&self.weights) {
            if w > 0.0 {
                coords.extend_from_slice(p);
                weights.push(w);
            }
        }
        Cow::Owned(Self { dim: self.dim, coords, weights })
    }

    /// Applies `x -> scale * x` to every atom.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            dim: self.dim,
            coords: self.coords.iter().map(|c| c * scale).collect(),
            weights: self.weights.clone(),
        }
    }
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// A nonnegative density sampled on a uniform grid in dimension 1 or 2,
/// normalized to unit trapezoidal mass. Values are row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    axes: Vec<Axis>,
    values: Vec<f64>,
}

impl GridDensity {
    /// Validates the values and rescales them to unit trapezoidal mass.
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::param(format!(
                "grid densities support dimension 1 or 2, got {}",
                axes.len()
            )));
        }
        let expected: usize = axes.iter().map(|a| a.nodes).product();
        if values.len() != expected {
            return Err(Error::GridMismatch(format!(
                "expected {expected} grid values, found {}",
                values.len()
            )));
        }
        for (index, &v) in values.iter().enumerate() {
            if v < 0.0 || v.is_nan() {
                return Err(Error::NegativeWeight { index, weight: v });
            }
            if !v.is_finite() {
                return Err(Error::param(format!("non-finite density value at node {index}")));
            }
        }
        let mut g = Self { axes, values };
        let mass = g.mass();
        if mass <= 0.0 {
            return Err(Error::EmptySupport);
        }
        // Already-normalized input (e.g. re-read from disk) is kept bit-exact.
        if (mass - 1.0).abs() > 4.0 * f64::EPSILON {
            g.values.iter_mut().for_each(|v| *v /= mass);
        }
        Ok(g)
    }

    /// Samples `f` at the grid nodes and normalizes.
    pub fn from_fn(axes: Vec<Axis>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.nodes).product();
        let mut values = Vec::with_capacity(n);
        let mut point = vec![0.0; axes.len()];
        for flat in 0..n {
            node_point(&axes, flat, &mut point);
            values.push(f(&point));
        }
        Self::new(axes, values)
    }

    /// Gaussian with the given mean and isotropic variance.
    pub fn gaussian(axes: Vec<Axis>, mean: &[f64], variance: f64) -> Result<Self> {
        if mean.len() != axes.len() {
            return Err(Error::DimensionMismatch { expected: axes.len(), found: mean.len() });
        }
        if variance <= 0.0 {
            return Err(Error::param("gaussian variance must be positive"));
        }
        Self::from_fn(axes, |x| {
            let r2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
            (-0.5 * r2 / variance).exp()
        })
    }

    /// All mass at the node nearest to `point`.
    pub fn spike(axes: Vec<Axis>, point: &[f64]) -> Result<Self> {
        if point.len() != axes.len() {
            return Err(Error::DimensionMismatch { expected: axes.len(), found: point.len() });
        }
        let idx: Vec<usize> = axes.iter().zip(point).map(|(a, &p)| a.nearest(p)).collect();
        let n: usize = axes.iter().map(|a| a.nodes).product();
        let mut values = vec![0.0; n];
        values[flat_index(&axes, &idx)] = 1.0;
        Self::new(axes, values)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Trapezoidal cell weight of the node with flat index `flat`.
    pub fn cell_weight(&self, flat: usize) -> f64 {
        cell_weight(&self.axes, flat)
    }

    pub fn cell_weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.cell_weight(i)).collect()
    }

    pub fn node_point(&self, flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        node_point(&self.axes, flat, &mut p);
        p
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, v)| v * self.cell_weight(i)).sum()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.axes == other.axes
    }

    /// Discrete mean `sum_i w_i rho_i x_i` per coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        let mut p = vec![0.0; self.dim()];
        for (i, &v) in self.values.iter().enumerate() {
            node_point(&self.axes, i, &mut p);
            let w = v * self.cell_weight(i);
            for (mk, pk) in m.iter_mut().zip(&p) {
                *mk += w * pk;
            }
        }
        m
    }

    /// Discrete variance of coordinate `k`.
    pub fn variance(&self, k: usize) -> f64 {
        let m = self.mean()[k];
        let mut p = vec![0.0; self.dim()];
        let mut acc = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            node_point(&self.axes, i, &mut p);
            acc += v * self.cell_weight(i) * (p[k] - m).powi(2);
        }
        acc
    }

    /// Total trapezoidal mass carried by the outermost node layer.
    pub fn boundary_mass(&self) -> f64 {
        let mut idx = vec![0usize; self.dim()];
        let mut acc = 0.0;
        for flat in 0..self.len() {
            unflatten(&self.axes, flat, &mut idx);
            let on_edge = idx.iter().zip(&self.axes).any(|(&i, a)| i == 0 || i + 1 == a.nodes);
            if on_edge {
                acc += self.values[flat] * self.cell_weight(flat);
            }
        }
        acc
    }
}

pub(crate) fn unflatten(axes: &[Axis], mut flat: usize, out: &mut [usize]) {
    for k in (0..axes.len()).rev() {
        out[k] = flat % axes[k].nodes;
        flat /= axes[k].nodes;
    }
}

pub(crate) fn flat_index(axes: &[Axis], idx: &[usize]) -> usize {
    idx.iter().zip(axes).fold(0, |acc, (&i, a)| acc * a.nodes + i)
}

pub(crate) fn node_point(axes: &[Axis], flat: usize, out: &mut [f64]) {
    let mut rest = flat;
    for k in (0..axes.len()).rev() {
        out[k] = axes[k].node(rest % axes[k].nodes);
        rest /= axes[k].nodes;
    }
}

pub(crate) fn cell_weight(axes: &[Axis], flat: usize) -> f64 {
    let mut rest = flat;
    let mut w = 1.0;
    for k in (0..axes.len()).rev() {
        w *= axes[k].trapezoid_weight(rest % axes[k].nodes);
        rest /= axes[k].nodes;
    }
    w
}

/// Quadrature discretization of a grid density: one atom per node with weight
/// `value * trapezoidal cell weight`, renormalized.
pub fn grid_to_measure(g: &GridDensity) -> EmpiricalMeasure {
    let dim = g.dim();
    let mut coords = vec![0.0; g.len() * dim];
    for (flat, chunk) in coords.chunks_exact_mut(dim).enumerate() {
        node_point(g.axes(), flat, chunk);
    }
    let weights: Vec<f64> = (0..g.len()).map(|i| g.values[i] * g.cell_weight(i)).collect();
    EmpiricalMeasure::from_flat(dim, coords, Some(weights))
        .expect("grid densities have positive mass and valid nodes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Empirical,
    Grid,
}

/// Either concrete representation of an element of P(R^d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Measure {
    Empirical(EmpiricalMeasure),
    Grid(GridDensity),
}

impl Measure {
    pub fn kind(&self) -> MeasureKind {
        match self {
            Measure::Empirical(_) => MeasureKind::Empirical,
            Measure::Grid(_) => MeasureKind::Grid,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Empirical(m) => m.dim(),
            Measure::Grid(g) => g.dim(),
        }
    }

    /// The atomic view used by the metrics and coefficient integrals.
    pub fn to_empirical(&self) -> Cow<'_, EmpiricalMeasure> {
        match self {
            Measure::Empirical(m) => Cow::Borrowed(m),
            Measure::Grid(g) => Cow::Owned(grid_to_measure(g)),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Measure::Empirical(m) => m.mean(),
            Measure::Grid(g) => g.mean(),
        }
    }

    pub fn as_grid(&self) -> Option<&GridDensity> {
        match self {
            Measure::Grid(g) => Some(g),
            Measure::Empirical(_) => None,
        }
    }

    pub fn as_empirical(&self) -> Option<&EmpiricalMeasure> {
        match self {
            Measure::Empirical(m) => Some(m),
            Measure::Grid(_) => None,
        }
    }
}

impl From<EmpiricalMeasure> for Measure {
    fn from(m: EmpiricalMeasure) -> Self {
        Measure::Empirical(m)
    }
}

impl From<GridDensity> for Measure {
    fn from(g: GridDensity) -> Self {
        Measure::Grid(g)
    }
}

/// A family `(mu_t)` on a strictly increasing time grid starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFlow {
    times: Vec<f64>,
    measures: Vec<Measure>,
}

impl MeasureFlow {
    pub fn new(times: Vec<f64>, measures: Vec<Measure>) -> Result<Self> {
        if times.is_empty() || times.len() != measures.len() {
            return Err(Error::GridMismatch(format!(
                "{} time nodes for {} measures",
                times.len(),
                measures.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::GridMismatch(format!("flow starts at t = {}", times[0])));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::GridMismatch("flow times are not strictly increasing".into()));
        }
        let kind = measures[0].kind();
        let dim = measures[0].dim();
        for m in &measures[1..] {
            if m.kind() != kind {
                return Err(Error::GridMismatch("flow mixes measure kinds".into()));
            }
            if m.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: m.dim() });
            }
        }
        Ok(Self { times, measures })
    }

    /// The same measure at every node.
    pub fn constant(times: Vec<f64>, measure: Measure) -> Result<Self> {
        let measures = vec![measure; times.len()];
        Self::new(times, measures)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn measures(&self) -> &[Measure] {
        &self.measures
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("flows are nonempty")
    }

    pub fn kind(&self) -> MeasureKind {
        self.measures[0].kind()
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim()
    }

    pub fn terminal(&self) -> &Measure {
        self.measures.last().expect("flows are nonempty")
    }

    /// Index of the last node `<= t` (left-constant interpolation).
    pub fn index_at(&self, t: f64) -> usize {
        let slack = 1e-9 * self.horizon().max(1.0);
        self.times.iter().rposition(|&s| s <= t + slack).unwrap_or_default()
    }

    pub fn at(&self, t: f64) -> &Measure {
        &self.measures[self.index_at(t)]
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<Measure>) {
        (self.times, self.measures)
    }
}
