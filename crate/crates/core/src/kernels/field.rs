//! Scalar fields on a 1-D axis and the registry of test functions.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Axis;

/// Node values of a function on an axis.
///
/// `averaged` holds hat-function averages `(1/w_j) * int f phi_j` when the
/// field came from a test function; integrals against grid densities use
/// those instead of point values. `reliable` is the index range outside the
/// boundary band.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOnGrid {
    axis: Axis,
    values: Vec<f64>,
    averaged: Option<Vec<f64>>,
    reliable: Range<usize>,
}

impl FieldOnGrid {
    pub fn new(axis: Axis, values: Vec<f64>) -> Result<Self> {
        if values.len() != axis.nodes {
            return Err(Error::GridMismatch(format!(
                "{} values for an axis of {} nodes",
                values.len(),
                axis.nodes
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("field value at node {i} is not finite")));
        }
        let reliable = 0..axis.nodes;
        Ok(Self { axis, values, averaged: None, reliable })
    }

    pub fn from_fn(axis: Axis, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(axis, axis.points().into_iter().map(f).collect())
    }

    /// Point values plus exact hat averages of a registry function.
    pub fn from_test_function(axis: Axis, f: &TestFunction) -> Result<Self> {
        let mut field = Self::new(axis, axis.points().into_iter().map(|x| f.eval(x)).collect())?;
        field.averaged = Some(hat_averages(&axis, |x| f.eval(x), &f.kinks()));
        Ok(field)
    }

    pub(crate) fn with_reliable(mut self, reliable: Range<usize>) -> Self {
        self.reliable = reliable;
        self
    }

    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn averaged(&self) -> Option<&[f64]> {
        self.averaged.as_deref()
    }

    /// Values used when the field is integrated against a grid density.
    pub fn quadrature_values(&self) -> &[f64] {
        self.averaged.as_deref().unwrap_or(&self.values)
    }

    /// Nodes outside the flagged boundary band.
    pub fn reliable(&self) -> Range<usize> {
        self.reliable.clone()
    }

    /// Largest `|value|` over the reliable nodes.
    pub fn sup_reliable(&self) -> f64 {
        self.values[self.reliable.clone()].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn interpolate(&self, x: f64) -> f64 {
        self.axis.interpolate(&self.values, x)
    }
}

/// Shrinks `r` by `band` nodes at each end (possibly to an empty range).
pub(crate) fn shrink(r: Range<usize>, band: usize) -> Range<usize> {
    let lo = r.start + band;
    let hi = r.end.saturating_sub(band).max(lo);
    lo..hi
}

/// Central finite differences: fourth order where the 5-point stencil
/// fits, second order next to the ends, one-sided at the ends.
pub(crate) fn derivative(values: &[f64], h: f64, order: usize) -> Vec<f64> {
    let n = values.len();
    let g = values;
    let mut out = vec![0.0; n];
    match order {
        1 => {
            for i in 2..n - 2 {
                out[i] = (g[i - 2] - 8.0 * g[i - 1] + 8.0 * g[i + 1] - g[i + 2]) / (12.0 * h);
            }
            for i in [1, n - 2] {
                out[i] = (g[i + 1] - g[i - 1]) / (2.0 * h);
            }
            out[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h);
            out[n - 1] = (3.0 * g[n - 1] - 4.0 * g[n - 2] + g[n - 3]) / (2.0 * h);
        }
        2 => {
            let h2 = h * h;
            for i in 2..n - 2 {
                out[i] =
                    (-g[i - 2] + 16.0 * g[i - 1] - 30.0 * g[i] + 16.0 * g[i + 1] - g[i + 2]) / (12.0 * h2);
            }
            for i in [1, n - 2] {
                out[i] = (g[i - 1] - 2.0 * g[i] + g[i + 1]) / h2;
            }
            out[0] = (2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]) / h2;
            out[n - 1] = (2.0 * g[n - 1] - 5.0 * g[n - 2] + 4.0 * g[n - 3] - g[n - 4]) / h2;
        }
        _ => unreachable!("derivative order checked by callers"),
    }
    out
}

const GL_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_WEIGHTS: [f64; 4] =
    [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
/// Dyadic refinement levels toward a kink.
const GRADING_LEVELS: usize = 40;

fn gauss_legendre(g: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        s += w * (g(mid - half * x) + g(mid + half * x));
    }
    s * half
}

/// `int_a^b g`, with panels graded geometrically toward any kink in `[a, b]`.
fn integrate(g: &impl Fn(f64) -> f64, a: f64, b: f64, kinks: &[f64]) -> f64 {
    let mut cuts = vec![a];
    cuts.extend(kinks.iter().copied().filter(|&k| k > a && k < b));
    cuts.push(b);
    let is_kink = |x: f64| kinks.contains(&x);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let (left, right) = (is_kink(p), is_kink(q));
        if !left && !right {
            total += gauss_legendre(g, p, q);
            continue;
        }
        let mid = 0.5 * (p + q);
        total += graded(g, p, mid, left);
        total += graded(g, q, mid, right);
    }
    total
}

/// Signed integral from `from` to `to`, graded toward `from` if `grade`.
fn graded(g: &impl Fn(f64) -> f64, from: f64, to: f64, grade: bool) -> f64 {
    let sign = if to >= from { 1.0 } else { -1.0 };
    let (lo, hi) = if sign > 0.0 { (from, to) } else { (to, from) };
    if !grade {
        return gauss_legendre(g, lo, hi);
    }
    let len = hi - lo;
    let mut s = 0.0;
    let mut inner = 0.0;
    for k in (1..=GRADING_LEVELS).rev() {
        let outer = len / (1u64 << (k - 1)) as f64;
        let (a, b) = if sign > 0.0 { (from + inner, from + outer) } else { (from - outer, from - inner) };
        s += gauss_legendre(g, a, b);
        inner = outer;
    }
    s
}

/// Hat-function averages of `f` on the axis, integrated exactly up to
/// quadrature error across the listed kinks.
pub(crate) fn hat_averages(axis: &Axis, f: impl Fn(f64) -> f64, kinks: &[f64]) -> Vec<f64> {
    let n = axis.nodes;
    let h = axis.spacing();
    let mut out = vec![0.0; n];
    for (j, slot) in out.iter_mut().enumerate() {
        let y = axis.node(j);
        let mut acc = 0.0;
        if j > 0 {
            let a = axis.node(j - 1);
            acc += integrate(&|u| f(u) * (u - a) / h, a, y, kinks);
        }
        if j + 1 < n {
            let b = axis.node(j + 1);
            acc += integrate(&|u| f(u) * (b - u) / h, y, b, kinks);
        }
        *slot = acc / axis.trapezoid_weight(j);
    }
    out
}

/// Registry of bounded (on the grid) test functions for the inversion check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Constant { value: f64 },
    Linear { slope: f64, intercept: f64 },
    Square { center: f64 },
    /// `min(|x - center|^exponent, radius^exponent)`.
    HolderCusp { exponent: f64, radius: f64, center: f64 },
    Sine { freq: f64, phase: f64 },
}

pub const TEST_FUNCTION_NAMES: &[&str] = &["constant", "linear", "square", "holder_cusp", "sine"];

impl TestFunction {
    pub fn from_registry(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match name {
            "constant" => &["value"],
            "linear" => &["slope", "intercept"],
            "square" => &["center"],
            "holder_cusp" => &["exponent", "radius", "center"],
            "sine" => &["freq", "phase"],
            _ => return Err(Error::UnknownRegistryName(name.to_string())),
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::param(format!("test function `{name}` has no parameter `{k}`")));
        }
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        let f = match name {
            "constant" => Self::Constant { value: get("value", 1.0) },
            "linear" => Self::Linear { slope: get("slope", 1.0), intercept: get("intercept", 0.0) },
            "square" => Self::Square { center: get("center", 0.0) },
            "holder_cusp" => Self::HolderCusp {
                exponent: get("exponent", 0.5),
                radius: get("radius", 1.0),
                center: get("center", 0.0),
            },
            _ => Self::Sine { freq: get("freq", 1.0), phase: get("phase", 0.0) },
        };
        f.check()?;
        Ok(f)
    }

    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { value } => value.is_finite(),
            Self::Linear { slope, intercept } => slope.is_finite() && intercept.is_finite(),
            Self::Square { center } => center.is_finite(),
            Self::HolderCusp { exponent, radius, center } => {
                exponent > 0.0 && exponent <= 1.0 && radius > 0.0 && radius.is_finite() && center.is_finite()
            }
            Self::Sine { freq, phase } => freq.is_finite() && phase.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid test function {self:?}")))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Linear { slope, intercept } => slope * x + intercept,
            Self::Square { center } => (x - center).powi(2),
            Self::HolderCusp { exponent, radius, center } => (x - center).abs().min(radius).powf(exponent),
            Self::Sine { freq, phase } => (freq * x + phase).sin(),
        }
    }

    /// Points where the function is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            Self::HolderCusp { radius, center, .. } => vec![center - radius, center, center + radius],
            _ => Vec::new(),
        }
    }

    /// Hoelder exponent of the function on bounded sets.
    pub fn holder_exponent(&self) -> f64 {
        match *self {
            Self::HolderCusp { exponent, .. } => exponent,
            _ => 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hat_averages_of_polynomials() {
        let axis = Axis::new(-2.0, 2.0, 41).unwrap();
        let h = axis.spacing();
        let lin = hat_averages(&axis, |x| 3.0 * x - 1.0, &[]);
        let sq = hat_averages(&axis, |x| x * x, &[]);
        for j in 1..40 {
            let y = axis.node(j);
            assert!((lin[j] - (3.0 * y - 1.0)).abs() < 1e-13);
            assert!((sq[j] - (y * y + h * h / 6.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn cusp_average_at_the_kink() {
        // Cell average of sqrt|x| against the hat at 0: 2 * int_0^h sqrt(u) (h-u)/h du / h.
        let axis = Axis::new(-1.0, 1.0, 21).unwrap();
        let f = TestFunction::HolderCusp { exponent: 0.5, radius: 1.0, center: 0.0 };
        let avg = hat_averages(&axis, |x| f.eval(x), &f.kinks());
        let h: f64 = 0.1;
        let exact = 2.0 * (2.0 / 3.0 * h.powf(1.5) - 2.0 / 5.0 * h.powf(1.5)) / h;
        assert!((avg[10] - exact).abs() < 1e-12, "{} vs {exact}", avg[10]);
    }

    #[test]
    fn fourth_order_differences_are_exact_on_quartics() {
        let axis = Axis::new(-1.0, 1.0, 21).unwrap();
        let h = axis.spacing();
        let g: Vec<f64> = axis.points().iter().map(|x| x.powi(4) - x).collect();
        let d1 = derivative(&g, h, 1);
        let d2 = derivative(&g, h, 2);
        for i in 2..19 {
            let x = axis.node(i);
            assert!((d1[i] - (4.0 * x.powi(3) - 1.0)).abs() < 1e-10);
            assert!((d2[i] - 12.0 * x * x).abs() < 1e-9);
        }
    }

    #[test]
    fn registry_rejects_unknown_names_and_keys() {
        let mut p = BTreeMap::new();
        assert!(matches!(TestFunction::from_registry("cosh", &p), Err(Error::UnknownRegistryName(_))));
        p.insert("width".to_string(), 1.0);
        assert!(TestFunction::from_registry("holder_cusp", &p).is_err());
        p.clear();
        p.insert("exponent".to_string(), 0.5);
        let f = TestFunction::from_registry("holder_cusp", &p).unwrap();
        assert_eq!(f.eval(4.0), 1.0);
        assert_eq!(f.eval(0.25), 0.5);
    }

    #[test]
    fn shrink_never_inverts() {
        assert_eq!(shrink(0..10, 3), 3..7);
        assert_eq!(shrink(0..10, 6), 6..6);
    }
}
