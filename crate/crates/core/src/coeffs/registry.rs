//! Named parametric coefficient forms.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

/// Reads named parameters out of a table, rejecting leftovers.
pub(crate) struct Params<'a> {
    owner: &'a str,
    table: BTreeMap<String, f64>,
}

impl<'a> Params<'a> {
    pub fn new(owner: &'a str, table: &BTreeMap<String, f64>) -> Self {
        Self { owner, table: table.clone() }
    }

    pub fn get(&mut self, key: &str, default: Option<f64>) -> Result<f64> {
        match (self.table.remove(key), default) {
            (Some(v), _) if v.is_finite() => Ok(v),
            (Some(v), _) => Err(Error::param(format!("{}: parameter {key} = {v} is not finite", self.owner))),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(Error::param(format!("{}: missing parameter `{key}`", self.owner))),
        }
    }

    pub fn index(&mut self, key: &str) -> Result<usize> {
        let v = self.get(key, Some(0.0))?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::param(format!("{}: `{key}` must be a coordinate index", self.owner)));
        }
        Ok(v as usize)
    }

    pub fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            None => Ok(()),
            Some(k) => Err(Error::param(format!("{}: unknown parameter `{k}`", self.owner))),
        }
    }
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Optional factor `1 + amp * sin(freq * t)` shared by all registry entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeModulation {
    pub amp: f64,
    pub freq: f64,
}

impl Default for TimeModulation {
    fn default() -> Self {
        Self { amp: 0.0, freq: 2.0 * PI }
    }
}

impl TimeModulation {
    fn factor(&self, t: f64) -> f64 {
        if self.amp == 0.0 {
            1.0
        } else {
            1.0 + self.amp * (self.freq * t).sin()
        }
    }

    fn sup(&self) -> f64 {
        1.0 + self.amp.abs()
    }

    fn read(p: &mut Params) -> Result<Self> {
        let d = Self::default();
        Ok(Self { amp: p.get("time_amp", Some(d.amp))?, freq: p.get("time_freq", Some(d.freq))? })
    }

    fn write(&self, out: &mut BTreeMap<String, f64>) {
        if self.amp != 0.0 {
            out.insert("time_amp".into(), self.amp);
            out.insert("time_freq".into(), self.freq);
        }
    }
}

/// The kernel families `k(t, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum KernelForm {
    /// `value`
    Constant { value: f64 },
    /// `kappa * (mix * y_c - x_c)`; unbounded, kept for moment-oracle scenarios.
    LinearMeanField { kappa: f64, mix: f64, coord: usize },
    /// `offset + amplitude * sin(x_c + y_c)`
    Trig { amplitude: f64, offset: f64, coord: usize },
    /// `offset + amplitude * exp(-|x - y|^2 / (2 length^2))`
    BoundedInteraction { amplitude: f64, offset: f64, length: f64 },
    /// `offset + amplitude * min(|x - y|^exponent, 1)`
    HolderBump { amplitude: f64, offset: f64, exponent: f64 },
}

pub const KERNEL_NAMES: [&str; 5] =
    ["constant", "linear_mean_field", "trig", "bounded_interaction", "holder_bump"];

impl KernelForm {
    pub fn name(&self) -> &'static str {
        match self {
            KernelForm::Constant { .. } => "constant",
            KernelForm::LinearMeanField { .. } => "linear_mean_field",
            KernelForm::Trig { .. } => "trig",
            KernelForm::BoundedInteraction { .. } => "bounded_interaction",
            KernelForm::HolderBump { .. } => "holder_bump",
        }
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelForm::Constant { value } => value,
            KernelForm::LinearMeanField { kappa, mix, coord } => kappa * (mix * y[coord] - x[coord]),
            KernelForm::Trig { amplitude, offset, coord } => offset + amplitude * (x[coord] + y[coord]).sin(),
            KernelForm::BoundedInteraction { amplitude, offset, length } => {
                let r = dist(x, y);
                offset + amplitude * (-0.5 * r * r / (length * length)).exp()
            }
            KernelForm::HolderBump { amplitude, offset, exponent } => {
                let r = dist(x, y);
                offset + amplitude * r.powf(exponent).min(1.0)
            }
        }
    }

    /// Largest exponent for which `y -> k(t, x, y)` is Hoelder.
    fn natural_alpha(&self) -> f64 {
        match *self {
            KernelForm::HolderBump { exponent, .. } => exponent,
            _ => 1.0,
        }
    }

    /// `sup_y |k| + [k(t, x, .)]_{C^alpha}` ignoring time modulation.
    fn bc_norm(&self, alpha: f64) -> f64 {
        match *self {
            KernelForm::Constant { value } => value.abs(),
            KernelForm::LinearMeanField { kappa, .. } => {
                if kappa == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            KernelForm::Trig { amplitude, offset, .. } => {
                // |sin a - sin b| <= min(|a - b|, 2) <= 2^(1 - alpha) |a - b|^alpha
                offset.abs() + amplitude.abs() * (1.0 + 2f64.powf(1.0 - alpha))
            }
            KernelForm::BoundedInteraction { amplitude, offset, length } => {
                // Lipschitz constant e^{-1/2}/length, oscillation 1.
                let lip = (-0.5f64).exp() / length;
                offset.abs() + amplitude.abs() * (1.0 + lip.powf(alpha))
            }
            KernelForm::HolderBump { amplitude, offset, exponent } => {
                if alpha > exponent {
                    f64::INFINITY
                } else {
                    offset.abs() + 2.0 * amplitude.abs()
                }
            }
        }
    }

    fn sup(&self) -> f64 {
        match *self {
            KernelForm::Constant { value } => value.abs(),
            KernelForm::LinearMeanField { kappa, .. } => {
                if kappa == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            KernelForm::Trig { amplitude, offset, .. }
            | KernelForm::BoundedInteraction { amplitude, offset, .. }
            | KernelForm::HolderBump { amplitude, offset, .. } => offset.abs() + amplitude.abs(),
        }
    }

    fn coord(&self) -> Option<usize> {
        match *self {
            KernelForm::LinearMeanField { coord, .. } | KernelForm::Trig { coord, .. } => Some(coord),
            _ => None,
        }
    }

    fn depends_on_y(&self) -> bool {
        match *self {
            KernelForm::Constant { .. } => false,
            KernelForm::LinearMeanField { kappa, mix, .. } => kappa != 0.0 && mix != 0.0,
            KernelForm::Trig { amplitude, .. }
            | KernelForm::BoundedInteraction { amplitude, .. }
            | KernelForm::HolderBump { amplitude, .. } => amplitude != 0.0,
        }
    }

    fn depends_on_x(&self) -> bool {
        match *self {
            KernelForm::Constant { .. } => false,
            KernelForm::LinearMeanField { kappa, .. } => kappa != 0.0,
            KernelForm::Trig { amplitude, .. }
            | KernelForm::BoundedInteraction { amplitude, .. }
            | KernelForm::HolderBump { amplitude, .. } => amplitude != 0.0,
        }
    }
}

/// A registry kernel with its declared regularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFn {
    pub form: KernelForm,
    #[serde(default)]
    pub time: TimeModulation,
    pub declared_alpha: f64,
    pub declared_bound: f64,
}

impl KernelFn {
    /// Wraps a form with the analytic defaults: its natural Hoelder exponent
    /// and the matching `bC^alpha` norm.
    pub fn new(form: KernelForm) -> Self {
        let declared_alpha = form.natural_alpha();
        let mut k = Self { form, time: TimeModulation::default(), declared_alpha, declared_bound: 0.0 };
        k.declared_bound = k.default_bound();
        k
    }

    /// The analytic norm, floored so that identically zero entries still
    /// carry a positive bound.
    fn default_bound(&self) -> f64 {
        self.bc_norm(self.declared_alpha).max(f64::EPSILON)
    }

    pub fn constant(value: f64) -> Self {
        Self::new(KernelForm::Constant { value })
    }

    pub fn linear_mean_field(kappa: f64, mix: f64, coord: usize) -> Self {
        Self::new(KernelForm::LinearMeanField { kappa, mix, coord })
    }

    pub fn trig(amplitude: f64, offset: f64, coord: usize) -> Self {
        Self::new(KernelForm::Trig { amplitude, offset, coord })
    }

    pub fn bounded_interaction(amplitude: f64, offset: f64, length: f64) -> Self {
        Self::new(KernelForm::BoundedInteraction { amplitude, offset, length })
    }

    pub fn holder_bump(amplitude: f64, offset: f64, exponent: f64) -> Self {
        Self::new(KernelForm::HolderBump { amplitude, offset, exponent })
    }

    pub fn with_time_modulation(mut self, amp: f64, freq: f64) -> Self {
        self.time = TimeModulation { amp, freq };
        self.declared_bound = self.default_bound();
        self
    }

    pub fn with_declared(mut self, alpha: Option<f64>, bound: Option<f64>) -> Self {
        if let Some(a) = alpha {
            self.declared_alpha = a;
            self.declared_bound = self.default_bound();
        }
        if let Some(b) = bound {
            self.declared_bound = b;
        }
        self
    }

    /// Looks up `name` in the registry and reads its parameter table.
    pub fn from_registry(
        name: &str,
        params: &BTreeMap<String, f64>,
        declared_alpha: Option<f64>,
        declared_bound: Option<f64>,
    ) -> Result<Self> {
        let mut p = Params::new(name, params);
        let form = match name {
            "constant" => KernelForm::Constant { value: p.get("value", None)? },
            "linear_mean_field" => KernelForm::LinearMeanField {
                kappa: p.get("kappa", None)?,
                mix: p.get("mix", Some(1.0))?,
                coord: p.index("coord")?,
            },
            "trig" => KernelForm::Trig {
                amplitude: p.get("amplitude", Some(1.0))?,
                offset: p.get("offset", Some(0.0))?,
                coord: p.index("coord")?,
            },
            "bounded_interaction" => KernelForm::BoundedInteraction {
                amplitude: p.get("amplitude", Some(1.0))?,
                offset: p.get("offset", Some(0.0))?,
                length: p.get("length", Some(1.0))?,
            },
            "holder_bump" => KernelForm::HolderBump {
                amplitude: p.get("amplitude", Some(1.0))?,
                offset: p.get("offset", Some(0.0))?,
                exponent: p.get("exponent", declared_alpha)?,
            },
            other => return Err(Error::UnknownRegistryName(other.to_string())),
        };
        let time = TimeModulation::read(&mut p)?;
        p.finish()?;
        let k = Self::new(form).with_time_modulation(time.amp, time.freq);
        let k = k.with_declared(declared_alpha, declared_bound);
        k.check()?;
        Ok(k)
    }

    /// Parameter table in registry form (inverse of `from_registry`).
    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            out.insert(k.to_string(), v);
        };
        match self.form {
            KernelForm::Constant { value } => put("value", value),
            KernelForm::LinearMeanField { kappa, mix, coord } => {
                put("kappa", kappa);
                put("mix", mix);
                put("coord", coord as f64);
            }
            KernelForm::Trig { amplitude, offset, coord } => {
                put("amplitude", amplitude);
                put("offset", offset);
                put("coord", coord as f64);
            }
            KernelForm::BoundedInteraction { amplitude, offset, length } => {
                put("amplitude", amplitude);
                put("offset", offset);
                put("length", length);
            }
            KernelForm::HolderBump { amplitude, offset, exponent } => {
                put("amplitude", amplitude);
                put("offset", offset);
                put("exponent", exponent);
            }
        }
        self.time.write(&mut out);
        out
    }

    pub fn name(&self) -> &'static str {
        self.form.name()
    }

    pub(crate) fn check(&self) -> Result<()> {
        if !(self.declared_alpha > 0.0 && self.declared_alpha <= 1.0) {
            return Err(Error::InvalidAlpha(self.declared_alpha));
        }
        if !(self.declared_bound > 0.0) {
            return Err(Error::param(format!(
                "{}: declared_bound must be positive, got {}",
                self.name(),
                self.declared_bound
            )));
        }
        match self.form {
            KernelForm::BoundedInteraction { length, .. } if !(length > 0.0) => {
                Err(Error::param("bounded_interaction: length must be positive"))
            }
            KernelForm::HolderBump { exponent, .. } if !(exponent > 0.0 && exponent <= 1.0) => {
                Err(Error::InvalidAlpha(exponent))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn coord(&self) -> Option<usize> {
        self.form.coord()
    }

    pub fn eval(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        self.time.factor(t) * self.form.eval(x, y)
    }

    /// `sup |k|` over all arguments (infinite for unbounded forms).
    pub fn sup(&self) -> f64 {
        self.form.sup() * self.time.sup()
    }

    /// Analytic bound on `sup_{t,x} ||k(t, x, .)||_{bC^alpha}`.
    pub fn bc_norm(&self, alpha: f64) -> f64 {
        self.form.bc_norm(alpha) * self.time.sup()
    }

    pub fn depends_on_measure(&self) -> bool {
        self.form.depends_on_y()
    }

    pub fn depends_on_x(&self) -> bool {
        self.form.depends_on_x()
    }

    /// `int k(t, x_i, y) mu(dy)` for every point in the flat buffer `xs`.
    pub fn integrate_many(&self, t: f64, xs: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let d = mu.dim();
        let tf = self.time.factor(t);
        match self.form {
            KernelForm::Constant { value } => out.fill(tf * value),
            KernelForm::LinearMeanField { kappa, mix, coord } => {
                let m = if mix == 0.0 { 0.0 } else { mu.mean()[coord] };
                for (o, x) in out.iter_mut().zip(xs.chunks_exact(d)) {
                    *o = tf * kappa * (mix * m - x[coord]);
                }
            }
            KernelForm::Trig { amplitude, offset, coord } => {
                // sin(x + y) = sin x cos y + cos x sin y
                let (mut c, mut s) = (0.0, 0.0);
                for (y, &w) in mu.points().zip(mu.weights()) {
                    let (sy, cy) = y[coord].sin_cos();
                    c += w * cy;
                    s += w * sy;
                }
                for (o, x) in out.iter_mut().zip(xs.chunks_exact(d)) {
                    let (sx, cx) = x[coord].sin_cos();
                    *o = tf * (offset + amplitude * (sx * c + cx * s));
                }
            }
            _ => {
                for (o, x) in out.iter_mut().zip(xs.chunks_exact(d)) {
                    let mut acc = 0.0;
                    for (y, &w) in mu.points().zip(mu.weights()) {
                        if w != 0.0 {
                            acc += w * self.form.eval(x, y);
                        }
                    }
                    *o = tf * acc;
                }
            }
        }
    }
}

/// Measure functionals `F(t, x, mu)` that are not integrals of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FunctionalForm {
    /// `offset + amplitude * sin(x_c + int min(|y - center|^exponent, 1) mu(dy))`
    SineOfMoment { amplitude: f64, offset: f64, center: f64, exponent: f64, coord: usize },
    /// `offset + amplitude * tanh(int clamp(y_c, -radius, radius) mu(dy) - x_c)`
    TanhOfMean { amplitude: f64, offset: f64, radius: f64, coord: usize },
}

pub const FUNCTIONAL_NAMES: [&str; 2] = ["sine_of_moment", "tanh_of_mean"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalFn {
    pub form: FunctionalForm,
    #[serde(default)]
    pub time: TimeModulation,
    pub declared_bound: f64,
}

impl FunctionalFn {
    pub fn new(form: FunctionalForm) -> Self {
        let bound = match form {
            FunctionalForm::SineOfMoment { amplitude, offset, .. }
            | FunctionalForm::TanhOfMean { amplitude, offset, .. } => offset.abs() + amplitude.abs(),
        };
        Self { form, time: TimeModulation::default(), declared_bound: bound }
    }

    pub fn sine_of_moment(amplitude: f64, offset: f64, center: f64, exponent: f64, coord: usize) -> Self {
        Self::new(FunctionalForm::SineOfMoment { amplitude, offset, center, exponent, coord })
    }

    pub fn tanh_of_mean(amplitude: f64, offset: f64, radius: f64, coord: usize) -> Self {
        Self::new(FunctionalForm::TanhOfMean { amplitude, offset, radius, coord })
    }

    pub fn from_registry(
        name: &str,
        params: &BTreeMap<String, f64>,
        declared_bound: Option<f64>,
    ) -> Result<Self> {
        let mut p = Params::new(name, params);
        let form = match name {
            "sine_of_moment" => FunctionalForm::SineOfMoment {
                amplitude: p.get("amplitude", Some(1.0))?,
                offset: p.get("offset", Some(0.0))?,
                center: p.get("center", Some(0.0))?,
                exponent: p.get("exponent", Some(1.0))?,
                coord: p.index("coord")?,
            },
            "tanh_of_mean" => FunctionalForm::TanhOfMean {
                amplitude: p.get("amplitude", Some(1.0))?,
                offset: p.get("offset", Some(0.0))?,
                radius: p.get("radius", Some(1.0))?,
                coord: p.index("coord")?,
            },
            other => return Err(Error::UnknownRegistryName(other.to_string())),
        };
        let time = TimeModulation::read(&mut p)?;
        p.finish()?;
        let mut f = Self::new(form);
        f.time = time;
        f.declared_bound = declared_bound.unwrap_or(f.declared_bound * time.sup());
        f.check()?;
        Ok(f)
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        match self.form {
            FunctionalForm::SineOfMoment { amplitude, offset, center, exponent, coord } => {
                out.insert("amplitude".into(), amplitude);
                out.insert("offset".into(), offset);
                out.insert("center".into(), center);
                out.insert("exponent".into(), exponent);
                out.insert("coord".into(), coord as f64);
            }
            FunctionalForm::TanhOfMean { amplitude, offset, radius, coord } => {
                out.insert("amplitude".into(), amplitude);
                out.insert("offset".into(), offset);
                out.insert("radius".into(), radius);
                out.insert("coord".into(), coord as f64);
            }
        }
        self.time.write(&mut out);
        out
    }

    pub fn name(&self) -> &'static str {
        match self.form {
            FunctionalForm::SineOfMoment { .. } => "sine_of_moment",
            FunctionalForm::TanhOfMean { .. } => "tanh_of_mean",
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if !(self.declared_bound > 0.0) {
            return Err(Error::param(format!("{}: declared_bound must be positive", self.name())));
        }
        match self.form {
            FunctionalForm::SineOfMoment { exponent, .. } if !(exponent > 0.0 && exponent <= 1.0) => {
                Err(Error::InvalidAlpha(exponent))
            }
            FunctionalForm::TanhOfMean { radius, .. } if !(radius > 0.0) => {
                Err(Error::param("tanh_of_mean: radius must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn coord(&self) -> usize {
        match self.form {
            FunctionalForm::SineOfMoment { coord, .. } | FunctionalForm::TanhOfMean { coord, .. } => coord,
        }
    }

    fn moment(&self, mu: &EmpiricalMeasure) -> f64 {
        let phi = |y: &[f64]| match self.form {
            FunctionalForm::SineOfMoment { center, exponent, coord, .. } => {
                (y[coord] - center).abs().powf(exponent).min(1.0)
            }
            FunctionalForm::TanhOfMean { radius, coord, .. } => y[coord].clamp(-radius, radius),
        };
        mu.points().zip(mu.weights()).map(|(y, &w)| w * phi(y)).sum()
    }

    fn apply(&self, t: f64, x: &[f64], m: f64) -> f64 {
        let v = match self.form {
            FunctionalForm::SineOfMoment { amplitude, offset, coord, .. } => {
                offset + amplitude * (x[coord] + m).sin()
            }
            FunctionalForm::TanhOfMean { amplitude, offset, coord, .. } => {
                offset + amplitude * (m - x[coord]).tanh()
            }
        };
        self.time.factor(t) * v
    }

    pub fn eval(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure) -> f64 {
        self.apply(t, x, self.moment(mu))
    }

    pub fn integrate_many(&self, t: f64, xs: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let m = self.moment(mu);
        for (o, x) in out.iter_mut().zip(xs.chunks_exact(mu.dim())) {
            *o = self.apply(t, x, m);
        }
    }

    pub fn sup(&self) -> f64 {
        match self.form {
            FunctionalForm::SineOfMoment { amplitude, offset, .. }
            | FunctionalForm::TanhOfMean { amplitude, offset, .. } => {
                (offset.abs() + amplitude.abs()) * self.time.sup()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn registry_round_trips_parameters() {
        for k in [
            KernelFn::constant(0.7),
            KernelFn::linear_mean_field(-1.0, 0.0, 0),
            KernelFn::trig(0.5, 1.0, 0),
            KernelFn::bounded_interaction(0.1, 0.2, 0.8),
            KernelFn::holder_bump(0.5, 1.0, 0.5).with_time_modulation(0.2, 3.0),
        ] {
            let back = KernelFn::from_registry(k.name(), &k.params(), Some(k.declared_alpha), None).unwrap();
            assert_eq!(back, k);
        }
    }

    #[test]
    fn registry_rejects_unknown_names_and_keys() {
        assert!(matches!(
            KernelFn::from_registry("cosine", &table(&[]), None, None),
            Err(Error::UnknownRegistryName(_))
        ));
        assert!(matches!(
            KernelFn::from_registry("constant", &table(&[("value", 1.0), ("valeu", 2.0)]), None, None),
            Err(Error::InvalidParameter(_))
        ));
        assert!(KernelFn::from_registry("constant", &table(&[]), None, None).is_err());
        assert!(KernelFn::from_registry("constant", &table(&[("value", 0.0)]), None, None).is_ok());
        assert!(KernelFn::from_registry("holder_bump", &table(&[("exponent", 1.5)]), None, None).is_err());
    }

    #[test]
    fn batched_integrals_match_pointwise_sums() {
        let mu = EmpiricalMeasure::new(&[vec![-0.4], vec![0.3], vec![1.9]], Some(&[0.2, 0.5, 0.3])).unwrap();
        let xs = [-1.0, 0.0, 0.25, 2.0];
        for k in [
            KernelFn::linear_mean_field(0.8, 1.0, 0),
            KernelFn::trig(0.5, 1.0, 0),
            KernelFn::bounded_interaction(0.1, 0.2, 0.8),
            KernelFn::holder_bump(0.5, 1.0, 0.5),
        ] {
            let mut out = [0.0; 4];
            k.integrate_many(0.3, &xs, &mu, &mut out);
            for (i, x) in xs.iter().enumerate() {
                let direct: f64 = mu.points().zip(mu.weights()).map(|(y, w)| w * k.eval(0.3, &[*x], y)).sum();
                assert!((out[i] - direct).abs() < 1e-14, "{}", k.name());
            }
        }
    }

    #[test]
    fn functionals_are_bounded() {
        let f = FunctionalFn::sine_of_moment(0.4, 0.1, 0.0, 0.5, 0);
        let mu = EmpiricalMeasure::new(&[vec![3.0], vec![-0.2]], None).unwrap();
        for x in [-5.0, 0.0, 2.0] {
            assert!(f.eval(0.0, &[x], &mu).abs() <= f.sup());
        }
        let g = FunctionalFn::from_registry("tanh_of_mean", &table(&[("radius", 2.0)]), None).unwrap();
        assert_eq!(g.params()["radius"], 2.0);
    }
}
