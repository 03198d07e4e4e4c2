//! Coefficient kernels `b`, `sigma`, the induced fields `B`, `Sigma`,
//! `C = Sigma Sigma^T`, and sampled checks of boundedness, Hoelder regularity
//! and ellipticity.

mod registry;
pub(crate) mod validate;

pub use registry::{
    FunctionalFn, FunctionalForm, KernelFn, KernelForm, TimeModulation, FUNCTIONAL_NAMES, KERNEL_NAMES,
};
pub use validate::{validate_spec, ValidationReport, MIN_SAMPLE_BUDGET};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    /// `B(t, x, mu) = int b(t, x, y) mu(dy)`, likewise for `Sigma`.
    KernelForm,
    /// Entries may also be nonlinear functionals of `mu`.
    GeneralForm,
}

/// One scalar entry of `B` or `Sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Kernel(KernelFn),
    Functional(FunctionalFn),
}

impl Coefficient {
    pub fn eval(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure) -> f64 {
        match self {
            Coefficient::Kernel(k) => {
                let mut out = [0.0];
                k.integrate_many(t, x, mu, &mut out);
                out[0]
            }
            Coefficient::Functional(f) => f.eval(t, x, mu),
        }
    }

    pub fn eval_many(&self, t: f64, xs: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        match self {
            Coefficient::Kernel(k) => k.integrate_many(t, xs, mu, out),
            Coefficient::Functional(f) => f.integrate_many(t, xs, mu, out),
        }
    }

    pub fn declared_bound(&self) -> f64 {
        match self {
            Coefficient::Kernel(k) => k.declared_bound,
            Coefficient::Functional(f) => f.declared_bound,
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            Coefficient::Kernel(k) => k.sup(),
            Coefficient::Functional(f) => f.sup(),
        }
    }

    pub fn depends_on_measure(&self) -> bool {
        match self {
            Coefficient::Kernel(k) => k.depends_on_measure(),
            Coefficient::Functional(_) => true,
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            Coefficient::Kernel(k) => k.depends_on_x(),
            Coefficient::Functional(_) => true,
        }
    }

    fn check(&self, dim: usize, alpha: f64, mode: CoefficientMode) -> Result<()> {
        match self {
            Coefficient::Kernel(k) => {
                k.check()?;
                if k.declared_alpha < alpha {
                    return Err(Error::param(format!(
                        "{}: declared exponent {} is below the spec exponent {alpha}",
                        k.name(),
                        k.declared_alpha
                    )));
                }
                if k.coord().is_some_and(|c| c >= dim) {
                    return Err(Error::DimensionMismatch { expected: dim, found: k.coord().unwrap() + 1 });
                }
            }
            Coefficient::Functional(f) => {
                if mode == CoefficientMode::KernelForm {
                    return Err(Error::param(format!(
                        "functional entry `{}` requires general_form mode",
                        f.name()
                    )));
                }
                f.check()?;
                if f.coord() >= dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: f.coord() + 1 });
                }
            }
        }
        Ok(())
    }
}

impl From<KernelFn> for Coefficient {
    fn from(k: KernelFn) -> Self {
        Coefficient::Kernel(k)
    }
}

impl From<FunctionalFn> for Coefficient {
    fn from(f: FunctionalFn) -> Self {
        Coefficient::Functional(f)
    }
}

/// Drift and diffusion entries of a McKean-Vlasov equation on R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    dim: usize,
    alpha: f64,
    lambda_claimed: f64,
    mode: CoefficientMode,
    drift: Vec<Coefficient>,
    /// Row-major `d x d`.
    diffusion: Vec<Coefficient>,
}

impl CoefficientSpec {
    pub fn new(
        dim: usize,
        alpha: f64,
        lambda_claimed: f64,
        mode: CoefficientMode,
        drift: Vec<Coefficient>,
        diffusion: Vec<Coefficient>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        if !(lambda_claimed > 0.0 && lambda_claimed.is_finite()) {
            return Err(Error::param(format!("lambda must be positive, got {lambda_claimed}")));
        }
        if drift.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: drift.len() });
        }
        if diffusion.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: diffusion.len() });
        }
        for c in drift.iter().chain(&diffusion) {
            c.check(dim, alpha, mode)?;
        }
        Ok(Self { dim, alpha, lambda_claimed, mode, drift, diffusion })
    }

    /// Kernel-form spec from plain kernels.
    pub fn kernel_form(
        dim: usize,
        alpha: f64,
        lambda_claimed: f64,
        drift: Vec<KernelFn>,
        diffusion: Vec<KernelFn>,
    ) -> Result<Self> {
        Self::new(
            dim,
            alpha,
            lambda_claimed,
            CoefficientMode::KernelForm,
            drift.into_iter().map(Into::into).collect(),
            diffusion.into_iter().map(Into::into).collect(),
        )
    }

    /// One-dimensional spec with drift kernel `b` and diffusion kernel `sigma`.
    pub fn scalar(alpha: f64, lambda_claimed: f64, b: KernelFn, sigma: KernelFn) -> Result<Self> {
        Self::kernel_form(1, alpha, lambda_claimed, vec![b], vec![sigma])
    }

    /// `dX = beta dt + sqrt(c) dW` in one dimension.
    pub fn constant_1d(beta: f64, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::DegenerateDiffusion(format!("diffusion coefficient {c}")));
        }
        Self::scalar(1.0, c, KernelFn::constant(beta), KernelFn::constant(c.sqrt()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda_claimed(&self) -> f64 {
        self.lambda_claimed
    }

    pub fn mode(&self) -> CoefficientMode {
        self.mode
    }

    pub fn drift(&self) -> &[Coefficient] {
        &self.drift
    }

    pub fn diffusion(&self) -> &[Coefficient] {
        &self.diffusion
    }

    /// True when no entry reads the measure argument.
    pub fn is_measure_independent(&self) -> bool {
        !self.drift.iter().chain(&self.diffusion).any(Coefficient::depends_on_measure)
    }

    /// True when every entry is constant in `x` (then the Euler kernel is exact).
    pub fn is_constant_in_x(&self) -> bool {
        !self.drift.iter().chain(&self.diffusion).any(Coefficient::depends_on_x)
    }

    fn check_dims(&self, x: &[f64], mu: &EmpiricalMeasure) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        if mu.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: mu.dim() });
        }
        Ok(())
    }

    pub fn eval_drift(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure) -> Result<Vec<f64>> {
        self.check_dims(x, mu)?;
        Ok(self.drift.iter().map(|c| c.eval(t, x, mu)).collect())
    }

    pub fn eval_diffusion(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure) -> Result<DMatrix<f64>> {
        self.check_dims(x, mu)?;
        let d = self.dim;
        Ok(DMatrix::from_row_iterator(d, d, self.diffusion.iter().map(|c| c.eval(t, x, mu))))
    }

    pub fn eval_cmatrix(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure) -> Result<DMatrix<f64>> {
        let s = self.eval_diffusion(t, x, mu)?;
        Ok(cmatrix(&s))
    }

    /// Drift and diffusion matrix at every point of the flat buffer `xs`.
    pub fn generator_coefficients(
        &self,
        t: f64,
        xs: &[f64],
        mu: &EmpiricalMeasure,
    ) -> Result<GeneratorCoefficients> {
        let d = self.dim;
        if !xs.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch { expected: d, found: xs.len() % d });
        }
        if mu.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: mu.dim() });
        }
        let n = xs.len() / d;
        let mut scratch = vec![0.0; n];
        let mut drift = vec![0.0; n * d];
        for (i, c) in self.drift.iter().enumerate() {
            c.eval_many(t, xs, mu, &mut scratch);
            for (p, v) in scratch.iter().enumerate() {
                drift[p * d + i] = *v;
            }
        }
        let mut sigma = vec![0.0; n * d * d];
        for (e, c) in self.diffusion.iter().enumerate() {
            c.eval_many(t, xs, mu, &mut scratch);
            for (p, v) in scratch.iter().enumerate() {
                sigma[p * d * d + e] = *v;
            }
        }
        let mut cm = vec![0.0; n * d * d];
        for p in 0..n {
            let s = &sigma[p * d * d..(p + 1) * d * d];
            let out = &mut cm[p * d * d..(p + 1) * d * d];
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
                }
            }
        }
        Ok(GeneratorCoefficients { dim: d, drift, sigma, cmatrix: cm })
    }
}

pub(crate) fn cmatrix(s: &DMatrix<f64>) -> DMatrix<f64> {
    let c = s * s.transpose();
    // Exact symmetry regardless of summation order.
    (&c + c.transpose()) * 0.5
}

/// `B^mu(t, x_p)` and `C^mu(t, x_p)` at a list of points `x_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorCoefficients {
    pub dim: usize,
    /// `n x d`, row-major.
    pub drift: Vec<f64>,
    /// `n x d x d`, row-major per point.
    pub sigma: Vec<f64>,
    /// `n x d x d`, row-major per point.
    pub cmatrix: Vec<f64>,
}

impl GeneratorCoefficients {
    pub fn len(&self) -> usize {
        self.drift.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.drift.is_empty()
    }

    pub fn drift_at(&self, p: usize) -> &[f64] {
        &self.drift[p * self.dim..(p + 1) * self.dim]
    }

    pub fn sigma_at(&self, p: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.sigma[p * dd..(p + 1) * dd]
    }

    pub fn cmatrix_at(&self, p: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.cmatrix[p * dd..(p + 1) * dd]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac(x: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::dirac(x).unwrap()
    }

    #[test]
    fn drift_examples() {
        let trig = CoefficientSpec::scalar(1.0, 1.0, KernelFn::trig(1.0, 0.0, 0), KernelFn::constant(1.0)).unwrap();
        let v = trig.eval_drift(0.0, &[0.4], &dirac(&[1.1])).unwrap();
        assert!((v[0] - 1.5f64.sin()).abs() < 1e-15);

        let flat = CoefficientSpec::scalar(1.0, 1.0, KernelFn::constant(0.7), KernelFn::constant(1.0)).unwrap();
        let mu = EmpiricalMeasure::new(&[vec![-3.0], vec![8.0]], None).unwrap();
        assert_eq!(flat.eval_drift(0.5, &[2.0], &mu).unwrap(), vec![0.7]);

        let ou = CoefficientSpec::scalar(1.0, 1.0, KernelFn::linear_mean_field(1.0, 1.0, 0), KernelFn::constant(1.0))
            .unwrap();
        let mu = EmpiricalMeasure::new(&[vec![0.0], vec![2.0]], None).unwrap();
        assert_eq!(ou.eval_drift(0.0, &[1.0], &mu).unwrap(), vec![0.0]);
    }

    #[test]
    fn diffusion_examples() {
        let id = CoefficientSpec::scalar(1.0, 1.0, KernelFn::constant(0.0), KernelFn::constant(1.0)).unwrap();
        assert_eq!(id.eval_diffusion(0.0, &[0.3], &dirac(&[5.0])).unwrap()[(0, 0)], 1.0);

        let sigma = KernelFn::holder_bump(0.5, 1.0, 1.0);
        let zero = KernelFn::constant(0.0);
        let spec = CoefficientSpec::kernel_form(
            2,
            1.0,
            1.0,
            vec![zero.clone(), zero.clone()],
            vec![sigma.clone(), zero.clone(), zero, sigma],
        )
        .unwrap();
        let x = [0.2, -0.1];
        let at_x = spec.eval_diffusion(0.0, &x, &dirac(&x)).unwrap();
        assert_eq!(at_x, DMatrix::identity(2, 2));
        let far = spec.eval_diffusion(0.0, &x, &dirac(&[2.2, -0.1])).unwrap();
        assert!((far - DMatrix::identity(2, 2) * 1.5).abs().max() < 1e-15);
    }

    #[test]
    fn cmatrix_examples() {
        let k = KernelFn::constant;
        let make = |s: [f64; 4]| {
            CoefficientSpec::kernel_form(2, 1.0, 0.1, vec![k(0.0), k(0.0)], s.iter().map(|&v| k(v)).collect())
                .unwrap()
        };
        let mu = dirac(&[0.0, 0.0]);
        let c = make([1.0, 0.0, 0.0, 2.0]).eval_cmatrix(0.0, &[0.0, 0.0], &mu).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]));
        let c = make([1.0, 1.0, 0.0, 1.0]).eval_cmatrix(0.0, &[0.0, 0.0], &mu).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn batched_coefficients_match_pointwise() {
        let spec = CoefficientSpec::kernel_form(
            2,
            0.5,
            0.1,
            vec![KernelFn::trig(0.3, 0.0, 1), KernelFn::bounded_interaction(0.2, 0.1, 0.7)],
            vec![
                KernelFn::holder_bump(0.3, 1.0, 0.5),
                KernelFn::constant(0.1),
                KernelFn::constant(0.0),
                KernelFn::bounded_interaction(0.2, 0.8, 1.0),
            ],
        )
        .unwrap();
        let mu = EmpiricalMeasure::new(&[vec![0.0, 1.0], vec![-0.5, 0.2], vec![1.0, 1.0]], None).unwrap();
        let xs = [0.1, 0.2, -1.0, 0.5];
        let g = spec.generator_coefficients(0.25, &xs, &mu).unwrap();
        for p in 0..2 {
            let x = &xs[2 * p..2 * p + 2];
            let b = spec.eval_drift(0.25, x, &mu).unwrap();
            let c = spec.eval_cmatrix(0.25, x, &mu).unwrap();
            for i in 0..2 {
                assert!((g.drift_at(p)[i] - b[i]).abs() < 1e-14);
                for j in 0..2 {
                    assert!((g.cmatrix_at(p)[i * 2 + j] - c[(i, j)]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn spec_construction_checks() {
        let k = KernelFn::constant(1.0);
        assert!(matches!(
            CoefficientSpec::kernel_form(2, 1.0, 1.0, vec![k.clone()], vec![k.clone(); 4]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            CoefficientSpec::scalar(1.5, 1.0, k.clone(), k.clone()),
            Err(Error::InvalidAlpha(_))
        ));
        // A 1/2-Hoelder bump is not admissible for a Lipschitz spec.
        assert!(CoefficientSpec::scalar(1.0, 1.0, k.clone(), KernelFn::holder_bump(0.2, 1.0, 0.5)).is_err());
        let f = FunctionalFn::sine_of_moment(0.2, 0.0, 0.0, 1.0, 0);
        assert!(CoefficientSpec::new(1, 1.0, 1.0, CoefficientMode::KernelForm, vec![f.clone().into()], vec![k.clone().into()])
            .is_err());
        assert!(CoefficientSpec::new(1, 1.0, 1.0, CoefficientMode::GeneralForm, vec![f.into()], vec![k.into()]).is_ok());
    }
}
