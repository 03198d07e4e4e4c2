use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Coefficient, CoefficientSpec};
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

pub const MIN_SAMPLE_BUDGET: usize = 100;

const SAMPLE_SEED: u64 = 0x6d6b_765f_7661_6c69;
/// Half-width of the sampling box for points and atoms.
const SAMPLE_RADIUS: f64 = 4.0;
const SAMPLE_HORIZON: f64 = 1.0;
const MAX_SAMPLE_ATOMS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Smallest sampled eigenvalue of `C`.
    pub lambda_hat: f64,
    /// Largest sampled Hoelder quotient over kernel entries.
    pub holder_hat: f64,
    /// Largest sampled `holder quotient / declared bound` over kernel entries.
    pub holder_ratio: f64,
    pub pass: bool,
}

/// Smallest eigenvalue of a symmetric row-major `d x d` matrix.
pub(crate) fn min_eigenvalue(c: &[f64], d: usize) -> f64 {
    match d {
        1 => c[0],
        2 => {
            let (a, b, e) = (c[0], 0.5 * (c[1] + c[2]), c[3]);
            let mid = 0.5 * (a + e);
            mid - (0.25 * (a - e).powi(2) + b * b).sqrt()
        }
        _ => SymmetricEigen::new(DMatrix::from_row_slice(d, d, c)).eigenvalues.min(),
    }
}

/// Relative floor under which an eigenvalue counts as zero.
pub(crate) fn is_degenerate(lambda: f64, c: &[f64], d: usize) -> bool {
    let trace: f64 = (0..d).map(|i| c[i * d + i].abs()).sum();
    lambda <= 1e-13 * trace.max(1.0)
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-SAMPLE_RADIUS..SAMPLE_RADIUS)).collect()
}

fn random_measure(rng: &mut ChaCha8Rng, d: usize) -> EmpiricalMeasure {
    let n = rng.random_range(1..=MAX_SAMPLE_ATOMS);
    let pts: Vec<Vec<f64>> = (0..n).map(|_| random_point(rng, d)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    EmpiricalMeasure::new(&pts, Some(&w)).expect("valid sample measure")
}

/// Sampled check of ellipticity and of the declared Hoelder bounds.
///
/// `lambda_hat` is the minimum of `<C y, y>` over unit `y` (the smallest
/// eigenvalue) at random `(t, x, mu)`; `holder_hat` the largest quotient
/// `|k(t,x,y) - k(t,x,y')| / |y - y'|^alpha_k` over kernel entries at
/// log-uniformly spread separations.
pub fn validate_spec(spec: &CoefficientSpec, sample_budget: usize) -> Result<ValidationReport> {
    if sample_budget < MIN_SAMPLE_BUDGET {
        return Err(Error::param(format!(
            "sample budget {sample_budget} is below the minimum {MIN_SAMPLE_BUDGET}"
        )));
    }
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let mut lambda_hat = f64::INFINITY;
    for _ in 0..sample_budget {
        let t = rng.random_range(0.0..=SAMPLE_HORIZON);
        let x = random_point(&mut rng, d);
        let mu = random_measure(&mut rng, d);
        let c = spec.eval_cmatrix(t, &x, &mu)?;
        let c: Vec<f64> = c.transpose().iter().copied().collect();
        let lambda = min_eigenvalue(&c, d);
        if is_degenerate(lambda, &c, d) {
            return Err(Error::DegenerateDiffusion(format!(
                "smallest eigenvalue {lambda:e} of C at t = {t}, x = {x:?}"
            )));
        }
        lambda_hat = lambda_hat.min(lambda);
    }

    let mut holder_hat: f64 = 0.0;
    let mut holder_ratio: f64 = 0.0;
    for entry in spec.drift().iter().chain(spec.diffusion()) {
        let Coefficient::Kernel(k) = entry else { continue };
        for _ in 0..sample_budget {
            let t = rng.random_range(0.0..=SAMPLE_HORIZON);
            let x = random_point(&mut rng, d);
            let y = random_point(&mut rng, d);
            let h = 10f64.powf(rng.random_range(-3.0..0.5));
            let mut u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            u.iter_mut().for_each(|v| *v *= h / norm);
            let y2: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a + b).collect();
            let q = (k.eval(t, &x, &y) - k.eval(t, &x, &y2)).abs() / h.powf(k.declared_alpha);
            holder_hat = holder_hat.max(q);
            holder_ratio = holder_ratio.max(q / k.declared_bound);
        }
    }
    let pass = lambda_hat >= 0.5 * spec.lambda_claimed() && holder_ratio <= 2.0;
    Ok(ValidationReport { lambda_hat, holder_hat, holder_ratio, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::KernelFn;

    #[test]
    fn identity_diffusion_passes() {
        let spec = CoefficientSpec::scalar(1.0, 1.0, KernelFn::constant(0.0), KernelFn::constant(1.0)).unwrap();
        let r = validate_spec(&spec, 100).unwrap();
        assert_eq!(r.lambda_hat, 1.0);
        assert!(r.pass);
    }

    #[test]
    fn singular_diffusion_is_rejected() {
        let k = KernelFn::constant;
        let spec =
            CoefficientSpec::kernel_form(2, 1.0, 1.0, vec![k(0.0), k(0.0)], vec![k(1.0), k(0.0), k(0.0), k(0.0)])
                .unwrap();
        assert!(matches!(validate_spec(&spec, 100), Err(Error::DegenerateDiffusion(_))));
    }

    #[test]
    fn small_budgets_are_rejected() {
        let spec = CoefficientSpec::constant_1d(0.0, 1.0).unwrap();
        assert!(matches!(validate_spec(&spec, 99), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn overstated_lambda_fails_the_report() {
        let spec = CoefficientSpec::scalar(1.0, 3.0, KernelFn::constant(0.0), KernelFn::constant(1.0)).unwrap();
        assert!(!validate_spec(&spec, 100).unwrap().pass);
    }

    #[test]
    fn two_by_two_eigenvalue_formula() {
        let c = [2.0, 1.0, 1.0, 1.0];
        let exact = 1.5 - 1.25f64.sqrt();
        assert!((min_eigenvalue(&c, 2) - exact).abs() < 1e-15);
        let c3 = [2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.5];
        assert!((min_eigenvalue(&c3, 3) - 0.5).abs() < 1e-14);
    }
}
