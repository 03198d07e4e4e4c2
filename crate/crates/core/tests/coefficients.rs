use mkv_core::coeffs::{CoefficientSpec, KernelFn};
use mkv_core::measure::{metric_bl_alpha, EmpiricalMeasure};
use proptest::prelude::*;

/// Bounded registry kernels with their natural exponent.
fn kernel(dim: usize) -> impl Strategy<Value = KernelFn> {
    let form = prop_oneof![
        (-2.0..2.0f64).prop_map(KernelFn::constant),
        (-1.0..1.0f64, -1.0..1.0f64, 0..dim).prop_map(|(a, o, c)| KernelFn::trig(a, o, c)),
        (-1.0..1.0f64, -1.0..1.0f64, 0.2..3.0f64).prop_map(|(a, o, l)| KernelFn::bounded_interaction(a, o, l)),
        (-1.0..1.0f64, -1.0..1.0f64, 0.3..=1.0f64).prop_map(|(a, o, e)| KernelFn::holder_bump(a, o, e)),
    ];
    (form, prop::option::of((-0.5..0.5f64, 0.1..5.0f64)))
        .prop_map(|(k, time)| match time {
            Some((amp, freq)) => k.with_time_modulation(amp, freq),
            None => k,
        })
}

/// A spec whose alpha is the smallest declared exponent.
fn spec() -> impl Strategy<Value = CoefficientSpec> {
    (1usize..=2).prop_flat_map(|d| {
        (prop::collection::vec(kernel(d), d), prop::collection::vec(kernel(d), d * d)).prop_map(move |(b, s)| {
            let alpha = b.iter().chain(&s).map(|k| k.declared_alpha).fold(1.0, f64::min);
            CoefficientSpec::kernel_form(d, alpha, 1.0, b, s).unwrap()
        })
    })
}

fn measure(d: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec((prop::collection::vec(-4.0..4.0f64, d), 0.05..1.0f64), 1..=5).prop_map(|atoms| {
        let pts: Vec<Vec<f64>> = atoms.iter().map(|a| a.0.clone()).collect();
        let w: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        EmpiricalMeasure::new(&pts, Some(&w)).unwrap()
    })
}

fn case() -> impl Strategy<Value = (CoefficientSpec, f64, Vec<f64>, EmpiricalMeasure, EmpiricalMeasure)> {
    spec().prop_flat_map(|s| {
        let d = s.dim();
        (Just(s), 0.0..2.0f64, prop::collection::vec(-4.0..4.0f64, d), measure(d), measure(d))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn entries_respect_declared_bounds((spec, t, x, mu, _) in case()) {
        let d = spec.dim();
        let b = spec.eval_drift(t, &x, &mu).unwrap();
        for (v, c) in b.iter().zip(spec.drift()) {
            prop_assert!(v.abs() <= c.declared_bound() + 1e-12);
        }
        let s = spec.eval_diffusion(t, &x, &mu).unwrap();
        let frob: f64 = spec.diffusion().iter().map(|c| c.declared_bound().powi(2)).sum::<f64>().sqrt();
        let op = s.clone().singular_values().max();
        prop_assert!(op <= frob + 1e-12, "operator norm {} above {}", op, frob);
        prop_assert_eq!(s.nrows(), d);
    }

    #[test]
    fn drift_moves_at_most_norm_times_distance((spec, t, x, mu, nu) in case()) {
        let dist = metric_bl_alpha(&mu, &nu, spec.alpha()).unwrap();
        let bm = spec.eval_drift(t, &x, &mu).unwrap();
        let bn = spec.eval_drift(t, &x, &nu).unwrap();
        for ((a, b), c) in bm.iter().zip(&bn).zip(spec.drift()) {
            let mkv_core::coeffs::Coefficient::Kernel(k) = c else { unreachable!() };
            prop_assert!((a - b).abs() <= k.bc_norm(spec.alpha()) * dist + 1e-9);
        }
    }

    #[test]
    fn diffusion_matrix_is_symmetric_psd((spec, t, x, mu, _) in case()) {
        let c = spec.eval_cmatrix(t, &x, &mu).unwrap();
        prop_assert_eq!(c.clone(), c.transpose());
        let eig = c.clone().symmetric_eigen().eigenvalues;
        let scale = c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(eig.min() >= -1e-12 * scale);
    }
}
