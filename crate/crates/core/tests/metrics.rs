use mkv_core::measure::{
    metric_bl_alpha, metric_w_alpha, read_measure_str, write_measure_string, EmpiricalMeasure, GridDensity, Measure,
};
use mkv_core::grid::Axis;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn measure(max_atoms: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec((-3.0..3.0f64, 0.05..1.0f64), 1..=max_atoms).prop_map(|atoms| {
        let pts: Vec<Vec<f64>> = atoms.iter().map(|a| vec![a.0]).collect();
        let w: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        EmpiricalMeasure::new(&pts, Some(&w)).unwrap()
    })
}

fn measure_2d(max_atoms: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, 0.05..1.0f64), 1..=max_atoms).prop_map(|atoms| {
        let pts: Vec<Vec<f64>> = atoms.iter().map(|a| vec![a.0, a.1]).collect();
        let w: Vec<f64> = atoms.iter().map(|a| a.2).collect();
        EmpiricalMeasure::new(&pts, Some(&w)).unwrap()
    })
}

fn both(a: &EmpiricalMeasure, b: &EmpiricalMeasure, alpha: f64) -> [f64; 2] {
    [metric_bl_alpha(a, b, alpha).unwrap(), metric_w_alpha(a, b, alpha).unwrap()]
}

/// The same law with every atom split in two and the order reversed.
fn reshuffled(m: &EmpiricalMeasure) -> EmpiricalMeasure {
    let mut pts = Vec::new();
    let mut w = Vec::new();
    for i in (0..m.len()).rev() {
        let (p, wi) = (m.point(i), m.weight(i));
        pts.extend([p.to_vec(), p.to_vec()]);
        w.extend([0.3 * wi, 0.7 * wi]);
    }
    EmpiricalMeasure::new(&pts, Some(&w)).unwrap()
}

/// Dual value for Hoelder budget `b` on at most three support points: the
/// transport cost of the signed mass `m` for `min(b r^alpha, 2 (1 - b))`.
/// With three points one sign class has a single point, so the coupling is
/// forced.
fn three_point_value(xs: &[f64], m: &[f64], alpha: f64, b: f64) -> f64 {
    let rho = |i: usize, j: usize| (b * (xs[i] - xs[j]).abs().powf(alpha)).min(2.0 * (1.0 - b));
    let pos: Vec<usize> = (0..xs.len()).filter(|&i| m[i] > 0.0).collect();
    let neg: Vec<usize> = (0..xs.len()).filter(|&i| m[i] < 0.0).collect();
    let (hub, others) = if pos.len() == 1 { (pos[0], &neg) } else { (neg[0], &pos) };
    others.iter().map(|&j| m[j].abs() * rho(hub, j)).sum()
}

/// Dense scan over the budget split, then golden-section refinement (the
/// value is concave in `b`).
fn bl_dual_oracle(xs: &[f64], m: &[f64], alpha: f64) -> f64 {
    if m.iter().all(|v| v.abs() < 1e-15) {
        return 0.0;
    }
    let f = |b: f64| three_point_value(xs, m, alpha, b);
    let n: usize = 2000;
    let best = (0..=n).max_by(|&i, &j| f(i as f64 / n as f64).total_cmp(&f(j as f64 / n as f64))).unwrap();
    let (mut lo, mut hi) = (best.saturating_sub(1) as f64 / n as f64, ((best + 1).min(n)) as f64 / n as f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    f(0.5 * (lo + hi))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metric_axioms(a in measure(6), b in measure(6), c in measure(6), alpha in 0.1..=1.0f64) {
        let ab = both(&a, &b, alpha);
        let ba = both(&b, &a, alpha);
        let ac = both(&a, &c, alpha);
        let cb = both(&c, &b, alpha);
        for k in 0..2 {
            prop_assert!(ab[k] >= 0.0);
            prop_assert!((ab[k] - ba[k]).abs() <= TOL);
            prop_assert!(ab[k] <= ac[k] + cb[k] + TOL);
        }
        prop_assert!(ab[0] <= 2.0 + TOL);
    }

    #[test]
    fn metric_axioms_in_the_plane(a in measure_2d(5), b in measure_2d(5), c in measure_2d(5), alpha in 0.1..=1.0f64) {
        let ab = both(&a, &b, alpha);
        let ac = both(&a, &c, alpha);
        let cb = both(&c, &b, alpha);
        for k in 0..2 {
            prop_assert!(ab[k] <= ac[k] + cb[k] + TOL);
        }
    }

    #[test]
    fn zero_exactly_on_the_same_law(a in measure(6), alpha in 0.1..=1.0f64, shift in 0.01..1.0f64) {
        for v in both(&a, &reshuffled(&a), alpha) {
            prop_assert!(v.abs() <= TOL);
        }
        let mut pts: Vec<Vec<f64>> = a.points().map(|p| p.to_vec()).collect();
        pts[0][0] += shift;
        let moved = EmpiricalMeasure::new(&pts, Some(a.weights())).unwrap();
        if moved.merged() != a.merged() {
            for v in both(&a, &moved, alpha) {
                prop_assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn transport_distance_scales(x in -3.0..3.0f64, y in -3.0..3.0f64, s in 0.1..10.0f64, alpha in 0.1..=1.0f64) {
        let d = |p: f64, q: f64| {
            metric_w_alpha(&EmpiricalMeasure::dirac(&[p]).unwrap(), &EmpiricalMeasure::dirac(&[q]).unwrap(), alpha).unwrap()
        };
        let base = d(x, y);
        prop_assert!((d(s * x, s * y) - s.powf(alpha) * base).abs() <= 1e-9 * (1.0 + base));
    }

    #[test]
    fn lp_matches_the_dual_oracle(
        xs in prop::collection::vec(-3.0..3.0f64, 3),
        wa in prop::collection::vec(0.0..1.0f64, 3),
        wb in prop::collection::vec(0.0..1.0f64, 3),
        alpha in 0.1..=1.0f64,
    ) {
        prop_assume!(wa.iter().sum::<f64>() > 0.1 && wb.iter().sum::<f64>() > 0.1);
        prop_assume!((xs[0] - xs[1]).abs() > 1e-3 && (xs[0] - xs[2]).abs() > 1e-3 && (xs[1] - xs[2]).abs() > 1e-3);
        let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let a = EmpiricalMeasure::new(&pts, Some(&wa)).unwrap();
        let b = EmpiricalMeasure::new(&pts, Some(&wb)).unwrap();
        let m: Vec<f64> = a.weights().iter().zip(b.weights()).map(|(p, q)| p - q).collect();
        let oracle = bl_dual_oracle(&xs, &m, alpha);
        prop_assert!((metric_bl_alpha(&a, &b, alpha).unwrap() - oracle).abs() <= 1e-6);
    }

    #[test]
    fn written_measures_read_back_at_distance_zero(a in measure_2d(6)) {
        let back = read_measure_str(&write_measure_string(&a.clone().into())).unwrap();
        let back = back.to_empirical();
        prop_assert_eq!(back.as_ref(), &a);
        prop_assert_eq!(metric_bl_alpha(&a, &back, 0.5).unwrap(), 0.0);
    }
}

#[test]
fn grid_round_trip() {
    let g = GridDensity::gaussian(vec![Axis::new(-4.0, 4.0, 41).unwrap()], &[0.3], 0.7).unwrap();
    let m: Measure = g.into();
    assert_eq!(read_measure_str(&write_measure_string(&m)).unwrap(), m);
}
