use proptest::prelude::*;
use rieszwolff::exact::exact_sum;
use rieszwolff::geometry::dist;
use rieszwolff::measure::{build_cantor_measure, rescale_measure, translate_measure};
use rieszwolff::riesz::{riesz_at, riesz_field_direct, riesz_field_fast, riesz_outside_ball, TruncationSpec};
use rieszwolff::{AmbientParams, AtomicMeasure, Ball, Error, Point};

fn arb_measure(d: usize) -> impl Strategy<Value = AtomicMeasure> {
    let s_range = (d - 1) as f64 + 0.05..d as f64 - 0.05;
    (s_range, prop::collection::vec((prop::array::uniform3(-1.0f64..1.0), 0.01f64..1.0), 1..60)).prop_map(
        move |(s, atoms)| {
            let pos = atoms.iter().map(|(p, _)| if d == 2 { [p[0], p[1], 0.0] } else { *p }).collect();
            let w = atoms.iter().map(|a| a.1).collect();
            AtomicMeasure::new(AmbientParams::new(d, s).unwrap(), pos, w).unwrap()
        },
    )
}

fn planar(p: [f64; 3], d: usize) -> Point {
    if d == 2 {
        [p[0], p[1], 0.0]
    } else {
        p
    }
}

// Plain pairwise field, summed in f64 in atom order.
fn naive_field(mu: &AtomicMeasure, x: &Point, inner: f64) -> Point {
    let mut out = [0.0; 3];
    for (a, &w) in mu.positions().iter().zip(mu.weights()) {
        let r = dist(a, x);
        if r <= inner {
            continue;
        }
        for k in 0..3 {
            out[k] += w * (a[k] - x[k]) / r.powf(1.0 + mu.s());
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indexed_ball_mass_equals_scan(mu in arb_measure(2), x in prop::array::uniform3(-1.2f64..1.2), r in 0.0f64..2.5) {
        let x = planar(x, 2);
        prop_assert_eq!(mu.ball_mass(&x, r).unwrap(), mu.ball_mass_scan(&x, r));
    }

    #[test]
    fn ball_at_atom_distance_is_open(mu in arb_measure(3), i in 0usize..60, x in prop::array::uniform3(-1.2f64..1.2)) {
        let i = i % mu.len();
        let r = dist(mu.position(i), &x);
        prop_assert!(mu.open_mass(&x, r) <= mu.closed_mass(&x, r) - mu.weight(i) * (1.0 - 1e-12));
    }

    #[test]
    fn rescaling_maps_balls_to_balls(mu in arb_measure(2), x in prop::array::uniform3(-1.0f64..1.0), r in 0.01f64..2.0, lambda in 0.1f64..10.0) {
        let x = planar(x, 2);
        let z = [0.25, -0.5, 0.0];
        let nu = rescale_measure(&mu, lambda, &z).unwrap();
        let y = [lambda * x[0] + z[0], lambda * x[1] + z[1], 0.0];
        let want = lambda.powf(mu.s()) * mu.open_mass(&x, r);
        let got = nu.open_mass(&y, lambda * r);
        // Rounding in the mapped positions can only move atoms sitting on the sphere.
        let near_sphere = mu.positions().iter().any(|a| (dist(a, &x) - r).abs() < 1e-9 * r);
        prop_assume!(!near_sphere);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1e-300));
    }

    #[test]
    fn direct_field_matches_pairwise_sum(mu in arb_measure(3), x in prop::array::uniform3(1.5f64..2.0)) {
        let got = riesz_at(&mu, &x, &TruncationSpec::none()).unwrap().value;
        let want = naive_field(&mu, &x, 0.0);
        let scale: f64 = mu.positions().iter().zip(mu.weights()).map(|(a, w)| w / dist(a, &x).powf(mu.s())).sum();
        for k in 0..3 {
            prop_assert!((got[k] - want[k]).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn field_scales_with_homogeneity(mu in arb_measure(2), lambda in 0.2f64..5.0) {
        // Positions scale by λ and weights by λ^s, so the kernel of degree -s
        // leaves the field unchanged at the mapped point.
        let x = [1.7, -1.9, 0.0];
        let nu = rescale_measure(&mu, lambda, &[0.0; 3]).unwrap();
        let a = riesz_at(&mu, &x, &TruncationSpec::none()).unwrap().value;
        let b = riesz_at(&nu, &[lambda * x[0], lambda * x[1], 0.0], &TruncationSpec::none()).unwrap().value;
        let n = (a[0] * a[0] + a[1] * a[1]).sqrt();
        prop_assert!(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() <= 1e-11 * n.max(1e-300));
    }

    #[test]
    fn fast_field_respects_its_certificate(mu in arb_measure(2), tol_exp in 3i32..10) {
        let tol = 10f64.powi(-tol_exp);
        let targets: Vec<Point> = (0..20).map(|i| [-1.3 + 0.13 * i as f64, 1.05 - 0.11 * i as f64, 0.0]).collect();
        let targets: Vec<Point> = targets.into_iter().filter(|t| mu.atom_at(t).is_none()).collect();
        let fast = riesz_field_fast(&mu, &targets, tol).unwrap();
        let direct = riesz_field_direct(&mu, &targets, &TruncationSpec::none()).unwrap();
        for (f, e) in fast.iter().zip(&direct) {
            let err = (0..3).map(|k| (f.value[k] - e.value[k]).powi(2)).sum::<f64>().sqrt();
            // Both sides carry their own rounding; allow a few ulps of the absolute sum.
            let abs: f64 = mu.positions().iter().zip(mu.weights()).map(|(a, w)| w / dist(a, &targets[0]).powf(mu.s())).sum();
            prop_assert!(err <= f.error_bound + 1e-13 * abs.max(1.0), "err {} bound {}", err, f.error_bound);
        }
    }
}

#[test]
fn translation_leaves_masses_unchanged() {
    let mu = build_cantor_measure(2, 1.5, 4, None, None).unwrap();
    let nu = translate_measure(&mu, &[3.0, -2.0, 0.0]).unwrap();
    for r in [0.05, 0.2, 0.7] {
        assert_eq!(mu.open_mass(&[0.5, 0.5, 0.0], r), nu.open_mass(&[3.5, -1.5, 0.0], r));
    }
}

#[test]
fn exact_sum_is_order_free() {
    let v: Vec<f64> =
        (0..2000).map(|i| ((i * 7919) % 1009) as f64 * 1e-3 - 0.5 + 1e16 * ((i % 3) as f64 - 1.0)).collect();
    let mut rev = v.clone();
    rev.reverse();
    assert_eq!(exact_sum(v.iter().copied()), exact_sum(rev.iter().copied()));
    assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
}

#[test]
fn truncation_outside_a_ball_drops_the_near_atoms() {
    let mu = build_cantor_measure(2, 1.5, 5, None, None).unwrap();
    let x = [0.41, 0.37, 0.0];
    let ball = Ball::new(x, 0.2);
    let got = riesz_outside_ball(&mu, &x, &ball).unwrap();
    let want = naive_field(&mu, &x, 0.2);
    let n = (want[0] * want[0] + want[1] * want[1]).sqrt();
    assert!(((got[0] - want[0]).powi(2) + (got[1] - want[1]).powi(2)).sqrt() <= 1e-12 * n);
}

#[test]
fn singular_target_is_reported() {
    let mu = build_cantor_measure(2, 1.5, 2, None, None).unwrap();
    let x = *mu.position(3);
    assert!(matches!(riesz_at(&mu, &x, &TruncationSpec::none()), Err(Error::Singularity { .. })));
    assert!(riesz_at(&mu, &x, &TruncationSpec::outside(1e-9)).is_ok());
}
