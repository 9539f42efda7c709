use rieszwolff::cantor::{build_cantor_tree, level_separation_violation, verify_construction, CantorTree};
use rieszwolff::fixtures::{fixture_params, LacunarySpec};
use rieszwolff::geometry::dist;
use rieszwolff::harness::{
    cell_difference_riesz, level_energies, mean_zero_all, partial_riesz, psi_closed_form, psi_covers, psi_integral,
    HarnessContext, PsiSpec,
};
use rieszwolff::{AtomicMeasure, Error, Point};

fn small(levels: usize) -> (AtomicMeasure, CantorTree) {
    let f = LacunarySpec::for_levels(levels, 2).unwrap().build().unwrap();
    let tree = build_cantor_tree(&f.measure, &f.e_atoms, &fixture_params(levels)).unwrap();
    (f.measure, tree)
}

fn mu_len(levels: usize) -> usize {
    small(levels).0.len()
}

fn norm(v: &Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[test]
fn small_trees_verify() {
    for n in 1..=3 {
        let (mu, tree) = small(n);
        let rep = verify_construction(&tree, &mu);
        assert!(rep.all_pass(), "N={n}: {:?}", rep.checks);
        for level in &tree.levels {
            assert!(level_separation_violation(&mu, level, tree.params.epsilon).is_none());
        }
        // Cells of each level partition a subset of their parents' atoms.
        for k in 1..tree.levels.len() {
            for c in &tree.levels[k] {
                let p = &tree.levels[k - 1][c.parent.unwrap()];
                assert!(c.atoms.iter().all(|a| p.atoms.contains(a)));
            }
        }
    }
}

#[test]
fn partial_transform_matches_a_hand_sum() {
    let (mu, tree) = small(2);
    let ctx = HarnessContext::new(&tree, &mu).unwrap();
    let s = mu.s();
    for &x in tree.rarefied_atoms.iter().step_by(7) {
        for k in 0..2 {
            let got = partial_riesz(&ctx, x, k).unwrap();
            let outer = tree.levels[k].iter().position(|c| c.atoms.contains(&x)).unwrap();
            let inner = tree.levels[k + 1].iter().position(|c| c.atoms.contains(&x)).unwrap();
            let mut want = [0.0; 3];
            for &a in &tree.levels[k][outer].atoms {
                if ctx.weights[a] == 0.0 || tree.levels[k + 1][inner].atoms.contains(&a) {
                    continue;
                }
                let (pa, px) = (mu.position(a), mu.position(x));
                let r = dist(pa, px);
                for c in 0..3 {
                    want[c] += ctx.weights[a] * (pa[c] - px[c]) / r.powf(1.0 + s);
                }
            }
            let err = norm(&[got[0] - want[0], got[1] - want[1], got[2] - want[2]]);
            assert!(err <= 1e-12 * norm(&want).max(1e-300), "x={x} k={k}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn partial_transforms_telescope() {
    let (mu, tree) = small(3);
    let ctx = HarnessContext::new(&tree, &mu).unwrap();
    for &x in &tree.rarefied_atoms {
        let whole = cell_difference_riesz(&ctx, x, 0, 3).unwrap();
        let mut sum = [0.0; 3];
        let mut scale = 0.0;
        for k in 0..3 {
            let p = partial_riesz(&ctx, x, k).unwrap();
            scale += norm(&p);
            for c in 0..3 {
                sum[c] += p[c];
            }
        }
        let err = norm(&[sum[0] - whole[0], sum[1] - whole[1], sum[2] - whole[2]]);
        assert!(err <= 1e-14 * scale.max(1e-300), "atom {x}: {err:e}");
    }
}

#[test]
fn partial_transform_rejects_bad_levels() {
    let (mu, tree) = small(1);
    let ctx = HarnessContext::new(&tree, &mu).unwrap();
    let x = tree.rarefied_atoms[0];
    assert!(matches!(cell_difference_riesz(&ctx, x, 1, 1), Err(Error::InvalidArgument(_))));
    assert!(matches!(partial_riesz(&ctx, x, 1), Err(Error::InvalidArgument(_))));
}

#[test]
fn energy_expands_into_levels_and_cross_terms() {
    for n in 2..=3 {
        let (mu, tree) = small(n);
        let ctx = HarnessContext::new(&tree, &mu).unwrap();
        let rep = level_energies(&ctx).unwrap();
        assert_eq!(rep.level_energies.len(), n);
        assert_eq!(rep.cross_terms.len(), n * (n - 1) / 2);
        assert!(rep.identity_residual < 1e-12, "N={n}: {:e}", rep.identity_residual);
        assert!(rep.level_energies.iter().all(|e| *e >= 0.0));
    }
}

#[test]
fn mean_zero_holds_in_every_cell() {
    for n in 1..=3 {
        let (mu, tree) = small(n);
        let ctx = HarnessContext::new(&tree, &mu).unwrap();
        for seed in [None, Some(11)] {
            for r in mean_zero_all(&ctx, seed).unwrap() {
                assert!(r.relative() <= 1e-10, "N={n} level {} cell {}: {:e}", r.level, r.cell, r.relative());
            }
        }
    }
}

#[test]
fn psi_integral_has_a_closed_form() {
    let (mu, tree) = small(3);
    let ctx = HarnessContext::new(&tree, &mu).unwrap();
    let spec = PsiSpec::new(2, PsiSpec::DEFAULT_K_MAX).unwrap();
    assert!(spec.check_bump(4000).all_pass());
    for level in 0..3 {
        let covers = psi_covers(&ctx, level).unwrap();
        let a = psi_integral(&spec, &covers);
        let b = psi_closed_form(&spec, &covers);
        assert!((a - b).abs() <= 1e-12 * b, "level {level}: {a} vs {b}");
    }
}

#[test]
fn tree_rejects_a_foreign_measure() {
    let (_, tree) = small(3);
    let (other, _) = small(1);
    assert!(other.len() < mu_len(3));
    assert!(HarnessContext::new(&tree, &other).is_err());
}
