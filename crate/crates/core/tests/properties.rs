use std::sync::{Arc, OnceLock};

use orbitcz::aoi::{build_family, default_bump, ScaleFamily};
use orbitcz::cz::{cz_decompose, lambda_ladder, maximal_function};
use orbitcz::norms::{bmo_norm, holder_norm};
use orbitcz::reflection::{reflect, DEFAULT_MAX_ORDER};
use orbitcz::{Grid, GridFunction, Metric, NormKind, ReflectionGroup, RootSystem, VerificationReport};
use proptest::prelude::*;

fn group(name: &str, dim: usize) -> ReflectionGroup {
    ReflectionGroup::generate(&RootSystem::preset(name, dim).unwrap(), DEFAULT_MAX_ORDER).unwrap()
}

fn groups() -> &'static [(ReflectionGroup, usize)] {
    static G: OnceLock<Vec<(ReflectionGroup, usize)>> = OnceLock::new();
    G.get_or_init(|| {
        let mut v: Vec<(ReflectionGroup, usize)> = vec![(group("A1", 1), 2), (group("A1xA1", 2), 4), (group("B2", 2), 8)];
        for m in 3..=6 {
            v.push((ReflectionGroup::generate(&RootSystem::dihedral(m).unwrap(), DEFAULT_MAX_ORDER).unwrap(), 2 * m));
        }
        v
    })
}

fn b2_grid() -> &'static Arc<Grid> {
    static G: OnceLock<Arc<Grid>> = OnceLock::new();
    G.get_or_init(|| Grid::cube(4.0, 17, Arc::new(group("B2", 2))).unwrap())
}

fn a1_family() -> &'static Arc<ScaleFamily> {
    static F: OnceLock<Arc<ScaleFamily>> = OnceLock::new();
    F.get_or_init(|| {
        let grid = Grid::cube(8.0, 65, Arc::new(group("A1", 1))).unwrap();
        Arc::new(build_family(grid, default_bump(), 0, 3).unwrap())
    })
}

fn invariant_fn(grid: &Arc<Grid>, vals: &[f64]) -> GridFunction {
    let v: Vec<f64> = (0..grid.len()).map(|i| vals[i % vals.len()]).collect();
    GridFunction::new(grid.clone(), v).unwrap().symmetrize()
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn orbit_distance_is_a_bi_invariant_pseudometric(
        which in 0usize..7,
        x in point(2), y in point(2), z in point(2),
        s in 0usize..12, t in 0usize..12,
    ) {
        let (g, order) = &groups()[which];
        prop_assert_eq!(g.order(), *order);
        let d = g.dim();
        let (x, y, z) = (&x[..d], &y[..d], &z[..d]);
        let dxy = g.orbit_distance(x, y).unwrap();
        prop_assert!(dxy >= 0.0);
        prop_assert!(g.orbit_distance(x, x).unwrap() < 1e-12);
        prop_assert!((dxy - g.orbit_distance(y, x).unwrap()).abs() < 1e-9);
        prop_assert!(g.orbit_distance(x, z).unwrap() <= dxy + g.orbit_distance(y, z).unwrap() + 1e-9);
        let (s, t) = (s % g.order(), t % g.order());
        prop_assert!((g.orbit_distance(&g.act(s, x), &g.act(t, y)).unwrap() - dxy).abs() < 1e-9);
    }

    #[test]
    fn reflections_are_involutions(root in point(2), p in point(2)) {
        prop_assume!(root.iter().map(|r| r * r).sum::<f64>() > 1e-3);
        let once = reflect(&root, &p).unwrap();
        let twice = reflect(&root, &once).unwrap();
        for (a, b) in twice.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetrize_is_an_invariant_projection(vals in prop::collection::vec(-3.0..3.0f64, 1..40)) {
        let grid = b2_grid();
        let f = invariant_fn(grid, &vals);
        prop_assert!(f.invariance_defect() < 1e-14);
        let again = f.symmetrize();
        prop_assert!(again.sub(&f).unwrap().norm(NormKind::Linf) < 1e-14);
    }

    #[test]
    fn maximal_function_dominates_and_is_sublinear(
        a in prop::collection::vec(-3.0..3.0f64, 1..30),
        b in prop::collection::vec(-3.0..3.0f64, 1..30),
    ) {
        let grid = b2_grid();
        let (f, g) = (invariant_fn(grid, &a), invariant_fn(grid, &b));
        let (mf, mg) = (maximal_function(&f), maximal_function(&g));
        let mfg = maximal_function(&f.add(&g).unwrap());
        for i in 0..grid.len() {
            prop_assert!(mf.values()[i] >= f.values()[i].abs() - 1e-12);
            prop_assert!(mfg.values()[i] <= mf.values()[i] + mg.values()[i] + 1e-12);
        }
        prop_assert_eq!(mf.invariance_defect(), 0.0);
    }

    #[test]
    fn cz_pieces_reconstruct_f(vals in prop::collection::vec(-3.0..3.0f64, 2..30), c in 0.1..0.9f64) {
        let grid = b2_grid();
        let f = invariant_fn(grid, &vals);
        prop_assume!(f.norm(NormKind::Linf) > 1e-6);
        let lambda = lambda_ladder(&f, &[c])[0];
        let out = cz_decompose(&f, lambda).unwrap();
        let mut sum = out.good.clone();
        for (_, b) in &out.bad {
            prop_assert!(b.integral().abs() <= 1e-10 * f.norm(NormKind::L1).max(1.0));
            sum = sum.add(b).unwrap();
        }
        prop_assert!(sum.sub(&f).unwrap().norm(NormKind::Linf) <= 1e-10 * f.norm(NormKind::Linf));
        prop_assert!(out.good.invariance_defect() <= 1e-10 * f.norm(NormKind::Linf));
    }

    #[test]
    fn holder_norm_is_absolutely_homogeneous(vals in prop::collection::vec(-3.0..3.0f64, 1..30), c in -4.0..4.0f64, eta in 0.1..1.0f64) {
        let grid = b2_grid();
        let f = invariant_fn(grid, &vals);
        let a = holder_norm(&f, eta).unwrap().value;
        let b = holder_norm(&f.scale(c), eta).unwrap().value;
        prop_assert!((b - c.abs() * a).abs() <= 1e-9 * (1.0 + b));
    }

    #[test]
    fn bmo_ignores_constants(vals in prop::collection::vec(-3.0..3.0f64, 1..30), c in -10.0..10.0f64) {
        let grid = b2_grid();
        let f = invariant_fn(grid, &vals);
        let a = bmo_norm(&f).value;
        let b = bmo_norm(&f.map(|x| x + c)).value;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn scale_operators_reproduce_constants(c in -5.0..5.0f64) {
        let fam = a1_family();
        let one = GridFunction::constant(fam.grid().clone(), c);
        for k in fam.ks() {
            let s = fam.s(k).apply(&one).unwrap();
            prop_assert!(s.sub(&one).unwrap().norm(NormKind::Linf) <= 1e-12 * (1.0 + c.abs()));
            if k > fam.k_min() {
                prop_assert!(fam.d(k).apply(&one).unwrap().norm(NormKind::Linf) <= 1e-12 * (1.0 + c.abs()));
            }
        }
    }

    #[test]
    fn report_json_round_trips(values in prop::collection::vec(prop_oneof![
        -1e12..1e12f64,
        Just(f64::INFINITY),
        Just(f64::NEG_INFINITY),
    ], 1..12)) {
        let mut rep = VerificationReport::new("prop");
        for (i, v) in values.iter().enumerate() {
            rep.push(Metric::new(format!("m{i}"), *v, "1").at_most(1.0).witness(vec![*v, 0.5]));
        }
        let text = rep.to_json();
        let back = VerificationReport::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
        prop_assert_eq!(rep.to_csv().lines().count(), values.len() + 1);
    }
}
