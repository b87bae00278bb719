use nalgebra::{dmatrix, DMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitcert::norms::NormSpec;
use splitcert::oracle;
use splitcert::subspace_geometry::{self as sg, Subspace};

fn random_basis(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_subspace(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Subspace {
    Subspace::from_basis(&random_basis(rng, n, k)).unwrap()
}

/// A random subspace within roughly `eps` of `m`, `eps` drawn from `range`.
fn nearby(rng: &mut ChaCha8Rng, m: &Subspace, range: std::ops::Range<f64>) -> Subspace {
    let n = m.ambient();
    let eps = rng.gen_range(range);
    Subspace::from_basis(&(m.basis() + random_basis(rng, n, m.dim()) * eps)).unwrap()
}

fn polyhedral_and_hilbert(n: usize) -> Vec<NormSpec> {
    vec![NormSpec::hilbert(n), NormSpec::lp(1.0, n).unwrap(), NormSpec::lp(f64::INFINITY, n).unwrap()]
}

#[test]
fn gap_of_a_subspace_with_itself_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for ns in polyhedral_and_hilbert(4) {
        let m = random_subspace(&mut rng, 4, 2);
        assert!(sg::max_gap(&m, &m, &ns).unwrap().value < 1e-10);
    }
}

#[test]
fn max_gap_matches_principal_angles() {
    let t: f64 = 0.3;
    let m = Subspace::from_basis(&dmatrix![1.0; 0.0]).unwrap();
    let n = Subspace::from_basis(&dmatrix![t.cos(); t.sin()]).unwrap();
    let h = NormSpec::hilbert(2);
    let v = sg::max_gap(&m, &n, &h).unwrap().value;
    let o = oracle::hilbert_max_gap(m.basis(), n.basis());
    assert!((v - o).abs() < 1e-12);
    assert!((v - t.sin()).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..500 {
        let dim = rng.gen_range(2..=6);
        let k = rng.gen_range(1..dim);
        let l = rng.gen_range(1..dim);
        let hs = NormSpec::hilbert(dim);
        let m = random_subspace(&mut rng, dim, k);
        let n = random_subspace(&mut rng, dim, l);
        let v = sg::max_gap(&m, &n, &hs).unwrap().value;
        assert!((v - oracle::hilbert_max_gap(m.basis(), n.basis())).abs() < 1e-9);
        if k + l == dim {
            let g = sg::min_gap(&m, &n, &hs).unwrap().value;
            assert!((g - oracle::hilbert_min_gap(m.basis(), n.basis())).abs() < 1e-9);
        }
    }
}

#[test]
fn hilbert_dualities_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let dim = rng.gen_range(2..=7);
        let k = rng.gen_range(1..dim);
        let hs = NormSpec::hilbert(dim);
        let m = random_subspace(&mut rng, dim, k);
        let n = random_subspace(&mut rng, dim, dim - k);
        let d1 = sg::max_gap(&m, &n, &hs).unwrap().value;
        let d2 = sg::max_gap(&n.perp(), &m.perp(), &hs).unwrap().value;
        assert!((d1 - d2).abs() < 1e-10);
        let g1 = sg::min_gap(&m, &n, &hs).unwrap().value;
        let g2 = sg::min_gap(&n.perp(), &m.perp(), &hs).unwrap().value;
        assert!((g1 - g2).abs() < 1e-10);
        // equal dimensions: the maximal gap is symmetric
        let m2 = random_subspace(&mut rng, dim, k);
        let a = sg::max_gap(&m, &m2, &hs).unwrap().value;
        let b = sg::max_gap(&m2, &m, &hs).unwrap().value;
        assert!((a - b).abs() < 1e-10);
        // gamma times the projector norm is one
        let pn = sg::projector_norm(&m, &n, &hs).unwrap();
        assert!((g1 * pn.upper - 1.0).abs() < 1e-9);
    }
}

#[test]
fn orthogonal_complement_has_unit_min_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = random_subspace(&mut rng, 5, 2);
    let hs = NormSpec::hilbert(5);
    assert!((sg::min_gap(&m, &m.perp(), &hs).unwrap().value - 1.0).abs() < 1e-12);
    let pn = sg::projector_norm(&m, &m.perp(), &hs).unwrap();
    assert!((pn.upper - 1.0).abs() < 1e-12);
}

#[test]
fn intersecting_subspaces_have_zero_min_gap() {
    let m = Subspace::from_basis(&dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0]).unwrap();
    let n = Subspace::from_basis(&dmatrix![1.0, 0.0; 0.0, 0.0; 0.0, 1.0]).unwrap();
    for ns in polyhedral_and_hilbert(3) {
        let g = sg::min_gap(&m, &n, &ns).unwrap();
        assert_eq!(g.value, 0.0);
        assert!(g.intersecting);
    }
    assert!(sg::projector_norm(&m, &n, &NormSpec::hilbert(3)).is_err());
}

#[test]
fn oblique_projector_closed_form() {
    // U = span(e1), V = span((1,1)): projector [[1,-1],[0,0]] has norm sqrt 2
    let u = Subspace::from_basis(&dmatrix![1.0; 0.0]).unwrap();
    let v = Subspace::from_basis(&dmatrix![1.0; 1.0]).unwrap();
    let pn = sg::projector_norm(&u, &v, &NormSpec::hilbert(2)).unwrap();
    assert!((pn.upper - 2f64.sqrt()).abs() < 1e-12);
    let l1 = sg::projector_norm(&u, &v, &NormSpec::lp(1.0, 2).unwrap()).unwrap();
    assert!((l1.lower - 1.0).abs() < 1e-12);
    let li = sg::projector_norm(&u, &v, &NormSpec::lp(f64::INFINITY, 2).unwrap()).unwrap();
    assert!((li.lower - 2.0).abs() < 1e-12);
    let g = sg::min_gap(&u, &v, &NormSpec::lp(f64::INFINITY, 2).unwrap()).unwrap();
    assert!((g.value - 0.5).abs() < 1e-12);
}

#[test]
fn symmetrized_gap_and_gap_asymmetry_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for i in 0..300 {
        let dim = rng.gen_range(2..=5);
        let k = rng.gen_range(1..dim);
        let ns = polyhedral_and_hilbert(dim)[i % 3];
        let m = random_subspace(&mut rng, dim, k);
        let n = nearby(&mut rng, &m, 0.01..0.6);
        let dmn = sg::max_gap(&m, &n, &ns).unwrap();
        let dnm = sg::max_gap(&n, &m, &ns).unwrap();
        let sym = sg::symmetric_gap(&m, &n, &ns).unwrap();
        assert!(dmn.value <= sym + 1e-12);
        if dmn.value < 0.5 {
            assert!(sym <= 2.0 * dmn.value + 1e-9);
        }
        if dnm.upper < 1.0 {
            assert!(dmn.lower <= dnm.upper / (1.0 - dnm.upper) + 1e-9, "{ns:?}");
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn min_gap_stability_under_perturbation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..300 {
        let dim = rng.gen_range(2..=5);
        let k = rng.gen_range(1..dim);
        let ns = polyhedral_and_hilbert(dim)[i % 3];
        let m = random_subspace(&mut rng, dim, k);
        let n = random_subspace(&mut rng, dim, dim - k);
        let n2 = nearby(&mut rng, &n, 0.001..0.3);
        let g = sg::min_gap(&m, &n, &ns).unwrap();
        let g2 = sg::min_gap(&m, &n2, &ns).unwrap();
        let d = sg::max_gap(&n2, &n, &ns).unwrap();
        let rhs = (g.lower - d.upper) / (1.0 + d.upper);
        assert!(g2.upper >= rhs - 1e-9, "{ns:?}: {} < {}", g2.upper, rhs);
    }
}

#[test]
fn graph_operator_closed_forms() {
    let t = 0.7;
    let u0 = Subspace::from_basis(&dmatrix![1.0; 0.0]).unwrap();
    let v0 = Subspace::from_basis(&dmatrix![0.0; 1.0]).unwrap();
    let v = Subspace::from_basis(&dmatrix![t; 1.0]).unwrap();
    let hs = NormSpec::hilbert(2);
    let th = sg::graph_of(&v, &v0, &u0, &hs).unwrap();
    assert!((th.action() - dmatrix![t; 0.0]).amax() < 1e-12);
    assert!((th.norm().upper - t).abs() < 1e-12);
    let zero = sg::graph_of(&v0, &v0, &u0, &hs).unwrap();
    assert!(zero.matrix.amax() < 1e-12);
    let zp = sg::perp_graph(&zero).unwrap();
    assert!(zp.matrix.amax() < 1e-12);
    // perp graph in the scalar case maps the dual frame by -t
    let tp = sg::perp_graph(&th).unwrap();
    assert!((tp.action() - dmatrix![0.0; -t]).amax() < 1e-12);
    assert!(sg::graph_of(&u0, &v0, &v0, &hs).is_err());
}

#[test]
fn graph_round_trip_and_annihilator_pairing() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let dim = rng.gen_range(2..=6);
        let k = rng.gen_range(1..dim);
        let hs = NormSpec::hilbert(dim);
        let u0 = random_subspace(&mut rng, dim, k);
        let v0 = random_subspace(&mut rng, dim, dim - k);
        let v = nearby(&mut rng, &v0, 0.2..0.2001);
        let th = sg::graph_of(&v, &v0, &u0, &hs).unwrap();
        assert!(sg::symmetric_gap(&th.graph(), &v, &hs).unwrap() < 1e-10);
        let tp = sg::perp_graph(&th).unwrap();
        let pairing = tp.graph().basis().transpose() * v.basis();
        assert!(pairing.amax() < 1e-10);
        assert_eq!(tp.graph().dim(), k);
    }
}

#[test]
fn graph_lemmas_on_random_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut item1 = 0;
    let mut item3 = 0;
    for i in 0..300 {
        let dim = rng.gen_range(2..=5);
        let k = rng.gen_range(1..dim);
        let ns = polyhedral_and_hilbert(dim)[i % 3];
        let u0 = random_subspace(&mut rng, dim, k);
        let v0 = random_subspace(&mut rng, dim, dim - k);
        let u = nearby(&mut rng, &u0, 0.01..0.5);
        let u2 = nearby(&mut rng, &u, 0.001..0.2);
        let (Ok(th), Ok(th2)) = (sg::graph_of(&u, &u0, &v0, &ns), sg::graph_of(&u2, &u0, &v0, &ns)) else {
            continue;
        };
        // angle comparison through the canonical isomorphism
        let g0 = sg::min_gap(&u0, &v0, &ns).unwrap();
        let g = sg::min_gap(&u, &v0, &ns).unwrap();
        let idn = th.id_plus_norm();
        assert!(g0.lower <= g.upper * idn.upper * (1.0 + 1e-9), "{ns:?}");
        assert!(g.lower * idn.lower <= 1.0 + 1e-9, "{ns:?}");
        // norm of Theta from the gaps
        let d_u_u0 = sg::max_gap(&u, &u0, &ns).unwrap();
        let g_v0_u0 = sg::min_gap(&v0, &u0, &ns).unwrap();
        if d_u_u0.upper < g_v0_u0.lower {
            let bound = d_u_u0.upper / (g_v0_u0.lower - d_u_u0.upper);
            assert!(th.norm().lower <= bound * (1.0 + 1e-9) + 1e-12, "{ns:?}");
            item1 += 1;
        }
        // lower bounds on graph distances
        let d_u0_u = sg::max_gap(&u0, &u, &ns).unwrap();
        assert!(d_u0_u.lower <= th.norm().upper * (1.0 + 1e-9) + 1e-12, "{ns:?}");
        let diff = th.difference(&th2).unwrap().norm();
        let factor = 1.0 + d_u_u0.lower / g_v0_u0.upper;
        let d_u_u2 = sg::max_gap(&u, &u2, &ns).unwrap();
        assert!(d_u_u2.lower / factor <= diff.upper * (1.0 + 1e-9) + 1e-12, "{ns:?}");
        item3 += 1;
    }
    assert!(item1 > 50 && item3 > 200);
}

proptest! {
    #[test]
    fn subspace_invariants(seed in 0u64..10_000, dim in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..dim);
        let s = random_subspace(&mut rng, dim, k);
        prop_assert_eq!(s.dim() + s.codim(), dim);
        prop_assert!((s.annihilator().transpose() * s.basis()).amax() < 1e-10);
        let p = s.projector();
        prop_assert!((&p * &p - &p).amax() < 1e-12);
        prop_assert_eq!(s.perp().perp().dim(), k);
    }
}
