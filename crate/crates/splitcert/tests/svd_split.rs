use nalgebra::{dmatrix, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitcert::norms::NormSpec;
use splitcert::oracle;
use splitcert::subspace_geometry::{self as sg, Subspace};
use splitcert::svd_split::{self, SvdSplit};

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

fn gap(m: &Subspace, n: &Subspace) -> f64 {
    sg::max_gap(m, n, &NormSpec::hilbert(m.ambient())).unwrap().value
}

fn check_invariants(s: &SvdSplit, a: &DMatrix<f64>, ns: &NormSpec) {
    let n = ns.dim;
    let d = s.d;
    assert_eq!(s.u.dim(), d);
    assert_eq!(s.u_tilde.dim(), d);
    assert!(s.u.is_transverse(&s.v) && s.u.dim() + s.v.dim() == n);
    for i in 0..d {
        let lhs = a * s.e.column(i);
        let rhs = s.e_tilde.column(i) * s.sigmas[i];
        assert!((lhs - rhs).amax() <= 1e-9 * s.sigmas[0]);
        let lhs = a.transpose() * s.phi_tilde.column(i);
        let rhs = s.phi.column(i) * s.sigmas[i];
        assert!((lhs - rhs).amax() <= 1e-9 * s.sigmas[0] * s.phi_tilde.amax().max(1.0));
    }
    assert!(gap(&s.u.image(a), &s.u_tilde) < 1e-9);
    let av = s.v.image(a);
    if av.dim() > 0 {
        assert!(gap(&av, &s.v_tilde) < 1e-9);
    }
    let c = s.c_achieved;
    for (m, o) in [(&s.u, &s.v), (&s.v, &s.u), (&s.u_tilde, &s.v_tilde), (&s.v_tilde, &s.u_tilde)] {
        let g = sg::min_gap(m, o, ns).unwrap();
        assert!(g.upper >= 1.0 / c - 1e-9, "gamma {} below 1/C = {}", g.upper, 1.0 / c);
    }
    assert!(s.items.iter().all(|i| i.holds), "{:?}", s.items);
}

#[test]
fn diagonal_split() {
    let a = dmatrix![2.0, 0.0; 0.0, 1.0];
    let ns = NormSpec::hilbert(2);
    let s = svd_split::split(&a, 1, &ns, 0.0).unwrap();
    assert!(gap(&s.u, &Subspace::from_basis(&dmatrix![1.0; 0.0]).unwrap()) < 1e-15);
    assert!(gap(&s.v, &Subspace::from_basis(&dmatrix![0.0; 1.0]).unwrap()) < 1e-15);
    assert_eq!(s.sigmas, vec![2.0, 1.0]);
    assert_eq!(s.c_achieved, 1.0);
    check_invariants(&s, &a, &ns);
}

#[test]
fn rank_deficient_split_uses_the_kernel() {
    let a = dmatrix![2.0, 0.0; 0.0, 0.0];
    let e2 = Subspace::from_basis(&dmatrix![0.0; 1.0]).unwrap();
    let e1 = Subspace::from_basis(&dmatrix![1.0; 0.0]).unwrap();
    for ns in [NormSpec::hilbert(2), NormSpec::lp(1.0, 2).unwrap(), NormSpec::lp(3.0, 2).unwrap()] {
        let s = svd_split::split(&a, 1, &ns, 0.0).unwrap();
        assert!(gap(&s.v, &e2) < 1e-9, "{ns:?}");
        // the dual maximizer is unique only for strictly convex norms
        if ns.p > 1.0 {
            assert!(gap(&s.v_tilde.perp(), &e1) < 1e-9, "{ns:?}");
        }
        let r = svd_split::restricted_norms(&s, &a, &ns);
        assert_eq!(r.a_on_v, 0.0);
        assert!(r.lower_holds);
    }
    assert!(svd_split::split(&a, 2, &NormSpec::hilbert(2), 0.0).is_err());
}

#[test]
fn hilbert_split_matches_exact_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let a = random_matrix(&mut rng, 5);
        let ns = NormSpec::hilbert(5);
        let s = svd_split::split(&a, 2, &ns, 0.0).unwrap();
        let o = oracle::hilbert_singular_values(&a);
        for i in 0..3 {
            assert!((s.sigmas[i] - o[i]).abs() < 1e-10 * o[0]);
        }
        assert!(s.c_achieved <= 1.0 + 1e-12);
        assert!((gap(&s.v, &s.u.perp())) < 1e-10);
        assert!((gap(&s.v_tilde, &s.u_tilde.perp())) < 1e-10);
        let r = svd_split::restricted_norms(&s, &a, &ns);
        assert!((r.a_on_v - o[2]).abs() < 1e-10 * o[0]);
        assert!((r.upper_constant - 1.0).abs() < 1e-9);
        check_invariants(&s, &a, &ns);
    }
}

#[test]
fn lp_split_invariants_and_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for p in [1.0, 1.5, 3.0, f64::INFINITY] {
        let ns = NormSpec::lp(p, 4).unwrap();
        for d in 1..=2 {
            let a = random_matrix(&mut rng, 4);
            let s = svd_split::split(&a, d, &ns, 0.0).unwrap();
            check_invariants(&s, &a, &ns);
            assert!(s.c_achieved.ln() <= s.log_c_formula + 1e-9, "p = {p}, d = {d}");
            let r = svd_split::restricted_norms(&s, &a, &ns);
            assert!(r.lower_holds, "p = {p}, d = {d}");
            assert!(r.upper_constant <= s.c_achieved * (1.0 + 1e-9), "p = {p}, d = {d}");
        }
    }
}

#[test]
fn tie_breaking_is_deterministic() {
    let a = DMatrix::<f64>::identity(3, 3) * 2.0;
    let ns = NormSpec::hilbert(3);
    let s1 = svd_split::split(&a, 1, &ns, 0.0).unwrap();
    let s2 = svd_split::split(&a, 1, &ns, 0.0).unwrap();
    assert_eq!(s1.e, s2.e);
    assert_eq!(s1.phi_tilde, s2.phi_tilde);
    check_invariants(&s1, &a, &ns);
}

#[test]
fn formula_constant_is_one_in_hilbert_mode() {
    for d in 1..=3 {
        assert_eq!(svd_split::log_c_formula(d, &NormSpec::hilbert(4), 0.0).unwrap(), 0.0);
        let l = svd_split::log_c_formula(d, &NormSpec::lp(1.0, 4).unwrap(), 0.0).unwrap();
        assert!(l >= 0.0);
    }
}

#[test]
fn subspaces_match_the_full_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [1.0, 2.0, 3.0, f64::INFINITY] {
        let ns = NormSpec::lp(p, 4).unwrap();
        for d in 1..=2 {
            let a = random_matrix(&mut rng, 4);
            let s = svd_split::split(&a, d, &ns, 0.0).unwrap();
            let (u, v, ut) = svd_split::subspaces(&a, d, &ns).unwrap();
            assert!(gap(&u, &s.u) < 1e-12 && gap(&v, &s.v) < 1e-12 && gap(&ut, &s.u_tilde) < 1e-12, "p = {p}");
        }
    }
    assert!(svd_split::subspaces(&DMatrix::zeros(3, 3), 1, &NormSpec::lp(3.0, 3).unwrap()).is_err());
}
