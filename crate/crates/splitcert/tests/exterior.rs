use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitcert::exterior as ext;
use splitcert::linalg::binomial;
use splitcert::multilinear;
use splitcert::norms::{self, NormSpec};
use splitcert::oracle;
use splitcert::subspace_geometry::{self as sg, Subspace};

const PS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

#[test]
fn wedge_matrix_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_matrix(&mut rng, 4, 4);
    assert_eq!(ext::wedge_matrix(&a, 1).unwrap().matrix, a);
    let top = ext::wedge_matrix(&a, 4).unwrap().matrix;
    assert_eq!(top.shape(), (1, 1));
    assert!((top[(0, 0)] - a.determinant()).abs() < 1e-12);
    let d = dmatrix![2.0, 0.0, 0.0; 0.0, 3.0, 0.0; 0.0, 0.0, 5.0];
    let w = ext::wedge_matrix(&d, 2).unwrap().matrix;
    assert!((w - DMatrix::from_diagonal(&dvector![6.0, 10.0, 15.0])).amax() < 1e-12);
    assert!(ext::wedge_matrix(&a, 0).is_err());
    assert!(ext::wedge_matrix(&a, 5).is_err());
    assert!(ext::wedge_matrix(&DMatrix::identity(12, 12), 6).is_err());
}

#[test]
fn wedge_matches_laplace_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let n = rng.gen_range(2..=6);
        let d = rng.gen_range(1..=n.min(4));
        let a = random_matrix(&mut rng, n, n);
        let w = ext::wedge_matrix(&a, d).unwrap().matrix;
        assert!(rel_err(&w, &oracle::wedge_laplace(&a, d)) < 1e-12);
    }
}

#[test]
fn wedge_is_multiplicative_and_respects_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..60 {
        let n = rng.gen_range(2..=8);
        let d = rng.gen_range(1..=n.min(4));
        let a = random_matrix(&mut rng, n, n);
        let b = random_matrix(&mut rng, n, n);
        let wa = ext::wedge_matrix(&a, d).unwrap().matrix;
        let wb = ext::wedge_matrix(&b, d).unwrap().matrix;
        let wba = ext::wedge_matrix(&(&b * &a), d).unwrap().matrix;
        assert!(rel_err(&wba, &(&wb * &wa)) < 1e-12, "n = {n}, d = {d}");
        let wat = ext::wedge_matrix(&a.transpose(), d).unwrap().matrix;
        assert!(rel_err(&wat, &wa.transpose()) < 1e-12);
    }
}

#[test]
fn hat_and_check_spaces() {
    let u = Subspace::from_basis(&dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0]).unwrap();
    let h = ext::hat_space(&u).unwrap();
    let e12 = Subspace::from_basis(&dmatrix![1.0; 0.0; 0.0]).unwrap();
    assert!(sg::symmetric_gap(&h, &e12, &NormSpec::hilbert(3)).unwrap() < 1e-15);
    // codimension one: the check space is V itself
    let v = Subspace::from_annihilator(&dmatrix![1.0; 0.0; 0.0]).unwrap();
    let c = ext::check_space(&v).unwrap();
    assert!(sg::symmetric_gap(&c, &v, &NormSpec::hilbert(3)).unwrap() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.gen_range(3..=6);
        let d = rng.gen_range(1..n);
        let u = Subspace::from_basis(&random_matrix(&mut rng, n, d)).unwrap();
        let v = Subspace::from_basis(&random_matrix(&mut rng, n, n - d)).unwrap();
        let h = ext::hat_space(&u).unwrap();
        let c = ext::check_space(&v).unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(c.dim(), binomial(n, d) - 1);
        assert!(h.is_transverse(&c));
    }
}

#[test]
fn decompose_simple_recovers_the_subspace() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let n = rng.gen_range(3..=6);
        let d = rng.gen_range(1..n);
        let b = random_matrix(&mut rng, n, d);
        let w = ext::wedge_vectors(&b).unwrap();
        let (q, c, res) = ext::decompose_simple(&w, n, d).unwrap();
        assert!(res.amax() < 1e-10 * w.amax());
        assert!(c != 0.0);
        let u = Subspace::from_basis(&b).unwrap();
        let uq = Subspace::from_basis(&q).unwrap();
        assert!(sg::symmetric_gap(&u, &uq, &NormSpec::hilbert(n)).unwrap() < 1e-9);
    }
}

#[test]
fn projective_norm_brackets() {
    // simple vectors in the Euclidean norm: Gram determinant
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let u = random_matrix(&mut rng, 4, 2);
    let w = ext::wedge_vectors(&u).unwrap();
    let b = ext::projective_norm_bracket(&w, 4, 2, &NormSpec::hilbert(4)).unwrap();
    let gram = (u.transpose() * &u).determinant().sqrt();
    assert!((b.lower - gram).abs() < 1e-12 && b.is_exact());
    // e12 + e34 in l2
    let mut w = DVector::zeros(6);
    w[0] = 1.0;
    w[5] = 1.0;
    let b = ext::projective_norm_bracket(&w, 4, 2, &NormSpec::lp(2.0, 4).unwrap()).unwrap();
    assert!(b.lower <= 2f64.sqrt() + 1e-9 && 2f64.sqrt() <= b.upper + 1e-9);
    assert!(ext::projective_norm_bracket(&w, 4, 3, &NormSpec::hilbert(4)).is_err());
}

#[test]
fn auerbach_wedge_norm_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for p in PS {
        let ns = NormSpec::lp(p, 4).unwrap();
        for d in 1..=3 {
            let u = Subspace::from_basis(&random_matrix(&mut rng, 4, d)).unwrap();
            let f = multilinear::auerbach_extract(&u, &ns).unwrap();
            let w = ext::wedge_vectors(&f.vectors).unwrap();
            let b = ext::projective_norm_bracket(&w, 4, d, &ns).unwrap();
            let sigma = ext::identity_jacobian_upper(d, &ns).unwrap();
            let c = f.constant.powi(d as i32);
            assert!(b.lower <= c * (1.0 + 1e-9), "p = {p}, d = {d}");
            assert!(b.upper >= 1.0 / (sigma * c) - 1e-9, "p = {p}, d = {d}");
        }
    }
}

#[test]
fn wedge_duality_and_submultiplicativity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for p in PS {
        let ns = NormSpec::lp(p, 4).unwrap();
        let dual = ns.dual();
        let sigma = ext::identity_jacobian_upper(2, &ns).unwrap();
        for _ in 0..10 {
            let theta = ext::wedge_vectors(&random_matrix(&mut rng, 4, 2)).unwrap();
            let w = random_matrix(&mut rng, 6, 1).column(0).into_owned();
            let nt = ext::projective_norm_bracket(&theta, 4, 2, &dual).unwrap();
            let nw = ext::projective_norm_bracket(&w, 4, 2, &ns).unwrap();
            assert!(theta.dot(&w).abs() <= sigma * nt.upper * nw.upper * (1.0 + 1e-9), "p = {p}");

            let a = random_matrix(&mut rng, 4, 2);
            let b = random_matrix(&mut rng, 4, 2);
            let mut ab = DMatrix::zeros(4, 4);
            ab.columns_mut(0, 2).copy_from(&a);
            ab.columns_mut(2, 2).copy_from(&b);
            let wab = ext::wedge_vectors(&ab).unwrap();
            let na = ext::projective_norm_bracket(&ext::wedge_vectors(&a).unwrap(), 4, 2, &ns).unwrap();
            let nb = ext::projective_norm_bracket(&ext::wedge_vectors(&b).unwrap(), 4, 2, &ns).unwrap();
            let nab = ext::projective_norm_bracket(&wab, 4, 4, &ns).unwrap();
            assert!(nab.lower <= na.upper * nb.upper * (1.0 + 1e-9), "p = {p}");
        }
    }
}

#[test]
fn identity_jacobian_bracketed_by_distortion() {
    for p in PS {
        for n in 2..=4 {
            let ns = NormSpec::lp(p, n).unwrap();
            for d in 1..=n {
                let s = ext::identity_jacobian_upper(d, &ns).unwrap();
                let bar = norms::simplified_distortion(d, &ns).unwrap().upper;
                assert!(s >= 1.0 - 1e-12);
                assert!(s <= bar.powi(d as i32) * (1.0 + 1e-12), "p = {p}, n = {n}, d = {d}");
            }
        }
    }
    assert_eq!(ext::identity_jacobian_upper(3, &NormSpec::hilbert(5)).unwrap(), 1.0);
}

#[test]
fn gap_comparison_on_random_splittings() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let e = NormSpec::hilbert(2);
    let u = Subspace::from_basis(&dmatrix![1.0; 0.0]).unwrap();
    let v = Subspace::from_basis(&dmatrix![1.0; 1.0]).unwrap();
    let g = ext::gap_comparison(&u, &v, &e).unwrap();
    assert_eq!(g.gamma_uv, g.gamma_hat_check);
    let g = ext::gap_comparison(&u, &u.perp(), &e).unwrap();
    assert!((g.gamma_uv - 1.0).abs() < 1e-12 && g.lower_holds && g.upper_holds);
    for _ in 0..100 {
        let n = rng.gen_range(3..=6);
        let d = rng.gen_range(1..n);
        let u = Subspace::from_basis(&random_matrix(&mut rng, n, d)).unwrap();
        let v = Subspace::from_basis(&random_matrix(&mut rng, n, n - d)).unwrap();
        let g = ext::gap_comparison(&u, &v, &NormSpec::hilbert(n)).unwrap();
        assert!(g.lower_holds && g.upper_holds, "{g:?}");
    }
    let l1 = NormSpec::lp(1.0, 4).unwrap();
    let u = Subspace::from_basis(&random_matrix(&mut rng, 4, 1)).unwrap();
    let v = Subspace::from_basis(&random_matrix(&mut rng, 4, 3)).unwrap();
    let g = ext::gap_comparison(&u, &v, &l1).unwrap();
    assert!(g.lower_holds && g.upper_holds);
    let u2 = Subspace::from_basis(&random_matrix(&mut rng, 4, 2)).unwrap();
    let v2 = Subspace::from_basis(&random_matrix(&mut rng, 4, 2)).unwrap();
    assert!(ext::gap_comparison(&u2, &v2, &l1).is_err());
    assert!(ext::gap_comparison(&u2, &u2, &NormSpec::hilbert(4)).is_err());
}

/// A random frame `U0 ⊕ V0` with a nearby slow space `V`, returning
/// `Theta^perp` and the frame vectors.
fn random_frame(rng: &mut ChaCha8Rng, n: usize, d: usize, eps: f64, ns: &NormSpec) -> (sg::GraphOperator, DMatrix<f64>) {
    let u0 = Subspace::from_basis(&random_matrix(rng, n, d)).unwrap();
    let v0 = Subspace::from_basis(&random_matrix(rng, n, n - d)).unwrap();
    let v = Subspace::from_basis(&(v0.basis() + random_matrix(rng, n, n - d) * eps)).unwrap();
    let th = sg::graph_of(&v, &v0, &u0, ns).unwrap();
    let tp = sg::perp_graph(&th).unwrap();
    (tp, th.codomain_basis.clone())
}

#[test]
fn wedge_graph_norm_on_random_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let e = NormSpec::hilbert(3);
    let (tp, u) = random_frame(&mut rng, 3, 1, 0.0, &e);
    let r = ext::wedge_graph_norm(&tp, &u, &e).unwrap();
    assert!(r.theta_hat_norm < 1e-14 && r.theta_perp_norm < 1e-14);
    for i in 0..100 {
        let n = rng.gen_range(3..=5);
        let d = rng.gen_range(1..n);
        let ns = NormSpec::hilbert(n);
        let (tp, u) = random_frame(&mut rng, n, d, 0.3, &ns);
        let r = ext::wedge_graph_norm(&tp, &u, &ns).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(r.graph_defect < 1e-9, "{r:?}");
        if d == 1 {
            // at d = 1 the extended graph operator is Theta^perp up to the frame
            assert!(r.theta_hat_norm <= r.frame_constant.powi(2) * r.theta_perp_norm * (1.0 + 1e-9));
        }
        let lp = NormSpec::lp(PS[i % PS.len()], n).unwrap();
        let (tp, u) = random_frame(&mut rng, n, 1, 0.3, &lp);
        let r = ext::wedge_graph_norm(&tp, &u, &lp).unwrap();
        assert!(r.holds && r.graph_defect < 1e-9, "{lp:?}: {r:?}");
    }
}

#[test]
fn bound_below_fbi_on_random_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.gen_range(2..=5);
        let d = rng.gen_range(1..n);
        let ns = NormSpec::hilbert(n);
        let a = random_matrix(&mut rng, n, n);
        let b = random_matrix(&mut rng, n, n);
        let r = ext::bound_below_fbi(&a, &b, d, &ns).unwrap();
        assert!(r.holds, "{r:?}");
    }
    let a = DMatrix::identity(3, 3);
    assert!(ext::bound_below_fbi(&a, &a, 1, &NormSpec::lp(1.0, 3).unwrap()).is_err());
}

proptest! {
    #[test]
    fn cauchy_binet(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=6);
        let d = rng.gen_range(1..=n);
        let a = random_matrix(&mut rng, n, n);
        let b = random_matrix(&mut rng, n, d);
        let lhs = ext::wedge_vectors(&(&a * &b)).unwrap();
        let rhs = ext::wedge_matrix(&a, d).unwrap().matrix * ext::wedge_vectors(&b).unwrap();
        prop_assert!((&lhs - &rhs).amax() <= 1e-12 * rhs.amax().max(1e-300) + 1e-14);
    }
}
