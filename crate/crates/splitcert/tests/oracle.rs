use nalgebra::{dmatrix, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitcert::cocycle::Cocycle;
use splitcert::linalg;
use splitcert::norms::{self, NormSpec};
use splitcert::oracle::{self, Extremum, OracleMethod, OracleReport};
use splitcert::subspace_geometry::{self as sg, Subspace};

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn report_records_discrepancy() {
    let r = OracleReport::new("gap", 0.5, 0.5 + 1e-12, OracleMethod::PrincipalAngles);
    assert!(r.discrepancy < 2e-12);
    let j = serde_json::to_value(&r).unwrap();
    assert_eq!(j["method"], "principal_angles");
}

#[test]
fn gram_schmidt_and_projector() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_matrix(&mut rng, 5, 3);
    let q = oracle::gram_schmidt(&a);
    assert_eq!(q.ncols(), 3);
    assert!((q.transpose() * &q - DMatrix::identity(3, 3)).amax() < 1e-13);
    let p = oracle::projector(&a);
    assert!((&p * &a - &a).amax() < 1e-12);
    let c = oracle::orthogonal_complement(&a);
    assert_eq!(c.ncols(), 2);
    assert!((c.transpose() * &a).amax() < 1e-12);
    let dep = dmatrix![1.0, 2.0; 1.0, 2.0; 0.0, 0.0];
    assert_eq!(oracle::gram_schmidt(&dep).ncols(), 1);
}

#[test]
fn principal_angles_closed_form() {
    let t: f64 = 0.4;
    let m = dmatrix![1.0; 0.0; 0.0];
    let n = dmatrix![t.cos(); t.sin(); 0.0];
    let ang = oracle::principal_angles(&m, &n);
    assert!((ang[0] - t).abs() < 1e-12);
    assert!((oracle::hilbert_max_gap(&m, &n) - t.sin()).abs() < 1e-12);
}

#[test]
fn hilbert_oracles_agree_with_main_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let n = rng.gen_range(2..=6);
        let k = rng.gen_range(1..n);
        let mb = random_matrix(&mut rng, n, k);
        let nb = random_matrix(&mut rng, n, n - k);
        let hs = NormSpec::hilbert(n);
        let m = Subspace::from_basis(&mb).unwrap();
        let nn = Subspace::from_basis(&nb).unwrap();
        let main = sg::max_gap(&m, &nn, &hs).unwrap().value;
        assert!((main - oracle::hilbert_max_gap(&mb, &nb)).abs() < 1e-9);
        let main = sg::min_gap(&m, &nn, &hs).unwrap().value;
        assert!((main - oracle::hilbert_min_gap(&mb, &nb)).abs() < 1e-9);
        let a = random_matrix(&mut rng, n, n);
        let sv = oracle::hilbert_singular_values(&a);
        let main = linalg::svd(&a).s;
        for i in 0..n {
            assert!((sv[i] - main[i]).abs() < 1e-9 * sv[0]);
        }
        assert!((oracle::laplace_det(&a) - linalg::det(&a)).abs() < 1e-12);
    }
}

#[test]
fn lp_sphere_oracles_bracket_main_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [1.0, 1.5, 3.0, f64::INFINITY] {
        let ns = NormSpec::lp(p, 4).unwrap();
        for _ in 0..2 {
            let mb = random_matrix(&mut rng, 4, 2);
            let nb = random_matrix(&mut rng, 4, 2);
            let m = Subspace::from_basis(&mb).unwrap();
            let nn = Subspace::from_basis(&nb).unwrap();
            let o = oracle::lp_max_gap(&mb, &nb, p).unwrap();
            let g = sg::max_gap(&m, &nn, &ns).unwrap();
            assert!((g.value - o.value).abs() <= o.resolution + 1e-6, "p = {p}: {} vs {}", g.value, o.value);
            let o = oracle::lp_min_gap(&mb, &nb, p).unwrap();
            let g = sg::min_gap(&m, &nn, &ns).unwrap();
            assert!((g.value - o.value).abs() <= o.resolution + 1e-6, "p = {p}: {} vs {}", g.value, o.value);

            let u = random_matrix(&mut rng, 4, 1).column(0).into_owned();
            let main = norms::nearest_point(&u, &nb, p).value;
            let o = oracle::lp_distance(&u, &nb, p);
            assert!((main - o).abs() < 1e-6 * o.max(1.0), "p = {p}");
            let od = oracle::lp_distance_dual(&u, &nb, p).unwrap();
            assert!(od.value <= main * (1.0 + 1e-9) + od.resolution, "p = {p}");

            let l = random_matrix(&mut rng, 4, 2);
            let main = norms::restricted_norm(&l, &mb, p, p);
            let o = oracle::lp_restricted_norm(&l, &mb, p).unwrap();
            assert!(main.lower <= o.value + o.resolution + 1e-9 && o.value <= main.upper * (1.0 + 1e-9), "p = {p}");
        }
    }
}

#[test]
fn sphere_sampling() {
    for dim in 1..=3 {
        for x in oracle::sphere_points(dim, 200).unwrap() {
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
    }
    assert!(oracle::sphere_points(4, 10).is_err());
    // max of the first coordinate on the l-inf unit sphere of R^2 is 1
    let r = oracle::sphere_extremize(&DMatrix::identity(2, 2), f64::INFINITY, |x| x[0], Extremum::Max).unwrap();
    assert!((r.value - 1.0).abs() < 1e-6);
    assert!(oracle::sphere_extremize(&DMatrix::identity(9, 2), 2.0, |x| x[0], Extremum::Min).is_err());
}

#[test]
fn naive_product_matches_cocycle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ops: Vec<DMatrix<f64>> = (0..12).map(|_| random_matrix(&mut rng, 3, 3)).collect();
    let c = Cocycle::new(5, ops.clone(), NormSpec::hilbert(3)).unwrap();
    for n in 0..=6 {
        let naive = oracle::naive_product(&ops, 2, n);
        let main = c.product_unscaled(7, n).unwrap();
        assert!((naive - &main).amax() < 1e-12 * main.amax().max(1.0));
    }
}

#[test]
fn wedge_laplace_of_identity() {
    let w = oracle::wedge_laplace(&DMatrix::identity(4, 4), 2);
    assert!((w - DMatrix::identity(6, 6)).amax() < 1e-15);
}

#[test]
fn rotations_are_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=6 {
        let r = oracle::random_rotation(n, &mut rng);
        assert!((r.transpose() * &r - DMatrix::identity(n, n)).amax() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }
    let g = oracle::givens(3, 0, 2, std::f64::consts::FRAC_PI_2);
    let x = g * DVector::from_vec(vec![1.0, 0.0, 0.0]);
    assert!((x[2].abs() - 1.0).abs() < 1e-15);
}

#[test]
fn conjugated_hyperbolic_truth_is_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rot: Vec<DMatrix<f64>> = (0..=10).map(|_| oracle::random_rotation(3, &mut rng)).collect();
    let rates = [0.7, 0.0, -0.7];
    let g = oracle::conjugated_hyperbolic(&rot, &rates, 1, -4, NormSpec::hilbert(3)).unwrap();
    assert_eq!(g.cocycle.len(), 10);
    assert_eq!(g.fast.len(), 11);
    let hs = NormSpec::hilbert(3);
    for j in 0..10 {
        let a = g.cocycle.op(-4 + j as i64).unwrap();
        let e = Subspace::from_basis(&g.fast[j]).unwrap().image(a);
        let f = Subspace::from_basis(&g.slow[j]).unwrap().image(a);
        assert!(sg::symmetric_gap(&e, &Subspace::from_basis(&g.fast[j + 1]).unwrap(), &hs).unwrap() < 1e-12);
        assert!(sg::symmetric_gap(&f, &Subspace::from_basis(&g.slow[j + 1]).unwrap(), &hs).unwrap() < 1e-12);
    }
    assert!(oracle::conjugated_hyperbolic(&rot, &[0.0, 0.0, -1.0], 1, 0, hs).is_err());
}
