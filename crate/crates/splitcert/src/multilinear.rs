//! Auerbach families, Jacobians `Sigma_d` and the three singular-value
//! variants `sigma <= sigma' <= sigma''`.
//!
//! `Sigma_d(A) = sup det[<zeta_i | A u_j>]` over unit `u_j` in `X` and unit
//! `zeta_i` in `Y*`. The determinant is affine in each argument, so the
//! ascent replaces one vector at a time by the exact maximizer of a linear
//! functional. For `p in {1, inf}` and small sizes the supremum is attained
//! at vertices of the unit balls and is enumerated exhaustively.

use crate::error::{Error, Result};
use crate::linalg::{self, combinations};
use crate::norms::{self, NormSpec};
use crate::subspace_geometry::{hstack, Subspace};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ASCENT_SWEEPS: usize = 500;
pub const ASCENT_RESTARTS: usize = 8;
pub const ASCENT_REL_TOL: f64 = 1e-10;
/// Largest number of determinant evaluations for exhaustive vertex search.
pub const EXHAUSTIVE_BUDGET: usize = 300_000;

/// Unit vectors `u_j` and covectors `eta_i` with `<eta_i | u_j> = delta_ij`,
/// `dist(u_j, span(u_k, k != j)) >= 1 / constant` and `||eta_i|| <= constant`.
#[derive(Clone, Debug)]
pub struct AuerbachFamily {
    pub vectors: DMatrix<f64>,
    pub covectors: DMatrix<f64>,
    pub constant: f64,
}

/// Near-Auerbach basis of `u` maximizing the Jacobian of the inclusion.
pub fn auerbach_extract(u: &Subspace, ns: &NormSpec) -> Result<AuerbachFamily> {
    if u.ambient() != ns.dim {
        return Err(Error::DimensionMismatch { expected: ns.dim, got: u.ambient() });
    }
    let d = u.dim();
    if ns.is_euclidean() || d == 0 {
        return Ok(AuerbachFamily { vectors: u.basis().clone(), covectors: u.basis().clone(), constant: 1.0 });
    }
    let n = ns.dim;
    let b = u.basis();
    let id = DMatrix::identity(n, n);
    let mut starts = vec![(normalize_columns(b, ns.p), normalize_columns(b, ns.q()))];
    let mut rng = ChaCha8Rng::seed_from_u64(0xa0e_0000 + (n * 16 + d) as u64);
    for _ in 0..ASCENT_RESTARTS {
        let c = random_matrix(&mut rng, d, d);
        let z = random_matrix(&mut rng, n, d);
        starts.push((normalize_columns(&(b * c), ns.p), normalize_columns(&z, ns.q())));
    }
    let dom = Some((b, u.annihilator()));
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
    for (u0, z0) in starts {
        let r = det_ascent(&id, ns.p, ns.q(), dom, u0, z0);
        if best.as_ref().map_or(true, |bb| r.0 > bb.0) {
            best = Some(r);
        }
    }
    let (_, vectors, z) = best.expect("at least one start");
    let m = z.transpose() * &vectors;
    let minv = linalg::inverse(&m).ok_or(Error::RankDeficient { needed: d })?;
    let covectors = z * minv.transpose();
    let constant = covectors
        .column_iter()
        .map(|c| norms::lp_norm(c.as_slice(), ns.q()))
        .fold(1.0, f64::max);
    Ok(AuerbachFamily { vectors, covectors, constant })
}

/// Lower end of the distortion bracket: best `||U||_{2 -> p}` over the
/// coordinate family and Auerbach families extracted from test subspaces.
pub(crate) fn distortion_lower_bound(d: usize, ns: &NormSpec) -> f64 {
    let n = ns.dim;
    let p = ns.p;
    let mut best = (d as f64).powf((1.0 / p - 0.5).max(0.0));
    let mut subspaces = vec![Subspace::span(&DMatrix::identity(n, n).columns(0, d).into_owned())];
    let mut rng = ChaCha8Rng::seed_from_u64(0xd15_0000 + (n * 16 + d) as u64);
    for _ in 0..6 {
        subspaces.push(Subspace::span(&random_matrix(&mut rng, n, d)));
    }
    for s in subspaces {
        if s.dim() != d {
            continue;
        }
        if let Ok(fam) = auerbach_extract(&s, ns) {
            if fam.constant <= 1.0 + 1e-9 {
                best = best.max(norms::norm_2_to_p(&fam.vectors, p));
            }
        }
    }
    best
}

/// `log Sigma_d(A)` with a maximizing family.
#[derive(Clone, Debug)]
pub struct JacobianEstimate {
    pub log_value: f64,
    pub vectors: DMatrix<f64>,
    pub covectors: DMatrix<f64>,
    /// True when the value is the exact supremum.
    pub exact: bool,
}

pub fn jacobian(a: &DMatrix<f64>, d: usize, ns: &NormSpec) -> Result<JacobianEstimate> {
    jacobian_seeded(a, d, ns, &[])
}

/// As [`jacobian`], with extra `(vectors, covectors)` starting families for
/// the ascent; the result is at least the determinant of every seed.
pub fn jacobian_seeded(
    a: &DMatrix<f64>,
    d: usize,
    ns: &NormSpec,
    seeds: &[(DMatrix<f64>, DMatrix<f64>)],
) -> Result<JacobianEstimate> {
    let n = ns.dim;
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
    }
    if d > n {
        return Err(Error::InvalidArgument(format!("d = {d} exceeds dim = {n}")));
    }
    if d == 0 {
        return Ok(JacobianEstimate {
            log_value: 0.0,
            vectors: DMatrix::zeros(n, 0),
            covectors: DMatrix::zeros(n, 0),
            exact: true,
        });
    }
    let dec = linalg::svd(a);
    if ns.is_euclidean() {
        let log_value = dec.s[..d].iter().map(|s| s.ln()).sum();
        return Ok(JacobianEstimate {
            log_value,
            vectors: dec.v.columns(0, d).into_owned(),
            covectors: dec.u.columns(0, d).into_owned(),
            exact: true,
        });
    }
    let scale = a.amax();
    // below numerical rank d every pairing determinant is rounding noise
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let numerical_rank = dec.s.iter().filter(|&&s| s > n as f64 * f64::EPSILON * smax).count();
    if scale == 0.0 || numerical_rank < d {
        return Ok(JacobianEstimate {
            log_value: f64::NEG_INFINITY,
            vectors: DMatrix::identity(n, n).columns(0, d).into_owned(),
            covectors: DMatrix::identity(n, n).columns(0, d).into_owned(),
            exact: true,
        });
    }
    let a_s = a / scale;
    let shift = d as f64 * scale.ln();
    let (p, q) = (ns.p, ns.q());
    if (p == 1.0 || p.is_infinite()) && exhaustive_cost(n, d) <= EXHAUSTIVE_BUDGET {
        let (v, u, z) = exhaustive_jacobian(&a_s, d, p);
        return Ok(JacobianEstimate { log_value: v.ln() + shift, vectors: u, covectors: z, exact: true });
    }
    let mut starts = vec![(
        normalize_columns(&dec.v.columns(0, d).into_owned(), p),
        normalize_columns(&dec.u.columns(0, d).into_owned(), q),
    )];
    for (u, z) in seeds {
        starts.push((normalize_columns(u, p), normalize_columns(z, q)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x1ac_0000 + (n * 16 + d) as u64);
    for _ in 0..ASCENT_RESTARTS {
        starts.push((normalize_columns(&random_matrix(&mut rng, n, d), p), normalize_columns(&random_matrix(&mut rng, n, d), q)));
    }
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
    for (u0, z0) in starts {
        let r = det_ascent(&a_s, p, q, None, u0, z0);
        if best.as_ref().map_or(true, |b| r.0 > b.0) {
            best = Some(r);
        }
    }
    let (v, u, z) = best.expect("at least one start");
    let log_value = if v > 0.0 { v.ln() + shift } else { f64::NEG_INFINITY };
    Ok(JacobianEstimate { log_value, vectors: u, covectors: z, exact: false })
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn normalize_columns(m: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let nc = norms::lp_norm(c.as_slice(), p);
        if nc > 0.0 {
            c /= nc;
        }
    }
    out
}

/// `C[i][j] = (-1)^{i+j} det(minor_ij)`.
fn cofactors(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    if d == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    DMatrix::from_fn(d, d, |i, j| {
        let rows: Vec<usize> = (0..d).filter(|&r| r != i).collect();
        let cols: Vec<usize> = (0..d).filter(|&c| c != j).collect();
        let minor = linalg::select_columns(&linalg::select_rows(m, &rows), &cols);
        let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        s * linalg::det(&minor)
    })
}

/// Coordinate ascent of `det(Z^T A U)`. `dom` restricts the `u_j` to the
/// subspace with the given (basis, annihilator).
fn det_ascent(
    a: &DMatrix<f64>,
    p: f64,
    q: f64,
    dom: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    mut u: DMatrix<f64>,
    mut z: DMatrix<f64>,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let d = u.ncols();
    let mut det = linalg::det(&(z.transpose() * a * &u));
    if det < 0.0 {
        z.column_mut(0).neg_mut();
        det = -det;
    }
    for _ in 0..ASCENT_SWEEPS {
        let old = det;
        for j in 0..d {
            let cof = cofactors(&(z.transpose() * a * &u));
            let psi = a.transpose() * (&z * cof.column(j));
            let cand = match dom {
                None => norms::align(&psi, p),
                Some((b, y)) => b * norms::max_linear_on_section(&(b.transpose() * &psi), b, y, p).argmax,
            };
            if psi.dot(&cand) > psi.dot(&u.column(j)) {
                u.set_column(j, &cand);
            }
        }
        for i in 0..d {
            let cof = cofactors(&(z.transpose() * a * &u));
            let g = a * (&u * cof.row(i).transpose());
            let cand = norms::align(&g, q);
            if g.dot(&cand) > g.dot(&z.column(i)) {
                z.set_column(i, &cand);
            }
        }
        det = linalg::det(&(z.transpose() * a * &u));
        if det - old <= ASCENT_REL_TOL * old.abs() {
            break;
        }
    }
    (det, u, z)
}

fn exhaustive_cost(n: usize, d: usize) -> usize {
    if n > 12 {
        return usize::MAX;
    }
    let signs = 1usize << (n - 1);
    linalg::binomial(n, d).saturating_mul(linalg::binomial(signs, d - 1).max(1))
}

/// Exact `Sigma_d` for `p in {1, inf}` by enumerating ball vertices.
fn exhaustive_jacobian(a: &DMatrix<f64>, d: usize, p: f64) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut best = (0.0, DMatrix::zeros(n, d), DMatrix::zeros(n, d));
    for sel in combinations(n, d) {
        let coord = DMatrix::from_fn(n, d, |i, j| if i == sel[j] { 1.0 } else { 0.0 });
        if p == 1.0 {
            let (v, z) = max_det_signs(&linalg::select_columns(a, &sel));
            if v > best.0 {
                best = (v, coord, z);
            }
        } else {
            let (v, u) = max_det_signs(&linalg::select_rows(a, &sel).transpose());
            if v > best.0 {
                best = (v, u, coord);
            }
        }
    }
    best
}

/// `max |det(Z^T M)|` over sign matrices `Z` (`n x d`), with a maximizer of
/// positive determinant. The last column is chosen in closed form.
fn max_det_signs(m: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let (n, d) = m.shape();
    let signs: Vec<DVector<f64>> = (0..(1usize << (n - 1)))
        .map(|mask| DVector::from_fn(n, |i, _| if i == 0 || mask & (1 << (i - 1)) == 0 { 1.0 } else { -1.0 }))
        .collect();
    let sign_of = |g: &DVector<f64>| g.map(|x| if x >= 0.0 { 1.0 } else { -1.0 });
    let mut best = (0.0, DMatrix::zeros(n, d));
    for combo in combinations(signs.len(), d - 1) {
        let mut z = DMatrix::zeros(n, d);
        for (c, &k) in combo.iter().enumerate() {
            z.set_column(c, &signs[k]);
        }
        let top = z.columns(0, d - 1).transpose() * m;
        let g = m * linalg::cross_product(&top);
        let v = g.abs().sum();
        if v > best.0 {
            let orient = if (d - 1) % 2 == 0 { 1.0 } else { -1.0 };
            z.set_column(d - 1, &(sign_of(&g) * orient));
            best = (v, z);
        }
    }
    best
}

/// The three singular-value variants of an endomorphism, index `1..=n`
/// stored at `0..n`, plus `log Sigma_d` for `d = 0..=n`.
#[derive(Clone, Debug)]
pub struct SingularChain {
    pub sigma: Vec<f64>,
    pub sigma_prime: Vec<f64>,
    pub sigma_second: Vec<f64>,
    pub log_jacobian: Vec<f64>,
    pub exact: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaVariant {
    /// `sigma_d`: sup over `d`-dimensional `U` of `inf ||Au|| / ||u||`.
    SupInf,
    /// `sigma'_d`: inf over codimension `d-1` subspaces `V` of `||A|_V||`.
    InfSup,
    /// `sigma''_d = Sigma_d / Sigma_{d-1}`.
    Jacobian,
}

pub fn singular_values(a: &DMatrix<f64>, ns: &NormSpec, variant: SigmaVariant) -> Result<Vec<f64>> {
    let c = singular_chain(a, ns)?;
    Ok(match variant {
        SigmaVariant::SupInf => c.sigma,
        SigmaVariant::InfSup => c.sigma_prime,
        SigmaVariant::Jacobian => c.sigma_second,
    })
}

/// `K_d = [Delta_d(Y*) Delta_d(X)]^d` from the upper distortion ends.
pub fn chain_constant(d: usize, ns: &NormSpec) -> Result<f64> {
    let x = norms::volume_distortion(d, ns)?.upper;
    let y = norms::volume_distortion(d, &ns.dual())?.upper;
    Ok((x * y).powi(d as i32))
}

/// All three variants. In `l^p` mode the candidate subspaces are chosen so
/// that the computed values respect `sigma <= sigma' <= sigma''` whenever
/// the inner optimizations reach their optima: every candidate pair
/// `(U, V)` shares an explicit vector, and the `sigma''` ascent is seeded
/// with the block-triangular family built from the `sigma'` witness.
pub fn singular_chain(a: &DMatrix<f64>, ns: &NormSpec) -> Result<SingularChain> {
    let n = ns.dim;
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
    }
    let dec = linalg::svd(a);
    if ns.is_euclidean() {
        let mut log_jacobian = vec![0.0];
        let mut acc = 0.0;
        for s in &dec.s {
            acc += s.ln();
            log_jacobian.push(acc);
        }
        return Ok(SingularChain {
            sigma: dec.s.clone(),
            sigma_prime: dec.s.clone(),
            sigma_second: dec.s.clone(),
            log_jacobian,
            exact: true,
        });
    }
    let p = ns.p;
    let mut out = SingularChain {
        sigma: vec![],
        sigma_prime: vec![],
        sigma_second: vec![],
        log_jacobian: vec![0.0],
        exact: false,
    };
    let mut prev = jacobian(a, 0, ns)?;
    for d in 1..=n {
        let mut v_cands: Vec<Subspace> = Vec::new();
        if d == 1 {
            v_cands.push(Subspace::whole(n));
        } else {
            let w = Subspace::span(&(a.transpose() * &prev.covectors));
            if w.dim() == d - 1 {
                v_cands.push(w.perp());
            }
            v_cands.push(Subspace::span(&dec.v.columns(d - 1, n - d + 1).into_owned()));
        }
        let euclid_u = Subspace::span(&dec.v.columns(0, d).into_owned());
        let mut extra: Vec<DVector<f64>> = intersections(&euclid_u, &v_cands[0]).into_iter().collect();
        let mut cur;
        let mut witness_norm;
        let mut rounds = 0;
        loop {
            let bv = v_cands[0].basis();
            let (br, c) = norms::restricted_norm_with_starts(&(a * bv), bv, p, p, &extra);
            witness_norm = br.lower;
            let v = bv * c;
            let seed_u = hstack(&prev.vectors, &DMatrix::from_column_slice(n, 1, v.as_slice()));
            let zd = norms::align(&(a * &v), ns.q());
            let seed_z = hstack(&prev.covectors, &DMatrix::from_column_slice(n, 1, zd.as_slice()));
            cur = jacobian_seeded(a, d, ns, &[(seed_u, seed_z)])?;
            let wu = Subspace::span(&cur.vectors);
            let mut again = false;
            if wu.dim() == d {
                if let Some(w) = intersections(&wu, &v_cands[0]) {
                    let ratio = norms::lp_norm((a * bv * &w).as_slice(), p) / norms::lp_norm((bv * &w).as_slice(), p);
                    if ratio > witness_norm * (1.0 + 1e-12) {
                        extra.push(w);
                        again = true;
                    }
                }
            }
            rounds += 1;
            if !again || rounds >= 3 {
                break;
            }
        }
        let mut u_cands = vec![euclid_u];
        let wu = Subspace::span(&cur.vectors);
        if wu.dim() == d {
            u_cands.push(wu);
        }
        let mut sigma_prime = witness_norm;
        let mut shared: Vec<Vec<f64>> = vec![vec![]; u_cands.len()];
        for (vi, vc) in v_cands.iter().enumerate() {
            let bv = vc.basis();
            let starts: Vec<DVector<f64>> = u_cands.iter().filter_map(|uc| intersections(uc, vc)).collect();
            let val = if vi == 0 {
                witness_norm
            } else {
                norms::restricted_norm_with_starts(&(a * bv), bv, p, p, &starts).0.lower
            };
            sigma_prime = sigma_prime.min(val);
            for (ui, uc) in u_cands.iter().enumerate() {
                if let Some(w) = intersections(uc, vc) {
                    let x = bv * w;
                    shared[ui].push(norms::lp_norm((a * &x).as_slice(), p) / norms::lp_norm(x.as_slice(), p));
                }
            }
        }
        let mut sigma = 0.0f64;
        for (ui, uc) in u_cands.iter().enumerate() {
            let bu = uc.basis();
            let abu = a * bu;
            let inner = if linalg::rank(&abu, 1e-12) < d {
                0.0
            } else {
                1.0 / norms::restricted_norm(bu, &abu, p, p).lower
            };
            let cap = shared[ui].iter().copied().fold(inner, f64::min);
            sigma = sigma.max(cap);
        }
        let second = if prev.log_value == f64::NEG_INFINITY {
            0.0
        } else {
            (cur.log_value - prev.log_value).exp()
        };
        out.sigma.push(sigma);
        out.sigma_prime.push(sigma_prime);
        out.sigma_second.push(second);
        out.log_jacobian.push(cur.log_value);
        prev = cur;
    }
    out.exact = false;
    Ok(out)
}

/// Coefficients (in the basis of `v`) of a unit vector of `u ∩ v`.
fn intersections(u: &Subspace, v: &Subspace) -> Option<DVector<f64>> {
    let m = hstack(u.basis(), &(-v.basis()));
    let k = m.ncols();
    let row_space = linalg::orthonormal_basis(&m.transpose(), 1e-12);
    let null = linalg::complement(&row_space, k);
    if null.ncols() == 0 {
        return None;
    }
    let x = null.column(0);
    let b = x.rows(u.dim(), v.dim()).into_owned();
    let nb = b.norm();
    (nb > 0.0).then(|| b / nb)
}
