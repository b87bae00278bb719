//! Exterior powers `∧^d R^n` in the lexicographic basis `{e_I}`.
//!
//! Wedge coordinates are `d x d` minors. The Euclidean inner product on
//! coordinates is the Gram-determinant pairing, and it also realizes the
//! duality `<∧θ | ∧w> = det[<θ_i | w_j>]` (Cauchy-Binet). In `l^p` mode the
//! projective norm is only bracketed.

use crate::error::{Error, Result};
use crate::linalg::{self, binomial, combinations};
use crate::multilinear::{self, AuerbachFamily};
use crate::norms::{self, Bracket, NormSpec};
use crate::subspace_geometry::{self, GraphOperator, Subspace};
use crate::svd_split;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Largest admissible `C(n, d)`.
pub const WEDGE_CAP: usize = 252;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WedgeNormMode {
    Euclidean,
    ProjectiveBracket,
}

#[derive(Clone, Debug)]
pub struct WedgeOperator {
    pub d: usize,
    pub base_dim: usize,
    pub matrix: DMatrix<f64>,
    pub norm_mode: WedgeNormMode,
}

fn check_cap(n: usize, d: usize) -> Result<usize> {
    if d == 0 || d > n {
        return Err(Error::InvalidArgument(format!("wedge degree {d} outside 1..={n}")));
    }
    let m = binomial(n, d);
    if m > WEDGE_CAP {
        return Err(Error::Cap(format!("C({n},{d}) = {m} exceeds {WEDGE_CAP}")));
    }
    Ok(m)
}

/// `∧^d A`: entry `(I, J)` is the minor of `A` on rows `I` and columns `J`.
pub fn wedge_matrix(a: &DMatrix<f64>, d: usize) -> Result<WedgeOperator> {
    let (m, n) = a.shape();
    check_cap(m.max(n), d)?;
    let rows = combinations(m, d);
    let cols = combinations(n, d);
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    for (i, r) in rows.iter().enumerate() {
        let ar = linalg::select_rows(a, r);
        for (j, c) in cols.iter().enumerate() {
            out[(i, j)] = linalg::det(&linalg::select_columns(&ar, c));
        }
    }
    Ok(WedgeOperator { d, base_dim: n, matrix: out, norm_mode: WedgeNormMode::Euclidean })
}

/// Coordinates of `w_1 ∧ ... ∧ w_d` for the columns of `w`.
pub fn wedge_vectors(w: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (n, d) = w.shape();
    check_cap(n, d)?;
    Ok(DVector::from_iterator(
        binomial(n, d),
        combinations(n, d).iter().map(|r| linalg::det(&linalg::select_rows(w, r))),
    ))
}

/// `∧U`: the line spanned by the wedge of a basis of `U`.
pub fn hat_space(u: &Subspace) -> Result<Subspace> {
    let w = wedge_vectors(u.basis())?;
    Subspace::from_basis(&DMatrix::from_column_slice(w.len(), 1, w.as_slice()))
}

/// The hyperplane `ker(∧η)` where `η` spans `V^perp` (`d = codim V`).
pub fn check_space(v: &Subspace) -> Result<Subspace> {
    let w = wedge_vectors(v.annihilator())?;
    Subspace::from_annihilator(&DMatrix::from_column_slice(w.len(), 1, w.as_slice()))
}

/// Matrix of `x -> x ∧ w` from `R^n` to `∧^{d+1} R^n`.
fn wedge_left_matrix(w: &DVector<f64>, n: usize, d: usize) -> DMatrix<f64> {
    let idx_d = combinations(n, d);
    let pos = |s: &[usize]| idx_d.binary_search_by(|x| x.as_slice().cmp(s)).expect("sorted index");
    let idx_d1 = combinations(n, d + 1);
    let mut m = DMatrix::zeros(idx_d1.len(), n);
    for (r, j_set) in idx_d1.iter().enumerate() {
        for (k, &j) in j_set.iter().enumerate() {
            let rest: Vec<usize> = j_set.iter().copied().filter(|&x| x != j).collect();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            m[(r, j)] = sign * w[pos(&rest)];
        }
    }
    m
}

/// For a (numerically) simple `w`, an orthonormal basis `b` of the
/// subspace `{x : x ∧ w = 0}` and the scalar `c` with `w ≈ c ∧b`, plus the
/// coordinate residual `w - c ∧b`.
pub fn decompose_simple(w: &DVector<f64>, n: usize, d: usize) -> Result<(DMatrix<f64>, f64, DVector<f64>)> {
    check_cap(n, d)?;
    let b = if d == n {
        DMatrix::identity(n, n)
    } else {
        let m = wedge_left_matrix(w, n, d);
        let dec = linalg::svd(&m);
        let v = dec.v.clone();
        let full = if v.ncols() < n {
            let row = linalg::orthonormal_basis(&m.transpose(), 0.0);
            let comp = linalg::complement(&row, n);
            subspace_geometry::hstack(&row, &comp)
        } else {
            v
        };
        full.columns(n - d, d).into_owned()
    };
    let wb = wedge_vectors(&b)?;
    let c = wb.dot(w) / wb.norm_squared();
    let residual = w - &wb * c;
    Ok((b, c, residual))
}

/// Bracket on the projective norm of `w ∈ ∧^d R^n`.
///
/// Euclidean mode is exact. In `l^p` mode the upper end is the cheapest of
/// three explicit decompositions (coordinates, the SVD of the Plücker
/// matrix when `d = 2`, and the near-simple factorization through an
/// Auerbach basis); the lower end is the best simple-covector pairing found
/// by ascent, divided by the upper end of `Sigma_d(X)`, which bounds
/// `<∧θ | w> / (||w|| Π||θ_i||)`.
pub fn projective_norm_bracket(w: &DVector<f64>, n: usize, d: usize, ns: &NormSpec) -> Result<Bracket> {
    check_cap(n, d)?;
    if w.len() != binomial(n, d) {
        return Err(Error::DimensionMismatch { expected: binomial(n, d), got: w.len() });
    }
    if ns.is_euclidean() {
        return Ok(Bracket::exact(w.norm()));
    }
    let p = ns.p;
    let unit = |x: &[f64]| norms::lp_norm(x, p);
    let mut ub: f64 = w.abs().sum();
    if d == 1 {
        let v = unit(w.as_slice());
        return Ok(Bracket::exact(v));
    }
    if d == 2 {
        let idx = combinations(n, 2);
        let mut pm = DMatrix::zeros(n, n);
        for (k, ij) in idx.iter().enumerate() {
            pm[(ij[0], ij[1])] = w[k];
            pm[(ij[1], ij[0])] = -w[k];
        }
        let dec = linalg::svd(&pm);
        let cost: f64 = (0..n)
            .map(|i| dec.s[i] / 2.0 * unit(dec.u.column(i).as_slice()) * unit(dec.v.column(i).as_slice()))
            .sum();
        ub = ub.min(cost);
    }
    if let Ok((b, c, residual)) = decompose_simple(w, n, d) {
        let s = Subspace::span(&b);
        if s.dim() == d {
            if let Ok(AuerbachFamily { vectors, .. }) = multilinear::auerbach_extract(&s, ns) {
                let wf = wedge_vectors(&vectors)?;
                let wb = wedge_vectors(&b)?;
                let ratio = wf.dot(&wb);
                if ratio != 0.0 {
                    let cost = (c / ratio).abs() * vectors.column_iter().map(|v| unit(v.as_slice())).product::<f64>()
                        + residual.abs().sum();
                    ub = ub.min(cost);
                }
            }
        }
    }
    let sigma_x = identity_jacobian_upper(d, ns)?;
    let pairing = simple_pairing_sup(w, n, d, ns.q());
    Ok(Bracket { lower: (pairing / sigma_x).min(ub), upper: ub })
}

/// Upper end of `Sigma_d(X)` (the Jacobian of the identity): exact for
/// polyhedral norms when enumeration is affordable, `Dbar_d^d` otherwise.
pub fn identity_jacobian_upper(d: usize, ns: &NormSpec) -> Result<f64> {
    if ns.is_euclidean() || d <= 1 {
        return Ok(1.0);
    }
    let id = DMatrix::identity(ns.dim, ns.dim);
    let j = multilinear::jacobian(&id, d, ns)?;
    if j.exact {
        return Ok(j.log_value.exp());
    }
    Ok(norms::simplified_distortion(d, ns)?.upper.powi(d as i32))
}

/// `sup <∧θ | w>` over unit `θ_i` in `l^q`, by coordinate ascent (the
/// pairing is linear in each `θ_i`).
fn simple_pairing_sup(w: &DVector<f64>, n: usize, d: usize, q: f64) -> f64 {
    let pair = |t: &DMatrix<f64>| wedge_vectors(t).map(|x| x.dot(w)).unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e0_0000 + (n * 16 + d) as u64);
    let mut best = 0.0f64;
    let mut starts = Vec::new();
    if let Ok((b, _, _)) = decompose_simple(w, n, d) {
        starts.push(b);
    }
    for _ in 0..6 {
        starts.push(DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0)));
    }
    for mut t in starts {
        for mut c in t.column_iter_mut() {
            let nc = norms::lp_norm(c.as_slice(), q);
            if nc > 0.0 {
                c /= nc;
            }
        }
        let mut val = pair(&t);
        if val < 0.0 {
            t.column_mut(0).neg_mut();
            val = -val;
        }
        for _ in 0..200 {
            let old = val;
            for i in 0..d {
                let g = DVector::from_fn(n, |k, _| {
                    let mut tt = t.clone();
                    tt.column_mut(i).fill(0.0);
                    tt[(k, i)] = 1.0;
                    pair(&tt)
                });
                let cq = norms::align(&g, q);
                if g.dot(&cq) > g.dot(&t.column(i)) {
                    t.set_column(i, &cq);
                }
            }
            val = pair(&t);
            if val <= old * (1.0 + 1e-12) {
                break;
            }
        }
        best = best.max(val);
    }
    best
}

/// Result of comparing `gamma(U, V)` with `gamma(∧U, ∨V)`.
#[derive(Clone, Debug, Serialize)]
pub struct GapComparison {
    pub gamma_uv: f64,
    pub gamma_hat_check: f64,
    pub k_const: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

/// `K^{-d} gamma(∧U, ∨V) <= gamma(U, V) <= K gamma(∧U, ∨V)^{1/d}` with
/// `K = Dbar_2^4 Dbar_d^3`. Needs the wedge norm exactly, so `l^p` mode is
/// limited to `d = 1` (where `∧U = U`).
pub fn gap_comparison(u: &Subspace, v: &Subspace, ns: &NormSpec) -> Result<GapComparison> {
    let n = ns.dim;
    let d = u.dim();
    if d + v.dim() != n || !u.is_transverse(v) {
        return Err(Error::NotComplementary("U and V do not split the space".into()));
    }
    let k_const = norms::simplified_distortion(2.min(n), ns)?.upper.powi(4)
        * norms::simplified_distortion(d, ns)?.upper.powi(3);
    let gamma_uv = subspace_geometry::min_gap(u, v, ns)?.value;
    let gamma_hat_check = if d == 1 {
        gamma_uv
    } else if ns.is_euclidean() {
        let hu = hat_space(u)?;
        let cv = check_space(v)?;
        subspace_geometry::min_gap(&hu, &cv, &NormSpec::hilbert(binomial(n, d)))?.value
    } else {
        return Err(Error::Unsupported("wedge gaps need the Euclidean wedge norm".into()));
    };
    let tol = 1e-12;
    let dd = d as f64;
    Ok(GapComparison {
        gamma_uv,
        gamma_hat_check,
        k_const,
        lower_holds: k_const.powf(-dd) * gamma_hat_check <= gamma_uv * (1.0 + tol) + tol,
        upper_holds: gamma_uv <= k_const * gamma_hat_check.powf(1.0 / dd) * (1.0 + tol) + tol,
    })
}

/// `Theta^` on the hyperplane `∨V0` with values in the line `∧U0`.
#[derive(Clone, Debug, Serialize)]
pub struct WedgeGraphNorm {
    pub theta_hat_norm: f64,
    pub theta_perp_norm: f64,
    pub frame_constant: f64,
    pub sigma_d_x: f64,
    pub bound: f64,
    pub holds: bool,
    /// Graph of `Theta^` equals `∨V` to this Euclidean gap.
    pub graph_defect: f64,
}

/// For the frame `U0 = span(u)`, `V0 = ker(eta)` (`eta^T u = I`) and
/// `Theta^perp : V0^perp -> U0^perp`, builds
/// `Theta^(w) = -<∧(eta_i + Theta^perp eta_i) | w> ∧u` and checks
/// `||Theta^|| <= C^{2d} Sigma_d(X) ||Theta^perp|| (1 + ||Theta^perp||)^{d-1}`.
/// The wedge norm is Euclidean, so `l^p` mode requires `d = 1`.
pub fn wedge_graph_norm(theta_perp: &GraphOperator, u: &DMatrix<f64>, ns: &NormSpec) -> Result<WedgeGraphNorm> {
    let (n, d) = u.shape();
    let eta = &theta_perp.domain_basis;
    if eta.shape() != (n, d) {
        return Err(Error::DimensionMismatch { expected: d, got: eta.ncols() });
    }
    if (eta.transpose() * u - DMatrix::identity(d, d)).amax() > 1e-9 {
        return Err(Error::InvalidArgument("frame covectors are not dual to the frame vectors".into()));
    }
    if !ns.is_euclidean() && d > 1 {
        return Err(Error::Unsupported("wedge graph norms need the Euclidean wedge norm".into()));
    }
    let u0 = Subspace::from_basis(u)?;
    let v0 = Subspace::from_annihilator(eta)?;
    let g_uv = subspace_geometry::min_gap(&u0, &v0, ns)?.lower;
    let g_vu = subspace_geometry::min_gap(&v0, &u0, ns)?.lower;
    if g_uv <= 0.0 || g_vu <= 0.0 {
        return Err(Error::NotComplementary("frame is not a splitting".into()));
    }
    let frame_constant = svd_split::auerbach_constant(u, eta, ns).max(1.0 / g_uv).max(1.0 / g_vu);
    let eta_new = eta + theta_perp.action();
    let theta_perp_norm = theta_perp.norm().lower;
    let sigma_d_x = identity_jacobian_upper(d, ns)?;

    let wu = wedge_vectors(u)?;
    let weta = wedge_vectors(eta)?;
    let weta_new = wedge_vectors(&eta_new)?;
    let (theta_hat_norm, graph_defect) = if d == 1 && !ns.is_euclidean() {
        let bv = v0.basis();
        let functional = bv.transpose() * &weta_new;
        let l = DMatrix::from_fn(n, bv.ncols(), |i, j| -u[(i, 0)] * functional[j]);
        let nrm = norms::restricted_norm(&l, bv, ns.p, ns.p).lower;
        let graph = Subspace::span(&(bv + &l));
        let target = Subspace::from_annihilator(&eta_new)?;
        let e = NormSpec::hilbert(n);
        (nrm, subspace_geometry::symmetric_gap(&graph, &target, &e)?)
    } else {
        let m = wu.len();
        let check0 = Subspace::from_annihilator(&DMatrix::from_column_slice(m, 1, weta.as_slice()))?;
        let bv = check0.basis();
        let functional = bv.transpose() * &weta_new;
        let theta_hat_norm = functional.norm() * wu.norm();
        let action = DMatrix::from_fn(m, bv.ncols(), |i, j| -wu[i] * functional[j]);
        let graph = Subspace::span(&(bv + &action));
        let target = Subspace::from_annihilator(&DMatrix::from_column_slice(m, 1, weta_new.as_slice()))?;
        let e = NormSpec::hilbert(m);
        (theta_hat_norm, subspace_geometry::symmetric_gap(&graph, &target, &e)?)
    };
    let dd = d as i32;
    let bound = frame_constant.powi(2 * dd) * sigma_d_x * theta_perp_norm * (1.0 + theta_perp_norm).powi(dd - 1);
    Ok(WedgeGraphNorm {
        theta_hat_norm,
        theta_perp_norm,
        frame_constant,
        sigma_d_x,
        bound,
        holds: theta_hat_norm <= bound * (1.0 + 1e-12) + 1e-14,
        graph_defect,
    })
}

/// `Π σ_i(BA) / (σ_i(A) σ_i(B))` against `gamma(∧U~_A, ∨V_B)` (Hilbert
/// mode, where the wedge-level constant is 1).
#[derive(Clone, Debug, Serialize)]
pub struct FbiLowerBound {
    pub log_ratio: f64,
    pub gamma: f64,
    pub holds: bool,
}

pub fn bound_below_fbi(a: &DMatrix<f64>, b: &DMatrix<f64>, d: usize, ns: &NormSpec) -> Result<FbiLowerBound> {
    if !ns.is_euclidean() {
        return Err(Error::Unsupported("wedge-level gaps need the Euclidean wedge norm".into()));
    }
    let n = ns.dim;
    let sa = svd_split::split(a, d, ns, 0.0)?;
    let sb = svd_split::split(b, d, ns, 0.0)?;
    let log_sum = |m: &DMatrix<f64>| linalg::svd(m).s[..d].iter().map(|s| s.ln()).sum::<f64>();
    let log_ratio = log_sum(&(b * a)) - log_sum(a) - log_sum(b);
    let hu = hat_space(&sa.u_tilde)?;
    let cv = check_space(&sb.v)?;
    let gamma = subspace_geometry::min_gap(&hu, &cv, &NormSpec::hilbert(binomial(n, d)))?.value;
    Ok(FbiLowerBound { log_ratio, gamma, holds: log_ratio >= gamma.ln() - 1e-10 })
}
