//! Independent brute-force references for tests.
//!
//! Nothing here calls the main-path modules' algorithms: projectors, gaps,
//! Jacobians and exterior powers are recomputed from their textbook
//! definitions (eigenvalues of Gram matrices, Laplace expansion, sphere
//! sampling). Only the `Cocycle` container is shared, to hand generated
//! windows to the pipeline.

use crate::cocycle::Cocycle;
use crate::error::{Error, Result};
use crate::norms::NormSpec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    PrincipalAngles,
    SphereMultistart,
    NaiveProduct,
    ClosedForm,
    ConvexSolve,
}

/// `discrepancy = |oracle - main|`.
#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub quantity: String,
    pub oracle_value: f64,
    pub main_value: f64,
    pub discrepancy: f64,
    pub method: OracleMethod,
}

impl OracleReport {
    pub fn new(quantity: &str, oracle_value: f64, main_value: f64, method: OracleMethod) -> Self {
        Self {
            quantity: quantity.to_string(),
            oracle_value,
            main_value,
            discrepancy: (oracle_value - main_value).abs(),
            method,
        }
    }
}

fn pnorm(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else {
        x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn conj(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Modified Gram-Schmidt with one reorthogonalization pass; columns whose
/// residual falls below `1e-10` of their norm are dropped.
pub fn gram_schmidt(cols: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cols.nrows();
    let mut out: Vec<DVector<f64>> = Vec::new();
    for c in cols.column_iter() {
        let mut v = c.into_owned();
        let start = v.norm();
        for _ in 0..2 {
            for q in &out {
                let t = q.dot(&v);
                v -= q * t;
            }
        }
        let r = v.norm();
        if start > 0.0 && r > 1e-10 * start {
            out.push(v / r);
        }
    }
    let mut m = DMatrix::zeros(n, out.len());
    for (j, q) in out.iter().enumerate() {
        m.set_column(j, q);
    }
    m
}

/// Orthogonal projector onto the column span.
pub fn projector(cols: &DMatrix<f64>) -> DMatrix<f64> {
    let q = gram_schmidt(cols);
    &q * q.transpose()
}

/// Orthonormal basis of the orthogonal complement of the column span.
pub fn orthogonal_complement(cols: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cols.nrows();
    let mut all = gram_schmidt(cols);
    let k = all.ncols();
    let mut extra = Vec::new();
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let cand = DMatrix::from_fn(n, all.ncols() + 1, |r, c| if c < all.ncols() { all[(r, c)] } else { e[r] });
        let q = gram_schmidt(&cand);
        if q.ncols() > all.ncols() {
            extra.push(q.column(q.ncols() - 1).into_owned());
            all = q;
        }
    }
    let mut m = DMatrix::zeros(n, n - k);
    for (j, v) in extra.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let s = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    ev
}

/// Principal angles between two column spans, ascending.
pub fn principal_angles(m: &DMatrix<f64>, n: &DMatrix<f64>) -> Vec<f64> {
    let qm = gram_schmidt(m);
    let qn = gram_schmidt(n);
    let c = qm.transpose() * &qn;
    let k = qm.ncols().min(qn.ncols());
    let g = if qm.ncols() <= qn.ncols() { &c * c.transpose() } else { c.transpose() * &c };
    let mut angles: Vec<f64> = sym_eigenvalues(&g).iter().take(k).map(|l| l.clamp(0.0, 1.0).sqrt().acos()).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    angles
}

/// Hilbert `delta(M, N) = ||(I - P_N) P_M||`.
pub fn hilbert_max_gap(m: &DMatrix<f64>, n: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    let qm = gram_schmidt(m);
    if qm.ncols() == 0 {
        return 0.0;
    }
    let r = (DMatrix::identity(dim, dim) - projector(n)) * &qm;
    sym_eigenvalues(&(r.transpose() * &r))[0].max(0.0).sqrt()
}

/// Hilbert `gamma(M, N)`: smallest singular value of `(I - P_N)` on `M`.
pub fn hilbert_min_gap(m: &DMatrix<f64>, n: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    let qm = gram_schmidt(m);
    if qm.ncols() == 0 {
        return 1.0;
    }
    let r = (DMatrix::identity(dim, dim) - projector(n)) * &qm;
    sym_eigenvalues(&(r.transpose() * &r)).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Hilbert `log Sigma_d(A)` from the eigenvalues of `A^T A`.
pub fn hilbert_log_jacobian(a: &DMatrix<f64>, d: usize) -> f64 {
    hilbert_singular_values(a).iter().take(d).map(|s| s.ln()).sum()
}

/// Hilbert singular values by one-sided Jacobi rotations, descending.
/// Column norms of the converged iterate keep small singular values
/// accurate relative to themselves, unlike eigenvalues of `A^T A`.
pub fn hilbert_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut u = a.clone();
    let n = u.ncols();
    for _ in 0..100 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = u.column(i).norm_squared();
                let beta = u.column(j).norm_squared();
                let gamma = u.column(i).dot(&u.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..u.nrows() {
                    let (x, y) = (u[(r, i)], u[(r, j)]);
                    u[(r, i)] = c * x - s * y;
                    u[(r, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).expect("finite singular values"));
    sv.truncate(a.nrows().min(n));
    sv
}

/// Determinant by cofactor expansion along the first row.
pub fn laplace_det(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    match n {
        0 => 1.0,
        1 => a[(0, 0)],
        2 => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        _ => {
            let mut s = 0.0;
            for j in 0..n {
                if a[(0, j)] == 0.0 {
                    continue;
                }
                let minor = DMatrix::from_fn(n - 1, n - 1, |r, c| a[(r + 1, if c < j { c } else { c + 1 })]);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                s += sign * a[(0, j)] * laplace_det(&minor);
            }
            s
        }
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// `∧^d A` in the lexicographic basis, entries by Laplace expansion.
pub fn wedge_laplace(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let rows = subsets(a.nrows(), d);
    let cols = subsets(a.ncols(), d);
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        laplace_det(&DMatrix::from_fn(d, d, |r, c| a[(rows[i][r], cols[j][c])]))
    })
}

/// `A_{k+n-1} ... A_k` by plain multiplication.
pub fn naive_product(ops: &[DMatrix<f64>], start: usize, n: usize) -> DMatrix<f64> {
    let dim = ops[0].nrows();
    let mut p = DMatrix::identity(dim, dim);
    for a in &ops[start..start + n] {
        p = a * p;
    }
    p
}

/// Unit vectors of `R^dim` for `dim <= 3`: both signs for `dim = 1`, an
/// equiangular circle for 2, a Fibonacci sphere for 3.
pub fn sphere_points(dim: usize, count: usize) -> Result<Vec<DVector<f64>>> {
    match dim {
        1 => Ok(vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)]),
        2 => Ok((0..count)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / count as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect()),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            Ok((0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    DVector::from_vec(vec![r * t.cos(), r * t.sin(), z])
                })
                .collect())
        }
        _ => Err(Error::Cap(format!("sphere sampling supports dimension <= 3, got {dim}"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

/// Best value found and the spread of the objective at grid-spacing
/// perturbations of the optimum.
#[derive(Clone, Debug)]
pub struct SphereResult {
    pub value: f64,
    pub resolution: f64,
    pub argbest: DVector<f64>,
}

/// Extremizes `f(x)` over `x = B c / ||B c||_p` with `c` on the Euclidean
/// unit sphere of coefficient space (`B` has at most 3 columns, ambient
/// dimension at most 8): grid, then compass refinement from the 5 best
/// grid points.
pub fn sphere_extremize(
    basis: &DMatrix<f64>,
    p: f64,
    f: impl Fn(&DVector<f64>) -> f64,
    mode: Extremum,
) -> Result<SphereResult> {
    let k = basis.ncols();
    if basis.nrows() > 8 {
        return Err(Error::Cap(format!("ambient dimension {} exceeds 8", basis.nrows())));
    }
    let count = match k {
        1 => 2,
        2 => 720,
        _ => 6000,
    };
    let sign = if mode == Extremum::Max { 1.0 } else { -1.0 };
    let eval = |c: &DVector<f64>| {
        let x = basis * c;
        let nx = pnorm(x.as_slice(), p);
        if nx == 0.0 {
            f64::NEG_INFINITY
        } else {
            sign * f(&(x / nx))
        }
    };
    let pts = sphere_points(k, count)?;
    let mut scored: Vec<(f64, DVector<f64>)> = pts.into_iter().map(|c| (eval(&c), c)).collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let spacing = match k {
        1 => 0.0,
        2 => std::f64::consts::TAU / count as f64,
        _ => (4.0 * std::f64::consts::PI / count as f64).sqrt(),
    };
    let mut best = scored[0].clone();
    if k > 1 {
        for (v0, c0) in scored.iter().take(5) {
            let (mut v, mut c) = (*v0, c0.clone());
            let mut step = spacing;
            while step > 1e-13 {
                let mut moved = false;
                for i in 0..k {
                    for s in [-1.0, 1.0] {
                        let mut t = c.clone();
                        t[i] += s * step;
                        let t = &t / t.norm();
                        let val = eval(&t);
                        if val > v {
                            v = val;
                            c = t;
                            moved = true;
                        }
                    }
                }
                if !moved {
                    step *= 0.5;
                }
            }
            if v > best.0 {
                best = (v, c);
            }
        }
    }
    let mut resolution = 0.0f64;
    if k > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0_5a3e);
        for _ in 0..16 {
            let dir = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
            let t = &best.1 + dir * (spacing / k as f64);
            let t = &t / t.norm();
            resolution = resolution.max((eval(&t) - best.0).abs());
        }
    }
    let x = basis * &best.1;
    let nx = pnorm(x.as_slice(), p);
    Ok(SphereResult { value: sign * best.0, resolution, argbest: x / nx })
}

/// Directions along which `k - 1` of the kink hyperplanes of the
/// piecewise-linear objective stay fixed (`l^1`: `r_i = 0`; `l^inf`:
/// `r_i = ± r_j`), so pattern search can slide along creases.
fn crease_directions(q: &DMatrix<f64>, p: f64) -> Vec<DVector<f64>> {
    let (n, k) = q.shape();
    if k < 2 || !(p == 1.0 || p.is_infinite()) {
        return vec![];
    }
    let mut normals: Vec<DVector<f64>> = Vec::new();
    if p == 1.0 {
        normals.extend((0..n).map(|i| q.row(i).transpose()));
    } else {
        for i in 0..n {
            for j in i + 1..n {
                normals.push((q.row(i) - q.row(j)).transpose());
                normals.push((q.row(i) + q.row(j)).transpose());
            }
        }
    }
    let mut out = Vec::new();
    for set in subsets(normals.len(), k - 1) {
        let rows = DMatrix::from_fn(k - 1, k, |r, c| normals[set[r]][c]);
        let dir = DVector::from_fn(k, |j, _| {
            let minor = DMatrix::from_fn(k - 1, k - 1, |r, c| rows[(r, if c < j { c } else { c + 1 })]);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * laplace_det(&minor)
        });
        let nd = dir.norm();
        if nd > 1e-12 {
            out.push(dir / nd);
        }
    }
    out
}

/// `min_a ||u - N a||_p` by compass search from the least-squares point,
/// with crease directions for the polyhedral norms.
pub fn lp_distance(u: &DVector<f64>, n_basis: &DMatrix<f64>, p: f64) -> f64 {
    let k = n_basis.ncols();
    if k == 0 {
        return pnorm(u.as_slice(), p);
    }
    let q = gram_schmidt(n_basis);
    let k = q.ncols();
    let creases = crease_directions(&q, p);
    let obj = |a: &DVector<f64>| pnorm((u - &q * a).as_slice(), p);
    let mut a = q.transpose() * u;
    let mut v = obj(&a);
    let mut step = u.amax().max(1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(0xd157);
    while step > 1e-14 * u.amax().max(1e-300) {
        let mut moved = false;
        for i in 0..k {
            for s in [-1.0, 1.0] {
                let mut t = a.clone();
                t[i] += s * step;
                let val = obj(&t);
                if val < v {
                    v = val;
                    a = t;
                    moved = true;
                }
            }
        }
        for dir in &creases {
            for s in [-1.0, 1.0] {
                let t = &a + dir * (s * step);
                let val = obj(&t);
                if val < v {
                    v = val;
                    a = t;
                    moved = true;
                }
            }
        }
        for _ in 0..2 * k {
            let dir = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
            let t = &a + dir * step;
            let val = obj(&t);
            if val < v {
                v = val;
                a = t;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    v
}

/// `sup <phi | u>` over unit `phi` in `l^q` annihilating `N`, by sphere
/// sampling over the annihilator (codimension at most 3).
pub fn lp_distance_dual(u: &DVector<f64>, n_basis: &DMatrix<f64>, p: f64) -> Result<SphereResult> {
    let ann = orthogonal_complement(n_basis);
    sphere_extremize(&ann, conj(p), |phi| phi.dot(u), Extremum::Max)
}

/// `delta(M, N)` in `l^p` by sampling the unit sphere of `M`.
pub fn lp_max_gap(m_basis: &DMatrix<f64>, n_basis: &DMatrix<f64>, p: f64) -> Result<SphereResult> {
    sphere_extremize(&gram_schmidt(m_basis), p, |x| lp_distance(x, n_basis, p), Extremum::Max)
}

/// `gamma(M, N)` in `l^p` by sampling the unit sphere of `M`.
pub fn lp_min_gap(m_basis: &DMatrix<f64>, n_basis: &DMatrix<f64>, p: f64) -> Result<SphereResult> {
    sphere_extremize(&gram_schmidt(m_basis), p, |x| lp_distance(x, n_basis, p), Extremum::Min)
}

/// `sup ||L c||_p / ||B c||_p`, where `L` acts on coefficients of `B`.
pub fn lp_restricted_norm(l: &DMatrix<f64>, b: &DMatrix<f64>, p: f64) -> Result<SphereResult> {
    let k = b.ncols();
    if k > 3 {
        return Err(Error::Cap(format!("subspace dimension {k} exceeds 3")));
    }
    let eye = DMatrix::<f64>::identity(k, k);
    sphere_extremize(
        &eye,
        2.0,
        |c| pnorm((l * c).as_slice(), p) / pnorm((b * c).as_slice(), p),
        Extremum::Max,
    )
}

/// Rotation by `angle` in the plane of coordinates `(i, j)`.
pub fn givens(n: usize, i: usize, j: usize, angle: f64) -> DMatrix<f64> {
    let mut g = DMatrix::identity(n, n);
    let (s, c) = angle.sin_cos();
    g[(i, i)] = c;
    g[(j, j)] = c;
    g[(i, j)] = -s;
    g[(j, i)] = s;
    g
}

/// Haar-like random rotation: Gram-Schmidt of a uniform matrix, with the
/// determinant fixed to `+1`.
pub fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut q = gram_schmidt(&m);
        if q.ncols() == n {
            if laplace_det(&q) < 0.0 {
                q.column_mut(0).neg_mut();
            }
            return q;
        }
    }
}

/// A window with analytic fast and slow spaces.
#[derive(Clone, Debug)]
pub struct ConjugatedHyperbolic {
    pub cocycle: Cocycle,
    /// `E_k` bases for `k = offset ..= offset + L` (one more than operators).
    pub fast: Vec<DMatrix<f64>>,
    pub slow: Vec<DMatrix<f64>>,
}

/// `A_k = R_{k+1} D R_k^{-1}` with `D = diag(e^{lambda})`, for rotations
/// `R_{k0}, ..., R_{k0+L}`. Truth: `E_k = R_k span(e_1..e_d)`,
/// `F_k = R_k span(e_{d+1}..e_n)`. Rates must be non-increasing with
/// `lambda_d - lambda_{d+1} >= 1e-3`.
pub fn conjugated_hyperbolic(
    rotations: &[DMatrix<f64>],
    log_rates: &[f64],
    d: usize,
    offset: i64,
    ns: NormSpec,
) -> Result<ConjugatedHyperbolic> {
    let n = log_rates.len();
    if d == 0 || d >= n {
        return Err(Error::InvalidArgument(format!("index d = {d} outside 1..{n}")));
    }
    if log_rates.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument("rates must be non-increasing".into()));
    }
    if log_rates[d - 1] - log_rates[d] < 1e-3 {
        return Err(Error::InvalidArgument("rate separation below 1e-3".into()));
    }
    if rotations.len() < 3 {
        return Err(Error::InvalidArgument("need at least three rotations".into()));
    }
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(n, log_rates.iter().map(|l| l.exp())));
    let ops = rotations.windows(2).map(|w| &w[1] * &diag * w[0].transpose()).collect();
    let fast = rotations.iter().map(|r| r.columns(0, d).into_owned()).collect();
    let slow = rotations.iter().map(|r| r.columns(d, n - d).into_owned()).collect();
    Ok(ConjugatedHyperbolic { cocycle: Cocycle::new(offset, ops, ns)?, fast, slow })
}
