//! Dense helpers shared by the main computational paths.

use nalgebra::{DMatrix, DVector};
use std::cmp::Ordering;

/// Singular value decomposition `a = u diag(s) v^T` with `s` non-increasing.
///
/// Thin for non-square input. Each right singular vector has its first
/// nonzero entry positive; equal singular values are ordered by the
/// lexicographic order of their right vectors.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    let r = m.min(n);
    if r == 0 {
        return Svd { u: DMatrix::zeros(m, 0), s: vec![], v: DMatrix::zeros(n, 0) };
    }
    let (u, s_raw, v) = raw_svd(a);
    let mut triples: Vec<(f64, DVector<f64>, DVector<f64>)> = (0..r)
        .map(|i| {
            let mut ui = u.column(i).into_owned();
            let mut vi = v.column(i).into_owned();
            if let Some(x) = vi.iter().find(|x| x.abs() > 1e-14) {
                if *x < 0.0 {
                    ui.neg_mut();
                    vi.neg_mut();
                }
            }
            (s_raw[i], ui, vi)
        })
        .collect();
    triples.sort_by(|a, b| match b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal) {
        Ordering::Equal => lex_cmp(a.2.as_slice(), b.2.as_slice()),
        o => o,
    });
    let mut uo = DMatrix::zeros(m, r);
    let mut vo = DMatrix::zeros(n, r);
    let mut s = Vec::with_capacity(r);
    for (i, (si, ui, vi)) in triples.into_iter().enumerate() {
        uo.set_column(i, &ui);
        vo.set_column(i, &vi);
        s.push(si);
    }
    Svd { u: uo, s, v: vo }
}

/// Unordered thin SVD. The LAPACK-free bidiagonal solver can return an
/// inconsistent factorization on some rank-deficient inputs, so its output is
/// checked and replaced by one-sided Jacobi when the check fails.
fn raw_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let dec = a.clone().svd(true, true);
    let u = dec.u.expect("u requested");
    let v = dec.v_t.expect("v_t requested").transpose();
    let s: Vec<f64> = dec.singular_values.iter().copied().collect();
    if factorization_ok(a, &u, &s, &v) {
        return (u, s, v);
    }
    jacobi_svd(a)
}

fn factorization_ok(a: &DMatrix<f64>, u: &DMatrix<f64>, s: &[f64], v: &DMatrix<f64>) -> bool {
    let (m, n) = a.shape();
    let scale = a.amax();
    if !scale.is_finite() || s.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return false;
    }
    let sd = DMatrix::from_diagonal(&DVector::from_column_slice(s));
    let recon = (u * sd * v.transpose() - a).amax();
    let r = s.len();
    let ortho = |q: &DMatrix<f64>| (q.transpose() * q - DMatrix::identity(r, r)).amax();
    recon <= 1e-12 * (m + n) as f64 * scale && ortho(u) <= 1e-10 && ortho(v) <= 1e-10
}

/// One-sided (Hestenes) Jacobi SVD, thin and unordered.
fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v) = jacobi_svd(&a.transpose());
        return (v, s, u);
    }
    let mut b = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = b.column(p).norm_squared();
                let beta = b.column(q).norm_squared();
                let gamma = b.column(p).dot(&b.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate_columns(&mut b, p, q, c, sn);
                rotate_columns(&mut v, p, q, c, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    let s: Vec<f64> = (0..n).map(|i| b.column(i).norm()).collect();
    let smax = s.iter().copied().fold(0.0, f64::max);
    let floor = smax * f64::EPSILON * m as f64;
    let mut u = DMatrix::zeros(m, n);
    let mut filled = vec![false; n];
    for i in 0..n {
        if s[i] > floor {
            u.set_column(i, &(b.column(i) / s[i]));
            filled[i] = true;
        }
    }
    // Directions with no column mass get an orthonormal completion.
    let mut e = 0;
    for i in 0..n {
        if filled[i] {
            continue;
        }
        while e < m {
            let mut x = DVector::zeros(m);
            x[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for j in 0..n {
                    if filled[j] {
                        let c = u.column(j).dot(&x);
                        x -= u.column(j) * c;
                    }
                }
            }
            let nx = x.norm();
            if nx > 0.5 {
                u.set_column(i, &(x / nx));
                filled[i] = true;
                break;
            }
        }
    }
    (u, s, v)
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let x = m[(r, p)];
        let y = m[(r, q)];
        m[(r, p)] = c * x - s * y;
        m[(r, q)] = s * x + c * y;
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    svd(a).s[0]
}

/// Smallest singular value over the column space dimension `ncols`.
/// Zero when `ncols > nrows`.
pub fn min_singular(a: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return f64::INFINITY;
    }
    if a.ncols() > a.nrows() {
        return 0.0;
    }
    svd(a).s.last().copied().unwrap_or(0.0)
}

/// Orthonormal basis of the column space, dropping directions with singular
/// value below `rel_tol * s_max`.
pub fn orthonormal_basis(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let dec = svd(a);
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let k = dec.s.iter().filter(|&&s| smax > 0.0 && s > rel_tol * smax).count();
    dec.u.columns(0, k).into_owned()
}

/// Numerical rank with relative tolerance.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    orthonormal_basis(a, rel_tol).ncols()
}

/// Orthonormal basis of the Euclidean orthogonal complement of the span of
/// the orthonormal columns `q` inside `R^n`.
pub fn complement(q: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let k = q.ncols();
    if k == 0 {
        return DMatrix::identity(n, n);
    }
    if k >= n {
        return DMatrix::zeros(n, 0);
    }
    // Householder QR of [q | I]: the trailing columns of the full factor
    // are orthogonal to q to working precision (forming I - q q^T is not).
    let mut stacked = DMatrix::zeros(n, k + n);
    stacked.columns_mut(0, k).copy_from(q);
    stacked.columns_mut(k, n).fill_with_identity();
    let full = stacked.qr().q();
    let mut c = full.columns(k, n - k).into_owned();
    // Canonical sign: first non-negligible entry positive.
    for mut col in c.column_iter_mut() {
        if let Some(x) = col.iter().copied().find(|x| x.abs() > 1e-14) {
            if x < 0.0 {
                col.neg_mut();
            }
        }
    }
    c
}

/// Solves `a x = b` for square `a`, `None` when `a` is numerically singular.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return None;
    }
    if n == 0 {
        return Some(DMatrix::zeros(0, b.ncols()));
    }
    let scale: f64 = a.row_iter().map(|r| r.norm()).product();
    let lu = a.clone().lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() <= 1e-13 * scale {
        return None;
    }
    lu.solve(b)
}

pub fn solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    solve(a, &bm).map(|x| x.column(0).into_owned())
}

/// Least-squares solution of `w a = r` via the pseudo-inverse.
pub fn least_squares(w: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    if w.ncols() == 0 {
        return DVector::zeros(0);
    }
    let dec = svd(w);
    let smax = dec.s[0];
    let mut x = DVector::zeros(w.ncols());
    for (i, &si) in dec.s.iter().enumerate() {
        if si > 1e-14 * smax.max(f64::MIN_POSITIVE) {
            let c = dec.u.column(i).dot(r) / si;
            x += dec.v.column(i) * c;
        }
    }
    x
}

/// Matrix inverse, `None` only if exactly singular or non-finite.
pub fn inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let inv = a.clone().try_inverse()?;
    inv.iter().all(|x| x.is_finite()).then_some(inv)
}

/// Determinant by partial-pivot LU, switching to fraction-free (Bareiss)
/// elimination when entries exceed `1e8` in magnitude.
pub fn det(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 1.0;
    }
    if a.amax() > 1e8 {
        return det_bareiss(a);
    }
    a.clone().lu().determinant()
}

pub fn det_bareiss(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut m = a.clone();
    let mut sign = 1.0;
    let mut prev = 1.0;
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| m[(i, k)].abs().partial_cmp(&m[(j, k)].abs()).unwrap_or(Ordering::Equal))
            .unwrap_or(k);
        if m[(piv, k)] == 0.0 {
            return 0.0;
        }
        if piv != k {
            m.swap_rows(piv, k);
            sign = -sign;
        }
        for i in (k + 1)..n {
            for j in (k + 1)..n {
                m[(i, j)] = (m[(i, j)] * m[(k, k)] - m[(i, k)] * m[(k, j)]) / prev;
            }
        }
        prev = m[(k, k)];
    }
    sign * m[(n - 1, n - 1)]
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k));
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Compensated (Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Columns `idx` of `a`.
pub fn select_columns(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])])
}

/// Rows `idx` of `a`.
pub fn select_rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

/// Covectors `eta` with `eta^T basis = I` and `eta^T other = 0`, for a
/// direct-sum frame `[basis | other]` of `R^n`.
pub fn dual_frame(basis: &DMatrix<f64>, other: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let d = basis.ncols();
    let n = basis.nrows();
    if d + other.ncols() != n {
        return None;
    }
    let mut frame = DMatrix::zeros(n, n);
    frame.columns_mut(0, d).copy_from(basis);
    frame.columns_mut(d, n - d).copy_from(other);
    let inv = inverse(&frame)?;
    let t = inv.transpose();
    Some((t.columns(0, d).into_owned(), t.columns(d, n - d).into_owned()))
}

/// Generalized cross product of the `k - 1` rows of `rows` (`(k-1) x k`):
/// `c_j = (-1)^j det(rows without column j)`. Spans the null space when it
/// is one-dimensional and vanishes otherwise.
pub fn cross_product(rows: &DMatrix<f64>) -> DVector<f64> {
    let k = rows.ncols();
    if k == 1 {
        return DVector::from_element(1, 1.0);
    }
    DVector::from_fn(k, |j, _| {
        let cols: Vec<usize> = (0..k).filter(|&c| c != j).collect();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sign * det(&select_columns(rows, &cols))
    })
}
