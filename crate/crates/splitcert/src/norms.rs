//! Norm specifications on `R^n` and the convex primitives built on them.
//!
//! Every `l^p` computation reduces to three convex problems solved here:
//! the distance from a point to a subspace, the maximum of a linear
//! functional over a section of the unit ball, and (by multistart power
//! iteration) the norm of an operator restricted to a subspace. For
//! `p in {1, inf}` the sections are polytopes and the first two are solved
//! exactly by vertex enumeration.

use crate::error::{Error, Result};
use crate::linalg::{self, combinations};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    Lp,
    /// Euclidean norm with exact (SVD-based) algorithms downstream.
    Hilbert,
}

/// A norm on `R^dim`. Hilbert mode has the value of `p = 2` but selects
/// exact algorithms everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormSpecRepr", into = "NormSpecRepr")]
pub struct NormSpec {
    pub kind: NormKind,
    pub p: f64,
    pub dim: usize,
}

#[derive(Serialize, Deserialize)]
struct NormSpecRepr {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<PRepr>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<NormSpecRepr> for NormSpec {
    type Error = Error;

    fn try_from(r: NormSpecRepr) -> Result<Self> {
        match r.kind.as_str() {
            "hilbert" => Ok(NormSpec::hilbert(r.dim)),
            "lp" => {
                let p = match r.p {
                    Some(PRepr::Num(x)) => x,
                    Some(PRepr::Text(t)) if t == "inf" => f64::INFINITY,
                    Some(PRepr::Text(t)) => return Err(Error::Parse(format!("bad exponent {t:?}"))),
                    None => return Err(Error::Parse("lp norm needs an exponent".into())),
                };
                NormSpec::lp(p, r.dim)
            }
            other => Err(Error::Parse(format!("unknown norm type {other:?}"))),
        }
    }
}

impl From<NormSpec> for NormSpecRepr {
    fn from(n: NormSpec) -> Self {
        match n.kind {
            NormKind::Hilbert => NormSpecRepr { kind: "hilbert".into(), p: None, dim: n.dim },
            NormKind::Lp => NormSpecRepr {
                kind: "lp".into(),
                p: Some(if n.p.is_infinite() { PRepr::Text("inf".into()) } else { PRepr::Num(n.p) }),
                dim: n.dim,
            },
        }
    }
}

impl NormSpec {
    pub fn hilbert(dim: usize) -> Self {
        NormSpec { kind: NormKind::Hilbert, p: 2.0, dim }
    }

    pub fn lp(p: f64, dim: usize) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("exponent must be >= 1, got {p}")));
        }
        Ok(NormSpec { kind: NormKind::Lp, p, dim })
    }

    /// Parses `hilbert`, `lp:<p>` or `lp:inf`.
    pub fn parse(flag: &str, dim: usize) -> Result<Self> {
        if flag == "hilbert" {
            return Ok(Self::hilbert(dim));
        }
        let rest = flag
            .strip_prefix("lp:")
            .ok_or_else(|| Error::Parse(format!("norm flag {flag:?}")))?;
        let p = if rest == "inf" {
            f64::INFINITY
        } else {
            rest.parse::<f64>().map_err(|_| Error::Parse(format!("norm exponent {rest:?}")))?
        };
        Self::lp(p, dim)
    }

    pub fn with_dim(self, dim: usize) -> Self {
        NormSpec { dim, ..self }
    }

    pub fn is_hilbert(&self) -> bool {
        self.kind == NormKind::Hilbert
    }

    /// True when the norm is Euclidean in value (Hilbert or `p = 2`).
    pub fn is_euclidean(&self) -> bool {
        self.p == 2.0
    }

    /// Exponent of the dual norm, `1/p + 1/q = 1`.
    pub fn q(&self) -> f64 {
        conjugate(self.p)
    }

    /// Norm of the dual space `X*`.
    pub fn dual(&self) -> Self {
        NormSpec { p: self.q(), ..*self }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        lp_norm(x, self.p)
    }

    pub fn dual_norm(&self, phi: &[f64]) -> f64 {
        lp_norm(phi, self.q())
    }
}

pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// `||x||_p`, scaled by the max entry to avoid overflow.
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    if p.is_infinite() {
        m
    } else if p == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
    } else {
        m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

pub fn vector_norm(x: &[f64], ns: &NormSpec) -> Result<f64> {
    check_dim(x.len(), ns)?;
    Ok(ns.norm(x))
}

pub fn dual_norm(phi: &[f64], ns: &NormSpec) -> Result<f64> {
    check_dim(phi.len(), ns)?;
    Ok(ns.dual_norm(phi))
}

fn check_dim(len: usize, ns: &NormSpec) -> Result<()> {
    if len != ns.dim {
        return Err(Error::DimensionMismatch { expected: ns.dim, got: len });
    }
    Ok(())
}

/// Unit vector `x` in `l^p` with `<phi|x> = ||phi||_q`.
pub fn align(phi: &DVector<f64>, p: f64) -> DVector<f64> {
    let n = phi.len();
    let q = conjugate(p);
    let nq = lp_norm(phi.as_slice(), q);
    if nq == 0.0 {
        let mut e = DVector::zeros(n);
        if n > 0 {
            e[0] = 1.0;
        }
        return e;
    }
    if p == 1.0 {
        let i = phi.iamax();
        let mut e = DVector::zeros(n);
        e[i] = phi[i].signum();
        e
    } else if p.is_infinite() {
        phi.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 })
    } else {
        phi.map(|v| v.signum() * (v.abs() / nq).powf(q - 1.0))
    }
}

/// Result of `min_a ||r0 - W a||_p`.
#[derive(Clone, Debug)]
pub struct Nearest {
    pub value: f64,
    pub coeffs: DVector<f64>,
    pub residual: DVector<f64>,
}

fn evaluate(r0: &DVector<f64>, w: &DMatrix<f64>, a: DVector<f64>, p: f64) -> Nearest {
    let residual = r0 - w * &a;
    Nearest { value: lp_norm(residual.as_slice(), p), coeffs: a, residual }
}

/// `min_a ||r0 - W a||_p` for `W` with independent columns.
///
/// Exact for `p in {1, 2, inf}` (basic solutions of the linear programs are
/// enumerated); damped Newton on `sum |r_i|^p` otherwise.
pub fn nearest_point(r0: &DVector<f64>, w: &DMatrix<f64>, p: f64) -> Nearest {
    let n = r0.len();
    let m = w.ncols();
    if m == 0 {
        return evaluate(r0, w, DVector::zeros(0), p);
    }
    let ls = evaluate(r0, w, linalg::least_squares(w, r0), p);
    if p == 2.0 || m >= n {
        return ls;
    }
    let mut best = ls;
    let consider = |cand: Nearest, best: &mut Nearest| {
        if cand.value < best.value {
            *best = cand;
        }
    };
    if p == 1.0 {
        for rows in combinations(n, m) {
            let wz = linalg::select_rows(w, &rows);
            let rz = DVector::from_iterator(m, rows.iter().map(|&i| r0[i]));
            if let Some(a) = linalg::solve_vec(&wz, &rz) {
                consider(evaluate(r0, w, a, p), &mut best);
            }
        }
    } else if p.is_infinite() {
        for rows in combinations(n, m + 1) {
            for mask in 0..(1usize << m) {
                let mut sys = DMatrix::zeros(m + 1, m + 1);
                let mut rhs = DVector::zeros(m + 1);
                for (r, &i) in rows.iter().enumerate() {
                    for j in 0..m {
                        sys[(r, j)] = w[(i, j)];
                    }
                    let s = if r == 0 || mask & (1 << (r - 1)) == 0 { 1.0 } else { -1.0 };
                    sys[(r, m)] = s;
                    rhs[r] = r0[i];
                }
                if let Some(x) = linalg::solve_vec(&sys, &rhs) {
                    consider(evaluate(r0, w, x.rows(0, m).into_owned(), p), &mut best);
                }
            }
        }
    } else {
        let newton = newton_lp(r0, w, p, best.coeffs.clone());
        consider(newton, &mut best);
    }
    best
}

fn newton_lp(r0: &DVector<f64>, w: &DMatrix<f64>, p: f64, start: DVector<f64>) -> Nearest {
    let scale = r0.amax().max(f64::MIN_POSITIVE);
    let r0s = r0 / scale;
    let obj = |a: &DVector<f64>| -> f64 {
        (&r0s - w * a).iter().map(|v| v.abs().powf(p)).sum()
    };
    let mut a = start / scale;
    let mut f = obj(&a);
    for _ in 0..200 {
        let r = &r0s - w * &a;
        let rmax = r.amax();
        if rmax == 0.0 {
            break;
        }
        let floor = (1e-10 * rmax).powi(2);
        let g = -p * w.transpose() * r.map(|v| v.signum() * v.abs().powf(p - 1.0));
        let wts = r.map(|v| (v * v + floor).powf((p - 2.0) / 2.0));
        let mut h = w.transpose() * DMatrix::from_diagonal(&wts) * w * (p * (p - 1.0));
        let ridge = 1e-14 * h.diagonal().amax().max(f64::MIN_POSITIVE);
        for i in 0..h.nrows() {
            h[(i, i)] += ridge;
        }
        let step = match linalg::solve_vec(&h, &(-&g)) {
            Some(s) => s,
            None => -&g,
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let cand = &a + &step * t;
            let fc = obj(&cand);
            if fc <= f + 1e-4 * t * slope.min(0.0) {
                let rel = (f - fc) / f.max(f64::MIN_POSITIVE);
                a = cand;
                f = fc;
                improved = rel > 1e-15;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    evaluate(r0, w, a * scale, p)
}

/// Coefficient vectors `c` with `||B c||_p = 1` at the vertices of the
/// polytope `{c : ||B c||_p <= 1}`, one per antipodal pair. Only for
/// `p in {1, inf}` and `B` with independent columns.
pub fn section_vertices(b: &DMatrix<f64>, p: f64) -> Vec<DVector<f64>> {
    let (n, k) = b.shape();
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    if p.is_infinite() {
        for rows in combinations(n, k) {
            let bi = linalg::select_rows(b, &rows);
            for mask in 0..(1usize << (k - 1)) {
                let s = DVector::from_fn(k, |r, _| {
                    if r == 0 || mask & (1 << (r - 1)) == 0 { 1.0 } else { -1.0 }
                });
                if let Some(c) = linalg::solve_vec(&bi, &s) {
                    let v = lp_norm((b * &c).as_slice(), f64::INFINITY);
                    if v <= 1.0 + 1e-10 {
                        out.push(c / v);
                    }
                }
            }
        }
    } else if p == 1.0 {
        for rows in combinations(n, k - 1) {
            let bz = linalg::select_rows(b, &rows);
            let c = linalg::cross_product(&bz);
            let v = lp_norm((b * &c).as_slice(), 1.0);
            let cn = c.amax();
            if cn > 0.0 && v > 1e-13 * cn * b.amax() {
                out.push(c / v);
            }
        }
    }
    out
}

/// `max { <psi|c> : ||B c||_p <= 1 }` with a maximizer and a dual upper bound.
#[derive(Clone, Debug)]
pub struct SectionMax {
    pub value: f64,
    pub upper: f64,
    pub argmax: DVector<f64>,
}

/// `annihilator` must span the covectors vanishing on the columns of `b`.
pub fn max_linear_on_section(
    psi: &DVector<f64>,
    b: &DMatrix<f64>,
    annihilator: &DMatrix<f64>,
    p: f64,
) -> SectionMax {
    let k = b.ncols();
    if p == 1.0 || p.is_infinite() {
        let mut best = SectionMax { value: 0.0, upper: 0.0, argmax: DVector::zeros(k) };
        for c in section_vertices(b, p) {
            let v = psi.dot(&c);
            if v.abs() > best.value {
                best.value = v.abs();
                best.upper = v.abs();
                best.argmax = if v < 0.0 { -c } else { c };
            }
        }
        return best;
    }
    let g = b.transpose() * b;
    let Some(gi) = linalg::inverse(&g) else {
        return SectionMax { value: 0.0, upper: f64::INFINITY, argmax: DVector::zeros(k) };
    };
    let phi0 = b * (&gi * psi);
    let q = conjugate(p);
    let ext = nearest_point(&phi0, annihilator, q);
    let x = align(&ext.residual, p);
    let mut c = &gi * (b.transpose() * &x);
    let nb = lp_norm((b * &c).as_slice(), p);
    if nb > 0.0 {
        c /= nb;
    }
    SectionMax { value: psi.dot(&c), upper: ext.value, argmax: c }
}

/// A two-sided estimate `lower <= value <= upper`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

impl Bracket {
    pub fn exact(v: f64) -> Self {
        Bracket { lower: v, upper: v }
    }

    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `sup_c ||L c||_{p_out} / ||B c||_{p_in}` for `B` with independent columns.
///
/// Exact when `p_in in {1, inf}` or both exponents equal 2. Otherwise the
/// lower end comes from multistart nonlinear power iteration and the upper
/// end from the Euclidean norm and norm-equivalence constants.
pub fn restricted_norm(l: &DMatrix<f64>, b: &DMatrix<f64>, p_in: f64, p_out: f64) -> Bracket {
    restricted_norm_with_starts(l, b, p_in, p_out, &[]).0
}

/// As [`restricted_norm`], also returning a maximizing coefficient vector
/// (normalized to `||B c||_{p_in} = 1`). Power iteration is additionally
/// started from `extra_starts`, so the lower end is at least their values.
pub fn restricted_norm_with_starts(
    l: &DMatrix<f64>,
    b: &DMatrix<f64>,
    p_in: f64,
    p_out: f64,
    extra_starts: &[DVector<f64>],
) -> (Bracket, DVector<f64>) {
    let k = b.ncols();
    if k == 0 || l.nrows() == 0 {
        return (Bracket::exact(0.0), DVector::zeros(k));
    }
    if p_in == 1.0 || p_in.is_infinite() {
        let mut best = (0.0, DVector::zeros(k));
        for c in section_vertices(b, p_in) {
            let v = lp_norm((l * &c).as_slice(), p_out);
            if v > best.0 {
                best = (v, c);
            }
        }
        return (Bracket::exact(best.0), best.1);
    }
    let dec = linalg::svd(b);
    if dec.s.last().copied().unwrap_or(0.0) <= 0.0 {
        return (Bracket { lower: f64::INFINITY, upper: f64::INFINITY }, DVector::zeros(k));
    }
    let rinv = &dec.v * DMatrix::from_diagonal(&DVector::from_iterator(k, dec.s.iter().map(|s| 1.0 / s)));
    let le = l * &rinv;
    let euclid = linalg::spectral_norm(&le);
    if p_in == 2.0 && p_out == 2.0 {
        let top = linalg::svd(&le);
        return (Bracket::exact(euclid), &rinv * top.v.column(0));
    }
    let (n, m) = (b.nrows() as f64, l.nrows() as f64);
    let upper = euclid
        * m.powf((1.0 / p_out - 0.5).max(0.0))
        * n.powf((0.5 - 1.0 / p_in).max(0.0));
    let annihilator = linalg::complement(&dec.u, b.nrows());
    let mut starts: Vec<DVector<f64>> = extra_starts.to_vec();
    let top = linalg::svd(&le);
    starts.push(&rinv * top.v.column(0));
    for j in 0..k {
        starts.push(DVector::from_fn(k, |i, _| if i == j { 1.0 } else { 0.0 }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + k as u64);
    for _ in 0..(2 * k + 4) {
        starts.push(DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)));
    }
    let q_out = conjugate(p_out);
    let mut best = 0.0f64;
    let mut arg = DVector::zeros(k);
    for c0 in starts {
        let nb = lp_norm((b * &c0).as_slice(), p_in);
        if nb == 0.0 {
            continue;
        }
        let mut c = c0 / nb;
        let mut val = lp_norm((l * &c).as_slice(), p_out);
        for _ in 0..200 {
            let zeta = align(&(l * &c), q_out);
            let psi = l.transpose() * zeta;
            let sm = max_linear_on_section(&psi, b, &annihilator, p_in);
            let cand = lp_norm((l * &sm.argmax).as_slice(), p_out);
            if cand > val * (1.0 + 1e-14) {
                val = cand;
                c = sm.argmax;
            } else {
                break;
            }
        }
        if val > best {
            best = val;
            arg = c;
        }
    }
    (Bracket { lower: best, upper: upper.max(best) }, arg)
}

/// Operator norm `||A||_{p -> p}` of a square matrix.
pub fn operator_norm(a: &DMatrix<f64>, ns: &NormSpec) -> Bracket {
    if ns.is_hilbert() || ns.p == 2.0 {
        return Bracket::exact(linalg::spectral_norm(a));
    }
    if ns.p == 1.0 {
        return Bracket::exact(a.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max));
    }
    if ns.p.is_infinite() {
        return Bracket::exact(a.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max));
    }
    restricted_norm(a, &DMatrix::identity(a.ncols(), a.ncols()), ns.p, ns.p)
}

/// Volume distortion `Delta_d(X)` of the norm, as a bracket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionBracket {
    pub d: usize,
    pub lower: f64,
    pub upper: f64,
    pub exact: bool,
}

/// Optimization is attempted only up to these sizes; beyond them the
/// bracket is `[1, sqrt(d)]`.
pub const DISTORTION_MAX_D: usize = 4;
pub const DISTORTION_MAX_N: usize = 8;

static DISTORTION_CACHE: OnceLock<Mutex<HashMap<(u64, usize, usize), DistortionBracket>>> = OnceLock::new();

pub fn volume_distortion(d: usize, ns: &NormSpec) -> Result<DistortionBracket> {
    if d > ns.dim {
        return Err(Error::InvalidArgument(format!("d = {d} exceeds dim = {}", ns.dim)));
    }
    let exact = |v: f64| DistortionBracket { d, lower: v, upper: v, exact: true };
    if d <= 1 || ns.is_hilbert() || ns.p == 2.0 {
        return Ok(exact(1.0));
    }
    if ns.p <= 2.0 && d == ns.dim {
        return Ok(exact((d as f64).powf((1.0 / ns.p - 0.5).abs())));
    }
    let upper = (d as f64).sqrt();
    if d > DISTORTION_MAX_D || ns.dim > DISTORTION_MAX_N {
        return Ok(DistortionBracket { d, lower: 1.0, upper, exact: false });
    }
    let key = (ns.p.to_bits(), ns.dim, d);
    let cache = DISTORTION_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(b) = cache.lock().expect("cache poisoned").get(&key) {
        return Ok(*b);
    }
    let lower = crate::multilinear::distortion_lower_bound(d, ns).min(upper);
    let b = DistortionBracket { d, lower, upper, exact: lower >= upper };
    cache.lock().expect("cache poisoned").insert(key, b);
    Ok(b)
}

/// `max(Delta_d(X), Delta_d(X*))`.
pub fn simplified_distortion(d: usize, ns: &NormSpec) -> Result<DistortionBracket> {
    let a = volume_distortion(d, ns)?;
    let b = volume_distortion(d, &ns.dual())?;
    Ok(DistortionBracket {
        d,
        lower: a.lower.max(b.lower),
        upper: a.upper.max(b.upper),
        exact: a.exact && b.exact,
    })
}

/// `sup_lambda ||U lambda||_p / ||lambda||_2`.
pub fn norm_2_to_p(u: &DMatrix<f64>, p: f64) -> f64 {
    let (n, d) = u.shape();
    if d == 0 {
        return 0.0;
    }
    if p == 2.0 {
        return linalg::spectral_norm(u);
    }
    if p.is_infinite() {
        return u.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    }
    if p == 1.0 && n <= 16 {
        let mut best = 0.0f64;
        for mask in 0..(1usize << (n - 1)) {
            let s = DVector::from_fn(n, |i, _| if i == 0 || mask & (1 << (i - 1)) == 0 { 1.0 } else { -1.0 });
            best = best.max((u.transpose() * s).norm());
        }
        return best;
    }
    let q = conjugate(p);
    let mut best = 0.0f64;
    let mut starts: Vec<DVector<f64>> = (0..d)
        .map(|j| DVector::from_fn(d, |i, _| if i == j { 1.0 } else { 0.0 }))
        .collect();
    starts.push(DVector::from_element(d, 1.0));
    starts.push(linalg::svd(u).v.column(0).into_owned());
    for mut c in starts {
        c.normalize_mut();
        let mut val = lp_norm((u * &c).as_slice(), p);
        for _ in 0..500 {
            let mut nc = u.transpose() * align(&(u * &c), q);
            let nn = nc.norm();
            if nn == 0.0 {
                break;
            }
            nc /= nn;
            let nv = lp_norm((u * &nc).as_slice(), p);
            c = nc;
            if nv <= val * (1.0 + 1e-15) {
                val = val.max(nv);
                break;
            }
            val = nv;
        }
        best = best.max(val);
    }
    best
}
