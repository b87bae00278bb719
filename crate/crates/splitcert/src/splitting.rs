//! Equivariant fast and slow spaces of a cocycle window.
//!
//! The slow space `F_k` is the forward limit of the slow parts `V(k, n)` of
//! the singular splittings of `A(k, n)`; the fast space `E_k` is the
//! backward limit of the image fast parts `U~(k, n)` of `A(k - n, n)`.
//! Euclidean singular subspaces are computed by two-sided subspace
//! iteration through the factors (one QR per factor), so they keep full
//! accuracy even when the product's singular values span hundreds of
//! orders of magnitude.

use crate::cocycle::Cocycle;
use crate::error::{Error, Result};
use crate::linalg;
use crate::norms::{self, Bracket, NormSpec};
use crate::subspace_geometry::{self, GapEstimate, Subspace};
use crate::svd_split;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

/// Stop when successive approximations move less than this.
pub const TOL_CONV: f64 = 1e-12;
/// Stop when the theoretical envelope falls below this.
pub const ENVELOPE_TOL: f64 = 1e-13;
/// Image directions below this fraction of `||A_k||` count as the kernel.
pub const KERNEL_REL_TOL: f64 = 1e-13;
/// Floor on `||A_k v||` in the relative slow-space defect.
pub const DEFECT_FLOOR: f64 = 1e-300;
/// Subspace iteration cap per singular-space evaluation.
const MAX_SWEEPS: usize = 200;

/// `C^2 D_SVG e^{-n tau}` from log-scale constants.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Envelope {
    pub log_c: f64,
    pub d_svg_log: f64,
    pub tau: f64,
}

impl Envelope {
    pub fn at(&self, n: usize) -> f64 {
        (2.0 * self.log_c + self.d_svg_log - n as f64 * self.tau).exp()
    }
}

/// Raghunathan-type diagnostics of one limit.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceDiagnostics {
    /// Length `N` of the product whose singular space is returned.
    pub n_used: usize,
    pub converged: bool,
    pub stop_reason: String,
    /// `steps[i]` is the leading gap at `n = i + 1`: `delta(V(k,n), V(k,n+1))`
    /// for slow spaces, `delta(U~(k,n+1), U~(k,n))` for fast spaces.
    pub steps: Vec<f64>,
    /// The reversed gaps.
    pub reverse_steps: Vec<f64>,
    /// Envelope values at the same `n` (empty without a fit).
    pub envelope: Vec<f64>,
    pub violations: usize,
    pub reverse_violations: usize,
}

fn orthonormal_columns(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let k = m.ncols();
    let qr = m.clone().qr();
    let r = qr.r();
    let scale = m.amax();
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let rmax = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-14 * rmax) {
        return None;
    }
    Some(qr.q().columns(0, k).into_owned())
}

/// `span(A_{m} ... A_1 Q)` through one QR per factor.
fn push_forward(ops: &[DMatrix<f64>], q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut z = q.clone();
    for a in ops {
        z = orthonormal_columns(&(a * &z))?;
    }
    Some(z)
}

/// `span(A_1^T ... A_m^T Z)`.
fn pull_back(ops: &[DMatrix<f64>], z: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut w = z.clone();
    for a in ops.iter().rev() {
        w = orthonormal_columns(&(a.transpose() * &w))?;
    }
    Some(w)
}

/// Euclidean `delta` between spans of orthonormal columns.
fn euclid_gap(q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    linalg::spectral_norm(&(q - r * (r.transpose() * q)))
}

fn scaled_product(ops: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(n, n);
    for a in ops {
        p = a * p;
        let s = p.amax();
        if s > 0.0 && s.is_finite() {
            p /= s;
        }
    }
    p
}

/// Top-`d` right and left singular subspaces of `A_m ... A_1` (Euclidean),
/// warm-started from `start` when given.
pub fn hilbert_singular_spaces(
    ops: &[DMatrix<f64>],
    d: usize,
    start: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = ops.first().map(|a| a.nrows()).ok_or_else(|| Error::InvalidArgument("empty product".into()))?;
    let mut q = match start {
        Some(s) => s.clone(),
        None => linalg::svd(&scaled_product(ops, n)).v.columns(0, d).into_owned(),
    };
    for _ in 0..MAX_SWEEPS {
        let z = push_forward(ops, &q).ok_or(Error::RankDeficient { needed: d })?;
        let next = pull_back(ops, &z).ok_or(Error::RankDeficient { needed: d })?;
        let change = euclid_gap(&q, &next);
        q = next;
        if change < 1e-15 {
            break;
        }
    }
    let z = push_forward(ops, &q).ok_or(Error::RankDeficient { needed: d })?;
    Ok((q, z))
}

/// `(U, V, U~)` of the index-`d` singular splitting of `A(k, n)`, plus the
/// warm start for the next length.
fn singular_pair(c: &Cocycle, d: usize, k: i64, n: usize, start: Option<&DMatrix<f64>>) -> Result<(Subspace, Subspace, Subspace, DMatrix<f64>)> {
    let j = (k - c.offset()) as usize;
    let ops = &c.ops()[j..j + n];
    let ns = c.norm_spec();
    if ns.is_euclidean() {
        let (u, ut) = hilbert_singular_spaces(ops, d, start)?;
        let us = Subspace::from_basis(&u)?;
        Ok((us.clone(), us.perp(), Subspace::from_basis(&ut)?, u))
    } else {
        let p = c.product(k, n)?.matrix;
        let (u, v, ut) = svd_split::subspaces(&p, d, ns)?;
        let warm = u.basis().clone();
        Ok((u, v, ut, warm))
    }
}

fn gap(a: &Subspace, b: &Subspace, ns: &NormSpec) -> Result<f64> {
    Ok(subspace_geometry::max_gap(a, b, ns)?.value)
}

fn check_envelope(diag: &mut ConvergenceDiagnostics, env: Option<&Envelope>) {
    let Some(env) = env else { return };
    diag.envelope = (1..=diag.steps.len()).map(|n| env.at(n)).collect();
    for (i, x) in diag.envelope.iter().enumerate() {
        let tol = 1e-9 * x + 1e-15;
        if diag.steps[i] > x + tol {
            diag.violations += 1;
        }
        if *x < 1.0 && diag.reverse_steps[i] > x / (1.0 - x) + tol {
            diag.reverse_violations += 1;
        }
    }
}

fn stop_now(step: f64, env: Option<&Envelope>, n: usize) -> Option<String> {
    if step < TOL_CONV {
        return Some(format!("successive gap {step:e} below {TOL_CONV:e}"));
    }
    if let Some(e) = env {
        if e.at(n) < ENVELOPE_TOL {
            return Some(format!("envelope below {ENVELOPE_TOL:e}"));
        }
    }
    None
}

/// `F_k ≈ V(k, N)`: forward products from `k`, at most `n_cap` factors.
pub fn slow_space(c: &Cocycle, d: usize, k: i64, n_cap: usize, env: Option<&Envelope>) -> Result<(Subspace, ConvergenceDiagnostics)> {
    let ns = c.norm_spec();
    let avail = (c.end() - k).max(0) as usize;
    let n_max = n_cap.min(avail);
    if n_max == 0 || k < c.offset() {
        return Err(Error::OutOfWindow(format!("no forward products from k = {k}")));
    }
    let (_, mut v, _, mut warm) = singular_pair(c, d, k, 1, None)?;
    let mut diag = ConvergenceDiagnostics {
        n_used: 1,
        converged: false,
        stop_reason: "window exhausted".into(),
        steps: vec![],
        reverse_steps: vec![],
        envelope: vec![],
        violations: 0,
        reverse_violations: 0,
    };
    for n in 1..n_max {
        let (_, v_next, _, w) = singular_pair(c, d, k, n + 1, Some(&warm))?;
        warm = w;
        diag.steps.push(gap(&v, &v_next, ns)?);
        diag.reverse_steps.push(gap(&v_next, &v, ns)?);
        v = v_next;
        diag.n_used = n + 1;
        if let Some(reason) = stop_now(*diag.steps.last().expect("pushed"), env, n) {
            diag.converged = true;
            diag.stop_reason = reason;
            break;
        }
    }
    check_envelope(&mut diag, env);
    Ok((v, diag))
}

/// `E_k ≈ U~(k, N)`: image fast space of `A(k - N, N)`.
pub fn fast_space(c: &Cocycle, d: usize, k: i64, n_cap: usize, env: Option<&Envelope>) -> Result<(Subspace, ConvergenceDiagnostics)> {
    let ns = c.norm_spec();
    let avail = (k - c.offset()).max(0) as usize;
    let n_max = n_cap.min(avail);
    if n_max == 0 || k > c.end() {
        return Err(Error::OutOfWindow(format!("no backward products into k = {k}")));
    }
    let (_, _, mut ut, _) = singular_pair(c, d, k - 1, 1, None)?;
    let mut diag = ConvergenceDiagnostics {
        n_used: 1,
        converged: false,
        stop_reason: "window exhausted".into(),
        steps: vec![],
        reverse_steps: vec![],
        envelope: vec![],
        violations: 0,
        reverse_violations: 0,
    };
    for n in 1..n_max {
        let (_, _, ut_next, _) = singular_pair(c, d, k - (n as i64 + 1), n + 1, None)?;
        diag.steps.push(gap(&ut_next, &ut, ns)?);
        diag.reverse_steps.push(gap(&ut, &ut_next, ns)?);
        ut = ut_next;
        diag.n_used = n + 1;
        if let Some(reason) = stop_now(*diag.steps.last().expect("pushed"), env, n) {
            diag.converged = true;
            diag.stop_reason = reason;
            break;
        }
    }
    check_envelope(&mut diag, env);
    Ok((ut, diag))
}

/// One index of the splitting.
#[derive(Clone, Debug, Serialize)]
pub struct SplitAtK {
    pub k: i64,
    pub fast: Option<Subspace>,
    pub slow: Option<Subspace>,
    pub fast_diagnostics: Option<ConvergenceDiagnostics>,
    pub slow_diagnostics: Option<ConvergenceDiagnostics>,
    /// `gamma(E_k, F_k)` and `gamma(F_k, E_k)`.
    pub gamma_fast_slow: Option<GapEstimate>,
    pub gamma_slow_fast: Option<GapEstimate>,
    pub error: Option<String>,
}

/// Defects of `A_k E_k = E_{k+1}` and `A_k F_k ⊆ F_{k+1}`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EquivarianceDefect {
    pub k: i64,
    pub fast: f64,
    pub slow: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivariantSplitting {
    pub d: usize,
    pub norm: NormSpec,
    pub k_start: i64,
    pub k_end: i64,
    pub n_cap: usize,
    pub entries: Vec<SplitAtK>,
    pub defects: Vec<EquivarianceDefect>,
}

impl EquivariantSplitting {
    pub fn entry(&self, k: i64) -> Option<&SplitAtK> {
        if k < self.k_start || k >= self.k_end {
            return None;
        }
        self.entries.get((k - self.k_start) as usize)
    }

    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.error.is_some()).count()
    }

    pub fn max_defect(&self) -> f64 {
        self.defects.iter().map(|d| d.fast.max(d.slow)).fold(0.0, f64::max)
    }

    /// Minimum of `gamma(E_k, F_k)` (value and lower end) over built indices.
    pub fn min_gamma(&self) -> Option<GapEstimate> {
        self.entries
            .iter()
            .filter_map(|e| e.gamma_fast_slow)
            .min_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::to_value(self).expect("splitting serializes")).expect("value serializes")
    }
}

fn build_one(c: &Cocycle, d: usize, k: i64, n_cap: usize, env: Option<&Envelope>) -> SplitAtK {
    let ns = c.norm_spec();
    let mut out = SplitAtK {
        k,
        fast: None,
        slow: None,
        fast_diagnostics: None,
        slow_diagnostics: None,
        gamma_fast_slow: None,
        gamma_slow_fast: None,
        error: None,
    };
    let mut errs = Vec::new();
    match fast_space(c, d, k, n_cap, env) {
        Ok((e, diag)) => {
            out.fast = Some(e);
            out.fast_diagnostics = Some(diag);
        }
        Err(e) => errs.push(format!("fast space: {e}")),
    }
    match slow_space(c, d, k, n_cap, env) {
        Ok((f, diag)) => {
            out.slow = Some(f);
            out.slow_diagnostics = Some(diag);
        }
        Err(e) => errs.push(format!("slow space: {e}")),
    }
    if let (Some(e), Some(f)) = (&out.fast, &out.slow) {
        match (subspace_geometry::min_gap(e, f, ns), subspace_geometry::min_gap(f, e, ns)) {
            (Ok(a), Ok(b)) => {
                out.gamma_fast_slow = Some(a);
                out.gamma_slow_fast = Some(b);
            }
            (Err(x), _) | (_, Err(x)) => errs.push(format!("gap: {x}")),
        }
    }
    if !errs.is_empty() {
        out.error = Some(errs.join("; "));
    }
    out
}

/// `delta(span(A V), W)` where directions of `A V` below
/// `KERNEL_REL_TOL ||A||` (or `DEFECT_FLOOR`) are treated as the kernel.
fn image_defect(a: &DMatrix<f64>, v: &Subspace, w: &Subspace, ns: &NormSpec) -> Result<f64> {
    let img = a * v.basis();
    let scale = linalg::spectral_norm(a);
    let dec = linalg::svd(&img);
    let keep = dec.s.iter().filter(|&&s| s > (KERNEL_REL_TOL * scale).max(DEFECT_FLOOR)).count();
    if keep == 0 {
        return Ok(0.0);
    }
    let image = Subspace::from_basis(&dec.u.columns(0, keep).into_owned())?;
    gap(&image, w, ns)
}

/// Fast and slow spaces for `k` in `[k_start, k_end)`, with equivariance
/// defects between consecutive indices. Per-index failures are recorded
/// and the remaining indices are still built.
pub fn build_splitting(
    c: &Cocycle,
    d: usize,
    k_start: i64,
    k_end: i64,
    n_cap: usize,
    env: Option<&Envelope>,
) -> Result<EquivariantSplitting> {
    if d == 0 || d >= c.dim() {
        return Err(Error::InvalidArgument(format!("index d = {d} outside 1..{}", c.dim())));
    }
    if k_start >= k_end || k_start < c.offset() || k_end > c.end() {
        return Err(Error::OutOfWindow(format!("k range [{k_start}, {k_end}) inside [{}, {})", c.offset(), c.end())));
    }
    let ns = *c.norm_spec();
    let entries: Vec<SplitAtK> = (k_start..k_end).into_par_iter().map(|k| build_one(c, d, k, n_cap, env)).collect();
    let mut defects = Vec::new();
    for w in entries.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if let (Some(e0), Some(f0), Some(e1), Some(f1)) = (&a.fast, &a.slow, &b.fast, &b.slow) {
            let op = c.op(a.k)?;
            let fast = image_defect(op, e0, e1, &ns)?;
            let slow = image_defect(op, f0, f1, &ns)?;
            defects.push(EquivarianceDefect { k: a.k, fast, slow });
        }
    }
    Ok(EquivariantSplitting { d, norm: ns, k_start, k_end, n_cap, entries, defects })
}

/// `||A(k,n)|F_k||` and `||(A(k,n)|E_k)^{-1}||^{-1}` in log scale, each as a
/// bracket `[lower, upper]`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RestrictedGrowth {
    pub k: i64,
    pub n: usize,
    pub fast_conorm_log: [f64; 2],
    pub slow_norm_log: [f64; 2],
}

impl RestrictedGrowth {
    /// `log ||A|F|| - log ||(A|E)^{-1}||^{-1}` from bracket midpoints.
    pub fn slow_fast_ratio_log(&self) -> f64 {
        0.5 * (self.slow_norm_log[0] + self.slow_norm_log[1]) - 0.5 * (self.fast_conorm_log[0] + self.fast_conorm_log[1])
    }
}

/// Product of the projected one-step maps `B_{j+1}^T A_j B_j` with rescaling.
fn projected_product(c: &Cocycle, bases: &[&DMatrix<f64>], k: i64) -> Result<(DMatrix<f64>, f64)> {
    let m = bases[0].ncols();
    let mut p = DMatrix::identity(m, m);
    let mut log_scale = linalg::CompensatedSum::new();
    for (j, w) in bases.windows(2).enumerate() {
        let a = c.op(k + j as i64)?;
        p = w[1].transpose() * a * w[0] * p;
        let s = p.amax();
        if s > 0.0 && s.is_finite() {
            p /= s;
            log_scale.add(s.ln());
        }
    }
    Ok((p, log_scale.value()))
}

fn log_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Restricted growth of `A(k, n)` on `E_k` and `F_k`, through the
/// splitting at `k, ..., k + n` (the leakage across the splitting is
/// discarded at every step, so it is never amplified).
pub fn restricted_growth(s: &EquivariantSplitting, c: &Cocycle, k: i64, n: usize) -> Result<RestrictedGrowth> {
    let mut e_bases = Vec::with_capacity(n + 1);
    let mut f_bases = Vec::with_capacity(n + 1);
    for j in 0..=n as i64 {
        let entry = s.entry(k + j).ok_or_else(|| Error::OutOfWindow(format!("k = {} not in the splitting", k + j)))?;
        let (Some(e), Some(f)) = (&entry.fast, &entry.slow) else {
            return Err(Error::InvalidArgument(format!("splitting failed at k = {}", k + j)));
        };
        e_bases.push(e.basis());
        f_bases.push(f.basis());
    }
    let (me, se) = projected_product(c, &e_bases, k)?;
    let (mf, sf) = projected_product(c, &f_bases, k)?;
    let ns = c.norm_spec();
    let (fast, slow) = if ns.is_euclidean() {
        let fe = log_or_neg_inf(linalg::min_singular(&me)) + se;
        let sl = log_or_neg_inf(linalg::spectral_norm(&mf)) + sf;
        ([fe, fe], [sl, sl])
    } else {
        let p = ns.p;
        let slow_b: Bracket = norms::restricted_norm(&(f_bases[n] * &mf), f_bases[0], p, p);
        let fast = match linalg::inverse(&me) {
            Some(inv) => {
                let b = norms::restricted_norm(&(e_bases[0] * inv), e_bases[n], p, p);
                [-b.upper.ln() + se, -b.lower.ln() + se]
            }
            None => [f64::NEG_INFINITY, f64::NEG_INFINITY],
        };
        (fast, [log_or_neg_inf(slow_b.lower) + sf, log_or_neg_inf(slow_b.upper) + sf])
    };
    Ok(RestrictedGrowth { k, n, fast_conorm_log: fast, slow_norm_log: slow })
}

/// Graph operators `Theta(k, n)` with `V(k, n) = Graph(Theta(k, n))` over
/// the reference splitting `U(k, N_*) ⊕ V(k, N_*)`.
#[derive(Clone, Debug, Serialize)]
pub struct GraphDiagnostics {
    pub k: i64,
    pub n_star: usize,
    /// `||Theta(k, n)||` for `n = n_star ..`.
    pub norms: Vec<f64>,
    /// `||Theta(k, n+1) - Theta(k, n)||` for `n = n_star ..`.
    pub increments: Vec<f64>,
    /// `theta_* e^{-(n - N_*) tau} (1 - e^{-tau})` at the same `n`.
    pub increment_bounds: Vec<f64>,
    /// `log min_{u in U(k,N_*)} ||A(k,n) u|| / (sigma_d(k,n) ||u||)`, Euclidean only.
    pub expansion_log: Vec<f64>,
}

/// Graph-operator diagnostics for `n` in `n_star ..= n_max`; increments are
/// listed while their bound stays above `ENVELOPE_TOL`.
pub fn graph_diagnostics(
    c: &Cocycle,
    d: usize,
    k: i64,
    n_star: usize,
    n_max: usize,
    theta_star: f64,
    tau: f64,
) -> Result<GraphDiagnostics> {
    let ns = c.norm_spec();
    let avail = (c.end() - k).max(0) as usize;
    let n_max = n_max.min(avail);
    if n_star == 0 || n_star > n_max {
        return Err(Error::OutOfWindow(format!("N_* = {n_star} exceeds the forward window {n_max}")));
    }
    let (u_star, v_star, _, mut warm) = singular_pair(c, d, k, n_star, None)?;
    let mut out = GraphDiagnostics {
        k,
        n_star,
        norms: vec![],
        increments: vec![],
        increment_bounds: vec![],
        expansion_log: vec![],
    };
    let mut prev: Option<subspace_geometry::GraphOperator> = None;
    for n in n_star..=n_max {
        let (_, v_n, _, w) = singular_pair(c, d, k, n, Some(&warm))?;
        warm = w;
        let theta = subspace_geometry::graph_of(&v_n, &v_star, &u_star, ns)?;
        out.norms.push(theta.norm().upper);
        if let Some(p) = &prev {
            let nb = n - 1 - n_star;
            let b = theta_star * (-(nb as f64) * tau).exp() * (1.0 - (-tau).exp());
            if b < ENVELOPE_TOL {
                break;
            }
            out.increments.push(theta.difference(p)?.norm().upper);
            out.increment_bounds.push(b);
        }
        if ns.is_euclidean() {
            let j = (k - c.offset()) as usize;
            let ops = &c.ops()[j..j + n];
            out.expansion_log.push(expansion_ratio_log(ops, u_star.basis(), d));
        }
        prev = Some(theta);
    }
    Ok(out)
}

/// `log sigma_min(A_m ... A_1 |_{span Q})` through per-factor QR.
fn restricted_log_conorm(ops: &[DMatrix<f64>], q0: &DMatrix<f64>) -> f64 {
    let d = q0.ncols();
    let mut q = q0.clone();
    let mut r_acc = DMatrix::identity(d, d);
    let mut scale = linalg::CompensatedSum::new();
    for a in ops {
        let qr = (a * &q).qr();
        r_acc = qr.r() * r_acc;
        q = qr.q().columns(0, d).into_owned();
        let s = r_acc.amax();
        if s > 0.0 && s.is_finite() {
            r_acc /= s;
            scale.add(s.ln());
        }
    }
    log_or_neg_inf(linalg::min_singular(&r_acc)) + scale.value()
}

/// `log sigma_min(A|U) - log sigma_d(A)`, with `sigma_d(A)` the conorm on
/// the top right singular space.
fn expansion_ratio_log(ops: &[DMatrix<f64>], u: &DMatrix<f64>, d: usize) -> f64 {
    match hilbert_singular_spaces(ops, d, None) {
        Ok((top, _)) => restricted_log_conorm(ops, u) - restricted_log_conorm(ops, &top),
        Err(_) => f64::NEG_INFINITY,
    }
}
