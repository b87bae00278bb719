//! Finite windows of a linear cocycle `A(k, n) = A_{k+n-1} ... A_k`, their
//! singular-value curves, and envelope fits of the gap and fast
//! invertibility hypotheses.
//!
//! Every fitted constant is certified on the window only: infima and
//! suprema over `n >= 0` range over the products the window contains.

use crate::error::{Error, Result};
use crate::exterior;
use crate::linalg::{self, CompensatedSum};
use crate::multilinear;
use crate::norms::{self, NormSpec};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// `matrix * exp(log_scale)` with `matrix` of max-abs entry 1 (or 0).
#[derive(Clone, Debug)]
pub struct ScaledMatrix {
    pub matrix: DMatrix<f64>,
    pub log_scale: f64,
}

/// Accumulates left products `A_m ... A_1 M0`, rescaling every step.
#[derive(Clone, Debug)]
struct ProductAccumulator {
    matrix: DMatrix<f64>,
    log_scale: CompensatedSum,
}

impl ProductAccumulator {
    fn identity(n: usize) -> Self {
        Self { matrix: DMatrix::identity(n, n), log_scale: CompensatedSum::new() }
    }

    fn push(&mut self, a: &DMatrix<f64>) {
        self.matrix = a * &self.matrix;
        let s = self.matrix.amax();
        if s > 0.0 && s.is_finite() {
            self.matrix /= s;
            self.log_scale.add(s.ln());
        }
    }

    fn scaled(&self) -> ScaledMatrix {
        ScaledMatrix { matrix: self.matrix.clone(), log_scale: self.log_scale.value() }
    }

    /// `log ||matrix||_2 + log_scale`, `-inf` for the zero matrix.
    fn log_spectral_norm(&self) -> f64 {
        let n = linalg::spectral_norm(&self.matrix);
        if n > 0.0 {
            n.ln() + self.log_scale.value()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Operators `A_{k0}, ..., A_{k0+L-1}` on `R^n` with a norm. Immutable.
#[derive(Clone, Debug)]
pub struct Cocycle {
    offset: i64,
    ops: Vec<DMatrix<f64>>,
    ns: NormSpec,
    /// `log ||A_k||` (upper end of the operator-norm bracket).
    log_norms: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CocycleFile {
    offset: i64,
    norm: serde_json::Value,
    matrices: Vec<Vec<f64>>,
}

impl Cocycle {
    pub fn new(offset: i64, ops: Vec<DMatrix<f64>>, ns: NormSpec) -> Result<Self> {
        if ops.len() < 2 {
            return Err(Error::InvalidArgument("a cocycle window needs at least two operators".into()));
        }
        let n = ns.dim;
        for a in &ops {
            if a.shape() != (n, n) {
                return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("operator entries must be finite".into()));
            }
        }
        let log_norms = ops.iter().map(|a| norms::operator_norm(a, &ns).upper.ln()).collect();
        Ok(Self { offset, ops, ns, log_norms })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: CocycleFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let first = f.matrices.first().ok_or_else(|| Error::Parse("no matrices".into()))?;
        let n = (first.len() as f64).sqrt().round() as usize;
        if n == 0 || n * n != first.len() {
            return Err(Error::Parse(format!("matrix of {} entries is not square", first.len())));
        }
        let mut norm = f.norm;
        if let Some(obj) = norm.as_object_mut() {
            obj.entry("dim").or_insert(serde_json::json!(n));
        }
        let ns: NormSpec = serde_json::from_value(norm).map_err(|e| Error::Parse(e.to_string()))?;
        if ns.dim != n {
            return Err(Error::DimensionMismatch { expected: ns.dim, got: n });
        }
        let mut ops = Vec::with_capacity(f.matrices.len());
        for m in &f.matrices {
            if m.len() != n * n {
                return Err(Error::DimensionMismatch { expected: n * n, got: m.len() });
            }
            ops.push(DMatrix::from_row_slice(n, n, m));
        }
        Self::new(f.offset, ops, ns)
    }

    /// File form with sorted keys and row-major matrices.
    pub fn to_json(&self) -> String {
        let f = CocycleFile {
            offset: self.offset,
            norm: serde_json::to_value(self.ns).expect("norm spec serializes"),
            matrices: self.ops.iter().map(|a| a.transpose().as_slice().to_vec()).collect(),
        };
        let v = serde_json::to_value(&f).expect("cocycle serializes");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// Number of operators `L`.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ns.dim
    }

    pub fn norm_spec(&self) -> &NormSpec {
        &self.ns
    }

    /// One past the last index: products `A(k, n)` need `k + n <= end`.
    pub fn end(&self) -> i64 {
        self.offset + self.ops.len() as i64
    }

    pub fn op(&self, k: i64) -> Result<&DMatrix<f64>> {
        self.local(k, 1).map(|j| &self.ops[j])
    }

    pub fn ops(&self) -> &[DMatrix<f64>] {
        &self.ops
    }

    pub fn log_norm(&self, k: i64) -> Result<f64> {
        self.local(k, 1).map(|j| self.log_norms[j])
    }

    fn local(&self, k: i64, n: usize) -> Result<usize> {
        if k < self.offset || k + n as i64 > self.end() {
            return Err(Error::OutOfWindow(format!(
                "[{k}, {}) outside [{}, {})",
                k + n as i64,
                self.offset,
                self.end()
            )));
        }
        Ok((k - self.offset) as usize)
    }

    /// `A(k, n)` as a rescaled matrix; `n = 0` gives `(Id, 0)`.
    pub fn product(&self, k: i64, n: usize) -> Result<ScaledMatrix> {
        let j = self.local(k, n)?;
        let mut acc = ProductAccumulator::identity(self.dim());
        for a in &self.ops[j..j + n] {
            acc.push(a);
        }
        Ok(acc.scaled())
    }

    /// `A(k, n)` recombined; overflows for long windows.
    pub fn product_unscaled(&self, k: i64, n: usize) -> Result<DMatrix<f64>> {
        let s = self.product(k, n)?;
        Ok(s.matrix * s.log_scale.exp())
    }
}

/// `log sigma_i(k, n)` for `i = 1..=rows` over every product of the window,
/// plus `log Sigma_d(k, n)`.
///
/// Euclidean norms use compound products: `log sigma_i = log ||∧^i A(k,n)||
/// - log ||∧^{i-1} A(k,n)||`, each exterior product accumulated with
/// rescaling, so small singular values keep full relative accuracy. In
/// `l^p` mode `sigma_i` is the Jacobian quotient `Sigma_i / Sigma_{i-1}` of
/// the rescaled product.
#[derive(Clone, Debug, Serialize)]
pub struct SigmaTable {
    pub d: usize,
    pub rows: usize,
    pub len: usize,
    pub offset: i64,
    pub exact: bool,
    /// `log_sigma[j][n][i-1]` for local start `j` and `n <= len - j`.
    log_sigma: Vec<Vec<Vec<f64>>>,
    /// `log_jacobian[j][n] = log Sigma_d(j, n)`.
    log_jacobian: Vec<Vec<f64>>,
}

impl SigmaTable {
    pub fn build(c: &Cocycle, d: usize) -> Result<Self> {
        let n = c.dim();
        if d == 0 || d > n {
            return Err(Error::InvalidArgument(format!("index d = {d} outside 1..={n}")));
        }
        let rows = (d + 1).min(n);
        let len = c.len();
        let euclid = c.ns.is_euclidean();
        let rows_per_start: Vec<Result<(Vec<Vec<f64>>, Vec<f64>)>> = if euclid {
            let mut wedges = Vec::with_capacity(rows);
            for i in 1..=rows {
                let w: Result<Vec<DMatrix<f64>>> =
                    c.ops.iter().map(|a| exterior::wedge_matrix(a, i).map(|w| w.matrix)).collect();
                wedges.push(w?);
            }
            (0..len).into_par_iter().map(|j| Ok(compound_curves(&wedges, j, len, d))).collect()
        } else {
            (0..len).into_par_iter().map(|j| jacobian_curves(c, j, rows, d)).collect()
        };
        let mut log_sigma = Vec::with_capacity(len + 1);
        let mut log_jacobian = Vec::with_capacity(len + 1);
        for r in rows_per_start {
            let (s, jac) = r?;
            log_sigma.push(s);
            log_jacobian.push(jac);
        }
        // start j = len holds only the empty product.
        let (s_end, j_end) = if euclid {
            (vec![vec![0.0; rows]], vec![0.0])
        } else {
            let id = DMatrix::identity(n, n);
            let (s, jac) = jacobian_row(&id, 0.0, rows, d, &c.ns)?;
            (vec![s], vec![jac])
        };
        log_sigma.push(s_end);
        log_jacobian.push(j_end);
        Ok(Self { d, rows, len, offset: c.offset, exact: euclid, log_sigma, log_jacobian })
    }

    /// `log sigma_i(k0 + j, n)`, `-inf` when `i` exceeds the dimension.
    pub fn log_sigma_local(&self, j: usize, n: usize, i: usize) -> f64 {
        if i == 0 || i > self.rows {
            return f64::NEG_INFINITY;
        }
        self.log_sigma[j][n][i - 1]
    }

    /// `log sigma_i(k, n)` in absolute indexing.
    pub fn log_sigma(&self, k: i64, n: usize, i: usize) -> Result<f64> {
        let j = self.local(k, n)?;
        Ok(self.log_sigma_local(j, n, i))
    }

    pub fn log_jacobian_local(&self, j: usize, n: usize) -> f64 {
        self.log_jacobian[j][n]
    }

    pub fn log_jacobian(&self, k: i64, n: usize) -> Result<f64> {
        let j = self.local(k, n)?;
        Ok(self.log_jacobian[j][n])
    }

    fn local(&self, k: i64, n: usize) -> Result<usize> {
        let end = self.offset + self.len as i64;
        if k < self.offset || k + n as i64 > end {
            return Err(Error::OutOfWindow(format!("[{k}, {}) outside [{}, {end})", k + n as i64, self.offset)));
        }
        Ok((k - self.offset) as usize)
    }

    /// Curves `log sigma_i(k, n)` for `n = 0..=n_max`, one vector per `i`.
    pub fn curves(&self, k: i64, n_max: usize) -> Result<Vec<Vec<f64>>> {
        let j = self.local(k, n_max)?;
        Ok((1..=self.rows).map(|i| (0..=n_max).map(|n| self.log_sigma_local(j, n, i)).collect()).collect())
    }

    /// CSV with columns `k,n,i,log_sigma` over the whole window.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,n,i,log_sigma\n");
        for j in 0..self.len {
            for n in 0..=(self.len - j) {
                for i in 1..=self.rows {
                    let _ = writeln!(out, "{},{},{},{}", self.offset + j as i64, n, i, self.log_sigma_local(j, n, i));
                }
            }
        }
        out
    }

    /// `log prod_{i<=d} sigma_i(j, m+n) / (sigma_i(j, m) sigma_i(j+m, n))`.
    pub fn log_fi_ratio_local(&self, j: usize, m: usize, n: usize) -> f64 {
        let mut s = 0.0;
        for i in 1..=self.d {
            s += self.log_sigma_local(j, m + n, i) - self.log_sigma_local(j, m, i) - self.log_sigma_local(j + m, n, i);
        }
        s
    }
}

fn compound_curves(wedges: &[Vec<DMatrix<f64>>], j: usize, len: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows = wedges.len();
    let mut accs: Vec<ProductAccumulator> = wedges.iter().map(|w| ProductAccumulator::identity(w[0].nrows())).collect();
    let mut sig = Vec::with_capacity(len - j + 1);
    let mut jac = Vec::with_capacity(len - j + 1);
    for n in 0..=(len - j) {
        if n > 0 {
            for (acc, w) in accs.iter_mut().zip(wedges) {
                acc.push(&w[j + n - 1]);
            }
        }
        let norms: Vec<f64> = accs.iter().map(|a| a.log_spectral_norm()).collect();
        let mut row = Vec::with_capacity(rows);
        let mut prev = 0.0;
        for &lw in &norms {
            row.push(if lw == f64::NEG_INFINITY || prev == f64::NEG_INFINITY { f64::NEG_INFINITY } else { lw - prev });
            prev = lw;
        }
        jac.push(norms[d - 1]);
        sig.push(row);
    }
    (sig, jac)
}

fn jacobian_curves(c: &Cocycle, j: usize, rows: usize, d: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let len = c.len();
    let mut acc = ProductAccumulator::identity(c.dim());
    let mut sig = Vec::with_capacity(len - j + 1);
    let mut jac = Vec::with_capacity(len - j + 1);
    for n in 0..=(len - j) {
        if n > 0 {
            acc.push(&c.ops[j + n - 1]);
        }
        let (row, lj) = jacobian_row(&acc.matrix, acc.log_scale.value(), rows, d, &c.ns)?;
        sig.push(row);
        jac.push(lj);
    }
    Ok((sig, jac))
}

fn jacobian_row(m: &DMatrix<f64>, log_scale: f64, rows: usize, d: usize, ns: &NormSpec) -> Result<(Vec<f64>, f64)> {
    let mut row = Vec::with_capacity(rows);
    let mut prev = 0.0;
    let mut log_d = f64::NEG_INFINITY;
    for i in 1..=rows {
        let lj = multilinear::jacobian(m, i, ns)?.log_value + i as f64 * log_scale;
        row.push(if lj == f64::NEG_INFINITY || prev == f64::NEG_INFINITY { f64::NEG_INFINITY } else { lj - prev });
        prev = lj;
        if i == d {
            log_d = lj;
        }
    }
    Ok((row, log_d))
}

/// Active-index tolerance of the envelope sweeps (log scale).
pub const ACTIVE_TOL: f64 = 1e-11;
/// Largest admissible `log D` of a fitted envelope.
pub const LOG_D_CAP: f64 = 30.0;

/// Grid of candidate rates `lo:hi:steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self { lo: 1e-6, hi: 50.0, steps: 1000 }
    }
}

impl TauGrid {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("tau grid {s:?} is not lo:hi:steps"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let steps: usize = parts[2].parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi > lo && steps >= 1) {
            return Err(bad());
        }
        Ok(Self { lo, hi, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        (0..self.steps).map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64).collect()
    }
}

/// Fit of the singular value gap hypothesis.
#[derive(Clone, Debug, Serialize)]
pub struct SvgFit {
    pub feasible: bool,
    pub reason: Option<String>,
    pub tau: f64,
    pub d_svg_log: f64,
    /// `max_{k,n} [log r + n tau] - log D` per ratio family (both <= 0).
    pub family_slack_log: [f64; 2],
    /// Smallest `n` attaining the envelope at the chosen rate.
    pub active_n: usize,
    pub n_max: usize,
    /// `a_n = max_k log r(k, n)` over both families.
    pub envelope_log: Vec<f64>,
}

fn max_affine(a: &[f64], t: f64) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    for (n, &x) in a.iter().enumerate() {
        best = best.max(x + n as f64 * t);
    }
    let active = a.iter().enumerate().position(|(n, &x)| x + n as f64 * t >= best - ACTIVE_TOL).unwrap_or(0);
    (best, active)
}

/// Largest `t` in `[lo, hi]` with `pred(t)` for a predicate that is true on
/// a down-closed set containing `lo`.
fn bisect_sup(lo: f64, hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    let (mut a, mut b) = (lo, hi);
    if pred(b) {
        return b;
    }
    for _ in 0..300 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if pred(m) {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

/// Envelope `log r(k, n) <= log D - n tau` over both families
/// `sigma_{d+1}(k,n) ||A_{k+n}|| / sigma_d(k,n+1)` and
/// `||A_k|| sigma_{d+1}(k+1,n) / sigma_d(k,n+1)`.
///
/// The rate is the largest one whose envelope is attained at some
/// `n <= n_max / 2` and whose `log D <= 30`, capped by the grid.
pub fn fit_svg(c: &Cocycle, t: &SigmaTable, grid: &TauGrid) -> SvgFit {
    let len = t.len;
    let d = t.d;
    let n_max = len - 1;
    let mut fam = [vec![f64::NEG_INFINITY; n_max + 1], vec![f64::NEG_INFINITY; n_max + 1]];
    let mut infeasible = None;
    for j in 0..len {
        for n in 0..=(len - 1 - j) {
            let den = t.log_sigma_local(j, n + 1, d);
            if den == f64::NEG_INFINITY {
                infeasible = Some(format!("sigma_d vanishes at k = {}, n = {}", t.offset + j as i64, n + 1));
                continue;
            }
            let r1 = t.log_sigma_local(j, n, d + 1) + c.log_norms[j + n] - den;
            let r2 = c.log_norms[j] + t.log_sigma_local(j + 1, n, d + 1) - den;
            fam[0][n] = fam[0][n].max(r1);
            fam[1][n] = fam[1][n].max(r2);
        }
    }
    let a: Vec<f64> = (0..=n_max).map(|n| fam[0][n].max(fam[1][n])).collect();
    let mut fit = SvgFit {
        feasible: false,
        reason: infeasible.clone(),
        tau: 0.0,
        d_svg_log: f64::INFINITY,
        family_slack_log: [f64::NAN; 2],
        active_n: 0,
        n_max,
        envelope_log: a.clone(),
    };
    if infeasible.is_some() {
        return fit;
    }
    let half = n_max / 2;
    let admissible = |tau: f64| {
        let (g, active) = max_affine(&a, tau);
        active <= half && g <= LOG_D_CAP
    };
    if !admissible(grid.lo) {
        fit.reason = Some("no rate above the grid minimum keeps the envelope attained early".into());
        return fit;
    }
    let tau = bisect_sup(grid.lo, grid.hi, admissible);
    let (g, active) = max_affine(&a, tau);
    let log_d = g.max(0.0);
    let slack = |f: &[f64]| max_affine(f, tau).0 - log_d;
    fit.feasible = true;
    fit.reason = None;
    fit.tau = tau;
    fit.d_svg_log = log_d;
    fit.family_slack_log = [slack(&fam[0]), slack(&fam[1])];
    fit.active_n = active;
    fit
}

/// Uniform invertibility constants `M^* = max ||A_k||`,
/// `M_* = min ||A_k^{-1}||^{-1}`.
#[derive(Clone, Debug, Serialize)]
pub struct UiFit {
    pub m_star_upper_log: f64,
    pub m_star_lower_log: f64,
    /// `d log(M^* / M_*)`.
    pub mu_ui: f64,
    /// `h(m) <= m mu_ui` for every window `m` (the automatic fast
    /// invertibility with `D_FI = 1`).
    pub holds: bool,
    pub max_excess_log: f64,
}

/// Fit of the fast invertibility hypothesis.
#[derive(Clone, Debug, Serialize)]
pub struct FiFit {
    pub feasible: bool,
    pub reason: Option<String>,
    pub mu: f64,
    pub d_fi_log: f64,
    /// `e^{-nu}` is the infimum of the `m = 1` ratio.
    pub nu: f64,
    /// `h(m) = -min_{k,n} log ratio(m; k, n)`.
    pub h: Vec<f64>,
    /// Largest log ratio seen (bounded by `2 log K_d`).
    pub max_ratio_log: f64,
    /// `min_{k, m>=1, n>=1} log ratio`.
    pub min_ratio_log: f64,
    pub active_m: usize,
    pub ui: Option<UiFit>,
}

/// `log D_FI(mu) = max(0, max_m [h(m) - m mu])`; the rate is the smallest
/// one whose envelope is attained at some `m <= m_max / 2` and whose
/// `log D <= 30`.
pub fn fit_fi(c: &Cocycle, t: &SigmaTable) -> FiFit {
    let len = t.len;
    let d = t.d;
    let mut h = vec![f64::NEG_INFINITY; len + 1];
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    let mut reason = None;
    'outer: for j in 0..=len {
        for n in 0..=(len - j) {
            if (1..=d).any(|i| t.log_sigma_local(j, n, i) == f64::NEG_INFINITY) {
                reason = Some(format!("sigma_d vanishes at k = {}, n = {n}", t.offset + j as i64));
                break 'outer;
            }
        }
    }
    let mut fit = FiFit {
        feasible: false,
        reason: reason.clone(),
        mu: 0.0,
        d_fi_log: f64::INFINITY,
        nu: f64::INFINITY,
        h: vec![],
        max_ratio_log: f64::NAN,
        min_ratio_log: f64::NAN,
        active_m: 0,
        ui: None,
    };
    if reason.is_some() {
        return fit;
    }
    let per_m: Vec<(f64, f64, f64)> = (0..=len)
        .into_par_iter()
        .map(|m| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut lo_pos = f64::INFINITY;
            for j in 0..=(len - m) {
                for n in 0..=(len - m - j) {
                    let r = t.log_fi_ratio_local(j, m, n);
                    lo = lo.min(r);
                    hi = hi.max(r);
                    if m >= 1 && n >= 1 {
                        lo_pos = lo_pos.min(r);
                    }
                }
            }
            (lo, hi, lo_pos)
        })
        .collect();
    for (m, &(lo, hi, lo_pos)) in per_m.iter().enumerate() {
        h[m] = -lo;
        max_ratio = max_ratio.max(hi);
        min_ratio = min_ratio.min(lo_pos);
    }
    let m_max = len;
    let half = m_max / 2;
    // h(m) - m mu, written as max_affine on reversed slopes.
    let eval = |mu: f64| {
        let mut best = f64::NEG_INFINITY;
        for (m, &x) in h.iter().enumerate() {
            best = best.max(x - m as f64 * mu);
        }
        let active = h.iter().enumerate().position(|(m, &x)| x - m as f64 * mu >= best - ACTIVE_TOL).unwrap_or(0);
        (best, active)
    };
    let admissible = |mu: f64| {
        let (g, active) = eval(mu);
        active <= half && g <= LOG_D_CAP
    };
    let mu = if admissible(0.0) {
        0.0
    } else {
        let mut hi = 1.0;
        while !admissible(hi) {
            hi *= 2.0;
            if hi > 1e12 {
                fit.reason = Some("no finite rate makes the envelope admissible".into());
                return fit;
            }
        }
        // infimum: bisect on the complement.
        let (mut a, mut b) = (0.0, hi);
        for _ in 0..300 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if admissible(m) {
                b = m;
            } else {
                a = m;
            }
        }
        b
    };
    let (g, active) = eval(mu);
    fit.feasible = true;
    fit.mu = mu;
    fit.d_fi_log = g.max(0.0);
    fit.nu = if h.len() > 1 { h[1] } else { 0.0 };
    fit.max_ratio_log = max_ratio;
    fit.min_ratio_log = min_ratio;
    fit.active_m = active;
    fit.ui = ui_fit(c, d, &h);
    fit.h = h;
    fit
}

fn ui_fit(c: &Cocycle, d: usize, h: &[f64]) -> Option<UiFit> {
    let upper = c.log_norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lower = f64::INFINITY;
    for a in &c.ops {
        let inv = linalg::inverse(a)?;
        let ni = norms::operator_norm(&inv, &c.ns).upper;
        if !(ni.is_finite() && ni > 0.0) {
            return None;
        }
        lower = lower.min(-ni.ln());
    }
    let mu_ui = d as f64 * (upper - lower);
    let excess = h
        .iter()
        .enumerate()
        .map(|(m, &x)| x - m as f64 * mu_ui)
        .fold(f64::NEG_INFINITY, f64::max);
    Some(UiFit {
        m_star_upper_log: upper,
        m_star_lower_log: lower,
        mu_ui,
        holds: excess <= 1e-9 * (1.0 + mu_ui * h.len() as f64),
        max_excess_log: excess,
    })
}

/// Both hypothesis fits for one index.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisFit {
    pub d: usize,
    pub svg: SvgFit,
    pub fi: FiFit,
    /// Constants are certified on the window data only.
    pub window_certified: bool,
}

impl HypothesisFit {
    pub fn feasible(&self) -> bool {
        self.svg.feasible && self.fi.feasible
    }
}

pub fn fit_hypotheses(c: &Cocycle, t: &SigmaTable, grid: &TauGrid) -> HypothesisFit {
    HypothesisFit { d: t.d, svg: fit_svg(c, t, grid), fi: fit_fi(c, t), window_certified: true }
}

/// `log f_m(k)` for `m = 0..=m_max`, where
/// `f_m(k) = inf_n Sigma_d(k-m, m+n) / (Sigma_d(k-m, m) Sigma_d(k, n))`.
pub fn f_sequence(t: &SigmaTable, k: i64, m_max: usize) -> Result<Vec<f64>> {
    let jk = t.local(k, 0)?;
    if m_max > jk {
        return Err(Error::OutOfWindow(format!("f_{m_max}({k}) needs k - m >= {}", t.offset)));
    }
    let mut out = Vec::with_capacity(m_max + 1);
    for m in 0..=m_max {
        let j = jk - m;
        let mut best = f64::INFINITY;
        for n in 0..=(t.len - jk) {
            let r = t.log_jacobian_local(j, m + n) - t.log_jacobian_local(j, m) - t.log_jacobian_local(jk, n);
            best = best.min(r);
        }
        out.push(best);
    }
    Ok(out)
}

/// Largest violation of `log f_{m1+m2}(k) >= log f_{m1}(k) + log f_{m2}(k-m1)`
/// over the window (negative or zero when the law holds).
pub fn supermultiplicativity_defect(t: &SigmaTable) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    let start = t.offset;
    for jk in 0..=t.len {
        let k = start + jk as i64;
        let f_k = match f_sequence(t, k, jk) {
            Ok(f) => f,
            Err(_) => continue,
        };
        for m1 in 0..=jk {
            let f_shift = match f_sequence(t, k - m1 as i64, jk - m1) {
                Ok(f) => f,
                Err(_) => continue,
            };
            for m2 in 0..=(jk - m1) {
                let lhs = f_k[m1 + m2];
                let rhs = f_k[m1] + f_shift[m2];
                if lhs.is_finite() && rhs.is_finite() {
                    worst = worst.max(rhs - lhs);
                }
            }
        }
    }
    worst
}
