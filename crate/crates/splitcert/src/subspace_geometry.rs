//! Subspaces of `R^n`, their annihilators, gaps and graph operators.
//!
//! A [`Subspace`] always carries an orthonormal basis of itself and an
//! orthonormal basis of its annihilator (viewed in `R^n` via the standard
//! pairing), so dual constructions are a swap of the two.

use crate::error::{Error, Result};
use crate::linalg;
use crate::norms::{self, Bracket, NormSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Relative singular-value threshold for independence of spanning sets.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Subspace {
    basis: DMatrix<f64>,
    annihilator: DMatrix<f64>,
}

#[derive(Serialize)]
struct SubspaceRepr {
    ambient: usize,
    dim: usize,
    basis: Vec<Vec<f64>>,
}

impl Serialize for Subspace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SubspaceRepr {
            ambient: self.ambient(),
            dim: self.dim(),
            basis: self.basis.column_iter().map(|c| c.iter().copied().collect()).collect(),
        }
        .serialize(s)
    }
}

impl Subspace {
    /// Span of independent columns; errors if they are dependent.
    pub fn from_basis(cols: &DMatrix<f64>) -> Result<Self> {
        let s = Self::span(cols);
        if s.dim() != cols.ncols() {
            return Err(Error::RankDeficient { needed: cols.ncols() });
        }
        Ok(s)
    }

    /// Span of arbitrary columns.
    pub fn span(cols: &DMatrix<f64>) -> Self {
        let n = cols.nrows();
        let basis = linalg::orthonormal_basis(cols, RANK_TOL);
        let annihilator = linalg::complement(&basis, n);
        Subspace { basis, annihilator }
    }

    /// Common kernel of independent covectors.
    pub fn from_annihilator(covs: &DMatrix<f64>) -> Result<Self> {
        Ok(Self::from_basis(covs)?.perp())
    }

    pub fn zero(n: usize) -> Self {
        Subspace { basis: DMatrix::zeros(n, 0), annihilator: DMatrix::identity(n, n) }
    }

    pub fn whole(n: usize) -> Self {
        Subspace { basis: DMatrix::identity(n, n), annihilator: DMatrix::zeros(n, 0) }
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn codim(&self) -> usize {
        self.annihilator.ncols()
    }

    /// Orthonormal basis (columns).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Orthonormal basis of the annihilator (columns, as covectors).
    pub fn annihilator(&self) -> &DMatrix<f64> {
        &self.annihilator
    }

    /// The annihilator as a subspace of the dual space.
    pub fn perp(&self) -> Self {
        Subspace { basis: self.annihilator.clone(), annihilator: self.basis.clone() }
    }

    /// `A(self)`, with dimension dropping if `A` is not injective here.
    pub fn image(&self, a: &DMatrix<f64>) -> Self {
        Self::span(&(a * &self.basis))
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// True when `self ∩ other = {0}`.
    pub fn is_transverse(&self, other: &Subspace) -> bool {
        let stacked = hstack(&self.basis, &other.basis);
        linalg::rank(&stacked, RANK_TOL) == self.dim() + other.dim()
    }
}

pub(crate) fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    m
}

fn check_ambient(m: &Subspace, n: &Subspace, ns: &NormSpec) -> Result<()> {
    if m.ambient() != ns.dim {
        return Err(Error::DimensionMismatch { expected: ns.dim, got: m.ambient() });
    }
    if n.ambient() != ns.dim {
        return Err(Error::DimensionMismatch { expected: ns.dim, got: n.ambient() });
    }
    Ok(())
}

/// A gap value with its certified bracket.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GapEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub exact: bool,
    /// Set when the subspaces intersect nontrivially (minimal gap is 0).
    pub intersecting: bool,
}

impl GapEstimate {
    fn exact(v: f64) -> Self {
        GapEstimate { value: v, lower: v, upper: v, exact: true, intersecting: false }
    }
}

/// Multistart budget for `l^p` suprema over unit spheres of subspaces.
pub const STARTS_PER_DIM: usize = 32;
/// Sizes above which the non-polyhedral `l^p` supremum falls back to the
/// certified comparison bound.
pub const LP_SUP_MAX_DIM: usize = 3;
pub const LP_SUP_MAX_N: usize = 8;

/// Distance from `u` to `N` in the norm, with a dual lower bound.
#[derive(Clone, Debug)]
pub struct Distance {
    pub primal: f64,
    pub dual: f64,
    /// Unit covector in `N^perp` achieving `dual`.
    pub certificate: DVector<f64>,
}

pub fn distance(u: &DVector<f64>, n: &Subspace, ns: &NormSpec) -> Distance {
    let p = ns.p;
    let near = norms::nearest_point(u, n.basis(), p);
    if n.codim() == 0 {
        return Distance { primal: 0.0, dual: 0.0, certificate: DVector::zeros(u.len()) };
    }
    let y = n.annihilator();
    let (cert, dual) = if p == 1.0 || p.is_infinite() {
        let q = ns.q();
        let sm = norms::max_linear_on_section(&(y.transpose() * u), y, n.basis(), q);
        let phi = y * &sm.argmax;
        (phi, sm.value)
    } else {
        let phi0 = norms::align(&near.residual, ns.q());
        let mut phi = y * (y.transpose() * phi0);
        let nq = norms::lp_norm(phi.as_slice(), ns.q());
        if nq > 0.0 {
            phi /= nq;
        }
        let v = phi.dot(u);
        if v < 0.0 {
            phi.neg_mut();
        }
        (phi, v.abs())
    };
    Distance { primal: near.value, dual: dual.min(near.value), certificate: cert }
}

/// Maximal gap `delta(M, N) = sup { dist(u, N) : u in M, ||u|| = 1 }`.
pub fn max_gap(m: &Subspace, n: &Subspace, ns: &NormSpec) -> Result<GapEstimate> {
    check_ambient(m, n, ns)?;
    if m.dim() == 0 {
        return Ok(GapEstimate::exact(0.0));
    }
    if n.dim() == 0 {
        return Ok(GapEstimate::exact(1.0));
    }
    if ns.is_euclidean() {
        let c = n.annihilator().transpose() * m.basis();
        return Ok(GapEstimate::exact(linalg::spectral_norm(&c).min(1.0)));
    }
    let p = ns.p;
    let polyhedral = p == 1.0 || p.is_infinite();
    let comparison = comparison_bound(m, n, ns);
    if polyhedral && ns.dim <= LP_SUP_MAX_N {
        let mut best = 0.0f64;
        for c in norms::section_vertices(m.basis(), p) {
            let u = m.basis() * c;
            best = best.max(norms::nearest_point(&u, n.basis(), p).value);
        }
        let v = best.min(1.0);
        return Ok(GapEstimate::exact(v));
    }
    if m.dim() == 1 {
        // the unit sphere of a line is {u, -u}
        let u = m.basis().column(0).into_owned();
        let u = &u / norms::lp_norm(u.as_slice(), p);
        let dist = distance(&u, n, ns);
        let upper = dist.primal.min(comparison);
        let lower = dist.dual.min(upper);
        return Ok(GapEstimate { value: upper, lower, upper, exact: upper - lower <= 1e-12 * upper, intersecting: false });
    }
    if n.codim() == 1 {
        // dist(u, ker y) = |y(u)| / ||y||_q, so the supremum is a convex
        // maximization of y over the unit ball of M
        let y = n.annihilator().column(0).into_owned();
        let ny = norms::lp_norm(y.as_slice(), ns.q());
        let sm = norms::max_linear_on_section(&(m.basis().transpose() * &y), m.basis(), m.annihilator(), p);
        let lower = (sm.value.abs() / ny).min(comparison);
        let upper = (sm.upper / ny).min(comparison).max(lower);
        return Ok(GapEstimate { value: lower, lower, upper, exact: upper - lower <= 1e-12 * upper, intersecting: false });
    }
    if m.dim() > LP_SUP_MAX_DIM || ns.dim > LP_SUP_MAX_N {
        return Ok(GapEstimate { value: comparison, lower: 0.0, upper: comparison, exact: false, intersecting: false });
    }
    let (primal, dual) = ascend_distance(m, n, ns);
    Ok(GapEstimate {
        value: primal.min(comparison),
        lower: dual.min(comparison),
        upper: comparison,
        exact: false,
        intersecting: false,
    })
}

/// `min(1, n^{|1/p - 1/2|} ||(I - P_N) Q_M||_2)`, an upper bound on `delta(M, N)`.
fn comparison_bound(m: &Subspace, n: &Subspace, ns: &NormSpec) -> f64 {
    let c = n.annihilator().transpose() * m.basis();
    let f = (ns.dim as f64).powf((1.0 / ns.p - 0.5).abs());
    (f * linalg::spectral_norm(&c)).min(1.0)
}

/// Alternating ascent of the convex function `u -> dist(u, N)` over the unit
/// sphere of `M`; each step maximizes the current dual certificate.
fn ascend_distance(m: &Subspace, n: &Subspace, ns: &NormSpec) -> (f64, f64) {
    let k = m.dim();
    let p = ns.p;
    let bm = m.basis();
    let mann = m.annihilator();
    let mut starts: Vec<DVector<f64>> = Vec::new();
    let c = n.annihilator().transpose() * bm;
    starts.push(linalg::svd(&c).v.column(0).into_owned());
    for j in 0..k {
        starts.push(DVector::from_fn(k, |i, _| if i == j { 1.0 } else { 0.0 }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a9_0000 + (k * 31 + ns.dim) as u64);
    while starts.len() < STARTS_PER_DIM * k {
        starts.push(DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)));
    }
    let mut best_primal = 0.0f64;
    let mut best_dual = 0.0f64;
    for c0 in starts {
        let nb = norms::lp_norm((bm * &c0).as_slice(), p);
        if nb == 0.0 {
            continue;
        }
        let mut dist = distance(&(bm * (c0 / nb)), n, ns);
        for _ in 0..100 {
            let psi = bm.transpose() * &dist.certificate;
            let sm = norms::max_linear_on_section(&psi, bm, mann, p);
            let next = distance(&(bm * &sm.argmax), n, ns);
            if next.dual > dist.dual * (1.0 + 1e-13) {
                dist = next;
            } else {
                break;
            }
        }
        best_primal = best_primal.max(dist.primal);
        best_dual = best_dual.max(dist.dual);
    }
    (best_primal, best_dual)
}

/// Minimal gap `gamma(M, N) = inf { dist(u, N) : u in M, ||u|| = 1 }`.
///
/// Computed as `1 / ||pi_{M|N}||` on `M ⊕ N`; zero (flagged) when the
/// subspaces intersect.
pub fn min_gap(m: &Subspace, n: &Subspace, ns: &NormSpec) -> Result<GapEstimate> {
    check_ambient(m, n, ns)?;
    if m.dim() == 0 || n.dim() == 0 {
        return Ok(GapEstimate::exact(1.0));
    }
    if !m.is_transverse(n) {
        return Ok(GapEstimate { value: 0.0, lower: 0.0, upper: 0.0, exact: true, intersecting: true });
    }
    if ns.is_euclidean() {
        let c = n.annihilator().transpose() * m.basis();
        return Ok(GapEstimate::exact(linalg::min_singular(&c).min(1.0)));
    }
    let pn = projector_norm(m, n, ns)?;
    Ok(GapEstimate {
        value: 1.0 / pn.lower,
        lower: 1.0 / pn.upper,
        upper: 1.0 / pn.lower,
        exact: pn.is_exact(),
        intersecting: false,
    })
}

/// Norm of the projection onto `M` along `N`, restricted to `M ⊕ N`.
pub fn projector_norm(m: &Subspace, n: &Subspace, ns: &NormSpec) -> Result<Bracket> {
    check_ambient(m, n, ns)?;
    if !m.is_transverse(n) {
        return Err(Error::NotComplementary("M and N intersect".into()));
    }
    let b = hstack(m.basis(), n.basis());
    let l = hstack(m.basis(), &DMatrix::zeros(ns.dim, n.dim()));
    Ok(norms::restricted_norm(&l, &b, ns.p, ns.p))
}

/// Symmetrized gap `max(delta(M, N), delta(N, M))`.
pub fn symmetric_gap(m: &Subspace, n: &Subspace, ns: &NormSpec) -> Result<f64> {
    Ok(max_gap(m, n, ns)?.value.max(max_gap(n, m, ns)?.value))
}

/// A linear map `Theta` from `domain` to `codomain`, stored as the matrix
/// `T` with `Theta(B_dom c) = B_cod (T c)`.
#[derive(Clone, Debug)]
pub struct GraphOperator {
    pub domain_basis: DMatrix<f64>,
    pub codomain_basis: DMatrix<f64>,
    pub matrix: DMatrix<f64>,
    pub ns: NormSpec,
}

impl GraphOperator {
    /// `Theta` as an `n x dim(domain)` matrix acting on coefficients.
    pub fn action(&self) -> DMatrix<f64> {
        &self.codomain_basis * &self.matrix
    }

    pub fn norm(&self) -> Bracket {
        norms::restricted_norm(&self.action(), &self.domain_basis, self.ns.p, self.ns.p)
    }

    /// `||Id ⊕ Theta||` on the domain.
    pub fn id_plus_norm(&self) -> Bracket {
        norms::restricted_norm(&(&self.domain_basis + self.action()), &self.domain_basis, self.ns.p, self.ns.p)
    }

    /// The graph `{v + Theta v}`.
    pub fn graph(&self) -> Subspace {
        Subspace::span(&(&self.domain_basis + self.action()))
    }

    /// `Theta - other`, both defined on the same bases.
    pub fn difference(&self, other: &GraphOperator) -> Result<GraphOperator> {
        if self.matrix.shape() != other.matrix.shape() {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows(), got: other.matrix.nrows() });
        }
        let d_bases = (&self.domain_basis - &other.domain_basis).amax() + (&self.codomain_basis - &other.codomain_basis).amax();
        if d_bases > 1e-12 {
            return Err(Error::InvalidArgument("graph operators use different bases".into()));
        }
        Ok(GraphOperator { matrix: &self.matrix - &other.matrix, ..self.clone() })
    }
}

/// `Theta in B(over, along)` with `target = Graph(Theta)`.
pub fn graph_of(target: &Subspace, over: &Subspace, along: &Subspace, ns: &NormSpec) -> Result<GraphOperator> {
    check_ambient(over, along, ns)?;
    let n = ns.dim;
    if over.dim() + along.dim() != n || !over.is_transverse(along) {
        return Err(Error::NotComplementary("graph frame is not a direct sum".into()));
    }
    if target.dim() != over.dim() {
        return Err(Error::DimensionMismatch { expected: over.dim(), got: target.dim() });
    }
    let frame = hstack(over.basis(), along.basis());
    let coeffs = linalg::solve(&frame, target.basis())
        .ok_or_else(|| Error::NotComplementary("singular frame".into()))?;
    let d = over.dim();
    let alpha = coeffs.rows(0, d).into_owned();
    let beta = coeffs.rows(d, n - d).into_owned();
    let ainv = linalg::solve(&alpha, &DMatrix::identity(d, d))
        .ok_or_else(|| Error::NotComplementary("target meets the codomain".into()))?;
    Ok(GraphOperator {
        domain_basis: over.basis().clone(),
        codomain_basis: along.basis().clone(),
        matrix: beta * ainv,
        ns: *ns,
    })
}

/// The dual graph operator `Theta^perp : V0^perp -> U0^perp`, where
/// `Theta : V0 -> U0`. Its graph is the annihilator of `Graph(Theta)`.
pub fn perp_graph(theta: &GraphOperator) -> Result<GraphOperator> {
    let (eta, xi) = linalg::dual_frame(&theta.codomain_basis, &theta.domain_basis)
        .ok_or_else(|| Error::NotComplementary("graph frame is not a direct sum".into()))?;
    Ok(GraphOperator {
        domain_basis: eta,
        codomain_basis: xi,
        matrix: -theta.matrix.transpose(),
        ns: theta.ns.dual(),
    })
}
