//! Seeded cocycle generators. A seed fully determines the window.

use crate::cocycle::Cocycle;
use crate::error::{Error, Result};
use crate::norms::NormSpec;
use crate::oracle;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Diag,
    DiagRot,
    RankDeficient,
    UniformInvertible,
    PerturbedHyperbolic,
    ConjugatedHyperbolic,
}

impl EnsembleKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "diag" => Self::Diag,
            "diag-rot" => Self::DiagRot,
            "rank-deficient" => Self::RankDeficient,
            "uniform-invertible" => Self::UniformInvertible,
            "perturbed-hyperbolic" => Self::PerturbedHyperbolic,
            "conjugated-hyperbolic" => Self::ConjugatedHyperbolic,
            other => return Err(Error::Parse(format!("unknown ensemble kind {other:?}"))),
        })
    }

    pub fn all() -> [Self; 6] {
        [
            Self::Diag,
            Self::DiagRot,
            Self::RankDeficient,
            Self::UniformInvertible,
            Self::PerturbedHyperbolic,
            Self::ConjugatedHyperbolic,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub kind: EnsembleKind,
    pub n: usize,
    pub length: usize,
    pub seed: u64,
    /// Diagonal log-rates, non-increasing; default spreads `log 2 .. -log 2`.
    pub log_rates: Option<Vec<f64>>,
    /// Rotation step per index for `diag-rot`.
    pub angle: f64,
    /// Entry-wise noise amplitude for the perturbed kinds.
    pub noise: f64,
    /// Index whose fast space the ground truth describes.
    pub d: usize,
    pub offset: i64,
    pub norm: NormSpec,
}

impl EnsembleParams {
    pub fn new(kind: EnsembleKind, n: usize, length: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            length,
            seed,
            log_rates: None,
            angle: 0.3,
            noise: 1e-3,
            d: 1,
            offset: 0,
            norm: NormSpec::hilbert(n),
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        match &self.log_rates {
            Some(r) => r.clone(),
            None if self.n == 1 => vec![std::f64::consts::LN_2],
            None => (0..self.n)
                .map(|i| std::f64::consts::LN_2 * (1.0 - 2.0 * i as f64 / (self.n - 1) as f64))
                .collect(),
        }
    }
}

/// A generated window with its analytic splitting when one is known.
#[derive(Clone, Debug)]
pub struct Generated {
    pub cocycle: Cocycle,
    /// `(E_k, F_k)` bases for `k = offset ..= offset + length`.
    pub truth: Option<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)>,
}

pub fn generate(params: &EnsembleParams) -> Result<Generated> {
    let n = params.n;
    let len = params.length;
    if n == 0 || len < 2 {
        return Err(Error::InvalidArgument("need n >= 1 and length >= 2".into()));
    }
    if params.norm.dim != n {
        return Err(Error::DimensionMismatch { expected: n, got: params.norm.dim });
    }
    let rates = params.rates();
    if rates.len() != n || rates.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument(format!("need {n} finite log-rates")));
    }
    if !(params.noise >= 0.0 && params.noise.is_finite() && params.angle.is_finite()) {
        return Err(Error::InvalidArgument("noise and angle must be finite, noise >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(n, rates.iter().map(|l| l.exp())));
    let conj = |rotations: Vec<DMatrix<f64>>, rates: &[f64]| -> Result<Generated> {
        let g = oracle::conjugated_hyperbolic(&rotations, rates, params.d, params.offset, params.norm)?;
        Ok(Generated { cocycle: g.cocycle, truth: Some((g.fast, g.slow)) })
    };
    match params.kind {
        EnsembleKind::Diag => {
            let ops = vec![diag; len];
            let c = Cocycle::new(params.offset, ops, params.norm)?;
            let truth = split_truth(&rates, params.d, len);
            Ok(Generated { cocycle: c, truth })
        }
        EnsembleKind::DiagRot => {
            if n < 2 {
                return Err(Error::InvalidArgument("diag-rot needs n >= 2".into()));
            }
            let rot = (0..=len).map(|k| oracle::givens(n, 0, 1, params.angle * k as f64)).collect();
            conj(rot, &rates)
        }
        EnsembleKind::ConjugatedHyperbolic => {
            let rot = (0..=len).map(|_| oracle::random_rotation(n, &mut rng)).collect();
            conj(rot, &rates)
        }
        EnsembleKind::RankDeficient => {
            let rot: Vec<DMatrix<f64>> = (0..=len).map(|_| oracle::random_rotation(n, &mut rng)).collect();
            let mut ops = Vec::with_capacity(len);
            let mut d = diag.clone();
            d[(n - 1, n - 1)] = 0.0;
            for w in rot.windows(2) {
                ops.push(&w[1] * &d * w[0].transpose());
            }
            let c = Cocycle::new(params.offset, ops, params.norm)?;
            let truth = if params.d < n {
                Some((
                    rot.iter().map(|r| r.columns(0, params.d).into_owned()).collect(),
                    rot.iter().map(|r| r.columns(params.d, n - params.d).into_owned()).collect(),
                ))
            } else {
                None
            };
            Ok(Generated { cocycle: c, truth })
        }
        EnsembleKind::UniformInvertible | EnsembleKind::PerturbedHyperbolic => {
            let mut ops = Vec::with_capacity(len);
            for _ in 0..len {
                let noise = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)) * params.noise;
                let a = if params.kind == EnsembleKind::UniformInvertible {
                    let s = DVector::from_fn(n, |i, _| (rates[i] + rng.gen_range(-0.05..0.05)).exp());
                    DMatrix::from_diagonal(&s) + noise
                } else {
                    &diag + noise
                };
                ops.push(a);
            }
            Ok(Generated { cocycle: Cocycle::new(params.offset, ops, params.norm)?, truth: None })
        }
    }
}

type Truth = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

fn split_truth(rates: &[f64], d: usize, len: usize) -> Option<Truth> {
    let n = rates.len();
    if d == 0 || d >= n || rates[d - 1] <= rates[d] || rates.windows(2).any(|w| w[0] < w[1]) {
        return None;
    }
    let id = DMatrix::<f64>::identity(n, n);
    let e = id.columns(0, d).into_owned();
    let f = id.columns(d, n - d).into_owned();
    Some((vec![e; len + 1], vec![f; len + 1]))
}
