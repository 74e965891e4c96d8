//! Exact best m-term approximation by exhaustive support enumeration, and
//! planted instances with a known reference decomposition.
//!
//! Enumeration walks supports in lexicographic order, depth first, carrying
//! a Cholesky factor of the prefix Gram matrix. Extending a prefix by one
//! atom costs one triangular row, so a support of size `m` is scored in
//! `O(m^2)` from the precomputed dictionary Gram matrix and the correlation
//! vector `<f, phi_i>`. The score `b^T G^{-1} b` is `||P f||^2`; supports whose
//! score lies near the best are re-evaluated by explicit projection before
//! the winner and its lexicographic tie-break are decided.

use std::sync::OnceLock;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{project_onto_span, Vector};
use crate::rng::{self, Stream};

pub const DEFAULT_BUDGET: u64 = 50_000_000;

/// Supports within this fraction of `||f||^2` of the best fast score are
/// re-evaluated exactly.
const SHORTLIST_TOL: f64 = 1e-9;

/// Exact residual norms within this fraction of `||f||` count as ties.
pub const TIE_TOL: f64 = 1e-12;

/// Prefix pivots below this are treated as linearly dependent supports.
const MIN_PIVOT: f64 = 1e-12;

const PLANT_RETRIES: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestTermResult {
    pub m: usize,
    pub support: Vec<usize>,
    /// Coefficients `a_j` over `support`, in the same order.
    pub coeffs: Vec<f64>,
    pub sigma: f64,
    pub v0: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExactOracle,
    Planted,
}

/// `f = sum_j a_j psi_j + v0` with `v0` orthogonal to every `psi_j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceDecomposition {
    pub support: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub v0: Vector,
    pub v0_norm: f64,
    pub provenance: Provenance,
}

impl ReferenceDecomposition {
    pub fn m(&self) -> usize {
        self.support.len()
    }

    /// Checks distinct support and `|<v0, psi_j>| <= 1e-10 (||v0|| + max|a_j|)`.
    pub fn validate(&self, dict: &Dictionary) -> Result<()> {
        let mut seen = vec![false; dict.len()];
        for &j in &self.support {
            if j >= dict.len() {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    count: dict.len(),
                });
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::RepeatedIndex(j));
            }
        }
        dict.check_dim(&self.v0)?;
        let scale = self.v0_norm + self.coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        for &j in &self.support {
            let g = dict.correlate(j, self.v0.as_slice());
            if g.abs() > 1e-10 * scale {
                return Err(Error::InvalidArgument(format!(
                    "remainder not orthogonal to atom {j}: {g:e}"
                )));
            }
        }
        Ok(())
    }
}

impl From<BestTermResult> for ReferenceDecomposition {
    fn from(best: BestTermResult) -> Self {
        Self {
            support: best.support,
            coeffs: best.coeffs,
            v0_norm: best.sigma,
            v0: best.v0,
            provenance: Provenance::ExactOracle,
        }
    }
}

/// `binomial(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(x) => x / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Exhaustive best m-term solver bound to one dictionary. The dictionary
/// Gram matrix is built on first use and shared by every later query.
pub struct ExhaustiveOracle<'a> {
    dict: &'a Dictionary,
    budget: u64,
    gram: OnceLock<Vec<f64>>,
}

impl<'a> ExhaustiveOracle<'a> {
    pub fn new(dict: &'a Dictionary) -> Self {
        Self::with_budget(dict, DEFAULT_BUDGET)
    }

    pub fn with_budget(dict: &'a Dictionary, budget: u64) -> Self {
        Self {
            dict,
            budget,
            gram: OnceLock::new(),
        }
    }

    pub fn dictionary(&self) -> &'a Dictionary {
        self.dict
    }

    /// Fails fast when `binomial(N, m)` is over budget.
    pub fn check_budget(&self, m: usize) -> Result<()> {
        let count = binomial(self.dict.len(), m);
        if count > self.budget as u128 {
            return Err(Error::BudgetExceeded {
                count,
                budget: self.budget,
            });
        }
        Ok(())
    }

    pub fn best_m_term(&self, f: &Vector, m: usize) -> Result<BestTermResult> {
        let dict = self.dict;
        dict.check_dim(f)?;
        if m > dict.dim() || m > dict.len() {
            return Err(Error::InvalidArgument(format!(
                "m = {m} exceeds dimension {} or atom count {}",
                dict.dim(),
                dict.len()
            )));
        }
        self.check_budget(m)?;
        let f_norm = f.norm();
        if m == 0 || f_norm == 0.0 {
            return self.exact(f, (0..m).collect());
        }

        let corr = dict.correlations(f)?;
        let f_sq = f_norm * f_norm;
        let shortlist = if m == 1 {
            let best = corr.iter().fold(0.0f64, |a, c| a.max(c * c));
            (0..dict.len())
                .filter(|&i| corr[i] * corr[i] >= best - SHORTLIST_TOL * f_sq)
                .map(|i| vec![i as u32])
                .collect()
        } else {
            let gram = self.gram.get_or_init(|| dict.gram());
            enumerate(gram, &corr, dict.len(), m, SHORTLIST_TOL * f_sq)
        };

        let mut evaluated = shortlist
            .into_iter()
            .map(|s| {
                let support: Vec<usize> = s.into_iter().map(|i| i as usize).collect();
                self.exact(f, support)
            })
            .collect::<Result<Vec<_>>>()?;
        let min_sigma = evaluated.iter().map(|r| r.sigma).fold(f64::INFINITY, f64::min);
        evaluated.retain(|r| r.sigma <= min_sigma + TIE_TOL * f_norm);
        evaluated.sort_by(|a, b| a.support.cmp(&b.support));
        evaluated
            .into_iter()
            .next()
            .ok_or_else(|| Error::InvalidArgument("every support is linearly dependent".into()))
    }

    fn exact(&self, f: &Vector, support: Vec<usize>) -> Result<BestTermResult> {
        let atoms: Vec<&Vector> = support.iter().map(|&i| self.dict.atom(i)).collect();
        let proj = project_onto_span(&atoms, f)?;
        Ok(BestTermResult {
            m: support.len(),
            sigma: proj.residual.norm(),
            support,
            coeffs: proj.coeffs,
            v0: proj.residual,
        })
    }
}

/// Best m-term approximation with the default enumeration budget.
pub fn best_m_term(dict: &Dictionary, f: &Vector, m: usize) -> Result<BestTermResult> {
    ExhaustiveOracle::new(dict).best_m_term(f, m)
}

/// Depth-first walk over all m-subsets with an incrementally extended
/// Cholesky factor. Returns supports whose score is within `tol` of the best.
fn enumerate(gram: &[f64], corr: &[f64], n: usize, m: usize, tol: f64) -> Vec<Vec<u32>> {
    let partial: Vec<Walker> = (0..=n - m)
        .into_par_iter()
        .map(|first| {
            let mut w = Walker::new(gram, corr, n, m, tol);
            w.start(first);
            w
        })
        .collect();
    let best = partial.iter().map(|w| w.best).fold(f64::NEG_INFINITY, f64::max);
    partial
        .into_iter()
        .flat_map(|w| w.shortlist)
        .filter(|(score, _)| *score >= best - tol)
        .map(|(_, s)| s)
        .collect()
}

struct Walker<'g> {
    gram: &'g [f64],
    corr: &'g [f64],
    n: usize,
    m: usize,
    tol: f64,
    idx: Vec<usize>,
    // row-major m x m lower-triangular factor of the prefix Gram
    lower: Vec<f64>,
    // forward-substituted correlations, L y = b
    y: Vec<f64>,
    // prefix scores ||y[..=t]||^2
    score: Vec<f64>,
    best: f64,
    shortlist: Vec<(f64, Vec<u32>)>,
}

impl<'g> Walker<'g> {
    fn new(gram: &'g [f64], corr: &'g [f64], n: usize, m: usize, tol: f64) -> Self {
        Self {
            gram,
            corr,
            n,
            m,
            tol,
            idx: vec![0; m],
            lower: vec![0.0; m * m],
            y: vec![0.0; m],
            score: vec![0.0; m],
            best: f64::NEG_INFINITY,
            shortlist: Vec::new(),
        }
    }

    fn start(&mut self, first: usize) {
        let diag = self.gram[first * self.n + first];
        self.idx[0] = first;
        self.lower[0] = diag.sqrt();
        self.y[0] = self.corr[first] / self.lower[0];
        self.score[0] = self.y[0] * self.y[0];
        self.descend(1);
    }

    /// Fills row `t` of the factor for candidate atom `k`; returns the pivot.
    #[inline]
    fn extend_row(&mut self, t: usize, k: usize) -> f64 {
        let m = self.m;
        let mut pivot = self.gram[k * self.n + k];
        for s in 0..t {
            let mut v = self.gram[self.idx[s] * self.n + k];
            for r in 0..s {
                v -= self.lower[s * m + r] * self.lower[t * m + r];
            }
            v /= self.lower[s * m + s];
            self.lower[t * m + s] = v;
            pivot -= v * v;
        }
        pivot
    }

    #[inline]
    fn numerator(&self, t: usize, k: usize) -> f64 {
        let m = self.m;
        let mut num = self.corr[k];
        for s in 0..t {
            num -= self.lower[t * m + s] * self.y[s];
        }
        num
    }

    fn descend(&mut self, t: usize) {
        let m = self.m;
        let lo = self.idx[t - 1] + 1;
        let hi = self.n - (m - t);
        if t + 1 == m {
            let base = self.score[t - 1];
            for k in lo..=hi {
                let pivot = self.extend_row(t, k);
                if pivot <= MIN_PIVOT {
                    continue;
                }
                let num = self.numerator(t, k);
                let score = base + num * num / pivot;
                self.record(score, k);
            }
            return;
        }
        for k in lo..=hi {
            let pivot = self.extend_row(t, k);
            if pivot <= MIN_PIVOT {
                continue;
            }
            let diag = pivot.sqrt();
            self.lower[t * m + t] = diag;
            self.idx[t] = k;
            self.y[t] = self.numerator(t, k) / diag;
            self.score[t] = self.score[t - 1] + self.y[t] * self.y[t];
            self.descend(t + 1);
        }
    }

    #[inline]
    fn record(&mut self, score: f64, last: usize) {
        if score < self.best - self.tol {
            return;
        }
        if score > self.best {
            self.best = score;
            let floor = self.best - self.tol;
            if self.shortlist.len() > 64 {
                self.shortlist.retain(|(s, _)| *s >= floor);
            }
        }
        let mut support: Vec<u32> = self.idx[..self.m - 1].iter().map(|&i| i as u32).collect();
        support.push(last as u32);
        self.shortlist.push((score, support));
    }
}

/// Parameters of a planted `m`-sparse-plus-orthogonal-noise signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub m: usize,
    pub coeff_low: f64,
    pub coeff_high: f64,
    pub noise_norm: f64,
}

/// `f = sum_j a_j psi_j + v0` on `m` atoms drawn uniformly, `|a_j|` uniform in
/// `[coeff_low, coeff_high]` with random signs, and `v0` a Gaussian vector
/// projected onto the complement of the span and scaled to `noise_norm`.
pub fn plant_instance(
    dict: &Dictionary,
    spec: &PlantSpec,
    seed: u64,
) -> Result<(Vector, ReferenceDecomposition)> {
    let PlantSpec {
        m,
        coeff_low,
        coeff_high,
        noise_norm,
    } = *spec;
    if m == 0 || m > dict.len() {
        return Err(Error::InvalidArgument(format!("cannot plant {m} of {} atoms", dict.len())));
    }
    if m >= dict.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension {} leaves no room for noise orthogonal to {m} atoms",
            dict.dim()
        )));
    }
    if !(coeff_low > 0.0 && coeff_high >= coeff_low && noise_norm >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < coeff_low <= coeff_high and noise_norm >= 0, got {coeff_low}, {coeff_high}, {noise_norm}"
        )));
    }

    let mut rng = rng::seeded(seed, Stream::Instance);
    let mut support = sample(&mut rng, dict.len(), m).into_vec();
    support.sort_unstable();
    let coeffs: Vec<f64> = (0..m)
        .map(|_| {
            let magnitude = if coeff_high > coeff_low {
                rng.random_range(coeff_low..=coeff_high)
            } else {
                coeff_low
            };
            if rng.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();

    let atoms: Vec<&Vector> = support.iter().map(|&i| dict.atom(i)).collect();
    let mut v0 = None;
    for _ in 0..PLANT_RETRIES {
        let g = rng::gaussian_vector(&mut rng, dict.dim());
        let residual = project_onto_span(&atoms, &g)?.residual;
        let r = residual.norm();
        if r > 1e-8 * g.norm() {
            v0 = Some(residual.scaled(noise_norm / r));
            break;
        }
    }
    let v0 = v0.ok_or(Error::DegenerateComplement(PLANT_RETRIES))?;

    let mut f = Vector::combination(dict.dim(), &atoms, &coeffs);
    f.axpy(1.0, &v0);
    Ok((
        f,
        ReferenceDecomposition {
            support,
            coeffs,
            v0_norm: v0.norm(),
            v0,
            provenance: Provenance::Planted,
        },
    ))
}
