//! Dense real vectors and small symmetric positive-definite solves.
//!
//! Everything here is sized for spans of at most a few dozen atoms, so the
//! Gram matrix of a span is rebuilt and refactored on every call.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots at or below this value are treated as a breakdown of the factorization.
const MIN_PIVOT: f64 = 1e-14;

/// A dense, finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some((index, &value)) = entries.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector dimension must be positive");
        Self(vec![0.0; dim])
    }

    /// The `index`-th standard basis vector of `R^dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[index] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|x| x * factor).collect())
    }

    /// `self - other`; panics on dimension mismatch.
    pub fn sub(&self, other: &Vector) -> Self {
        assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self += alpha * other`; panics on dimension mismatch.
    pub fn axpy(&mut self, alpha: f64, other: &Vector) {
        assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    /// `sum_i coeffs[i] * atoms[i]` in dimension `dim`.
    pub fn combination(dim: usize, atoms: &[&Vector], coeffs: &[f64]) -> Self {
        assert_eq!(atoms.len(), coeffs.len());
        let mut out = Self::zeros(dim);
        for (atom, &c) in atoms.iter().zip(coeffs) {
            out.axpy(c, atom);
        }
        out
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

/// Unchecked dot product over equal-length slices.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Inner product `sum_i u_i v_i`.
pub fn inner(u: &Vector, v: &Vector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    Ok(dot(u.as_slice(), v.as_slice()))
}

/// Symmetric matrix of pairwise inner products, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
}

impl GramMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyVector);
        }
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        for row in 0..n {
            for col in row + 1..n {
                let (a, b) = (values[row * n + col], values[col * n + row]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(Error::NotSymmetric { row, col });
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn from_atoms(atoms: &[&Vector]) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(Error::EmptyVector);
        }
        let dim = atoms[0].dim();
        if let Some(bad) = atoms.iter().find(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let g = dot(atoms[i].as_slice(), atoms[j].as_slice());
                values[i * n + j] = g;
                values[j * n + i] = g;
            }
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `G * x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        self.values.chunks_exact(self.n).map(|row| dot(row, x)).collect()
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(self)
    }
}

/// Lower-triangular factor `L` with `G = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
    smallest_pivot: f64,
}

impl Cholesky {
    fn factor(g: &GramMatrix) -> Result<Self> {
        let n = g.n;
        let mut lower = vec![0.0; n * n];
        let mut smallest_pivot = f64::INFINITY;
        for i in 0..n {
            for j in 0..=i {
                let s = g.get(i, j) - dot(&lower[i * n..i * n + j], &lower[j * n..j * n + j]);
                if i == j {
                    smallest_pivot = smallest_pivot.min(s);
                    if !(s > MIN_PIVOT) {
                        return Err(Error::NonPositivePivot { index: i, pivot: s });
                    }
                    lower[i * n + i] = s.sqrt();
                } else {
                    lower[i * n + j] = s / lower[j * n + j];
                }
            }
        }
        Ok(Self {
            n,
            lower,
            smallest_pivot,
        })
    }

    /// Smallest Schur-complement pivot seen during factorization.
    pub fn smallest_pivot(&self) -> f64 {
        self.smallest_pivot
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        let l = &self.lower;
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = (rhs[i] - dot(&l[i * n..i * n + i], &y[..i])) / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        x
    }
}

/// Solves `G c = rhs` for symmetric positive-definite `G`.
pub fn solve_spd(g: &GramMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != g.n {
        return Err(Error::DimensionMismatch {
            expected: g.n,
            found: rhs.len(),
        });
    }
    Ok(g.cholesky()?.solve(rhs))
}

/// Orthogonal projection of a vector onto the span of a few atoms.
#[derive(Debug, Clone)]
pub struct Projection {
    pub projection: Vector,
    pub residual: Vector,
    /// Expansion of `projection` over the atoms, in the order given.
    pub coeffs: Vec<f64>,
}

/// Projects `v` onto `span(atoms)` through the normal equations.
///
/// One step of iterative refinement is applied to the coefficients, which
/// keeps the residual orthogonal to every atom at the 1e-15 level even for
/// mildly ill-conditioned spans.
pub fn project_onto_span(atoms: &[&Vector], v: &Vector) -> Result<Projection> {
    let dim = v.dim();
    if let Some(bad) = atoms.iter().find(|a| a.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    if atoms.is_empty() {
        return Ok(Projection {
            projection: Vector::zeros(dim),
            residual: v.clone(),
            coeffs: Vec::new(),
        });
    }
    let gram = GramMatrix::from_atoms(atoms)?;
    let chol = match gram.cholesky() {
        Ok(c) => c,
        Err(Error::NonPositivePivot { pivot, .. }) => {
            return Err(Error::ProjectionFailed {
                atom_count: atoms.len(),
                smallest_pivot: pivot,
            })
        }
        Err(e) => return Err(e),
    };
    let rhs: Vec<f64> = atoms.iter().map(|a| dot(a.as_slice(), v.as_slice())).collect();
    let mut coeffs = chol.solve(&rhs);

    let residual = v.sub(&Vector::combination(dim, atoms, &coeffs));
    let correction_rhs: Vec<f64> = atoms
        .iter()
        .map(|a| dot(a.as_slice(), residual.as_slice()))
        .collect();
    for (c, delta) in coeffs.iter_mut().zip(chol.solve(&correction_rhs)) {
        *c += delta;
    }

    let projection = Vector::combination(dim, atoms, &coeffs);
    let residual = v.sub(&projection);
    Ok(Projection {
        projection,
        residual,
        coeffs,
    })
}
