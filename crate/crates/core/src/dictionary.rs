//! Finite dictionaries of unit-norm atoms and their mutual coherence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Vector};
use crate::rng::{self, Stream};

/// Two atoms with `|<a, b>|` above this are duplicates or antipodes.
pub const DUPLICATE_THRESHOLD: f64 = 1.0 - 1e-10;

/// Loaded atoms must be unit norm to this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// Memory ceiling for generated dense dictionaries.
pub const MAX_DICTIONARY_BYTES: u128 = 1 << 30;

pub const DEFAULT_COHERENCE_RETRIES: usize = 64;

/// Largest coherence between distinct atoms, with the first pair attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub m_coherence: f64,
    pub witness_pair: (usize, usize),
}

impl CoherenceReport {
    /// `floor(1 / (20 M))`, the largest sparsity the Lebesgue bound covers.
    /// `None` when `M = 0`.
    pub fn regime_ceiling(&self) -> Option<usize> {
        regime_ceiling(self.m_coherence)
    }
}

pub fn regime_ceiling(m_coherence: f64) -> Option<usize> {
    if m_coherence <= 0.0 {
        None
    } else {
        Some((1.0 / (20.0 * m_coherence) + 1e-9).floor() as usize)
    }
}

/// `m <= 1/(20 M)`.
pub fn in_regime(m: usize, m_coherence: f64) -> bool {
    20.0 * m as f64 * m_coherence <= 1.0 + 1e-12
}

/// An ordered, immutable set of unit-norm atoms in `R^dim`.
///
/// The pairwise scan that rejects duplicate atoms also fixes the coherence,
/// so it is computed exactly once per dictionary.
#[derive(Debug, Clone)]
pub struct Dictionary {
    dim: usize,
    atoms: Vec<Vector>,
    label: String,
    // nonzero positions for atoms with at most dim/4 nonzeros
    sparse: Vec<Option<Vec<u32>>>,
    coherence: CoherenceReport,
}

impl PartialEq for Dictionary {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.label == other.label && self.atoms == other.atoms
    }
}

impl Dictionary {
    /// Normalizes every atom and rejects zero, duplicate and antipodal atoms.
    pub fn build(atoms: Vec<Vector>, label: impl Into<String>) -> Result<Self> {
        let dim = common_dim(&atoms)?;
        let mut normalized = Vec::with_capacity(atoms.len());
        for (index, atom) in atoms.into_iter().enumerate() {
            let norm = atom.norm();
            if norm == 0.0 {
                return Err(Error::ZeroAtom { index });
            }
            // leave exactly-normalized atoms untouched so files round-trip bit for bit
            if (norm - 1.0).abs() > 1e-15 {
                normalized.push(atom.scaled(1.0 / norm));
            } else {
                normalized.push(atom);
            }
        }
        Self::assemble(dim, normalized, label.into())
    }

    /// Accepts atoms only if they are already unit norm; used by the file loader.
    fn from_unit_atoms(atoms: Vec<Vector>, label: String) -> Result<Self> {
        let dim = common_dim(&atoms)?;
        Self::assemble(dim, atoms, label)
    }

    fn assemble(dim: usize, atoms: Vec<Vector>, label: String) -> Result<Self> {
        if atoms.len() < 2 {
            return Err(Error::TooFewAtoms(atoms.len()));
        }
        let sparse = atoms
            .iter()
            .map(|a| {
                let nz: Vec<u32> = (0..dim).filter(|&k| a[k] != 0.0).map(|k| k as u32).collect();
                (nz.len() * 4 <= dim).then_some(nz)
            })
            .collect();
        let mut dict = Self {
            dim,
            atoms,
            label: label.replace(['\n', '\r'], " "),
            sparse,
            coherence: CoherenceReport {
                m_coherence: 0.0,
                witness_pair: (0, 1),
            },
        };
        dict.coherence = dict.pairwise_scan()?;
        Ok(dict)
    }

    fn pairwise_scan(&self) -> Result<CoherenceReport> {
        let n = self.atoms.len();
        // per-row maxima in row order keep the witness independent of scheduling
        let rows: Vec<(f64, usize, Option<(usize, f64)>)> = (0..n - 1)
            .into_par_iter()
            .map(|i| {
                let mut best = (-1.0f64, i + 1);
                let mut duplicate = None;
                for j in i + 1..n {
                    let g = self.atom_dot(i, j).abs();
                    if g > best.0 {
                        best = (g, j);
                    }
                    if duplicate.is_none() && g > DUPLICATE_THRESHOLD {
                        duplicate = Some((j, g));
                    }
                }
                (best.0, best.1, duplicate)
            })
            .collect();
        let mut report = CoherenceReport {
            m_coherence: -1.0,
            witness_pair: (0, 1),
        };
        for (i, (g, j, duplicate)) in rows.into_iter().enumerate() {
            if let Some((second, inner)) = duplicate {
                return Err(Error::DuplicateAtoms {
                    first: i,
                    second,
                    inner,
                });
            }
            if g > report.m_coherence {
                report = CoherenceReport {
                    m_coherence: g,
                    witness_pair: (i, j),
                };
            }
        }
        Ok(report)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn atom(&self, index: usize) -> &Vector {
        &self.atoms[index]
    }

    pub fn atoms(&self) -> &[Vector] {
        &self.atoms
    }

    pub fn coherence(&self) -> CoherenceReport {
        self.coherence
    }

    /// `<atom_i, atom_j>`, exploiting sparse atoms.
    pub fn atom_dot(&self, i: usize, j: usize) -> f64 {
        match (&self.sparse[i], &self.sparse[j]) {
            (Some(nz), _) => nz.iter().map(|&k| self.atoms[i][k as usize] * self.atoms[j][k as usize]).sum(),
            (None, Some(nz)) => nz.iter().map(|&k| self.atoms[i][k as usize] * self.atoms[j][k as usize]).sum(),
            (None, None) => dot(self.atoms[i].as_slice(), self.atoms[j].as_slice()),
        }
    }

    /// `<atom_index, v>` without a dimension check.
    pub(crate) fn correlate(&self, index: usize, v: &[f64]) -> f64 {
        match &self.sparse[index] {
            Some(nz) => nz.iter().map(|&k| self.atoms[index][k as usize] * v[k as usize]).sum(),
            None => dot(self.atoms[index].as_slice(), v),
        }
    }

    /// `<atom_i, v>` for every atom.
    pub fn correlations(&self, v: &Vector) -> Result<Vec<f64>> {
        self.check_dim(v)?;
        Ok((0..self.len()).map(|i| self.correlate(i, v.as_slice())).collect())
    }

    pub(crate) fn check_dim(&self, v: &Vector) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.dim(),
            });
        }
        Ok(())
    }

    /// Full Gram matrix of the dictionary, row-major.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { self.atom_dot(i, j) }).collect())
            .collect();
        rows.concat()
    }

    /// The atoms at `indices`, in that order.
    pub fn subdictionary(&self, indices: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for &index in indices {
            if index >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index,
                    count: self.len(),
                });
            }
            if std::mem::replace(&mut seen[index], true) {
                return Err(Error::RepeatedIndex(index));
            }
        }
        let atoms = indices.iter().map(|&i| self.atoms[i].clone()).collect();
        let label = if indices.len() == self.len() && indices.iter().enumerate().all(|(a, &b)| a == b) {
            self.label.clone()
        } else {
            format!("{}/sub{}", self.label, indices.len())
        };
        Self::assemble(self.dim, atoms, label)
    }

    /// `count` distinct atoms drawn uniformly without replacement, returned sorted.
    pub fn random_subdictionary(&self, count: usize, seed: u64) -> Result<Self> {
        if count > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot draw {count} atoms from {}",
                self.len()
            )));
        }
        let mut rng = rng::seeded(seed, Stream::Subset);
        let mut indices = sample(&mut rng, self.len(), count).into_vec();
        indices.sort_unstable();
        self.subdictionary(&indices)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Writes the text format: `dim,<d>`, `count,<N>`, `label,<text>`, then
    /// one comma-separated row of 17-significant-digit floats per atom.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "dim,{}", self.dim)?;
        writeln!(out, "count,{}", self.len())?;
        writeln!(out, "label,{}", self.label)?;
        let mut line = String::new();
        for atom in &self.atoms {
            line.clear();
            for (k, x) in atom.as_slice().iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{x:.16e}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        Self::read_from(reader, path)
    }

    pub fn read_from<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| err(0, format!("missing `{key}` header")))?;
            let line = line?;
            match line.split_once(',') {
                Some((k, v)) if k == key => Ok((no, v.to_string())),
                _ => Err(err(no, format!("expected `{key},<value>`, found `{line}`"))),
            }
        };
        let (no, dim) = header("dim")?;
        let dim: usize = dim
            .trim()
            .parse()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| err(no, format!("invalid dimension `{dim}`")))?;
        let (no, count) = header("count")?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| err(no, format!("invalid atom count `{count}`")))?;
        let (_, label) = header("label")?;

        let mut atoms = Vec::with_capacity(count);
        for (no, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if atoms.len() == count {
                return Err(err(no, format!("more than {count} atom rows")));
            }
            let entries = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(no, format!("bad float: {e}")))?;
            if entries.len() != dim {
                return Err(err(no, format!("expected {dim} entries, found {}", entries.len())));
            }
            let atom = Vector::new(entries).map_err(|e| err(no, e.to_string()))?;
            let norm = atom.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(err(no, format!("atom {} has norm {norm}, expected 1", atoms.len())));
            }
            atoms.push(atom);
        }
        if atoms.len() != count {
            return Err(err(
                3 + atoms.len(),
                format!("truncated: expected {count} atom rows, found {}", atoms.len()),
            ));
        }
        Self::from_unit_atoms(atoms, label)
    }
}

fn common_dim(atoms: &[Vector]) -> Result<usize> {
    let first = atoms.first().ok_or(Error::TooFewAtoms(0))?;
    let dim = first.dim();
    if let Some(bad) = atoms.iter().find(|a| a.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    Ok(dim)
}

fn check_budget(atoms: usize, dim: usize) -> Result<()> {
    let bytes = atoms as u128 * dim as u128 * 8;
    if bytes > MAX_DICTIONARY_BYTES {
        return Err(Error::DictionaryTooLarge {
            atoms,
            dim,
            bytes,
            limit: MAX_DICTIONARY_BYTES,
        });
    }
    Ok(())
}

/// Alias kept for callers that think in terms of the constructor.
pub fn build_dictionary(atoms: Vec<Vector>, label: &str) -> Result<Dictionary> {
    Dictionary::build(atoms, label)
}

fn sylvester_rows(k: u32) -> Vec<Vector> {
    let d = 1usize << k;
    let scale = (d as f64).sqrt().recip();
    (0..d)
        .map(|i| {
            let row = (0..d)
                .map(|j| if (i & j).count_ones() % 2 == 0 { scale } else { -scale })
                .collect();
            Vector::new(row).expect("finite")
        })
        .collect()
}

fn check_hadamard_order(k: u32, atoms_per_dim: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("Hadamard order k must be at least 1".into()));
    }
    if k > 30 {
        return Err(Error::DictionaryTooLarge {
            atoms: usize::MAX,
            dim: usize::MAX,
            bytes: u128::MAX,
            limit: MAX_DICTIONARY_BYTES,
        });
    }
    check_budget(atoms_per_dim << k, 1 << k)
}

/// Standard basis of `R^{2^k}` followed by the rows of the normalized
/// Sylvester-Hadamard matrix; coherence `2^{-k/2}`.
pub fn gen_identity_hadamard(k: u32) -> Result<Dictionary> {
    check_hadamard_order(k, 2)?;
    let d = 1usize << k;
    let mut atoms: Vec<Vector> = (0..d).map(|i| Vector::basis(d, i)).collect();
    atoms.extend(sylvester_rows(k));
    Dictionary::build(atoms, format!("identity-hadamard-k{k}"))
}

/// Normalized Sylvester-Hadamard rows alone: a dense orthonormal basis.
pub fn gen_hadamard(k: u32) -> Result<Dictionary> {
    check_hadamard_order(k, 1)?;
    Dictionary::build(sylvester_rows(k), format!("hadamard-k{k}"))
}

/// Standard basis of `R^dim`.
pub fn gen_orthonormal(dim: usize) -> Result<Dictionary> {
    check_budget(dim, dim)?;
    Dictionary::build((0..dim).map(|i| Vector::basis(dim, i)).collect(), format!("identity-{dim}"))
}

pub fn gen_random_spherical(
    dim: usize,
    count: usize,
    seed: u64,
    max_coherence: Option<f64>,
) -> Result<Dictionary> {
    gen_random_spherical_with_retries(dim, count, seed, max_coherence, DEFAULT_COHERENCE_RETRIES)
}

/// Atoms uniform on the unit sphere. With `max_coherence`, whole draws are
/// rejected until one meets the bound or `retries` draws have failed.
pub fn gen_random_spherical_with_retries(
    dim: usize,
    count: usize,
    seed: u64,
    max_coherence: Option<f64>,
    retries: usize,
) -> Result<Dictionary> {
    if dim == 0 {
        return Err(Error::EmptyVector);
    }
    if count < 2 {
        return Err(Error::TooFewAtoms(count));
    }
    check_budget(count, dim)?;
    let mut rng = rng::seeded(seed, Stream::Dictionary);
    let label = format!("random-d{dim}-n{count}-s{seed}");
    let mut best = f64::INFINITY;
    for _ in 0..retries.max(1) {
        let atoms = (0..count)
            .map(|_| Vector::new(rng::gaussian_entries(&mut rng, dim)))
            .collect::<Result<Vec<_>>>()?;
        let dict = match Dictionary::build(atoms, label.clone()) {
            Ok(d) => d,
            // a draw with (near-)parallel atoms is just a bad draw
            Err(Error::DuplicateAtoms { .. } | Error::ZeroAtom { .. }) => continue,
            Err(e) => return Err(e),
        };
        let m = dict.coherence().m_coherence;
        match max_coherence {
            Some(target) if m > target => best = best.min(m),
            _ => return Ok(dict),
        }
    }
    Err(Error::RetryBudgetExhausted {
        retries,
        target: max_coherence.unwrap_or(1.0),
        best,
    })
}
