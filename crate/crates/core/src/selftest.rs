//! Built-in sanity suite behind `ogalab selftest`.
//!
//! The oracle comparison uses its own enumeration and an elimination solver
//! that shares no code with `linalg` or `oracle`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{check_lemma_suite, with_scaled_d, with_scaled_x, CheckResult};
use crate::dictionary::{gen_identity_hadamard, gen_orthonormal, gen_random_spherical, Dictionary};
use crate::error::Result;
use crate::linalg::{project_onto_span, Vector};
use crate::oga::run_oga;
use crate::oracle::{best_m_term, ReferenceDecomposition};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub items: Vec<SelftestItem>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn table(&self) -> String {
        let width = self.items.iter().map(|i| i.name.len()).max().unwrap_or(0);
        self.items
            .iter()
            .map(|i| {
                let verdict = if i.passed { "PASS" } else { "FAIL" };
                format!("{verdict}  {:width$}  {}\n", i.name, i.detail)
            })
            .collect()
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.items.push(SelftestItem {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// `None` when a pivot falls below `1e-12`.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        let (top, below) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        for (offset, row) in below.iter_mut().enumerate() {
            let factor = row[col] / pivot[col];
            row[col..].iter_mut().zip(&pivot[col..]).for_each(|(r, p)| *r -= factor * p);
            b[col + 1 + offset] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

fn plain_dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Residual norm of the least-squares fit of `f` by `atoms`, via the normal
/// equations and an explicit residual vector.
fn fit_residual(atoms: &[&[f64]], f: &[f64]) -> Option<f64> {
    let gram = atoms.iter().map(|a| atoms.iter().map(|b| plain_dot(a, b)).collect()).collect();
    let rhs = atoms.iter().map(|a| plain_dot(a, f)).collect();
    let c = gauss_solve(gram, rhs)?;
    let mut r = f.to_vec();
    for (a, ci) in atoms.iter().zip(&c) {
        for (rk, ak) in r.iter_mut().zip(a.iter()) {
            *rk -= ci * ak;
        }
    }
    Some(plain_dot(&r, &r).sqrt())
}

/// Every `m`-subset in lexicographic order; the winner is the first subset
/// whose error is within `1e-12 ||f||` of the smallest.
pub fn brute_force_best(dict: &Dictionary, f: &Vector, m: usize) -> (Vec<usize>, f64) {
    let n = dict.len();
    let tol = 1e-12 * f.norm();
    let mut all: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let atoms: Vec<&[f64]> = idx.iter().map(|&i| dict.atom(i).as_slice()).collect();
        if let Some(r) = fit_residual(&atoms, f.as_slice()) {
            all.push((idx.clone(), r));
        }
        // next combination
        let mut pos = m;
        while pos > 0 && idx[pos - 1] == n - m + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        idx[pos - 1] += 1;
        for k in pos..m {
            idx[k] = idx[k - 1] + 1;
        }
    }
    let min = all.iter().map(|(_, r)| *r).fold(f64::INFINITY, f64::min);
    all.into_iter().find(|(_, r)| *r <= min + tol).expect("at least one subset")
}

fn oracle_agreement(pairs: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for seed in 0..pairs as u64 {
        let mut rng = rng::seeded(seed, Stream::Instance);
        let m = rng.random_range(1..=3usize);
        let count = rng.random_range(m + 2..=12usize);
        let dim = rng.random_range(m + 1..=8usize);
        let dict = gen_random_spherical(dim, count, 1000 + seed, None)?;
        let f = rng::gaussian_vector(&mut rng, dim);
        let fast = best_m_term(&dict, &f, m)?;
        let (support, sigma) = brute_force_best(&dict, &f, m);
        worst = worst.max((fast.sigma - sigma).abs());
        if fast.support != support {
            mismatches += 1;
        }
    }
    Ok((
        worst <= 1e-12 && mismatches == 0,
        format!("{pairs} pairs, max |sigma diff| {worst:.2e}, support mismatches {mismatches}"),
    ))
}

fn projection_properties(cases: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for seed in 0..cases {
        let mut rng = rng::seeded(seed, Stream::Instance);
        let dim = rng.random_range(2..=12usize);
        let k = rng.random_range(1..dim);
        let atoms: Vec<Vector> = (0..k).map(|_| rng::gaussian_vector(&mut rng, dim)).collect();
        let refs: Vec<&Vector> = atoms.iter().collect();
        let v = rng::gaussian_vector(&mut rng, dim);
        let p = project_onto_span(&refs, &v)?;
        let scale = v.norm().max(1e-300);
        let pyth = (p.projection.norm().powi(2) + p.residual.norm().powi(2) - v.norm().powi(2)).abs() / (scale * scale);
        let orth = atoms
            .iter()
            .map(|a| plain_dot(a.as_slice(), p.residual.as_slice()).abs() / scale)
            .fold(0.0, f64::max);
        let again = project_onto_span(&refs, &p.projection)?;
        let idem = again.projection.sub(&p.projection).norm() / scale;
        worst = worst.max(pyth).max(orth).max(idem);
    }
    Ok((worst <= 1e-9, format!("{cases} cases, worst relative defect {worst:.2e}")))
}

fn orthonormal_exactness(cases: u64) -> Result<(bool, String)> {
    let dict = gen_orthonormal(16)?;
    let mut worst = 0.0f64;
    for seed in 0..cases {
        let mut rng = rng::seeded(seed, Stream::Instance);
        let f = rng::gaussian_vector(&mut rng, 16);
        let m = rng.random_range(1..=6usize);
        let trace = run_oga(&dict, &f, m, 0.0)?;
        let mut sq: Vec<f64> = f.as_slice().iter().map(|x| x * x).collect();
        sq.sort_by(|a, b| b.total_cmp(a));
        let sigma = sq[m..].iter().sum::<f64>().sqrt();
        worst = worst.max((trace.final_residual_norm() - sigma).abs());
    }
    Ok((worst <= 1e-12, format!("{cases} cases, max deviation from tail norm {worst:.2e}")))
}

fn failing_at<'a>(checks: &'a [CheckResult], name: &str) -> Vec<&'a CheckResult> {
    checks.iter().filter(|c| c.check_name == name && c.is_violation()).collect()
}

/// Injects faults into a hand-built regime run (`e_0 + 0.99 h`, one standard
/// basis atom and one Hadamard row of the k = 10 union) and expects the
/// checker to flag each one at the step where it was planted.
fn fault_injection() -> Result<(bool, String)> {
    let dict = gen_identity_hadamard(10)?;
    let dim = dict.dim();
    let mut f = Vector::basis(dim, 0);
    f.axpy(0.99, dict.atom(dim + 5));
    let m = 1;
    let mc = dict.coherence().m_coherence;
    let trace = run_oga(&dict, &f, 2 * m, 0.0)?;
    let best = best_m_term(&dict, &f, m)?;
    let reference = ReferenceDecomposition::from(best);
    let clean = check_lemma_suite(&dict, &trace, &reference, m, mc)?;
    let clean_ok = clean.iter().all(|c| !c.is_violation());

    let bad_d = check_lemma_suite(&dict, &with_scaled_d(&trace, 2, 1.1), &reference, m, mc)?;
    let d_hits = failing_at(&bad_d, "lemma4_dn_growth");
    let d_ok = d_hits.len() == 1 && d_hits[0].step == Some(1);

    let bad_x = check_lemma_suite(&dict, &with_scaled_x(&trace, 1, 2, 10.0), &reference, m, mc)?;
    let x_hits = failing_at(&bad_x, "lemma3_xin");
    let x_ok = x_hits.len() == 1 && x_hits[0].step == Some(2);

    Ok((
        clean_ok && d_ok && x_ok,
        format!(
            "clean run {}, d_2 x 1.1 flagged by lemma 4: {}, x_1,2 x 10 flagged by lemma 3: {}",
            if clean_ok { "passes" } else { "FAILS" },
            d_ok,
            x_ok
        ),
    ))
}

pub fn run_selftest() -> Result<SelftestReport> {
    let mut report = SelftestReport::default();
    let (ok, detail) = fault_injection()?;
    report.push("fault injection", ok, detail);
    let (ok, detail) = oracle_agreement(100)?;
    report.push("oracle vs enumeration", ok, detail);
    let (ok, detail) = projection_properties(200)?;
    report.push("projection properties", ok, detail);
    let (ok, detail) = orthonormal_exactness(50)?;
    report.push("orthonormal exactness", ok, detail);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_solve_small_systems() {
        let x = gauss_solve(vec![vec![0.0, 1.0], vec![2.0, 0.0]], vec![3.0, 4.0]).unwrap();
        assert_eq!(x, vec![2.0, 3.0]);
        assert!(gauss_solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn brute_force_on_basis() {
        let d = gen_orthonormal(4).unwrap();
        let f = Vector::new(vec![0.5, -3.0, 1.0, 2.0]).unwrap();
        let (support, sigma) = brute_force_best(&d, &f, 2);
        assert_eq!(support, vec![1, 3]);
        assert!((sigma - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn selftest_passes() {
        let report = run_selftest().unwrap();
        assert!(report.passed(), "{}", report.table());
        assert_eq!(report.items.len(), 4);
    }
}
