//! Orthogonal greedy algorithm (orthogonal matching pursuit) with a full
//! per-step record.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{project_onto_span, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CompletedSteps,
    CorrelationBelowTol,
}

/// Everything an OGA run produced. Steps are numbered from 1; `residuals[n]`
/// is `f_n`, with `f_0` the input signal.
#[derive(Debug, Clone)]
pub struct OgaTrace {
    /// Dictionary indices of `g_1, ..., g_K`.
    pub selected: Vec<usize>,
    /// `d[n-1] = <f_{n-1}, g_n>`.
    pub d: Vec<f64>,
    /// `residual_norms[n] = ||f_n||` for `n = 0..=K`.
    pub residual_norms: Vec<f64>,
    pub residuals: Vec<Vector>,
    /// `coeffs_per_step[n-1]` expands `G_n(f)` over `g_1..g_n`.
    pub coeffs_per_step: Vec<Vec<f64>>,
    /// `x[n-1][i-1] = x_{i,n}`, so that `f_{n-1} - f_n = sum_i x_{i,n} g_i`.
    pub x: Vec<Vec<f64>>,
    pub stop_reason: StopReason,
}

impl OgaTrace {
    /// Number of steps actually run.
    pub fn steps(&self) -> usize {
        self.selected.len()
    }

    /// `d_n` for 1-based `n`.
    pub fn d_n(&self, n: usize) -> f64 {
        self.d[n - 1]
    }

    /// `x_{i,n}` for 1-based `i <= n`.
    pub fn x_in(&self, i: usize, n: usize) -> f64 {
        self.x[n - 1][i - 1]
    }

    pub fn final_residual_norm(&self) -> f64 {
        *self.residual_norms.last().expect("trace holds f_0")
    }

    /// One row per step: `n,selected_index,d_n,residual_norm`.
    pub fn write_steps_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "n,selected_index,d_n,residual_norm")?;
        for n in 1..=self.steps() {
            writeln!(
                out,
                "{n},{},{:.16e},{:.16e}",
                self.selected[n - 1],
                self.d[n - 1],
                self.residual_norms[n]
            )?;
        }
        Ok(())
    }

    /// The `x_{i,n}` triangle as `n,i,x` rows.
    pub fn write_x_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "n,i,x")?;
        for (n, row) in self.x.iter().enumerate() {
            for (i, x) in row.iter().enumerate() {
                writeln!(out, "{},{},{x:.16e}", n + 1, i + 1)?;
            }
        }
        Ok(())
    }
}

/// Lowest index attaining `max_g |<v, g>|`, with the signed inner product there.
pub fn max_correlation(dict: &Dictionary, v: &Vector) -> Result<(usize, f64)> {
    dict.check_dim(v)?;
    Ok(argmax_abs((0..dict.len()).map(|i| dict.correlate(i, v.as_slice()))))
}

fn argmax_abs(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, 0.0f64);
    let mut best_abs = -1.0;
    for (i, c) in values.enumerate() {
        if c.abs() > best_abs {
            best_abs = c.abs();
            best = (i, c);
        }
    }
    best
}

/// Stopping threshold used when the caller has no opinion: `1e-13 ||f||`.
pub fn default_stop_tol(f: &Vector) -> f64 {
    1e-13 * f.norm()
}

/// Runs at most `steps` OGA iterations on `f`.
///
/// The run ends early once the largest residual correlation is at most
/// `stop_tol`, or when the maximizer is an atom already selected (which only
/// happens once every correlation is rounding noise).
pub fn run_oga(dict: &Dictionary, f: &Vector, steps: usize, stop_tol: f64) -> Result<OgaTrace> {
    dict.check_dim(f)?;
    if steps > dict.dim() || steps > dict.len() {
        return Err(Error::InvalidArgument(format!(
            "{steps} steps exceed dimension {} or atom count {}",
            dict.dim(),
            dict.len()
        )));
    }
    if !(stop_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("stop tolerance {stop_tol} must be >= 0")));
    }

    let mut trace = OgaTrace {
        selected: Vec::with_capacity(steps),
        d: Vec::with_capacity(steps),
        residual_norms: vec![f.norm()],
        residuals: vec![f.clone()],
        coeffs_per_step: Vec::with_capacity(steps),
        x: Vec::with_capacity(steps),
        stop_reason: StopReason::CompletedSteps,
    };
    let mut previous: Vec<f64> = Vec::new();

    for step in 1..=steps {
        let residual = trace.residuals.last().expect("f_0 present");
        let (index, corr) = max_correlation(dict, residual)?;
        if corr.abs() <= stop_tol || trace.selected.contains(&index) {
            trace.stop_reason = StopReason::CorrelationBelowTol;
            break;
        }
        trace.selected.push(index);
        trace.d.push(corr);

        let atoms: Vec<&Vector> = trace.selected.iter().map(|&i| dict.atom(i)).collect();
        let proj = project_onto_span(&atoms, f).map_err(|e| Error::Step {
            step,
            source: Box::new(e),
        })?;

        let x: Vec<f64> = proj
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c - previous.get(i).copied().unwrap_or(0.0))
            .collect();
        previous.clone_from(&proj.coeffs);

        trace.residual_norms.push(proj.residual.norm());
        trace.residuals.push(proj.residual);
        trace.coeffs_per_step.push(proj.coeffs);
        trace.x.push(x);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{gen_identity_hadamard, gen_orthonormal};
    use crate::linalg::inner;

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn orthonormal_reduces_to_coefficient_sorting() {
        let d = gen_orthonormal(3).unwrap();
        let f = v(&[2.0, 1.0, 0.0]);
        let t = run_oga(&d, &f, 2, 0.0).unwrap();
        assert_eq!(t.selected, vec![0, 1]);
        assert_eq!(t.d, vec![2.0, 1.0]);
        assert!((t.residual_norms[0] - 5f64.sqrt()).abs() < 1e-15);
        assert!((t.residual_norms[1] - 1.0).abs() < 1e-15);
        assert!(t.residual_norms[2].abs() < 1e-15);
        assert_eq!(t.stop_reason, StopReason::CompletedSteps);
    }

    #[test]
    fn single_atom_signal_stops_after_one_step() {
        let d = gen_identity_hadamard(2).unwrap();
        let f = d.atom(5).clone();
        let t = run_oga(&d, &f, 3, default_stop_tol(&f)).unwrap();
        assert_eq!(t.steps(), 1);
        assert_eq!(t.selected, vec![5]);
        assert!((t.d[0] - 1.0).abs() < 1e-15);
        assert!(t.residual_norms[1] < 1e-15);
        assert_eq!(t.stop_reason, StopReason::CorrelationBelowTol);
    }

    #[test]
    fn max_correlation_rules() {
        let d = gen_orthonormal(8).unwrap();
        assert_eq!(max_correlation(&d, &Vector::basis(8, 0)).unwrap(), (0, 1.0));

        let ortho = crate::dictionary::Dictionary::build(
            vec![Vector::basis(3, 0), Vector::basis(3, 1)],
            "two",
        )
        .unwrap();
        assert_eq!(max_correlation(&ortho, &Vector::basis(3, 2)).unwrap(), (0, 0.0));

        let mut x = vec![0.0; 8];
        x[3] = 0.6;
        x[7] = 0.5;
        assert_eq!(max_correlation(&d, &v(&x)).unwrap(), (3, 0.6));
        assert!(max_correlation(&d, &v(&[1.0])).is_err());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let d = gen_orthonormal(4).unwrap();
        let t = run_oga(&d, &v(&[0.0, -1.0, 1.0, 1.0]), 3, 0.0).unwrap();
        assert_eq!(t.selected, vec![1, 2, 3]);
        assert_eq!(t.d[0], -1.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = gen_orthonormal(3).unwrap();
        assert!(matches!(run_oga(&d, &v(&[1.0, 2.0]), 1, 0.0), Err(Error::DimensionMismatch { .. })));
        assert!(run_oga(&d, &v(&[1.0, 2.0, 3.0]), 4, 0.0).is_err());
        assert!(run_oga(&d, &v(&[1.0, 2.0, 3.0]), 1, -1.0).is_err());
    }

    /// Step-by-step hand simulation: correlations over all 8 atoms, and each
    /// residual recomputed by an explicit 4x4 least-squares solve.
    #[test]
    fn union_k2_matches_hand_simulation() {
        let d = gen_identity_hadamard(2).unwrap();
        let h2 = d.atom(6).clone();
        let mut f = Vector::basis(4, 0);
        f.axpy(0.3, &h2);
        let t = run_oga(&d, &f, 4, 0.0).unwrap();

        let mut chosen: Vec<usize> = Vec::new();
        let mut residual = f.as_slice().to_vec();
        for n in 1..=t.steps() {
            let corrs: Vec<f64> = d
                .atoms()
                .iter()
                .map(|a| a.as_slice().iter().zip(&residual).map(|(x, y)| x * y).sum())
                .collect();
            let mut best = 0;
            for (i, c) in corrs.iter().enumerate() {
                if c.abs() > corrs[best].abs() {
                    best = i;
                }
            }
            assert_eq!(t.selected[n - 1], best, "step {n}");
            assert!((t.d[n - 1] - corrs[best]).abs() < 1e-14);
            chosen.push(best);

            // normal equations solved by Gauss-Jordan on the augmented system
            let k = chosen.len();
            let mut aug = vec![vec![0.0; k + 1]; k];
            for r in 0..k {
                for c in 0..k {
                    aug[r][c] = inner(d.atom(chosen[r]), d.atom(chosen[c])).unwrap();
                }
                aug[r][k] = inner(d.atom(chosen[r]), &f).unwrap();
            }
            for p in 0..k {
                let piv = aug[p][p];
                for c in 0..=k {
                    aug[p][c] /= piv;
                }
                for r in 0..k {
                    if r != p {
                        let factor = aug[r][p];
                        for c in 0..=k {
                            aug[r][c] -= factor * aug[p][c];
                        }
                    }
                }
            }
            residual = f.as_slice().to_vec();
            for r in 0..k {
                for (x, a) in residual.iter_mut().zip(d.atom(chosen[r]).as_slice()) {
                    *x -= aug[r][k] * a;
                }
            }
            let diff: f64 = residual
                .iter()
                .zip(t.residuals[n].as_slice())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(diff < 1e-12, "step {n}: {diff}");
        }
        assert_eq!(t.selected[0], 0);
    }

    #[test]
    fn csv_exports() {
        let d = gen_orthonormal(3).unwrap();
        let t = run_oga(&d, &v(&[2.0, 1.0, 0.0]), 2, 0.0).unwrap();
        let mut steps = Vec::new();
        t.write_steps_csv(&mut steps).unwrap();
        let steps = String::from_utf8(steps).unwrap();
        let lines: Vec<&str> = steps.lines().collect();
        assert_eq!(lines[0], "n,selected_index,d_n,residual_norm");
        assert_eq!(lines[1], "1,0,2.0000000000000000e0,1.0000000000000000e0");
        assert_eq!(lines.len(), 3);

        let mut xs = Vec::new();
        t.write_x_csv(&mut xs).unwrap();
        let xs = String::from_utf8(xs).unwrap();
        assert_eq!(xs.lines().count(), 1 + 1 + 2);
        assert!(xs.lines().nth(1).unwrap().starts_with("1,1,2.0"));
    }
}
