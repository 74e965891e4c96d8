use proptest::prelude::*;

use ogalab::analysis::{diagnostics, LemmaContext};
use ogalab::dictionary::{gen_identity_hadamard, gen_orthonormal, gen_random_spherical};
use ogalab::experiment::decoy_instance;
use ogalab::oracle::{best_m_term, plant_instance, PlantSpec, ReferenceDecomposition};
use ogalab::{run_oga, Vector};

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn signal(dim: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
        .prop_map(|v| Vector::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_choice_dominates(seed in 0u64..1000, f in signal(16)) {
        let dict = gen_random_spherical(16, 40, seed, None).unwrap();
        let t = run_oga(&dict, &f, 6, 0.0).unwrap();
        for n in 1..=t.steps() {
            let r = t.residuals[n - 1].as_slice();
            let chosen = dot(dict.atom(t.selected[n - 1]).as_slice(), r).abs();
            for g in dict.atoms() {
                prop_assert!(dot(g.as_slice(), r).abs() <= chosen * (1.0 + 1e-12) + 1e-15);
            }
            prop_assert!((chosen - t.d_n(n).abs()).abs() <= 1e-12 * t.residual_norms[0]);
        }
    }

    #[test]
    fn energy_and_expansion_identities(seed in 0u64..1000, f in signal(12)) {
        let dict = gen_random_spherical(12, 30, seed, None).unwrap();
        let t = run_oga(&dict, &f, 6, 0.0).unwrap();
        let f0 = t.residual_norms[0];
        for n in 1..=t.steps() {
            let prev = t.residuals[n - 1].as_slice();
            let cur = t.residuals[n].as_slice();
            let diff: Vec<f64> = prev.iter().zip(cur).map(|(a, b)| a - b).collect();
            // f_n is orthogonal to f_{n-1} - f_n
            let lhs = dot(prev, prev);
            let rhs = dot(cur, cur) + dot(&diff, &diff);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * f0 * f0);
            prop_assert!(t.residual_norms[n] <= t.residual_norms[n - 1] * (1.0 + 1e-12));

            let mut defect = diff.clone();
            for i in 1..=n {
                let g = dict.atom(t.selected[i - 1]).as_slice();
                defect.iter_mut().zip(g).for_each(|(d, gi)| *d -= t.x_in(i, n) * gi);
                prop_assert!(dot(cur, g).abs() <= 1e-10 * f0);
            }
            prop_assert!(dot(&defect, &defect).sqrt() <= 1e-8 * f0);
        }
    }

    #[test]
    fn orthonormal_greedy_is_exact(f in signal(20), m in 1usize..8) {
        let dict = gen_orthonormal(20).unwrap();
        let t = run_oga(&dict, &f, m, 0.0).unwrap();
        let mut sq: Vec<f64> = f.as_slice().iter().map(|x| x * x).collect();
        sq.sort_by(|a, b| b.total_cmp(a));
        let tail = sq[m..].iter().sum::<f64>().sqrt();
        prop_assert!((t.residual_norms[m] - tail).abs() <= 1e-10);
    }

    #[test]
    fn diagnostics_decompose_residuals(seed in 0u64..500, noise in 0.0f64..2.0) {
        let dict = gen_identity_hadamard(5).unwrap();
        let spec = PlantSpec { m: 2, coeff_low: 0.5, coeff_high: 2.0, noise_norm: noise };
        let (f, reference) = plant_instance(&dict, &spec, seed).unwrap();
        let t = run_oga(&dict, &f, 4, 0.0).unwrap();
        let diag = diagnostics(&dict, &t, &reference).unwrap();
        let atoms: Vec<&Vector> = reference.support.iter().map(|&j| dict.atom(j)).collect();
        for n in 0..=t.steps() {
            // f_n = sum_j a_{j,n} psi_j + v_n with v_n orthogonal to the support
            let pl = Vector::combination(f.dim(), &atoms, &diag.a[n]);
            let v = t.residuals[n].sub(&pl);
            prop_assert!((v.norm() - diag.vn_norm[n]).abs() <= 1e-9 * f.norm());
            for a in &atoms {
                prop_assert!(dot(a.as_slice(), v.as_slice()).abs() <= 1e-9 * f.norm());
            }
            for j in 0..2 {
                prop_assert!((diag.a[n][j] + diag.b[n][j] - reference.coeffs[j]).abs() <= 1e-9 * f.norm());
            }
        }
    }
}

#[test]
fn gram_cross_check_on_unselected_support() {
    // the quadratic-form bound holds for any coherence, so a small union suffices
    let dict = gen_identity_hadamard(5).unwrap();
    let mc = dict.coherence().m_coherence;
    let mut nonempty = 0;
    for seed in 0..60 {
        let (f, _) = decoy_instance(&dict, 3, seed).unwrap();
        let t = run_oga(&dict, &f, 6, 0.0).unwrap();
        let reference = ReferenceDecomposition::from(best_m_term(&dict, &f, 3).unwrap());
        let ctx = LemmaContext::new(&dict, &t, &reference, 3, mc).unwrap();
        if !ctx.classification.s2.is_empty() {
            nonempty += 1;
        }
        let (quad, bound) = ctx.s2_gram_form();
        assert!(quad <= bound * (1.0 + 1e-9) + 1e-12, "seed {seed}: {quad} > {bound}");
    }
    assert!(nonempty > 0);
}
