//! Orthogonal greedy algorithm over finite M-coherent dictionaries, exact
//! best m-term approximation, and numerical verification of the Lebesgue
//! inequality `||f_{2m}|| <= 3 sigma_m(f)` for `m <= 1/(20 M)` together with
//! the step-wise estimates behind it.

pub mod analysis;
pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod oga;
pub mod oracle;
pub mod rng;
pub mod selftest;

pub use analysis::{
    check_final_state, check_lemma_suite, classify, diagnostics, lebesgue_report, CheckResult,
    CheckSummary, LebesgueReport, SetClassification, SigmaMode, StepDiagnostics,
};
pub use dictionary::{CoherenceReport, Dictionary};
pub use error::{Error, Result};
pub use linalg::{inner, project_onto_span, solve_spd, GramMatrix, Vector};
pub use oga::{max_correlation, run_oga, OgaTrace, StopReason};
pub use oracle::{best_m_term, plant_instance, BestTermResult, ExhaustiveOracle, PlantSpec, Provenance, ReferenceDecomposition};
