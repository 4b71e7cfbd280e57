//! Bound ingredients and theorem assembly.

mod lemmas;
mod moments;
mod rterms;
mod sigma;
mod theorem;

pub use lemmas::{
    lemma_3_1_check, lemma_3_2_check, proposition_3_1_check, proposition_3_1_with_terms, ConcentrationReport,
    IntervalCheck, Lemma31Report, Lemma32Report, Polynomial,
};
pub use moments::{estimate_moments, AbsMoments, IndexMoments, MomentSummary};
pub use rterms::{estimate_r_terms, estimate_r_terms_with, r1_phase_sizes, r4_ld1_bound, RTermOptions, RTerms};
pub use sigma::{sigma_lambda, SigmaLambda};
pub use theorem::{theorem_bound, BoundIngredients, BoundReport, TheoremId};
