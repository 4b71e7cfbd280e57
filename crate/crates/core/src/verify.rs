//! Randomized property suites over enumerable models: the fourth-moment
//! lemmas, the interval concentration bound, the kernel identity and the
//! Stein solution properties.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{estimate_r_terms, lemma_3_1_check, lemma_3_2_check, proposition_3_1_with_terms, Polynomial};
use crate::error::Result;
use crate::fields::{erickson_field, iid_field, moving_sum_field, random_sparse_linear, BaseDistribution, FieldModel};
use crate::montecarlo::substream;
use crate::neighborhoods::{Level, NeighborhoodSystem, SetFamilies};
use crate::stein::{k_integral_identity, smoothed_indicator, stein_solution};

/// Stream id reserved for drawing random test models.
const MODEL_STREAM: u64 = 0x7665_7269_6679;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Descriptions of the first few failing cases.
    pub failing: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        SuiteReport {
            name: name.to_string(),
            cases: 0,
            failures: 0,
            failing: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.failing.len() < 5 {
                self.failing.push(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

/// Enlarge each `A_i` by random extra indices (keeps every independence
/// statement true) and rebuild the derived sets.
fn pad_system(rng: &mut impl Rng, system: &NeighborhoodSystem, rate: f64) -> Result<NeighborhoodSystem> {
    let n = system.len();
    let a: Vec<Vec<usize>> = system
        .a_sets()
        .iter()
        .map(|set| {
            let mut s = set.clone();
            s.extend((0..n).filter(|_| rng.random::<f64>() < rate));
            s
        })
        .collect();
    NeighborhoodSystem::from_sets(
        system.labels().to_vec(),
        Level::Ld1,
        SetFamilies {
            a,
            ..Default::default()
        },
    )?
    .closure_extend()
}

/// Random enumerable linear field with (sometimes padded) LD4* neighborhoods.
pub fn random_model(rng: &mut impl Rng) -> Result<FieldModel> {
    let n = rng.random_range(3..=7);
    let primitives = rng.random_range(n..=(n + 5).min(14));
    let max_terms = rng.random_range(1..=3);
    let model = random_sparse_linear(rng, n, primitives, max_terms)?;
    let system = if rng.random::<bool>() {
        pad_system(rng, model.system(), 0.15)?
    } else {
        model.system().closure_extend()?
    };
    model.with_system(system)
}

fn random_polynomial(rng: &mut impl Rng) -> Polynomial {
    let degree = rng.random_range(1..=3);
    Polynomial((0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn model_rng(seed: u64, suite: u64) -> ChaCha8Rng {
    substream(seed, MODEL_STREAM, suite)
}

/// Variance and fourth-moment identities and bounds on `cases` random models.
pub fn lemma_3_1_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = model_rng(seed, 1);
    let mut report = SuiteReport::new("lemma 3.1");
    for case in 0..cases {
        let model = random_model(&mut rng)?;
        let xi = random_polynomial(&mut rng);
        let r = lemma_3_1_check(&model, model.system(), &xi)?;
        report.record(r.holds(), || format!("case {case}: {r:?}"));
    }
    Ok(report)
}

/// Product fourth-moment inequality on `cases` random models.
pub fn lemma_3_2_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = model_rng(seed, 2);
    let mut report = SuiteReport::new("lemma 3.2");
    for case in 0..cases {
        let model = random_model(&mut rng)?;
        let xi = random_polynomial(&mut rng);
        let eta = random_polynomial(&mut rng);
        let r = lemma_3_2_check(&model, model.system(), &xi, &eta)?;
        report.record(r.holds, || format!("case {case}: {r:?}"));
    }
    Ok(report)
}

/// Interval concentration on `intervals_per_model` random intervals for each
/// of `models` random models.
pub fn proposition_3_1_suite(models: usize, intervals_per_model: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = model_rng(seed, 3);
    let mut report = SuiteReport::new("proposition 3.1");
    for case in 0..models {
        let model = random_model(&mut rng)?;
        let intervals: Vec<(f64, f64)> = (0..intervals_per_model)
            .map(|_| {
                let a = rng.random_range(-3.0..3.0);
                (a, a + rng.random_range(0.0..1.5))
            })
            .collect();
        let terms = estimate_r_terms(&model, model.system(), 0, seed)?;
        let r = proposition_3_1_with_terms(&model, &terms, &intervals, 0, seed)?;
        for c in &r.intervals {
            report.record(c.holds, || format!("model {case}: {c:?}"));
        }
    }
    Ok(report)
}

/// `Σ_i E X_i Y_i = 1` by exact enumeration on small standard models.
pub fn identity_suite() -> Result<SuiteReport> {
    let mut report = SuiteReport::new("kernel identity");
    let mut models = Vec::new();
    for n in 1..=10 {
        models.push((format!("iid rademacher n={n}"), iid_field(n, BaseDistribution::Rademacher)?));
        models.push((
            format!("moving sum m=1 n={n}"),
            moving_sum_field(&[n], 1, BaseDistribution::Rademacher)?,
        ));
    }
    for n in 2..=8 {
        models.push((format!("erickson n={n}"), erickson_field(n)?));
    }
    for (name, model) in models {
        let e = k_integral_identity(&model, 0, 0)?;
        report.record(e.is_exact() && (e.value - 1.0).abs() <= 1e-10, || format!("{name}: {}", e.value));
    }
    Ok(report)
}

/// Finite-difference step of the Stein suite.
pub const FD_STEP: f64 = 1e-5;

/// Central difference, or a one-sided second-order stencil when the central
/// stencil would straddle a kink of `h_{z,α}` (where `f″` jumps).
fn fd_derivative(f: impl Fn(f64) -> f64, w: f64, kinks: [f64; 2]) -> f64 {
    let h = FD_STEP;
    let crosses = |lo: f64, hi: f64| kinks.iter().any(|&k| k > lo && k < hi);
    if !crosses(w - h, w + h) {
        (f(w + h) - f(w - h)) / (2.0 * h)
    } else if !crosses(w, w + 2.0 * h) {
        (-3.0 * f(w) + 4.0 * f(w + h) - f(w + 2.0 * h)) / (2.0 * h)
    } else {
        (3.0 * f(w) - 4.0 * f(w - h) + f(w - 2.0 * h)) / (2.0 * h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinSuiteReport {
    pub suite: SuiteReport,
    pub min_f: f64,
    pub max_f: f64,
    pub max_abs_derivative: f64,
    pub max_residual: f64,
}

/// `0 ≤ f ≤ 1`, `|f′| ≤ 1` (to `1e-3`) and ODE residual `≤ 1e-6` on
/// `w ∈ [−8, 8]` (step 0.05), `z ∈ {−2, 0, 2}`, `α ∈ {0.1, 1}`.
pub fn stein_suite() -> Result<SteinSuiteReport> {
    let mut suite = SuiteReport::new("stein solution");
    let (mut min_f, mut max_f, mut max_d, mut max_res) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for z in [-2.0, 0.0, 2.0] {
        for alpha in [0.1, 1.0] {
            let nh = crate::stein::normal_expectation(z, alpha)?;
            let f = |w: f64| stein_solution(z, alpha, w).map(|v| v.value).unwrap_or(f64::NAN);
            for k in 0..=320 {
                let w = -8.0 + 0.05 * k as f64;
                let fw = f(w);
                let d = fd_derivative(f, w, [z, z + alpha]);
                let res = (d - w * fw - smoothed_indicator(z, alpha, w)? + nh).abs();
                min_f = min_f.min(fw);
                max_f = max_f.max(fw);
                max_d = max_d.max(d.abs());
                max_res = max_res.max(res);
                let ok = (0.0..=1.0).contains(&fw) && d.abs() <= 1.0 + 1e-3 && res <= 1e-6;
                suite.record(ok, || format!("z={z} α={alpha} w={w}: f={fw} f′={d} residual={res:e}"));
            }
        }
    }
    Ok(SteinSuiteReport {
        suite,
        min_f,
        max_f,
        max_abs_derivative: max_d,
        max_residual: max_res,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
    pub stein: SteinSuiteReport,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed) && self.stein.suite.passed()
    }
}

/// Every suite at its standard size: 50 models per lemma, 10 models × 10
/// intervals for the concentration bound.
pub fn run_all(seed: u64) -> Result<VerifyReport> {
    Ok(VerifyReport {
        seed,
        suites: vec![
            identity_suite()?,
            lemma_3_1_suite(50, seed)?,
            lemma_3_2_suite(50, seed)?,
            proposition_3_1_suite(10, 10, seed)?,
        ],
        stein: stein_suite()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_models_are_enumerable_and_valid() {
        let mut rng = model_rng(5, 0);
        for _ in 0..20 {
            let m = random_model(&mut rng).unwrap();
            assert!(m.is_enumerable());
            assert_eq!(m.system().level(), Level::Ld4Star);
            assert!(m.structural_violations().is_empty());
            assert!(m.system().validate().is_empty());
        }
    }

    #[test]
    fn stencil_avoids_kinks() {
        let f = |w: f64| if w > 0.0 { w * w } else { 0.0 };
        assert!(fd_derivative(f, 0.0, [0.0, 1.0]).abs() < 1e-9);
        assert!((fd_derivative(f, 1.0, [0.0, 5.0]) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn small_suites_pass() {
        assert!(lemma_3_1_suite(5, 1).unwrap().passed());
        assert!(lemma_3_2_suite(5, 1).unwrap().passed());
        assert!(proposition_3_1_suite(2, 5, 1).unwrap().passed());
    }
}
