//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! (to the real stdout, so it shows without `--nocapture`) and then asserts.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use locdep::bounds::{
    estimate_moments, estimate_r_terms_with, theorem_bound, BoundIngredients, RTermOptions, TheoremId,
};
use locdep::empirics::{nonuniform_profile, sample_w, DistanceMode, DEFAULT_DELTA};
use locdep::experiment::{run, run_rate_study, ExperimentConfig, ExperimentReport};
use locdep::fields::{erickson_variances, iid_field, local_maxima_field, moving_sum_field, Graph};
use locdep::montecarlo::Moments;
use locdep::verify;
use locdep::{BaseDistribution, Estimate, ModelSpec};

static SERIAL: Mutex<()> = Mutex::new(());

fn verdict(criterion: u32, pass: bool, elapsed: Duration, budget: Duration, detail: String) {
    let pass = pass && elapsed <= budget;
    let line = format!(
        "{} criterion {criterion}: {detail} [{:.2}s of {:.0}s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    writeln!(std::io::stdout(), "{line}").unwrap();
    assert!(pass, "{line}");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn iid(n: usize, base: BaseDistribution) -> ModelSpec {
    ModelSpec::Iid { n, base }
}

fn moving_sum(n: usize, base: BaseDistribution) -> ModelSpec {
    ModelSpec::MovingSum {
        shape: vec![n],
        m: 1,
        base,
    }
}

#[test]
fn criterion_01_identity_suite() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let r = verify::identity_suite().unwrap();
    verdict(
        1,
        r.passed() && r.cases == 27,
        start.elapsed(),
        secs(1),
        format!("Σ E X_i Y_i = 1 on {} enumerable models, {} failures", r.cases, r.failures),
    );
}

#[test]
fn criterion_02_oracle_equivalence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let model = iid_field(3, BaseDistribution::Rademacher).unwrap();
    let r = estimate_r_terms_with(
        &model,
        model.system(),
        &RTermOptions {
            replicates: 100_000,
            seed: 2,
            ld3_terms: false,
            force_monte_carlo: true,
        },
    )
    .unwrap();
    let s3 = 3f64.sqrt();
    let expected = [0.0, 0.0, 1.0 / s3, 0.5, 1.0 / (2.0 * s3), 1.0 / (2.0 * s3)];
    let got: [Estimate; 6] = [r.r1, r.r2, r.r3, r.r4, r.r5, r.r6];
    let ok = got.iter().zip(expected).all(|(e, x)| e.agrees_with(x, 4.0)) && r.replicates > 0;
    let detail = got
        .iter()
        .zip(expected)
        .enumerate()
        .map(|(k, (e, x))| format!("r{}={e} (exact {x:.6})", k + 1))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(2, ok, start.elapsed(), secs(10), detail);
}

fn bound_run(model: ModelSpec, theorems: Vec<TheoremId>, p: Option<f64>, seed: u64) -> ExperimentReport {
    let mut c = ExperimentConfig::new(model, seed);
    c.theorems = theorems;
    c.p = p;
    c.replicates = 100_000;
    run(&c).unwrap()
}

#[test]
fn criterion_03_theorem_2_1_dominance() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, mode) in [(3, DistanceMode::Exact), (100, DistanceMode::MonteCarlo), (10_000, DistanceMode::MonteCarlo)] {
        let r = bound_run(iid(n, BaseDistribution::Rademacher), vec![TheoremId::T2_1], None, 3);
        let v = r.theorems[0].verdict.unwrap();
        ok &= v.pass && r.distance.mode == mode;
        if n == 3 {
            ok &= (r.distance.ks - 0.21814856917461349).abs() < 1e-12;
            ok &= (r.theorems[0].bound.value - 6.851).abs() < 1e-3;
        }
        parts.push(format!(
            "n={n}: ks−3dkw={:.4e} ≤ bound+3se={:.4e}",
            v.lower, v.upper
        ));
    }
    verdict(3, ok, start.elapsed(), secs(120), parts.join("; "));
}

#[test]
fn criterion_04_moment_theorems_dominance() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let r = bound_run(
        moving_sum(10_000, BaseDistribution::Uniform),
        vec![TheoremId::T2_2, TheoremId::T2_4],
        Some(3.0),
        4,
    );
    let t24 = &r.theorems[1].bound;
    let kappa = t24.ingredients["kappa"];
    let gamma = t24.ingredients["gamma"];
    let ok = r.all_pass
        && kappa == 11.0
        && (t24.value - 75.0 * 121.0 * gamma).abs() <= 1e-9 * t24.value
        && r.distance.ks < 1e-2;
    verdict(
        4,
        ok,
        start.elapsed(),
        secs(300),
        format!(
            "ks={:.3e} dkw={:.3e}; 2.2 bound={:.4} {}; 2.4 bound={:.4} (κ={kappa}, Σ E|X|³={gamma:.4e}) {}",
            r.distance.ks,
            r.distance.dkw_radius,
            r.theorems[0].bound.value,
            if r.theorems[0].verdict.unwrap().pass { "PASS" } else { "FAIL" },
            t24.value,
            if r.theorems[1].verdict.unwrap().pass { "PASS" } else { "FAIL" },
        ),
    );
}

#[test]
fn criterion_05_lattice_constant() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut kappa_ok = true;
    for (shape, m) in [(vec![12], 1), (vec![12], 2), (vec![3, 3], 1), (vec![4, 4], 2)] {
        let model = moving_sum_field(&shape, m, BaseDistribution::Rademacher).unwrap();
        let d = shape.len();
        let kappa = ((10 * m + 1) as f64).powi(d as i32);
        kappa_ok &= model.system().kappa_stats().kappa_nc.unwrap() as f64 <= kappa;
        for p in [2.5, 3.0] {
            let moments = estimate_moments(&model, model.system(), p, 2_000, 5).unwrap();
            let lattice = BoundIngredients {
                moments: Some(&moments),
                m: Some(m),
                dim: Some(d),
                ..Default::default()
            };
            let general = BoundIngredients {
                moments: Some(&moments),
                kappa_override: Some(kappa),
                ..Default::default()
            };
            let a = theorem_bound(TheoremId::T2_6U, p, &lattice).unwrap();
            let b = theorem_bound(TheoremId::T2_4, p, &general).unwrap();
            worst = worst.max((a.value - b.value).abs() / b.value).max((a.se - b.se).abs() / b.se.max(1e-300));
        }
    }
    verdict(
        5,
        worst <= 1e-12 && kappa_ok,
        start.elapsed(),
        secs(60),
        format!("max relative difference 2.6u vs 2.4 at κ=(10m+1)^d: {worst:.2e}"),
    );
}

fn ladder(model: ModelSpec, sizes: Vec<usize>, seed: u64) -> locdep::experiment::RateReport {
    let mut c = ExperimentConfig::new(model, seed);
    c.ladder = sizes;
    c.replicates = 100_000;
    run_rate_study(&c).unwrap()
}

#[test]
fn criterion_06_rates() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let iid_rate = ladder(iid(64, BaseDistribution::Rademacher), vec![64, 256, 1024, 4096], 6);
    let erickson = ladder(ModelSpec::Erickson { n: 256 }, vec![256, 1024, 4096, 16384], 6);
    let b2 = erickson_variances(1_000_000);
    let worst = b2
        .iter()
        .enumerate()
        .map(|(k, &b)| (b as f64 - ((k + 1) as f64).sqrt()).abs())
        .fold(0.0, f64::max);
    let s1 = iid_rate.fit.slope;
    let s2 = erickson.fit.slope;
    let ok = (-0.6..=-0.4).contains(&s1) && (-0.35..=-0.15).contains(&s2) && worst <= 2.0;
    verdict(
        6,
        ok,
        start.elapsed(),
        secs(600),
        format!("iid slope={s1:.4}, erickson slope={s2:.4}, max |B_n² − √n| over n ≤ 10⁶ = {worst:.4}"),
    );
}

#[test]
fn criterion_07_local_maxima_moments() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let c9 = local_maxima_field(Graph::cycle(9).unwrap()).unwrap();
    let lm = c9.as_local_maxima().unwrap();
    let n = 100_000u64;
    let counts: Vec<f64> = sample_w(&c9, n, 7).into_iter().map(|w| lm.raw_count(w)).collect();
    let mut first = Moments::default();
    for &c in &counts {
        first.push(c);
    }
    let mean = first.mean();
    let mean_se = first.se();
    let mut sq = Moments::default();
    for &c in &counts {
        sq.push((c - mean).powi(2));
    }
    let var = sq.mean();
    let var_se = sq.se();
    let mc_ok = (mean - 3.0).abs() <= 4.0 * mean_se && (var - 0.4).abs() <= 4.0 * var_se;

    // Exact law over all 7! rank orderings of C₇ against E = n/3, Var = 2n/45.
    let c7 = local_maxima_field(Graph::cycle(7).unwrap()).unwrap();
    let lm7 = c7.as_local_maxima().unwrap();
    let atoms = c7.exact_enumerate().unwrap();
    let em: f64 = atoms.iter().map(|a| a.prob * lm7.raw_count(a.value)).sum();
    let ev: f64 = atoms.iter().map(|a| a.prob * (lm7.raw_count(a.value) - em).powi(2)).sum();
    let exact_ok = (em - 7.0 / 3.0).abs() < 1e-12 && (ev - 14.0 / 45.0).abs() < 1e-12;
    let formula_ok = (lm.moments().mean - 3.0).abs() < 1e-12 && (lm.moments().variance - 0.4).abs() < 1e-12;
    verdict(
        7,
        mc_ok && exact_ok && formula_ok,
        start.elapsed(),
        secs(60),
        format!(
            "C9: EW={mean:.4}±{mean_se:.1e}, Var={var:.4}±{var_se:.1e}; C7 exact: EW={em:.12}, Var={ev:.12}"
        ),
    );
}

#[test]
fn criterion_08_nonuniform_decay() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let model = moving_sum_field(&[4096], 1, BaseDistribution::ShiftedExponential).unwrap();
    let d = nonuniform_profile(&model, 100_000, 8, DEFAULT_DELTA, &[0.0, 1.0, 2.0, 3.0]).unwrap();
    let profile = d.profile.unwrap();
    let base = profile[0].abs_diff + 3.0 * profile[0].se;
    let ratios: Vec<f64> = profile
        .iter()
        .map(|p| (p.abs_diff - 3.0 * p.se).max(0.0) * (1.0 + p.z).powi(3))
        .collect();
    let ok = ratios.iter().all(|&r| r <= 20.0 * base);
    let detail = profile
        .iter()
        .zip(&ratios)
        .map(|(p, r)| format!("z={}: |ΔF|={:.2e}±{:.1e} ratio={r:.2e}", p.z, p.abs_diff, p.se))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(8, ok, start.elapsed(), secs(120), format!("{detail}; limit 20×{base:.2e}"));
}

#[test]
fn criterion_09_inequality_suites() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let l31 = verify::lemma_3_1_suite(50, 9).unwrap();
    let l32 = verify::lemma_3_2_suite(50, 9).unwrap();
    let p31 = verify::proposition_3_1_suite(10, 10, 9).unwrap();
    let ok = l31.passed() && l32.passed() && p31.passed() && l31.cases == 50 && l32.cases == 50 && p31.cases == 100;
    verdict(
        9,
        ok,
        start.elapsed(),
        secs(60),
        format!(
            "lemma 3.1 {}/{}, lemma 3.2 {}/{}, proposition 3.1 {}/{}",
            l31.cases - l31.failures,
            l31.cases,
            l32.cases - l32.failures,
            l32.cases,
            p31.cases - p31.failures,
            p31.cases
        ),
    );
}

#[test]
fn criterion_10_stein_properties() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let r = verify::stein_suite().unwrap();
    verdict(
        10,
        r.suite.passed(),
        start.elapsed(),
        secs(5),
        format!(
            "{} points: f ∈ [{:.4}, {:.4}], max |f′|={:.4}, max ODE residual={:.2e}",
            r.suite.cases, r.min_f, r.max_f, r.max_abs_derivative, r.max_residual
        ),
    );
}

fn numerics(report: &ExperimentReport) -> serde_json::Value {
    let mut v = serde_json::to_value(report).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_seconds");
    v
}

#[test]
fn criterion_11_thread_count_determinism() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut c = ExperimentConfig::new(moving_sum(400, BaseDistribution::Uniform), 11);
    c.theorems = vec![
        TheoremId::T2_1,
        TheoremId::T2_2,
        TheoremId::T2_3,
        TheoremId::T2_4,
        TheoremId::T2_5Rate,
        TheoremId::T2_6U,
        TheoremId::T2_6NRate,
    ];
    c.replicates = 20_000;
    c.zgrid = vec![0.0, 1.0, 2.0];
    let mut rate = ExperimentConfig::new(ModelSpec::Erickson { n: 64 }, 11);
    rate.ladder = vec![64, 256, 1024];
    rate.replicates = 20_000;
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let r = run(&c).unwrap();
                let mut s = serde_json::to_value(run_rate_study(&rate).unwrap()).unwrap();
                s.as_object_mut().unwrap().remove("wall_time_seconds");
                (serde_json::to_string(&numerics(&r)).unwrap(), serde_json::to_string(&s).unwrap())
            })
    };
    let reference = in_pool(1);
    let same = [2, 3, 8].into_iter().all(|t| in_pool(t) == reference);
    verdict(
        11,
        same,
        start.elapsed(),
        secs(300),
        format!("bounds and rate reports identical under 1, 2, 3 and 8 threads ({} bytes)", reference.0.len()),
    );
}
