//! Independent oracles for the kernel closed forms and the exact/Monte Carlo
//! agreement of the r-terms.

use locdep::bounds::{estimate_r_terms, estimate_r_terms_with, RTermOptions};
use locdep::fields::{erickson_field, iid_field, moving_sum_field};
use locdep::stein::{r5_closed_form, r6sq_closed_form, KernelSample};
use locdep::{BaseDistribution, FieldModel};

fn outcomes(model: &FieldModel) -> Vec<(f64, KernelSample)> {
    let mut out = Vec::new();
    model
        .for_each_outcome(|p, x| out.push((p, KernelSample::new(x, model.system()))))
        .unwrap();
    out
}

/// `(∫_{|t|≤1} Var K̂(t) dt, ∫_{|t|≤1} |t| Var K̂(t) dt)` by integrating the
/// piecewise-constant variance exactly between consecutive breakpoints.
fn t_integrals(samples: &[(f64, KernelSample)]) -> (f64, f64) {
    let mut cuts = vec![-1.0, 0.0, 1.0];
    for (_, s) in samples {
        cuts.extend(s.y.iter().map(|&y| -y).filter(|t| t.abs() < 1.0));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let (mut plain, mut weighted) = (0.0, 0.0);
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let (mut m1, mut m2) = (0.0, 0.0);
        for (p, s) in samples {
            let k = s.khat(mid);
            m1 += p * k;
            m2 += p * k * k;
        }
        let var = m2 - m1 * m1;
        plain += var * (hi - lo);
        // ∫_lo^hi |t| dt with lo, hi on the same side of 0
        weighted += var * (hi * hi.abs() - lo * lo.abs()) / 2.0;
    }
    (plain, weighted)
}

fn paired_average(samples: &[(f64, KernelSample)], pairs: Option<&[(usize, usize)]>) -> (f64, f64) {
    let (mut r5, mut r6sq) = (0.0, 0.0);
    for (p, s) in samples {
        for (q, c) in samples {
            r5 += p * q * r5_closed_form(s, c, pairs);
            r6sq += p * q * r6sq_closed_form(s, c, pairs);
        }
    }
    (r5, r6sq)
}

#[test]
fn closed_forms_match_t_integration() {
    let models = [
        iid_field(3, BaseDistribution::Rademacher).unwrap(),
        iid_field(5, BaseDistribution::Rademacher).unwrap(),
        moving_sum_field(&[4], 1, BaseDistribution::Rademacher).unwrap(),
        moving_sum_field(&[6], 1, BaseDistribution::Rademacher).unwrap(),
        moving_sum_field(&[5], 2, BaseDistribution::Rademacher).unwrap(),
        erickson_field(6).unwrap(),
    ];
    for model in &models {
        let samples = outcomes(model);
        let (r5, r6sq) = t_integrals(&samples);
        let all = paired_average(&samples, None);
        let pairs = model.system().neighbor_pairs_b().unwrap();
        let local = paired_average(&samples, Some(&pairs));
        for (got, want) in [(all.0, r5), (all.1, r6sq), (local.0, r5), (local.1, r6sq)] {
            assert!((got - want).abs() < 1e-12, "{:?}: {got} vs {want}", model.spec());
        }
        let exact = estimate_r_terms(model, model.system(), 0, 0).unwrap();
        assert!((exact.r5.value - r5).abs() < 1e-12);
        assert!((exact.r6_squared.value - r6sq).abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_terms_agree_with_enumeration() {
    for model in [
        moving_sum_field(&[5], 1, BaseDistribution::Rademacher).unwrap(),
        erickson_field(7).unwrap(),
    ] {
        let exact = estimate_r_terms(&model, model.system(), 0, 0).unwrap();
        let mc = estimate_r_terms_with(
            &model,
            model.system(),
            &RTermOptions {
                replicates: 60_000,
                seed: 13,
                ld3_terms: true,
                force_monte_carlo: true,
            },
        )
        .unwrap();
        let e = exact.named();
        let m = mc.named();
        assert_eq!(e.len(), m.len());
        for ((name, ex), (_, est)) in e.iter().zip(&m) {
            assert!(
                est.agrees_with(ex.value, 4.0),
                "{:?} {name}: exact {} vs {est}",
                model.spec(),
                ex.value
            );
        }
    }
}
