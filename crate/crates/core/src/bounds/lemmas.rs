//! Exact checks of the fourth-moment identities and bounds for sums of
//! locally dependent variables, and of the interval concentration bound.

use serde::{Deserialize, Serialize};

use super::rterms::{estimate_r_terms, RTerms};
use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::montecarlo::{chunked_reduce, stream, substream, Estimate};
use crate::neighborhoods::{Level, NeighborhoodSystem, SetKind};
use crate::stein::set_sums;

/// Polynomial `g(v) = Σ_k c_k v^k`; applied per index and centred exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn identity() -> Self {
        Polynomial(vec![0.0, 1.0])
    }

    pub fn zero() -> Self {
        Polynomial(Vec::new())
    }

    pub fn eval(&self, v: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * v + c)
    }
}

fn require_enumerable(model: &FieldModel) -> Result<()> {
    if model.is_enumerable() {
        Ok(())
    } else {
        Err(Error::Capability("exact check needs an enumerable model".into()))
    }
}

/// Exact `E g(v_i)` for every index, where `v` is `x` itself or its local sums.
fn centres(model: &FieldModel, g: &Polynomial, sets: Option<&[Vec<usize>]>) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; model.len()];
    let mut buf = Vec::new();
    model.for_each_outcome(|p, x| {
        let v = match sets {
            Some(s) => {
                set_sums(x, s, &mut buf);
                &buf[..]
            }
            None => x,
        };
        for (m, &vi) in mean.iter_mut().zip(v) {
            *m += p * g.eval(vi);
        }
    })?;
    Ok(mean)
}

fn close(lhs: f64, rhs: f64, scale: f64, rel: f64) -> bool {
    (lhs - rhs).abs() <= rel * scale.max(lhs.abs()).max(rhs.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma31Report {
    /// `E T²`.
    pub sigma_sq: f64,
    /// `Σ_i Σ_{j∈A_i} E ξ_i ξ_j`.
    pub sigma_sq_local: f64,
    /// `E T⁴`.
    pub fourth_moment: f64,
    /// Right-hand side of the exact fourth-moment expansion.
    pub fourth_moment_expansion: f64,
    pub kappa1: usize,
    /// `κ_1 Σ E ξ_i²`.
    pub variance_bound: f64,
    /// `3σ⁴ + 22 κ_1³ Σ E ξ_i⁴`.
    pub fourth_moment_bound: f64,
    pub variance_identity_holds: bool,
    pub fourth_moment_identity_holds: bool,
    pub variance_bound_holds: bool,
    pub fourth_moment_bound_holds: bool,
}

impl Lemma31Report {
    pub fn holds(&self) -> bool {
        self.variance_identity_holds
            && self.fourth_moment_identity_holds
            && self.variance_bound_holds
            && self.fourth_moment_bound_holds
    }
}

/// With `ξ_i = g(X_i) − E g(X_i)` and `T = Σ ξ_i`, evaluate exactly
/// `σ² = Σ_i Σ_{j∈A_i} Eξ_iξ_j`, the expansion of `ET⁴` through the local sums
/// `ξ_{A_i}, ξ_{B_i}, ξ_{C_i}`, and the bounds `σ² ≤ κ_1 Σ Eξ_i²`,
/// `ET⁴ ≤ 3σ⁴ + 22κ_1³ Σ Eξ_i⁴`.
pub fn lemma_3_1_check(model: &FieldModel, system: &NeighborhoodSystem, xi: &Polynomial) -> Result<Lemma31Report> {
    require_enumerable(model)?;
    system.require_level(Level::Ld3)?;
    let n = system.len();
    let a = system.a_sets();
    let b = system.sets(SetKind::B)?;
    let c = system.sets(SetKind::C)?;
    let mu = centres(model, xi, None)?;

    // per index: E ξξ_A, E ξ_Bξ_C, E ξ_B², E ξξ_A²ξ_B, E ξξ_A³, E ξξ_Aξ_Bξ_C, E ξξ_Aξ_B²
    let mut e = vec![[0.0f64; 7]; n];
    let (mut et2, mut et4, mut sum2, mut sum4) = (0.0, 0.0, 0.0, 0.0);
    let mut local = 0.0;
    let mut s = vec![0.0; n];
    let (mut sa, mut sb, mut sc) = (Vec::new(), Vec::new(), Vec::new());
    model.for_each_outcome(|p, x| {
        for i in 0..n {
            s[i] = xi.eval(x[i]) - mu[i];
        }
        set_sums(&s, a, &mut sa);
        set_sums(&s, b, &mut sb);
        set_sums(&s, c, &mut sc);
        let t: f64 = s.iter().sum();
        et2 += p * t * t;
        et4 += p * t * t * t * t;
        for i in 0..n {
            let (si, ya, yb, yc) = (s[i], sa[i], sb[i], sc[i]);
            sum2 += p * si * si;
            sum4 += p * si.powi(4);
            local += p * si * ya;
            let v = &mut e[i];
            v[0] += p * si * ya;
            v[1] += p * yb * yc;
            v[2] += p * yb * yb;
            v[3] += p * si * ya * ya * yb;
            v[4] += p * si * ya.powi(3);
            v[5] += p * si * ya * yb * yc;
            v[6] += p * si * ya * yb * yb;
        }
    })?;
    let terms = [
        3.0 * local * local,
        -6.0 * e.iter().map(|v| v[0] * v[1]).sum::<f64>(),
        3.0 * e.iter().map(|v| v[0] * v[2]).sum::<f64>(),
        -3.0 * e.iter().map(|v| v[3]).sum::<f64>(),
        e.iter().map(|v| v[4]).sum::<f64>(),
        6.0 * e.iter().map(|v| v[5]).sum::<f64>(),
        -3.0 * e.iter().map(|v| v[6]).sum::<f64>(),
    ];
    let expansion: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    let kappa1 = system.kappa_stats().k1()?;
    let k = kappa1 as f64;
    let variance_bound = k * sum2;
    let fourth_moment_bound = 3.0 * et2 * et2 + 22.0 * k.powi(3) * sum4;
    let slack = 1e-12 * (1.0 + et2.abs());
    Ok(Lemma31Report {
        sigma_sq: et2,
        sigma_sq_local: local,
        fourth_moment: et4,
        fourth_moment_expansion: expansion,
        kappa1,
        variance_bound,
        fourth_moment_bound,
        variance_identity_holds: close(et2, local, 0.0, 1e-10),
        fourth_moment_identity_holds: close(et4, expansion, scale, 1e-10),
        variance_bound_holds: et2 <= variance_bound + slack,
        fourth_moment_bound_holds: et4 <= fourth_moment_bound + slack * (1.0 + et2.abs()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma32Report {
    /// `E(T²S²)`.
    pub lhs: f64,
    pub et2: f64,
    pub es2: f64,
    pub kappa2: usize,
    /// `3ET²ES² + 12κ_2³ Σ {E|ξ_i|⁴ + E|η_i|⁴}`.
    pub rhs: f64,
    pub holds: bool,
}

/// `ξ_i = g(X_i) − E g(X_i)`, `η_i = h(Y_i) − E h(Y_i)` with `Y_i = Σ_{A_i} X`
/// (a function of `X_{A_i}`); checks `E(T²S²) ≤ 3ET²ES² + 12κ_2³ Σ{E|ξ_i|⁴ + E|η_i|⁴}`.
pub fn lemma_3_2_check(
    model: &FieldModel,
    system: &NeighborhoodSystem,
    xi: &Polynomial,
    eta: &Polynomial,
) -> Result<Lemma32Report> {
    require_enumerable(model)?;
    system.require_level(Level::Ld4Star)?;
    let n = system.len();
    let a = system.a_sets();
    let mu_xi = centres(model, xi, None)?;
    let mu_eta = centres(model, eta, Some(a))?;
    let (mut lhs, mut et2, mut es2, mut fourth) = (0.0, 0.0, 0.0, 0.0);
    let mut y = Vec::new();
    model.for_each_outcome(|p, x| {
        set_sums(x, a, &mut y);
        let (mut t, mut s) = (0.0, 0.0);
        for i in 0..n {
            let u = xi.eval(x[i]) - mu_xi[i];
            let v = eta.eval(y[i]) - mu_eta[i];
            t += u;
            s += v;
            fourth += p * (u.powi(4) + v.powi(4));
        }
        lhs += p * t * t * s * s;
        et2 += p * t * t;
        es2 += p * s * s;
    })?;
    let kappa2 = system.kappa_stats().k2()?;
    let rhs = 3.0 * et2 * es2 + 12.0 * (kappa2 as f64).powi(3) * fourth;
    Ok(Lemma32Report {
        lhs,
        et2,
        es2,
        kappa2,
        rhs,
        holds: lhs <= rhs + 1e-12 * (1.0 + rhs.abs()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalCheck {
    pub a: f64,
    pub b: f64,
    /// `P(a ≤ W ≤ b)`, exact or Monte Carlo with binomial standard error.
    pub probability: Estimate,
    /// `0.625(b − a) + 4r2 + 2.125r3 + 4r5`.
    pub rhs: Estimate,
    /// `P̂ − 3se ≤ rhs + 3se_rhs`.
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub intervals: Vec<IntervalCheck>,
}

impl ConcentrationReport {
    pub fn holds(&self) -> bool {
        self.intervals.iter().all(|c| c.holds)
    }
}

/// Checks `P(a ≤ W ≤ b) ≤ 0.625(b − a) + 4r2 + 2.125r3 + 4r5` on each interval.
pub fn proposition_3_1_check(
    model: &FieldModel,
    system: &NeighborhoodSystem,
    intervals: &[(f64, f64)],
    replicates: u64,
    seed: u64,
) -> Result<ConcentrationReport> {
    let terms = estimate_r_terms(model, system, replicates, seed)?;
    proposition_3_1_with_terms(model, &terms, intervals, replicates, seed)
}

/// As [`proposition_3_1_check`] with precomputed r-terms.
pub fn proposition_3_1_with_terms(
    model: &FieldModel,
    terms: &RTerms,
    intervals: &[(f64, f64)],
    replicates: u64,
    seed: u64,
) -> Result<ConcentrationReport> {
    if let Some(&(a, b)) = intervals.iter().find(|(a, b)| !(a <= b)) {
        return Err(Error::InvalidArgument(format!("interval [{a}, {b}] has a > b")));
    }
    let tol = 1e-9;
    let probabilities: Vec<Estimate> = if model.is_enumerable() {
        let atoms = model.exact_enumerate()?;
        intervals
            .iter()
            .map(|&(a, b)| {
                Estimate::exact(
                    atoms
                        .iter()
                        .filter(|t| t.value >= a - tol && t.value <= b + tol)
                        .map(|t| t.prob)
                        .sum(),
                )
            })
            .collect()
    } else {
        if replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be positive".into()));
        }
        let counts = chunked_reduce(
            replicates,
            |range| {
                let mut sampler = model.sampler();
                let mut buf = Vec::new();
                let mut hits = vec![0u64; intervals.len()];
                for r in range {
                    let w = sampler.draw_w(&mut substream(seed, stream::INTERVALS, r), &mut buf);
                    for (h, &(a, b)) in hits.iter_mut().zip(intervals) {
                        *h += (w >= a && w <= b) as u64;
                    }
                }
                hits
            },
            |mut x, y| {
                for (u, v) in x.iter_mut().zip(y) {
                    *u += v;
                }
                x
            },
        )
        .unwrap_or_default();
        counts
            .into_iter()
            .map(|c| {
                let p = c as f64 / replicates as f64;
                Estimate::mc(p, (p * (1.0 - p) / replicates as f64).sqrt())
            })
            .collect()
    };
    let fixed = 4.0 * terms.r2.value + 2.125 * terms.r3.value + 4.0 * terms.r5.value;
    let fixed_se = 4.0 * terms.r2.se + 2.125 * terms.r3.se + 4.0 * terms.r5.se;
    let intervals = intervals
        .iter()
        .zip(probabilities)
        .map(|(&(a, b), probability)| {
            let rhs = Estimate::derived(0.625 * (b - a) + fixed, fixed_se);
            IntervalCheck {
                a,
                b,
                holds: probability.value - 3.0 * probability.se <= rhs.value + 3.0 * rhs.se,
                probability,
                rhs,
            }
        })
        .collect();
    Ok(ConcentrationReport { intervals })
}
