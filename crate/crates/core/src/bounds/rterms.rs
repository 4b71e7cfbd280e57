//! Estimation of the bound terms `r1`–`r12`.
//!
//! Unstarred terms are averages of their defining expressions. Terms that
//! involve an independent copy (`r5`, `r6`, `r10`) pair every realization
//! with a fully independent second realization drawn on its own stream.
//! Models with at most [`MAX_EXACT_OUTCOMES`](crate::fields::MAX_EXACT_OUTCOMES)
//! outcomes are handled by exact enumeration instead; there the starred
//! expectations factor through the per-index laws of `(X_j, Y_j)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::montecarlo::{chunked_reduce, stream, substream, Estimate, Method, Moments, VecMoments};
use crate::neighborhoods::{Level, NeighborhoodSystem, SetKind};
use crate::stein::{all_pairs_sum, set_sums, Cap};

/// Estimates of `r1`–`r12`; `r7`–`r12` are present only for LD3 systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RTerms {
    pub r1: Estimate,
    pub r2: Estimate,
    pub r3: Estimate,
    pub r4: Estimate,
    pub r5: Estimate,
    pub r6: Estimate,
    pub r6_squared: Estimate,
    pub r7: Option<Estimate>,
    pub r8: Option<Estimate>,
    pub r9: Option<Estimate>,
    pub r10: Option<Estimate>,
    pub r11: Option<Estimate>,
    pub r12: Option<Estimate>,
    /// Estimate of `Σ_i E X_i Y_i` used to centre `r1` (1 for a standardized field).
    pub centre: Estimate,
    /// Replicates of the main pass (0 for exact enumeration).
    pub replicates: u64,
    /// Replicates of the two `r1` phases, when estimated by Monte Carlo.
    pub r1_phases: Option<[u64; 2]>,
    pub method: Method,
}

impl RTerms {
    /// `(name, estimate)` for every available term, in order.
    pub fn named(&self) -> Vec<(&'static str, Estimate)> {
        let mut out = vec![
            ("r1", self.r1),
            ("r2", self.r2),
            ("r3", self.r3),
            ("r4", self.r4),
            ("r5", self.r5),
            ("r6", self.r6),
        ];
        let ld3 = [
            ("r7", self.r7),
            ("r8", self.r8),
            ("r9", self.r9),
            ("r10", self.r10),
            ("r11", self.r11),
            ("r12", self.r12),
        ];
        out.extend(ld3.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
        out
    }

    pub fn has_ld3_terms(&self) -> bool {
        self.r7.is_some()
    }
}

/// Controls for [`estimate_r_terms_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RTermOptions {
    pub replicates: u64,
    pub seed: u64,
    /// Estimate `r7`–`r12`; needs an LD3 system.
    pub ld3_terms: bool,
    /// Use Monte Carlo even when exact enumeration is available.
    pub force_monte_carlo: bool,
}

/// All terms the system supports: `r7`–`r12` are included at LD3 and above.
pub fn estimate_r_terms(model: &FieldModel, system: &NeighborhoodSystem, replicates: u64, seed: u64) -> Result<RTerms> {
    estimate_r_terms_with(
        model,
        system,
        &RTermOptions {
            replicates,
            seed,
            ld3_terms: system.level() >= Level::Ld3,
            force_monte_carlo: false,
        },
    )
}

pub fn estimate_r_terms_with(model: &FieldModel, system: &NeighborhoodSystem, opts: &RTermOptions) -> Result<RTerms> {
    if system.len() != model.len() {
        return Err(Error::Structural(format!(
            "system has {} indices, model has {}",
            system.len(),
            model.len()
        )));
    }
    if opts.ld3_terms {
        system.require_level(Level::Ld3)?;
    }
    let ctx = Context::new(system, opts.ld3_terms)?;
    if model.is_enumerable() && !opts.force_monte_carlo {
        exact(model, &ctx)
    } else {
        if opts.replicates < 2 {
            return Err(Error::InvalidArgument("Monte Carlo r-terms need at least 2 replicates".into()));
        }
        monte_carlo(model, &ctx, opts.replicates, opts.seed)
    }
}

struct Context<'a> {
    n: usize,
    a: &'a [Vec<usize>],
    b: Option<&'a [Vec<usize>]>,
    /// `B_i ∩ B_j ≠ ∅` pairs; `None` at LD1, where every pair counts.
    pairs: Option<Vec<(usize, usize)>>,
    ld3: bool,
}

impl<'a> Context<'a> {
    fn new(system: &'a NeighborhoodSystem, ld3: bool) -> Result<Self> {
        let at_ld2 = system.level() >= Level::Ld2;
        Ok(Context {
            n: system.len(),
            a: system.a_sets(),
            b: if ld3 { Some(system.sets(SetKind::B)?) } else { None },
            pairs: if at_ld2 { Some(system.neighbor_pairs_b()?) } else { None },
            ld3,
        })
    }

    fn all_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n).flat_map(|i| (0..self.n).map(move |j| (i, j))).collect()
    }
}

// Slots of the per-replicate scalar vector.
const R2: usize = 0;
const R3: usize = 1;
const R4: usize = 2;
const R5: usize = 3;
const R6SQ: usize = 4;
const R7: usize = 5;
const R8: usize = 6;
const R9: usize = 7;
const R10: usize = 8;
const SLOTS: usize = 9;

/// Unstarred per-realization terms, written into `out`.
#[allow(clippy::too_many_arguments)]
fn unstarred(ctx: &Context, x: &[f64], y: &[f64], z: &[f64], caps: &mut Vec<f64>, out: &mut [f64; SLOTS]) {
    let w: f64 = x.iter().sum();
    out.fill(0.0);
    caps.clear();
    caps.extend(y.iter().map(|v| v.abs().min(1.0)));
    for i in 0..ctx.n {
        let (xi, yi) = (x[i], y[i]);
        let axy = (xi * yi).abs();
        let ysq = (yi * yi).min(1.0);
        if yi.abs() > 1.0 {
            out[R2] += axy;
        }
        out[R3] += xi.abs() * ysq;
        out[R4] += (w * xi).abs() * ysq;
        if ctx.ld3 {
            let zi = z[i];
            if xi.abs() > 1.0 {
                out[R7] += axy;
            } else {
                out[R8] += xi.abs() * caps[i] * zi.abs();
                out[R9] += (w * xi).abs() * caps[i] * zi.abs().min(1.0);
            }
        }
    }
    match &ctx.pairs {
        Some(pairs) => {
            for &(i, j) in pairs {
                let m = caps[i].min(caps[j]);
                let xx = x[i] * x[j];
                if y[i] * y[j] >= 0.0 {
                    out[R5] += xx * m;
                    out[R6SQ] += xx * m * m;
                }
                out[R10] += xx.abs() * m;
            }
        }
        None => {
            out[R5] = all_pairs_sum((x, y), (x, y), Cap::Linear);
            out[R6SQ] = all_pairs_sum((x, y), (x, y), Cap::Squared);
        }
    }
    out[R6SQ] *= 0.5;
    if !ctx.ld3 {
        out[R10] = 0.0;
    }
}

/// Starred parts `(r5*, r6²*, r10*)` from a realization and its independent copy.
fn starred(ctx: &Context, x: &[f64], y: &[f64], xs: &[f64], ys: &[f64]) -> [f64; 3] {
    match &ctx.pairs {
        Some(pairs) => {
            let (mut r5, mut r6, mut r10) = (0.0, 0.0, 0.0);
            for &(i, j) in pairs {
                let m = y[i].abs().min(ys[j].abs()).min(1.0);
                let xx = x[i] * xs[j];
                if y[i] * ys[j] >= 0.0 {
                    r5 += xx * m;
                    r6 += xx * m * m;
                }
                r10 += xx.abs() * m;
            }
            [r5, 0.5 * r6, if ctx.ld3 { r10 } else { 0.0 }]
        }
        None => [
            all_pairs_sum((x, y), (xs, ys), Cap::Linear),
            0.5 * all_pairs_sum((x, y), (xs, ys), Cap::Squared),
            0.0,
        ],
    }
}

/// Accumulates one Monte Carlo chunk.
struct Chunk {
    scalars: VecMoments,
    /// Per-index sums of `I(|X_i|>1)`, `|X_i|(|Y_i|∧1)`, `(|W|+1)(|Z_i|∧1)`.
    index_sums: Vec<[f64; 3]>,
    /// `r11`, `r12` computed from this chunk alone (batch means).
    batches: Vec<[f64; 2]>,
}

impl Chunk {
    fn merge(mut self, other: Chunk) -> Chunk {
        self.scalars = self.scalars.merge(other.scalars);
        for (a, b) in self.index_sums.iter_mut().zip(&other.index_sums) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
        self.batches.extend(other.batches);
        self
    }
}

fn products(index_sums: &[[f64; 3]], count: f64) -> [f64; 2] {
    let mut out = [0.0; 2];
    for s in index_sums {
        let e = s[1] / count;
        out[0] += s[0] / count * e;
        out[1] += s[2] / count * e;
    }
    out
}

/// Standard error of a nonlinear statistic from its batch replicates.
pub(crate) fn batch_se(batches: &[f64], fallback: f64) -> f64 {
    let k = batches.len();
    if k < 2 {
        return fallback.abs();
    }
    let mean = batches.iter().sum::<f64>() / k as f64;
    let var = batches.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / (k as f64 - 1.0);
    (var / k as f64).sqrt()
}

fn monte_carlo(model: &FieldModel, ctx: &Context, replicates: u64, seed: u64) -> Result<RTerms> {
    let n = ctx.n;
    let chunk = chunked_reduce(
        replicates,
        |range| {
            let mut sampler = model.sampler();
            let mut copy_sampler = model.sampler();
            let (mut x, mut xs) = (vec![0.0; n], vec![0.0; n]);
            let (mut y, mut ys, mut z, mut caps) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            let mut terms = [0.0; SLOTS];
            let mut scalars = VecMoments::new(SLOTS);
            let mut index_sums = vec![[0.0; 3]; if ctx.ld3 { n } else { 0 }];
            let count = (range.end - range.start) as f64;
            for r in range {
                sampler.fill(&mut substream(seed, stream::PRIMARY, r), &mut x);
                copy_sampler.fill(&mut substream(seed, stream::COPY, r), &mut xs);
                set_sums(&x, ctx.a, &mut y);
                set_sums(&xs, ctx.a, &mut ys);
                if let Some(b) = ctx.b {
                    set_sums(&x, b, &mut z);
                }
                unstarred(ctx, &x, &y, &z, &mut caps, &mut terms);
                let s = starred(ctx, &x, &y, &xs, &ys);
                terms[R5] -= s[0];
                terms[R6SQ] -= s[1];
                terms[R10] += s[2];
                scalars.push(terms.iter().copied());
                if ctx.ld3 {
                    let w: f64 = x.iter().sum();
                    for (i, acc) in index_sums.iter_mut().enumerate() {
                        let e = x[i].abs() * y[i].abs().min(1.0);
                        acc[0] += (x[i].abs() > 1.0) as u8 as f64;
                        acc[1] += e;
                        acc[2] += (w.abs() + 1.0) * z[i].abs().min(1.0);
                    }
                }
            }
            let batches = if ctx.ld3 { vec![products(&index_sums, count)] } else { Vec::new() };
            Chunk {
                scalars,
                index_sums,
                batches,
            }
        },
        Chunk::merge,
    )
    .expect("at least one chunk");

    let (phase1, phase2) = r1_phase_sizes(replicates);
    let centre = chunked_reduce(
        phase1,
        |range| {
            let mut sampler = model.sampler();
            let (mut x, mut y) = (vec![0.0; n], Vec::new());
            let mut m = Moments::default();
            for r in range {
                sampler.fill(&mut substream(seed, stream::R1_PHASE1, r), &mut x);
                set_sums(&x, ctx.a, &mut y);
                m.push(x.iter().zip(&y).map(|(a, b)| a * b).sum());
            }
            m
        },
        Moments::merge,
    )
    .expect("phase 1 has replicates");
    let mu = centre.mean();
    let deviation = chunked_reduce(
        phase2,
        |range| {
            let mut sampler = model.sampler();
            let (mut x, mut y) = (vec![0.0; n], Vec::new());
            let mut m = Moments::default();
            for r in range {
                sampler.fill(&mut substream(seed, stream::R1_PHASE2, r), &mut x);
                set_sums(&x, ctx.a, &mut y);
                let s: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
                m.push((s - mu).abs());
            }
            m
        },
        Moments::merge,
    )
    .expect("phase 2 has replicates");
    // Using the estimated centre perturbs E|S − μ| by at most |μ̂ − μ|.
    let r1 = Estimate::mc(deviation.mean(), deviation.se().hypot(centre.se()));

    let s = &chunk.scalars;
    let term = |k: usize| nonnegative(s.get(k).estimate());
    let r6_squared = s.get(R6SQ).estimate();
    let ld3 = |k: usize| ctx.ld3.then(|| term(k));
    let (r11, r12) = if ctx.ld3 {
        let full = products(&chunk.index_sums, s.count as f64);
        let b11: Vec<f64> = chunk.batches.iter().map(|b| b[0]).collect();
        let b12: Vec<f64> = chunk.batches.iter().map(|b| b[1]).collect();
        (
            Some(Estimate::mc(full[0], batch_se(&b11, full[0]))),
            Some(Estimate::mc(full[1], batch_se(&b12, full[1]))),
        )
    } else {
        (None, None)
    };
    Ok(RTerms {
        r1,
        r2: term(R2),
        r3: term(R3),
        r4: term(R4),
        r5: term(R5),
        r6: sqrt_estimate(r6_squared),
        r6_squared,
        r7: ld3(R7),
        r8: ld3(R8),
        r9: ld3(R9),
        r10: ld3(R10),
        r11,
        r12,
        centre: centre.estimate(),
        replicates,
        r1_phases: Some([phase1, phase2]),
        method: Method::MonteCarlo,
    })
}

/// 25% of the budget estimates the centre, the remaining 75% averages `|S − μ̂|`.
pub fn r1_phase_sizes(replicates: u64) -> (u64, u64) {
    let phase1 = (replicates / 4).max(1);
    (phase1, replicates.saturating_sub(phase1).max(1))
}

fn nonnegative(e: Estimate) -> Estimate {
    Estimate { value: e.value.max(0.0), ..e }
}

/// `√max(0, v)` with a delta-method standard error.
pub(crate) fn sqrt_estimate(sq: Estimate) -> Estimate {
    let value = sq.value.max(0.0).sqrt();
    let se = if sq.se == 0.0 {
        0.0
    } else if value > 0.0 {
        (sq.se / (2.0 * value)).min(sq.se.sqrt())
    } else {
        sq.se.sqrt()
    };
    Estimate {
        value,
        se,
        method: sq.method,
    }
}

type AtomKey = (u64, u64);

fn exact(model: &FieldModel, ctx: &Context) -> Result<RTerms> {
    let n = ctx.n;
    let mut sums = [0.0; SLOTS];
    let mut centre = 0.0;
    let mut s_values: Vec<(f64, f64)> = Vec::new();
    let mut index_means = vec![[0.0; 3]; n];
    let mut marginals: Vec<HashMap<AtomKey, f64>> = vec![HashMap::new(); n];
    let (mut y, mut z, mut caps) = (Vec::new(), Vec::new(), Vec::new());
    let mut terms = [0.0; SLOTS];
    model.for_each_outcome(|p, x| {
        set_sums(x, ctx.a, &mut y);
        if let Some(b) = ctx.b {
            set_sums(x, b, &mut z);
        }
        unstarred(ctx, x, &y, &z, &mut caps, &mut terms);
        for (acc, t) in sums.iter_mut().zip(&terms) {
            *acc += p * t;
        }
        let s: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        centre += p * s;
        s_values.push((p, s));
        let w: f64 = x.iter().sum();
        for i in 0..n {
            *marginals[i].entry((x[i].to_bits(), y[i].to_bits())).or_insert(0.0) += p;
            if ctx.ld3 {
                index_means[i][0] += p * (x[i].abs() > 1.0) as u8 as f64;
                index_means[i][1] += p * x[i].abs() * y[i].abs().min(1.0);
                index_means[i][2] += p * (w.abs() + 1.0) * z[i].abs().min(1.0);
            }
        }
    })?;
    let r1: f64 = s_values.iter().map(|&(p, s)| p * (s - centre).abs()).sum();

    let atoms: Vec<Vec<(f64, f64, f64)>> = marginals
        .into_iter()
        .map(|m| {
            let mut v: Vec<(f64, f64, f64)> = m
                .into_iter()
                .map(|((xb, yb), p)| (f64::from_bits(xb), f64::from_bits(yb), p))
                .collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            v
        })
        .collect();
    let pairs = match &ctx.pairs {
        Some(p) => p.clone(),
        None => ctx.all_pairs(),
    };
    let (mut s5, mut s6, mut s10) = (0.0, 0.0, 0.0);
    for &(i, j) in &pairs {
        for &(xa, ya, pa) in &atoms[i] {
            for &(xb, yb, pb) in &atoms[j] {
                let m = ya.abs().min(yb.abs()).min(1.0);
                let wxx = pa * pb * xa * xb;
                if ya * yb >= 0.0 {
                    s5 += wxx * m;
                    s6 += wxx * m * m;
                }
                s10 += wxx.abs() * m;
            }
        }
    }
    let r5 = sums[R5] - s5;
    let r6_squared = sums[R6SQ] - 0.5 * s6;
    let ld3 = |v: f64| ctx.ld3.then(|| Estimate::exact(v.max(0.0)));
    let (r11, r12) = if ctx.ld3 {
        let r11: f64 = index_means.iter().map(|m| m[0] * m[1]).sum();
        let r12: f64 = index_means.iter().map(|m| m[2] * m[1]).sum();
        (ld3(r11), ld3(r12))
    } else {
        (None, None)
    };
    let r6_squared = Estimate::exact(r6_squared);
    Ok(RTerms {
        r1: Estimate::exact(r1),
        r2: Estimate::exact(sums[R2]),
        r3: Estimate::exact(sums[R3]),
        r4: Estimate::exact(sums[R4]),
        r5: Estimate::exact(r5.max(0.0)),
        r6: sqrt_estimate(r6_squared),
        r6_squared,
        r7: ld3(sums[R7]),
        r8: ld3(sums[R8]),
        r9: ld3(sums[R9]),
        r10: ld3(sums[R10] + s10),
        r11,
        r12,
        centre: Estimate::exact(centre),
        replicates: 0,
        r1_phases: None,
        method: Method::ExactEnumeration,
    })
}

/// Remark-style upper estimate of `r4` from moments of `X_j` and `Y_j` alone:
///
/// `Σ_i |A_i| Σ_{j∈A_i} {(1 + E|Y_j|) E|X_j|(X_j² ∧ 1) + E|Y_j X_j|(|X_j| ∧ 1)}
///  + |A_i|² {(1 + E|Y_i|) E|X_i|(X_i² ∧ 1) + E|Y_i X_i|(|X_i| ∧ 1)}`.
pub fn r4_ld1_bound(model: &FieldModel, system: &NeighborhoodSystem, replicates: u64, seed: u64) -> Result<Estimate> {
    let n = system.len();
    let a = system.a_sets();
    let per_index = |x: &[f64], y: &[f64], out: &mut [[f64; 3]]| {
        for i in 0..n {
            out[i][0] += y[i].abs();
            out[i][1] += x[i].abs() * (x[i] * x[i]).min(1.0);
            out[i][2] += (y[i] * x[i]).abs() * x[i].abs().min(1.0);
        }
    };
    let assemble = |m: &[[f64; 3]]| -> f64 {
        let g: Vec<f64> = m.iter().map(|v| (1.0 + v[0]) * v[1] + v[2]).collect();
        (0..n)
            .map(|i| {
                let size = a[i].len() as f64;
                size * a[i].iter().map(|&j| g[j]).sum::<f64>() + size * size * g[i]
            })
            .sum()
    };
    if model.is_enumerable() {
        let mut means = vec![[0.0; 3]; n];
        let mut y = Vec::new();
        let mut scratch = vec![[0.0; 3]; n];
        model.for_each_outcome(|p, x| {
            set_sums(x, a, &mut y);
            scratch.iter_mut().for_each(|s| *s = [0.0; 3]);
            per_index(x, &y, &mut scratch);
            for (m, s) in means.iter_mut().zip(&scratch) {
                for k in 0..3 {
                    m[k] += p * s[k];
                }
            }
        })?;
        return Ok(Estimate::exact(assemble(&means)));
    }
    if replicates < 2 {
        return Err(Error::InvalidArgument("Monte Carlo r4 bound needs at least 2 replicates".into()));
    }
    let (sums, batches) = chunked_reduce(
        replicates,
        |range| {
            let mut sampler = model.sampler();
            let (mut x, mut y) = (vec![0.0; n], Vec::new());
            let mut sums = vec![[0.0; 3]; n];
            let count = (range.end - range.start) as f64;
            for r in range {
                sampler.fill(&mut substream(seed, stream::MOMENTS, r), &mut x);
                set_sums(&x, a, &mut y);
                per_index(&x, &y, &mut sums);
            }
            let means: Vec<[f64; 3]> = sums.iter().map(|s| s.map(|v| v / count)).collect();
            let batch = assemble(&means);
            (sums, vec![batch])
        },
        |(mut s1, mut b1), (s2, b2)| {
            for (u, v) in s1.iter_mut().zip(&s2) {
                for k in 0..3 {
                    u[k] += v[k];
                }
            }
            b1.extend(b2);
            (s1, b1)
        },
    )
    .expect("at least one chunk");
    let means: Vec<[f64; 3]> = sums.iter().map(|s| s.map(|v| v / replicates as f64)).collect();
    let value = assemble(&means);
    Ok(Estimate::mc(value, batch_se(&batches, value)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{iid_field, sparse_linear_field, BaseDistribution};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn three_rademacher_exact_terms() {
        let m = iid_field(3, BaseDistribution::Rademacher).unwrap();
        let t = estimate_r_terms(&m, m.system(), 0, 0).unwrap();
        let s3 = 3f64.sqrt();
        assert_eq!(t.method, Method::ExactEnumeration);
        assert!(close(t.r1.value, 0.0));
        assert!(close(t.r2.value, 0.0));
        assert!(close(t.r3.value, 1.0 / s3));
        assert!(close(t.r4.value, 0.5));
        assert!(close(t.r5.value, 1.0 / (2.0 * s3)));
        assert!(close(t.r6_squared.value, 1.0 / 12.0));
        assert!(close(t.r6.value, 1.0 / (2.0 * s3)));
        assert!(close(t.centre.value, 1.0));
        assert!(t.named().iter().all(|(_, e)| e.se == 0.0));
    }

    #[test]
    fn single_variable_closed_forms() {
        let m = iid_field(1, BaseDistribution::Rademacher).unwrap();
        let t = estimate_r_terms(&m, m.system(), 0, 0).unwrap();
        assert!(close(t.r5.value, 0.5));
        assert!(close(t.r6_squared.value, 0.25));
    }

    #[test]
    fn zero_rows_contribute_nothing() {
        // X_2 = −X_1 pair plus an independent X_3: the pair has Y = 0
        let m = sparse_linear_field(2, vec![vec![(0, 1.0)], vec![(0, -1.0)], vec![(1, 1.0)]]).unwrap();
        let t = estimate_r_terms(&m, m.system(), 0, 0).unwrap();
        // only X_3 = ±1 remains: r3 = E|X3|(Y3² ∧ 1) = 1
        assert!(close(t.r3.value, 1.0));
        assert!(close(t.r2.value, 0.0));
    }

    #[test]
    fn ld1_system_uses_all_pairs() {
        let m = iid_field(4, BaseDistribution::Rademacher).unwrap();
        let ld1 = NeighborhoodSystem::from_adjacency(m.system().labels().to_vec(), &[]).unwrap();
        let full = estimate_r_terms(&m, m.system(), 0, 0).unwrap();
        let weak = estimate_r_terms(&m, &ld1, 0, 0).unwrap();
        assert!(weak.r7.is_none());
        // cross pairs cancel in expectation, so both systems give the same r5, r6
        assert!(close(full.r5.value, weak.r5.value));
        assert!(close(full.r6.value, weak.r6.value));
    }

    #[test]
    fn monte_carlo_is_deterministic_and_close() {
        let m = iid_field(5, BaseDistribution::Uniform).unwrap();
        let a = estimate_r_terms(&m, m.system(), 4000, 9).unwrap();
        let b = estimate_r_terms(&m, m.system(), 4000, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.r1_phases, Some([1000, 3000]));
        assert!(a.centre.agrees_with(1.0, 4.0));
        assert!(a.r11.is_some() && a.r11.unwrap().value == 0.0);
    }

    #[test]
    fn r4_bound_dominates_exact_r4() {
        let m = iid_field(3, BaseDistribution::Rademacher).unwrap();
        let bound = r4_ld1_bound(&m, m.system(), 0, 0).unwrap();
        // |A_i| = 1: per index 2·{(1 + a)a³ + a·a·a} with a = 3^{-1/2}
        let a = 1.0 / 3f64.sqrt();
        let expected = 3.0 * 2.0 * ((1.0 + a) * a.powi(3) + a.powi(3));
        assert!(close(bound.value, expected));
        assert!(bound.value >= 0.5);
    }

    #[test]
    fn sqrt_estimate_delta() {
        let e = sqrt_estimate(Estimate::mc(0.25, 0.01));
        assert!(close(e.value, 0.5) && close(e.se, 0.01));
        assert_eq!(sqrt_estimate(Estimate::mc(-0.1, 0.04)).value, 0.0);
    }
}
