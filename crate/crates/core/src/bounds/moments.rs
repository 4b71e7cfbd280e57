//! Absolute moments of `X_i`, `Y_i`, `Z_i` and the summaries the moment-type
//! theorems consume.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::montecarlo::{chunked_reduce, stream, substream, Estimate, Method, Moments, VecMoments};
use crate::neighborhoods::{NeighborhoodSystem, SetKind};
use crate::stein::set_sums;

/// `E|·|^2`, `E|·|^3`, `E|·|^p` of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsMoments {
    pub q2: f64,
    pub q3: f64,
    pub qp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMoments {
    pub x: AbsMoments,
    pub y: AbsMoments,
    pub z: Option<AbsMoments>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub p: f64,
    pub per_index: Vec<IndexMoments>,
    /// `θ = max_i (E|X_i|^p + E|Y_i|^p)^{1/p}`.
    pub theta: Estimate,
    /// `max_i E|X_i|^p`.
    pub max_x_p: Estimate,
    /// `γ = Σ_i E|X_i|^p`.
    pub gamma: Estimate,
    /// `Σ_i E|X_i|³`.
    pub sum_x3: Estimate,
    /// `Σ_i (E|X_i|^{3∧p} + E|Y_i|^{3∧p})`.
    pub sum_xy_min3: Estimate,
    /// `Σ_i (E|X_i|^p + E|Y_i|^p)`.
    pub sum_xy_p: Estimate,
    pub replicates: u64,
    pub method: Method,
}

impl MomentSummary {
    pub fn len(&self) -> usize {
        self.per_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_index.is_empty()
    }
}

#[inline]
fn pow_abs(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if p == 3.0 {
        a * a * a
    } else if p == 4.0 {
        let s = a * a;
        s * s
    } else {
        a.powf(p)
    }
}

/// Number of per-index quantities and per-replicate aggregates tracked.
const PER_INDEX: usize = 9;
const AGG: usize = 4;

struct Layout {
    p: f64,
    min3: f64,
    has_z: bool,
}

impl Layout {
    /// Writes per-index `|x|^q, |y|^q, |z|^q` into `cells` and the four
    /// per-replicate sums `Σ|x|^p, Σ|x|³, Σ(|x|^{3∧p}+|y|^{3∧p}), Σ(|x|^p+|y|^p)`.
    fn eval(&self, x: &[f64], y: &[f64], z: &[f64], cells: &mut [f64], agg: &mut [f64; AGG]) {
        *agg = [0.0; AGG];
        for i in 0..x.len() {
            let c = &mut cells[i * PER_INDEX..(i + 1) * PER_INDEX];
            for (slot, v) in [(0, x[i]), (3, y[i])] {
                let a2 = v * v;
                let a3 = a2 * v.abs();
                c[slot] = a2;
                c[slot + 1] = a3;
                c[slot + 2] = if self.p == 3.0 { a3 } else { pow_abs(v, self.p) };
            }
            if self.has_z {
                let v = z[i];
                c[6] = v * v;
                c[7] = c[6] * v.abs();
                c[8] = if self.p == 3.0 { c[7] } else { pow_abs(v, self.p) };
            }
            let (xm, ym) = if self.min3 == 3.0 { (c[1], c[4]) } else { (c[2], c[5]) };
            agg[0] += c[2];
            agg[1] += c[1];
            agg[2] += xm + ym;
            agg[3] += c[2] + c[5];
        }
    }
}

/// Estimate the moment summary at order `p ∈ (2, 4]`; exact when enumerable.
pub fn estimate_moments(
    model: &FieldModel,
    system: &NeighborhoodSystem,
    p: f64,
    replicates: u64,
    seed: u64,
) -> Result<MomentSummary> {
    if !(p > 2.0 && p <= 4.0) {
        return Err(Error::InvalidArgument(format!("moment order p must lie in (2, 4], got {p}")));
    }
    let n = system.len();
    let a = system.a_sets();
    let b = system.family(SetKind::B);
    let layout = Layout {
        p,
        min3: p.min(3.0),
        has_z: b.is_some(),
    };
    if model.is_enumerable() {
        let mut means = vec![0.0; n * PER_INDEX];
        let mut agg_means = [0.0; AGG];
        let mut cells = vec![0.0; n * PER_INDEX];
        let (mut y, mut z) = (Vec::new(), Vec::new());
        let mut agg = [0.0; AGG];
        model.for_each_outcome(|prob, x| {
            set_sums(x, a, &mut y);
            if let Some(b) = b {
                set_sums(x, b, &mut z);
            }
            layout.eval(x, &y, &z, &mut cells, &mut agg);
            for (m, c) in means.iter_mut().zip(&cells) {
                *m += prob * c;
            }
            for (m, c) in agg_means.iter_mut().zip(&agg) {
                *m += prob * c;
            }
        })?;
        let zero_se = vec![0.0; n * PER_INDEX];
        return Ok(summarize(
            &layout,
            &means,
            &zero_se,
            agg_means.map(Estimate::exact),
            0,
            Method::ExactEnumeration,
        ));
    }
    if replicates < 2 {
        return Err(Error::InvalidArgument("Monte Carlo moments need at least 2 replicates".into()));
    }
    let (cells_acc, agg_acc) = chunked_reduce(
        replicates,
        |range| {
            let mut sampler = model.sampler();
            let mut x = vec![0.0; n];
            let (mut y, mut z) = (Vec::new(), Vec::new());
            let mut cells = vec![0.0; n * PER_INDEX];
            let mut agg = [0.0; AGG];
            let mut acc = VecMoments::new(n * PER_INDEX);
            let mut agg_acc = [Moments::default(); AGG];
            for r in range {
                sampler.fill(&mut substream(seed, stream::MOMENTS, r), &mut x);
                set_sums(&x, a, &mut y);
                if let Some(b) = b {
                    set_sums(&x, b, &mut z);
                }
                layout.eval(&x, &y, &z, &mut cells, &mut agg);
                acc.push(cells.iter().copied());
                for (m, v) in agg_acc.iter_mut().zip(agg) {
                    m.push(v);
                }
            }
            (acc, agg_acc)
        },
        |(a1, g1), (a2, g2)| {
            let mut g = g1;
            for (u, v) in g.iter_mut().zip(g2) {
                *u = u.merge(v);
            }
            (a1.merge(a2), g)
        },
    )
    .expect("at least one chunk");
    let means = cells_acc.means();
    let ses: Vec<f64> = (0..n * PER_INDEX).map(|k| cells_acc.get(k).se()).collect();
    Ok(summarize(
        &layout,
        &means,
        &ses,
        agg_acc.map(|m| m.estimate()),
        replicates,
        Method::MonteCarlo,
    ))
}

fn summarize(layout: &Layout, means: &[f64], ses: &[f64], agg: [Estimate; AGG], replicates: u64, method: Method) -> MomentSummary {
    let n = means.len() / PER_INDEX;
    let p = layout.p;
    let abs = |c: &[f64], k: usize| AbsMoments {
        q2: c[k],
        q3: c[k + 1],
        qp: c[k + 2],
    };
    let per_index: Vec<IndexMoments> = (0..n)
        .map(|i| {
            let c = &means[i * PER_INDEX..(i + 1) * PER_INDEX];
            IndexMoments {
                x: abs(c, 0),
                y: abs(c, 3),
                z: layout.has_z.then(|| abs(c, 6)),
            }
        })
        .collect();
    let pick = |f: &dyn Fn(usize) -> f64, se: &dyn Fn(usize) -> f64| -> Estimate {
        let best = (0..n).max_by(|&i, &j| f(i).total_cmp(&f(j))).unwrap_or(0);
        let value = if n == 0 { 0.0 } else { f(best) };
        Estimate {
            value,
            se: if n == 0 { 0.0 } else { se(best) },
            method,
        }
    };
    let xy_p = |i: usize| means[i * PER_INDEX + 2] + means[i * PER_INDEX + 5];
    let xy_p_se = |i: usize| ses[i * PER_INDEX + 2] + ses[i * PER_INDEX + 5];
    let theta_p = pick(&xy_p, &xy_p_se);
    let theta_value = theta_p.value.powf(1.0 / p);
    let theta_se = if theta_p.value > 0.0 {
        theta_p.se * theta_value / (p * theta_p.value)
    } else {
        0.0
    };
    let with_method = |e: Estimate| Estimate { method, ..e };
    MomentSummary {
        p,
        per_index,
        theta: Estimate {
            value: theta_value,
            se: theta_se,
            method,
        },
        max_x_p: pick(&|i| means[i * PER_INDEX + 2], &|i| ses[i * PER_INDEX + 2]),
        gamma: with_method(agg[0]),
        sum_x3: with_method(agg[1]),
        sum_xy_min3: with_method(agg[2]),
        sum_xy_p: with_method(agg[3]),
        replicates,
        method,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{iid_field, BaseDistribution};

    #[test]
    fn rademacher_moments_are_exact_powers() {
        let n = 4;
        let m = iid_field(n, BaseDistribution::Rademacher).unwrap();
        let s = estimate_moments(&m, m.system(), 3.0, 0, 0).unwrap();
        let a = 0.5; // 1/√4
        assert!((s.gamma.value - 4.0 * a * a * a).abs() < 1e-15);
        assert!((s.sum_xy_p.value - 8.0 * a * a * a).abs() < 1e-15);
        assert!((s.theta.value - (2.0 * a * a * a).powf(1.0 / 3.0)).abs() < 1e-15);
        assert!((s.per_index[0].z.unwrap().q2 - 0.25).abs() < 1e-15);
        assert_eq!(s.method, Method::ExactEnumeration);
    }

    #[test]
    fn fourth_order_summary() {
        let m = iid_field(2, BaseDistribution::Rademacher).unwrap();
        let s = estimate_moments(&m, m.system(), 4.0, 0, 0).unwrap();
        // |X| = 2^{-1/2}: |X|^3 = 2^{-3/2}, |X|^4 = 1/4
        assert!((s.gamma.value - 0.5).abs() < 1e-15);
        assert!((s.sum_xy_min3.value - 4.0 * 2f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn uniform_third_moment_by_monte_carlo() {
        // E|U|³ for U uniform on [−√3, √3] is 3√3/4
        let m = iid_field(1, BaseDistribution::Uniform).unwrap();
        let s = estimate_moments(&m, m.system(), 3.0, 20_000, 3).unwrap();
        assert!(s.gamma.agrees_with(3.0 * 3f64.sqrt() / 4.0, 4.0));
        assert!(estimate_moments(&m, m.system(), 2.0, 10, 3).is_err());
        assert!(estimate_moments(&m, m.system(), 4.5, 10, 3).is_err());
    }
}
