//! Stein kernels, the closed forms behind `r5`/`r6`, and the solution of the
//! Stein equation for the smoothed indicator `h_{z,α}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::montecarlo::{chunked_reduce, stream, substream, Estimate, Moments};
use crate::neighborhoods::{NeighborhoodSystem, SetKind};
use crate::normal::{self, TAIL_SWITCH};

/// Per-index pieces of one realization: `x_i`, `y_i = Σ_{A_i} x` and, when
/// the system has B sets, `z_i = Σ_{B_i} x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Option<Vec<f64>>,
}

pub(crate) fn set_sums(values: &[f64], sets: &[Vec<usize>], out: &mut Vec<f64>) {
    out.clear();
    out.extend(sets.iter().map(|s| s.iter().map(|&j| values[j]).sum::<f64>()));
}

impl KernelSample {
    pub fn new(values: &[f64], system: &NeighborhoodSystem) -> Self {
        let mut y = Vec::new();
        set_sums(values, system.a_sets(), &mut y);
        let z = system.family(SetKind::B).map(|b| {
            let mut z = Vec::new();
            set_sums(values, b, &mut z);
            z
        });
        KernelSample {
            x: values.to_vec(),
            y,
            z,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Recompute `y` and `z` from `x` and report whether they match.
    pub fn is_consistent(&self, system: &NeighborhoodSystem) -> bool {
        let fresh = KernelSample::new(&self.x, system);
        let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 1e-12);
        close(&fresh.y, &self.y)
            && match (&fresh.z, &self.z) {
                (Some(a), Some(b)) => close(a, b),
                (None, None) => true,
                _ => false,
            }
    }

    /// `Σ_i ∫ K̂_i(t) dt = Σ_i x_i y_i`.
    pub fn kernel_integral(&self) -> f64 {
        self.x.iter().zip(&self.y).map(|(x, y)| x * y).sum()
    }

    /// `K̂(t) = Σ_i K̂_i(t)`.
    pub fn khat(&self, t: f64) -> f64 {
        self.x.iter().zip(&self.y).map(|(&x, &y)| khat_i(x, y, t)).sum()
    }
}

/// `K̂_i(t) = x_i {I(−y_i ≤ t < 0) − I(0 ≤ t ≤ −y_i)}`.
pub fn khat_i(x: f64, y: f64, t: f64) -> f64 {
    let left = -y <= t && t < 0.0;
    let right = 0.0 <= t && t <= -y;
    x * (left as u8 as f64 - right as u8 as f64)
}

/// Estimate of `∫ K(t) dt = Σ_i E X_i Y_i`, which equals `EW² = 1`.
///
/// Exact when the model can be enumerated, otherwise a mean over
/// `replicates` realizations with its standard error.
pub fn k_integral_identity(model: &FieldModel, replicates: u64, seed: u64) -> Result<Estimate> {
    let system = model.system();
    if model.is_enumerable() {
        let mut total = 0.0;
        let mut y = Vec::new();
        model.for_each_outcome(|p, x| {
            set_sums(x, system.a_sets(), &mut y);
            total += p * x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        })?;
        return Ok(Estimate::exact(total));
    }
    if replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    let moments = chunked_reduce(
        replicates,
        |range| {
            let mut sampler = model.sampler();
            let mut x = vec![0.0; model.len()];
            let mut y = Vec::new();
            let mut m = Moments::default();
            for r in range {
                sampler.fill(&mut substream(seed, stream::PRIMARY, r), &mut x);
                set_sums(&x, system.a_sets(), &mut y);
                m.push(x.iter().zip(&y).map(|(a, b)| a * b).sum());
            }
            m
        },
        Moments::merge,
    )
    .unwrap_or_default();
    Ok(moments.estimate())
}

/// Cap applied to `|y|` in the `r5`/`r6` closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cap {
    /// `|y| ∧ 1`
    Linear,
    /// `y² ∧ 1`
    Squared,
}

impl Cap {
    #[inline]
    pub(crate) fn apply(self, y: f64) -> f64 {
        match self {
            Cap::Linear => y.abs().min(1.0),
            Cap::Squared => (y * y).min(1.0),
        }
    }
}

/// `x_i x_j I(y_i y_j ≥ 0) c(y_i, y_j)` summed over `pairs`, with `c` the
/// minimum of the capped values. Passing the same sample twice gives the
/// unstarred part, an independent copy as `second` gives the starred part.
pub(crate) fn pair_sum(first: (&[f64], &[f64]), second: (&[f64], &[f64]), pairs: &[(usize, usize)], cap: Cap) -> f64 {
    let (x1, y1) = first;
    let (x2, y2) = second;
    pairs
        .iter()
        .map(|&(i, j)| {
            if y1[i] * y2[j] >= 0.0 {
                x1[i] * x2[j] * cap.apply(y1[i]).min(cap.apply(y2[j]))
            } else {
                0.0
            }
        })
        .sum()
}

/// The same double sum over all ordered pairs `(i, j)`, in `O(n log n)`.
///
/// Terms with `y = 0` vanish because the cap is 0, so only the strictly
/// positive and strictly negative groups contribute. Within a group,
/// `Σ_{i,j} a_i b_j min(c_i, d_j)` is evaluated with sorted prefix sums.
pub(crate) fn all_pairs_sum(first: (&[f64], &[f64]), second: (&[f64], &[f64]), cap: Cap) -> f64 {
    let mut total = 0.0;
    for positive in [true, false] {
        let group = |x: &[f64], y: &[f64]| -> Vec<(f64, f64)> {
            x.iter()
                .zip(y)
                .filter(|(_, &v)| if positive { v > 0.0 } else { v < 0.0 })
                .map(|(&a, &v)| (cap.apply(v), a))
                .collect()
        };
        let left = group(first.0, first.1);
        let mut right = group(second.0, second.1);
        if left.is_empty() || right.is_empty() {
            continue;
        }
        right.sort_by(|a, b| a.0.total_cmp(&b.0));
        // prefix[k] = Σ_{m<k} b_m d_m ; suffix[k] = Σ_{m≥k} b_m
        let mut prefix = vec![0.0; right.len() + 1];
        for (k, &(d, b)) in right.iter().enumerate() {
            prefix[k + 1] = prefix[k] + b * d;
        }
        let mut suffix = vec![0.0; right.len() + 1];
        for k in (0..right.len()).rev() {
            suffix[k] = suffix[k + 1] + right[k].1;
        }
        for &(c, a) in &left {
            let k = right.partition_point(|&(d, _)| d < c);
            total += a * (prefix[k] + c * suffix[k]);
        }
    }
    total
}

/// One replicate of the `r5` closed form:
/// `Σ_{(i,j)} x_i x_j I(y_i y_j ≥ 0)(|y_i| ∧ |y_j| ∧ 1) − x_i x*_j I(y_i y*_j ≥ 0)(|y_i| ∧ |y*_j| ∧ 1)`.
///
/// `pairs = None` sums over all ordered pairs (needed at LD1); otherwise
/// the pairs with `B_i ∩ B_j ≠ ∅`.
pub fn r5_closed_form(sample: &KernelSample, copy: &KernelSample, pairs: Option<&[(usize, usize)]>) -> f64 {
    closed_form(sample, copy, pairs, Cap::Linear)
}

/// One replicate of the `r6²` closed form: squared caps and a factor ½.
pub fn r6sq_closed_form(sample: &KernelSample, copy: &KernelSample, pairs: Option<&[(usize, usize)]>) -> f64 {
    0.5 * closed_form(sample, copy, pairs, Cap::Squared)
}

fn closed_form(sample: &KernelSample, copy: &KernelSample, pairs: Option<&[(usize, usize)]>, cap: Cap) -> f64 {
    let s = (&sample.x[..], &sample.y[..]);
    let c = (&copy.x[..], &copy.y[..]);
    match pairs {
        Some(p) => pair_sum(s, s, p, cap) - pair_sum(s, c, p, cap),
        None => all_pairs_sum(s, s, cap) - all_pairs_sum(s, c, cap),
    }
}

/// `h_{z,α}(w)`: 1 up to `z`, linear down to 0 on `[z, z+α]`, then 0.
pub fn smoothed_indicator(z: f64, alpha: f64, w: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(h(z, alpha, w))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")))
    }
}

fn h(z: f64, alpha: f64, w: f64) -> f64 {
    if w <= z {
        1.0
    } else if w >= z + alpha {
        0.0
    } else {
        1.0 + (z - w) / alpha
    }
}

/// `E h_{z,α}(Z)` for standard normal `Z`.
pub fn normal_expectation(z: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(nh(z, alpha))
}

fn nh(z: f64, alpha: f64) -> f64 {
    let band = normal::sf(z) - normal::sf(z + alpha);
    normal::cdf(z) + (1.0 + z / alpha) * band + (normal::pdf(z + alpha) - normal::pdf(z)) / alpha
}

/// Value of the Stein solution together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteinValue {
    pub value: f64,
    /// `|w| > 8`: the Mills ratio came from its continued fraction.
    pub tail: bool,
}

/// Bounded solution `f_{z,α}` of `f′(w) − w f(w) = h_{z,α}(w) − N h_{z,α}`.
///
/// Written through the Mills ratio `M(w) = (1 − Φ(w))/φ(w)`:
/// `f = (1 − Nh) M(−w)` for `w ≤ z`, `f = Nh · M(w)` for `w ≥ z+α`, and the
/// lower- or upper-tail integral form on the ramp depending on the sign of `w`.
pub fn stein_solution(z: f64, alpha: f64, w: f64) -> Result<SteinValue> {
    check_alpha(alpha)?;
    let n = nh(z, alpha);
    let value = if w <= z {
        (1.0 - n) * normal::mills_ratio(-w)
    } else if w >= z + alpha {
        n * normal::mills_ratio(w)
    } else if w <= 0.0 {
        // ∫_{−∞}^w hφ − Nh Φ(w), divided by φ(w)
        let below = normal::cdf(z)
            + (1.0 + z / alpha) * (normal::cdf(w) - normal::cdf(z))
            + (normal::pdf(w) - normal::pdf(z)) / alpha;
        (below - n * normal::cdf(w)) / normal::pdf(w)
    } else {
        // ∫_w^∞ (Nh − h)φ, divided by φ(w)
        let ramp = (1.0 + z / alpha) * (normal::sf(w) - normal::sf(z + alpha))
            + (normal::pdf(z + alpha) - normal::pdf(w)) / alpha;
        (n * normal::sf(w) - ramp) / normal::pdf(w)
    };
    Ok(SteinValue {
        value,
        tail: w.abs() > TAIL_SWITCH,
    })
}

/// `f′_{z,α}(w) = w f(w) + h(w) − Nh`.
pub fn stein_derivative(z: f64, alpha: f64, w: f64) -> Result<f64> {
    let f = stein_solution(z, alpha, w)?.value;
    Ok(w * f + h(z, alpha, w) - nh(z, alpha))
}
