//! Uniform and pointwise distances between the law of `W` and `N(0, 1)`,
//! and log–log rate fits across model sizes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bounds::BoundReport;
use crate::error::{Error, Result};
use crate::fields::{Atom, FieldModel};
use crate::montecarlo::{chunked_reduce, stream, substream};
use crate::normal;

/// Smallest Monte Carlo sample accepted for a distance estimate.
pub const MIN_MC_REPLICATES: u64 = 1000;

/// Default DKW confidence parameter.
pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub z: f64,
    pub abs_diff: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistance {
    /// Estimate of `sup_z |F(z) − Φ(z)|`.
    pub ks: f64,
    /// `√(ln(2/δ)/(2N))` in Monte Carlo mode, 0 when exact.
    pub dkw_radius: f64,
    pub delta: f64,
    /// Sample size (0 when exact).
    pub replicates: u64,
    pub mode: DistanceMode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub profile: Option<Vec<ProfilePoint>>,
}

pub fn dkw_radius(replicates: u64, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * replicates as f64)).sqrt()
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")))
    }
}

/// KS distance of the empirical law of `samples` (sorted in place) from `Φ`:
/// `max_i max(|i/N − Φ(w_(i))|, |(i−1)/N − Φ(w_(i))|)`.
pub fn ks_from_samples(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let phi = normal::cdf(w);
            ((i as f64 + 1.0) / n - phi).abs().max((i as f64 / n - phi).abs())
        })
        .fold(0.0, f64::max)
}

/// KS distance of a discrete law given by sorted atoms: at each atom both the
/// right-continuous value `F(v)` and the left limit `F(v−)` are compared with `Φ(v)`.
pub fn ks_from_atoms(atoms: &[Atom]) -> f64 {
    let mut below = 0.0;
    let mut sup: f64 = 0.0;
    for a in atoms {
        let phi = normal::cdf(a.value);
        let at = below + a.prob;
        sup = sup.max((below - phi).abs()).max((at - phi).abs());
        below = at;
    }
    sup
}

/// `N` draws of `W` on the distance stream, in replicate order.
pub fn sample_w(model: &FieldModel, replicates: u64, seed: u64) -> Vec<f64> {
    chunked_reduce(
        replicates,
        |range| {
            let mut sampler = model.sampler();
            let mut buf = Vec::new();
            range
                .map(|r| sampler.draw_w(&mut substream(seed, stream::DISTANCE, r), &mut buf))
                .collect::<Vec<f64>>()
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )
    .unwrap_or_default()
}

/// Kolmogorov distance; exact whenever the model can be enumerated.
pub fn kolmogorov_distance(model: &FieldModel, replicates: u64, seed: u64, delta: f64) -> Result<EmpiricalDistance> {
    nonuniform_profile(model, replicates, seed, delta, &[]).map(|mut d| {
        d.profile = None;
        d
    })
}

/// Kolmogorov distance plus `|F(z) − Φ(z)|` at every point of `zgrid`, with
/// binomial standard errors in Monte Carlo mode.
pub fn nonuniform_profile(
    model: &FieldModel,
    replicates: u64,
    seed: u64,
    delta: f64,
    zgrid: &[f64],
) -> Result<EmpiricalDistance> {
    check_delta(delta)?;
    if let Some(z) = zgrid.iter().find(|z| !z.is_finite()) {
        return Err(Error::InvalidArgument(format!("z grid point {z} is not finite")));
    }
    if model.is_enumerable() {
        let atoms = model.exact_enumerate()?;
        let profile = zgrid
            .iter()
            .map(|&z| {
                let k = atoms.partition_point(|a| a.value <= z + 1e-12);
                let below: f64 = atoms[..k].iter().map(|a| a.prob).sum();
                let above: f64 = atoms[k..].iter().map(|a| a.prob).sum();
                ProfilePoint {
                    z,
                    abs_diff: pointwise_diff(z, below, above),
                    se: 0.0,
                }
            })
            .collect();
        return Ok(EmpiricalDistance {
            ks: ks_from_atoms(&atoms),
            dkw_radius: 0.0,
            delta,
            replicates: 0,
            mode: DistanceMode::Exact,
            profile: Some(profile),
        });
    }
    if replicates < MIN_MC_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo distance needs at least {MIN_MC_REPLICATES} replicates, got {replicates}"
        )));
    }
    let mut w = sample_w(model, replicates, seed);
    let ks = ks_from_samples(&mut w);
    let n = replicates as f64;
    let profile = zgrid
        .iter()
        .map(|&z| {
            let k = w.partition_point(|&v| v <= z);
            let f = k as f64 / n;
            ProfilePoint {
                z,
                abs_diff: pointwise_diff(z, f, (w.len() - k) as f64 / n),
                se: (f * (1.0 - f) / n).sqrt(),
            }
        })
        .collect();
    Ok(EmpiricalDistance {
        ks,
        dkw_radius: dkw_radius(replicates, delta),
        delta,
        replicates,
        mode: DistanceMode::MonteCarlo,
        profile: Some(profile),
    })
}

/// `|F(z) − Φ(z)|` evaluated on the lighter tail to avoid cancellation.
fn pointwise_diff(z: f64, below: f64, above: f64) -> f64 {
    if z > 0.0 {
        (above - normal::sf(z)).abs()
    } else {
        (below - normal::cdf(z)).abs()
    }
}

/// CSV rendering of a profile with header `z,abs_diff,se`.
pub fn profile_csv(profile: &[ProfilePoint]) -> String {
    let mut out = String::from("z,abs_diff,se\n");
    for p in profile {
        out.push_str(&format!("{},{:e},{:e}\n", p.z, p.abs_diff, p.se));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: f64,
    pub distance: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 95% interval for the slope from the residual variance.
    pub slope_ci: (f64, f64),
}

/// Weighted least squares of `ln distance` on `ln n`.
pub fn rate_fit(points: &[RatePoint]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!("a rate fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.distance > 0.0) || !(p.n > 0.0) || !(p.weight > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "rate points need positive n, distance and weight, got ({}, {}, {})",
            p.n, p.distance, p.weight
        )));
    }
    let sw: f64 = points.iter().map(|p| p.weight).sum();
    let mx = points.iter().map(|p| p.weight * p.n.ln()).sum::<f64>() / sw;
    let my = points.iter().map(|p| p.weight * p.distance.ln()).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.weight * (p.n.ln() - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("rate points need at least two distinct sizes".into()));
    }
    let sxy: f64 = points.iter().map(|p| p.weight * (p.n.ln() - mx) * (p.distance.ln() - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = points.len() as f64 - 2.0;
    let rss: f64 = points
        .iter()
        .map(|p| p.weight * (p.distance.ln() - intercept - slope * p.n.ln()).powi(2))
        .sum();
    let slope_se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(RateFit {
        slope,
        intercept,
        slope_se,
        slope_ci: (slope - t * slope_se, slope + t * slope_se),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    /// `ks − 3·dkw`.
    pub lower: f64,
    /// `bound + 3·se`.
    pub upper: f64,
    /// `upper − lower`.
    pub margin: f64,
}

/// PASS iff `ks − 3·dkw ≤ bound + 3·se`.
pub fn dominance_verdict(distance: &EmpiricalDistance, bound: &BoundReport) -> Result<Verdict> {
    if bound.c_free {
        return Err(Error::Capability(format!(
            "theorem {} has an unspecified constant; use a rate fit instead",
            bound.theorem
        )));
    }
    let lower = distance.ks - 3.0 * distance.dkw_radius;
    let upper = bound.value + 3.0 * bound.se;
    Ok(Verdict {
        pass: lower <= upper,
        lower,
        upper,
        margin: upper - lower,
    })
}
