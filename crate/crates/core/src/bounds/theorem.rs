//! Assembly of every theorem's explicit bound or constant-free rate functional.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::moments::MomentSummary;
use super::rterms::RTerms;
use crate::error::{Error, Result};
use crate::montecarlo::Estimate;
use crate::neighborhoods::KappaStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    #[serde(rename = "2.1")]
    T2_1,
    #[serde(rename = "2.2")]
    T2_2,
    #[serde(rename = "2.3")]
    T2_3,
    #[serde(rename = "2.4")]
    T2_4,
    #[serde(rename = "2.5-rate")]
    T2_5Rate,
    #[serde(rename = "2.6u")]
    T2_6U,
    #[serde(rename = "2.6n-rate")]
    T2_6NRate,
    #[serde(rename = "2.7u")]
    T2_7U,
    #[serde(rename = "2.7n-rate")]
    T2_7NRate,
    #[serde(rename = "2.8u")]
    T2_8U,
    #[serde(rename = "2.8n-rate")]
    T2_8NRate,
}

impl TheoremId {
    pub const ALL: [TheoremId; 11] = [
        TheoremId::T2_1,
        TheoremId::T2_2,
        TheoremId::T2_3,
        TheoremId::T2_4,
        TheoremId::T2_5Rate,
        TheoremId::T2_6U,
        TheoremId::T2_6NRate,
        TheoremId::T2_7U,
        TheoremId::T2_7NRate,
        TheoremId::T2_8U,
        TheoremId::T2_8NRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TheoremId::T2_1 => "2.1",
            TheoremId::T2_2 => "2.2",
            TheoremId::T2_3 => "2.3",
            TheoremId::T2_4 => "2.4",
            TheoremId::T2_5Rate => "2.5-rate",
            TheoremId::T2_6U => "2.6u",
            TheoremId::T2_6NRate => "2.6n-rate",
            TheoremId::T2_7U => "2.7u",
            TheoremId::T2_7NRate => "2.7n-rate",
            TheoremId::T2_8U => "2.8u",
            TheoremId::T2_8NRate => "2.8n-rate",
        }
    }

    /// The bound carries an unspecified absolute constant.
    pub fn is_c_free(self) -> bool {
        matches!(
            self,
            TheoremId::T2_5Rate | TheoremId::T2_6NRate | TheoremId::T2_7NRate | TheoremId::T2_8U | TheoremId::T2_8NRate
        )
    }

    /// Moment order used when the experiment does not set one.
    pub fn default_p(self) -> f64 {
        match self {
            TheoremId::T2_2 => 4.0,
            _ => 3.0,
        }
    }

    /// Admissible range `(lo, hi]` of the moment order, if the theorem uses one.
    pub fn p_range(self) -> Option<(f64, f64)> {
        match self {
            TheoremId::T2_1 | TheoremId::T2_3 | TheoremId::T2_8U | TheoremId::T2_8NRate => None,
            TheoremId::T2_2 => Some((2.0, 4.0)),
            _ => Some((2.0, 3.0)),
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown theorem id `{s}`")))
    }
}

/// Inputs a theorem may draw on. Only the ones the theorem needs must be set.
#[derive(Debug, Clone, Default)]
pub struct BoundIngredients<'a> {
    pub rterms: Option<&'a RTerms>,
    pub moments: Option<&'a MomentSummary>,
    pub kappa: Option<KappaStats>,
    /// Replaces the κ statistic the theorem would read from `kappa`.
    pub kappa_override: Option<f64>,
    pub lambda: Option<f64>,
    /// `|J|` (or `|V|`).
    pub n: Option<usize>,
    /// Point of evaluation for nonuniform functionals (default 0).
    pub z: Option<f64>,
    /// Lattice dependence radius and dimension.
    pub m: Option<usize>,
    pub dim: Option<usize>,
    /// Maximal degree of a dependency graph.
    pub graph_degree: Option<usize>,
    /// Degree and raw standard deviation of the local-maxima count.
    pub local_maxima: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: TheoremId,
    pub value: f64,
    pub se: f64,
    /// The theorem has an unspecified constant; `value` is a rate functional.
    pub c_free: bool,
    /// Every number the value was assembled from.
    pub ingredients: BTreeMap<String, f64>,
}

fn missing(theorem: TheoremId, what: &str) -> Error {
    Error::Capability(format!("theorem {theorem} needs {what}"))
}

struct Builder {
    theorem: TheoremId,
    ingredients: BTreeMap<String, f64>,
}

impl Builder {
    fn echo(&mut self, key: &str, v: f64) -> f64 {
        self.ingredients.insert(key.to_string(), v);
        v
    }

    fn echo_est(&mut self, key: &str, e: Estimate) -> Estimate {
        self.ingredients.insert(key.to_string(), e.value);
        if e.se > 0.0 {
            self.ingredients.insert(format!("{key}_se"), e.se);
        }
        e
    }

    fn finish(self, value: f64, se: f64) -> BoundReport {
        BoundReport {
            theorem: self.theorem,
            value: value.max(0.0),
            se,
            c_free: self.theorem.is_c_free(),
            ingredients: self.ingredients,
        }
    }
}

/// Assemble the bound of `theorem` at moment order `p` (ignored by 2.1, 2.3, 2.8).
///
/// Standard errors propagate linearly: a sum `Σ c_k t_k` gets `Σ |c_k| se_k`,
/// and powers use the first-order delta method.
pub fn theorem_bound(theorem: TheoremId, p: f64, ing: &BoundIngredients) -> Result<BoundReport> {
    if let Some((lo, hi)) = theorem.p_range() {
        if !(p > lo && p <= hi) {
            return Err(Error::InvalidArgument(format!(
                "theorem {theorem} needs p in ({lo}, {hi}], got {p}"
            )));
        }
    }
    let mut b = Builder {
        theorem,
        ingredients: BTreeMap::new(),
    };
    let z = ing.z.unwrap_or(0.0);
    let rterms = || ing.rterms.ok_or_else(|| missing(theorem, "r-terms"));
    let moments = || -> Result<&MomentSummary> {
        let m = ing.moments.ok_or_else(|| missing(theorem, "a moment summary"))?;
        if (m.p - p).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "theorem {theorem} at p = {p} got moments of order {}",
                m.p
            )));
        }
        Ok(m)
    };
    let kappa = |b: &mut Builder, pick: fn(&KappaStats) -> Result<usize>| -> Result<f64> {
        let k = match ing.kappa_override {
            Some(k) => k,
            None => pick(&ing.kappa.ok_or_else(|| missing(theorem, "κ statistics"))?)? as f64,
        };
        Ok(b.echo("kappa", k))
    };
    let lattice = |b: &mut Builder| -> Result<(f64, f64)> {
        let m = ing.m.ok_or_else(|| missing(theorem, "the dependence radius m"))? as f64;
        let d = ing.dim.ok_or_else(|| missing(theorem, "the lattice dimension d"))? as f64;
        Ok((b.echo("m", m), b.echo("d", d)))
    };
    if theorem.p_range().is_some() {
        b.echo("p", p);
    }

    let report = match theorem {
        TheoremId::T2_1 => {
            let r = rterms()?;
            let coef = [1.0, 4.0, 8.0, 1.0, 4.5, 1.5];
            let terms = [r.r1, r.r2, r.r3, r.r4, r.r5, r.r6];
            let names = ["r1", "r2", "r3", "r4", "r5", "r6"];
            let (mut value, mut se) = (0.0, 0.0);
            for ((c, t), name) in coef.iter().zip(terms).zip(names) {
                let t = b.echo_est(name, t);
                value += c * t.value;
                se += c * t.se;
            }
            b.finish(value, se)
        }
        TheoremId::T2_2 => {
            let m = moments()?;
            let k = kappa(&mut b, KappaStats::nb)?;
            let s3 = b.echo_est("sum_xy_min3", m.sum_xy_min3);
            let sp = b.echo_est("sum_xy_p", m.sum_xy_p);
            let lead = 13.0 + 11.0 * k;
            let root = (k * sp.value).sqrt();
            let value = lead * s3.value + 2.5 * root;
            let root_se = if root > 0.0 { k * sp.se / (2.0 * root) } else { 0.0 };
            let se = lead * s3.se + 2.5 * root_se;
            let n = ing.n.unwrap_or(m.len()) as f64;
            let theta = b.echo_est("theta", m.theta).value;
            b.echo("n", n);
            b.echo(
                "theta_form",
                lead * n * theta.powf(p.min(3.0)) + 2.5 * theta.powf(p / 2.0) * (k * n).sqrt(),
            );
            b.finish(value, se)
        }
        TheoremId::T2_3 => {
            let r = rterms()?;
            if !r.has_ld3_terms() {
                return Err(missing(theorem, "r7–r12 (an LD3 system)"));
            }
            let lambda = b.echo("lambda", ing.lambda.ok_or_else(|| missing(theorem, "λ"))?);
            let terms = [
                ("r2", Some(r.r2)),
                ("r3", Some(r.r3)),
                ("r7", r.r7),
                ("r8", r.r8),
                ("r9", r.r9),
                ("r10", r.r10),
                ("r11", r.r11),
                ("r12", r.r12),
            ];
            let (mut sum, mut se) = (0.0, 0.0);
            for (name, t) in terms {
                let t = b.echo_est(name, t.expect("LD3 terms checked above"));
                sum += t.value;
                se += t.se;
            }
            let c = 4.0 * lambda.powf(1.5);
            b.finish(c * sum, c * se)
        }
        TheoremId::T2_4 => {
            let m = moments()?;
            let k = kappa(&mut b, KappaStats::nc)?;
            let g = b.echo_est("gamma", m.gamma);
            let c = 75.0 * k.powf(p - 1.0);
            b.finish(c * g.value, c * g.se)
        }
        TheoremId::T2_5Rate => {
            let m = moments()?;
            let k = kappa(&mut b, KappaStats::dstar)?;
            let g = b.echo_est("gamma", m.gamma);
            b.echo("z", z);
            let c = k.powf(p) * (1.0 + z.abs()).powf(-p);
            b.finish(c * g.value, c * g.se)
        }
        TheoremId::T2_6U => {
            let m = moments()?;
            let (mm, d) = lattice(&mut b)?;
            let g = b.echo_est("gamma", m.gamma);
            let c = 75.0 * (10.0 * mm + 1.0).powf((p - 1.0) * d);
            b.finish(c * g.value, c * g.se)
        }
        TheoremId::T2_6NRate => {
            let m = moments()?;
            let (mm, d) = lattice(&mut b)?;
            let g = b.echo_est("gamma", m.gamma);
            b.echo("z", z);
            let c = (1.0 + z.abs()).powf(-p) * 19f64.powf(p * d) * (mm + 1.0).powf((p - 1.0) * d);
            b.finish(c * g.value, c * g.se)
        }
        TheoremId::T2_7U | TheoremId::T2_7NRate => {
            let m = moments()?;
            let degree = ing.graph_degree.ok_or_else(|| missing(theorem, "the graph degree D"))?;
            let dd = b.echo("D", degree.max(1) as f64);
            let v = b.echo("V", ing.n.unwrap_or(m.len()) as f64);
            let tp = b.echo_est("theta_p", m.max_x_p);
            let c = if theorem == TheoremId::T2_7U {
                75.0 * dd.powf(5.0 * (p - 1.0)) * v
            } else {
                b.echo("z", z);
                (1.0 + z.abs()).powf(-p) * dd.powf(5.0 * p) * v
            };
            b.finish(c * tp.value, c * tp.se)
        }
        TheoremId::T2_8U | TheoremId::T2_8NRate => {
            let (d, sigma) = ing.local_maxima.ok_or_else(|| missing(theorem, "local-maxima degree and σ"))?;
            let d = b.echo("d", d as f64);
            let sigma = b.echo("sigma", sigma);
            let v = b.echo("V", ing.n.ok_or_else(|| missing(theorem, "|V|"))? as f64);
            let base = v / sigma.powi(3);
            let value = if theorem == TheoremId::T2_8U {
                d * d * base
            } else {
                b.echo("z", z);
                (1.0 + z.abs()).powi(-3) * d.powi(5) * base
            };
            b.finish(value, 0.0)
        }
    };
    Ok(report)
}
