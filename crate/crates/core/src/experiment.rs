//! Config-driven experiments: bounds against measured distances, and size
//! ladders with rate fits.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bounds::{
    estimate_moments, estimate_r_terms_with, sigma_lambda, theorem_bound, BoundIngredients, BoundReport, MomentSummary,
    RTermOptions, RTerms, TheoremId,
};
use crate::empirics::{
    dominance_verdict, nonuniform_profile, profile_csv, rate_fit, DistanceMode, EmpiricalDistance, RateFit, RatePoint,
    Verdict, DEFAULT_DELTA,
};
use crate::error::{Error, Result};
use crate::fields::{FieldModel, ModelSpec};
use crate::montecarlo::derive_seed;
use crate::neighborhoods::{Level, NeighborhoodSystem, SystemDocument};

pub const SCHEMA: u32 = 1;

/// Where the neighborhood system comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    /// The string `"derive"`: use the model's own system.
    Directive(String),
    Document(Box<SystemDocument>),
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec::Directive("derive".into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    /// Report file name, relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    /// Profile CSV file name; written when `zgrid` is non-empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_csv: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub model: ModelSpec,
    pub system: SystemSpec,
    pub theorems: Vec<TheoremId>,
    pub replicates: u64,
    /// Replicates for r-terms and moments; defaults to `replicates`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_replicates: Option<u64>,
    pub seed: u64,
    pub delta: f64,
    #[serde(default)]
    pub zgrid: Vec<f64>,
    /// Moment order for every moment-type theorem (each theorem's default otherwise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Evaluation point of the nonuniform functionals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    /// Sizes of a rate study.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ladder: Vec<usize>,
    #[serde(default)]
    pub outputs: OutputPaths,
}

const KEYS: [&str; 13] = [
    "schema",
    "model",
    "system",
    "theorems",
    "replicates",
    "bound_replicates",
    "seed",
    "delta",
    "zgrid",
    "p",
    "z",
    "ladder",
    "outputs",
];

fn field<T: serde::de::DeserializeOwned>(obj: &serde_json::Map<String, Value>, key: &str) -> Result<Option<T>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => T::deserialize(v).map(Some).map_err(|e| Error::usage(key, e.to_string())),
    }
}

fn required<T: serde::de::DeserializeOwned>(obj: &serde_json::Map<String, Value>, key: &str) -> Result<T> {
    field(obj, key)?.ok_or_else(|| Error::usage(key, "missing required field"))
}

impl ExperimentConfig {
    /// A config with defaults for everything but the model and seed.
    pub fn new(model: ModelSpec, seed: u64) -> Self {
        ExperimentConfig {
            schema: SCHEMA,
            model,
            system: SystemSpec::default(),
            theorems: Vec::new(),
            replicates: 100_000,
            bound_replicates: None,
            seed,
            delta: DEFAULT_DELTA,
            zgrid: Vec::new(),
            p: None,
            z: None,
            ladder: Vec::new(),
            outputs: OutputPaths::default(),
        }
    }

    /// Parse and validate; every failure names the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::usage("$", e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::usage("$", "config must be a JSON object"))?;
        if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::usage(k.as_str(), "unknown field"));
        }
        let theorems = match obj.get("theorems") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let path = format!("theorems[{i}]");
                    let s = v.as_str().ok_or_else(|| Error::usage(path.as_str(), "expected a theorem id string"))?;
                    s.parse::<TheoremId>().map_err(|e| Error::usage(path.as_str(), e.to_string()))
                })
                .collect::<Result<_>>()?,
            Some(_) => return Err(Error::usage("theorems", "expected an array")),
        };
        let config = ExperimentConfig {
            schema: required(obj, "schema")?,
            model: required(obj, "model")?,
            system: field(obj, "system")?.unwrap_or_default(),
            theorems,
            replicates: required(obj, "replicates")?,
            bound_replicates: field(obj, "bound_replicates")?,
            seed: field(obj, "seed")?.ok_or_else(|| Error::usage("seed", "missing required field; there is no clock-based default"))?,
            delta: field(obj, "delta")?.unwrap_or(DEFAULT_DELTA),
            zgrid: field(obj, "zgrid")?.unwrap_or_default(),
            p: field(obj, "p")?,
            z: field(obj, "z")?,
            ladder: field(obj, "ladder")?.unwrap_or_default(),
            outputs: field(obj, "outputs")?.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::usage("schema", format!("unsupported schema {}, expected {SCHEMA}", self.schema)));
        }
        if self.replicates == 0 {
            return Err(Error::usage("replicates", "must be at least 1"));
        }
        if self.bound_replicates == Some(0) {
            return Err(Error::usage("bound_replicates", "must be at least 1"));
        }
        if let SystemSpec::Directive(s) = &self.system {
            if s != "derive" {
                return Err(Error::usage("system", format!("expected \"derive\" or a system document, got \"{s}\"")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::usage("delta", "must lie in (0, 1)"));
        }
        if let Some(i) = self.zgrid.iter().position(|z| !z.is_finite()) {
            return Err(Error::usage(format!("zgrid[{i}]"), "must be finite"));
        }
        if self.z.is_some_and(|z| !z.is_finite()) {
            return Err(Error::usage("z", "must be finite"));
        }
        if let Some(p) = self.p {
            for t in &self.theorems {
                if let Some((lo, hi)) = t.p_range() {
                    if !(p > lo && p <= hi) {
                        return Err(Error::usage("p", format!("theorem {t} needs p in ({lo}, {hi}], got {p}")));
                    }
                }
            }
        }
        if let Some(i) = self.ladder.iter().position(|&n| n == 0) {
            return Err(Error::usage(format!("ladder[{i}]"), "sizes must be positive"));
        }
        Ok(())
    }

    fn bound_replicates(&self) -> u64 {
        self.bound_replicates.unwrap_or(self.replicates)
    }

    fn build(&self) -> Result<FieldModel> {
        let model = self.model.build()?;
        match &self.system {
            SystemSpec::Directive(_) => Ok(model),
            SystemSpec::Document(doc) => model.with_system(NeighborhoodSystem::from_document(doc)?),
        }
    }
}

/// Lowercase hex SHA-256 of the model spec's JSON.
pub fn model_hash(spec: &ModelSpec) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(spec)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremOutcome {
    pub bound: BoundReport,
    /// Absent for C-free theorems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub version: String,
    pub model_hash: String,
    pub config: ExperimentConfig,
    pub n: usize,
    pub level: Level,
    pub distance: EmpiricalDistance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rterms: Option<RTerms>,
    pub theorems: Vec<TheoremOutcome>,
    /// Every non-C-free verdict passed.
    pub all_pass: bool,
    pub wall_time_seconds: f64,
}

fn lattice_shape(spec: &ModelSpec) -> (Option<usize>, Option<usize>) {
    match spec {
        ModelSpec::Iid { .. } => (Some(0), Some(1)),
        ModelSpec::MovingSum { shape, m, .. } => (Some(*m), Some(shape.len())),
        _ => (None, None),
    }
}

/// Evaluate every configured theorem and the distance of `W` from normal.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let model = config.build()?;
    let system = model.system();
    let distance = if config.zgrid.is_empty() {
        crate::empirics::kolmogorov_distance(&model, config.replicates, config.seed, config.delta)?
    } else {
        nonuniform_profile(&model, config.replicates, config.seed, config.delta, &config.zgrid)?
    };

    let needs_rterms = config.theorems.iter().any(|t| matches!(t, TheoremId::T2_1 | TheoremId::T2_3));
    let rterms = if needs_rterms {
        let ld3_terms = config.theorems.contains(&TheoremId::T2_3) && system.level() >= Level::Ld3;
        Some(estimate_r_terms_with(
            &model,
            system,
            &RTermOptions {
                replicates: config.bound_replicates(),
                seed: config.seed,
                ld3_terms,
                force_monte_carlo: false,
            },
        )?)
    } else {
        None
    };
    let lambda = if config.theorems.contains(&TheoremId::T2_3) {
        Some(sigma_lambda(&model, system)?.lambda)
    } else {
        None
    };
    let mut moments: BTreeMap<u64, MomentSummary> = BTreeMap::new();
    for t in &config.theorems {
        if t.p_range().is_some() {
            let p = config.p.unwrap_or(t.default_p());
            if let std::collections::btree_map::Entry::Vacant(slot) = moments.entry(p.to_bits()) {
                slot.insert(estimate_moments(&model, system, p, config.bound_replicates(), config.seed)?);
            }
        }
    }
    let (m, dim) = lattice_shape(&config.model);
    let graph_degree = system.a_sets().iter().map(|a| a.len().saturating_sub(1)).max();
    let local_maxima = model
        .as_local_maxima()
        .map(|lm| (lm.moments().degree, lm.moments().variance.sqrt()));

    let mut outcomes = Vec::with_capacity(config.theorems.len());
    for &t in &config.theorems {
        let p = config.p.unwrap_or(t.default_p());
        let ing = BoundIngredients {
            rterms: rterms.as_ref(),
            moments: moments.get(&p.to_bits()),
            kappa: Some(system.kappa_stats()),
            kappa_override: None,
            lambda,
            n: Some(model.len()),
            z: config.z,
            m,
            dim,
            graph_degree,
            local_maxima,
        };
        let bound = theorem_bound(t, p, &ing)?;
        let verdict = if bound.c_free {
            None
        } else {
            Some(dominance_verdict(&distance, &bound)?)
        };
        outcomes.push(TheoremOutcome { bound, verdict });
    }
    let all_pass = outcomes.iter().all(|o| o.verdict.is_none_or(|v| v.pass));
    Ok(ExperimentReport {
        schema: SCHEMA,
        version: env!("CARGO_PKG_VERSION").to_string(),
        model_hash: model_hash(&config.model)?,
        config: config.clone(),
        n: model.len(),
        level: system.level(),
        distance,
        rterms,
        theorems: outcomes,
        all_pass,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

impl ExperimentReport {
    /// Write the JSON report and, if a profile exists, its CSV into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let name = self.config.outputs.report.as_deref().unwrap_or("report.json");
        std::fs::write(dir.join(name), serde_json::to_string_pretty(self)?)?;
        if let Some(profile) = self.distance.profile.as_ref().filter(|p| !p.is_empty()) {
            let name = self.config.outputs.profile_csv.as_deref().unwrap_or("profile.csv");
            std::fs::write(dir.join(name), profile_csv(profile))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub seed: u64,
    pub ks: f64,
    pub dkw_radius: f64,
    pub mode: DistanceMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub schema: u32,
    pub version: String,
    pub model_hash: String,
    pub config: ExperimentConfig,
    pub rows: Vec<RateRow>,
    pub fit: RateFit,
    pub wall_time_seconds: f64,
}

/// Kolmogorov distance at every ladder size, each with its own derived seed,
/// and the log–log slope across sizes.
pub fn run_rate_study(config: &ExperimentConfig) -> Result<RateReport> {
    config.validate()?;
    if config.ladder.len() < 3 {
        return Err(Error::usage("ladder", format!("needs at least 3 sizes, got {}", config.ladder.len())));
    }
    let start = Instant::now();
    let mut rows = Vec::with_capacity(config.ladder.len());
    for &n in &config.ladder {
        let model = config.model.with_size(n)?.build()?;
        let seed = derive_seed(config.seed, n as u64);
        let d = crate::empirics::kolmogorov_distance(&model, config.replicates, seed, config.delta)?;
        rows.push(RateRow {
            n,
            seed,
            ks: d.ks,
            dkw_radius: d.dkw_radius,
            mode: d.mode,
        });
    }
    let points: Vec<RatePoint> = rows
        .iter()
        .map(|r| RatePoint {
            n: r.n as f64,
            distance: r.ks,
            weight: 1.0,
        })
        .collect();
    Ok(RateReport {
        schema: SCHEMA,
        version: env!("CARGO_PKG_VERSION").to_string(),
        model_hash: model_hash(&config.model)?,
        config: config.clone(),
        fit: rate_fit(&points)?,
        rows,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

impl RateReport {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let name = self.config.outputs.report.as_deref().unwrap_or("rate.json");
        std::fs::write(dir.join(name), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::BaseDistribution;

    fn rademacher(n: usize) -> ModelSpec {
        ModelSpec::Iid {
            n,
            base: BaseDistribution::Rademacher,
        }
    }

    #[test]
    fn three_rademacher_end_to_end() {
        let mut c = ExperimentConfig::new(rademacher(3), 7);
        c.theorems = vec![TheoremId::T2_1];
        let r = run(&c).unwrap();
        assert_eq!(r.distance.mode, DistanceMode::Exact);
        assert!((r.distance.ks - 0.21814856917461349).abs() < 1e-12);
        let b = &r.theorems[0];
        let expected = 8.0 / 3f64.sqrt() + 0.5 + 6.0 / (2.0 * 3f64.sqrt());
        assert!((b.bound.value - expected).abs() < 1e-12);
        assert!((b.bound.value - 6.851).abs() < 1e-3);
        assert!(b.verdict.unwrap().pass && r.all_pass);
    }

    #[test]
    fn empty_theorem_list_reports_distance_only() {
        let r = run(&ExperimentConfig::new(rademacher(4), 1)).unwrap();
        assert!(r.theorems.is_empty() && r.all_pass);
    }

    #[test]
    fn c_free_theorems_carry_no_verdict() {
        let mut c = ExperimentConfig::new(rademacher(4), 1);
        c.theorems = vec![TheoremId::T2_5Rate, TheoremId::T2_4];
        let r = run(&c).unwrap();
        assert!(r.theorems[0].verdict.is_none());
        assert!(r.theorems[1].verdict.is_some());
    }

    fn usage_path(text: &str) -> String {
        match ExperimentConfig::from_json(text) {
            Err(Error::Usage { path, .. }) => path,
            other => panic!("expected a usage error, got {other:?}"),
        }
    }

    #[test]
    fn validation_names_fields() {
        let model = r#""model": {"kind": "iid", "n": 3, "base": "rademacher"}"#;
        assert_eq!(usage_path(&format!(r#"{{"schema": 1, {model}, "replicates": 0, "seed": 1}}"#)), "replicates");
        assert_eq!(usage_path(&format!(r#"{{"schema": 1, {model}, "replicates": 10}}"#)), "seed");
        assert_eq!(
            usage_path(&format!(r#"{{"schema": 1, {model}, "replicates": 10, "seed": 1, "theorems": ["2.1", "9.9"]}}"#)),
            "theorems[1]"
        );
        assert_eq!(usage_path(&format!(r#"{{"schema": 2, {model}, "replicates": 10, "seed": 1}}"#)), "schema");
        assert_eq!(usage_path(r#"{"schema": 1, "model": {"kind": "torus"}, "replicates": 10, "seed": 1}"#), "model");
        assert_eq!(usage_path(&format!(r#"{{"schema": 1, {model}, "replicates": 10, "seed": 1, "extra": 0}}"#)), "extra");
        assert_eq!(
            usage_path(&format!(r#"{{"schema": 1, {model}, "replicates": 10, "seed": 1, "theorems": ["2.4"], "p": 3.5}}"#)),
            "p"
        );
        let ok = ExperimentConfig::from_json(&format!(
            r#"{{"schema": 1, {model}, "system": "derive", "replicates": 10, "seed": 1, "theorems": ["2.1", "2.6u"]}}"#
        ))
        .unwrap();
        assert_eq!(ok.theorems, vec![TheoremId::T2_1, TheoremId::T2_6U]);
        assert_eq!(ok.delta, DEFAULT_DELTA);
    }

    #[test]
    fn config_round_trips_through_report() {
        let mut c = ExperimentConfig::new(rademacher(3), 11);
        c.theorems = vec![TheoremId::T2_1, TheoremId::T2_2];
        c.zgrid = vec![0.0, 1.0];
        let r = run(&c).unwrap();
        let text = serde_json::to_string(&r.config).unwrap();
        let again = run(&ExperimentConfig::from_json(&text).unwrap()).unwrap();
        assert_eq!(serde_json::to_value(&r.theorems).unwrap(), serde_json::to_value(&again.theorems).unwrap());
        assert_eq!(r.distance, again.distance);
        assert_eq!(r.model_hash, again.model_hash);
        assert_eq!(r.model_hash.len(), 64);
    }

    #[test]
    fn ladder_validation() {
        let mut c = ExperimentConfig::new(rademacher(3), 1);
        c.ladder = vec![64];
        assert!(matches!(run_rate_study(&c), Err(Error::Usage { ref path, .. }) if path == "ladder"));
        c.ladder = vec![4, 8, 16];
        let r = run_rate_study(&c).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.rows.iter().all(|row| row.mode == DistanceMode::Exact));
        assert!(r.fit.slope < 0.0);
    }
}
