//! Standardized locally dependent random fields.
//!
//! A [`FieldModel`] pairs a sampler for `{X_i}` with the neighborhood system
//! it satisfies, an exact covariance oracle, and (for small discrete models)
//! an exact enumerator of all primitive outcomes. Every model is scaled so
//! that `W = Σ X_i` has mean 0 and variance exactly 1.

mod linear;
mod local_maxima;

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{stream, substream};
use crate::neighborhoods::{parse_edge_list, Lattice, NeighborhoodSystem};

pub use linear::{erickson_pattern, erickson_variances, LinearField};
pub use local_maxima::{local_maxima_moments, Graph, LocalMaximaField, LocalMaximaMoments};

/// Largest number of primitive outcomes enumerated exactly.
pub const MAX_EXACT_OUTCOMES: u64 = 1 << 20;

/// Mean-zero, unit-variance primitive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseDistribution {
    /// ±1 with probability ½.
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    Uniform,
    /// `Exp(1) − 1`.
    ShiftedExponential,
}

impl BaseDistribution {
    /// Append `count` draws to `out`.
    pub(crate) fn fill(self, rng: &mut impl Rng, count: usize, out: &mut Vec<f64>) {
        match self {
            BaseDistribution::Rademacher => {
                let mut left = count;
                while left > 0 {
                    let word: u64 = rng.random();
                    let take = left.min(64);
                    out.extend((0..take).map(|b| if word >> b & 1 == 1 { 1.0 } else { -1.0 }));
                    left -= take;
                }
            }
            BaseDistribution::Uniform => {
                let r = 3f64.sqrt();
                out.extend((0..count).map(|_| r * (2.0 * rng.random::<f64>() - 1.0)));
            }
            BaseDistribution::ShiftedExponential => {
                out.extend((0..count).map(|_| -(1.0 - rng.random::<f64>()).ln() - 1.0));
            }
        }
    }
}

/// Graph source for the local-maxima model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSpec {
    Cycle(usize),
    Complete(usize),
    Torus(usize),
    Edges { vertices: usize, edges: Vec<(usize, usize)> },
    /// Path to an edge-list file (`u v` per line).
    EdgeList(PathBuf),
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph> {
        match self {
            GraphSpec::Cycle(n) => Graph::cycle(*n),
            GraphSpec::Complete(n) => Graph::complete(*n),
            GraphSpec::Torus(s) => Graph::torus(*s),
            GraphSpec::Edges { vertices, edges } => Graph::new((0..*vertices).map(|i| i.to_string()).collect(), edges),
            GraphSpec::EdgeList(path) => {
                let el = parse_edge_list(&std::fs::read_to_string(path)?)?;
                Graph::new(el.vertices, &el.edges)
            }
        }
    }
}

/// JSON model specification, discriminated by `"kind"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Iid {
        n: usize,
        base: BaseDistribution,
    },
    MovingSum {
        shape: Vec<usize>,
        m: usize,
        base: BaseDistribution,
    },
    LocalMaxima {
        graph: GraphSpec,
    },
    Erickson {
        n: usize,
    },
    /// Arbitrary sparse linear combinations of Rademacher primitives;
    /// `rows[i]` lists `(primitive, weight)` pairs of `X_i` before scaling.
    SparseLinear {
        primitives: usize,
        rows: Vec<Vec<(usize, f64)>>,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<FieldModel> {
        match self {
            ModelSpec::Iid { n, base } => iid_field(*n, *base),
            ModelSpec::MovingSum { shape, m, base } => moving_sum_field(shape, *m, *base),
            ModelSpec::LocalMaxima { graph } => local_maxima_field(graph.build()?).map(|mut f| {
                f.spec = self.clone();
                f
            }),
            ModelSpec::Erickson { n } => erickson_field(*n),
            ModelSpec::SparseLinear { primitives, rows } => sparse_linear_field(*primitives, rows.clone()),
        }
    }

    /// The same family at size `n` (used by rate ladders).
    pub fn with_size(&self, n: usize) -> Result<ModelSpec> {
        Ok(match self {
            ModelSpec::Iid { base, .. } => ModelSpec::Iid { n, base: *base },
            ModelSpec::Erickson { .. } => ModelSpec::Erickson { n },
            ModelSpec::MovingSum { shape, m, base } if shape.len() == 1 => ModelSpec::MovingSum {
                shape: vec![n],
                m: *m,
                base: *base,
            },
            ModelSpec::LocalMaxima {
                graph: GraphSpec::Cycle(_),
            } => ModelSpec::LocalMaxima {
                graph: GraphSpec::Cycle(n),
            },
            _ => {
                return Err(Error::usage(
                    "model",
                    "size ladders need an iid, erickson, 1-d moving_sum or cycle local_maxima model",
                ))
            }
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Kind {
    Linear(LinearField),
    LocalMaxima(LocalMaximaField),
}

/// How the field was scaled to `Var(W) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    /// Per-index mean subtracted before scaling.
    pub mean_shift: f64,
    /// Global factor `s` applied after centering.
    pub scale: f64,
    /// `true` when `s` is closed-form from the covariance oracle.
    pub exact: bool,
}

#[derive(Debug, Clone)]
pub struct FieldModel {
    spec: ModelSpec,
    system: NeighborhoodSystem,
    kind: Kind,
    standardization: Standardization,
}

/// One sampled vector of standardized field values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub values: Vec<f64>,
    pub seed: u64,
}

impl Realization {
    pub fn w(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// An atom of the exact law of `W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

/// Per-chunk sampling state; reuses its buffers across replicates.
pub struct FieldSampler<'a> {
    model: &'a FieldModel,
    scratch: Vec<f64>,
    ranks: Vec<usize>,
}

impl FieldSampler<'_> {
    pub fn fill(&mut self, rng: &mut impl Rng, out: &mut [f64]) {
        match &self.model.kind {
            Kind::Linear(f) => f.fill(rng, &mut self.scratch, out),
            Kind::LocalMaxima(f) => f.fill(rng, &mut self.ranks, out),
        }
    }

    /// A draw of `W` alone; cheaper than [`fill`](Self::fill) for linear fields.
    pub fn draw_w(&mut self, rng: &mut impl Rng, buf: &mut Vec<f64>) -> f64 {
        match &self.model.kind {
            Kind::Linear(f) => f.draw_w(rng, &mut self.scratch),
            Kind::LocalMaxima(f) => {
                buf.resize(f.graph.len(), 0.0);
                f.fill(rng, &mut self.ranks, buf);
                buf.iter().sum()
            }
        }
    }
}

impl FieldModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn system(&self) -> &NeighborhoodSystem {
        &self.system
    }

    pub fn len(&self) -> usize {
        self.system.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.is_empty()
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    pub fn as_local_maxima(&self) -> Option<&LocalMaximaField> {
        match &self.kind {
            Kind::LocalMaxima(f) => Some(f),
            Kind::Linear(_) => None,
        }
    }

    pub fn as_linear(&self) -> Option<&LinearField> {
        match &self.kind {
            Kind::Linear(f) => Some(f),
            Kind::LocalMaxima(_) => None,
        }
    }

    /// Replace the neighborhood system (e.g. with a looser but still valid one).
    pub fn with_system(mut self, system: NeighborhoodSystem) -> Result<Self> {
        if system.len() != self.len() {
            return Err(Error::Structural(format!(
                "system has {} indices, model has {}",
                system.len(),
                self.len()
            )));
        }
        self.system = system;
        Ok(self)
    }

    pub fn sampler(&self) -> FieldSampler<'_> {
        FieldSampler {
            model: self,
            scratch: Vec::new(),
            ranks: Vec::new(),
        }
    }

    /// Deterministic realization for `seed`.
    pub fn sample(&self, seed: u64) -> Realization {
        let mut rng = substream(seed, stream::SAMPLE, 0);
        let mut values = vec![0.0; self.len()];
        self.sampler().fill(&mut rng, &mut values);
        Realization { values, seed }
    }

    /// Realization of replicate `r` on stream `stream_id` of `seed`.
    pub fn sample_replicate(&self, seed: u64, stream_id: u64, r: u64) -> Realization {
        let mut rng: ChaCha8Rng = substream(seed, stream_id, r);
        let mut values = vec![0.0; self.len()];
        self.sampler().fill(&mut rng, &mut values);
        Realization { values, seed }
    }

    /// Number of primitive outcomes, when the model is discrete.
    pub fn outcome_count(&self) -> Option<u64> {
        match &self.kind {
            Kind::Linear(f) => f.outcome_count(),
            Kind::LocalMaxima(f) => f.outcome_count(),
        }
    }

    pub fn is_enumerable(&self) -> bool {
        self.outcome_count().is_some_and(|c| c <= MAX_EXACT_OUTCOMES)
    }

    /// Visit every primitive outcome with its probability and field values.
    pub fn for_each_outcome(&self, f: impl FnMut(f64, &[f64])) -> Result<()> {
        if !self.is_enumerable() {
            return Err(Error::Capability(format!(
                "model has no exact enumerator within {MAX_EXACT_OUTCOMES} outcomes"
            )));
        }
        match &self.kind {
            Kind::Linear(l) => l.for_each_outcome(f),
            Kind::LocalMaxima(l) => l.for_each_outcome(f),
        }
        Ok(())
    }

    /// Exact law of `W` as sorted atoms. Values closer than `1e-9` are merged.
    pub fn exact_enumerate(&self) -> Result<Vec<Atom>> {
        let mut raw = Vec::new();
        self.for_each_outcome(|p, x| raw.push((x.iter().sum::<f64>(), p)))?;
        Ok(merge_atoms(raw))
    }

    /// Exact `Cov(X_i, X_j)`.
    pub fn covariance(&self, i: usize, j: usize) -> Option<f64> {
        Some(match &self.kind {
            Kind::Linear(f) => f.covariance(i, j),
            Kind::LocalMaxima(f) => f.covariance(i, j),
        })
    }

    /// Primitive noise ids `X_i` is a function of.
    pub fn noise_support(&self, i: usize) -> Vec<usize> {
        match &self.kind {
            Kind::Linear(f) => f.support(i),
            Kind::LocalMaxima(f) => f.support(i),
        }
    }

    /// Indices `i` whose noise overlaps the noise of some `X_j`, `j ∉ A_i`.
    /// Empty means the A sets are valid by construction.
    pub fn structural_violations(&self) -> Vec<usize> {
        let n = self.len();
        let supports: Vec<Vec<usize>> = (0..n).map(|i| self.noise_support(i)).collect();
        let primitives = supports.iter().flatten().max().map_or(0, |m| m + 1);
        let mut users = vec![Vec::new(); primitives];
        for (j, s) in supports.iter().enumerate() {
            for &k in s {
                users[k].push(j);
            }
        }
        let a = self.system.a_sets();
        (0..n)
            .filter(|&i| {
                supports[i]
                    .iter()
                    .flat_map(|&k| users[k].iter())
                    .any(|j| a[i].binary_search(j).is_err())
            })
            .collect()
    }
}

pub(crate) fn merge_atoms(mut raw: Vec<(f64, f64)>) -> Vec<Atom> {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut atoms: Vec<Atom> = Vec::new();
    for (value, prob) in raw {
        match atoms.last_mut() {
            Some(last) if (value - last.value).abs() <= 1e-9 * (1.0 + value.abs()) => last.prob += prob,
            _ => atoms.push(Atom { value, prob }),
        }
    }
    atoms
}

fn index_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Independent field `X_i = ε_i / √n`.
pub fn iid_field(n: usize, base: BaseDistribution) -> Result<FieldModel> {
    if n == 0 {
        return Err(Error::InvalidArgument("iid field needs n ≥ 1".into()));
    }
    let rows = (0..n).map(|i| vec![(i, 1.0)]).collect();
    let field = LinearField::new(base, n, rows)?;
    Ok(FieldModel {
        spec: ModelSpec::Iid { n, base },
        system: NeighborhoodSystem::lattice_m_dependent(&[n], 0)?,
        standardization: Standardization {
            mean_shift: 0.0,
            scale: field.scale(),
            exact: true,
        },
        kind: Kind::Linear(field),
    })
}

/// Moving sums of i.i.d. noise over one-sided boxes `[i, i+m]^d` clipped to
/// the lattice. Windows of points at sup-distance above `m` are disjoint, so
/// the field is m-dependent and the lattice system of radius `m` applies.
pub fn moving_sum_field(shape: &[usize], m: usize, base: BaseDistribution) -> Result<FieldModel> {
    let lattice = Lattice::new(shape)?;
    let rows = linear::moving_sum_rows(&lattice, m);
    let field = LinearField::new(base, lattice.len(), rows)?;
    Ok(FieldModel {
        spec: ModelSpec::MovingSum {
            shape: shape.to_vec(),
            m,
            base,
        },
        system: NeighborhoodSystem::lattice_m_dependent(shape, m)?,
        standardization: Standardization {
            mean_shift: 0.0,
            scale: field.scale(),
            exact: true,
        },
        kind: Kind::Linear(field),
    })
}

/// Centered, σ-scaled local-maxima indicators on a regular graph.
pub fn local_maxima_field(graph: Graph) -> Result<FieldModel> {
    let n = graph.len();
    let field = LocalMaximaField::new(graph)?;
    let system = field.system()?;
    let moments = field.moments();
    Ok(FieldModel {
        spec: ModelSpec::LocalMaxima {
            graph: GraphSpec::Cycle(n),
        },
        system,
        standardization: Standardization {
            mean_shift: 1.0 / (moments.degree as f64 + 1.0),
            scale: 1.0 / moments.variance.sqrt(),
            exact: true,
        },
        kind: Kind::LocalMaxima(field),
    })
}

/// Erickson's one-dependent Rademacher sequence, `W = S_n / B_n`.
///
/// Neighborhoods are the independence blocks: `A_i = {i}` for an unpaired
/// variable and `{i, partner}` for a variable in a `(X_k, −X_k)` pair, so
/// `Y_i = Z_i = 0` on paired indices.
pub fn erickson_field(n: usize) -> Result<FieldModel> {
    if n < 2 {
        return Err(Error::InvalidArgument("erickson field needs n ≥ 2".into()));
    }
    let copy = erickson_pattern(n);
    let mut rows = Vec::with_capacity(n);
    let mut fresh = 0usize;
    for (pos, &is_copy) in copy.iter().enumerate() {
        if is_copy {
            let prev: &Vec<(usize, f64)> = &rows[pos - 1];
            rows.push(vec![(prev[0].0, -1.0)]);
        } else {
            rows.push(vec![(fresh, 1.0)]);
            fresh += 1;
        }
    }
    let field = LinearField::new(BaseDistribution::Rademacher, fresh, rows)?;
    let system = field.overlap_system(index_labels(n))?;
    Ok(FieldModel {
        spec: ModelSpec::Erickson { n },
        system,
        standardization: Standardization {
            mean_shift: 0.0,
            scale: field.scale(),
            exact: true,
        },
        kind: Kind::Linear(field),
    })
}

/// Sparse linear Rademacher field with the noise-overlap neighborhood system.
pub fn sparse_linear_field(primitives: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<FieldModel> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("sparse linear field needs at least one row".into()));
    }
    let field = LinearField::new(BaseDistribution::Rademacher, primitives, rows.clone())?;
    let system = field.overlap_system(index_labels(rows.len()))?;
    Ok(FieldModel {
        spec: ModelSpec::SparseLinear { primitives, rows },
        system,
        standardization: Standardization {
            mean_shift: 0.0,
            scale: field.scale(),
            exact: true,
        },
        kind: Kind::Linear(field),
    })
}

/// Random enumerable sparse linear field: `n` variables over `primitives`
/// Rademacher primitives, each using 1 to `max_terms` primitives chosen near
/// its own position with integer weights in `-2..=2`.
pub fn random_sparse_linear(rng: &mut impl Rng, n: usize, primitives: usize, max_terms: usize) -> Result<FieldModel> {
    loop {
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let centre = i * primitives / n.max(1);
                let terms = rng.random_range(1..=max_terms.max(1));
                let mut row: Vec<(usize, f64)> = Vec::new();
                for _ in 0..terms {
                    let k = (centre + rng.random_range(0..3)).min(primitives - 1);
                    let w = [-2.0, -1.0, 1.0, 2.0, 0.5][rng.random_range(0..5)];
                    if !row.iter().any(|e| e.0 == k) {
                        row.push((k, w));
                    }
                }
                row
            })
            .collect();
        match sparse_linear_field(primitives, rows) {
            Err(Error::Degenerate(_)) => continue,
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn iid_three_rademacher_law() {
        let atoms = iid_field(3, BaseDistribution::Rademacher).unwrap().exact_enumerate().unwrap();
        let r3 = 3f64.sqrt();
        let expected = [(-r3, 0.125), (-1.0 / r3, 0.375), (1.0 / r3, 0.375), (r3, 0.125)];
        assert_eq!(atoms.len(), 4);
        for (a, (v, p)) in atoms.iter().zip(expected) {
            assert!(approx(a.value, v, 1e-12) && approx(a.prob, p, 1e-15));
        }
    }

    #[test]
    fn iid_single_variable() {
        for base in [BaseDistribution::Rademacher, BaseDistribution::Uniform, BaseDistribution::ShiftedExponential] {
            let m = iid_field(1, base).unwrap();
            assert_eq!(m.covariance(0, 0), Some(1.0));
        }
        let atoms = iid_field(1, BaseDistribution::Rademacher).unwrap().exact_enumerate().unwrap();
        assert_eq!(atoms, vec![Atom { value: -1.0, prob: 0.5 }, Atom { value: 1.0, prob: 0.5 }]);
    }

    #[test]
    fn iid_four_rademacher_atom_at_zero() {
        let atoms = iid_field(4, BaseDistribution::Rademacher).unwrap().exact_enumerate().unwrap();
        let zero = atoms.iter().find(|a| a.value.abs() < 1e-12).unwrap();
        assert!(approx(zero.prob, 6.0 / 16.0, 1e-15));
    }

    #[test]
    fn iid_rejects_empty() {
        assert!(iid_field(0, BaseDistribution::Uniform).is_err());
    }

    #[test]
    fn moving_sum_with_m_zero_is_iid() {
        let a = moving_sum_field(&[5], 0, BaseDistribution::Rademacher).unwrap();
        let b = iid_field(5, BaseDistribution::Rademacher).unwrap();
        assert_eq!(a.exact_enumerate().unwrap(), b.exact_enumerate().unwrap());
        assert_eq!(a.system(), b.system());
    }

    #[test]
    fn moving_sum_small_exact_variance() {
        // windows {0,1},{1,2},{2}: coverage counts 1,2,2 -> Var = 9 before scaling
        let m = moving_sum_field(&[3], 1, BaseDistribution::Rademacher).unwrap();
        assert!(approx(m.standardization().scale, 1.0 / 3.0, 1e-15));
        let var: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| m.covariance(i, j).unwrap()).sum();
        assert!(approx(var, 1.0, 1e-14));
        let ew2: f64 = m.exact_enumerate().unwrap().iter().map(|a| a.prob * a.value * a.value).sum();
        assert!(approx(ew2, 1.0, 1e-12));
    }

    #[test]
    fn moving_sum_far_apart_is_uncorrelated() {
        let m = moving_sum_field(&[100], 1, BaseDistribution::Uniform).unwrap();
        assert_eq!(m.covariance(0, 49), Some(0.0));
        assert!(m.covariance(10, 11).unwrap() > 0.0);
    }

    #[test]
    fn erickson_variance_and_atoms() {
        let m = erickson_field(4).unwrap();
        // X3 = -X2, so S4 = X1 + X4 and B4^2 = 2
        assert_eq!(m.outcome_count(), Some(8));
        let atoms = m.exact_enumerate().unwrap();
        let r2 = 2f64.sqrt();
        assert_eq!(atoms.len(), 3);
        assert!(approx(atoms[0].value, -r2, 1e-12) && approx(atoms[0].prob, 0.25, 1e-15));
        assert!(approx(atoms[1].value, 0.0, 1e-12) && approx(atoms[1].prob, 0.5, 1e-15));
        assert!(approx(atoms[2].value, r2, 1e-12) && approx(atoms[2].prob, 0.25, 1e-15));
        assert_eq!(m.system().a_sets()[1], vec![1, 2]);
        assert_eq!(m.system().a_sets()[0], vec![0]);
    }

    #[test]
    fn erickson_variance_tracks_root_n() {
        let v = erickson_variances(1_000_000);
        for (k, &b2) in v.iter().enumerate() {
            let n = (k + 1) as f64;
            assert!((b2 as f64 - n.sqrt()).abs() <= 2.0, "n={n}, B^2={b2}");
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let m = moving_sum_field(&[6, 5], 1, BaseDistribution::ShiftedExponential).unwrap();
        assert_eq!(m.sample(11), m.sample(11));
        assert_ne!(m.sample(11), m.sample(12));
        assert!(m.sample(3).values.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn built_in_models_are_structurally_valid() {
        let models = [
            iid_field(7, BaseDistribution::Uniform).unwrap(),
            moving_sum_field(&[9], 2, BaseDistribution::Rademacher).unwrap(),
            moving_sum_field(&[4, 5], 1, BaseDistribution::Uniform).unwrap(),
            erickson_field(30).unwrap(),
            local_maxima_field(Graph::cycle(9).unwrap()).unwrap(),
            local_maxima_field(Graph::torus(4).unwrap()).unwrap(),
        ];
        for m in &models {
            assert!(m.structural_violations().is_empty(), "{:?}", m.spec());
            assert!(m.system().validate().is_empty(), "{:?}", m.spec());
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"kind":"moving_sum","shape":[10],"m":1,"base":"shifted-exponential"}"#;
        let spec: ModelSpec = serde_json::from_str(text).unwrap();
        assert_eq!(
            spec,
            ModelSpec::MovingSum {
                shape: vec![10],
                m: 1,
                base: BaseDistribution::ShiftedExponential
            }
        );
        let lm: ModelSpec = serde_json::from_str(r#"{"kind":"local_maxima","graph":{"cycle":9}}"#).unwrap();
        assert_eq!(lm.build().unwrap().len(), 9);
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"iid","n":3,"base":"cauchy"}"#).is_err());
    }
}
