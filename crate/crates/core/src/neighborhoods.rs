//! Nested dependency neighborhoods.
//!
//! A [`NeighborhoodSystem`] records, for every index `i` of a finite index
//! set, the sets `A_i ⊆ B_i ⊆ C_i` and (at the strongest level)
//! `B_i ⊆ B*_i ⊆ C*_i ⊆ D*_i` that describe how far the dependence of the
//! field reaches. Indices are dense `usize` positions; every index also
//! carries an opaque string label used by the JSON and edge-list formats.
//!
//! All sets are stored sorted and deduplicated.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dependence level, ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "LD1")]
    Ld1,
    #[serde(rename = "LD2")]
    Ld2,
    #[serde(rename = "LD3")]
    Ld3,
    #[serde(rename = "LD4*")]
    Ld4Star,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Level::Ld1 => "LD1",
            Level::Ld2 => "LD2",
            Level::Ld3 => "LD3",
            Level::Ld4Star => "LD4*",
        };
        f.write_str(s)
    }
}

/// Which family of sets a value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SetKind {
    A,
    B,
    C,
    BStar,
    CStar,
    DStar,
}

impl SetKind {
    pub fn name(self) -> &'static str {
        match self {
            SetKind::A => "A",
            SetKind::B => "B",
            SetKind::C => "C",
            SetKind::BStar => "Bstar",
            SetKind::CStar => "Cstar",
            SetKind::DStar => "Dstar",
        }
    }

    fn required_level(self) -> Level {
        match self {
            SetKind::A => Level::Ld1,
            SetKind::B => Level::Ld2,
            SetKind::C => Level::Ld3,
            SetKind::BStar | SetKind::CStar | SetKind::DStar => Level::Ld4Star,
        }
    }
}

/// A failed invariant reported by [`NeighborhoodSystem::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// `i ∉ A_i`.
    SelfMembership { index: usize },
    /// `inner_i ⊄ outer_i`; `missing` is the first element of `inner_i` not in `outer_i`.
    Nesting {
        index: usize,
        inner: SetKind,
        outer: SetKind,
        missing: usize,
    },
    /// A set refers to a position outside the index set.
    OutOfRange {
        index: usize,
        set: SetKind,
        element: usize,
    },
    /// The declared level needs a set family that is absent.
    MissingSets { set: SetKind },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfMembership { index } => write!(f, "index {index} is not in its own A set"),
            Violation::Nesting {
                index,
                inner,
                outer,
                missing,
            } => write!(
                f,
                "index {index}: {}_{index} is not contained in {}_{index} (missing {missing})",
                inner.name(),
                outer.name()
            ),
            Violation::OutOfRange { index, set, element } => {
                write!(f, "index {index}: {}_{index} contains unknown element {element}", set.name())
            }
            Violation::MissingSets { set } => write!(f, "set family {} is missing", set.name()),
        }
    }
}

/// Cardinality statistics consumed by the theorems. A field is `None` when
/// the system's level is too low to define it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KappaStats {
    /// `max_i |N(B_i)|`, `N(B_i) = {j : B_j ∩ B_i ≠ ∅}`.
    pub kappa_nb: Option<usize>,
    /// `max_i max(|N(C_i)|, |{j : i ∈ C_j}|)`, `N(C_i) = {j : C_i ∩ B_j ≠ ∅}`.
    pub kappa_nc: Option<usize>,
    /// `max_i max(|D*_i|, |{j : i ∈ D*_j}|)`.
    pub kappa_dstar: Option<usize>,
    /// `max_i max(|C_i|, |{j : i ∈ C_j}|)`.
    pub kappa1: Option<usize>,
    /// Same quantity as `kappa_dstar`, under the name used by the fourth-moment product inequality.
    pub kappa2: Option<usize>,
}

impl KappaStats {
    fn need(v: Option<usize>, name: &str, level: Level) -> Result<usize> {
        v.ok_or_else(|| Error::Capability(format!("{name} requires a system at level {level} or above")))
    }

    pub fn nb(&self) -> Result<usize> {
        Self::need(self.kappa_nb, "kappa_nb", Level::Ld2)
    }

    pub fn nc(&self) -> Result<usize> {
        Self::need(self.kappa_nc, "kappa_nc", Level::Ld3)
    }

    pub fn dstar(&self) -> Result<usize> {
        Self::need(self.kappa_dstar, "kappa_dstar", Level::Ld4Star)
    }

    pub fn k1(&self) -> Result<usize> {
        Self::need(self.kappa1, "kappa1", Level::Ld3)
    }

    pub fn k2(&self) -> Result<usize> {
        Self::need(self.kappa2, "kappa2", Level::Ld4Star)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSystem {
    labels: Vec<String>,
    level: Level,
    a: Vec<Vec<usize>>,
    b: Option<Vec<Vec<usize>>>,
    c: Option<Vec<Vec<usize>>>,
    bstar: Option<Vec<Vec<usize>>>,
    cstar: Option<Vec<Vec<usize>>>,
    dstar: Option<Vec<Vec<usize>>>,
}

/// Raw set families handed to [`NeighborhoodSystem::from_sets`].
#[derive(Debug, Clone, Default)]
pub struct SetFamilies {
    pub a: Vec<Vec<usize>>,
    pub b: Option<Vec<Vec<usize>>>,
    pub c: Option<Vec<Vec<usize>>>,
    pub bstar: Option<Vec<Vec<usize>>>,
    pub cstar: Option<Vec<Vec<usize>>>,
    pub dstar: Option<Vec<Vec<usize>>>,
}

fn normalize(mut sets: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for s in &mut sets {
        s.sort_unstable();
        s.dedup();
    }
    sets
}

fn first_missing(inner: &[usize], outer: &[usize]) -> Option<usize> {
    inner.iter().copied().find(|x| outer.binary_search(x).is_err())
}

/// Reusable scratch marker for counting distinct elements of unions.
struct Marker {
    stamp: Vec<u32>,
    generation: u32,
    touched: Vec<usize>,
}

impl Marker {
    fn new(n: usize) -> Self {
        Marker {
            stamp: vec![0; n],
            generation: 0,
            touched: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.generation += 1;
        self.touched.clear();
    }

    fn insert(&mut self, x: usize) {
        if self.stamp[x] != self.generation {
            self.stamp[x] = self.generation;
            self.touched.push(x);
        }
    }

    fn sorted(&mut self) -> Vec<usize> {
        let mut v = self.touched.clone();
        v.sort_unstable();
        v
    }
}

/// `out_i = ∪_{j ∈ outer_i} inner_j`.
fn compose(outer: &[Vec<usize>], inner: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut marker = Marker::new(inner.len());
    outer
        .iter()
        .map(|set| {
            marker.reset();
            for &j in set {
                for &k in &inner[j] {
                    marker.insert(k);
                }
            }
            marker.sorted()
        })
        .collect()
}

/// `inv_k = {j : k ∈ sets_j}`.
fn invert(sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut inv = vec![Vec::new(); sets.len()];
    for (j, set) in sets.iter().enumerate() {
        for &k in set {
            inv[k].push(j);
        }
    }
    inv
}

impl NeighborhoodSystem {
    /// Assemble a system from explicit set families. Only structural checks
    /// are performed here (label count, element range, presence of the sets
    /// the level needs); nesting is left to [`validate`](Self::validate).
    pub fn from_sets(labels: Vec<String>, level: Level, sets: SetFamilies) -> Result<Self> {
        let n = labels.len();
        let sys = NeighborhoodSystem {
            labels,
            level,
            a: normalize(sets.a),
            b: sets.b.map(normalize),
            c: sets.c.map(normalize),
            bstar: sets.bstar.map(normalize),
            cstar: sets.cstar.map(normalize),
            dstar: sets.dstar.map(normalize),
        };
        for kind in [SetKind::A, SetKind::B, SetKind::C, SetKind::BStar, SetKind::CStar, SetKind::DStar] {
            let family = sys.family(kind);
            if kind.required_level() <= level && family.is_none() {
                return Err(Error::Structural(format!(
                    "level {level} requires the {} sets",
                    kind.name()
                )));
            }
            if let Some(family) = family {
                if family.len() != n {
                    return Err(Error::Structural(format!(
                        "{} has {} entries for {n} indices",
                        kind.name(),
                        family.len()
                    )));
                }
                for (i, set) in family.iter().enumerate() {
                    if let Some(&bad) = set.iter().find(|&&x| x >= n) {
                        return Err(Error::Structural(format!(
                            "{}_{i} refers to index {bad} outside 0..{n}",
                            kind.name()
                        )));
                    }
                }
            }
        }
        Ok(sys)
    }

    /// LD1 system of a dependency graph: `A_i` is `i` together with its graph neighbors.
    pub fn from_adjacency(labels: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = labels.len();
        let mut a: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Structural(format!(
                    "edge ({u}, {v}) refers to a vertex outside 0..{n}"
                )));
            }
            if u != v {
                a[u].push(v);
                a[v].push(u);
            }
        }
        Self::from_sets(
            labels,
            Level::Ld1,
            SetFamilies {
                a,
                ..Default::default()
            },
        )
    }

    /// Same as [`from_adjacency`](Self::from_adjacency), addressing vertices by label.
    pub fn from_labeled_edges(labels: Vec<String>, edges: &[(String, String)]) -> Result<Self> {
        let lookup: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let resolve = |l: &str| {
            lookup
                .get(l)
                .copied()
                .ok_or_else(|| Error::Structural(format!("edge refers to unknown vertex `{l}`")))
        };
        let mut idx = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            idx.push((resolve(u)?, resolve(v)?));
        }
        Self::from_adjacency(labels, &idx)
    }

    /// LD4* system of the m-dependent field on a lattice box, with sup-metric
    /// balls of radius m, 2m, 3m, 3m, 6m and 9m clipped to the box.
    pub fn lattice_m_dependent(shape: &[usize], m: usize) -> Result<Self> {
        let lattice = Lattice::new(shape)?;
        let ball = |r: usize| -> Vec<Vec<usize>> { (0..lattice.len()).map(|i| lattice.ball(i, r)).collect() };
        Self::from_sets(
            lattice.labels(),
            Level::Ld4Star,
            SetFamilies {
                a: ball(m),
                b: Some(ball(2 * m)),
                c: Some(ball(3 * m)),
                bstar: Some(ball(3 * m)),
                cstar: Some(ball(6 * m)),
                dstar: Some(ball(9 * m)),
            },
        )
    }

    /// Derive B, C, B*, C*, D* from the A sets by the union rules
    /// `B_i = ∪_{j∈A_i} A_j`, `C_i = ∪_{j∈B_i} A_j`, `B*_i = ∪_{j∈A_i} B_j`,
    /// `C*_i = ∪_{j∈B*_i} B_j`, `D*_i = ∪_{j∈C*_i} B_j`.
    pub fn closure_extend(&self) -> Result<Self> {
        if let Some(i) = (0..self.len()).find(|&i| self.a[i].binary_search(&i).is_err()) {
            return Err(Error::Structural(format!("index {i} is not in its own A set")));
        }
        let b = compose(&self.a, &self.a);
        let c = compose(&b, &self.a);
        let bstar = compose(&self.a, &b);
        let cstar = compose(&bstar, &b);
        let dstar = compose(&cstar, &b);
        Self::from_sets(
            self.labels.clone(),
            Level::Ld4Star,
            SetFamilies {
                a: self.a.clone(),
                b: Some(b),
                c: Some(c),
                bstar: Some(bstar),
                cstar: Some(cstar),
                dstar: Some(dstar),
            },
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn family(&self, kind: SetKind) -> Option<&[Vec<usize>]> {
        match kind {
            SetKind::A => Some(&self.a),
            SetKind::B => self.b.as_deref(),
            SetKind::C => self.c.as_deref(),
            SetKind::BStar => self.bstar.as_deref(),
            SetKind::CStar => self.cstar.as_deref(),
            SetKind::DStar => self.dstar.as_deref(),
        }
    }

    /// Set family required at or below the declared level.
    pub fn sets(&self, kind: SetKind) -> Result<&[Vec<usize>]> {
        if kind.required_level() > self.level {
            return Err(Error::Capability(format!(
                "{} sets need level {}, system is {}",
                kind.name(),
                kind.required_level(),
                self.level
            )));
        }
        self.family(kind)
            .ok_or_else(|| Error::Capability(format!("{} sets are missing", kind.name())))
    }

    pub fn a_sets(&self) -> &[Vec<usize>] {
        &self.a
    }

    pub fn require_level(&self, level: Level) -> Result<()> {
        if self.level < level {
            return Err(Error::Capability(format!(
                "operation needs level {level}, system is {}",
                self.level
            )));
        }
        Ok(())
    }

    /// Exact κ statistics over the finite index set.
    pub fn kappa_stats(&self) -> KappaStats {
        let n = self.len();
        let mut stats = KappaStats {
            kappa_nb: None,
            kappa_nc: None,
            kappa_dstar: None,
            kappa1: None,
            kappa2: None,
        };
        let mut marker = Marker::new(n);
        let union_count = |marker: &mut Marker, sets: &[usize], inv: &[Vec<usize>]| {
            marker.reset();
            for &k in sets {
                for &j in &inv[k] {
                    marker.insert(j);
                }
            }
            marker.touched.len()
        };

        if let (true, Some(b)) = (self.level >= Level::Ld2, self.b.as_deref()) {
            let inv_b = invert(b);
            let nb = (0..n).map(|i| union_count(&mut marker, &b[i], &inv_b)).max().unwrap_or(0);
            stats.kappa_nb = Some(nb);

            if let (true, Some(c)) = (self.level >= Level::Ld3, self.c.as_deref()) {
                let inv_c = invert(c);
                let nc = (0..n)
                    .map(|i| union_count(&mut marker, &c[i], &inv_b).max(inv_c[i].len()))
                    .max()
                    .unwrap_or(0);
                stats.kappa_nc = Some(nc);
                let k1 = (0..n).map(|i| c[i].len().max(inv_c[i].len())).max().unwrap_or(0);
                stats.kappa1 = Some(k1);
            }
        }
        if let (true, Some(d)) = (self.level >= Level::Ld4Star, self.dstar.as_deref()) {
            let inv_d = invert(d);
            let kd = (0..n).map(|i| d[i].len().max(inv_d[i].len())).max().unwrap_or(0);
            stats.kappa_dstar = Some(kd);
            stats.kappa2 = Some(kd);
        }
        stats
    }

    /// `N(C_i) = {j : C_i ∩ B_j ≠ ∅}` for every `i`, sorted.
    pub fn n_of_c(&self) -> Result<Vec<Vec<usize>>> {
        let b = self.sets(SetKind::B)?;
        let c = self.sets(SetKind::C)?;
        let inv_b = invert(b);
        Ok(compose(c, &inv_b))
    }

    /// For each `i`, the sorted list of `j` with `B_i ∩ B_j ≠ ∅`.
    ///
    /// Computed through the inverted index `k ↦ {j : k ∈ B_j}`, so the cost
    /// is proportional to the number of overlapping pairs rather than `n²`.
    pub fn neighbor_partners_b(&self) -> Result<Vec<Vec<usize>>> {
        let b = self.sets(SetKind::B)?;
        let inv_b = invert(b);
        Ok(compose(b, &inv_b))
    }

    /// Symmetric set of ordered pairs `(i, j)` with `B_i ∩ B_j ≠ ∅`, diagonal included.
    pub fn neighbor_pairs_b(&self) -> Result<Vec<(usize, usize)>> {
        Ok(self
            .neighbor_partners_b()?
            .into_iter()
            .enumerate()
            .flat_map(|(i, js)| js.into_iter().map(move |j| (i, j)))
            .collect())
    }

    /// Every violated invariant; empty iff the system is well formed at its level.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.len();
        let mut out = Vec::new();
        for kind in [SetKind::A, SetKind::B, SetKind::C, SetKind::BStar, SetKind::CStar, SetKind::DStar] {
            match self.family(kind) {
                None if kind.required_level() <= self.level => out.push(Violation::MissingSets { set: kind }),
                Some(family) => {
                    for (i, set) in family.iter().enumerate() {
                        if let Some(&e) = set.iter().find(|&&x| x >= n) {
                            out.push(Violation::OutOfRange {
                                index: i,
                                set: kind,
                                element: e,
                            });
                        }
                    }
                }
                None => {}
            }
        }
        for i in 0..n {
            if self.a[i].binary_search(&i).is_err() {
                out.push(Violation::SelfMembership { index: i });
            }
        }
        let mut chain = vec![(SetKind::A, SetKind::B, Level::Ld2), (SetKind::B, SetKind::C, Level::Ld3)];
        if self.level >= Level::Ld4Star {
            chain.extend([
                (SetKind::B, SetKind::BStar, Level::Ld4Star),
                (SetKind::BStar, SetKind::CStar, Level::Ld4Star),
                (SetKind::CStar, SetKind::DStar, Level::Ld4Star),
            ]);
        }
        for (inner, outer, level) in chain {
            if self.level < level {
                continue;
            }
            let (Some(fi), Some(fo)) = (self.family(inner), self.family(outer)) else {
                continue;
            };
            for i in 0..n {
                if let Some(missing) = first_missing(&fi[i], &fo[i]) {
                    out.push(Violation::Nesting {
                        index: i,
                        inner,
                        outer,
                        missing,
                    });
                }
            }
        }
        out
    }

    pub fn to_document(&self) -> SystemDocument {
        let map = |family: &[Vec<usize>]| -> BTreeMap<String, Vec<String>> {
            family
                .iter()
                .enumerate()
                .map(|(i, set)| {
                    (
                        self.labels[i].clone(),
                        set.iter().map(|&j| self.labels[j].clone()).collect(),
                    )
                })
                .collect()
        };
        SystemDocument {
            level: self.level,
            indices: self.labels.clone(),
            a: map(&self.a),
            b: self.b.as_deref().map(map),
            c: self.c.as_deref().map(map),
            bstar: self.bstar.as_deref().map(map),
            cstar: self.cstar.as_deref().map(map),
            dstar: self.dstar.as_deref().map(map),
        }
    }

    pub fn from_document(doc: &SystemDocument) -> Result<Self> {
        let lookup: HashMap<&str, usize> = doc.indices.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        if lookup.len() != doc.indices.len() {
            return Err(Error::Structural("duplicate index labels".into()));
        }
        let resolve = |name: &str, map: &BTreeMap<String, Vec<String>>| -> Result<Vec<Vec<usize>>> {
            let mut sets = vec![Vec::new(); doc.indices.len()];
            for (key, members) in map {
                let i = *lookup
                    .get(key.as_str())
                    .ok_or_else(|| Error::Structural(format!("{name} has unknown index `{key}`")))?;
                for m in members {
                    let j = *lookup
                        .get(m.as_str())
                        .ok_or_else(|| Error::Structural(format!("{name}_{key} has unknown member `{m}`")))?;
                    sets[i].push(j);
                }
            }
            Ok(sets)
        };
        let opt = |name: &str, map: &Option<BTreeMap<String, Vec<String>>>| -> Result<Option<Vec<Vec<usize>>>> {
            map.as_ref().map(|m| resolve(name, m)).transpose()
        };
        Self::from_sets(
            doc.indices.clone(),
            doc.level,
            SetFamilies {
                a: resolve("A", &doc.a)?,
                b: opt("B", &doc.b)?,
                c: opt("C", &doc.c)?,
                bstar: opt("Bstar", &doc.bstar)?,
                cstar: opt("Cstar", &doc.cstar)?,
                dstar: opt("Dstar", &doc.dstar)?,
            },
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }
}

/// JSON form of a system: `{"level": "...", "indices": [...], "A": {i: [...]}, ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemDocument {
    pub level: Level,
    pub indices: Vec<String>,
    #[serde(rename = "A")]
    pub a: BTreeMap<String, Vec<String>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<BTreeMap<String, Vec<String>>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<BTreeMap<String, Vec<String>>>,
    #[serde(rename = "Bstar", default, skip_serializing_if = "Option::is_none")]
    pub bstar: Option<BTreeMap<String, Vec<String>>>,
    #[serde(rename = "Cstar", default, skip_serializing_if = "Option::is_none")]
    pub cstar: Option<BTreeMap<String, Vec<String>>>,
    #[serde(rename = "Dstar", default, skip_serializing_if = "Option::is_none")]
    pub dstar: Option<BTreeMap<String, Vec<String>>>,
}

/// Parsed edge-list text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    pub vertices: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

/// Parse `"u v"` lines. A line with a single token declares an isolated
/// vertex; blank lines and `#` comments are skipped. Vertices are numbered
/// in order of first appearance.
pub fn parse_edge_list(text: &str) -> Result<EdgeList> {
    let mut vertices = Vec::new();
    let mut lookup: HashMap<String, usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut intern = |name: &str, vertices: &mut Vec<String>| -> usize {
        *lookup.entry(name.to_string()).or_insert_with(|| {
            vertices.push(name.to_string());
            vertices.len() - 1
        })
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [v] => {
                intern(v, &mut vertices);
            }
            [u, v] => {
                let u = intern(u, &mut vertices);
                let v = intern(v, &mut vertices);
                edges.push((u, v));
            }
            _ => {
                return Err(Error::Structural(format!(
                    "edge list line {}: expected `u v`, got `{line}`",
                    lineno + 1
                )))
            }
        }
    }
    Ok(EdgeList { vertices, edges })
}

/// A d-dimensional lattice box with row-major (last axis fastest) indexing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    extents: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Lattice {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::Structural("lattice needs at least one dimension".into()));
        }
        if let Some(axis) = extents.iter().position(|&e| e == 0) {
            return Err(Error::Structural(format!("lattice dimension {axis} has zero size")));
        }
        let mut strides = vec![1; extents.len()];
        for k in (0..extents.len() - 1).rev() {
            strides[k] = strides[k + 1] * extents[k + 1];
        }
        let len = extents.iter().product();
        Ok(Lattice {
            extents: extents.to_vec(),
            strides,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn coords(&self, mut i: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|&s| {
                let c = i / s;
                i %= s;
                c
            })
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len)
            .map(|i| {
                self.coords(i)
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect()
    }

    /// Sorted indices of the box `∏_k [lo_k, hi_k]` (inclusive, already clipped).
    pub fn box_indices(&self, lo: &[usize], hi: &[usize]) -> Vec<usize> {
        let mut out = vec![0usize];
        for k in 0..self.dim() {
            let mut next = Vec::with_capacity(out.len() * (hi[k] - lo[k] + 1));
            for &base in &out {
                for c in lo[k]..=hi[k] {
                    next.push(base + c * self.strides[k]);
                }
            }
            out = next;
        }
        out
    }

    /// Sup-metric ball of radius `r` around `i`, clipped to the box.
    pub fn ball(&self, i: usize, r: usize) -> Vec<usize> {
        let c = self.coords(i);
        let lo: Vec<usize> = c.iter().map(|&x| x.saturating_sub(r)).collect();
        let hi: Vec<usize> = c.iter().zip(&self.extents).map(|(&x, &e)| (x + r).min(e - 1)).collect();
        self.box_indices(&lo, &hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    fn cycle(n: usize) -> NeighborhoodSystem {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        NeighborhoodSystem::from_adjacency(labels(n), &edges).unwrap()
    }

    fn path(n: usize) -> NeighborhoodSystem {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        NeighborhoodSystem::from_adjacency(labels(n), &edges).unwrap()
    }

    #[test]
    fn adjacency_without_edges_is_independence() {
        let sys = NeighborhoodSystem::from_adjacency(labels(3), &[]).unwrap();
        assert_eq!(sys.level(), Level::Ld1);
        for i in 0..3 {
            assert_eq!(sys.a_sets()[i], vec![i]);
        }
    }

    #[test]
    fn adjacency_path_and_cycle() {
        let p = path(3);
        assert_eq!(p.a_sets()[1], vec![0, 1, 2]);
        assert_eq!(p.a_sets()[0], vec![0, 1]);
        let c = cycle(9);
        assert!(c.a_sets().iter().all(|a| a.len() == 3));
    }

    #[test]
    fn adjacency_rejects_unknown_vertex() {
        let err = NeighborhoodSystem::from_adjacency(labels(3), &[(0, 5)]).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
        let err = NeighborhoodSystem::from_labeled_edges(labels(3), &[("1".into(), "9".into())]).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn lattice_independence() {
        let sys = NeighborhoodSystem::lattice_m_dependent(&[5], 0).unwrap();
        for i in 0..5 {
            assert_eq!(sys.a_sets()[i], vec![i]);
            assert_eq!(sys.sets(SetKind::DStar).unwrap()[i], vec![i]);
        }
    }

    #[test]
    fn lattice_interior_cardinalities() {
        let sys = NeighborhoodSystem::lattice_m_dependent(&[100], 1).unwrap();
        let i = 50;
        assert_eq!(sys.a_sets()[i].len(), 3);
        assert_eq!(sys.sets(SetKind::B).unwrap()[i].len(), 5);
        assert_eq!(sys.sets(SetKind::C).unwrap()[i].len(), 7);
        assert_eq!(sys.sets(SetKind::DStar).unwrap()[i].len(), 19);
        // clipped at the boundary
        assert_eq!(sys.a_sets()[0], vec![0, 1]);

        let sys = NeighborhoodSystem::lattice_m_dependent(&[20, 20], 1).unwrap();
        let i = Lattice::new(&[20, 20]).unwrap().index(&[10, 10]);
        assert_eq!(sys.a_sets()[i].len(), 9);
        assert_eq!(sys.sets(SetKind::C).unwrap()[i].len(), 49);
    }

    #[test]
    fn lattice_rejects_zero_extent() {
        assert!(matches!(
            NeighborhoodSystem::lattice_m_dependent(&[4, 0], 1),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn closure_of_singletons_is_singletons() {
        let sys = NeighborhoodSystem::from_adjacency(labels(4), &[]).unwrap().closure_extend().unwrap();
        for kind in [SetKind::B, SetKind::C, SetKind::BStar, SetKind::CStar, SetKind::DStar] {
            for i in 0..4 {
                assert_eq!(sys.sets(kind).unwrap()[i], vec![i]);
            }
        }
    }

    #[test]
    fn closure_radii_on_long_path() {
        let sys = path(41).closure_extend().unwrap();
        let i = 20;
        let radius = |kind| {
            let s = &sys.sets(kind).unwrap()[i];
            assert_eq!(*s, ((i - (s.len() - 1) / 2)..=(i + (s.len() - 1) / 2)).collect::<Vec<_>>());
            (s.len() - 1) / 2
        };
        assert_eq!(radius(SetKind::B), 2);
        assert_eq!(radius(SetKind::C), 3);
        assert_eq!(radius(SetKind::BStar), 3);
        assert_eq!(radius(SetKind::CStar), 5);
        assert_eq!(radius(SetKind::DStar), 7);
    }

    #[test]
    fn closure_on_nine_cycle_saturates() {
        let sys = cycle(9).closure_extend().unwrap();
        assert!(sys.sets(SetKind::DStar).unwrap().iter().all(|d| d.len() == 9));
        assert!(sys.validate().is_empty());
    }

    #[test]
    fn closure_requires_self_membership() {
        let sys = NeighborhoodSystem::from_sets(
            labels(2),
            Level::Ld1,
            SetFamilies {
                a: vec![vec![1], vec![1]],
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(sys.closure_extend(), Err(Error::Structural(_))));
    }

    #[test]
    fn kappa_independence() {
        let sys = NeighborhoodSystem::lattice_m_dependent(&[6], 0).unwrap();
        let k = sys.kappa_stats();
        assert_eq!(k.kappa_nb, Some(1));
        assert_eq!(k.kappa_nc, Some(1));
        assert_eq!(k.kappa_dstar, Some(1));
        assert_eq!(k.kappa1, Some(1));
        assert_eq!(k.kappa2, Some(1));
    }

    #[test]
    fn kappa_one_dimensional_lattice() {
        let k = NeighborhoodSystem::lattice_m_dependent(&[200], 1).unwrap().kappa_stats();
        assert_eq!(k.kappa_nc, Some(11));
        assert_eq!(k.kappa_dstar, Some(19));
        assert_eq!(k.kappa_nb, Some(9));
        assert_eq!(k.kappa1, Some(7));
    }

    #[test]
    fn kappa_capability_errors() {
        let k = path(5).kappa_stats();
        assert!(matches!(k.nb(), Err(Error::Capability(_))));
        assert!(matches!(k.dstar(), Err(Error::Capability(_))));
        assert!(matches!(path(5).neighbor_pairs_b(), Err(Error::Capability(_))));
    }

    #[test]
    fn pairs_on_independence_are_diagonal() {
        let sys = NeighborhoodSystem::lattice_m_dependent(&[7], 0).unwrap();
        assert_eq!(sys.neighbor_pairs_b().unwrap(), (0..7).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn pairs_on_lattice_and_cycle() {
        let sys = NeighborhoodSystem::lattice_m_dependent(&[30], 1).unwrap();
        let pairs = sys.neighbor_pairs_b().unwrap();
        let expected: Vec<_> = (0..30usize)
            .flat_map(|i| (0..30usize).filter(move |&j| i.abs_diff(j) <= 4).map(move |j| (i, j)))
            .collect();
        assert_eq!(pairs, expected);

        let c9 = cycle(9).closure_extend().unwrap();
        assert_eq!(c9.neighbor_pairs_b().unwrap().len(), 81);
    }

    #[test]
    fn validate_reports_defects() {
        let sys = NeighborhoodSystem::lattice_m_dependent(&[5], 1).unwrap();
        assert!(sys.validate().is_empty());

        let mut b: Vec<Vec<usize>> = sys.sets(SetKind::B).unwrap().to_vec();
        b[2].retain(|&x| x != 1);
        let broken = NeighborhoodSystem::from_sets(
            sys.labels().to_vec(),
            Level::Ld2,
            SetFamilies {
                a: sys.a_sets().to_vec(),
                b: Some(b),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(
            broken.validate(),
            vec![Violation::Nesting {
                index: 2,
                inner: SetKind::A,
                outer: SetKind::B,
                missing: 1
            }]
        );

        let no_self = NeighborhoodSystem::from_sets(
            labels(2),
            Level::Ld1,
            SetFamilies {
                a: vec![vec![0], vec![0]],
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(no_self.validate(), vec![Violation::SelfMembership { index: 1 }]);
    }

    #[test]
    fn json_round_trip_preserves_system() {
        let sys = cycle(6).closure_extend().unwrap();
        let back = NeighborhoodSystem::from_json(&sys.to_json().unwrap()).unwrap();
        assert_eq!(back, sys);
        let doc: serde_json::Value = serde_json::from_str(&sys.to_json().unwrap()).unwrap();
        assert_eq!(doc["level"], "LD4*");
        assert_eq!(doc["A"]["1"], serde_json::json!(["1", "2", "6"]));
    }

    #[test]
    fn edge_list_parsing() {
        let el = parse_edge_list("# graph\na b\nb c\n\nd\n").unwrap();
        assert_eq!(el.vertices, vec!["a", "b", "c", "d"]);
        assert_eq!(el.edges, vec![(0, 1), (1, 2)]);
        assert!(parse_edge_list("a b c\n").is_err());
    }
}
