//! Deterministic replicate-parallel Monte Carlo.
//!
//! Every replicate draws from its own substream, selected by the split
//! function [`substream`] from `(master seed, stream id, replicate index)`.
//! Replicates are grouped into fixed-size chunks that do not depend on the
//! number of worker threads; chunk results are merged by a pairwise tree in
//! chunk order. The result is therefore bit-identical for any thread count.

use std::fmt;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Replicates per chunk. Fixed so that results never depend on the worker count.
pub const CHUNK: u64 = 512;

/// Stream ids used across the crate. Distinct ids give independent substreams.
pub mod stream {
    pub const PRIMARY: u64 = 1;
    /// Independent copy `X*` of the whole field.
    pub const COPY: u64 = 2;
    pub const R1_PHASE1: u64 = 3;
    pub const R1_PHASE2: u64 = 4;
    pub const MOMENTS: u64 = 5;
    pub const DISTANCE: u64 = 6;
    pub const SIGMA: u64 = 7;
    pub const PILOT: u64 = 8;
    pub const INTERVALS: u64 = 9;
    pub const SAMPLE: u64 = 10;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Key of the `(master, stream)` pair: `splitmix64(master ⊕ splitmix64(stream))`.
pub fn stream_key(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// The split function. A ChaCha8 generator keyed by [`stream_key`], positioned
/// on ChaCha stream number `replicate`.
pub fn substream(master: u64, stream: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_key(master, stream));
    rng.set_stream(replicate);
    rng
}

/// Derive a child master seed, e.g. for one rung of a size ladder.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    splitmix64(stream_key(master, 0xD1B5_4A32_D192_ED03) ^ splitmix64(label))
}

/// Chunks evaluated together before their results are folded into the
/// running total; bounds peak memory for large per-chunk accumulators.
const WAVE: u64 = 16;

/// Run `work` over fixed chunks of `0..replicates` in parallel and merge the
/// chunk results: pairwise in chunk order within each wave of [`WAVE`]
/// chunks, then wave by wave from the left.
pub fn chunked_reduce<A, W, M>(replicates: u64, work: W, merge: M) -> Option<A>
where
    A: Send,
    W: Fn(Range<u64>) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let chunks = replicates.div_ceil(CHUNK);
    let mut total: Option<A> = None;
    let mut start = 0;
    while start < chunks {
        let end = (start + WAVE).min(chunks);
        let parts: Vec<A> = (start..end)
            .into_par_iter()
            .map(|c| work(c * CHUNK..((c + 1) * CHUNK).min(replicates)))
            .collect();
        if let Some(wave) = tree_reduce(parts, &merge) {
            total = Some(match total {
                Some(t) => merge(t, wave),
                None => wave,
            });
        }
        start = end;
    }
    total
}

/// Run `f` for every replicate and collect outputs in replicate order.
pub fn collect_ordered<T, F>(replicates: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let chunks = replicates.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(replicates)).map(&f).collect())
        .collect();
    parts.into_iter().flatten().collect()
}

fn tree_reduce<A, M: Fn(A, A) -> A>(mut parts: Vec<A>, merge: &M) -> Option<A> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

/// How a number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactEnumeration,
    MonteCarlo,
    /// Pure arithmetic on other estimates.
    Derived,
}

/// A value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub method: Method,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            se: 0.0,
            method: Method::ExactEnumeration,
        }
    }

    pub fn mc(value: f64, se: f64) -> Self {
        Estimate {
            value,
            se,
            method: Method::MonteCarlo,
        }
    }

    pub fn derived(value: f64, se: f64) -> Self {
        Estimate {
            value,
            se,
            method: Method::Derived,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.method == Method::ExactEnumeration
    }

    /// `|self − target| ≤ k·se` with a floor for floating-point rounding.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se + 1e-12 * (1.0 + target.abs())
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.se == 0.0 {
            write!(f, "{:.6}", self.value)
        } else {
            write!(f, "{:.6} ± {:.2e}", self.value, self.se)
        }
    }
}

/// Running first and second moments of a scalar, mergeable across chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: Moments) -> Moments {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::mc(self.mean(), self.se())
    }
}

/// Element-wise [`Moments`] over a vector of quantities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VecMoments {
    pub count: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl VecMoments {
    pub fn new(len: usize) -> Self {
        VecMoments {
            count: 0,
            sum: vec![0.0; len],
            sum_sq: vec![0.0; len],
        }
    }

    pub fn push(&mut self, xs: impl IntoIterator<Item = f64>) {
        self.count += 1;
        for ((s, q), x) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(xs) {
            *s += x;
            *q += x * x;
        }
    }

    pub fn merge(mut self, other: VecMoments) -> VecMoments {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *a += b;
        }
        self
    }

    pub fn get(&self, k: usize) -> Moments {
        Moments {
            count: self.count,
            sum: self.sum[k],
            sum_sq: self.sum_sq[k],
        }
    }

    pub fn means(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }
}
