//! Fields that are sparse linear combinations of i.i.d. primitive noise:
//! `X_i = s · Σ_k w_ik ε_k`.
//!
//! i.i.d. fields, lattice moving sums, the Erickson sequence and the random
//! sparse models used by the verification suites are all of this form.

use rand::Rng;

use super::BaseDistribution;
use crate::error::{Error, Result};
use crate::neighborhoods::{Lattice, Level, NeighborhoodSystem, SetFamilies};

#[derive(Debug, Clone)]
pub struct LinearField {
    pub(crate) base: BaseDistribution,
    pub(crate) primitives: usize,
    /// Unscaled weights, sorted by primitive id.
    pub(crate) rows: Vec<Vec<(usize, f64)>>,
    pub(crate) scale: f64,
    /// Nonzero unscaled column sums `c_k = Σ_i w_ik`; `W = s Σ_k c_k ε_k`.
    column_sums: Vec<(usize, f64)>,
    /// Every nonzero column sum is exactly 1, so Rademacher `W` is a popcount.
    unit_columns: bool,
}

impl LinearField {
    pub(crate) fn new(base: BaseDistribution, primitives: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut col = vec![0.0; primitives];
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(k, _)| k);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Structural(format!("row {i} repeats primitive {}", w[0].0)));
                }
            }
            for &(k, w) in row.iter() {
                if k >= primitives {
                    return Err(Error::Structural(format!("row {i} uses primitive {k} of {primitives}")));
                }
                if !w.is_finite() {
                    return Err(Error::InvalidArgument(format!("row {i} has non-finite weight")));
                }
                col[k] += w;
            }
        }
        // Var(W) = Σ_k c_k² for unit-variance primitives
        let variance: f64 = col.iter().map(|c| c * c).sum();
        if variance <= 0.0 {
            return Err(Error::Degenerate("Var(W) = 0 before standardization".into()));
        }
        let column_sums: Vec<(usize, f64)> = col.iter().copied().enumerate().filter(|&(_, c)| c != 0.0).collect();
        let unit_columns = column_sums.iter().all(|&(_, c)| c == 1.0);
        Ok(LinearField {
            base,
            primitives,
            rows,
            scale: 1.0 / variance.sqrt(),
            column_sums,
            unit_columns,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn primitives(&self) -> usize {
        self.primitives
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub(crate) fn fill(&self, rng: &mut impl Rng, noise: &mut Vec<f64>, out: &mut [f64]) {
        noise.clear();
        self.base.fill(rng, self.primitives, noise);
        self.combine(noise, out);
    }

    pub(crate) fn combine(&self, noise: &[f64], out: &mut [f64]) {
        for (x, row) in out.iter_mut().zip(&self.rows) {
            let mut acc = 0.0;
            for &(k, w) in row {
                acc += w * noise[k];
            }
            *x = self.scale * acc;
        }
    }

    pub(crate) fn draw_w(&self, rng: &mut impl Rng, noise: &mut Vec<f64>) -> f64 {
        if self.unit_columns && self.base == BaseDistribution::Rademacher {
            let k = self.column_sums.len();
            let mut plus = 0u64;
            let mut left = k;
            while left > 0 {
                let word: u64 = rng.random();
                let take = left.min(64);
                let bits = if take == 64 { word } else { word & ((1u64 << take) - 1) };
                plus += u64::from(bits.count_ones());
                left -= take;
            }
            return self.scale * (2.0 * plus as f64 - k as f64);
        }
        noise.clear();
        self.base.fill(rng, self.column_sums.len(), noise);
        let acc: f64 = self.column_sums.iter().zip(noise.iter()).map(|(&(_, c), e)| c * e).sum();
        self.scale * acc
    }

    pub(crate) fn covariance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.rows[i], &self.rows[j]);
        let (mut p, mut q, mut acc) = (0, 0, 0.0);
        while p < a.len() && q < b.len() {
            match a[p].0.cmp(&b[q].0) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[p].1 * b[q].1;
                    p += 1;
                    q += 1;
                }
            }
        }
        self.scale * self.scale * acc
    }

    pub(crate) fn support(&self, i: usize) -> Vec<usize> {
        self.rows[i].iter().map(|&(k, _)| k).collect()
    }

    /// Number of equally likely primitive sign patterns, for Rademacher noise.
    pub(crate) fn outcome_count(&self) -> Option<u64> {
        (self.base == BaseDistribution::Rademacher && self.primitives < 64).then(|| 1u64 << self.primitives)
    }

    pub(crate) fn for_each_outcome(&self, mut f: impl FnMut(f64, &[f64])) {
        let count = 1u64 << self.primitives;
        let p = 1.0 / count as f64;
        let mut noise = vec![0.0; self.primitives];
        let mut out = vec![0.0; self.len()];
        for pattern in 0..count {
            for (k, e) in noise.iter_mut().enumerate() {
                *e = if pattern >> k & 1 == 1 { 1.0 } else { -1.0 };
            }
            self.combine(&noise, &mut out);
            f(p, &out);
        }
    }

    /// `A_i = {j : supp_i ∩ supp_j ≠ ∅} ∪ {i}`, closed to LD4*.
    ///
    /// Because the A relation is exactly noise overlap, every union-closure
    /// set is a valid decoupling set.
    pub(crate) fn overlap_system(&self, labels: Vec<String>) -> Result<NeighborhoodSystem> {
        let n = self.len();
        let mut users = vec![Vec::new(); self.primitives];
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, _) in row {
                users[k].push(i);
            }
        }
        let a: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut s = vec![i];
                for &(k, _) in &self.rows[i] {
                    s.extend_from_slice(&users[k]);
                }
                s
            })
            .collect();
        NeighborhoodSystem::from_sets(
            labels,
            Level::Ld1,
            SetFamilies {
                a,
                ..Default::default()
            },
        )?
        .closure_extend()
    }
}

/// One-sided moving-sum windows `[c, c+m]` per axis, clipped to the box.
/// Noise lives on the same box as the field.
pub(crate) fn moving_sum_rows(lattice: &Lattice, m: usize) -> Vec<Vec<(usize, f64)>> {
    (0..lattice.len())
        .map(|i| {
            let c = lattice.coords(i);
            let hi: Vec<usize> = c
                .iter()
                .zip(lattice.extents())
                .map(|(&x, &e)| (x + m).min(e - 1))
                .collect();
            lattice.box_indices(&c, &hi).into_iter().map(|k| (k, 1.0)).collect()
        })
        .collect()
}

/// Copy pattern of the Erickson sequence: entry `k` is `true` when
/// `X_{k+1} = −X_k` (1-based), i.e. the variable at 0-based position `k`
/// is the negated copy of its predecessor.
///
/// `B_k²` stays an integer (the number of unpaired fresh variables), so the
/// comparison `B_k² > √k` is done exactly as `B_k⁴ > k`.
pub fn erickson_pattern(n: usize) -> Vec<bool> {
    let mut copy = vec![false; n];
    let mut b2: u64 = 0;
    for pos in 0..n {
        let k = pos as u64; // number of variables already placed
        if k >= 2 && b2 * b2 > k {
            copy[pos] = true;
            b2 -= 1;
        } else {
            b2 += 1;
        }
    }
    copy
}

/// `B_k²` for `k = 1..=n`.
pub fn erickson_variances(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut b2: u64 = 0;
    for pos in 0..n {
        let k = pos as u64;
        if k >= 2 && b2 * b2 > k {
            b2 -= 1;
        } else {
            b2 += 1;
        }
        out.push(b2);
    }
    out
}
