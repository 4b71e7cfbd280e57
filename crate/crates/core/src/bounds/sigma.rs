//! `σ_i² = Var(W̃_i)` with `W̃_i = Σ_{j ∉ N(C_i)} X_j`, and `λ = 1 ∨ max_i 1/σ_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::neighborhoods::{Level, NeighborhoodSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaLambda {
    pub sigma_sq: Vec<f64>,
    pub lambda: f64,
}

/// Exact `σ_i²` from the covariance oracle.
///
/// With `U_i = Σ_{j∈N(C_i)} X_j`, `Var(W − U_i) = 1 − 2 Cov(W, U_i) + Var(U_i)`,
/// where `Cov(W, X_j) = Σ_{k∈A_j} Cov(X_j, X_k)` because `X_j` is
/// uncorrelated with everything outside `A_j`.
pub fn sigma_lambda(model: &FieldModel, system: &NeighborhoodSystem) -> Result<SigmaLambda> {
    system.require_level(Level::Ld3)?;
    let n = system.len();
    let a = system.a_sets();
    let cov = |i: usize, j: usize| {
        model
            .covariance(i, j)
            .ok_or_else(|| Error::Capability("model has no covariance oracle".into()))
    };
    let mut row = vec![0.0; n];
    for j in 0..n {
        for &k in &a[j] {
            row[j] += cov(j, k)?;
        }
    }
    let total: f64 = row.iter().sum();
    let neighbors = system.n_of_c()?;
    let mut inside = vec![false; n];
    let mut sigma_sq = Vec::with_capacity(n);
    for (i, set) in neighbors.iter().enumerate() {
        for &j in set {
            inside[j] = true;
        }
        let mut var_u = 0.0;
        for &j in set {
            for &k in &a[j] {
                if inside[k] {
                    var_u += cov(j, k)?;
                }
            }
        }
        let cov_wu: f64 = set.iter().map(|&j| row[j]).sum();
        let s = total - 2.0 * cov_wu + var_u;
        if s <= 1e-12 {
            return Err(Error::Degenerate(format!(
                "σ² = {s:.3e} at index {} (label {}): N(C_i) leaves no variance",
                i,
                system.labels()[i]
            )));
        }
        sigma_sq.push(s);
        for &j in set {
            inside[j] = false;
        }
    }
    let min = sigma_sq.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SigmaLambda {
        lambda: 1f64.max(1.0 / min.sqrt()),
        sigma_sq,
    })
}
