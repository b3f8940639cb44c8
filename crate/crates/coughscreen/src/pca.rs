//! Principal component analysis by deflated power iteration.
//!
//! Only a handful of components are ever needed (the scatter plots use two),
//! so the implementation multiplies by the sample covariance implicitly —
//! `cov(v) = Xcᵀ(Xc·v)/(n−1)` over the centered data — and deflates by
//! re-orthogonalizing against already extracted components each step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const POWER_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("need at least {need} samples for {components} component(s), got {have}")]
    TooFewSamples {
        have: usize,
        need: usize,
        components: usize,
    },
    #[error("component {component} did not converge after {iterations} iterations")]
    NoConvergence { component: usize, iterations: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A fitted projection: `mean` of the training data, orthonormal
/// `components` rows, and the variance captured by each (non-increasing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `Xcᵀ(Xc·v)/(n−1)` without materializing the covariance matrix.
fn covariance_times(centered: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut out = vec![0.0; d];
    for row in centered {
        let y = dot(row, v);
        for (o, &r) in out.iter_mut().zip(row) {
            *o += y * r;
        }
    }
    let scale = 1.0 / (centered.len() - 1) as f64;
    out.iter_mut().for_each(|o| *o *= scale);
    out
}

fn subtract_projections(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        for (vi, &bi) in v.iter_mut().zip(b) {
            *vi -= c * bi;
        }
    }
}

/// Flip the sign so the largest-magnitude entry is positive (first such
/// entry on exact magnitude ties), making components comparable across runs.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// The canonical basis vector least represented by `basis`, orthonormalized
/// against it. Used when the data has no variance left to direct the next
/// component; the choice is arbitrary but must be deterministic.
fn residual_basis_vector(d: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        subtract_projections(&mut e, basis);
        let n = norm(&e);
        if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
            best = Some((n, e));
        }
    }
    let (n, mut e) = best.expect("d > 0");
    e.iter_mut().for_each(|x| *x /= n);
    e
}

/// Fit the top `n_components` principal components of `data` (rows are
/// samples). Requires `n ≥ 2` and `n_components ≤ min(n − 1, d)`.
pub fn fit_pca(data: &[Vec<f64>], n_components: usize) -> Result<PcaModel, PcaError> {
    let n = data.len();
    let d = data.first().map_or(0, |r| r.len());
    for row in data {
        if row.len() != d {
            return Err(PcaError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
    }
    if n_components == 0 || n < 2 || n_components > (n - 1).min(d) {
        return Err(PcaError::TooFewSamples {
            have: n,
            need: n_components + 1,
            components: n_components,
        });
    }

    let mut mean = vec![0.0; d];
    for row in data {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(&x, &m)| x - m).collect())
        .collect();

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(n_components);
    let mut explained_variance: Vec<f64> = Vec::with_capacity(n_components);
    for k in 0..n_components {
        // Deterministic start: a fixed full-support direction, orthogonalized
        // against what we already extracted.
        let mut v: Vec<f64> = (0..d)
            .map(|i| 1.0 + (i as f64 + 1.0) / (d as f64 + 1.0))
            .collect();
        subtract_projections(&mut v, &components);
        let nv = norm(&v);
        if nv > 1e-12 {
            v.iter_mut().for_each(|x| *x /= nv);
        } else {
            v = residual_basis_vector(d, &components);
        }

        let scale = explained_variance.first().copied().unwrap_or(1.0).max(1.0);
        let mut converged = false;
        for _ in 0..MAX_ITERATIONS {
            let mut w = covariance_times(&centered, &v);
            subtract_projections(&mut w, &components);
            let nw = norm(&w);
            if nw <= 1e-14 * scale {
                // No variance beyond the extracted subspace: finish with a
                // deterministic orthonormal filler and eigenvalue 0.
                v = residual_basis_vector(d, &components);
                converged = true;
                break;
            }
            w.iter_mut().for_each(|x| *x /= nw);
            let delta: f64 = v
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            v = w;
            if delta < POWER_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(PcaError::NoConvergence {
                component: k,
                iterations: MAX_ITERATIONS,
            });
        }
        fix_sign(&mut v);
        // Rayleigh quotient of the unit component: variance along it.
        let lambda = dot(&covariance_times(&centered, &v), &v).max(0.0);
        components.push(v);
        explained_variance.push(lambda);
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// `(v − mean) · componentsᵀ` for one vector.
    pub fn project_one(&self, v: &[f64]) -> Result<Vec<f64>, PcaError> {
        if v.len() != self.mean.len() {
            return Err(PcaError::DimensionMismatch {
                expected: self.mean.len(),
                got: v.len(),
            });
        }
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(&x, &m)| x - m).collect();
        Ok(self.components.iter().map(|c| dot(&centered, c)).collect())
    }
}

/// Project many vectors at once; see [`PcaModel::project_one`].
pub fn project(model: &PcaModel, vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PcaError> {
    vectors.iter().map(|v| model.project_one(v)).collect()
}
