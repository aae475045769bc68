//! Comparison methods: unconstrained Bayesian IRT and PCA.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::anchors::AnchorSelection;
use crate::error::{IrtmError, Result};
use crate::gibbs::{run_sampler, SamplerOptions};
use crate::model::{ConstraintSet, Hyperparameters, PosteriorDraws, Response, ResponseMatrix};

/// The sampler with every code NA, Σ fixed at I and no anchors.
pub fn fit_unconstrained_irt(data: &ResponseMatrix, d: usize, hyper: &Hyperparameters) -> Result<PosteriorDraws> {
    let constraints = ConstraintSet::unconstrained(data.item_ids().to_vec(), d)?;
    let mut hyper = hyper.clone();
    hyper.correlated_factors = false;
    let opts = SamplerOptions {
        anchors: AnchorSelection::None,
        force: true,
    };
    run_sampler(data, &constraints, &hyper, &opts)
}

#[derive(Debug, Clone)]
pub struct PcaFit {
    /// N×d.
    pub scores: Array2<f64>,
    /// K×d, orthonormal columns.
    pub components: Array2<f64>,
    /// All K eigenvalues of the covariance, descending.
    pub eigenvalues: Array1<f64>,
}

impl PcaFit {
    pub fn explained_fraction(&self, j: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        if total > 0.0 {
            self.eigenvalues[j].max(0.0) / total
        } else {
            0.0
        }
    }
}

/// PCA on the mean-imputed, column-centered 0/1 matrix.
pub fn fit_pca(data: &ResponseMatrix, d: usize) -> Result<PcaFit> {
    let (n, k) = (data.n_units(), data.n_items());
    if d == 0 || k < d {
        return Err(IrtmError::Domain(format!("PCA needs 1 <= d <= K, got d={d}, K={k}")));
    }
    let mut x = Array2::<f64>::zeros((n, k));
    for kk in 0..k {
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..n {
            match data.get(i, kk) {
                Response::Yes => {
                    sum += 1.0;
                    count += 1;
                }
                Response::No => count += 1,
                Response::Missing => {}
            }
        }
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        for i in 0..n {
            x[[i, kk]] = match data.get(i, kk) {
                Response::Yes => 1.0 - mean,
                Response::No => -mean,
                Response::Missing => 0.0,
            };
        }
    }
    let denom = (n.max(2) - 1) as f64;
    let cov = x.t().dot(&x) / denom;
    let eig = SymmetricEigen::new(DMatrix::from_fn(k, k, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues = Array1::from_iter(order.iter().map(|&o| eig.eigenvalues[o]));
    let mut components = Array2::<f64>::zeros((k, d));
    for (j, &o) in order.iter().take(d).enumerate() {
        let col = eig.eigenvectors.column(o);
        let pivot = (0..k).fold(0, |best, r| if col[r].abs() > col[best].abs() { r } else { best });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..k {
            components[[r, j]] = sign * col[r];
        }
    }
    let scores = x.dot(&components);
    Ok(PcaFit {
        scores,
        components,
        eigenvalues,
    })
}
