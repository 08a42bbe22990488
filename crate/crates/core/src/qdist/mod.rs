//! Exact distribution of Cochran's Q under the random-effects model.
//!
//! `Q = Y' A Y` with `A = V - v v' / v_+`. Standardising `Y` by
//! `Sigma = diag(sigma2_k + tau2)` turns Q into `Z' S Z`,
//! `S = Sigma^(1/2) A Sigma^(1/2)`, so Q is distributed as
//! `sum_k lambda_k chi2_k(1)` over the eigenvalues of `S`. `S` has rank
//! `K - 1`; its null eigenvalue is dropped.

mod farebrother;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

pub use farebrother::{wchisq_cdf, AccuracyParams, CdfValue};

/// Relative threshold below which an eigenvalue of `S` counts as zero.
pub const DROP_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSpectrum {
    /// Retained eigenvalues, sorted descending.
    pub lambdas: Vec<f64>,
    pub rank: usize,
    /// Sum of all `K` eigenvalues before dropping.
    pub trace: f64,
}

/// Builds `S(tau2)` for the given within-study variances.
pub fn s_matrix(sigma2: &[f64], tau2: f64) -> DMatrix<f64> {
    let k = sigma2.len();
    let v: Vec<f64> = sigma2.iter().map(|s| 1.0 / s).collect();
    let vsum: f64 = v.iter().sum();
    let root: Vec<f64> = sigma2.iter().map(|s| (s + tau2).sqrt()).collect();
    DMatrix::from_fn(k, k, |i, j| {
        let a = if i == j { v[i] } else { 0.0 } - v[i] * v[j] / vsum;
        root[i] * a * root[j]
    })
}

pub fn eigen_spectrum(sigma2: &[f64], tau2: f64) -> Result<EigenSpectrum> {
    if sigma2.len() < 2 {
        return Err(Error::TooFewStudies {
            needed: 2,
            got: sigma2.len(),
        });
    }
    if sigma2.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::invalid("within-study variances must be positive and finite"));
    }
    if !(tau2.is_finite() && tau2 >= 0.0) {
        return Err(Error::invalid(format!("tau2 must be nonnegative, got {tau2}")));
    }
    let eig = SymmetricEigen::new(s_matrix(sigma2, tau2));
    let mut all: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let trace: f64 = all.iter().sum();
    all.sort_by(|a, b| b.total_cmp(a));
    let cutoff = DROP_THRESHOLD * all[0];
    let lambdas: Vec<f64> = all.iter().copied().filter(|l| *l >= cutoff).collect();
    let zeros = all.len() - lambdas.len();
    if zeros != 1 {
        return Err(Error::DegenerateSpectrum { zeros });
    }
    Ok(EigenSpectrum {
        rank: lambdas.len(),
        lambdas,
        trace,
    })
}

/// `P(Q <= q)` when the heterogeneity variance is `tau2`.
pub fn q_cdf(q: f64, sigma2: &[f64], tau2: f64, acc: &AccuracyParams) -> Result<CdfValue> {
    let spectrum = eigen_spectrum(sigma2, tau2)?;
    wchisq_cdf(&spectrum.lambdas, q, acc)
}
