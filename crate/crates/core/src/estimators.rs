//! Heterogeneity and pooled-mean estimators.
//!
//! Within-study variances are treated as known constants throughout. All
//! functions are pure; [`HeterogeneityFit::compute`] bundles the values an
//! analysis report needs.

use serde::Serialize;

use crate::dist::chi2_sf;
use crate::error::{Error, Result};
use crate::model::StudySet;

pub const REML_TOL: f64 = 1e-10;
pub const REML_MAX_ITER: usize = 100;

fn weights(s: &StudySet, tau2: f64) -> Vec<f64> {
    s.sigma2().iter().map(|v| 1.0 / (v + tau2)).collect()
}

fn weighted_mean(y: &[f64], w: &[f64]) -> f64 {
    let wsum: f64 = w.iter().sum();
    y.iter().zip(w).map(|(y, w)| w * y).sum::<f64>() / wsum
}

/// Cochran's Q with inverse-variance weights.
pub fn cochran_q(s: &StudySet) -> f64 {
    let v = weights(s, 0.0);
    let ybar = weighted_mean(s.y(), &v);
    s.y()
        .iter()
        .zip(&v)
        .map(|(y, v)| v * (y - ybar).powi(2))
        .sum()
}

/// Untruncated DerSimonian-Laird estimate `(Q - (K-1)) / (S1 - S2/S1)`.
/// May be negative.
pub fn tau2_udl(s: &StudySet) -> Result<f64> {
    let k = s.len();
    if k < 2 {
        return Err(Error::TooFewStudies { needed: 2, got: k });
    }
    let (s1, s2) = s
        .sigma2()
        .iter()
        .fold((0.0, 0.0), |(a, b), v| (a + 1.0 / v, b + 1.0 / (v * v)));
    let denom = s1 - s2 / s1;
    if !(denom > 0.0) {
        return Err(Error::Numerical(format!(
            "DerSimonian-Laird denominator is not positive ({denom})"
        )));
    }
    Ok((cochran_q(s) - (k as f64 - 1.0)) / denom)
}

/// DerSimonian-Laird estimate, truncated at zero.
pub fn tau2_dl(s: &StudySet) -> Result<f64> {
    Ok(tau2_udl(s)?.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemlEstimate {
    pub tau2: f64,
    pub iterations: usize,
    /// False when `max_iter` was reached before successive iterates agreed
    /// to within `tol`; `tau2` is then the last iterate.
    pub converged: bool,
}

/// One step of the REML fixed-point map, before truncation at zero.
pub fn reml_update(s: &StudySet, tau2: f64) -> f64 {
    let w = weights(s, tau2);
    let wsum: f64 = w.iter().sum();
    let mu = weighted_mean(s.y(), &w);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((y, v), w) in s.y().iter().zip(s.sigma2()).zip(&w) {
        let w2 = w * w;
        num += w2 * ((y - mu).powi(2) + 1.0 / wsum - v);
        den += w2;
    }
    num / den
}

/// REML estimate of the heterogeneity variance by fixed-point iteration,
/// starting from the DerSimonian-Laird estimate. Each iterate is clamped
/// at zero.
pub fn tau2_reml(s: &StudySet, tol: f64, max_iter: usize) -> Result<RemlEstimate> {
    if s.len() < 2 {
        return Err(Error::TooFewStudies {
            needed: 2,
            got: s.len(),
        });
    }
    let mut tau2 = tau2_dl(s)?;
    for it in 1..=max_iter {
        let next = reml_update(s, tau2).max(0.0);
        if !next.is_finite() {
            return Err(Error::Numerical("REML iterate is not finite".into()));
        }
        let delta = (next - tau2).abs();
        tau2 = next;
        if delta <= tol {
            return Ok(RemlEstimate {
                tau2,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(RemlEstimate {
        tau2,
        iterations: max_iter,
        converged: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PooledMean {
    pub mu: f64,
    /// `sqrt(1 / sum w_k)`.
    pub se: f64,
}

/// Inverse-variance weighted mean with weights `1 / (sigma2_k + tau2)`.
pub fn pooled_mean(s: &StudySet, tau2: f64) -> PooledMean {
    let w = weights(s, tau2);
    let wsum: f64 = w.iter().sum();
    PooledMean {
        mu: weighted_mean(s.y(), &w),
        se: wsum.recip().sqrt(),
    }
}

/// Hartung's standard error for the weighted mean `mu` under `tau2`.
pub fn se_hartung(s: &StudySet, tau2: f64, mu: f64) -> f64 {
    hartung_with_weights(s.y(), &weights(s, tau2), mu)
}

pub(crate) fn hartung_with_weights(y: &[f64], w: &[f64], mu: f64) -> f64 {
    let wsum: f64 = w.iter().sum();
    let ss: f64 = y
        .iter()
        .zip(w)
        .map(|(y, w)| w / wsum * (y - mu).powi(2))
        .sum();
    (ss / (y.len() as f64 - 1.0)).sqrt()
}

/// Hartung-Knapp standard error of the REML pooled mean.
pub fn se_hk(s: &StudySet, tau2_reml: f64) -> f64 {
    let mu = pooled_mean(s, tau2_reml).mu;
    se_hartung(s, tau2_reml, mu)
}

/// Sidik-Jonkman bias-corrected standard error of the REML pooled mean.
pub fn se_sj(s: &StudySet, tau2_reml: f64) -> Result<f64> {
    let w = weights(s, tau2_reml);
    let wsum: f64 = w.iter().sum();
    let w2sum: f64 = w.iter().map(|w| w * w).sum();
    let cross: f64 = w
        .iter()
        .zip(s.sigma2())
        .map(|(w, v)| w * w * (v + tau2_reml))
        .sum();
    let mu = weighted_mean(s.y(), &w);
    let mut num = 0.0;
    for (k, ((y, v), wk)) in s.y().iter().zip(s.sigma2()).zip(&w).enumerate() {
        let h = 2.0 * wk / wsum - cross / ((v + tau2_reml) * w2sum);
        let one_minus_h = 1.0 - h;
        if !(one_minus_h > 0.0) {
            return Err(Error::DegenerateLeverage {
                study: k + 1,
                label: s.label(k),
                one_minus_h,
            });
        }
        num += wk * wk * (y - mu).powi(2) / one_minus_h;
    }
    Ok((num / (wsum * wsum)).sqrt())
}

/// Higgins-Thompson I² in percent, computed from Q.
pub fn i_squared(q: f64, k: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    (100.0 * (q - (k as f64 - 1.0)) / q).clamp(0.0, 100.0)
}

/// p-value of Cochran's test, `P(chi2(K-1) >= Q)`.
pub fn q_test_pvalue(q: f64, k: usize) -> f64 {
    chi2_sf(q, k as f64 - 1.0).clamp(0.0, 1.0)
}

/// Everything the estimators produce for one study set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeterogeneityFit {
    pub k: usize,
    pub q: f64,
    pub tau2_udl: f64,
    pub tau2_dl: f64,
    pub tau2_reml: f64,
    pub reml_iterations: usize,
    pub reml_converged: bool,
    /// Pooled mean under the DL estimate.
    pub mu_hat: f64,
    pub se_mu: f64,
    /// Pooled mean under the REML estimate.
    pub mu_reml: f64,
    pub se_hartung: f64,
    pub se_hk: f64,
    /// `None` when the leverage correction is degenerate.
    pub se_sj: Option<f64>,
    pub i2: f64,
    pub p_het: f64,
}

impl HeterogeneityFit {
    pub fn compute(s: &StudySet) -> Result<Self> {
        let k = s.len();
        let q = cochran_q(s);
        let tau2_udl = tau2_udl(s)?;
        let tau2_dl = tau2_udl.max(0.0);
        let reml = tau2_reml(s, REML_TOL, REML_MAX_ITER)?;
        let dl = pooled_mean(s, tau2_dl);
        let mu_reml = pooled_mean(s, reml.tau2).mu;
        Ok(Self {
            k,
            q,
            tau2_udl,
            tau2_dl,
            tau2_reml: reml.tau2,
            reml_iterations: reml.iterations,
            reml_converged: reml.converged,
            mu_hat: dl.mu,
            se_mu: dl.se,
            mu_reml,
            se_hartung: se_hartung(s, tau2_dl, dl.mu),
            se_hk: se_hk(s, reml.tau2),
            se_sj: se_sj(s, reml.tau2).ok(),
            i2: i_squared(q, k),
            p_het: q_test_pvalue(q, k),
        })
    }
}
