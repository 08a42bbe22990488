//! Prediction intervals for the true effect in a new study, and the Wald
//! confidence interval for the pooled mean.
//!
//! The HTS family plugs a point estimate of the heterogeneity variance into
//! a t(K-2) interval. The bootstrap method instead draws the heterogeneity
//! variance from its confidence distribution and combines it with a normal
//! draw for the new study and a t(K-1) draw for the pooled mean:
//!
//! ```text
//! theta_b = mu_b + z_b * tau_b - t_b * SE_H,b
//! ```
//!
//! where `mu_b` and `SE_H,b` use weights `1 / (sigma2_k + tau2_b)` on the
//! observed effects. The limits are empirical quantiles of `theta_b`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Open01, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confdist::ConfDist;
use crate::dist::{normal_quantile, t_quantile};
use crate::error::{Error, Result};
use crate::estimators::{
    hartung_with_weights, pooled_mean, se_hk, se_sj, tau2_dl, tau2_reml, REML_MAX_ITER, REML_TOL,
};
use crate::model::StudySet;
use crate::rng::StreamSeed;

/// Smallest bootstrap size accepted.
pub const MIN_BOOTSTRAP: usize = 100;
/// Bootstrap size used by the simulation designs.
pub const DEFAULT_BOOTSTRAP: usize = 5_000;
/// Bootstrap size used for reporting a single analysis.
pub const DEFAULT_REPORT_BOOTSTRAP: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "HTS")]
    Hts,
    #[serde(rename = "HTS-HK")]
    HtsHk,
    #[serde(rename = "HTS-SJ")]
    HtsSj,
    #[serde(rename = "Proposed")]
    Proposed,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Hts, Method::HtsHk, Method::HtsSj];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hts => "HTS",
            Method::HtsHk => "HTS-HK",
            Method::HtsSj => "HTS-SJ",
            Method::Proposed => "Proposed",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hts" => Ok(Method::Hts),
            "hts-hk" | "hk" => Ok(Method::HtsHk),
            "hts-sj" | "sj" => Ok(Method::HtsSj),
            "proposed" | "bootstrap" => Ok(Method::Proposed),
            _ => Err(Error::invalid(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapInfo {
    pub b: usize,
    pub seed: u64,
    /// Fraction of heterogeneity draws truncated to zero.
    pub zero_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionResult {
    pub method: Method,
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub center: f64,
    pub tau2_used: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl PredictionResult {
    pub fn interval(&self) -> Interval {
        Interval {
            lower: self.lower,
            upper: self.upper,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn require_k(method: Method, s: &StudySet, needed: usize) -> Result<()> {
    if s.len() < needed {
        return Err(Error::MethodUnavailable {
            method: method.name(),
            reason: format!("needs at least {needed} studies, got {}", s.len()),
        });
    }
    Ok(())
}

/// Wald interval `mu ± z_{1-alpha/2} SE` for the pooled mean under the
/// DerSimonian-Laird estimate. `alpha = 1` gives a zero-width interval.
pub fn ci_mean_dl(s: &StudySet, alpha: f64) -> Result<Interval> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let p = pooled_mean(s, tau2_dl(s)?);
    let half = normal_quantile(1.0 - alpha / 2.0) * p.se;
    Ok(Interval {
        lower: p.mu - half,
        upper: p.mu + half,
    })
}

fn symmetric(method: Method, alpha: f64, center: f64, half: f64, tau2: f64) -> PredictionResult {
    PredictionResult {
        method,
        alpha,
        lower: center - half,
        upper: center + half,
        width: 2.0 * half,
        center,
        tau2_used: tau2,
        bootstrap: None,
        warning: None,
    }
}

/// Higgins-Thompson-Spiegelhalter interval with the DL estimate.
pub fn pi_hts(s: &StudySet, alpha: f64) -> Result<PredictionResult> {
    check_alpha(alpha)?;
    require_k(Method::Hts, s, 3)?;
    let tau2 = tau2_dl(s)?;
    let p = pooled_mean(s, tau2);
    let t = t_quantile(1.0 - alpha / 2.0, s.len() as f64 - 2.0);
    let half = t * (tau2 + p.se * p.se).sqrt();
    Ok(symmetric(Method::Hts, alpha, p.mu, half, tau2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeVariant {
    HartungKnapp,
    SidikJonkman,
}

/// HTS-type interval after REML, with the Hartung-Knapp or Sidik-Jonkman
/// standard error of the REML mean.
pub fn pi_hts_reml(s: &StudySet, alpha: f64, variant: SeVariant) -> Result<PredictionResult> {
    let method = match variant {
        SeVariant::HartungKnapp => Method::HtsHk,
        SeVariant::SidikJonkman => Method::HtsSj,
    };
    check_alpha(alpha)?;
    require_k(method, s, 3)?;
    let reml = tau2_reml(s, REML_TOL, REML_MAX_ITER)?;
    let mu = pooled_mean(s, reml.tau2).mu;
    let se = match variant {
        SeVariant::HartungKnapp => se_hk(s, reml.tau2),
        SeVariant::SidikJonkman => se_sj(s, reml.tau2)?,
    };
    let t = t_quantile(1.0 - alpha / 2.0, s.len() as f64 - 2.0);
    let half = t * (reml.tau2 + se * se).sqrt();
    let mut r = symmetric(method, alpha, mu, half, reml.tau2);
    if !reml.converged {
        r.warning = Some(format!(
            "REML did not converge in {} iterations",
            reml.iterations
        ));
    }
    Ok(r)
}

/// Empirical quantile by linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and nonempty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The three independent input streams of the bootstrap: uniforms for the
/// heterogeneity draw, standard normals, and t(K-1) variates.
pub(crate) fn bootstrap_inputs(seed: StreamSeed, b: usize, df: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut u_rng = seed.child(0).rng();
    let mut z_rng = seed.child(1).rng();
    let mut t_rng = seed.child(2).rng();
    let t_dist = StudentT::new(df).expect("positive degrees of freedom");
    let us = (0..b).map(|_| u_rng.sample(Open01)).collect();
    let zs = (0..b).map(|_| z_rng.sample(StandardNormal)).collect();
    let ts = (0..b).map(|_| t_rng.sample(t_dist)).collect();
    (us, zs, ts)
}

/// Bootstrap sample of the new-study effect, in draw order.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    pub tau2: Vec<f64>,
    pub z: Vec<f64>,
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
}

impl BootstrapDraws {
    /// Quantile-based interval at level `1 - alpha`.
    pub fn interval(&self, alpha: f64) -> Interval {
        let mut sorted = self.theta.clone();
        sorted.sort_by(f64::total_cmp);
        Interval {
            lower: quantile_type7(&sorted, alpha / 2.0),
            upper: quantile_type7(&sorted, 1.0 - alpha / 2.0),
        }
    }
}

/// Draws `b` bootstrap values of the new-study effect.
pub fn proposed_draws(s: &StudySet, b: usize, seed: StreamSeed) -> Result<BootstrapDraws> {
    let k = s.len();
    if k < 2 {
        return Err(Error::TooFewStudies { needed: 2, got: k });
    }
    let cd = ConfDist::new(s)?;
    let (us, z, t) = bootstrap_inputs(seed, b, k as f64 - 1.0);
    let tau2 = cd.invert_many(&us)?;
    let theta = tau2
        .par_iter()
        .zip(z.par_iter().zip(t.par_iter()))
        .map(|(&tau2, (&z, &t))| {
            let w: Vec<f64> = s.sigma2().iter().map(|v| 1.0 / (v + tau2)).collect();
            let wsum: f64 = w.iter().sum();
            let mu = s.y().iter().zip(&w).map(|(y, w)| w * y).sum::<f64>() / wsum;
            let se = hartung_with_weights(s.y(), &w, mu);
            mu + z * tau2.sqrt() - t * se
        })
        .collect();
    Ok(BootstrapDraws { tau2, z, t, theta })
}

/// Parametric-bootstrap prediction interval built on the confidence
/// distribution of the heterogeneity variance. The reported center is the
/// DL pooled mean.
pub fn pi_proposed(s: &StudySet, alpha: f64, b: usize, seed: StreamSeed) -> Result<PredictionResult> {
    check_alpha(alpha)?;
    require_k(Method::Proposed, s, 2)?;
    if b < MIN_BOOTSTRAP {
        return Err(Error::invalid(format!(
            "at least {MIN_BOOTSTRAP} bootstrap samples are required, got {b}"
        )));
    }
    let draws = proposed_draws(s, b, seed)?;
    let iv = draws.interval(alpha);
    let tau2 = tau2_dl(s)?;
    let zero_fraction = draws.tau2.iter().filter(|t| **t == 0.0).count() as f64 / b as f64;
    Ok(PredictionResult {
        method: Method::Proposed,
        alpha,
        lower: iv.lower,
        upper: iv.upper,
        width: iv.width(),
        center: pooled_mean(s, tau2).mu,
        tau2_used: tau2,
        bootstrap: Some(BootstrapInfo {
            b,
            seed: seed.key(),
            zero_fraction,
        }),
        warning: None,
    })
}

/// Computes one method's interval; `seed` is used only by the bootstrap.
pub fn prediction_interval(
    s: &StudySet,
    method: Method,
    alpha: f64,
    b: usize,
    seed: StreamSeed,
) -> Result<PredictionResult> {
    match method {
        Method::Hts => pi_hts(s, alpha),
        Method::HtsHk => pi_hts_reml(s, alpha, SeVariant::HartungKnapp),
        Method::HtsSj => pi_hts_reml(s, alpha, SeVariant::SidikJonkman),
        Method::Proposed => pi_proposed(s, alpha, b, seed),
    }
}
