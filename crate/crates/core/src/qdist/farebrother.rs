//! CDF of a positive linear combination of independent chi-square(1)
//! variables, `P(sum_j lambda_j X_j <= q)`, by Farebrother's version of
//! Ruben's series.
//!
//! With `beta = min lambda` the target is written as a mixture of central
//! chi-squares `sum_k a_k P(chi2(n + 2k) <= q / beta)`. The mixing weights
//! are the power-series coefficients of
//! `prod_j sqrt(beta / lambda_j) (1 - gamma_j s)^(-1/2)`,
//! `gamma_j = 1 - beta / lambda_j`, so they are nonnegative and sum to one.
//! Because `P(chi2(m) <= x)` decreases in `m`, the tail after `N` terms is
//! bounded by `(1 - sum_{k<=N} a_k) P(chi2(n + 2N + 2) <= q / beta)`, which
//! is the reported error bound.

use serde::Serialize;
use statrs::function::erf::erf;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyParams {
    /// Target absolute accuracy.
    pub eps: f64,
    /// Maximum number of series terms before giving up.
    pub max_terms: usize,
}

impl Default for AccuracyParams {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            max_terms: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfValue {
    pub value: f64,
    /// Upper bound on the truncation error of `value`.
    pub error_bound: f64,
    /// Number of mixture terms summed.
    pub terms: usize,
}

/// Lower-tail chi-square CDFs `P(chi2(m) <= z)` for `m = m0, m0 + 2, ...`.
///
/// Uses `P(chi2(m + 2) <= z) = P(chi2(m) <= z) - (z/2)^(m/2) e^(-z/2) / Gamma(m/2 + 1)`
/// with the subtracted term carried in log space.
struct ChiSquareLadder {
    z: f64,
    df: f64,
    cdf: f64,
    log_term: f64,
}

impl ChiSquareLadder {
    fn new(z: f64, df: usize) -> Self {
        let half = 0.5 * z;
        let mut ladder = if df.is_multiple_of(2) {
            // chi2(2): 1 - e^{-z/2}, next term (z/2) e^{-z/2}
            Self {
                z,
                df: 2.0,
                cdf: -(-half).exp_m1(),
                log_term: half.ln() - half,
            }
        } else {
            // chi2(1): erf(sqrt(z/2)), next term sqrt(2z/pi) e^{-z/2}
            Self {
                z,
                df: 1.0,
                cdf: erf(half.sqrt()),
                log_term: 0.5 * (2.0 * z / std::f64::consts::PI).ln() - half,
            }
        };
        while (ladder.df as usize) < df {
            ladder.step();
        }
        ladder
    }

    fn step(&mut self) {
        self.cdf = (self.cdf - self.log_term.exp()).max(0.0);
        self.df += 2.0;
        self.log_term += (self.z / self.df).ln();
    }
}

/// `P(sum_j lambda_j X_j <= q)` for independent `X_j ~ chi2(1)` and
/// `lambda_j > 0`.
pub fn wchisq_cdf(lambdas: &[f64], q: f64, acc: &AccuracyParams) -> Result<CdfValue> {
    if lambdas.is_empty() {
        return Err(Error::invalid("at least one weight is required"));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::invalid(format!("weights must be positive and finite, got {l}")));
    }
    if !q.is_finite() {
        return Err(Error::invalid(format!("quantile must be finite, got {q}")));
    }
    if !(acc.eps > 0.0) || acc.max_terms == 0 {
        return Err(Error::invalid("accuracy parameters must be positive"));
    }
    if q <= 0.0 {
        return Ok(CdfValue {
            value: 0.0,
            error_bound: 0.0,
            terms: 0,
        });
    }

    let n = lambdas.len();
    let beta = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma: Vec<f64> = lambdas.iter().map(|l| 1.0 - beta / l).collect();
    let log_a0: f64 = 0.5 * lambdas.iter().map(|l| (beta / l).ln()).sum::<f64>();
    let a0 = log_a0.exp();
    if a0 == 0.0 {
        return Err(Error::Numerical(format!(
            "leading mixture weight underflows (log = {log_a0})"
        )));
    }

    let mut ladder = ChiSquareLadder::new(q / beta, n);
    let mut coeffs = Vec::with_capacity(64);
    let mut g = Vec::with_capacity(64);
    let mut powers = vec![1.0; n];

    coeffs.push(a0);
    let mut mass = a0;
    let mut value = a0 * ladder.cdf;
    let mut m = 0usize;
    loop {
        ladder.step();
        let bound = (1.0 - mass).max(0.0) * ladder.cdf;
        if bound <= acc.eps {
            return Ok(CdfValue {
                value: value.clamp(0.0, 1.0),
                error_bound: bound,
                terms: m + 1,
            });
        }
        if m + 1 >= acc.max_terms {
            return Err(Error::NotConverged {
                partial: value,
                bound,
                terms: m + 1,
            });
        }
        m += 1;

        let mut gm = 0.0;
        for (p, gj) in powers.iter_mut().zip(&gamma) {
            *p *= gj;
            gm += *p;
        }
        g.push(gm);
        // m a_m = 1/2 sum_{r<m} g_{m-r} a_r
        let conv: f64 = coeffs.iter().zip(g.iter().rev()).map(|(a, g)| a * g).sum();
        let am = 0.5 * conv / m as f64;
        coeffs.push(am);
        mass += am;
        value += am * ladder.cdf;
    }
}
