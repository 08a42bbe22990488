//! Confidence distribution for the heterogeneity variance,
//! `H(tau2) = 1 - F_Q(q_obs; tau2)`, and inversion sampling from it.
//!
//! `F_Q(q; tau2)` strictly decreases in `tau2`, so `H` is a distribution
//! function on `[0, inf)` apart from its atom `H(0)` at the origin. A draw
//! `u` maps to the root of `H(tau2) = u`, or to zero when `H(0) > u`.

use rand::Rng;
use rand_distr::Open01;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::StudySet;
use crate::qdist::{q_cdf, AccuracyParams};
use crate::root::{brent, Tolerance};
use crate::estimators::cochran_q;

/// Inversion tolerance on the probability scale.
pub const INVERSION_TOL: f64 = 1e-8;

const MAX_DOUBLINGS: usize = 64;
const MAX_KNOTS: usize = 256;
/// Largest jump in `H` allowed between neighbouring batch-inversion knots.
const KNOT_STEP: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct ConfDist {
    q_obs: f64,
    sigma2: Vec<f64>,
    h0: f64,
    start: f64,
    acc: AccuracyParams,
}

impl ConfDist {
    /// Series accuracy used for `H` unless overridden; two orders tighter
    /// than the inversion tolerance.
    pub const DEFAULT_ACCURACY: AccuracyParams = AccuracyParams {
        eps: 1e-10,
        max_terms: 100_000,
    };

    pub fn new(s: &StudySet) -> Result<Self> {
        Self::from_parts(cochran_q(s), s.sigma2().to_vec(), Self::DEFAULT_ACCURACY)
    }

    pub fn from_parts(q_obs: f64, sigma2: Vec<f64>, acc: AccuracyParams) -> Result<Self> {
        if !(q_obs.is_finite() && q_obs >= 0.0) {
            return Err(Error::invalid(format!("observed Q must be nonnegative, got {q_obs}")));
        }
        if sigma2.len() < 2 {
            return Err(Error::TooFewStudies {
                needed: 2,
                got: sigma2.len(),
            });
        }
        let k = sigma2.len() as f64;
        let (s1, s2) = sigma2
            .iter()
            .fold((0.0, 0.0), |(a, b), v| (a + 1.0 / v, b + 1.0 / (v * v)));
        let tau2_dl = ((q_obs - (k - 1.0)) / (s1 - s2 / s1)).max(0.0);
        let mut cd = Self {
            q_obs,
            sigma2,
            h0: 0.0,
            start: (4.0 * tau2_dl).max(1.0),
            acc,
        };
        cd.h0 = cd.h(0.0)?;
        Ok(cd)
    }

    pub fn q_obs(&self) -> f64 {
        self.q_obs
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    /// `H(0)`, the probability mass the sampler puts at zero.
    pub fn h0(&self) -> f64 {
        self.h0
    }

    /// `H(tau2) = 1 - F_Q(q_obs; tau2)`.
    pub fn h(&self, tau2: f64) -> Result<f64> {
        if !(tau2 >= 0.0) {
            return Err(Error::invalid(format!("tau2 must be nonnegative, got {tau2}")));
        }
        let f = q_cdf(self.q_obs, &self.sigma2, tau2, &self.acc)?;
        Ok((1.0 - f.value).clamp(0.0, 1.0))
    }

    fn check_u(u: f64) -> Result<()> {
        if u > 0.0 && u < 1.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("u must lie in (0, 1), got {u}")))
        }
    }

    fn tolerance() -> Tolerance {
        Tolerance {
            ftol: INVERSION_TOL,
            max_iter: 200,
        }
    }

    /// Solves `H(tau2) = u`, truncating at zero when `H(0) >= u`.
    pub fn sample_tau2(&self, u: f64) -> Result<f64> {
        Self::check_u(u)?;
        if self.h0 >= u {
            return Ok(0.0);
        }
        let (mut lo, mut h_lo) = (0.0, self.h0);
        let mut hi = self.start;
        let mut h_hi = self.h(hi)?;
        let mut doublings = 0;
        while h_hi <= u {
            if doublings == MAX_DOUBLINGS {
                return Err(Error::BracketFailure { u, hi, h_hi });
            }
            lo = hi;
            h_lo = h_hi;
            hi *= 2.0;
            h_hi = self.h(hi)?;
            doublings += 1;
        }
        brent(|x| Ok(self.h(x)? - u), lo, hi, h_lo - u, h_hi - u, Self::tolerance())
    }

    /// Inverts many probabilities against the same `H`.
    ///
    /// `H` is first tabulated on knots fine enough that each cell spans at
    /// most a small step in probability; each `u` is then solved inside its
    /// cell. Results do not depend on the rayon thread count.
    pub fn invert_many(&self, us: &[f64]) -> Result<Vec<f64>> {
        for &u in us {
            Self::check_u(u)?;
        }
        let u_max = us.iter().copied().fold(0.0, f64::max);
        if u_max <= self.h0 {
            return Ok(vec![0.0; us.len()]);
        }
        let knots = self.knots(u_max)?;
        us.par_iter()
            .map(|&u| {
                if self.h0 >= u {
                    return Ok(0.0);
                }
                let i = knots.partition_point(|(_, h)| *h <= u);
                if i == 0 || i == knots.len() {
                    return self.sample_tau2(u);
                }
                let (lo, h_lo) = knots[i - 1];
                let (hi, h_hi) = knots[i];
                brent(|x| Ok(self.h(x)? - u), lo, hi, h_lo - u, h_hi - u, Self::tolerance())
            })
            .collect()
    }

    fn knots(&self, u_max: f64) -> Result<Vec<(f64, f64)>> {
        let mut knots = vec![(0.0, self.h0)];
        let mut hi = self.start;
        let mut h_hi = self.h(hi)?;
        let mut doublings = 0;
        while h_hi <= u_max {
            if doublings == MAX_DOUBLINGS {
                return Err(Error::BracketFailure { u: u_max, hi, h_hi });
            }
            knots.push((hi, h_hi));
            hi *= 2.0;
            h_hi = self.h(hi)?;
            doublings += 1;
        }
        knots.push((hi, h_hi));

        let mut i = 0;
        while i + 1 < knots.len() && knots.len() < MAX_KNOTS {
            let (a, ha) = knots[i];
            let (b, hb) = knots[i + 1];
            if hb - ha > KNOT_STEP && b - a > 1e-12 * b {
                let mid = 0.5 * (a + b);
                knots.insert(i + 1, (mid, self.h(mid)?));
            } else {
                i += 1;
            }
        }
        Ok(knots)
    }

    /// Draws `b` values of the heterogeneity variance: `u_b ~ U(0, 1)` from
    /// `rng`, each mapped through [`ConfDist::sample_tau2`].
    pub fn sample_tau2_batch<R: Rng + ?Sized>(&self, rng: &mut R, b: usize) -> Result<Vec<f64>> {
        if b == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let us: Vec<f64> = (0..b).map(|_| rng.sample(Open01)).collect();
        self.invert_many(&us)
    }
}
