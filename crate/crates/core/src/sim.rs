//! Simulation designs and the coverage-probability harness.
//!
//! Three data-generating designs are provided:
//!
//! * `I`: within-study variances `0.25 * chi2(1)`, redrawn until they fall
//!   in `[0.009, 0.6]`; effects `Y_k ~ N(mu, sigma2_k + tau2)`.
//! * `IIa/IIb/IIc`: variances `0.1 * chi2(29) / 29`; in `IIb` one randomly
//!   chosen study has its variance divided by 10, in `IIc` multiplied by 10.
//! * `III`: binary outcomes in `K` 2x2 tables, analysed as log odds-ratios.
//!
//! Every replication draws `theta_new ~ N(mu, tau2)` for the coverage check.
//! Replication `r` of a study with seed `s` uses the stream
//! `StreamSeed::new(s).child(r)`, so results do not depend on the number of
//! worker threads.

use std::fmt;

use rand::Rng;
use rand_distr::{Binomial, ChiSquared, Distribution, Normal};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::confdist::ConfDist;
use crate::error::{Error, Result};
use crate::estimators::{cochran_q, i_squared, tau2_reml, REML_MAX_ITER, REML_TOL};
use crate::model::{from_counts, StudySet, TwoByTwo, TwoByTwoSet};
use crate::predint::{prediction_interval, Method, MIN_BOOTSTRAP};
use crate::rng::StreamSeed;

pub const SCENARIO_I_SCALE: f64 = 0.25;
pub const SCENARIO_I_RANGE: (f64, f64) = (0.009, 0.6);
pub const SCENARIO_II_SIGMA2: f64 = 0.1;
pub const SCENARIO_II_N: u32 = 30;
pub const SCENARIO_II_FACTOR: f64 = 10.0;
pub const SCENARIO_III_N: (u64, u64) = (20, 200);
pub const SCENARIO_III_P0: (f64, f64) = (0.05, 0.65);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    I,
    IIa,
    IIb,
    IIc,
    III,
}

impl Scenario {
    /// Parses a design name (`i`, `ii`, `iii`) and, for `ii`, its variant
    /// (`a`, `b`, `c`). A variant is required for `ii` and rejected
    /// otherwise.
    pub fn parse(name: &str, variant: Option<&str>) -> Result<Self> {
        let variant = variant.map(str::to_ascii_lowercase);
        match (name.to_ascii_lowercase().as_str(), variant.as_deref()) {
            ("i" | "1", None) => Ok(Scenario::I),
            ("iii" | "3", None) => Ok(Scenario::III),
            ("ii" | "2", Some("a")) => Ok(Scenario::IIa),
            ("ii" | "2", Some("b")) => Ok(Scenario::IIb),
            ("ii" | "2", Some("c")) => Ok(Scenario::IIc),
            ("ii" | "2", None) => Err(Error::invalid("scenario ii requires a variant (a, b or c)")),
            ("ii" | "2", Some(v)) => Err(Error::invalid(format!("unknown variant '{v}' for scenario ii"))),
            ("i" | "1" | "iii" | "3", Some(_)) => {
                Err(Error::invalid(format!("scenario {name} takes no variant")))
            }
            _ => Err(Error::invalid(format!("unknown scenario '{name}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::I => "i",
            Scenario::IIa => "ii-a",
            Scenario::IIb => "ii-b",
            Scenario::IIc => "ii-c",
            Scenario::III => "iii",
        }
    }

    pub fn default_mu(self) -> f64 {
        match self {
            Scenario::I | Scenario::III => 0.0,
            Scenario::IIa | Scenario::IIb | Scenario::IIc => 1.0,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Scenario {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerativeSpec {
    pub scenario: Scenario,
    pub k: usize,
    pub tau2: f64,
    pub mu: f64,
}

impl GenerativeSpec {
    /// `mu = None` picks the design's default (0 for I and III, 1 for II).
    pub fn new(scenario: Scenario, k: usize, tau2: f64, mu: Option<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewStudies { needed: 2, got: k });
        }
        if !(tau2.is_finite() && tau2 >= 0.0) {
            return Err(Error::invalid(format!("tau2 must be nonnegative, got {tau2}")));
        }
        let mu = mu.unwrap_or_else(|| scenario.default_mu());
        if !mu.is_finite() {
            return Err(Error::invalid("mu must be finite"));
        }
        Ok(Self { scenario, k, tau2, mu })
    }
}

/// One simulated meta-analysis and the true effect of a new study.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub studies: StudySet,
    pub theta_new: f64,
}

fn normal(mean: f64, var: f64) -> Normal<f64> {
    Normal::new(mean, var.sqrt()).expect("finite nonnegative variance")
}

fn effects<R: Rng + ?Sized>(spec: &GenerativeSpec, sigma2: &[f64], rng: &mut R) -> Vec<f64> {
    sigma2
        .iter()
        .map(|v| normal(spec.mu, v + spec.tau2).sample(rng))
        .collect()
}

pub(crate) fn scenario_i_variance<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let chi = ChiSquared::new(1.0).unwrap();
    let (lo, hi) = SCENARIO_I_RANGE;
    loop {
        let v = SCENARIO_I_SCALE * chi.sample(rng);
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
}

pub fn gen_scenario_i<R: Rng + ?Sized>(spec: &GenerativeSpec, rng: &mut R) -> Result<Replicate> {
    let sigma2: Vec<f64> = (0..spec.k).map(|_| scenario_i_variance(rng)).collect();
    let y = effects(spec, &sigma2, rng);
    let theta_new = normal(spec.mu, spec.tau2).sample(rng);
    Ok(Replicate {
        studies: StudySet::new(y, sigma2)?,
        theta_new,
    })
}

/// Variances for design II before and after the one-study modification,
/// and the index of the modified study.
pub(crate) fn scenario_ii_variances<R: Rng + ?Sized>(
    scenario: Scenario,
    k: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>, Option<usize>) {
    let df = (SCENARIO_II_N - 1) as f64;
    let chi = ChiSquared::new(df).unwrap();
    let base: Vec<f64> = (0..k)
        .map(|_| SCENARIO_II_SIGMA2 * chi.sample(rng) / df)
        .collect();
    let mut sigma2 = base.clone();
    let factor = match scenario {
        Scenario::IIb => Some(1.0 / SCENARIO_II_FACTOR),
        Scenario::IIc => Some(SCENARIO_II_FACTOR),
        _ => None,
    };
    let modified = factor.map(|f| {
        let idx = rng.random_range(0..k);
        sigma2[idx] *= f;
        idx
    });
    (base, sigma2, modified)
}

pub fn gen_scenario_ii<R: Rng + ?Sized>(spec: &GenerativeSpec, rng: &mut R) -> Result<Replicate> {
    if !matches!(spec.scenario, Scenario::IIa | Scenario::IIb | Scenario::IIc) {
        return Err(Error::invalid("design II generator needs variant a, b or c"));
    }
    let (_, sigma2, _) = scenario_ii_variances(spec.scenario, spec.k, rng);
    let y = effects(spec, &sigma2, rng);
    let theta_new = normal(spec.mu, spec.tau2).sample(rng);
    Ok(Replicate {
        studies: StudySet::new(y, sigma2)?,
        theta_new,
    })
}

/// Treatment-arm event probability giving log odds-ratio `theta` against
/// control probability `p0`.
pub fn odds_link(p0: f64, theta: f64) -> f64 {
    let e = theta.exp();
    p0 * e / (1.0 - p0 + p0 * e)
}

pub(crate) fn scenario_iii_tables<R: Rng + ?Sized>(spec: &GenerativeSpec, rng: &mut R) -> Result<TwoByTwoSet> {
    let theta_dist = normal(spec.mu, spec.tau2);
    let (p_lo, p_hi) = SCENARIO_III_P0;
    let tables = (0..spec.k)
        .map(|_| {
            let theta = theta_dist.sample(rng);
            let n = rng.random_range(SCENARIO_III_N.0..=SCENARIO_III_N.1);
            let p0 = rng.random_range(p_lo..p_hi);
            let p1 = odds_link(p0, theta);
            let x0 = Binomial::new(n, p0).unwrap().sample(rng);
            let x1 = Binomial::new(n, p1).unwrap().sample(rng);
            TwoByTwo::new(x1, n, x0, n)
        })
        .collect::<Result<Vec<_>>>()?;
    TwoByTwoSet::new(tables)
}

pub fn gen_scenario_iii<R: Rng + ?Sized>(spec: &GenerativeSpec, rng: &mut R) -> Result<Replicate> {
    let tables = scenario_iii_tables(spec, rng)?;
    let theta_new = normal(spec.mu, spec.tau2).sample(rng);
    Ok(Replicate {
        studies: from_counts(&tables)?,
        theta_new,
    })
}

pub fn generate<R: Rng + ?Sized>(spec: &GenerativeSpec, rng: &mut R) -> Result<Replicate> {
    match spec.scenario {
        Scenario::I => gen_scenario_i(spec, rng),
        Scenario::IIa | Scenario::IIb | Scenario::IIc => gen_scenario_ii(spec, rng),
        Scenario::III => gen_scenario_iii(spec, rng),
    }
}

/// Data for replication `r` of a study seeded with `seed`.
pub fn replicate(spec: &GenerativeSpec, seed: u64, r: u64) -> Result<Replicate> {
    generate(spec, &mut StreamSeed::new(seed).child(r).child(0).rng())
}

fn bootstrap_stream(seed: u64, r: u64) -> StreamSeed {
    StreamSeed::new(seed).child(r).child(1)
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageConfig {
    pub reps: usize,
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide. Does not affect results.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub scenario: Scenario,
    pub k: usize,
    pub tau2: f64,
    pub mu: f64,
    pub method: Method,
    pub reps: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Replications where the method produced an interval.
    pub evaluated: usize,
    /// Replications where the method failed; excluded from `coverage`.
    pub failures: usize,
    pub coverage: f64,
    pub mc_se: f64,
    pub mean_width: f64,
    pub mean_i2: f64,
}

struct Outcome {
    i2: f64,
    per_method: Vec<Option<(bool, f64)>>,
}

fn run_replication(spec: &GenerativeSpec, methods: &[Method], cfg: &CoverageConfig, r: u64) -> Result<Outcome> {
    let rep = replicate(spec, cfg.seed, r)?;
    let s = &rep.studies;
    let per_method = methods
        .iter()
        .map(|&m| {
            prediction_interval(s, m, cfg.alpha, cfg.b, bootstrap_stream(cfg.seed, r))
                .ok()
                .map(|pi| (pi.interval().contains(rep.theta_new), pi.width))
        })
        .collect();
    Ok(Outcome {
        i2: i_squared(cochran_q(s), s.len()),
        per_method,
    })
}

/// Estimates coverage of each method's prediction interval for `theta_new`.
pub fn coverage_study(
    spec: &GenerativeSpec,
    methods: &[Method],
    cfg: &CoverageConfig,
) -> Result<Vec<CoverageReport>> {
    if cfg.reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    if methods.is_empty() {
        return Err(Error::invalid("no methods requested"));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    if methods.contains(&Method::Proposed) && cfg.b < MIN_BOOTSTRAP {
        return Err(Error::invalid(format!(
            "at least {MIN_BOOTSTRAP} bootstrap samples are required, got {}",
            cfg.b
        )));
    }
    let outcomes: Vec<Outcome> = with_threads(cfg.threads, || {
        (0..cfg.reps as u64)
            .into_par_iter()
            .map(|r| run_replication(spec, methods, cfg, r))
            .collect::<Result<Vec<_>>>()
    })??;

    let mean_i2 = outcomes.iter().map(|o| o.i2).sum::<f64>() / outcomes.len() as f64;
    let reports = methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let (mut covered, mut evaluated, mut width) = (0usize, 0usize, 0.0);
            for o in &outcomes {
                if let Some((hit, w)) = o.per_method[j] {
                    evaluated += 1;
                    covered += hit as usize;
                    width += w;
                }
            }
            let (coverage, mc_se, mean_width) = if evaluated > 0 {
                let c = covered as f64 / evaluated as f64;
                (c, (c * (1.0 - c) / evaluated as f64).sqrt(), width / evaluated as f64)
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            CoverageReport {
                scenario: spec.scenario,
                k: spec.k,
                tau2: spec.tau2,
                mu: spec.mu,
                method,
                reps: cfg.reps,
                b: cfg.b,
                alpha: cfg.alpha,
                seed: cfg.seed,
                evaluated,
                failures: cfg.reps - evaluated,
                coverage,
                mc_se,
                mean_width,
                mean_i2,
            }
        })
        .collect();
    Ok(reports)
}

/// I² of each of `reps` simulated data sets.
pub fn i2_values(spec: &GenerativeSpec, reps: usize, seed: u64, threads: usize) -> Result<Vec<f64>> {
    with_threads(threads, || {
        (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let s = replicate(spec, seed, r)?.studies;
                Ok(i_squared(cochran_q(&s), s.len()))
            })
            .collect()
    })?
}

/// `H(tau2_true)` for each of `reps` simulated data sets; uniform on
/// (0, 1) when the confidence distribution is exact.
pub fn pit_values(spec: &GenerativeSpec, reps: usize, seed: u64, threads: usize) -> Result<Vec<f64>> {
    with_threads(threads, || {
        (0..reps as u64)
            .into_par_iter()
            .map(|r| ConfDist::new(&replicate(spec, seed, r)?.studies)?.h(spec.tau2))
            .collect()
    })?
}

/// Fraction of `reps` simulated data sets where REML did not converge.
pub fn reml_failure_rate(spec: &GenerativeSpec, reps: usize, seed: u64) -> Result<f64> {
    let mut failed = 0;
    for r in 0..reps as u64 {
        let s = replicate(spec, seed, r)?.studies;
        failed += !tau2_reml(&s, REML_TOL, REML_MAX_ITER)?.converged as usize;
    }
    Ok(failed as f64 / reps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: Scenario, k: usize, tau2: f64) -> GenerativeSpec {
        GenerativeSpec::new(s, k, tau2, None).unwrap()
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!(Scenario::parse("i", None).unwrap(), Scenario::I);
        assert_eq!(Scenario::parse("ii", Some("b")).unwrap(), Scenario::IIb);
        assert_eq!(Scenario::parse("III", None).unwrap(), Scenario::III);
        assert!(Scenario::parse("ii", None).is_err());
        assert!(Scenario::parse("i", Some("a")).is_err());
        assert!(Scenario::parse("iv", None).is_err());
        assert_eq!(spec(Scenario::I, 5, 0.1).mu, 0.0);
        assert_eq!(spec(Scenario::IIa, 5, 0.1).mu, 1.0);
        assert_eq!(spec(Scenario::III, 5, 0.1).mu, 0.0);
        assert!(GenerativeSpec::new(Scenario::I, 1, 0.1, None).is_err());
        assert!(GenerativeSpec::new(Scenario::I, 3, -0.1, None).is_err());
    }

    #[test]
    fn scenario_i_variances_in_range() {
        let sp = spec(Scenario::I, 25, 0.2);
        let (lo, hi) = SCENARIO_I_RANGE;
        for r in 0..200 {
            let rep = replicate(&sp, 3, r).unwrap();
            assert!(rep.studies.sigma2().iter().all(|v| (lo..=hi).contains(v)));
        }
    }

    #[test]
    fn zero_heterogeneity_fixes_theta_new() {
        for sc in [Scenario::I, Scenario::IIa, Scenario::III] {
            let sp = spec(sc, 4, 0.0);
            assert_eq!(replicate(&sp, 1, 0).unwrap().theta_new, sp.mu);
        }
    }

    #[test]
    fn scenario_ii_modifies_exactly_one_study() {
        let mut rng = StreamSeed::new(8).rng();
        for sc in [Scenario::IIb, Scenario::IIc] {
            for _ in 0..50 {
                let (base, sigma2, idx) = scenario_ii_variances(sc, 7, &mut rng);
                let idx = idx.unwrap();
                let changed: Vec<usize> = (0..7).filter(|&k| base[k] != sigma2[k]).collect();
                assert_eq!(changed, vec![idx]);
                let expected = if sc == Scenario::IIb { base[idx] / 10.0 } else { base[idx] * 10.0 };
                assert!((sigma2[idx] - expected).abs() < 1e-15);
            }
        }
        let (base, sigma2, idx) = scenario_ii_variances(Scenario::IIa, 7, &mut rng);
        assert_eq!(base, sigma2);
        assert!(idx.is_none());
    }

    #[test]
    fn scenario_ii_modified_study_is_uniform() {
        let mut rng = StreamSeed::new(21).rng();
        let mut counts = [0usize; 4];
        for _ in 0..8000 {
            counts[scenario_ii_variances(Scenario::IIb, 4, &mut rng).2.unwrap()] += 1;
        }
        // binomial(8000, 1/4): sd ~ 38.7
        assert!(counts.iter().all(|c| (*c as f64 - 2000.0).abs() < 4.0 * 38.73), "{counts:?}");
    }

    #[test]
    fn scenario_ii_variance_mean() {
        let mut rng = StreamSeed::new(9).rng();
        let n = 100_000;
        let draws: Vec<f64> = (0..n / 10)
            .flat_map(|_| scenario_ii_variances(Scenario::IIa, 10, &mut rng).1)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // var of 0.1 chi2(29)/29 is 0.01 * 2 / 29
        let se = (0.01 * 2.0 / 29.0 / n as f64).sqrt();
        assert!((mean - 0.1).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn odds_link_identities() {
        for p0 in [0.05, 0.2, 0.5, 0.65] {
            assert!((odds_link(p0, 0.0) - p0).abs() < 1e-15);
            for theta in [-1.5, -0.3, 0.4, 2.0] {
                let p1 = odds_link(p0, theta);
                let ratio = (p1 / (1.0 - p1)) / (p0 / (1.0 - p0));
                assert!((ratio.ln() - theta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scenario_iii_tables_are_valid() {
        let sp = spec(Scenario::III, 12, 0.1);
        let mut rng = StreamSeed::new(4).rng();
        for _ in 0..50 {
            let t = scenario_iii_tables(&sp, &mut rng).unwrap();
            for tb in t.tables() {
                assert_eq!(tb.n0, tb.n1);
                assert!((20..=200).contains(&tb.n0));
            }
            let s = from_counts(&t).unwrap();
            assert_eq!(s.len(), 12);
        }
    }

    #[test]
    fn coverage_is_deterministic_across_threads() {
        let sp = spec(Scenario::I, 5, 0.1);
        let cfg = CoverageConfig { reps: 40, b: 200, alpha: 0.05, seed: 17, threads: 1 };
        let a = coverage_study(&sp, &Method::ALL, &cfg).unwrap();
        let b = coverage_study(&sp, &Method::ALL, &CoverageConfig { threads: 3, ..cfg }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        for r in &a {
            assert!((0.0..=1.0).contains(&r.coverage));
            let expected = (r.coverage * (1.0 - r.coverage) / r.evaluated as f64).sqrt();
            assert_eq!(r.mc_se, expected);
            assert_eq!(r.evaluated + r.failures, 40);
        }
    }

    #[test]
    fn coverage_counts_method_failures() {
        // HTS needs K >= 3; with K = 2 every replication fails
        let sp = spec(Scenario::I, 2, 0.1);
        let cfg = CoverageConfig { reps: 10, b: 100, alpha: 0.05, seed: 1, threads: 1 };
        let r = coverage_study(&sp, &[Method::Hts, Method::Proposed], &cfg).unwrap();
        assert_eq!(r[0].failures, 10);
        assert!(r[0].coverage.is_nan());
        assert_eq!(r[1].failures, 0);
    }

    #[test]
    fn coverage_rejects_bad_config() {
        let sp = spec(Scenario::I, 5, 0.1);
        let cfg = CoverageConfig { reps: 0, b: 1000, alpha: 0.05, seed: 1, threads: 1 };
        assert!(coverage_study(&sp, &Method::ALL, &cfg).is_err());
        let cfg = CoverageConfig { reps: 10, b: 50, ..cfg };
        assert!(coverage_study(&sp, &Method::ALL, &cfg).is_err());
        assert!(coverage_study(&sp, &[Method::Hts], &cfg).is_ok());
    }
}
