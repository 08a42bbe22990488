//! Study-level data for the random-effects model.
//!
//! A [`StudySet`] holds the observed effect estimates `y_k` together with
//! their within-study variances `sigma2_k`, which are treated as known.
//! Binary-outcome studies can be converted from 2x2 counts with
//! [`from_counts`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed effect estimates and their within-study variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySet {
    y: Vec<f64>,
    sigma2: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl StudySet {
    pub fn new(y: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        Self::build(y, sigma2, None)
    }

    pub fn with_labels(y: Vec<f64>, sigma2: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        Self::build(y, sigma2, Some(labels))
    }

    /// Builds a set from standard errors rather than variances.
    pub fn from_standard_errors(y: Vec<f64>, se: Vec<f64>) -> Result<Self> {
        if let Some((k, s)) = se.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::invalid(format!(
                "standard error of study {} must be positive and finite, got {s}",
                k + 1
            )));
        }
        Self::new(y, se.iter().map(|s| s * s).collect())
    }

    fn build(y: Vec<f64>, sigma2: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if y.len() != sigma2.len() {
            return Err(Error::invalid(format!(
                "{} effects but {} variances",
                y.len(),
                sigma2.len()
            )));
        }
        if y.len() < 2 {
            return Err(Error::TooFewStudies {
                needed: 2,
                got: y.len(),
            });
        }
        if let Some(labels) = &labels {
            if labels.len() != y.len() {
                return Err(Error::invalid(format!(
                    "{} labels for {} studies",
                    labels.len(),
                    y.len()
                )));
            }
        }
        for (k, (&yk, &vk)) in y.iter().zip(&sigma2).enumerate() {
            if !yk.is_finite() {
                return Err(Error::invalid(format!("effect of study {} is not finite", k + 1)));
            }
            if !(vk.is_finite() && vk > 0.0) {
                return Err(Error::invalid(format!(
                    "within-study variance of study {} must be positive and finite, got {vk}",
                    k + 1
                )));
            }
        }
        Ok(Self { y, sigma2, labels })
    }

    /// Number of studies `K`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    /// Always false; a valid set has at least two studies.
    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of study `k` (0-based), falling back to its 1-based position.
    pub fn label(&self, k: usize) -> String {
        match &self.labels {
            Some(l) => l[k].clone(),
            None => (k + 1).to_string(),
        }
    }
}

/// One 2x2 table: events and group sizes for treatment (1) and control (0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoByTwo {
    pub x1: u64,
    pub n1: u64,
    pub x0: u64,
    pub n0: u64,
}

impl TwoByTwo {
    pub fn new(x1: u64, n1: u64, x0: u64, n0: u64) -> Result<Self> {
        let t = Self { x1, n1, x0, n0 };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n0 == 0 {
            return Err(Error::invalid("group sizes must be at least 1"));
        }
        if self.x1 > self.n1 || self.x0 > self.n0 {
            return Err(Error::invalid(format!(
                "events exceed group size in table ({}/{}, {}/{})",
                self.x1, self.n1, self.x0, self.n0
            )));
        }
        Ok(())
    }

    /// Cells in the order (x1, n1 - x1, x0, n0 - x0).
    fn cells(&self) -> [u64; 4] {
        [self.x1, self.n1 - self.x1, self.x0, self.n0 - self.x0]
    }

    fn has_empty_cell(&self) -> bool {
        self.cells().contains(&0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoByTwoSet {
    tables: Vec<TwoByTwo>,
    labels: Option<Vec<String>>,
}

impl TwoByTwoSet {
    pub fn new(tables: Vec<TwoByTwo>) -> Result<Self> {
        Self::build(tables, None)
    }

    pub fn with_labels(tables: Vec<TwoByTwo>, labels: Vec<String>) -> Result<Self> {
        Self::build(tables, Some(labels))
    }

    fn build(tables: Vec<TwoByTwo>, labels: Option<Vec<String>>) -> Result<Self> {
        if tables.len() < 2 {
            return Err(Error::TooFewStudies {
                needed: 2,
                got: tables.len(),
            });
        }
        for t in &tables {
            t.validate()?;
        }
        if let Some(l) = &labels {
            if l.len() != tables.len() {
                return Err(Error::invalid(format!(
                    "{} labels for {} tables",
                    l.len(),
                    tables.len()
                )));
            }
        }
        Ok(Self { tables, labels })
    }

    pub fn tables(&self) -> &[TwoByTwo] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// True when some cell of some table is zero, in which case 0.5 is
    /// added to every cell of every table.
    pub fn needs_continuity_correction(&self) -> bool {
        self.tables.iter().any(TwoByTwo::has_empty_cell)
    }
}

/// Log odds-ratios and their variance estimates from 2x2 tables.
///
/// `Y_k = log[x1 (n0 - x0) / (x0 (n1 - x1))]` and
/// `sigma2_k = 1/x1 + 1/(n1 - x1) + 1/x0 + 1/(n0 - x0)`. If any cell of
/// any table is empty, 0.5 is added to all cells of all tables first.
pub fn from_counts(tables: &TwoByTwoSet) -> Result<StudySet> {
    let correction = if tables.needs_continuity_correction() {
        0.5
    } else {
        0.0
    };
    let mut y = Vec::with_capacity(tables.len());
    let mut sigma2 = Vec::with_capacity(tables.len());
    for t in tables.tables() {
        let [a, b, c, d] = t.cells().map(|n| n as f64 + correction);
        debug_assert!(a > 0.0 && b > 0.0 && c > 0.0 && d > 0.0);
        y.push(a.ln() + d.ln() - b.ln() - c.ln());
        sigma2.push(a.recip() + b.recip() + c.recip() + d.recip());
    }
    match &tables.labels {
        Some(l) => StudySet::with_labels(y, sigma2, l.clone()),
        None => StudySet::new(y, sigma2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(rows: &[(u64, u64, u64, u64)]) -> TwoByTwoSet {
        TwoByTwoSet::new(
            rows.iter()
                .map(|&(x1, n1, x0, n0)| TwoByTwo::new(x1, n1, x0, n0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_table_has_zero_log_odds_ratio() {
        let s = from_counts(&set(&[(10, 20, 10, 20), (10, 20, 10, 20)])).unwrap();
        assert_eq!(s.y()[0], 0.0);
        assert!((s.sigma2()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn log_odds_ratio_by_hand() {
        let s = from_counts(&set(&[(20, 30, 10, 30), (10, 20, 10, 20)])).unwrap();
        assert!((s.y()[0] - 4f64.ln()).abs() < 1e-12);
        assert!((s.y()[0] - 1.3863).abs() < 1e-4);
        let v = 1.0 / 20.0 + 1.0 / 10.0 + 1.0 / 10.0 + 1.0 / 20.0;
        assert!((s.sigma2()[0] - v).abs() < 1e-15);
    }

    #[test]
    fn one_empty_cell_corrects_every_table() {
        let t = set(&[(10, 20, 0, 20), (10, 20, 10, 20)]);
        assert!(t.needs_continuity_correction());
        let s = from_counts(&t).unwrap();
        // second table has no empty cell but is corrected too
        assert!((s.sigma2()[1] - 4.0 / 10.5).abs() < 1e-15);
        assert_eq!(s.y()[1], 0.0);
        let expected = (10.5f64 * 20.5 / (0.5 * 10.5)).ln();
        assert!((s.y()[0] - expected).abs() < 1e-12);
        assert!((s.sigma2()[0] - (1.0 / 10.5 + 1.0 / 10.5 + 1.0 / 0.5 + 1.0 / 20.5)).abs() < 1e-12);
    }

    #[test]
    fn full_group_counts_as_empty_cell() {
        let t = set(&[(20, 20, 5, 20), (10, 20, 10, 20)]);
        assert!(t.needs_continuity_correction());
        assert!(from_counts(&t).unwrap().sigma2().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(TwoByTwo::new(5, 4, 1, 10).is_err());
        assert!(TwoByTwo::new(0, 0, 1, 10).is_err());
        assert!(matches!(
            TwoByTwoSet::new(vec![TwoByTwo::new(1, 10, 1, 10).unwrap()]),
            Err(Error::TooFewStudies { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn study_set_validation() {
        assert!(StudySet::new(vec![0.0], vec![1.0]).is_err());
        assert!(StudySet::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(StudySet::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(StudySet::new(vec![0.0, f64::NAN], vec![1.0, 1.0]).is_err());
        assert!(StudySet::from_standard_errors(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        let s = StudySet::from_standard_errors(vec![0.0, 1.0], vec![2.0, 0.5]).unwrap();
        assert_eq!(s.sigma2(), &[4.0, 0.25]);
        assert_eq!(s.label(1), "2");
    }

    fn table() -> impl Strategy<Value = (u64, u64, u64, u64)> {
        (1u64..200, 1u64..200).prop_flat_map(|(n1, n0)| (0..=n1, Just(n1), 0..=n0, Just(n0)))
    }

    proptest! {
        #[test]
        fn swapping_arms_flips_sign(a in table(), b in table()) {
            let fwd = from_counts(&set(&[a, b])).unwrap();
            let swap = |(x1, n1, x0, n0)| (x0, n0, x1, n1);
            let rev = from_counts(&set(&[swap(a), swap(b)])).unwrap();
            for k in 0..2 {
                prop_assert!((fwd.y()[k] + rev.y()[k]).abs() < 1e-12);
                prop_assert!((fwd.sigma2()[k] - rev.sigma2()[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn variance_shrinks_as_counts_scale(x1 in 1u64..50, e1 in 1u64..50, x0 in 1u64..50, e0 in 1u64..50, m in 2u64..10) {
            let small = from_counts(&set(&[(x1, x1 + e1, x0, x0 + e0), (1, 2, 1, 2)])).unwrap();
            let big = from_counts(&set(&[(m * x1, m * (x1 + e1), m * x0, m * (x0 + e0)), (1, 2, 1, 2)])).unwrap();
            prop_assert!(big.sigma2()[0] < small.sigma2()[0]);
        }
    }
}
