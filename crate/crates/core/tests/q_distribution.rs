//! The exact distribution of Cochran's Q against Q computed directly from
//! data simulated under the random-effects model.

use cdpi_core::estimators::cochran_q;
use cdpi_core::model::StudySet;
use cdpi_core::qdist::{eigen_spectrum, q_cdf, AccuracyParams};
use cdpi_core::rng::StreamSeed;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn simulated_q(sigma2: &[f64], tau2: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = StreamSeed::new(seed).rng();
    (0..n)
        .map(|_| {
            let y: Vec<f64> = sigma2
                .iter()
                .map(|v| Normal::new(0.3, (v + tau2).sqrt()).unwrap().sample(&mut rng))
                .collect();
            cochran_q(&StudySet::new(y, sigma2.to_vec()).unwrap())
        })
        .collect()
}

#[test]
fn exact_cdf_matches_simulated_q() {
    let acc = AccuracyParams::default();
    let mut rng = StreamSeed::new(77).rng();
    for case in 0..6 {
        let k = 3 + case;
        let sigma2: Vec<f64> = (0..k).map(|_| rng.random_range(0.02..0.8)).collect();
        let tau2 = [0.0, 0.05, 0.3][case % 3];
        let n = 100_000;
        let qs = simulated_q(&sigma2, tau2, n, case as u64);
        for q in [0.5 * (k - 1) as f64, (k - 1) as f64, 2.0 * (k - 1) as f64] {
            let exact = q_cdf(q, &sigma2, tau2, &acc).unwrap().value;
            let emp = qs.iter().filter(|x| **x <= q).count() as f64 / n as f64;
            let se = (exact * (1.0 - exact) / n as f64).sqrt();
            assert!((emp - exact).abs() < 4.0 * se + 1e-9, "case {case} q {q}: {emp} vs {exact}");
        }
    }
}

#[test]
fn zero_heterogeneity_gives_chi_square() {
    // with tau2 = 0 the nonzero eigenvalues are all 1, so Q ~ chi2(K-1)
    let sigma2 = [0.1, 0.4, 0.25, 0.9, 0.05];
    let spec = eigen_spectrum(&sigma2, 0.0).unwrap();
    assert_eq!(spec.rank, 4);
    assert!(spec.lambdas.iter().all(|l| (l - 1.0).abs() < 1e-10));
    let p = q_cdf(4.0, &sigma2, 0.0, &AccuracyParams::default()).unwrap();
    // chi2(4) cdf at 4: 1 - e^{-2}(1 + 2)
    assert!((p.value - (1.0 - 3.0 * (-2.0f64).exp())).abs() < 1e-8);
}
