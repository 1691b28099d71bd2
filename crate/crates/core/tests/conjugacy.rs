mod common;

use common::{normal_log_density, pattern_1d, set_log_marginal_1d, Niw1};
use dprfs::conjugate::{
    gamma_posterior, log_marginal_niw, log_marginal_points, log_marginal_stats, log_predictive_cardinality,
    log_predictive_set, niw_posterior,
};
use dprfs::rfs::{log_cardinality_pmf, log_poisson_rfs_density, sample_poisson_rfs};
use dprfs::{GammaParams, GaussianParams, NiwParams, PointPattern, PoissonRfsParams, RfsPrior, SetSufficientStats};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::factorial::ln_factorial;

fn niw(n: &Niw1) -> NiwParams {
    NiwParams::new(
        DVector::from_element(1, n.mu),
        n.kappa,
        n.nu,
        DMatrix::from_element(1, 1, n.lambda),
    )
    .unwrap()
}

fn prior_1d(shape: f64, rate: f64, n: &Niw1) -> RfsPrior {
    RfsPrior::new(GammaParams::new(shape, rate).unwrap(), niw(n))
}

fn random_sets_1d(rng: &mut ChaCha8Rng, count: usize, max_len: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let n = rng.random_range(0..=max_len);
            (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
        })
        .collect()
}

fn random_pattern_2d(rng: &mut ChaCha8Rng, max_len: usize) -> PointPattern {
    let n = rng.random_range(0..=max_len);
    let coords = (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect();
    PointPattern::from_flat(2, coords).unwrap()
}

fn niw_2d() -> NiwParams {
    NiwParams::new(
        DVector::from_vec(vec![0.5, -0.2]),
        0.7,
        4.5,
        DMatrix::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.9]),
    )
    .unwrap()
}

#[test]
fn hand_evaluated_posterior_update() {
    let prior = Niw1 {
        mu: 0.0,
        kappa: 1.0,
        nu: 3.0,
        lambda: 1.0,
    };
    let stats = SetSufficientStats::from_patterns(1, [&pattern_1d(&[2.0])]).unwrap();
    let post = niw_posterior(&niw(&prior), &stats).unwrap();
    assert!((post.mean_loc()[0] - 1.0).abs() < 1e-15);
    assert_eq!(post.mean_scale(), 2.0);
    assert_eq!(post.dof(), 4.0);
    // Λ₀ + κ₀·1/(κ₀+1)·(2 - 0)² = 1 + 2
    assert!((post.scale_matrix()[(0, 0)] - 3.0).abs() < 1e-12);

    let rates = gamma_posterior(&GammaParams::new(1.0, 1.0).unwrap(), &stats);
    assert_eq!((rates.shape(), rates.rate()), (2.0, 2.0));
}

#[test]
fn posterior_matches_independent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..25 {
        let oracle = Niw1 {
            mu: rng.random_range(-1.0..1.0),
            kappa: rng.random_range(0.05..3.0),
            nu: rng.random_range(0.5..6.0),
            lambda: rng.random_range(0.2..4.0),
        };
        let sets = random_sets_1d(&mut rng, 6, 4);
        let patterns: Vec<PointPattern> = sets.iter().map(|s| pattern_1d(s)).collect();
        let stats = SetSufficientStats::from_patterns(1, &patterns).unwrap();
        let pooled: Vec<f64> = sets.iter().flatten().copied().collect();
        let want = oracle.posterior(&pooled);
        let got = niw_posterior(&niw(&oracle), &stats).unwrap();
        assert!((got.mean_loc()[0] - want.mu).abs() < 1e-10);
        assert!((got.mean_scale() - want.kappa).abs() < 1e-12);
        assert!((got.dof() - want.nu).abs() < 1e-12);
        assert!((got.scale_matrix()[(0, 0)] - want.lambda).abs() < 1e-9 * want.lambda.max(1.0));

        let prior = prior_1d(1.5, 0.8, &oracle);
        let got = log_marginal_stats(&prior, &stats).unwrap();
        let want = set_log_marginal_1d(1.5, 0.8, &oracle, &sets);
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn predictive_cardinality_sums_to_one() {
    for &(a, b) in &[(1.0, 1.0), (6.0, 3.0), (101.0, 3.0), (0.5, 0.2), (20.0, 40.0)] {
        let post = GammaParams::new(a, b).unwrap();
        let total: f64 = (0..=2000)
            .map(|n| (log_predictive_cardinality(&post, n) - ln_factorial(n as u64)).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "({a}, {b}): {total}");
    }
}

#[test]
fn predictive_is_a_ratio_of_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let prior = RfsPrior::new(GammaParams::new(2.0, 0.5).unwrap(), niw_2d());
    for _ in 0..20 {
        let given: Vec<PointPattern> = (0..rng.random_range(0..5))
            .map(|_| random_pattern_2d(&mut rng, 4))
            .collect();
        let x = random_pattern_2d(&mut rng, 4);
        let stats = SetSufficientStats::from_patterns(2, &given).unwrap();
        let grown = stats.with_added(&x).unwrap();
        let ratio = log_marginal_stats(&prior, &grown).unwrap() - log_marginal_stats(&prior, &stats).unwrap();
        let pred = log_predictive_set(&prior, &stats, &x).unwrap();
        assert!((pred - ratio).abs() < 1e-8, "{pred} vs {ratio}");
    }
}

#[test]
fn point_chain_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let prior = niw_2d();
    for _ in 0..20 {
        let x = random_pattern_2d(&mut rng, 8);
        let stats = SetSufficientStats::from_patterns(2, [&x]).unwrap();
        let chain = log_marginal_points(&prior, &x).unwrap();
        let ratio = log_marginal_niw(&prior, &stats).unwrap();
        assert!((chain - ratio).abs() < 1e-8 * ratio.abs().max(1.0));
    }
}

#[test]
fn sequential_updates_equal_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let prior = niw_2d();
    let sets: Vec<PointPattern> = (0..12).map(|_| random_pattern_2d(&mut rng, 5)).collect();
    let batch = SetSufficientStats::from_patterns(2, &sets).unwrap();
    let mut running = SetSufficientStats::empty(2);
    for s in &sets {
        running.add(s).unwrap();
    }
    assert_eq!(running.num_sets(), batch.num_sets());
    assert_eq!(running.total_points(), batch.total_points());
    let a = niw_posterior(&prior, &batch).unwrap();
    let b = niw_posterior(&prior, &running).unwrap();
    assert!((a.scale_matrix() - b.scale_matrix()).amax() < 1e-10);
    assert!((a.mean_loc() - b.mean_loc()).amax() < 1e-12);

    // Posterior of a posterior equals the posterior of the union.
    let (first, second) = sets.split_at(5);
    let mid = niw_posterior(&prior, &SetSufficientStats::from_patterns(2, first).unwrap()).unwrap();
    let two_step = niw_posterior(&mid, &SetSufficientStats::from_patterns(2, second).unwrap()).unwrap();
    assert!((two_step.scale_matrix() - a.scale_matrix()).amax() < 1e-9);
    assert!((two_step.mean_loc() - a.mean_loc()).amax() < 1e-12);
    assert!((two_step.mean_scale() - a.mean_scale()).abs() < 1e-12);
}

/// `Σ_n (1/n!) ∫ p({x_1..x_n}) dx = 1`, with each cardinality term equal to
/// the Poisson pmf.
#[test]
fn rfs_density_integrates_to_one() {
    let rate = 1.7;
    let params = PoissonRfsParams::new(
        rate,
        GaussianParams::new(DVector::from_element(1, 0.3), DMatrix::from_element(1, 1, 0.8)).unwrap(),
    )
    .unwrap();
    let (lo, hi, m) = (-8.0, 8.6, 400usize);
    let h = (hi - lo) / m as f64;
    let grid: Vec<f64> = (0..m).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let empty = log_poisson_rfs_density(&PointPattern::empty(1).unwrap(), &params).unwrap().exp();
    let one: f64 = grid
        .iter()
        .map(|&x| log_poisson_rfs_density(&pattern_1d(&[x]), &params).unwrap().exp() * h)
        .sum();
    let mut two = 0.0;
    for &x in &grid {
        for &y in &grid {
            two += log_poisson_rfs_density(&pattern_1d(&[x, y]), &params).unwrap().exp() * h * h;
        }
    }
    two /= 2.0;
    for (n, term) in [empty, one, two].into_iter().enumerate() {
        let pmf = log_cardinality_pmf(n, rate).exp();
        assert!((term - pmf).abs() < 1e-9, "n = {n}: {term} vs {pmf}");
    }
}

#[test]
fn sampled_cardinalities_follow_the_pmf() {
    let rate = 3.0;
    let params = PoissonRfsParams::new(rate, GaussianParams::standard(2).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 100_000;
    let mut counts = [0usize; 10];
    for _ in 0..draws {
        let n = sample_poisson_rfs(&params, &mut rng).len();
        counts[n.min(9)] += 1;
    }
    let mut chi2 = 0.0;
    let mut tail = 1.0;
    for (n, &c) in counts.iter().enumerate() {
        let p = if n < 9 {
            let p = log_cardinality_pmf(n, rate).exp();
            tail -= p;
            p
        } else {
            tail
        };
        let expected = p * draws as f64;
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    // 9 degrees of freedom; the 99.9% quantile is 27.9.
    assert!(chi2 < 27.9, "chi-square {chi2}");
}

#[test]
fn large_rate_counts_obey_the_clt() {
    let rate = 100.0;
    let params = PoissonRfsParams::new(rate, GaussianParams::standard(1).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = 20_000;
    let counts: Vec<f64> = (0..draws)
        .map(|_| sample_poisson_rfs(&params, &mut rng).len() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / draws as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    assert!((mean - rate).abs() < 4.0 * (rate / draws as f64).sqrt(), "mean {mean}");
    assert!((var / rate - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn predictive_agrees_with_posterior_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let prior = RfsPrior::new(GammaParams::new(2.0, 1.0).unwrap(), niw_2d());
    for _ in 0..3 {
        let given: Vec<PointPattern> = (0..4).map(|_| random_pattern_2d(&mut rng, 3)).collect();
        let x = random_pattern_2d(&mut rng, 2);
        let stats = SetSufficientStats::from_patterns(2, &given).unwrap();
        let rate_post = gamma_posterior(&prior.rate_prior, &stats);
        let feature_post = niw_posterior(&prior.feature_prior, &stats).unwrap();
        let draws = 20_000;
        let values: Vec<f64> = (0..draws)
            .map(|_| {
                let params = PoissonRfsParams::new(rate_post.sample(&mut rng), feature_post.sample(&mut rng)).unwrap();
                log_poisson_rfs_density(&x, &params).unwrap().exp()
            })
            .collect();
        let mean = values.iter().sum::<f64>() / draws as f64;
        let se = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws * (draws - 1)) as f64).sqrt();
        let exact = log_predictive_set(&prior, &stats, &x).unwrap().exp();
        assert!((mean - exact).abs() < 4.0 * se, "{mean} ± {se} vs {exact}");
    }
}

#[test]
fn independent_density_oracle_1d() {
    let params = PoissonRfsParams::new(
        2.5,
        GaussianParams::new(DVector::from_element(1, -0.4), DMatrix::from_element(1, 1, 1.7)).unwrap(),
    )
    .unwrap();
    let xs = [0.1, -2.0, 1.3];
    let want = -2.5 + 3.0 * 2.5f64.ln() + xs.iter().map(|&x| normal_log_density(x, -0.4, 1.7)).sum::<f64>();
    let got = log_poisson_rfs_density(&pattern_1d(&xs), &params).unwrap();
    assert!((got - want).abs() < 1e-12);
}

proptest! {
    #[test]
    fn add_then_remove_restores_stats(
        base in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 0..8), 1..6),
        extra in prop::collection::vec(-50.0f64..50.0, 0..8),
    ) {
        let to_pattern = |flat: &Vec<f64>| {
            let even = flat.len() / 2 * 2;
            PointPattern::from_flat(2, flat[..even].to_vec()).unwrap()
        };
        let patterns: Vec<PointPattern> = base.iter().map(to_pattern).collect();
        let x = to_pattern(&extra);
        let stats = SetSufficientStats::from_patterns(2, &patterns).unwrap();
        let round_trip = stats.with_added(&x).unwrap().with_removed(&x).unwrap();
        prop_assert_eq!(round_trip.num_sets(), stats.num_sets());
        prop_assert_eq!(round_trip.total_points(), stats.total_points());
        prop_assert!((round_trip.point_sum() - stats.point_sum()).amax() < 1e-9);
        prop_assert!((round_trip.point_scatter() - stats.point_scatter()).amax() < 1e-7);

        let mut drained = stats.clone();
        for p in &patterns {
            drained.remove(p).unwrap();
        }
        prop_assert!(drained.is_empty());
        prop_assert_eq!(drained.point_scatter().amax(), 0.0);
    }
}
