mod common;

use common::*;
use elicit_core::posterior::{self, FitConfig};
use elicit_core::{pl, Dataset, Error, GaussianPosterior, Parameter, Question, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn pairwise_data<R: Rng>(rng: &mut R, s: &Scenario, truth: &Parameter, n: usize) -> Dataset {
    let m = s.num_alternatives();
    let agents = s.agents().len();
    (0..n)
        .map(|_| {
            let a = rng.random_range(0..m);
            let b = (a + rng.random_range(1..m)) % m;
            let q = Question::pairwise(a, b).unwrap();
            pl::sample_response(s, rng.random_range(0..agents), &q, truth, rng).unwrap()
        })
        .collect()
}

fn mixed_data<R: Rng>(rng: &mut R, s: &Scenario, truth: &Parameter, n: usize) -> Dataset {
    let m = s.num_alternatives();
    (0..n)
        .map(|_| {
            let l = rng.random_range(2..=m);
            let k = rng.random_range(1..l);
            let subset = rand::seq::index::sample(rng, m, l).into_vec();
            let q = Question::new(subset, k).unwrap();
            pl::sample_response(s, rng.random_range(0..s.agents().len()), &q, truth, rng).unwrap()
        })
        .collect()
}

fn total_gradient(s: &Scenario, data: &Dataset, b: &Parameter, cfg: &FitConfig) -> DVector<f64> {
    let mut g = -b.to_vector() / cfg.prior_std.powi(2);
    for r in data.entries() {
        g += pl::response_grad(s, r, b).unwrap();
    }
    g
}

#[test]
fn estimate_is_stationary_and_beats_random_search() {
    let mut r = rng(21);
    let cfg = FitConfig::default();
    for _ in 0..20 {
        let s = random_scenario(&mut r, 5, 2, 2, 1, 3);
        let truth = random_parameter(&mut r, 2, 2, 0.7);
        let data = mixed_data(&mut r, &s, &truth, 40);
        let est = posterior::cml_estimate(&s, &data, &Parameter::zeros(2, 2), &cfg).unwrap();
        assert!(total_gradient(&s, &data, &est, &cfg).norm() <= 1e-8);
        let best = posterior::composite_log_likelihood(&s, &data, &est, &cfg).unwrap();
        for scale in [1e-3, 1e-2, 1e-1, 1.0] {
            for _ in 0..25 {
                let v: Vec<f64> = est
                    .as_slice()
                    .iter()
                    .map(|x| x + scale * r.sample::<f64, _>(StandardNormal))
                    .collect();
                let p = Parameter::from_vec(2, 2, v).unwrap();
                assert!(posterior::composite_log_likelihood(&s, &data, &p, &cfg).unwrap() <= best + 1e-12);
            }
        }
    }
}

#[test]
fn objective_is_concave_along_random_chords() {
    let mut r = rng(22);
    let cfg = FitConfig::default();
    let s = random_scenario(&mut r, 6, 3, 2, 1, 4);
    let truth = random_parameter(&mut r, 3, 2, 0.5);
    let data = mixed_data(&mut r, &s, &truth, 30);
    for _ in 0..200 {
        let a = random_parameter(&mut r, 3, 2, 2.0);
        let b = random_parameter(&mut r, 3, 2, 2.0);
        let mid = Parameter::from_vector(3, 2, &((a.to_vector() + b.to_vector()) * 0.5)).unwrap();
        let f = |p: &Parameter| posterior::composite_log_likelihood(&s, &data, p, &cfg).unwrap();
        assert!(f(&mid) >= 0.5 * (f(&a) + f(&b)) - 1e-9);
    }
}

#[test]
fn estimate_ignores_data_order() {
    let mut r = rng(23);
    let cfg = FitConfig::default();
    let s = random_scenario(&mut r, 5, 2, 3, 2, 3);
    let truth = random_parameter(&mut r, 2, 3, 0.6);
    let data = mixed_data(&mut r, &s, &truth, 60);
    let mut reversed: Vec<_> = data.entries().to_vec();
    reversed.reverse();
    let a = posterior::fit_posterior(&s, &data, &Parameter::zeros(2, 3), &cfg).unwrap();
    let b = posterior::fit_posterior(&s, &reversed.into_iter().collect(), &Parameter::zeros(2, 3), &cfg).unwrap();
    assert!((a.mean() - b.mean()).amax() < 1e-8);
    assert!((a.precision() - b.precision()).amax() < 1e-8 * a.precision().amax());
}

#[test]
fn precision_is_negative_jacobian_of_the_gradient() {
    let mut r = rng(24);
    let cfg = FitConfig::default();
    for _ in 0..10 {
        let s = random_scenario(&mut r, 5, 2, 2, 1, 2);
        let truth = random_parameter(&mut r, 2, 2, 0.8);
        let data = mixed_data(&mut r, &s, &truth, 25);
        let post = posterior::fit_posterior(&s, &data, &Parameter::zeros(2, 2), &cfg).unwrap();
        let jac = central_jacobian(
            |v| total_gradient(&s, &data, &Parameter::from_vector(2, 2, v).unwrap(), &cfg),
            post.mean(),
            1e-5,
        );
        assert!(rel_err(post.precision(), &(-jac)) < 1e-6);
    }
}

#[test]
fn empty_data_gives_the_prior() {
    let mut r = rng(25);
    let s = random_scenario(&mut r, 3, 2, 2, 1, 1);
    let post = posterior::fit_posterior(&s, &Dataset::new(), &Parameter::zeros(2, 2), &FitConfig::default()).unwrap();
    assert_eq!(post.mean().amax(), 0.0);
    assert!((post.precision() - DMatrix::identity(4, 4) * 0.01).amax() < 1e-15);
    let prior = GaussianPosterior::prior(2, 2, 10.0);
    assert_eq!(prior.precision(), post.precision());
}

#[test]
fn difference_statistics_match_posterior_samples() {
    let mut r = rng(26);
    let s = random_scenario(&mut r, 4, 2, 2, 1, 2);
    let truth = random_parameter(&mut r, 2, 2, 0.8);
    let data = pairwise_data(&mut r, &s, &truth, 30);
    let post = posterior::fit_posterior(&s, &data, &Parameter::zeros(2, 2), &FitConfig::default()).unwrap();
    let chol = post.covariance().clone().cholesky().unwrap();
    let n = 40_000;
    let stats = posterior::utility_diff_stats(&s, &post, 1, 0, 3).unwrap();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let z = DVector::from_fn(4, |_, _| r.sample::<f64, _>(StandardNormal));
        let beta = post.mean() + chol.l() * z;
        let p = Parameter::from_vector(2, 2, &beta).unwrap();
        let d = utility_oracle(&s, &p, 1, 0) - utility_oracle(&s, &p, 1, 3);
        sum += d;
        sum_sq += d * d;
    }
    let mean = sum / n as f64;
    let var = sum_sq / n as f64 - mean * mean;
    assert!((mean - stats.mean).abs() < 5.0 * stats.std / (n as f64).sqrt());
    // the sample variance has relative standard error sqrt(2/n) ≈ 0.7%
    assert!((var / stats.variance - 1.0).abs() < 0.04);
}

#[test]
fn hypothetical_information_only_grows_the_diagonal() {
    let mut r = rng(27);
    let s = random_scenario(&mut r, 5, 3, 2, 1, 3);
    let truth = random_parameter(&mut r, 3, 2, 0.5);
    let data = pairwise_data(&mut r, &s, &truth, 20);
    let post = posterior::fit_posterior(&s, &data, &Parameter::zeros(3, 2), &FitConfig::default()).unwrap();
    for resp in mixed_data(&mut r, &s, &truth, 50).entries() {
        let j = posterior::hypothetical_precision(&s, &post, resp).unwrap();
        for i in 0..6 {
            assert!(j[(i, i)] >= post.precision()[(i, i)] - 1e-12);
        }
        let diff = &j - post.precision();
        assert!(nalgebra::SymmetricEigen::new(diff).eigenvalues.min() > -1e-10);
    }
}

#[test]
fn non_convergence_carries_the_last_iterate() {
    let mut r = rng(28);
    let s = random_scenario(&mut r, 5, 2, 2, 1, 3);
    let truth = random_parameter(&mut r, 2, 2, 1.0);
    let data = mixed_data(&mut r, &s, &truth, 40);
    let cfg = FitConfig {
        max_iterations: 1,
        ..FitConfig::default()
    };
    let far = Parameter::from_vec(2, 2, vec![5.0, -5.0, 5.0, -5.0]).unwrap();
    match posterior::cml_estimate(&s, &data, &far, &cfg) {
        Err(Error::Convergence {
            last, gradient_norm, ..
        }) => {
            assert!(gradient_norm > 1e-8);
            assert_ne!(*last, far);
        }
        other => panic!("expected a convergence error, got {other:?}"),
    }
}

#[test]
fn vanishing_variance_uses_the_floor() {
    let s = Scenario::new(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![1.0]], 1).unwrap();
    let post = GaussianPosterior::new(
        &Parameter::from_vec(2, 1, vec![0.3, 0.1]).unwrap(),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let d = posterior::utility_diff_stats(&s, &post, 0, 0, 1).unwrap();
    assert_eq!(d.std, posterior::STD_FLOOR);
    assert_eq!(d.certainty(), 0.0);
}
