//! Test-side oracles, written from the model definitions without reusing the
//! library's numerics.

#![allow(dead_code)]

use elicit_core::voting::{self, Profile, Rule};
use elicit_core::{Parameter, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_rows<R: Rng>(rng: &mut R, n: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

pub fn random_scenario<R: Rng>(rng: &mut R, m: usize, k: usize, l: usize, n_key: usize, n_regular: usize) -> Scenario {
    Scenario::new(
        normal_rows(rng, m, k, 1.0),
        normal_rows(rng, n_key + n_regular, l, 1.0),
        n_key,
    )
    .unwrap()
}

pub fn random_parameter<R: Rng>(rng: &mut R, k: usize, l: usize, scale: f64) -> Parameter {
    Parameter::from_rows(&normal_rows(rng, k, l, scale)).unwrap()
}

/// `zᵀ B x` summed entry by entry.
pub fn utility_oracle(scenario: &Scenario, param: &Parameter, agent: usize, alt: usize) -> f64 {
    let z = &scenario.alternatives()[alt].attributes;
    let x = &scenario.agents()[agent].attributes;
    let mut u = 0.0;
    for (kappa, zk) in z.iter().enumerate() {
        for (iota, xi) in x.iter().enumerate() {
            u += zk * param.get(kappa, iota) * xi;
        }
    }
    u
}

/// Probability of the exact sequence `order` (all of `items`, or a prefix of
/// it) under Plackett-Luce weights `exp(u)`, computed with plain exponentials.
pub fn sequence_prob(u: &[f64], items: &[usize], order: &[usize]) -> f64 {
    let mut remaining: Vec<usize> = items.to_vec();
    let mut p = 1.0;
    for &pick in order {
        let denom: f64 = remaining.iter().map(|&i| u[i].exp()).sum();
        p *= u[pick].exp() / denom;
        remaining.retain(|&i| i != pick);
    }
    p
}

/// All permutations of `items`.
pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

/// Probability of a top-k answer by summing full-ranking probabilities over
/// every completion of the prefix.
pub fn marginal_prefix_prob(u: &[f64], subset: &[usize], prefix: &[usize]) -> f64 {
    permutations(subset)
        .into_iter()
        .filter(|r| r[..prefix.len()] == *prefix)
        .map(|r| sequence_prob(u, subset, &r))
        .sum()
}

pub fn central_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += h;
        minus[i] -= h;
        g[i] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    g
}

/// Jacobian of a vector-valued function by central differences.
pub fn central_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += h;
        minus[i] -= h;
        let col = (f(&plus) - f(&minus)) / (2.0 * h);
        jac.set_column(i, &col);
    }
    jac
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

/// Random symmetric positive definite matrix `A Aᵀ + δ I`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, delta: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(n, n) * delta
}

/// Determinant by Laplace expansion along the first row.
pub fn cofactor_det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 1 {
        return m[(0, 0)];
    }
    let mut det = 0.0;
    for col in 0..n {
        let minor = m.clone().remove_row(0).remove_column(col);
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        det += sign * m[(0, col)] * cofactor_det(&minor);
    }
    det
}

/// Smallest eigenvalue of an SPD matrix by inverse power iteration.
pub fn inverse_power_min_eigen(m: &DMatrix<f64>, iterations: usize) -> f64 {
    let lu = m.clone().lu();
    let n = m.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + i as f64 * 0.37);
    v /= v.norm();
    for _ in 0..iterations {
        let w = lu.solve(&v).expect("invertible");
        v = &w / w.norm();
    }
    (v.transpose() * m * &v)[(0, 0)]
}

/// Winner distribution by summing over every profile of full rankings.
pub fn enumerated_winner_dist(s: &Scenario, b: &Parameter, rule: Rule) -> Vec<f64> {
    let m = s.num_alternatives();
    let n1 = s.n_key();
    let items: Vec<usize> = (0..m).collect();
    let perms = permutations(&items);
    let utilities: Vec<Vec<f64>> = (0..n1)
        .map(|j| (0..m).map(|i| utility_oracle(s, b, j, i)).collect())
        .collect();
    let mut out = vec![0.0; m];
    let mut idx = vec![0usize; n1];
    loop {
        let rankings: Vec<Vec<usize>> = idx.iter().map(|&p| perms[p].clone()).collect();
        let prob: f64 = rankings
            .iter()
            .enumerate()
            .map(|(j, r)| sequence_prob(&utilities[j], &items, r))
            .product();
        let winners = voting::profile_winner_dist(&Profile::new(m, rankings).unwrap(), rule).unwrap();
        for (o, w) in out.iter_mut().zip(winners.probabilities()) {
            *o += prob * w;
        }
        let mut pos = 0;
        loop {
            if pos == n1 {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] < perms.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
