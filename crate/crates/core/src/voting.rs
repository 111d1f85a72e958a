//! Randomized voting rules and winner distributions.
//!
//! A randomized scoring rule picks each alternative with probability
//! proportional to its score. Under uncertain preferences the winner
//! probability is proportional to the summed expected scores of the key
//! agents, which Plackett-Luce gives in closed form for plurality (top-choice
//! probabilities) and Borda (sums of pairwise probabilities).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Parameter, Scenario};
use crate::pl::{self, SubsetFeatures};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerDistribution(Vec<f64>);

impl WinnerDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain(
                "winner probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("winner probabilities sum to {total}")));
        }
        Ok(Self(probabilities))
    }

    /// Normalizes non-negative scores.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        let total: f64 = scores.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::Domain("scores sum to zero".into()));
        }
        Self::new(scores.iter().map(|s| s / total).collect())
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Alternative with the highest probability, lowest id on ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Plurality,
    Borda,
}

/// Full rankings of the key agents, one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    m: usize,
    rankings: Vec<Vec<usize>>,
}

impl Profile {
    pub fn new(m: usize, rankings: Vec<Vec<usize>>) -> Result<Self> {
        for r in &rankings {
            let mut seen = vec![false; m];
            if r.len() != m || !r.iter().all(|&i| i < m && !std::mem::replace(&mut seen[i], true)) {
                return Err(Error::Domain(format!("{r:?} is not a ranking of {m} alternatives")));
            }
        }
        if rankings.is_empty() {
            return Err(Error::Domain("profile needs at least one ranking".into()));
        }
        Ok(Self { m, rankings })
    }

    pub fn rankings(&self) -> &[Vec<usize>] {
        &self.rankings
    }

    pub fn scores(&self, rule: Rule) -> Vec<f64> {
        let mut s = vec![0.0; self.m];
        for r in &self.rankings {
            match rule {
                Rule::Plurality => s[r[0]] += 1.0,
                Rule::Borda => {
                    for (pos, &alt) in r.iter().enumerate() {
                        s[alt] += (self.m - 1 - pos) as f64;
                    }
                }
            }
        }
        s
    }
}

pub fn profile_winner_dist(profile: &Profile, rule: Rule) -> Result<WinnerDistribution> {
    WinnerDistribution::from_scores(&profile.scores(rule))
}

fn key_agent_ids(scenario: &Scenario) -> Result<std::ops::Range<usize>> {
    if scenario.n_key() == 0 {
        return Err(Error::Domain("no key agents".into()));
    }
    Ok(0..scenario.n_key())
}

/// Probabilistic plurality (random dictatorship): the average top-choice
/// distribution of the key agents.
pub fn plurality_winner_dist(scenario: &Scenario, param: &Parameter) -> Result<WinnerDistribution> {
    let m = scenario.num_alternatives();
    let mut acc = vec![0.0; m];
    let agents = key_agent_ids(scenario)?;
    let n = agents.len() as f64;
    for j in agents {
        let p = pl::choice_probs(scenario.agent(j)?, scenario.alternatives(), param)?;
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v / n;
        }
    }
    renormalized(acc)
}

/// Probabilistic Borda: expected Borda score of `a_i` for one agent equals
/// `Σ_{i'≠i} Pr(a_i ≻ a_i')`; the scores over all key agents sum to
/// `n1·m(m−1)/2`.
pub fn borda_winner_dist(scenario: &Scenario, param: &Parameter) -> Result<WinnerDistribution> {
    let m = scenario.num_alternatives();
    let agents = key_agent_ids(scenario)?;
    let normalizer = (agents.len() * m * (m - 1)) as f64 / 2.0;
    let mut acc = vec![0.0; m];
    for j in agents {
        let agent = scenario.agent(j)?;
        let u = scenario
            .alternatives()
            .iter()
            .map(|a| pl::utility(agent, a, param))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..m {
            for i2 in i + 1..m {
                let p = pl::logistic(u[i] - u[i2]);
                acc[i] += p;
                acc[i2] += 1.0 - p;
            }
        }
    }
    renormalized(acc.into_iter().map(|s| s / normalizer).collect())
}

fn renormalized(p: Vec<f64>) -> Result<WinnerDistribution> {
    // absorb the last few ulps of rounding
    let total: f64 = p.iter().sum();
    WinnerDistribution::new(p.into_iter().map(|v| v / total).collect())
}

/// Winner distribution of an arbitrary positional scoring rule, estimating
/// each key agent's expected scores from `samples` sampled full rankings.
pub fn expected_score_winner_dist<R: Rng + ?Sized>(
    scenario: &Scenario,
    param: &Parameter,
    score_vector: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<WinnerDistribution> {
    let m = scenario.num_alternatives();
    if score_vector.len() != m {
        return Err(Error::Domain(format!(
            "score vector has {} entries, need {m}",
            score_vector.len()
        )));
    }
    if score_vector.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Domain("scores must be finite and non-negative".into()));
    }
    if score_vector.iter().all(|s| *s == score_vector[0]) {
        return Err(Error::Domain(
            "all-equal score vector does not distinguish alternatives".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    scenario.check_parameter(param)?;
    let all: Vec<usize> = (0..m).collect();
    let beta = param.to_vector();
    let mut acc = vec![0.0; m];
    for j in key_agent_ids(scenario)? {
        let feats = SubsetFeatures::new(scenario, j, &all)?;
        let u = feats.utilities(&beta);
        for _ in 0..samples {
            let order = feats.sample_positions(&u, m - 1, rng);
            let mut placed = vec![false; m];
            for (pos, &alt) in order.iter().enumerate() {
                acc[alt] += score_vector[pos];
                placed[alt] = true;
            }
            let last = placed.iter().position(|p| !p).expect("one left");
            acc[last] += score_vector[m - 1];
        }
    }
    WinnerDistribution::from_scores(&acc)
}

/// Half the L1 distance between two distributions.
pub fn total_variation(p: &WinnerDistribution, q: &WinnerDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Domain(format!(
            "distributions over {} and {} alternatives",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.0.iter().zip(&q.0).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
