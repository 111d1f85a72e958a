//! Candidate designs, their dollar costs, and cost-effective selection.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{CriterionKind, CriterionSpec, PreparedCriterion};
use crate::error::{Error, Result};
use crate::model::{Group, Question, Scenario};
use crate::pl::{self, SubsetFeatures};
use crate::posterior::GaussianPosterior;
use crate::seed;

/// Slack used when comparing a cost against the remaining budget, so that a
/// budget spent down by repeated float subtraction still admits exact fits.
pub const BUDGET_EPS: f64 = 1e-12;

/// One agent asked one question.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Design {
    pub agent: usize,
    pub question: Question,
}

impl Design {
    pub fn new(scenario: &Scenario, agent: usize, question: Question) -> Result<Self> {
        if scenario.agent(agent)?.group != Group::Regular {
            return Err(Error::Domain(format!("agent {agent} is not in the regular group")));
        }
        scenario.check_question(&question)?;
        Ok(Self { agent, question })
    }

    /// Position-independent seed word identifying this design.
    fn key(&self, parent: u64) -> u64 {
        seed::fold(
            parent,
            [self.agent as u64, self.question.depth() as u64]
                .into_iter()
                .chain(self.question.subset().iter().map(|&i| i as u64)),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostModel {
    /// Linear fits of answering time for hotel rankings with four attributes:
    /// full ranking of `l` costs `0.0047·l`, top-k of 10 costs `0.0012·k + 0.028`.
    #[default]
    MturkHotels,
    /// Explicit `(k, l) → dollars`.
    Table(BTreeMap<(usize, usize), f64>),
}

impl CostModel {
    pub fn table(entries: impl IntoIterator<Item = ((usize, usize), f64)>) -> Result<Self> {
        let map: BTreeMap<_, _> = entries.into_iter().collect();
        if let Some(((k, l), c)) = map.iter().find(|(_, c)| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Config(format!(
                "cost for (k={k}, l={l}) must be positive, got {c}"
            )));
        }
        Ok(CostModel::Table(map))
    }

    /// Parses lines of `k,l,dollars`; a `k,l,...` header, blank lines and `#`
    /// comments are skipped.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Parse(format!("cost table line {}: {line:?}", n + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            if entries.is_empty() && fields[0] == "k" {
                continue;
            }
            let k = fields[0].parse::<usize>().map_err(|_| bad())?;
            let l = fields[1].parse::<usize>().map_err(|_| bad())?;
            let c = fields[2].parse::<f64>().map_err(|_| bad())?;
            entries.push(((k, l), c));
        }
        Self::table(entries)
    }

    pub fn load_table(path: &Path) -> Result<Self> {
        Self::parse_table(&std::fs::read_to_string(path)?)
    }

    pub fn cost_of(&self, k: usize, l: usize) -> Result<f64> {
        match self {
            CostModel::MturkHotels => {
                if k + 1 == l {
                    Ok(0.0047 * l as f64)
                } else if l == 10 && (1..9).contains(&k) {
                    Ok(0.0012 * k as f64 + 0.028)
                } else {
                    Err(Error::Cost { k, l })
                }
            }
            CostModel::Table(t) => t.get(&(k, l)).copied().ok_or(Error::Cost { k, l }),
        }
    }

    pub fn cost(&self, q: &Question) -> Result<f64> {
        self.cost_of(q.depth(), q.size())
    }
}

/// Where subsets come from for templates with `2 < l < m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SubsetPolicy {
    /// Use exactly these subsets (those of the template's size).
    Explicit(Vec<Vec<usize>>),
    /// Draw `count` distinct subsets per agent and template from a seeded
    /// stream, or every subset when fewer exist.
    Sampled { count: usize, seed: u64 },
}

impl Default for SubsetPolicy {
    fn default() -> Self {
        SubsetPolicy::Sampled { count: 10, seed: 0 }
    }
}

/// Enumerates the candidate designs for `templates` of `(k, l)` over the regular group.
pub fn build_design_space(
    scenario: &Scenario,
    templates: &[(usize, usize)],
    policy: &SubsetPolicy,
) -> Result<Vec<Design>> {
    let m = scenario.num_alternatives();
    let mut out = Vec::new();
    for &(k, l) in templates {
        if l < 2 || l > m || k == 0 || k >= l {
            return Err(Error::Config(format!("template (k={k}, l={l}) invalid for m={m}")));
        }
        for agent in scenario.regular_agents() {
            let subsets: Vec<Vec<usize>> = if l == m {
                vec![(0..m).collect()]
            } else if l == 2 {
                (0..m).flat_map(|a| (a + 1..m).map(move |b| vec![a, b])).collect()
            } else {
                match policy {
                    SubsetPolicy::Explicit(list) => list.iter().filter(|s| s.len() == l).cloned().collect(),
                    SubsetPolicy::Sampled { count, seed: s } => {
                        let mut rng = seed::rng(seed::fold(
                            *s,
                            [seed::tags::SUBSETS, k as u64, l as u64, agent.id as u64],
                        ));
                        // distinct subsets, so no design appears twice
                        let target = (*count as u128).min(binomial(m, l)) as usize;
                        let mut seen = std::collections::HashSet::new();
                        let mut picked = Vec::with_capacity(target);
                        while picked.len() < target {
                            let mut v = sample(&mut rng, m, l).into_vec();
                            v.sort_unstable();
                            if seen.insert(v.clone()) {
                                picked.push(v);
                            }
                        }
                        picked
                    }
                }
            };
            for subset in subsets {
                out.push(Design::new(scenario, agent.id, Question::new(subset, k)?)?);
            }
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k as u128).fold(1, |acc: u128, i| acc.saturating_mul(n as u128 - i) / (i + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainConfig {
    pub enumeration_cap: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            enumeration_cap: pl::DEFAULT_ENUMERATION_CAP,
            mc_samples: 32,
            seed: 0,
        }
    }
}

impl GainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enumeration_cap == 0 || self.mc_samples == 0 {
            return Err(Error::Config(
                "enumeration cap and Monte Carlo samples must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn gain(after: f64, before: f64) -> f64 {
    if after == before {
        0.0
    } else {
        after - before
    }
}

/// Expected criterion gain of designs against one posterior.
///
/// Responses are weighted by their probability at the posterior mean; each
/// hypothetical answer adds its observed information to the precision
/// without moving the mean.
///
/// D-optimality gains are determinant gains, `E[det J'] − det J`, reported
/// in units of the current `det J` as `E[exp(ln det J' − ln det J)] − 1`.
/// The common factor cancels in every comparison between designs, and the
/// log domain keeps large precisions from overflowing. Gains of log det
/// itself would rank designs differently once divided by their costs.
pub struct GainScorer<'a> {
    scenario: &'a Scenario,
    post: &'a GaussianPosterior,
    criterion: PreparedCriterion,
    base: f64,
    relative_det: bool,
    cfg: GainConfig,
    mean: DVector<f64>,
}

impl<'a> GainScorer<'a> {
    pub fn new(
        scenario: &'a Scenario,
        post: &'a GaussianPosterior,
        spec: &CriterionSpec,
        cfg: GainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let criterion = PreparedCriterion::new(spec, scenario, post)?;
        let base = criterion.value(post.precision());
        Ok(Self {
            scenario,
            post,
            criterion,
            base,
            relative_det: spec.kind == CriterionKind::DOpt,
            cfg,
            mean: post.mean().clone(),
        })
    }

    pub fn base_value(&self) -> f64 {
        self.base
    }

    fn value_after(&self, feats: &SubsetFeatures, u: &DVector<f64>, order: &[usize], depth: usize) -> f64 {
        let h = feats.hessian(u, order, depth);
        let mut j = self.post.precision() - h;
        j = (&j + j.transpose()) * 0.5;
        let v = self.criterion.value(&j);
        if self.relative_det {
            (v - self.base).exp()
        } else {
            v
        }
    }

    pub fn expected_gain(&self, design: &Design) -> Result<f64> {
        let q = &design.question;
        let feats = SubsetFeatures::new(self.scenario, design.agent, q.subset())?;
        let u = feats.utilities(&self.mean);
        let depth = q.depth();
        let expected = if pl::response_count(q) <= self.cfg.enumeration_cap as u128 {
            // The information of an answer depends only on the stage sets,
            // i.e. on the ranked prefix without its last entry.
            let mut total = 0.0;
            let mut group: Option<(Vec<usize>, Vec<usize>, f64)> = None;
            for ranking in pl::enumerate_rankings(q, self.cfg.enumeration_cap)? {
                let order = feats.stage_order(&ranking)?;
                let p = feats.log_prob(&u, &order, depth).exp();
                let key = order[..depth - 1].to_vec();
                match group.as_mut() {
                    Some((k, _, mass)) if *k == key => *mass += p,
                    _ => {
                        if let Some((_, o, mass)) = group.take() {
                            total += mass * self.value_after(&feats, &u, &o, depth);
                        }
                        group = Some((key, order, p));
                    }
                }
            }
            if let Some((_, o, mass)) = group {
                total += mass * self.value_after(&feats, &u, &o, depth);
            }
            total
        } else {
            let mut rng = seed::rng(design.key(seed::derive(self.cfg.seed, seed::tags::MONTE_CARLO)));
            let n = self.cfg.mc_samples;
            let mut total = 0.0;
            for _ in 0..n {
                let mut order = feats.sample_positions(&u, depth, &mut rng);
                pl::complete_order(&mut order, q.size());
                total += self.value_after(&feats, &u, &order, depth);
            }
            total / n as f64
        };
        let before = if self.relative_det { 1.0 } else { self.base };
        Ok(gain(expected, before))
    }
}

pub fn expected_gain(
    scenario: &Scenario,
    design: &Design,
    post: &GaussianPosterior,
    spec: &CriterionSpec,
    cfg: &GainConfig,
) -> Result<f64> {
    GainScorer::new(scenario, post, spec, *cfg)?.expected_gain(design)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub cost: f64,
    /// Expected gain; 0 under the random criterion.
    pub gain: f64,
}

/// Picks the affordable design with the best expected gain per dollar.
///
/// `costs[i]` is the cost of `designs[i]`. Ties go to the cheaper design,
/// then the lower index. Under the random criterion the pick is uniform over
/// affordable designs, drawn from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn select_design<R: Rng + ?Sized>(
    scenario: &Scenario,
    designs: &[Design],
    costs: &[f64],
    post: &GaussianPosterior,
    spec: &CriterionSpec,
    remaining_budget: f64,
    cfg: &GainConfig,
    rng: &mut R,
) -> Result<Option<Selection>> {
    if designs.len() != costs.len() {
        return Err(Error::Config("one cost per design required".into()));
    }
    let affordable: Vec<usize> = (0..designs.len())
        .filter(|&i| costs[i] <= remaining_budget + BUDGET_EPS)
        .collect();
    if affordable.is_empty() {
        return Ok(None);
    }
    if spec.is_random() {
        let index = affordable[rng.random_range(0..affordable.len())];
        return Ok(Some(Selection {
            index,
            cost: costs[index],
            gain: 0.0,
        }));
    }
    let scorer = GainScorer::new(scenario, post, spec, *cfg)?;
    let gains = affordable
        .par_iter()
        .map(|&i| scorer.expected_gain(&designs[i]))
        .collect::<Result<Vec<f64>>>()?;

    let mut best: Option<(usize, f64, f64)> = None;
    for (&i, &g) in affordable.iter().zip(&gains) {
        let ratio = if g.is_nan() { f64::NEG_INFINITY } else { g / costs[i] };
        let better = match best {
            None => true,
            Some((bi, br, _)) => {
                ratio > br || (ratio == br && (costs[i] < costs[bi] || (costs[i] == costs[bi] && i < bi)))
            }
        };
        if better {
            best = Some((i, ratio, g));
        }
    }
    Ok(best.map(|(index, _, gain)| Selection {
        index,
        cost: costs[index],
        gain,
    }))
}
