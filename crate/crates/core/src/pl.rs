//! Plackett-Luce with features.
//!
//! Agent `j` values alternative `i` at `u_ji = z_iᵀ B x_j`, which is linear in
//! the vectorized parameter: `u_ji = c_jiᵀ β` with `c_ji[κ·L + ι] = z_iκ · x_jι`.
//! A top-k-of-l answer is scored stage by stage; stage `p` picks its winner by
//! softmax over the subset members not yet ranked. Every log-sum-exp is
//! max-shifted.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{AgentProfile, AlternativeProfile, Parameter, Question, Response, Scenario};

pub const DEFAULT_ENUMERATION_CAP: usize = 24;

/// The coefficient vector `c` with `u = cᵀ β` for one (agent, alternative) pair.
pub fn coefficients(alt: &[f64], agent: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        alt.len() * agent.len(),
        alt.iter().flat_map(|z| agent.iter().map(move |x| z * x)),
    )
}

fn check_dims(agent: &AgentProfile, alt: &AlternativeProfile, param: &Parameter) -> Result<()> {
    if alt.attributes.len() != param.alt_dim() || agent.attributes.len() != param.agent_dim() {
        return Err(Error::InvalidScenario(format!(
            "profiles have {}/{} attributes, parameter is {}x{}",
            alt.attributes.len(),
            agent.attributes.len(),
            param.alt_dim(),
            param.agent_dim()
        )));
    }
    Ok(())
}

pub fn utility(agent: &AgentProfile, alt: &AlternativeProfile, param: &Parameter) -> Result<f64> {
    check_dims(agent, alt, param)?;
    let l = param.agent_dim();
    let mut u = 0.0;
    for (kappa, z) in alt.attributes.iter().enumerate() {
        let row = &param.as_slice()[kappa * l..(kappa + 1) * l];
        u += z * row.iter().zip(&agent.attributes).map(|(b, x)| b * x).sum::<f64>();
    }
    Ok(u)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Probability that `target` is the top choice of `agent` within `subset`.
pub fn top_prob(agent: &AgentProfile, subset: &[&AlternativeProfile], target: usize, param: &Parameter) -> Result<f64> {
    if subset.len() < 2 {
        return Err(Error::Domain("subset needs at least two alternatives".into()));
    }
    let pos = subset
        .iter()
        .position(|a| a.id == target)
        .ok_or_else(|| Error::Domain(format!("alternative {target} not in subset")))?;
    let u = subset
        .iter()
        .map(|a| utility(agent, a, param))
        .collect::<Result<Vec<_>>>()?;
    Ok((u[pos] - log_sum_exp(&u)).exp())
}

/// Full top-choice distribution of `agent` over `alts`, in the given order.
pub fn choice_probs(agent: &AgentProfile, alts: &[AlternativeProfile], param: &Parameter) -> Result<Vec<f64>> {
    let u = alts
        .iter()
        .map(|a| utility(agent, a, param))
        .collect::<Result<Vec<_>>>()?;
    let lse = log_sum_exp(&u);
    Ok(u.iter().map(|v| (v - lse).exp()).collect())
}

/// Probability that `agent` prefers `a1` over `a2`.
pub fn pairwise_prob(
    agent: &AgentProfile,
    a1: &AlternativeProfile,
    a2: &AlternativeProfile,
    param: &Parameter,
) -> Result<f64> {
    if a1.id == a2.id {
        return Err(Error::Domain(
            "pairwise comparison of an alternative with itself".into(),
        ));
    }
    let d = utility(agent, a1, param)? - utility(agent, a2, param)?;
    Ok(logistic(d))
}

pub(crate) fn logistic(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Which derivatives [`SubsetFeatures::stage_terms`] should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivatives {
    None,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone)]
pub struct StageTerms {
    pub log_prob: f64,
    pub grad: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
}

/// Coefficient vectors of one agent against the members of a question subset.
///
/// Columns of `coeffs` follow `ids`. Orders passed to the stage methods are
/// positions into `ids`.
#[derive(Debug, Clone)]
pub struct SubsetFeatures {
    ids: Vec<usize>,
    coeffs: DMatrix<f64>,
}

impl SubsetFeatures {
    pub fn new(scenario: &Scenario, agent: usize, subset: &[usize]) -> Result<Self> {
        let x = &scenario.agent(agent)?.attributes;
        let dim = scenario.param_dim();
        let mut coeffs = DMatrix::zeros(dim, subset.len());
        for (col, id) in subset.iter().enumerate() {
            let z = &scenario.alternative(*id)?.attributes;
            coeffs.set_column(col, &coefficients(z, x));
        }
        Ok(Self {
            ids: subset.to_vec(),
            coeffs,
        })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn utilities(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.coeffs.tr_mul(beta)
    }

    /// Positions of `ranking` followed by the unranked remainder.
    pub fn stage_order(&self, ranking: &[usize]) -> Result<Vec<usize>> {
        let mut order = Vec::with_capacity(self.ids.len());
        for id in ranking {
            let pos = self
                .ids
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| Error::Domain(format!("alternative {id} not in subset")))?;
            order.push(pos);
        }
        complete_order(&mut order, self.ids.len());
        Ok(order)
    }

    /// Log-probability and derivatives of the top-`depth` prefix of `order`.
    pub fn stage_terms(
        &self,
        utilities: &DVector<f64>,
        order: &[usize],
        depth: usize,
        want: Derivatives,
    ) -> StageTerms {
        let dim = self.dim();
        let mut log_prob = 0.0;
        let mut grad = (want != Derivatives::None).then(|| DVector::zeros(dim));
        let mut hessian = (want == Derivatives::Hessian).then(|| DMatrix::zeros(dim, dim));
        let mut weights = Vec::with_capacity(order.len());
        let mut mean_c = DVector::zeros(dim);

        for p in 0..depth {
            let avail = &order[p..];
            let umax = avail.iter().map(|&i| utilities[i]).fold(f64::NEG_INFINITY, f64::max);
            weights.clear();
            weights.extend(avail.iter().map(|&i| (utilities[i] - umax).exp()));
            let z: f64 = weights.iter().sum();
            log_prob += utilities[order[p]] - umax - z.ln();

            if let Some(g) = grad.as_mut() {
                mean_c.fill(0.0);
                for (&i, w) in avail.iter().zip(&weights) {
                    mean_c.axpy(w / z, &self.coeffs.column(i), 1.0);
                }
                *g += self.coeffs.column(order[p]);
                *g -= &mean_c;
                if let Some(h) = hessian.as_mut() {
                    for (&i, w) in avail.iter().zip(&weights) {
                        let c = self.coeffs.column(i);
                        h.ger(-w / z, &c, &c, 1.0);
                    }
                    h.ger(1.0, &mean_c, &mean_c, 1.0);
                }
            }
        }
        StageTerms {
            log_prob,
            grad,
            hessian,
        }
    }

    pub fn log_prob(&self, utilities: &DVector<f64>, order: &[usize], depth: usize) -> f64 {
        self.stage_terms(utilities, order, depth, Derivatives::None).log_prob
    }

    pub fn hessian(&self, utilities: &DVector<f64>, order: &[usize], depth: usize) -> DMatrix<f64> {
        self.stage_terms(utilities, order, depth, Derivatives::Hessian)
            .hessian
            .expect("requested")
    }

    /// Draws a top-`depth` ranking (as positions) by sequential softmax sampling.
    pub fn sample_positions<R: Rng + ?Sized>(&self, utilities: &DVector<f64>, depth: usize, rng: &mut R) -> Vec<usize> {
        let mut remaining: Vec<usize> = (0..self.ids.len()).collect();
        let mut out = Vec::with_capacity(depth);
        let mut weights = Vec::with_capacity(remaining.len());
        for _ in 0..depth {
            let umax = remaining
                .iter()
                .map(|&i| utilities[i])
                .fold(f64::NEG_INFINITY, f64::max);
            weights.clear();
            weights.extend(remaining.iter().map(|&i| (utilities[i] - umax).exp()));
            let total: f64 = weights.iter().sum();
            let mut draw = rng.random::<f64>() * total;
            let mut pick = remaining.len() - 1;
            for (slot, w) in weights.iter().enumerate() {
                if draw < *w {
                    pick = slot;
                    break;
                }
                draw -= w;
            }
            out.push(remaining.remove(pick));
        }
        out
    }
}

fn features_for(
    scenario: &Scenario,
    resp: &Response,
    param: &Parameter,
) -> Result<(SubsetFeatures, DVector<f64>, Vec<usize>)> {
    scenario.check_parameter(param)?;
    scenario.check_response(resp)?;
    let feats = SubsetFeatures::new(scenario, resp.agent(), resp.question().subset())?;
    let u = feats.utilities(&param.to_vector());
    let order = feats.stage_order(resp.ranking())?;
    Ok((feats, u, order))
}

/// `Σ_p [u_p − logsumexp(u over the not-yet-ranked subset)]`.
pub fn response_log_prob(scenario: &Scenario, resp: &Response, param: &Parameter) -> Result<f64> {
    let (feats, u, order) = features_for(scenario, resp, param)?;
    Ok(feats.log_prob(&u, &order, resp.question().depth()))
}

pub fn response_grad(scenario: &Scenario, resp: &Response, param: &Parameter) -> Result<DVector<f64>> {
    let (feats, u, order) = features_for(scenario, resp, param)?;
    Ok(feats
        .stage_terms(&u, &order, resp.question().depth(), Derivatives::Gradient)
        .grad
        .expect("requested"))
}

/// Hessian of [`response_log_prob`] in β: minus the sum over stages of the
/// softmax-weighted covariance of the coefficient vectors still available.
pub fn response_hessian(scenario: &Scenario, resp: &Response, param: &Parameter) -> Result<DMatrix<f64>> {
    let (feats, u, order) = features_for(scenario, resp, param)?;
    Ok(feats.hessian(&u, &order, resp.question().depth()))
}

pub fn response_terms(
    scenario: &Scenario,
    resp: &Response,
    param: &Parameter,
    want: Derivatives,
) -> Result<StageTerms> {
    let (feats, u, order) = features_for(scenario, resp, param)?;
    Ok(feats.stage_terms(&u, &order, resp.question().depth(), want))
}

pub fn sample_response<R: Rng + ?Sized>(
    scenario: &Scenario,
    agent: usize,
    question: &Question,
    param: &Parameter,
    rng: &mut R,
) -> Result<Response> {
    scenario.check_parameter(param)?;
    scenario.check_question(question)?;
    let feats = SubsetFeatures::new(scenario, agent, question.subset())?;
    let u = feats.utilities(&param.to_vector());
    let ranking = feats
        .sample_positions(&u, question.depth(), rng)
        .into_iter()
        .map(|p| feats.ids()[p])
        .collect();
    Response::new(agent, question.clone(), ranking)
}

/// Appends the positions in `0..n` missing from `order`, ascending.
pub(crate) fn complete_order(order: &mut Vec<usize>, n: usize) {
    let mut placed = vec![false; n];
    for &p in order.iter() {
        placed[p] = true;
    }
    order.extend((0..n).filter(|&p| !placed[p]));
}

/// `l! / (l − k)!`, saturating.
pub fn response_count(question: &Question) -> u128 {
    let l = question.size() as u128;
    (0..question.depth() as u128).fold(1u128, |acc, i| acc.saturating_mul(l - i))
}

/// All ordered top-k prefixes of the subset, lexicographic in subset position.
pub fn enumerate_rankings(question: &Question, cap: usize) -> Result<Vec<Vec<usize>>> {
    let count = response_count(question);
    if count > cap as u128 {
        return Err(Error::TooLarge { count, cap });
    }
    let subset = question.subset();
    let mut out = Vec::with_capacity(count as usize);
    let mut prefix = Vec::with_capacity(question.depth());
    extend_prefixes(subset, question.depth(), &mut prefix, &mut out);
    Ok(out)
}

fn extend_prefixes(subset: &[usize], depth: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == depth {
        out.push(prefix.clone());
        return;
    }
    for id in subset {
        if !prefix.contains(id) {
            prefix.push(*id);
            extend_prefixes(subset, depth, prefix, out);
            prefix.pop();
        }
    }
}

pub fn enumerate_responses(agent: usize, question: &Question, cap: usize) -> Result<Vec<Response>> {
    enumerate_rankings(question, cap)?
        .into_iter()
        .map(|r| Response::new(agent, question.clone(), r))
        .collect()
}
