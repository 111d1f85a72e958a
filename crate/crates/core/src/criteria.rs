//! Information criteria over a Gaussian posterior.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scenario;
use crate::posterior::{self, DiffStats, GaussianPosterior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CriterionKind {
    DOpt,
    EOpt,
    /// Certainty of the predicted top-k set against the rest.
    MpcUnordered {
        k: usize,
    },
    /// Certainty of every comparison involving a predicted top-k member.
    MpcRanked {
        k: usize,
    },
    /// Least certain comparison across all key agents.
    MpcGroup,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CriterionSpec {
    #[serde(flatten)]
    pub kind: CriterionKind,
    /// Agent whose preference a single-agent MPC targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
}

impl CriterionSpec {
    pub fn new(kind: CriterionKind) -> Self {
        Self { kind, target: None }
    }

    pub fn with_target(mut self, agent: usize) -> Self {
        self.target = Some(agent);
        self
    }

    pub fn is_random(&self) -> bool {
        self.kind == CriterionKind::Random
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let m = scenario.num_alternatives();
        let target_ok = |t: Option<usize>| match t {
            Some(a) if a < scenario.agents().len() => Ok(()),
            Some(a) => Err(Error::Config(format!("target agent {a} does not exist"))),
            None => Err(Error::Config(format!("{self} needs a target agent"))),
        };
        match self.kind {
            CriterionKind::MpcUnordered { k } => {
                if k == 0 || k >= m {
                    return Err(Error::Config(format!("unordered top-k needs 1 <= k < {m}, got {k}")));
                }
                target_ok(self.target)
            }
            CriterionKind::MpcRanked { k } => {
                if k <= 1 || k >= m {
                    return Err(Error::Config(format!("ranked top-k needs 1 < k < {m}, got {k}")));
                }
                target_ok(self.target)
            }
            CriterionKind::MpcGroup if scenario.n_key() < 2 => {
                Err(Error::Config("group MPC needs at least two key agents".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for CriterionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CriterionKind::DOpt => write!(f, "d-opt")?,
            CriterionKind::EOpt => write!(f, "e-opt")?,
            CriterionKind::MpcGroup => write!(f, "mpc")?,
            CriterionKind::Random => write!(f, "random")?,
            CriterionKind::MpcUnordered { k } => write!(f, "mpc-top{k}")?,
            CriterionKind::MpcRanked { k } => write!(f, "mpc-ranked{k}")?,
        }
        if let Some(t) = self.target {
            write!(f, "@{t}")?;
        }
        Ok(())
    }
}

/// Parses the names printed by `Display`: `d-opt`, `e-opt`, `mpc`, `random`,
/// `mpc-topK[@agent]`, `mpc-rankedK[@agent]`. Single-agent variants default
/// to agent 0.
impl FromStr for CriterionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, target) = match s.split_once('@') {
            Some((n, t)) => (
                n,
                Some(
                    t.parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad target in {s:?}")))?,
                ),
            ),
            None => (s, None),
        };
        let parse_k = |digits: &str| {
            digits
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad k in criterion {s:?}")))
        };
        let kind = match name {
            "d-opt" | "dopt" => CriterionKind::DOpt,
            "e-opt" | "eopt" => CriterionKind::EOpt,
            "mpc" | "mpc-group" => CriterionKind::MpcGroup,
            "random" => CriterionKind::Random,
            _ => {
                if let Some(k) = name.strip_prefix("mpc-ranked") {
                    CriterionKind::MpcRanked { k: parse_k(k)? }
                } else if let Some(k) = name.strip_prefix("mpc-top") {
                    CriterionKind::MpcUnordered { k: parse_k(k)? }
                } else {
                    return Err(Error::Parse(format!("unknown criterion {s:?}")));
                }
            }
        };
        let target = match kind {
            CriterionKind::MpcUnordered { .. } | CriterionKind::MpcRanked { .. } => Some(target.unwrap_or(0)),
            _ => target,
        };
        Ok(Self { kind, target })
    }
}

/// `ln det J` via Cholesky; −∞ when `J` is not positive definite.
pub fn log_det_spd(m: &DMatrix<f64>) -> f64 {
    match Cholesky::new(m.clone()) {
        Some(c) => 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// D-optimality as the log-determinant of the precision.
pub fn d_optimality(post: &GaussianPosterior) -> f64 {
    log_det_spd(post.precision())
}

pub fn e_optimality(post: &GaussianPosterior) -> f64 {
    min_eigenvalue(post.precision())
}

/// The `k` alternatives with the highest posterior-mean utility for `agent`,
/// best first; ties go to the lower id.
pub fn predicted_top_k(scenario: &Scenario, post: &GaussianPosterior, agent: usize, k: usize) -> Result<Vec<usize>> {
    let m = scenario.num_alternatives();
    if k == 0 || k > m {
        return Err(Error::Domain(format!("k = {k} outside [1, {m}]")));
    }
    let ranking = ranking_by_mean(scenario, post, agent)?;
    Ok(ranking[..k].to_vec())
}

/// All alternatives sorted by posterior-mean utility for `agent`.
pub fn ranking_by_mean(scenario: &Scenario, post: &GaussianPosterior, agent: usize) -> Result<Vec<usize>> {
    let param = post.mean_parameter();
    scenario.check_parameter(&param)?;
    let a = scenario.agent(agent)?;
    let mut scored = scenario
        .alternatives()
        .iter()
        .map(|alt| crate::pl::utility(a, alt, &param).map(|u| (alt.id, u)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    Ok(scored.into_iter().map(|(id, _)| id).collect())
}

fn scan_min<I>(scenario: &Scenario, post: &GaussianPosterior, pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (usize, usize, usize)>,
{
    let mut best = f64::INFINITY;
    for (agent, a, b) in pairs {
        best = best.min(posterior::utility_diff_stats(scenario, post, agent, a, b)?.certainty());
    }
    Ok(best)
}

fn single_agent_pairs(top: &[usize], m: usize, ordered: bool) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for &i1 in top {
        for i2 in 0..m {
            if i2 == i1 {
                continue;
            }
            let i2_in_top = top.contains(&i2);
            if !ordered && i2_in_top {
                continue;
            }
            // both ends in the top set: keep one orientation only
            if ordered && i2_in_top && i2 < i1 {
                continue;
            }
            pairs.push((i1, i2));
        }
    }
    pairs
}

/// Minimum pairwise certainty for one agent's predicted top-k.
pub fn mpc_single(scenario: &Scenario, post: &GaussianPosterior, agent: usize, k: usize, ordered: bool) -> Result<f64> {
    let m = scenario.num_alternatives();
    if k == 0 || k >= m {
        return Err(Error::Domain(format!("k = {k} outside [1, {m})")));
    }
    let top = predicted_top_k(scenario, post, agent, k)?;
    scan_min(
        scenario,
        post,
        single_agent_pairs(&top, m, ordered)
            .into_iter()
            .map(|(a, b)| (agent, a, b)),
    )
}

/// Minimum pairwise certainty across every key agent and pair of alternatives.
pub fn mpc_group(scenario: &Scenario, post: &GaussianPosterior) -> Result<f64> {
    if scenario.n_key() < 2 {
        return Err(Error::Domain("group MPC needs at least two key agents".into()));
    }
    let m = scenario.num_alternatives();
    let pairs = (0..scenario.n_key()).flat_map(|j| (0..m).flat_map(move |a| (a + 1..m).map(move |b| (j, a, b))));
    scan_min(scenario, post, pairs)
}

pub fn evaluate(spec: &CriterionSpec, scenario: &Scenario, post: &GaussianPosterior) -> Result<f64> {
    spec.validate(scenario)?;
    if post.dim() != scenario.param_dim() {
        return Err(Error::Config("posterior dimension does not match scenario".into()));
    }
    Ok(match spec.kind {
        CriterionKind::DOpt => d_optimality(post),
        CriterionKind::EOpt => e_optimality(post),
        CriterionKind::MpcUnordered { k } => mpc_single(scenario, post, spec.target.unwrap_or(0), k, false)?,
        CriterionKind::MpcRanked { k } => mpc_single(scenario, post, spec.target.unwrap_or(0), k, true)?,
        CriterionKind::MpcGroup => mpc_group(scenario, post)?,
        CriterionKind::Random => 0.0,
    })
}

/// A criterion bound to one posterior mean, scoring arbitrary precisions.
///
/// Candidate scoring only changes the precision, so the MPC pair set and the
/// mean utility differences are computed once here.
#[derive(Debug, Clone)]
pub struct PreparedCriterion {
    inner: Prepared,
}

#[derive(Debug, Clone)]
enum Prepared {
    LogDet,
    MinEigen,
    Pairs { coeffs: DMatrix<f64>, means: DVector<f64> },
    Constant,
}

impl PreparedCriterion {
    pub fn new(spec: &CriterionSpec, scenario: &Scenario, post: &GaussianPosterior) -> Result<Self> {
        spec.validate(scenario)?;
        let m = scenario.num_alternatives();
        let triples: Vec<(usize, usize, usize)> = match spec.kind {
            CriterionKind::DOpt => {
                return Ok(Self {
                    inner: Prepared::LogDet,
                })
            }
            CriterionKind::EOpt => {
                return Ok(Self {
                    inner: Prepared::MinEigen,
                })
            }
            CriterionKind::Random => {
                return Ok(Self {
                    inner: Prepared::Constant,
                })
            }
            CriterionKind::MpcUnordered { k } | CriterionKind::MpcRanked { k } => {
                let agent = spec.target.unwrap_or(0);
                let ordered = matches!(spec.kind, CriterionKind::MpcRanked { .. });
                let top = predicted_top_k(scenario, post, agent, k)?;
                single_agent_pairs(&top, m, ordered)
                    .into_iter()
                    .map(|(a, b)| (agent, a, b))
                    .collect()
            }
            CriterionKind::MpcGroup => (0..scenario.n_key())
                .flat_map(|j| (0..m).flat_map(move |a| (a + 1..m).map(move |b| (j, a, b))))
                .collect(),
        };
        let mut coeffs = DMatrix::zeros(post.dim(), triples.len());
        for (col, (j, a, b)) in triples.iter().enumerate() {
            coeffs.set_column(col, &posterior::difference_coefficients(scenario, *j, *a, *b)?);
        }
        let means = coeffs.tr_mul(post.mean());
        Ok(Self {
            inner: Prepared::Pairs { coeffs, means },
        })
    }

    /// Criterion value for a posterior with the prepared mean and `precision`.
    pub fn value(&self, precision: &DMatrix<f64>) -> f64 {
        match &self.inner {
            Prepared::LogDet => log_det_spd(precision),
            Prepared::MinEigen => min_eigenvalue(precision),
            Prepared::Constant => 0.0,
            Prepared::Pairs { coeffs, means } => {
                let Some(chol) = Cholesky::new(precision.clone()) else {
                    return 0.0;
                };
                // cᵀ J⁻¹ c = ‖L⁻¹ c‖² with J = L Lᵀ
                let y = chol
                    .l_dirty()
                    .solve_lower_triangular(coeffs)
                    .expect("cholesky factor is invertible");
                let mut best = f64::INFINITY;
                for (col, mean) in means.iter().enumerate() {
                    let var = y.column(col).norm_squared();
                    best = best.min(DiffStats::from_moments(*mean, var).certainty());
                }
                best
            }
        }
    }
}
