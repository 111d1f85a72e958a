//! Composite marginal likelihood fit and its Gaussian posterior approximation.
//!
//! Each recorded response counts as one marginal event. A `N(0, σ²·I)` prior
//! is added to the composite log-likelihood so the precision matrix is
//! positive definite from the first iteration on.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Parameter, Response, Scenario};
use crate::pl::{self, Derivatives};

/// Variance below which a utility difference is treated as known exactly.
pub const VARIANCE_FLOOR: f64 = 1e-18;
/// Standard deviation reported for a difference under [`VARIANCE_FLOOR`].
pub const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub prior_std: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    /// Step shrink factor per backtrack.
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            prior_std: 10.0,
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.prior_std > 0.0
            && self.max_iterations > 0
            && self.gradient_tolerance > 0.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.max_backtracks > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid fit configuration {self:?}")))
        }
    }

    fn prior_precision(&self) -> f64 {
        if self.prior_std.is_infinite() {
            0.0
        } else {
            self.prior_std.powi(-2)
        }
    }
}

/// Mean `β_CML` and precision `J`; the covariance `J⁻¹` is computed on first use.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    alt_dim: usize,
    agent_dim: usize,
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    covariance: OnceLock<DMatrix<f64>>,
}

impl GaussianPosterior {
    pub fn new(mean: &Parameter, precision: DMatrix<f64>) -> Result<Self> {
        let n = mean.dim();
        if precision.nrows() != n || precision.ncols() != n {
            return Err(Error::Domain(format!(
                "precision is {}x{}, mean has {n} entries",
                precision.nrows(),
                precision.ncols()
            )));
        }
        let scale = precision.amax().max(1.0);
        if (&precision - precision.transpose()).amax() > 1e-10 * scale {
            return Err(Error::Domain("precision is not symmetric".into()));
        }
        if Cholesky::new(precision.clone()).is_none() {
            return Err(Error::Domain("precision is not positive definite".into()));
        }
        Ok(Self {
            alt_dim: mean.alt_dim(),
            agent_dim: mean.agent_dim(),
            mean: mean.to_vector(),
            precision,
            covariance: OnceLock::new(),
        })
    }

    /// The prior `N(0, σ²·I)`.
    pub fn prior(alt_dim: usize, agent_dim: usize, prior_std: f64) -> Self {
        let n = alt_dim * agent_dim;
        let tau = if prior_std.is_infinite() {
            0.0
        } else {
            prior_std.powi(-2)
        };
        Self {
            alt_dim,
            agent_dim,
            mean: DVector::zeros(n),
            precision: DMatrix::identity(n, n) * tau,
            covariance: OnceLock::new(),
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn mean_parameter(&self) -> Parameter {
        Parameter::from_vector(self.alt_dim, self.agent_dim, &self.mean).expect("finite mean")
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        self.covariance.get_or_init(|| invert_spd(&self.precision))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn alt_dim(&self) -> usize {
        self.alt_dim
    }

    pub fn agent_dim(&self) -> usize {
        self.agent_dim
    }
}

pub(crate) fn invert_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    match Cholesky::<f64, Dyn>::new(m.clone()) {
        Some(c) => c.inverse(),
        None => m.clone().try_inverse().expect("precision is invertible"),
    }
}

fn penalty(beta: &DVector<f64>, cfg: &FitConfig) -> f64 {
    0.5 * cfg.prior_precision() * beta.norm_squared()
}

/// Penalized composite log-likelihood `Σ ln Pr(R_λ | β) − ‖β‖² / (2σ²)`.
pub fn composite_log_likelihood(
    scenario: &Scenario,
    data: &Dataset,
    param: &Parameter,
    cfg: &FitConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for r in data.entries() {
        total += pl::response_log_prob(scenario, r, param)?;
    }
    Ok(total - penalty(&param.to_vector(), cfg))
}

/// Objective value, gradient and negative Hessian at `beta`, prior included.
fn objective_terms(
    scenario: &Scenario,
    data: &Dataset,
    beta: &DVector<f64>,
    cfg: &FitConfig,
    want: Derivatives,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let n = beta.len();
    let param = Parameter::from_vector(scenario.alt_dim(), scenario.agent_dim(), beta)?;
    let mut value = -penalty(beta, cfg);
    let mut grad = -beta * cfg.prior_precision();
    let mut info = DMatrix::identity(n, n) * cfg.prior_precision();
    for r in data.entries() {
        let t = pl::response_terms(scenario, r, &param, want)?;
        value += t.log_prob;
        if let Some(g) = t.grad {
            grad += g;
        }
        if let Some(h) = t.hessian {
            info -= h;
        }
    }
    Ok((value, grad, info))
}

/// Maximizes the penalized composite log-likelihood by damped Newton ascent.
///
/// Falls back to a backtracked gradient step when the Newton step does not
/// increase the objective.
pub fn cml_estimate(scenario: &Scenario, data: &Dataset, init: &Parameter, cfg: &FitConfig) -> Result<Parameter> {
    cfg.validate()?;
    scenario.check_parameter(init)?;
    let mut beta = init.to_vector();
    let mut last_norm = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..cfg.max_iterations {
        iterations += 1;
        let (value, grad, info) = objective_terms(scenario, data, &beta, cfg, Derivatives::Hessian)?;
        last_norm = grad.norm();
        if last_norm <= cfg.gradient_tolerance {
            return Parameter::from_vector(scenario.alt_dim(), scenario.agent_dim(), &beta);
        }
        let newton = Cholesky::new(info).map(|c| c.solve(&grad));
        let mut moved = false;
        if let Some(step) = newton {
            moved = line_search(scenario, data, &mut beta, value, &grad, &step, cfg)?;
        }
        if !moved {
            let step = grad.clone();
            moved = line_search(scenario, data, &mut beta, value, &grad, &step, cfg)?;
        }
        if !moved {
            break;
        }
    }
    let (_, grad, _) = objective_terms(scenario, data, &beta, cfg, Derivatives::Gradient)?;
    let norm = grad.norm();
    if norm <= cfg.gradient_tolerance {
        return Parameter::from_vector(scenario.alt_dim(), scenario.agent_dim(), &beta);
    }
    Err(Error::Convergence {
        iterations,
        gradient_norm: norm.min(last_norm),
        last: Box::new(Parameter::from_vector(scenario.alt_dim(), scenario.agent_dim(), &beta)?),
    })
}

fn line_search(
    scenario: &Scenario,
    data: &Dataset,
    beta: &mut DVector<f64>,
    value: f64,
    grad: &DVector<f64>,
    step: &DVector<f64>,
    cfg: &FitConfig,
) -> Result<bool> {
    let slope = grad.dot(step);
    if slope.is_nan() || slope <= 0.0 {
        return Ok(false);
    }
    // A sum of n log-probabilities carries rounding error up to about
    // n·eps·|f|. Below that Armijo cannot see progress, so the Newton step is
    // judged by the gradient norm instead.
    let resolution = (data.len() as f64 + 1.0) * f64::EPSILON * value.abs().max(1.0);
    if slope <= resolution {
        let candidate = &*beta + step;
        let (_, next_grad, _) = objective_terms(scenario, data, &candidate, cfg, Derivatives::Gradient)?;
        if next_grad.norm() < grad.norm() {
            *beta = candidate;
            return Ok(true);
        }
    }
    let mut t = 1.0;
    for _ in 0..cfg.max_backtracks {
        let candidate = &*beta + step * t;
        if candidate == *beta {
            break;
        }
        let (next, _, _) = objective_terms(scenario, data, &candidate, cfg, Derivatives::None)?;
        if next >= value + cfg.armijo * t * slope {
            *beta = candidate;
            return Ok(true);
        }
        t *= cfg.backtrack;
    }
    Ok(false)
}

/// Observed information of the penalized objective at `param`.
pub fn information_at(scenario: &Scenario, data: &Dataset, param: &Parameter, cfg: &FitConfig) -> Result<DMatrix<f64>> {
    let (_, _, info) = objective_terms(scenario, data, &param.to_vector(), cfg, Derivatives::Hessian)?;
    Ok(symmetrize(info))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

pub fn fit_posterior(
    scenario: &Scenario,
    data: &Dataset,
    init: &Parameter,
    cfg: &FitConfig,
) -> Result<GaussianPosterior> {
    let mean = cml_estimate(scenario, data, init, cfg)?;
    let precision = information_at(scenario, data, &mean, cfg)?;
    GaussianPosterior::new(&mean, precision)
}

/// Precision after observing `resp`, with the mean held fixed.
pub fn hypothetical_precision(scenario: &Scenario, post: &GaussianPosterior, resp: &Response) -> Result<DMatrix<f64>> {
    let h = pl::response_hessian(scenario, resp, &post.mean_parameter())?;
    Ok(symmetrize(post.precision() - h))
}

/// Coefficient vector of `u_{agent,a} − u_{agent,b}` in β.
pub fn difference_coefficients(scenario: &Scenario, agent: usize, a: usize, b: usize) -> Result<DVector<f64>> {
    let x = &scenario.agent(agent)?.attributes;
    let za = &scenario.alternative(a)?.attributes;
    let zb = &scenario.alternative(b)?.attributes;
    let dz: Vec<f64> = za.iter().zip(zb).map(|(p, q)| p - q).collect();
    Ok(pl::coefficients(&dz, x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffStats {
    pub mean: f64,
    pub std: f64,
    pub variance: f64,
}

impl DiffStats {
    pub fn from_moments(mean: f64, variance: f64) -> Self {
        let std = if variance < VARIANCE_FLOOR {
            STD_FLOOR
        } else {
            variance.sqrt()
        };
        Self { mean, std, variance }
    }

    /// `|mean| / std`; +∞ for a nonzero mean with vanishing variance, 0 for a zero mean.
    pub fn certainty(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else if self.variance < VARIANCE_FLOOR {
            f64::INFINITY
        } else {
            self.mean.abs() / self.std
        }
    }
}

/// Posterior mean and standard deviation of `u_{agent,a} − u_{agent,b}`.
pub fn utility_diff_stats(
    scenario: &Scenario,
    post: &GaussianPosterior,
    agent: usize,
    a: usize,
    b: usize,
) -> Result<DiffStats> {
    if a == b {
        return Err(Error::Domain("utility difference of an alternative with itself".into()));
    }
    let c = difference_coefficients(scenario, agent, a, b)?;
    if c.len() != post.dim() {
        return Err(Error::InvalidScenario(
            "posterior dimension does not match scenario".into(),
        ));
    }
    let mean = c.dot(post.mean());
    let variance = (post.covariance() * &c).dot(&c).max(0.0);
    Ok(DiffStats::from_moments(mean, variance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Question;

    fn tiny() -> Scenario {
        Scenario::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, -0.5]],
            vec![vec![1.0, 0.2], vec![-0.3, 1.0]],
            0,
        )
        .unwrap()
    }

    #[test]
    fn empty_dataset_gives_the_prior() {
        let s = tiny();
        let cfg = FitConfig::default();
        let zero = Parameter::zeros(2, 2);
        assert_eq!(composite_log_likelihood(&s, &Dataset::new(), &zero, &cfg).unwrap(), 0.0);
        let post = fit_posterior(&s, &Dataset::new(), &zero, &cfg).unwrap();
        assert_eq!(post.mean().norm(), 0.0);
        assert!((post.precision() - DMatrix::identity(4, 4) * 0.01).amax() < 1e-15);
    }

    #[test]
    fn flat_prior_single_pairwise() {
        let s = tiny();
        let cfg = FitConfig {
            prior_std: f64::INFINITY,
            ..FitConfig::default()
        };
        let data: Dataset = [Response::new(0, Question::pairwise(0, 1).unwrap(), vec![1]).unwrap()]
            .into_iter()
            .collect();
        let v = composite_log_likelihood(&s, &data, &Parameter::zeros(2, 2), &cfg).unwrap();
        assert!((v + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn prior_diff_std_is_scaled_norm() {
        let s = tiny();
        let post = GaussianPosterior::prior(2, 2, 10.0);
        let c = difference_coefficients(&s, 1, 0, 2).unwrap();
        let st = utility_diff_stats(&s, &post, 1, 0, 2).unwrap();
        assert_eq!(st.mean, 0.0);
        assert!((st.std - 10.0 * c.norm()).abs() < 1e-12);
        assert!(utility_diff_stats(&s, &post, 1, 2, 2).is_err());
    }

    #[test]
    fn identical_alternatives_hit_the_floor() {
        let s = Scenario::new(vec![vec![1.0], vec![1.0]], vec![vec![2.0]], 0).unwrap();
        let post = GaussianPosterior::prior(1, 1, 10.0);
        let st = utility_diff_stats(&s, &post, 0, 0, 1).unwrap();
        assert_eq!(st.mean, 0.0);
        assert_eq!(st.std, STD_FLOOR);
        assert_eq!(st.certainty(), 0.0);
        assert_eq!(DiffStats::from_moments(0.5, 0.0).certainty(), f64::INFINITY);
    }

    #[test]
    fn zero_attribute_agent_adds_no_information() {
        let s = Scenario::new(vec![vec![1.0], vec![-1.0]], vec![vec![0.0]], 0).unwrap();
        let post = GaussianPosterior::prior(1, 1, 10.0);
        let r = Response::new(0, Question::pairwise(0, 1).unwrap(), vec![0]).unwrap();
        let j = hypothetical_precision(&s, &post, &r).unwrap();
        assert_eq!(&j, post.precision());
    }

    #[test]
    fn rejects_asymmetric_precision() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(GaussianPosterior::new(&Parameter::zeros(1, 2), m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(GaussianPosterior::new(&Parameter::zeros(1, 2), m).is_err());
    }

    #[test]
    fn covariance_inverts_precision() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let post = GaussianPosterior::new(&Parameter::zeros(1, 3), m.clone()).unwrap();
        assert!((post.covariance() * m - DMatrix::identity(3, 3)).amax() < 1e-12);
    }
}
