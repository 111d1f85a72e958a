//! Multi-trial simulation comparing criteria, and the aggregate curves and
//! question-type histograms folded from its traces.
//!
//! Trial `t` draws everything from `seed::derive(master, t)`: a fresh
//! scenario, initialization data shared by every criterion, and one oracle
//! stream replayed identically for each criterion.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{CriterionKind, CriterionSpec};
use crate::design::{build_design_space, CostModel, GainConfig, SubsetPolicy, BUDGET_EPS};
use crate::engine::{self, EngineConfig, SimulatedOracle};
use crate::error::{Error, Result};
use crate::posterior::FitConfig;
use crate::scenario::{generate_scenario, ScenarioConfig};
use crate::seed::{self, tags};
use crate::trace::{self, TraceRow};

/// Spacing of the probe-cost grid, in dollars.
pub const PROBE_STEP: f64 = 0.05;

pub const AGGREGATE_HEADER: [&str; 7] = [
    "probe_cost",
    "criterion",
    "mean_tv_plurality",
    "stderr_tv_plurality",
    "mean_tv_borda",
    "stderr_tv_borda",
    "n_trials",
];

pub const HISTOGRAM_HEADER: [&str; 6] = [
    "iteration",
    "criterion",
    "full_ranking",
    "top_choice",
    "pairwise",
    "other",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub criteria: Vec<CriterionSpec>,
    pub trials: usize,
    pub budget: f64,
    /// Free pairwise answers every run starts from.
    pub init_count: usize,
    pub templates: Vec<(usize, usize)>,
    pub subsets: SubsetPolicy,
    pub cost_model: CostModel,
    pub gain: GainConfig,
    pub fit: FitConfig,
    pub seed: u64,
    /// Where traces and aggregates go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    /// The synthetic hotel setting: group MPC, D, E and random under a $0.9
    /// budget, 50 free pairwise answers, pairwise/top-choice/full-ranking
    /// questions over ten alternatives.
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            criteria: vec![
                CriterionSpec::new(CriterionKind::MpcGroup),
                CriterionSpec::new(CriterionKind::DOpt),
                CriterionSpec::new(CriterionKind::EOpt),
                CriterionSpec::new(CriterionKind::Random),
            ],
            trials: 400,
            budget: 0.9,
            init_count: 50,
            templates: vec![(1, 2), (1, 10), (9, 10)],
            subsets: SubsetPolicy::default(),
            cost_model: CostModel::MturkHotels,
            gain: GainConfig::default(),
            fit: FitConfig::default(),
            seed: 0,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("at least one trial is required".into()));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::Config(format!("budget must be positive, got {}", self.budget)));
        }
        if self.criteria.is_empty() {
            return Err(Error::Config("no criteria to compare".into()));
        }
        if self.templates.is_empty() {
            return Err(Error::Config("no question templates".into()));
        }
        self.gain.validate()?;
        self.fit.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionRun {
    pub criterion: String,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub runs: Vec<CriterionRun>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial: usize,
    pub criterion: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub probe_cost: f64,
    pub criterion: String,
    pub mean_tv_plurality: f64,
    pub stderr_tv_plurality: f64,
    pub mean_tv_borda: f64,
    pub stderr_tv_borda: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionType {
    FullRanking,
    TopChoice,
    Pairwise,
    Other,
}

impl QuestionType {
    /// With `m = 2` a pairwise question is also a full ranking and a top
    /// choice; it counts as pairwise.
    pub fn classify(k: usize, l: usize, m: usize) -> Self {
        if k == 1 && l == 2 {
            QuestionType::Pairwise
        } else if l == m && k + 1 == l {
            QuestionType::FullRanking
        } else if l == m && k == 1 {
            QuestionType::TopChoice
        } else {
            QuestionType::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub iteration: usize,
    pub criterion: String,
    pub full_ranking: usize,
    pub top_choice: usize,
    pub pairwise: usize,
    pub other: usize,
}

impl HistogramRow {
    pub fn total(&self) -> usize {
        self.full_ranking + self.top_choice + self.pairwise + self.other
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Completed trials in trial order.
    pub trials: Vec<TrialOutcome>,
    pub failures: Vec<TrialFailure>,
    pub curves: Vec<AggregateRow>,
    pub histogram: Vec<HistogramRow>,
}

/// Runs one trial for every criterion.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> std::result::Result<TrialOutcome, TrialFailure> {
    let fail = |criterion: Option<String>, e: &dyn std::fmt::Display| TrialFailure {
        trial,
        criterion,
        message: e.to_string(),
    };
    let trial_seed = seed::derive(cfg.seed, trial as u64);
    let scenario_cfg = ScenarioConfig {
        seed: seed::derive(trial_seed, tags::SCENARIO),
        ..cfg.scenario
    };
    let (scenario, truth) = generate_scenario(&scenario_cfg).map_err(|e| fail(None, &e))?;
    let scenario = Arc::new(scenario);
    let init = engine::initialize_data(
        &scenario,
        cfg.init_count,
        &mut seed::rng(seed::derive(trial_seed, tags::INIT_DATA)),
        &truth,
    )
    .map_err(|e| fail(None, &e))?;
    let subsets = match &cfg.subsets {
        SubsetPolicy::Sampled { count, .. } => SubsetPolicy::Sampled {
            count: *count,
            seed: seed::derive(trial_seed, tags::SUBSETS),
        },
        explicit => explicit.clone(),
    };
    let designs = build_design_space(&scenario, &cfg.templates, &subsets).map_err(|e| fail(None, &e))?;

    let mut runs = Vec::with_capacity(cfg.criteria.len());
    for spec in &cfg.criteria {
        let name = spec.to_string();
        let mut oracle = SimulatedOracle::new(truth.clone(), seed::derive(trial_seed, tags::ORACLE));
        let engine_cfg = EngineConfig {
            fit: cfg.fit,
            gain: cfg.gain,
            seed: seed::derive(trial_seed, tags::ENGINE),
            ground_truth: Some(truth.clone()),
            prediction_depth: None,
        };
        let res = engine::run_elicitation(
            scenario.clone(),
            designs.clone(),
            &cfg.cost_model,
            *spec,
            cfg.budget,
            init.clone(),
            &mut oracle,
            engine_cfg,
        )
        .map_err(|e| fail(Some(name.clone()), &e))?;
        runs.push(CriterionRun {
            criterion: name,
            rows: trace::rows(&res.initial, &res.trace),
        });
    }
    Ok(TrialOutcome { trial, runs })
}

/// Runs all trials in parallel, drops failed ones, and folds the rest.
/// Writes traces, `aggregate.csv` and `question_types.csv` when an output
/// directory is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let outcomes: Vec<_> = (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect();
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(t) => trials.push(t),
            Err(f) => failures.push(f),
        }
    }
    let grouped = group_by_criterion(&trials, &cfg.criteria);
    let curves = aggregate_curves(&grouped, cfg.budget);
    let histogram = question_type_histogram(&grouped, cfg.scenario.m);
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &trials, &curves, &histogram)?;
    }
    Ok(ExperimentResult {
        trials,
        failures,
        curves,
        histogram,
    })
}

fn group_by_criterion(trials: &[TrialOutcome], criteria: &[CriterionSpec]) -> Vec<(String, Vec<Vec<TraceRow>>)> {
    criteria
        .iter()
        .map(|spec| {
            let name = spec.to_string();
            let runs = trials
                .iter()
                .filter_map(|t| t.runs.iter().find(|r| r.criterion == name))
                .map(|r| r.rows.clone())
                .collect();
            (name, runs)
        })
        .collect()
}

/// Probe costs `0, 0.05, …` up to the budget.
pub fn probe_grid(budget: f64) -> Vec<f64> {
    let steps = (budget / PROBE_STEP + 1e-9).floor() as usize;
    (0..=steps)
        .map(|i| (i as f64 * PROBE_STEP * 100.0).round() / 100.0)
        .collect()
}

/// The last row whose cumulative cost does not exceed `w`.
pub fn row_at_cost(rows: &[TraceRow], w: f64) -> Option<&TraceRow> {
    rows.iter().take_while(|r| r.cumulative_cost <= w + BUDGET_EPS).last()
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and standard error of TV at every probe cost, per criterion.
/// Runs without TV values (no ground truth) are skipped.
pub fn aggregate_curves(runs: &[(String, Vec<Vec<TraceRow>>)], budget: f64) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for w in probe_grid(budget) {
        for (criterion, trials) in runs {
            let mut plur = Vec::new();
            let mut borda = Vec::new();
            for rows in trials {
                if let Some(r) = row_at_cost(rows, w) {
                    if let (Some(p), Some(b)) = (r.tv_plurality, r.tv_borda) {
                        plur.push(p);
                        borda.push(b);
                    }
                }
            }
            let (mp, sp) = mean_stderr(&plur);
            let (mb, sb) = mean_stderr(&borda);
            out.push(AggregateRow {
                probe_cost: w,
                criterion: criterion.clone(),
                mean_tv_plurality: mp,
                stderr_tv_plurality: sp,
                mean_tv_borda: mb,
                stderr_tv_borda: sb,
                n_trials: plur.len(),
            });
        }
    }
    out
}

/// Question-type counts at each iteration index across trials.
pub fn question_type_histogram(runs: &[(String, Vec<Vec<TraceRow>>)], m: usize) -> Vec<HistogramRow> {
    let mut out = Vec::new();
    for (criterion, trials) in runs {
        let mut by_iter: BTreeMap<usize, [usize; 4]> = BTreeMap::new();
        for rows in trials {
            for r in rows.iter().filter(|r| r.iteration > 0) {
                let (Some(k), Some(l)) = (r.depth, r.size) else {
                    continue;
                };
                let slot = match QuestionType::classify(k, l, m) {
                    QuestionType::FullRanking => 0,
                    QuestionType::TopChoice => 1,
                    QuestionType::Pairwise => 2,
                    QuestionType::Other => 3,
                };
                by_iter.entry(r.iteration).or_default()[slot] += 1;
            }
        }
        out.extend(by_iter.into_iter().map(|(iteration, c)| HistogramRow {
            iteration,
            criterion: criterion.clone(),
            full_ranking: c[0],
            top_choice: c[1],
            pairwise: c[2],
            other: c[3],
        }));
    }
    out
}

pub fn trace_file_name(trial: usize, criterion: &str) -> String {
    format!("trial{trial:04}_{criterion}.csv")
}

fn parse_trace_file_name(name: &str) -> Option<(usize, String)> {
    let stem = name.strip_suffix(".csv")?.strip_prefix("trial")?;
    let (num, criterion) = stem.split_once('_')?;
    Some((num.parse().ok()?, criterion.to_owned()))
}

pub fn write_outputs(
    dir: &Path,
    trials: &[TrialOutcome],
    curves: &[AggregateRow],
    histogram: &[HistogramRow],
) -> Result<()> {
    let traces = dir.join("traces");
    std::fs::create_dir_all(&traces)?;
    for t in trials {
        for run in &t.runs {
            trace::write_file(&traces.join(trace_file_name(t.trial, &run.criterion)), &run.rows)?;
        }
    }
    std::fs::write(dir.join("aggregate.csv"), aggregate_csv(curves))?;
    std::fs::write(dir.join("question_types.csv"), histogram_csv(histogram))?;
    Ok(())
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = AGGREGATE_HEADER.join(",");
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:.2},{},{},{},{},{},{}",
            r.probe_cost,
            r.criterion,
            r.mean_tv_plurality,
            r.stderr_tv_plurality,
            r.mean_tv_borda,
            r.stderr_tv_borda,
            r.n_trials
        );
    }
    s
}

pub fn histogram_csv(rows: &[HistogramRow]) -> String {
    let mut s = HISTOGRAM_HEADER.join(",");
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.iteration, r.criterion, r.full_ranking, r.top_choice, r.pairwise, r.other
        );
    }
    s
}

/// Reads every `trialNNNN_<criterion>.csv` under the given directories,
/// grouped by criterion (sorted by name), each group in trial order.
pub fn load_trace_dirs(dirs: &[PathBuf]) -> Result<Vec<(String, Vec<Vec<TraceRow>>)>> {
    let mut found: BTreeMap<String, BTreeMap<(usize, usize), Vec<TraceRow>>> = BTreeMap::new();
    for (d, dir) in dirs.iter().enumerate() {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let name = e.file_name().to_string_lossy().into_owned();
            if let Some((trial, criterion)) = parse_trace_file_name(&name) {
                found
                    .entry(criterion)
                    .or_default()
                    .insert((d, trial), trace::read_file(&e.path())?);
            }
        }
    }
    if found.is_empty() {
        return Err(Error::Io(format!("no trace files in {dirs:?}")));
    }
    Ok(found
        .into_iter()
        .map(|(c, runs)| (c, runs.into_values().collect()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iteration: usize, cum: f64, tv: f64, kl: Option<(usize, usize)>) -> TraceRow {
        TraceRow {
            iteration,
            agent: kl.map(|_| 5),
            depth: kl.map(|x| x.0),
            size: kl.map(|x| x.1),
            subset: vec![],
            cost: 0.0,
            cumulative_cost: cum,
            response: vec![],
            criterion_value: 0.0,
            tv_plurality: Some(tv),
            tv_borda: Some(tv / 2.0),
        }
    }

    #[test]
    fn grid_is_exact_hundredths() {
        let g = probe_grid(0.9);
        assert_eq!(g.len(), 19);
        assert_eq!(g[17], 0.85);
        assert_eq!(*g.last().unwrap(), 0.9);
        assert_eq!(probe_grid(0.07), vec![0.0, 0.05]);
    }

    #[test]
    fn step_alignment_takes_last_row_not_above_probe() {
        let rows = vec![
            row(0, 0.0, 0.5, None),
            row(1, 0.047, 0.4, Some((9, 10))),
            row(2, 0.094, 0.3, Some((9, 10))),
        ];
        assert_eq!(row_at_cost(&rows, 0.0).unwrap().iteration, 0);
        assert_eq!(row_at_cost(&rows, 0.05).unwrap().iteration, 1);
        assert_eq!(row_at_cost(&rows, 0.094).unwrap().iteration, 2);
        assert_eq!(row_at_cost(&rows, 0.9).unwrap().iteration, 2);
    }

    #[test]
    fn curves_average_across_trials() {
        let runs = vec![(
            "d-opt".to_string(),
            vec![vec![row(0, 0.0, 0.2, None)], vec![row(0, 0.0, 0.4, None)]],
        )];
        let c = aggregate_curves(&runs, 0.05);
        assert_eq!(c.len(), 2);
        assert!((c[0].mean_tv_plurality - 0.3).abs() < 1e-15);
        assert!((c[0].stderr_tv_plurality - 0.1).abs() < 1e-15);
        assert!((c[0].mean_tv_borda - 0.15).abs() < 1e-15);
        assert_eq!(c[1].n_trials, 2);
    }

    #[test]
    fn classification() {
        assert_eq!(QuestionType::classify(9, 10, 10), QuestionType::FullRanking);
        assert_eq!(QuestionType::classify(1, 10, 10), QuestionType::TopChoice);
        assert_eq!(QuestionType::classify(1, 2, 10), QuestionType::Pairwise);
        assert_eq!(QuestionType::classify(3, 10, 10), QuestionType::Other);
        assert_eq!(QuestionType::classify(1, 2, 2), QuestionType::Pairwise);
    }

    #[test]
    fn histogram_counts_active_trials() {
        let a = vec![
            row(0, 0.0, 0.1, None),
            row(1, 0.047, 0.1, Some((9, 10))),
            row(2, 0.094, 0.1, Some((1, 2))),
        ];
        let b = vec![row(0, 0.0, 0.1, None), row(1, 0.047, 0.1, Some((9, 10)))];
        let h = question_type_histogram(&[("x".into(), vec![a, b])], 10);
        assert_eq!(h.len(), 2);
        assert_eq!((h[0].full_ranking, h[0].total()), (2, 2));
        assert_eq!((h[1].pairwise, h[1].total()), (1, 1));
    }

    #[test]
    fn trace_names_round_trip() {
        let n = trace_file_name(7, "mpc-top3@0");
        assert_eq!(n, "trial0007_mpc-top3@0.csv");
        assert_eq!(parse_trace_file_name(&n), Some((7, "mpc-top3@0".into())));
        assert_eq!(parse_trace_file_name("aggregate.csv"), None);
    }
}
