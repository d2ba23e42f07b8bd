//! Experiment runner: the four agent configurations per environment over a
//! list of seeds, sample-complexity metrics, and CSV/SVG reports.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::agent::{learn_online, AgentConfig, AgentMode, RewardChannel};
use crate::bounds::{compute_bounds, plan_value_iteration};
use crate::envs::GridEnv;
use crate::model::{trajectory_return, LvMeasure};
use crate::plot::{LineChart, Series};
pub use crate::record::{ema_step, DetectionEvent, EpisodeRow, RunRecord, EMA_MOMENTUM};

/// Default slack when deciding that the moving average reached the optimum.
pub const DEFAULT_TOLERANCE: f64 = 1.0;
/// Episodes at the end of each run averaged into the result rows.
pub const TAIL_EPISODES: usize = 100;

const REPORT_FOOTER: &str = "# sample complexity depends on exploration randomness and the learner; \
compare it across seeds and configurations, not as an absolute figure";

/// First episode from which the moving average stays at or above
/// `optimal_return - tolerance` until the end of the run; `None` if the run
/// ends below it.
///
/// A greedy policy can pass through high observed return by accident before
/// learning anything (all-tied action values pick the same action at every
/// step), so the first crossing alone is not a convergence time.
pub fn sample_complexity(record: &RunRecord, optimal_return: f64, tolerance: f64) -> Option<usize> {
    let threshold = optimal_return - tolerance;
    match record.rows.iter().rposition(|r| r.ema_observed < threshold) {
        None if record.rows.is_empty() => None,
        None => Some(0),
        Some(i) if i + 1 == record.rows.len() => None,
        Some(i) => Some(i + 1),
    }
}

/// Episode index at which the moving average first reaches
/// `optimal_return - tolerance`, whether or not it stays there.
pub fn first_crossing(record: &RunRecord, optimal_return: f64, tolerance: f64) -> Option<usize> {
    record
        .rows
        .iter()
        .position(|r| r.ema_observed >= optimal_return - tolerance)
}

/// One agent/channel pairing of the battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgentSetup {
    pub mode: AgentMode,
    pub channel: RewardChannel,
}

impl AgentSetup {
    pub const BASELINE_OBSERVED: AgentSetup = AgentSetup {
        mode: AgentMode::Baseline,
        channel: RewardChannel::Observed,
    };
    pub const BASELINE_TRUE: AgentSetup = AgentSetup {
        mode: AgentMode::Baseline,
        channel: RewardChannel::True,
    };
    pub const CRMDP_TRUE: AgentSetup = AgentSetup {
        mode: AgentMode::Crmdp,
        channel: RewardChannel::True,
    };
    pub const CRMDP_OBSERVED: AgentSetup = AgentSetup {
        mode: AgentMode::Crmdp,
        channel: RewardChannel::Observed,
    };

    /// Table order: corrupt baseline, uncorrupt baseline, uncorrupt CRMDP,
    /// corrupt CRMDP.
    pub const BATTERY: [AgentSetup; 4] = [
        Self::BASELINE_OBSERVED,
        Self::BASELINE_TRUE,
        Self::CRMDP_TRUE,
        Self::CRMDP_OBSERVED,
    ];
}

impl fmt::Display for AgentSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.mode, self.channel)
    }
}

/// Return, in the channel the agent observes, of the policy a configuration
/// should converge to: the planner's optimum on the channel reward for the
/// baseline, and on the lower Lipschitz bound for the CRMDP agent.
pub fn target_return(env: &GridEnv, setup: AgentSetup) -> f64 {
    let inst = match setup.channel {
        RewardChannel::Observed => env.instance().clone(),
        RewardChannel::True => env.instance().uncorrupted(),
    };
    let planning_reward = match setup.mode {
        AgentMode::Baseline => inst.observed_rewards().to_vec(),
        AgentMode::Crmdp => {
            compute_bounds(&inst, &inst.noncorrupt_states())
                .expect("environments have non-corrupt states")
                .lower
        }
    };
    let plan = plan_value_iteration(&inst, &planning_reward);
    trajectory_return(&plan.trajectory(&inst), inst.observed_rewards())
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub environments: Vec<(String, GridEnv)>,
    pub setups: Vec<AgentSetup>,
    pub seeds: Vec<u64>,
    /// Template for every run; mode, channel and seed are overwritten.
    pub agent: AgentConfig,
    pub lv: LvMeasure,
    pub cache_capacity: Option<usize>,
    pub tolerance: f64,
}

impl ExperimentSpec {
    pub fn battery(environments: Vec<(String, GridEnv)>, seeds: Vec<u64>) -> Self {
        ExperimentSpec {
            environments,
            setups: AgentSetup::BATTERY.to_vec(),
            seeds,
            agent: AgentConfig::default(),
            lv: LvMeasure::nlv(),
            cache_capacity: None,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub environment: String,
    pub setup: AgentSetup,
    pub seed: u64,
    pub target: f64,
    pub result: Result<RunRecord, String>,
}

impl RunOutcome {
    pub fn sample_complexity(&self, tolerance: f64) -> Option<usize> {
        self.result
            .as_ref()
            .ok()
            .and_then(|r| sample_complexity(r, self.target, tolerance))
    }
}

/// Aggregate over seeds for one (environment, setup).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub environment: String,
    pub reward: String,
    pub agent: String,
    pub avg_corrupt_reward: f64,
    pub avg_true_reward: f64,
    /// Mean over seeds; `None` if any seed failed or never converged.
    pub sample_complexity: Option<f64>,
    /// Relative to the uncorrupt baseline of the same environment.
    pub sc_ratio: Option<f64>,
}

impl ResultRow {
    pub fn setup(&self) -> Option<AgentSetup> {
        AgentSetup::BATTERY
            .into_iter()
            .find(|s| s.mode.to_string() == self.agent && s.channel.to_string() == self.reward)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunOutcome>,
}

impl ExperimentResult {
    pub fn row(&self, environment: &str, setup: AgentSetup) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.environment == environment && r.setup() == Some(setup))
    }
}

/// Runs every (environment, setup, seed) in parallel and aggregates.
pub fn run_experiment(spec: &ExperimentSpec) -> ExperimentResult {
    if spec.seeds.is_empty() {
        return ExperimentResult {
            rows: Vec::new(),
            runs: Vec::new(),
        };
    }
    let jobs: Vec<(usize, AgentSetup, u64)> = (0..spec.environments.len())
        .flat_map(|e| {
            spec.setups
                .iter()
                .flat_map(move |&s| spec.seeds.iter().map(move |&seed| (e, s, seed)))
        })
        .collect();
    let runs: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(e, setup, seed)| {
            let (name, env) = &spec.environments[e];
            let cfg = AgentConfig {
                mode: setup.mode,
                reward_channel: setup.channel,
                seed,
                ..spec.agent.clone()
            };
            RunOutcome {
                environment: name.clone(),
                setup,
                seed,
                target: target_return(env, setup),
                result: learn_online(env, &cfg, &spec.lv, spec.cache_capacity).map_err(|e| e.to_string()),
            }
        })
        .collect();

    let mut rows = Vec::new();
    for (name, _) in &spec.environments {
        let mut env_rows: Vec<ResultRow> = spec
            .setups
            .iter()
            .map(|&setup| aggregate(name, setup, &runs, spec.tolerance))
            .collect();
        let base_sc = spec
            .setups
            .iter()
            .position(|&s| s == AgentSetup::BASELINE_TRUE)
            .and_then(|i| env_rows[i].sample_complexity);
        for row in &mut env_rows {
            row.sc_ratio = match (row.sample_complexity, base_sc) {
                (Some(sc), Some(base)) if base > 0.0 => Some(sc / base),
                _ => None,
            };
        }
        rows.extend(env_rows);
    }
    ExperimentResult { rows, runs }
}

fn aggregate(environment: &str, setup: AgentSetup, runs: &[RunOutcome], tolerance: f64) -> ResultRow {
    let mine: Vec<&RunOutcome> = runs
        .iter()
        .filter(|r| r.environment == environment && r.setup == setup)
        .collect();
    let ok: Vec<&RunRecord> = mine.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let mean = |f: &dyn Fn(&RunRecord) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    let avg_corrupt_reward = mean(&|r| r.tail_mean(TAIL_EPISODES, |e| e.corrupt_return).unwrap_or(f64::NAN));
    let avg_true_reward = mean(&|r| r.tail_mean(TAIL_EPISODES, |e| e.true_return).unwrap_or(f64::NAN));
    let sc: Option<Vec<usize>> = mine.iter().map(|r| r.sample_complexity(tolerance)).collect();
    let sample_complexity = sc
        .filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<usize>() as f64 / v.len() as f64);
    ResultRow {
        environment: environment.to_string(),
        reward: setup.channel.to_string(),
        agent: setup.mode.to_string(),
        avg_corrupt_reward,
        avg_true_reward,
        sample_complexity,
        sc_ratio: None,
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "never".to_string(),
    }
}

pub const RESULTS_HEADER: [&str; 7] = [
    "environment",
    "reward",
    "agent",
    "avg_corrupt_reward",
    "avg_true_reward",
    "sample_complexity",
    "sc_ratio",
];

/// Writes `results.csv` (with a trailing comment line) to `out_dir`.
pub fn write_results_csv(rows: &[ResultRow], out_dir: &Path) -> Result<PathBuf, HarnessError> {
    let path = out_dir.join("results.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(RESULTS_HEADER).map_err(csv_err(&path))?;
    for r in rows {
        w.write_record([
            r.environment.clone(),
            r.reward.clone(),
            r.agent.clone(),
            format!("{:.2}", r.avg_corrupt_reward),
            format!("{:.2}", r.avg_true_reward),
            fmt_opt(r.sample_complexity),
            fmt_opt(r.sc_ratio),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    drop(w);
    let mut text = fs::read_to_string(&path).map_err(io_err(&path))?;
    text.push_str(REPORT_FOOTER);
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

/// Writes one CSV with the per-episode rows of `record`.
pub fn write_run_csv(record: &RunRecord, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in &record.rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn run_file_name(environment: &str, setup: AgentSetup, seed: u64) -> String {
    format!("run_{environment}_{}_{}_{seed}.csv", setup.mode, setup.channel)
}

/// Writes `results.csv`, one CSV per successful run, and one SVG
/// learning-curve plot per (environment, setup). Returns the written paths.
pub fn emit_report(rows: &[ResultRow], runs: &[RunOutcome], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = vec![write_results_csv(rows, out_dir)?];
    for run in runs {
        if let Ok(record) = &run.result {
            let path = out_dir.join(run_file_name(&run.environment, run.setup, run.seed));
            write_run_csv(record, &path)?;
            written.push(path);
        }
    }

    let mut groups: Vec<(String, AgentSetup)> = Vec::new();
    for run in runs {
        let key = (run.environment.clone(), run.setup);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (environment, setup) in groups {
        let records: Vec<&RunRecord> = runs
            .iter()
            .filter(|r| r.environment == environment && r.setup == setup)
            .filter_map(|r| r.result.as_ref().ok())
            .collect();
        if records.is_empty() {
            continue;
        }
        let chart = LineChart {
            title: format!("{environment} {setup}"),
            x_label: "episode".into(),
            y_label: "return".into(),
            series: vec![
                Series::new("ema observed return", mean_curve(&records, |e| e.ema_observed)),
                Series::new("greedy true return", mean_curve(&records, |e| e.true_return)),
            ],
        };
        let path = out_dir.join(format!("curve_{environment}_{}_{}.svg", setup.mode, setup.channel));
        fs::write(&path, chart.to_svg()).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Per-episode mean across runs, over the episodes every run reached.
fn mean_curve(records: &[&RunRecord], f: impl Fn(&EpisodeRow) -> f64) -> Vec<(f64, f64)> {
    let len = records.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let y = records.iter().map(|r| f(&r.rows[i])).sum::<f64>() / records.len() as f64;
            (i as f64, y)
        })
        .collect()
}

/// Plain-text table of the result rows.
pub fn format_rows(rows: &[ResultRow]) -> String {
    let mut out = format!(
        "{:<10} {:<9} {:<9} {:>10} {:>10} {:>12} {:>8}\n",
        "env", "reward", "agent", "avg_C", "avg_R", "sample_cx", "sc_ratio"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<9} {:<9} {:>10.2} {:>10.2} {:>12} {:>8}\n",
            r.environment,
            r.reward,
            r.agent,
            r.avg_corrupt_reward,
            r.avg_true_reward,
            fmt_opt(r.sample_complexity),
            fmt_opt(r.sc_ratio),
        ));
    }
    out
}
