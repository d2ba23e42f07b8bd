use std::collections::BTreeSet;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spiky_crmdp::agent::{learn_online as learn, AgentConfig, AgentMode, RewardChannel};
use spiky_crmdp::bounds::{compute_bounds, plan_value_iteration, regret_upper_bound};
use spiky_crmdp::detect::identify_corrupt_states;
use spiky_crmdp::envs::{self, Action};
use spiky_crmdp::harness::{run_experiment, ExperimentSpec};
use spiky_crmdp::model::{check_spiky_assumptions, trajectory_return, GridState, LvKind, LvMeasure, StateId};

type Cell = (usize, usize);

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn lv_measure(name: &str) -> PyResult<LvMeasure> {
    Ok(LvMeasure::counting(name.parse::<LvKind>().map_err(value_err)?))
}

/// A 5x5-style gridworld with hidden true reward and corrupt observed reward.
#[pyclass(name = "GridEnv", module = "pycrmdp", frozen)]
struct PyGridEnv {
    inner: envs::GridEnv,
}

impl PyGridEnv {
    fn cell(&self, s: StateId) -> Cell {
        let g = self.inner.cell(s);
        (g.row, g.col)
    }

    fn cells<'a>(&self, states: impl IntoIterator<Item = &'a StateId>) -> Vec<Cell> {
        states.into_iter().map(|&s| self.cell(s)).collect()
    }

    fn state(&self, (row, col): Cell) -> PyResult<StateId> {
        let g = GridState::new(row, col);
        if !self.inner.contains(g) {
            return Err(PyValueError::new_err(format!("cell {g} is outside the grid")));
        }
        Ok(self.inner.state_id(g))
    }
}

#[pymethods]
impl PyGridEnv {
    /// `corners` or `ontheway`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        envs::builtin(name)
            .map(|inner| PyGridEnv { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown builtin `{name}`")))
    }

    /// Parses the text map format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        envs::parse_env(text)
            .map(|inner| PyGridEnv { inner })
            .map_err(value_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn goal(&self) -> Cell {
        let g = self.inner.goal();
        (g.row, g.col)
    }

    #[getter]
    fn start(&self) -> Cell {
        let g = self.inner.start();
        (g.row, g.col)
    }

    #[getter]
    fn corrupt_cells(&self) -> Vec<Cell> {
        self.inner.corrupt_cells().iter().map(|g| (g.row, g.col)).collect()
    }

    fn true_reward(&self, cell: Cell) -> PyResult<f64> {
        Ok(self.inner.instance().true_reward(self.state(cell)?))
    }

    fn observed_reward(&self, cell: Cell) -> PyResult<f64> {
        Ok(self.inner.instance().observed_reward(self.state(cell)?))
    }

    /// Cell reached from `cell` by `action` (up, down, left, right).
    fn transition(&self, cell: Cell, action: &str) -> PyResult<Cell> {
        self.state(cell)?;
        let a: Action = action.parse().map_err(value_err)?;
        let g = self.inner.transition(GridState::new(cell.0, cell.1), a);
        Ok((g.row, g.col))
    }

    fn map_text(&self) -> String {
        self.inner.to_map_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "GridEnv({}x{}, {} corrupt cells)",
            self.inner.width(),
            self.inner.height(),
            self.inner.corrupt_cells().len()
        )
    }
}

/// Corrupt cells identified from the whole state space, in scan order.
#[pyfunction]
#[pyo3(signature = (env, lv = "nlv"))]
fn detect(env: &PyGridEnv, lv: &str) -> PyResult<Vec<Cell>> {
    let inst = env.inner.instance();
    let all: BTreeSet<StateId> = inst.states().collect();
    let report = identify_corrupt_states(&all, &lv_measure(lv)?, inst).map_err(value_err)?;
    Ok(env.cells(&report.identified_corrupt))
}

/// Checks the spikiness conditions against the hidden true reward.
#[pyfunction]
#[pyo3(signature = (env, lv = "nlv", samples = 1000, seed = 0))]
fn check<'py>(py: Python<'py>, env: &PyGridEnv, lv: &str, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let r = check_spiky_assumptions(env.inner.instance(), &lv_measure(lv)?, samples, seed);
    let d = PyDict::new(py);
    d.set_item("nonempty", r.cond_nonempty)?;
    d.set_item("smooth", r.cond_smooth)?;
    d.set_item("spiky", r.cond_spiky)?;
    d.set_item("trajectory_violated", r.cond_spiky_traj.is_violated())?;
    d.set_item("noncorrupt_sup", r.noncorrupt_sup)?;
    Ok(d)
}

/// Reward bounds from the true non-corrupt cells, keyed by cell, plus the
/// regret bound.
#[pyfunction]
fn bounds<'py>(py: Python<'py>, env: &PyGridEnv) -> PyResult<Bound<'py, PyDict>> {
    let inst = env.inner.instance();
    let b = compute_bounds(inst, &inst.noncorrupt_states()).map_err(value_err)?;
    let (lower, upper) = (PyDict::new(py), PyDict::new(py));
    for s in inst.states() {
        lower.set_item(env.cell(s), b.lower(s))?;
        upper.set_item(env.cell(s), b.upper(s))?;
    }
    let d = PyDict::new(py);
    d.set_item("lower", lower)?;
    d.set_item("upper", upper)?;
    d.set_item("regret_bound", regret_upper_bound(inst, &b))?;
    Ok(d)
}

/// Optimal plan for `reward` in {"true", "observed", "lower"} (the last
/// plans on the lower Lipschitz bound). Returns the trajectory and its true
/// and observed returns.
#[pyfunction]
#[pyo3(signature = (env, reward = "true"))]
fn plan<'py>(py: Python<'py>, env: &PyGridEnv, reward: &str) -> PyResult<Bound<'py, PyDict>> {
    let inst = env.inner.instance();
    let r = match reward {
        "true" => inst.true_rewards().to_vec(),
        "observed" => inst.observed_rewards().to_vec(),
        "lower" => {
            compute_bounds(inst, &inst.noncorrupt_states())
                .map_err(value_err)?
                .lower
        }
        other => return Err(PyValueError::new_err(format!("unknown reward `{other}`"))),
    };
    let p = plan_value_iteration(inst, &r);
    let traj = p.trajectory(inst);
    let d = PyDict::new(py);
    d.set_item("trajectory", env.cells(&traj))?;
    d.set_item("true_return", trajectory_return(&traj, inst.true_rewards()))?;
    d.set_item("observed_return", trajectory_return(&traj, inst.observed_rewards()))?;
    Ok(d)
}

/// Trains a tabular agent; returns per-episode columns and the identified
/// corrupt cells.
#[pyfunction]
#[pyo3(signature = (env, agent = "crmdp", reward = "observed", episodes = 20_000, seed = 0, lv = "nlv", cache_capacity = None))]
#[allow(clippy::too_many_arguments)]
fn learn_online<'py>(
    py: Python<'py>,
    env: &PyGridEnv,
    agent: &str,
    reward: &str,
    episodes: usize,
    seed: u64,
    lv: &str,
    cache_capacity: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mode: AgentMode = agent.parse().map_err(value_err)?;
    let channel: RewardChannel = reward.parse().map_err(value_err)?;
    let cfg = AgentConfig::new(mode, channel, seed).with_episodes(episodes);
    let lv = lv_measure(lv)?;
    let inner = &env.inner;
    let rec = py
        .detach(|| learn(inner, &cfg, &lv, cache_capacity))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    let col = |f: fn(&spiky_crmdp::record::EpisodeRow) -> f64| rec.rows.iter().map(f).collect::<Vec<f64>>();
    d.set_item("observed_return", col(|r| r.observed_return))?;
    d.set_item("true_return", col(|r| r.true_return))?;
    d.set_item("ema_observed", col(|r| r.ema_observed))?;
    d.set_item("identified_corrupt", env.cells(&rec.final_corrupt))?;
    d.set_item("cache_evictions", rec.cache_evictions)?;
    Ok(d)
}

/// Runs the four agent configurations on builtin environments; returns one
/// dict per result row.
#[pyfunction]
#[pyo3(name = "bench", signature = (envs = vec!["corners".to_string(), "ontheway".to_string()], seeds = vec![0, 1, 2, 3, 4], episodes = 20_000))]
fn run_bench<'py>(
    py: Python<'py>,
    envs: Vec<String>,
    seeds: Vec<u64>,
    episodes: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let environments = envs
        .iter()
        .map(|n| {
            envs::builtin(n)
                .map(|e| (n.clone(), e))
                .ok_or_else(|| PyValueError::new_err(format!("unknown builtin `{n}`")))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let mut spec = ExperimentSpec::battery(environments, seeds);
    spec.agent = AgentConfig::default().with_episodes(episodes);
    spec.agent.validate().map_err(value_err)?;
    let res = py.detach(|| run_experiment(&spec));
    res.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("environment", &r.environment)?;
            d.set_item("reward", &r.reward)?;
            d.set_item("agent", &r.agent)?;
            d.set_item("avg_corrupt_reward", r.avg_corrupt_reward)?;
            d.set_item("avg_true_reward", r.avg_true_reward)?;
            d.set_item("sample_complexity", r.sample_complexity)?;
            d.set_item("sc_ratio", r.sc_ratio)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pycrmdp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridEnv>()?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(learn_online, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
