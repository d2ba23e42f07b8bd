//! Gridworld environments: the two builtin 5x5 maps, the text map format and
//! episodic stepping.
//!
//! Map format: `key = value` header lines, a blank line, then one row of
//! cells per line (`G` goal, `A` start, `X` corrupt, `.` normal).
//!
//! ```text
//! base_reward = 10
//! corrupt_observed = 11
//! horizon = 8
//! metric = manhattan
//! reward_rule = chebyshev_to_goal
//!
//! G...X
//! .....
//! .....
//! .....
//! X...A
//! ```

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::model::{
    chebyshev_distance, check_spiky_assumptions, manhattan_distance, smoothness_violations, ActionId, CrmdpInstance,
    GridState, InstanceParts, LvKind, LvMeasure, Metric, StateId,
};

pub const DEFAULT_BASE_REWARD: f64 = 10.0;
pub const DEFAULT_CORRUPT_OBSERVED: f64 = 11.0;
/// Eight steps is the shortest start-to-goal path on the builtin maps.
pub const DEFAULT_HORIZON: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    /// Fixed order; also the greedy tie-break order.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn id(self) -> ActionId {
        ActionId(self as usize)
    }

    pub fn from_id(id: ActionId) -> Option<Action> {
        Action::ALL.get(id.0).copied()
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "up" | "u" => Ok(Action::Up),
            "down" | "d" => Ok(Action::Down),
            "left" | "l" => Ok(Action::Left),
            "right" | "r" => Ok(Action::Right),
            other => Err(format!("unknown action `{other}`")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("true reward is not Lipschitz: |R{a} - R{b}| = {diff} > d = {dist}")]
    SmoothnessViolation {
        a: GridState,
        b: GridState,
        diff: f64,
        dist: f64,
    },
    #[error("no non-corrupt cells")]
    NoNoncorruptStates,
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("episode is over")]
    EpisodeOver,
    #[error("cell {0} is outside the grid")]
    OutOfGrid(GridState),
}

impl EnvError {
    fn parse(line: usize, msg: impl Into<String>) -> Self {
        EnvError::Parse { line, msg: msg.into() }
    }
}

/// Everything needed to construct a [`GridEnv`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub goal: GridState,
    pub start: GridState,
    pub corrupt_cells: BTreeSet<GridState>,
    pub base_reward: f64,
    pub corrupt_observed: f64,
    pub horizon: usize,
}

impl GridSpec {
    /// 5x5, goal top-left, start bottom-right, default rewards and horizon.
    pub fn five_by_five(corrupt: &[(usize, usize)]) -> Self {
        GridSpec {
            width: 5,
            height: 5,
            goal: GridState::new(0, 0),
            start: GridState::new(4, 4),
            corrupt_cells: corrupt.iter().map(|&c| c.into()).collect(),
            base_reward: DEFAULT_BASE_REWARD,
            corrupt_observed: DEFAULT_CORRUPT_OBSERVED,
            horizon: DEFAULT_HORIZON,
        }
    }
}

/// Whether the corruption is spiky (condition 3) under each LV measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpikyStatus {
    pub nlv: bool,
    pub tlv: bool,
}

impl SpikyStatus {
    pub fn get(&self, kind: LvKind) -> bool {
        match kind {
            LvKind::Nlv => self.nlv,
            LvKind::Tlv => self.tlv,
        }
    }
}

/// A gridworld whose true reward is `base_reward - chebyshev(cell, goal)`,
/// observed as `corrupt_observed` on corrupt cells, with the Manhattan metric.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEnv {
    spec: GridSpec,
    instance: CrmdpInstance,
    spiky: SpikyStatus,
}

impl GridEnv {
    /// Builds the environment. Fails if no cell is non-corrupt or the true
    /// reward is not Lipschitz; a non-spiky corruption is only recorded in
    /// [`GridEnv::spiky_status`].
    pub fn new(spec: GridSpec) -> Result<GridEnv, EnvError> {
        if spec.width == 0 || spec.height == 0 {
            return Err(EnvError::Invalid("empty grid".into()));
        }
        if spec.horizon == 0 {
            return Err(EnvError::Invalid("horizon must be positive".into()));
        }
        for &cell in [spec.goal, spec.start].iter().chain(spec.corrupt_cells.iter()) {
            if cell.row >= spec.height || cell.col >= spec.width {
                return Err(EnvError::OutOfGrid(cell));
            }
        }
        if spec.goal == spec.start {
            return Err(EnvError::Invalid("goal and start coincide".into()));
        }
        if !(spec.base_reward.is_finite() && spec.corrupt_observed.is_finite()) {
            return Err(EnvError::Invalid("rewards must be finite".into()));
        }

        let (w, h) = (spec.width, spec.height);
        let n = w * h;
        let cell = |i: usize| GridState::new(i / w, i % w);
        let id = |g: GridState| StateId(g.row * w + g.col);

        let mut transition = Vec::with_capacity(n * 4);
        for i in 0..n {
            let at = cell(i);
            for action in Action::ALL {
                transition.push(id(move_clamped(at, action, w, h)));
            }
        }
        let true_reward: Vec<f64> = (0..n)
            .map(|i| spec.base_reward - chebyshev_distance(cell(i), spec.goal) as f64)
            .collect();
        let observed_reward: Vec<f64> = (0..n)
            .map(|i| {
                if spec.corrupt_cells.contains(&cell(i)) {
                    spec.corrupt_observed
                } else {
                    true_reward[i]
                }
            })
            .collect();
        let instance = CrmdpInstance::new(InstanceParts {
            num_actions: 4,
            transition,
            true_reward,
            observed_reward,
            metric: Metric::from_fn(n, |a, b| manhattan_distance(cell(a.0), cell(b.0))),
            start: id(spec.start),
            terminals: [id(spec.goal)].into_iter().collect(),
            horizon: spec.horizon,
        })
        .map_err(|e| EnvError::Invalid(e.to_string()))?;

        if instance.noncorrupt_states().is_empty() {
            return Err(EnvError::NoNoncorruptStates);
        }
        if let Some(&(a, b)) = smoothness_violations(&instance).first() {
            return Err(EnvError::SmoothnessViolation {
                a: cell(a.0),
                b: cell(b.0),
                diff: (instance.true_reward(a) - instance.true_reward(b)).abs(),
                dist: instance.distance(a, b),
            });
        }
        let spiky_under = |kind| check_spiky_assumptions(&instance, &LvMeasure::counting(kind), 0, 0).cond_spiky;
        let spiky = SpikyStatus {
            nlv: spiky_under(LvKind::Nlv),
            tlv: spiky_under(LvKind::Tlv),
        };
        Ok(GridEnv { spec, instance, spiky })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn instance(&self) -> &CrmdpInstance {
        &self.instance
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }

    pub fn goal(&self) -> GridState {
        self.spec.goal
    }

    pub fn start(&self) -> GridState {
        self.spec.start
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn corrupt_cells(&self) -> &BTreeSet<GridState> {
        &self.spec.corrupt_cells
    }

    pub fn spiky_status(&self) -> SpikyStatus {
        self.spiky
    }

    pub fn state_id(&self, g: GridState) -> StateId {
        debug_assert!(self.contains(g));
        StateId(g.row * self.spec.width + g.col)
    }

    pub fn cell(&self, s: StateId) -> GridState {
        GridState::new(s.0 / self.spec.width, s.0 % self.spec.width)
    }

    pub fn contains(&self, g: GridState) -> bool {
        g.row < self.spec.height && g.col < self.spec.width
    }

    /// Cell reached from `at` by `action`; walls leave the position unchanged.
    pub fn transition(&self, at: GridState, action: Action) -> GridState {
        move_clamped(at, action, self.spec.width, self.spec.height)
    }

    pub fn episode(&self) -> Episode<'_> {
        Episode {
            env: self,
            at: self.spec.start,
            steps: 0,
            done: false,
        }
    }

    /// Serializes to the text map format; [`parse_env`] inverts it.
    pub fn to_map_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "base_reward = {}", self.spec.base_reward);
        let _ = writeln!(out, "corrupt_observed = {}", self.spec.corrupt_observed);
        let _ = writeln!(out, "horizon = {}", self.spec.horizon);
        let _ = writeln!(out, "metric = manhattan");
        let _ = writeln!(out, "reward_rule = chebyshev_to_goal");
        out.push('\n');
        for r in 0..self.spec.height {
            for c in 0..self.spec.width {
                let g = GridState::new(r, c);
                out.push(if g == self.spec.goal {
                    'G'
                } else if g == self.spec.start {
                    'A'
                } else if self.spec.corrupt_cells.contains(&g) {
                    'X'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    /// Reward table rendered row by row: observed value, with the true value
    /// in parentheses on corrupt cells.
    pub fn render_rewards(&self) -> String {
        let mut out = String::new();
        for r in 0..self.spec.height {
            let row: Vec<String> = (0..self.spec.width)
                .map(|c| {
                    let s = self.state_id(GridState::new(r, c));
                    let (tr, ob) = (self.instance.true_reward(s), self.instance.observed_reward(s));
                    if tr == ob {
                        format!("{ob:>8}")
                    } else {
                        format!("{:>8}", format!("{ob} ({tr})"))
                    }
                })
                .collect();
            out.push_str(&row.join(""));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for GridEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_map_text())
    }
}

fn move_clamped(at: GridState, action: Action, width: usize, height: usize) -> GridState {
    match action {
        Action::Up => GridState::new(at.row.saturating_sub(1), at.col),
        Action::Down => GridState::new((at.row + 1).min(height - 1), at.col),
        Action::Left => GridState::new(at.row, at.col.saturating_sub(1)),
        Action::Right => GridState::new(at.row, (at.col + 1).min(width - 1)),
    }
}

/// Corrupt corners at the top-right and bottom-left.
pub fn builtin_corners() -> GridEnv {
    GridEnv::new(GridSpec::five_by_five(&[(0, 4), (4, 0)])).expect("builtin map is valid")
}

/// The corners plus two corrupt cells on every shortest path to the goal.
pub fn builtin_ontheway() -> GridEnv {
    GridEnv::new(GridSpec::five_by_five(&[(0, 4), (4, 0), (1, 2), (2, 1)])).expect("builtin map is valid")
}

pub fn builtin(name: &str) -> Option<GridEnv> {
    match name.to_ascii_lowercase().as_str() {
        "corners" => Some(builtin_corners()),
        "ontheway" | "on_the_way" | "on-the-way" => Some(builtin_ontheway()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 2] = ["corners", "ontheway"];

/// Parses the text map format.
pub fn parse_env(text: &str) -> Result<GridEnv, EnvError> {
    let mut spec = GridSpec {
        width: 0,
        height: 0,
        goal: GridState::new(0, 0),
        start: GridState::new(0, 0),
        corrupt_cells: BTreeSet::new(),
        base_reward: DEFAULT_BASE_REWARD,
        corrupt_observed: DEFAULT_CORRUPT_OBSERVED,
        horizon: DEFAULT_HORIZON,
    };
    let mut goal = None;
    let mut start = None;
    let mut rows: Vec<&str> = Vec::new();
    let mut in_grid = false;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if !in_grid {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                let number = |v: &str| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| EnvError::parse(lineno, format!("`{key}` expects a number, got `{v}`")))
                };
                match key {
                    "base_reward" => spec.base_reward = number(value)?,
                    "corrupt_observed" => spec.corrupt_observed = number(value)?,
                    "horizon" => {
                        spec.horizon = value
                            .parse()
                            .map_err(|_| EnvError::parse(lineno, format!("bad horizon `{value}`")))?
                    }
                    "metric" if value == "manhattan" => {}
                    "metric" => return Err(EnvError::parse(lineno, format!("unsupported metric `{value}`"))),
                    "reward_rule" if value == "chebyshev_to_goal" => {}
                    "reward_rule" => return Err(EnvError::parse(lineno, format!("unsupported reward_rule `{value}`"))),
                    other => return Err(EnvError::parse(lineno, format!("unknown key `{other}`"))),
                }
                continue;
            }
            in_grid = true;
        }
        if line.is_empty() {
            // Trailing blank lines end the grid.
            if text.lines().skip(i).all(|l| l.trim().is_empty()) {
                break;
            }
            return Err(EnvError::parse(lineno, "blank line inside grid"));
        }
        let r = rows.len();
        for (c, ch) in line.chars().enumerate() {
            let g = GridState::new(r, c);
            match ch {
                '.' => {}
                'X' => {
                    spec.corrupt_cells.insert(g);
                }
                'G' => {
                    if goal.replace(g).is_some() {
                        return Err(EnvError::parse(lineno, "more than one `G`"));
                    }
                }
                'A' => {
                    if start.replace(g).is_some() {
                        return Err(EnvError::parse(lineno, "more than one `A`"));
                    }
                }
                other => return Err(EnvError::parse(lineno, format!("unknown cell `{other}`"))),
            }
        }
        if let Some(first) = rows.first() {
            if first.chars().count() != line.chars().count() {
                return Err(EnvError::parse(lineno, "rows have different lengths"));
            }
        }
        rows.push(line);
    }

    if rows.is_empty() {
        return Err(EnvError::parse(text.lines().count(), "missing grid"));
    }
    spec.height = rows.len();
    spec.width = rows[0].chars().count();
    spec.goal = goal.ok_or_else(|| EnvError::parse(0, "missing `G`"))?;
    spec.start = start.ok_or_else(|| EnvError::parse(0, "missing `A`"))?;
    GridEnv::new(spec)
}

/// One step of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: GridState,
    pub observed_reward: f64,
    /// Hidden channel, for evaluation only.
    pub true_reward: f64,
    pub done: bool,
    /// 1-based index of this step.
    pub step_index: usize,
}

/// A single-owner episode session.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    env: &'a GridEnv,
    at: GridState,
    steps: usize,
    done: bool,
}

impl<'a> Episode<'a> {
    /// Starts an episode from an arbitrary cell.
    pub fn from_cell(env: &'a GridEnv, at: GridState) -> Result<Self, EnvError> {
        if !env.contains(at) {
            return Err(EnvError::OutOfGrid(at));
        }
        Ok(Episode {
            env,
            at,
            steps: 0,
            done: false,
        })
    }

    pub fn position(&self) -> GridState {
        self.at
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let next = self.env.transition(self.at, action);
        let s = self.env.state_id(next);
        self.steps += 1;
        self.at = next;
        self.done = next == self.env.goal() || self.steps == self.env.horizon();
        Ok(StepOutcome {
            next,
            observed_reward: self.env.instance.observed_reward(s),
            true_reward: self.env.instance.true_reward(s),
            done: self.done,
            step_index: self.steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{trajectory_return, TrajectoryCheck};

    const CORNERS_MAP: &str = "\
base_reward = 10
corrupt_observed = 11
horizon = 8
metric = manhattan
reward_rule = chebyshev_to_goal

G...X
.....
.....
.....
X...A
";

    #[test]
    fn corners_rewards() {
        let env = builtin_corners();
        let inst = env.instance();
        let at = |r, c| env.state_id(GridState::new(r, c));
        assert_eq!(inst.true_reward(at(0, 0)), 10.0);
        assert_eq!(inst.true_reward(at(4, 4)), 6.0);
        assert_eq!(inst.observed_reward(at(0, 4)), 11.0);
        assert_eq!(inst.true_reward(at(0, 4)), 6.0);
    }

    #[test]
    fn ontheway_interior_cells_follow_the_rule() {
        let env = builtin_ontheway();
        let inst = env.instance();
        for cell in [(1, 2), (2, 1)] {
            let s = env.state_id(cell.into());
            assert_eq!(inst.true_reward(s), 8.0);
            assert_eq!(inst.observed_reward(s), 11.0);
        }
    }

    #[test]
    fn builtins_are_spiky() {
        for env in [builtin_corners(), builtin_ontheway()] {
            assert_eq!(env.spiky_status(), SpikyStatus { nlv: true, tlv: true });
        }
    }

    #[test]
    fn parse_corners_matches_builtin() {
        assert_eq!(parse_env(CORNERS_MAP).unwrap(), builtin_corners());
    }

    #[test]
    fn serialization_round_trip() {
        for env in [builtin_corners(), builtin_ontheway()] {
            let text = env.to_map_text();
            let back = parse_env(&text).unwrap();
            assert_eq!(back, env);
            assert_eq!(back.to_map_text(), text);
        }
    }

    #[test]
    fn parse_rejects_two_starts() {
        let text = CORNERS_MAP.replace("X...A", "A...A");
        assert!(matches!(parse_env(&text), Err(EnvError::Parse { .. })));
    }

    #[test]
    fn parse_rejects_missing_goal_and_unknown_char() {
        assert!(matches!(
            parse_env(&CORNERS_MAP.replace('G', ".")),
            Err(EnvError::Parse { .. })
        ));
        assert!(matches!(
            parse_env(&CORNERS_MAP.replace("G...X", "G..?X")),
            Err(EnvError::Parse { .. })
        ));
        assert!(matches!(
            parse_env(&CORNERS_MAP.replace("metric = manhattan", "metric = euclid")),
            Err(EnvError::Parse { .. })
        ));
        assert!(matches!(
            parse_env(&CORNERS_MAP.replace(".....\nX", "....\nX")),
            Err(EnvError::Parse { .. })
        ));
    }

    #[test]
    fn mild_corruption_constructs_but_is_not_spiky() {
        // 10.5 next to R=6 cells: still a violation, but weak.
        let text = CORNERS_MAP.replace("corrupt_observed = 11", "corrupt_observed = 10.5");
        let env = parse_env(&text).unwrap();
        let status = env.spiky_status();
        for kind in LvKind::ALL {
            let report = check_spiky_assumptions(env.instance(), &LvMeasure::counting(kind), 0, 0);
            assert_eq!(status.get(kind), report.cond_spiky);
        }
    }

    #[test]
    fn all_corrupt_grid_is_rejected() {
        let text = "G\nA\n";
        assert!(parse_env(text).is_ok());
        let spec = GridSpec {
            width: 2,
            height: 1,
            goal: GridState::new(0, 0),
            start: GridState::new(0, 1),
            corrupt_cells: [(0, 0), (0, 1)].iter().map(|&c| c.into()).collect(),
            base_reward: 10.0,
            corrupt_observed: 50.0,
            horizon: 3,
        };
        assert_eq!(GridEnv::new(spec).unwrap_err(), EnvError::NoNoncorruptStates);
    }

    #[test]
    fn chebyshev_rule_is_always_smooth() {
        // The only reward rule is 1-Lipschitz under Manhattan distance, so a
        // map file can never trigger `SmoothnessViolation`.
        for (w, h) in [(1, 2), (3, 7), (8, 8)] {
            let spec = GridSpec {
                width: w,
                height: h,
                goal: GridState::new(0, 0),
                start: GridState::new(h - 1, w - 1),
                corrupt_cells: BTreeSet::new(),
                base_reward: 3.0,
                corrupt_observed: 0.0,
                horizon: 4,
            };
            let env = GridEnv::new(spec).unwrap();
            assert!(smoothness_violations(env.instance()).is_empty());
        }
    }

    #[test]
    fn stepping_examples() {
        let env = builtin_corners();
        let mut ep = env.episode();
        let out = ep.step(Action::Up).unwrap();
        assert_eq!(out.next, GridState::new(3, 4));
        assert_eq!((out.observed_reward, out.true_reward, out.done), (6.0, 6.0, false));

        let mut ep = Episode::from_cell(&env, GridState::new(0, 1)).unwrap();
        let out = ep.step(Action::Left).unwrap();
        assert_eq!(out.next, GridState::new(0, 0));
        assert_eq!(out.observed_reward, 10.0);
        assert!(out.done);
        assert_eq!(ep.step(Action::Left).unwrap_err(), EnvError::EpisodeOver);

        let mut ep = env.episode();
        let out = ep.step(Action::Right).unwrap();
        assert_eq!(out.next, GridState::new(4, 4));
        assert_eq!(out.observed_reward, 6.0);
    }

    #[test]
    fn horizon_ends_episode() {
        let env = builtin_corners();
        let mut ep = env.episode();
        for i in 1..=env.horizon() {
            let out = ep.step(Action::Right).unwrap();
            assert_eq!(out.step_index, i);
            assert_eq!(out.done, i == env.horizon());
        }
        assert_eq!(ep.step(Action::Up).unwrap_err(), EnvError::EpisodeOver);
    }

    #[test]
    fn staircase_collects_64() {
        let env = builtin_corners();
        let mut ep = env.episode();
        let mut total = 0.0;
        for a in [Action::Up, Action::Left].iter().cycle().take(8) {
            total += ep.step(*a).unwrap().observed_reward;
        }
        assert!(ep.is_done());
        assert_eq!(total, 64.0);
    }

    #[test]
    fn instance_and_session_agree() {
        let env = builtin_ontheway();
        let actions = [
            Action::Left,
            Action::Up,
            Action::Left,
            Action::Up,
            Action::Left,
            Action::Up,
        ];
        let ids: Vec<ActionId> = actions.iter().map(|a| a.id()).collect();
        let tau = env.instance().follow(&ids);
        let mut ep = env.episode();
        let mut total = 0.0;
        for a in actions {
            total += ep.step(a).unwrap().observed_reward;
        }
        assert_eq!(total, trajectory_return(&tau, env.instance().observed_rewards()));
    }

    #[test]
    fn builtins_sampled_trajectory_condition() {
        for env in [builtin_corners(), builtin_ontheway()] {
            for lv in [LvMeasure::nlv(), LvMeasure::tlv()] {
                let r = check_spiky_assumptions(env.instance(), &lv, 500, 3);
                assert!(
                    !matches!(r.cond_spiky_traj, TrajectoryCheck::Violated { .. }),
                    "{:?}",
                    r.cond_spiky_traj
                );
            }
        }
    }
}
