//! Tabular Q-learning with online corruption filtering.
//!
//! Each episode is rolled out epsilon-greedily; in CRMDP mode the visited
//! states are run through corrupt-state identification, newly flagged states
//! get a cached lower Lipschitz bound as their reward, and the remaining
//! states feed the set of known non-corrupt states that improves those
//! bounds. The Q-update for the episode then uses the substituted rewards.
//!
//! The Q-table is indexed by `(step, state, action)` so that the finite
//! horizon stays Markov.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::detect::{identify_in_trajectory, DetectError};
use crate::envs::GridEnv;
use crate::model::{trajectory_return, ActionId, CrmdpInstance, LvMeasure, StateId};
use crate::record::{ema_step, DetectionEvent, EpisodeRow, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentMode {
    Baseline,
    Crmdp,
}

impl fmt::Display for AgentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentMode::Baseline => "baseline",
            AgentMode::Crmdp => "crmdp",
        })
    }
}

impl FromStr for AgentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(AgentMode::Baseline),
            "crmdp" => Ok(AgentMode::Crmdp),
            other => Err(format!("unknown agent `{other}` (expected baseline or crmdp)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardChannel {
    /// The corrupt reward `C`.
    Observed,
    /// The hidden true reward `R`.
    True,
}

impl fmt::Display for RewardChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardChannel::Observed => "observed",
            RewardChannel::True => "true",
        })
    }
}

impl FromStr for RewardChannel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "observed" | "corrupt" => Ok(RewardChannel::Observed),
            "true" | "uncorrupt" => Ok(RewardChannel::True),
            other => Err(format!("unknown reward channel `{other}` (expected observed or true)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_final: f64,
    pub epsilon_decay_episodes: usize,
    pub episodes: usize,
    pub seed: u64,
    pub mode: AgentMode,
    pub reward_channel: RewardChannel,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            learning_rate: 0.1,
            epsilon_start: 1.0,
            epsilon_final: 0.05,
            epsilon_decay_episodes: 10_000,
            episodes: 20_000,
            seed: 0,
            mode: AgentMode::Crmdp,
            reward_channel: RewardChannel::Observed,
        }
    }
}

impl AgentConfig {
    pub fn new(mode: AgentMode, reward_channel: RewardChannel, seed: u64) -> Self {
        AgentConfig {
            mode,
            reward_channel,
            seed,
            ..Default::default()
        }
    }

    /// Sets the episode budget and decays epsilon over its first half.
    pub fn with_episodes(mut self, episodes: usize) -> Self {
        self.episodes = episodes;
        self.epsilon_decay_episodes = episodes / 2;
        self
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} not in (0, 1]", self.learning_rate));
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_final", self.epsilon_final),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} not in [0, 1]"));
            }
        }
        if self.epsilon_final > self.epsilon_start {
            return bad("epsilon_final exceeds epsilon_start".into());
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_final`.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        if self.epsilon_decay_episodes == 0 {
            return self.epsilon_final;
        }
        if episode >= self.epsilon_decay_episodes {
            return self.epsilon_final;
        }
        let frac = episode as f64 / self.epsilon_decay_episodes as f64;
        self.epsilon_start + (self.epsilon_final - self.epsilon_start) * frac
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("corruption identification failed: {0}")]
    Detect(#[from] DetectError),
}

/// Action values indexed by `(step, state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        QTable {
            horizon,
            num_states,
            num_actions,
            values: vec![0.0; horizon * num_states * num_actions],
        }
    }

    pub fn for_instance(inst: &CrmdpInstance) -> Self {
        Self::new(inst.horizon(), inst.num_states(), inst.num_actions())
    }

    /// Every entry at step `t` starts at `(horizon - t) * reward_max`, an
    /// upper bound on the return still collectable when rewards never
    /// exceed `reward_max`. Untried actions then look better than tried
    /// ones until visited.
    pub fn optimistic(inst: &CrmdpInstance, reward_max: f64) -> Self {
        let mut q = Self::for_instance(inst);
        let per_step = inst.num_states() * inst.num_actions();
        for (i, v) in q.values.iter_mut().enumerate() {
            *v = (inst.horizon() - i / per_step) as f64 * reward_max;
        }
        q
    }

    #[inline]
    fn index(&self, step: usize, s: StateId, a: ActionId) -> usize {
        (step * self.num_states + s.0) * self.num_actions + a.0
    }

    pub fn get(&self, step: usize, s: StateId, a: ActionId) -> f64 {
        self.values[self.index(step, s, a)]
    }

    pub fn set(&mut self, step: usize, s: StateId, a: ActionId, v: f64) {
        let i = self.index(step, s, a);
        self.values[i] = v;
    }

    fn row(&self, step: usize, s: StateId) -> &[f64] {
        let i = self.index(step, s, ActionId(0));
        &self.values[i..i + self.num_actions]
    }

    /// `max_a q(step, s, a)`; zero once the horizon is reached.
    pub fn max_value(&self, step: usize, s: StateId) -> f64 {
        if step >= self.horizon {
            return 0.0;
        }
        self.row(step, s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties go to the lowest action id.
    pub fn greedy(&self, step: usize, s: StateId) -> ActionId {
        let row = self.row(step, s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        ActionId(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub step: usize,
    pub state: StateId,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateId,
    /// Terminal state entered or horizon reached.
    pub done: bool,
}

/// One-step Q-learning update.
pub fn q_update(q: &mut QTable, t: &Transition, learning_rate: f64) {
    let bootstrap = if t.done {
        0.0
    } else {
        q.max_value(t.step + 1, t.next_state)
    };
    let old = q.get(t.step, t.state, t.action);
    q.set(
        t.step,
        t.state,
        t.action,
        old + learning_rate * (t.reward + bootstrap - old),
    );
}

/// Cached lower bounds for the known corrupt states.
pub type RllbCache = BTreeMap<StateId, f64>;

/// Known non-corrupt states, optionally capped in size with random eviction.
#[derive(Debug, Clone)]
pub struct BoundedCache {
    capacity: Option<usize>,
    members: Vec<StateId>,
    rng: ChaCha8Rng,
    evictions: usize,
}

impl BoundedCache {
    /// `None` keeps every inserted state.
    pub fn new(capacity: Option<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        BoundedCache {
            capacity,
            members: Vec::new(),
            rng,
            evictions: 0,
        }
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn members(&self) -> &[StateId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, s: StateId) -> bool {
        self.members.contains(&s)
    }

    pub fn evictions(&self) -> usize {
        self.evictions
    }

    pub fn remove(&mut self, s: StateId) -> bool {
        match self.members.iter().position(|&m| m == s) {
            Some(i) => {
                self.members.remove(i);
                true
            }
            None => false,
        }
    }

    /// Folds `x` into the cached bound of every known corrupt state, adds it
    /// as a member, and if over capacity evicts one of the older members
    /// uniformly at random.
    pub fn insert(&mut self, x: StateId, rllb: &mut RllbCache, inst: &CrmdpInstance) -> Option<StateId> {
        debug_assert!(!self.contains(x));
        debug_assert!(!rllb.contains_key(&x));
        let cx = inst.observed_reward(x);
        for (&y, bound) in rllb.iter_mut() {
            let candidate = cx - inst.distance(y, x);
            if candidate > *bound {
                *bound = candidate;
            }
        }
        self.members.push(x);
        match self.capacity {
            Some(cap) if self.members.len() > cap => {
                let older = self.members.len() - 1;
                let victim = self.members.remove(self.rng.random_range(0..older));
                self.evictions += 1;
                Some(victim)
            }
            _ => None,
        }
    }

    /// Best lower bound for `x` from the current members.
    pub fn lower_bound(&self, x: StateId, inst: &CrmdpInstance) -> f64 {
        self.members
            .iter()
            .map(|&y| inst.observed_reward(y) - inst.distance(x, y))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Spec-named entry point for [`BoundedCache::insert`].
pub fn cache_insert(
    cache: &mut BoundedCache,
    x: StateId,
    rllb: &mut RllbCache,
    inst: &CrmdpInstance,
) -> Option<StateId> {
    cache.insert(x, rllb, inst)
}

/// Mutable learner state carried across episodes.
#[derive(Debug, Clone)]
pub struct OnlineState {
    pub q_table: QTable,
    pub s_hat_c: BTreeSet<StateId>,
    pub s_hat_n: BoundedCache,
    pub cached_rllb: RllbCache,
}

/// Episode-by-episode driver; [`learn_online`] runs it to completion.
pub struct OnlineLearner {
    /// The instance as seen through the configured reward channel.
    channel: CrmdpInstance,
    /// Original instance, for the corrupt-reward return column.
    truth: CrmdpInstance,
    cfg: AgentConfig,
    lv: LvMeasure,
    state: OnlineState,
    rng: ChaCha8Rng,
    episode: usize,
    rows: Vec<EpisodeRow>,
    detections: Vec<DetectionEvent>,
}

impl OnlineLearner {
    pub fn new(
        inst: &CrmdpInstance,
        cfg: AgentConfig,
        lv: LvMeasure,
        cache_capacity: Option<usize>,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        let channel = match cfg.reward_channel {
            RewardChannel::Observed => inst.clone(),
            RewardChannel::True => inst.uncorrupted(),
        };
        let reward_max = channel.observed_rewards().iter().copied().fold(0.0, f64::max);
        Ok(OnlineLearner {
            state: OnlineState {
                q_table: QTable::optimistic(&channel, reward_max),
                s_hat_c: BTreeSet::new(),
                s_hat_n: BoundedCache::new(cache_capacity, cfg.seed),
                cached_rllb: BTreeMap::new(),
            },
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            channel,
            truth: inst.clone(),
            cfg,
            lv,
            episode: 0,
            rows: Vec::new(),
            detections: Vec::new(),
        })
    }

    pub fn state(&self) -> &OnlineState {
        &self.state
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.cfg.episodes
    }

    /// Reward the learner trains on for entering `s`.
    pub fn training_reward(&self, s: StateId) -> f64 {
        if self.cfg.mode == AgentMode::Crmdp && self.state.s_hat_c.contains(&s) {
            self.state.cached_rllb[&s]
        } else {
            self.channel.observed_reward(s)
        }
    }

    /// Greedy start-state trajectory of the current Q-table.
    pub fn greedy_trajectory(&self) -> Vec<StateId> {
        let q = &self.state.q_table;
        self.channel.rollout(|t, s| q.greedy(t, s))
    }

    pub fn run_episode(&mut self) -> Result<&EpisodeRow, AgentError> {
        let inst = &self.channel;
        let eps = self.cfg.epsilon_at(self.episode);
        let num_actions = inst.num_actions();

        let mut tau = vec![inst.start()];
        let mut transitions = Vec::with_capacity(inst.horizon());
        let mut s = inst.start();
        for t in 0..inst.horizon() {
            let a = if self.rng.random::<f64>() < eps {
                ActionId(self.rng.random_range(0..num_actions))
            } else {
                self.state.q_table.greedy(t, s)
            };
            let next = inst.next(s, a);
            let done = inst.is_terminal(next) || t + 1 == inst.horizon();
            transitions.push(Transition {
                step: t,
                state: s,
                action: a,
                reward: 0.0,
                next_state: next,
                done,
            });
            tau.push(next);
            s = next;
            if inst.is_terminal(next) {
                break;
            }
        }

        if self.cfg.mode == AgentMode::Crmdp {
            self.absorb_trajectory(&tau)?;
        }

        for t in &mut transitions {
            t.reward = self.training_reward(t.next_state);
        }
        // Latest transition first, so one episode carries the final reward
        // back to the start.
        for t in transitions.iter().rev() {
            q_update(&mut self.state.q_table, t, self.cfg.learning_rate);
        }

        let greedy = self.greedy_trajectory();
        let observed_return = trajectory_return(&greedy, self.channel.observed_rewards());
        let ema_observed = ema_step(self.rows.last().map(|r| r.ema_observed), observed_return);
        self.rows.push(EpisodeRow {
            episode: self.episode,
            observed_return,
            true_return: trajectory_return(&greedy, self.truth.true_rewards()),
            corrupt_return: trajectory_return(&greedy, self.truth.observed_rewards()),
            ema_observed,
            corrupt_identified: self.state.s_hat_c.len(),
            rollout_observed: trajectory_return(&tau, self.channel.observed_rewards()),
            rollout_true: trajectory_return(&tau, self.truth.true_rewards()),
        });
        self.episode += 1;
        Ok(self.rows.last().expect("row just pushed"))
    }

    fn absorb_trajectory(&mut self, tau: &[StateId]) -> Result<(), AgentError> {
        let report = identify_in_trajectory(tau, &self.lv, &self.channel)?;
        let st = &mut self.state;
        for &x in &report.identified_corrupt {
            if st.s_hat_c.insert(x) {
                st.s_hat_n.remove(x);
                let initial = st.s_hat_n.lower_bound(x, &self.channel);
                st.cached_rllb.insert(x, initial);
                self.detections.push(DetectionEvent {
                    episode: self.episode,
                    state: x.0,
                });
            }
        }
        let visited: BTreeSet<StateId> = tau.iter().copied().collect();
        for y in visited {
            if !st.s_hat_c.contains(&y) && !st.s_hat_n.contains(y) {
                st.s_hat_n.insert(y, &mut st.cached_rllb, &self.channel);
            }
        }
        Ok(())
    }

    pub fn finish(self) -> RunRecord {
        RunRecord {
            config: self.cfg,
            rows: self.rows,
            detections: self.detections,
            final_corrupt: self.state.s_hat_c.iter().copied().collect(),
            cache_evictions: self.state.s_hat_n.evictions(),
        }
    }
}

/// Trains for `cfg.episodes` episodes on `inst`.
pub fn learn_online_instance(
    inst: &CrmdpInstance,
    cfg: &AgentConfig,
    lv: &LvMeasure,
    cache_capacity: Option<usize>,
) -> Result<RunRecord, AgentError> {
    let mut learner = OnlineLearner::new(inst, cfg.clone(), lv.clone(), cache_capacity)?;
    while !learner.is_finished() {
        learner.run_episode()?;
    }
    Ok(learner.finish())
}

pub fn learn_online(
    env: &GridEnv,
    cfg: &AgentConfig,
    lv: &LvMeasure,
    cache_capacity: Option<usize>,
) -> Result<RunRecord, AgentError> {
    learn_online_instance(env.instance(), cfg, lv, cache_capacity)
}
