use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Dense index of a state in `[0, num_states)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Dense index of an action. Lower ids win greedy ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

impl ActionId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("instance has no states")]
    NoStates,
    #[error("instance has no actions")]
    NoActions,
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("{what} has length {got}, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{0} is out of range")]
    StateOutOfRange(StateId),
    #[error("reward of {0} is not finite")]
    NonFiniteReward(StateId),
    #[error("metric violation: {0}")]
    Metric(#[from] MetricViolation),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricViolation {
    #[error("d({0}, {1}) = {2} is negative or not finite")]
    Invalid(StateId, StateId, f64),
    #[error("d({0}, {0}) = {1}, expected 0")]
    NonZeroDiagonal(StateId, f64),
    #[error("d({0}, {1}) = 0 for distinct states")]
    NotPositiveDefinite(StateId, StateId),
    #[error("d({0}, {1}) != d({1}, {0})")]
    Asymmetric(StateId, StateId),
    #[error("triangle inequality fails for ({0}, {1}, {2})")]
    Triangle(StateId, StateId, StateId),
}

/// Distance matrix over a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    n: usize,
    d: Vec<f64>,
}

impl Metric {
    pub fn from_fn(n: usize, f: impl Fn(StateId, StateId) -> f64) -> Self {
        let mut d = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                d.push(f(StateId(i), StateId(j)));
            }
        }
        Metric { n, d }
    }

    pub fn from_matrix(n: usize, d: Vec<f64>) -> Result<Self, InstanceError> {
        if d.len() != n * n {
            return Err(InstanceError::Length {
                what: "metric matrix",
                got: d.len(),
                expected: n * n,
            });
        }
        Ok(Metric { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn distance(&self, a: StateId, b: StateId) -> f64 {
        self.d[a.0 * self.n + b.0]
    }

    /// Multiplies every distance by `factor`.
    pub fn scaled(&self, factor: f64) -> Metric {
        Metric {
            n: self.n,
            d: self.d.iter().map(|v| v * factor).collect(),
        }
    }

    /// Cheap checks: finiteness, nonnegativity, zero diagonal, symmetry,
    /// positive definiteness. O(n^2).
    pub fn check_basic(&self) -> Result<(), MetricViolation> {
        for i in 0..self.n {
            for j in 0..self.n {
                let (a, b) = (StateId(i), StateId(j));
                let v = self.distance(a, b);
                if !v.is_finite() || v < 0.0 {
                    return Err(MetricViolation::Invalid(a, b, v));
                }
                if i == j && v != 0.0 {
                    return Err(MetricViolation::NonZeroDiagonal(a, v));
                }
                if i != j && v == 0.0 {
                    return Err(MetricViolation::NotPositiveDefinite(a, b));
                }
                if v != self.distance(b, a) {
                    return Err(MetricViolation::Asymmetric(a, b));
                }
            }
        }
        Ok(())
    }

    /// Full metric axiom check including the O(n^3) triangle scan.
    pub fn check_axioms(&self) -> Result<(), MetricViolation> {
        self.check_basic()?;
        for x in 0..self.n {
            for y in 0..self.n {
                let dxy = self.d[x * self.n + y];
                for z in 0..self.n {
                    if self.d[x * self.n + z] > dxy + self.d[y * self.n + z] {
                        return Err(MetricViolation::Triangle(StateId(x), StateId(y), StateId(z)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Everything needed to build a [`CrmdpInstance`].
#[derive(Debug, Clone)]
pub struct InstanceParts {
    pub num_actions: usize,
    /// Row-major `[state][action] -> next state`.
    pub transition: Vec<StateId>,
    pub true_reward: Vec<f64>,
    pub observed_reward: Vec<f64>,
    pub metric: Metric,
    pub start: StateId,
    pub terminals: BTreeSet<StateId>,
    pub horizon: usize,
}

/// A finite, deterministic, episodic MDP with a true reward `R`, an observed
/// (possibly corrupted) reward `C` and a state metric `d`.
///
/// Episodes start in `start`, collect the reward of every state entered
/// (the start state's reward is not collected at reset), and end on entering
/// a terminal state or after `horizon` steps. Returns are undiscounted.
#[derive(Debug, Clone, PartialEq)]
pub struct CrmdpInstance {
    num_states: usize,
    num_actions: usize,
    transition: Vec<StateId>,
    true_reward: Vec<f64>,
    observed_reward: Vec<f64>,
    metric: Metric,
    start: StateId,
    terminals: BTreeSet<StateId>,
    horizon: usize,
}

impl CrmdpInstance {
    pub fn new(parts: InstanceParts) -> Result<Self, InstanceError> {
        let n = parts.true_reward.len();
        if n == 0 {
            return Err(InstanceError::NoStates);
        }
        if parts.num_actions == 0 {
            return Err(InstanceError::NoActions);
        }
        if parts.horizon == 0 {
            return Err(InstanceError::ZeroHorizon);
        }
        let check_len = |what, got: usize, expected| {
            if got == expected {
                Ok(())
            } else {
                Err(InstanceError::Length { what, got, expected })
            }
        };
        check_len("observed reward", parts.observed_reward.len(), n)?;
        check_len("transition table", parts.transition.len(), n * parts.num_actions)?;
        check_len("metric", parts.metric.len(), n)?;
        let in_range = |s: StateId| {
            if s.0 < n {
                Ok(())
            } else {
                Err(InstanceError::StateOutOfRange(s))
            }
        };
        in_range(parts.start)?;
        for &s in parts.transition.iter().chain(parts.terminals.iter()) {
            in_range(s)?;
        }
        for (i, (r, c)) in parts.true_reward.iter().zip(parts.observed_reward.iter()).enumerate() {
            if !r.is_finite() || !c.is_finite() {
                return Err(InstanceError::NonFiniteReward(StateId(i)));
            }
        }
        parts.metric.check_basic()?;
        Ok(CrmdpInstance {
            num_states: n,
            num_actions: parts.num_actions,
            transition: parts.transition,
            true_reward: parts.true_reward,
            observed_reward: parts.observed_reward,
            metric: parts.metric,
            start: parts.start,
            terminals: parts.terminals,
            horizon: parts.horizon,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + Clone {
        (0..self.num_states).map(StateId)
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> + Clone {
        (0..self.num_actions).map(ActionId)
    }

    #[inline]
    pub fn next(&self, s: StateId, a: ActionId) -> StateId {
        self.transition[s.0 * self.num_actions + a.0]
    }

    #[inline]
    pub fn true_reward(&self, s: StateId) -> f64 {
        self.true_reward[s.0]
    }

    #[inline]
    pub fn observed_reward(&self, s: StateId) -> f64 {
        self.observed_reward[s.0]
    }

    pub fn true_rewards(&self) -> &[f64] {
        &self.true_reward
    }

    pub fn observed_rewards(&self) -> &[f64] {
        &self.observed_reward
    }

    #[inline]
    pub fn distance(&self, a: StateId, b: StateId) -> f64 {
        self.metric.distance(a, b)
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn terminals(&self) -> &BTreeSet<StateId> {
        &self.terminals
    }

    #[inline]
    pub fn is_terminal(&self, s: StateId) -> bool {
        self.terminals.contains(&s)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_corrupt(&self, s: StateId) -> bool {
        self.true_reward[s.0] != self.observed_reward[s.0]
    }

    /// `S_c = {x : R(x) != C(x)}`.
    pub fn corrupt_states(&self) -> BTreeSet<StateId> {
        self.states().filter(|&s| self.is_corrupt(s)).collect()
    }

    /// `S_n = S \ S_c`.
    pub fn noncorrupt_states(&self) -> BTreeSet<StateId> {
        self.states().filter(|&s| !self.is_corrupt(s)).collect()
    }

    /// Same instance with the observed reward replaced by the true reward.
    pub fn uncorrupted(&self) -> CrmdpInstance {
        CrmdpInstance {
            observed_reward: self.true_reward.clone(),
            ..self.clone()
        }
    }

    pub fn with_observed_reward(&self, observed: Vec<f64>) -> Result<CrmdpInstance, InstanceError> {
        CrmdpInstance::new(InstanceParts {
            num_actions: self.num_actions,
            transition: self.transition.clone(),
            true_reward: self.true_reward.clone(),
            observed_reward: observed,
            metric: self.metric.clone(),
            start: self.start,
            terminals: self.terminals.clone(),
            horizon: self.horizon,
        })
    }

    pub fn with_metric(&self, metric: Metric) -> Result<CrmdpInstance, InstanceError> {
        CrmdpInstance::new(InstanceParts {
            num_actions: self.num_actions,
            transition: self.transition.clone(),
            true_reward: self.true_reward.clone(),
            observed_reward: self.observed_reward.clone(),
            metric,
            start: self.start,
            terminals: self.terminals.clone(),
            horizon: self.horizon,
        })
    }

    /// Rolls out a (possibly time-dependent) policy from the start state.
    /// The returned trajectory begins with the start state.
    pub fn rollout(&self, mut policy: impl FnMut(usize, StateId) -> ActionId) -> Vec<StateId> {
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut s = self.start;
        states.push(s);
        if self.is_terminal(s) {
            return states;
        }
        for t in 0..self.horizon {
            s = self.next(s, policy(t, s));
            states.push(s);
            if self.is_terminal(s) {
                break;
            }
        }
        states
    }

    /// Follows a fixed action sequence from the start state, stopping when the
    /// actions run out, a terminal state is entered or the horizon is hit.
    pub fn follow(&self, actions: &[ActionId]) -> Vec<StateId> {
        let mut states = vec![self.start];
        let mut s = self.start;
        for &a in actions.iter().take(self.horizon) {
            if self.is_terminal(s) {
                break;
            }
            s = self.next(s, a);
            states.push(s);
        }
        states
    }
}

/// Sum of `reward` over every state entered along `trajectory` (the first
/// element, the start state, is skipped).
pub fn trajectory_return(trajectory: &[StateId], reward: &[f64]) -> f64 {
    trajectory.iter().skip(1).map(|s| reward[s.0]).sum()
}
