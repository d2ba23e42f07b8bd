//! Lipschitz reward bounds, finite-horizon planning and the a-posteriori
//! regret bound.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{ActionId, CrmdpInstance, StateId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoundsError {
    #[error("reference set of known non-corrupt states is empty")]
    EmptyReference,
}

/// Per-state lower/upper reward bounds implied by the observed reward on a
/// reference set of non-corrupt states.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_bounding_state: Vec<StateId>,
    pub upper_bounding_state: Vec<StateId>,
    pub reference_set: BTreeSet<StateId>,
}

impl RewardBounds {
    pub fn lower(&self, s: StateId) -> f64 {
        self.lower[s.0]
    }

    pub fn upper(&self, s: StateId) -> f64 {
        self.upper[s.0]
    }

    pub fn gap(&self, s: StateId) -> f64 {
        self.upper[s.0] - self.lower[s.0]
    }
}

/// Best lower bound on the reward of `x` from `reference`, with its bounding
/// state. Ties on the bound go to the closest reference state, then to the
/// lowest id. `None` when `reference` is empty.
pub fn lower_bound_from<I>(inst: &CrmdpInstance, x: StateId, reference: I) -> Option<(f64, StateId)>
where
    I: IntoIterator<Item = StateId>,
{
    best_bound(inst, x, reference, |c, d| c - d, |cand, best| cand > best)
}

/// Upper-bound counterpart of [`lower_bound_from`].
pub fn upper_bound_from<I>(inst: &CrmdpInstance, x: StateId, reference: I) -> Option<(f64, StateId)>
where
    I: IntoIterator<Item = StateId>,
{
    best_bound(inst, x, reference, |c, d| c + d, |cand, best| cand < best)
}

fn best_bound<I>(
    inst: &CrmdpInstance,
    x: StateId,
    reference: I,
    bound: impl Fn(f64, f64) -> f64,
    better: impl Fn(f64, f64) -> bool,
) -> Option<(f64, StateId)>
where
    I: IntoIterator<Item = StateId>,
{
    let mut best: Option<(f64, f64, StateId)> = None;
    for y in reference {
        let d = inst.distance(x, y);
        let v = bound(inst.observed_reward(y), d);
        let replace = match best {
            None => true,
            Some((bv, bd, by)) => better(v, bv) || (v == bv && (d < bd || (d == bd && y < by))),
        };
        if replace {
            best = Some((v, d, y));
        }
    }
    best.map(|(v, _, y)| (v, y))
}

/// Lower and upper Lipschitz bounds for every state against
/// `known_noncorrupt`. The observed reward is trusted on the reference set.
pub fn compute_bounds(inst: &CrmdpInstance, known_noncorrupt: &BTreeSet<StateId>) -> Result<RewardBounds, BoundsError> {
    if known_noncorrupt.is_empty() {
        return Err(BoundsError::EmptyReference);
    }
    let n = inst.num_states();
    let mut out = RewardBounds {
        lower: Vec::with_capacity(n),
        upper: Vec::with_capacity(n),
        lower_bounding_state: Vec::with_capacity(n),
        upper_bounding_state: Vec::with_capacity(n),
        reference_set: known_noncorrupt.clone(),
    };
    for x in inst.states() {
        let refs = known_noncorrupt.iter().copied();
        let (lo, lo_s) = lower_bound_from(inst, x, refs.clone()).expect("nonempty reference");
        let (hi, hi_s) = upper_bound_from(inst, x, refs).expect("nonempty reference");
        out.lower.push(lo);
        out.upper.push(hi);
        out.lower_bounding_state.push(lo_s);
        out.upper_bounding_state.push(hi_s);
    }
    Ok(out)
}

/// Optimal finite-horizon values and a greedy, time-dependent policy.
///
/// Indexing is by steps remaining: `value(s, k)` is the best return
/// collectable from `s` with `k` steps left.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    horizon: usize,
    num_states: usize,
    /// `(horizon + 1) * num_states`, row `k` = `k` steps remaining.
    values: Vec<f64>,
    /// `horizon * num_states`, row `k - 1` = `k` steps remaining.
    actions: Vec<ActionId>,
    pub optimal_return: f64,
}

impl PolicyValue {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn value(&self, s: StateId, steps_remaining: usize) -> f64 {
        self.values[steps_remaining * self.num_states + s.0]
    }

    /// Greedy action with `steps_remaining >= 1` steps left.
    pub fn action(&self, s: StateId, steps_remaining: usize) -> ActionId {
        self.actions[(steps_remaining - 1) * self.num_states + s.0]
    }

    /// Action at time step `t` (0-based) of an episode.
    pub fn action_at(&self, t: usize, s: StateId) -> ActionId {
        self.action(s, self.horizon - t)
    }

    /// Start-state trajectory of the greedy policy.
    pub fn trajectory(&self, inst: &CrmdpInstance) -> Vec<StateId> {
        inst.rollout(|t, s| self.action_at(t, s))
    }
}

/// Exact dynamic program over `(state, steps remaining)`. The reward of a
/// state is collected on entering it; entering a terminal state ends the
/// episode. Action ties go to the lowest [`ActionId`].
pub fn plan_value_iteration(inst: &CrmdpInstance, reward: &[f64]) -> PolicyValue {
    assert_eq!(reward.len(), inst.num_states(), "reward length");
    let n = inst.num_states();
    let h = inst.horizon();
    let mut values = vec![0.0; (h + 1) * n];
    let mut actions = vec![ActionId(0); h * n];
    for k in 1..=h {
        for s in inst.states() {
            if inst.is_terminal(s) {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_a = ActionId(0);
            for a in inst.actions() {
                let q = action_value(inst, reward, &values, n, k, s, a);
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            values[k * n + s.0] = best;
            actions[(k - 1) * n + s.0] = best_a;
        }
    }
    let optimal_return = values[h * n + inst.start().0];
    PolicyValue {
        horizon: h,
        num_states: n,
        values,
        actions,
        optimal_return,
    }
}

#[inline]
fn action_value(
    inst: &CrmdpInstance,
    reward: &[f64],
    values: &[f64],
    n: usize,
    k: usize,
    s: StateId,
    a: ActionId,
) -> f64 {
    let next = inst.next(s, a);
    let future = if inst.is_terminal(next) {
        0.0
    } else {
        values[(k - 1) * n + next.0]
    };
    reward[next.0] + future
}

/// Return of a time-dependent deterministic policy under `reward`.
pub fn evaluate_policy(inst: &CrmdpInstance, reward: &[f64], policy: impl FnMut(usize, StateId) -> ActionId) -> f64 {
    crate::model::trajectory_return(&inst.rollout(policy), reward)
}

/// Supremum, over all deterministic upper-bound-optimal policies, of the
/// summed bound gap along the trajectory from the start state. Computed
/// exactly by a second dynamic program restricted to optimal actions.
pub fn regret_upper_bound(inst: &CrmdpInstance, bounds: &RewardBounds) -> f64 {
    let n = inst.num_states();
    let h = inst.horizon();
    let plan = plan_value_iteration(inst, &bounds.upper);
    let mut worst_gap = vec![0.0; (h + 1) * n];
    for k in 1..=h {
        for s in inst.states() {
            if inst.is_terminal(s) {
                continue;
            }
            let target = plan.value(s, k);
            let mut best = f64::NEG_INFINITY;
            for a in inst.actions() {
                if action_value(inst, &bounds.upper, &plan.values, n, k, s, a) != target {
                    continue;
                }
                let next = inst.next(s, a);
                let future = if inst.is_terminal(next) {
                    0.0
                } else {
                    worst_gap[(k - 1) * n + next.0]
                };
                best = best.max(bounds.gap(next) + future);
            }
            worst_gap[k * n + s.0] = best;
        }
    }
    worst_gap[h * n + inst.start().0]
}

/// Gap sum along the single tie-broken upper-bound-optimal policy. A lower
/// bound on [`regret_upper_bound`]; equal to it when the optimal policy is
/// unique.
pub fn regret_upper_bound_tie_broken(inst: &CrmdpInstance, bounds: &RewardBounds) -> f64 {
    let plan = plan_value_iteration(inst, &bounds.upper);
    plan.trajectory(inst).iter().skip(1).map(|&s| bounds.gap(s)).sum()
}
