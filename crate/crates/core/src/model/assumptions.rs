//! Checker for the spiky-corruption assumptions.
//!
//! Conditions checked, with ground truth `R` available:
//! 1. some state is non-corrupt;
//! 2. the true reward is 1-Lipschitz in `d`;
//! 3. every corrupt state's LV against `S_n` strictly exceeds the largest
//!    LV of any non-corrupt state against `S`;
//!
//! plus the per-trajectory strengthening of 3, which can only be sampled.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::instance::{ActionId, CrmdpInstance, StateId};
use super::lv::LvMeasure;

#[derive(Debug, Clone, PartialEq)]
pub struct SpikyWitness {
    /// Corrupt state whose LV against `S_n` is too small.
    pub state: StateId,
    pub corrupt_score: f64,
    /// `sup_{y in S_n} LV_S(y)`.
    pub noncorrupt_sup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryCheck {
    /// No corrupt states exist, so every trajectory satisfies the condition.
    Holds,
    /// A sampled trajectory falsified it.
    Violated {
        trajectory: Vec<StateId>,
        witness: SpikyWitness,
    },
    /// Every sampled trajectory satisfied it. Not a proof.
    SampledOk { samples: usize },
}

impl TrajectoryCheck {
    pub fn is_violated(&self) -> bool {
        matches!(self, TrajectoryCheck::Violated { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub cond_nonempty: bool,
    pub cond_smooth: bool,
    /// Pairs `(x, y)`, `x < y`, with `|R(x) - R(y)| > d(x, y)`.
    pub smooth_violations: Vec<(StateId, StateId)>,
    pub cond_spiky: bool,
    pub spiky_witness: Option<SpikyWitness>,
    /// `sup_{y in S_n} LV_S(y)`, or 0 when `S_n` is empty.
    pub noncorrupt_sup: f64,
    pub cond_spiky_traj: TrajectoryCheck,
}

impl AssumptionReport {
    /// Conditions 1 to 3.
    pub fn is_spiky(&self) -> bool {
        self.cond_nonempty && self.cond_smooth && self.cond_spiky
    }
}

pub fn smoothness_violations(inst: &CrmdpInstance) -> Vec<(StateId, StateId)> {
    let mut out = Vec::new();
    for x in inst.states() {
        for y in inst.states().skip(x.0 + 1) {
            if (inst.true_reward(x) - inst.true_reward(y)).abs() > inst.distance(x, y) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Condition 3 evaluated over an arbitrary universe with a known split into
/// corrupt and non-corrupt members. Returns the sup and, if violated, a
/// witness (the lowest-scoring corrupt state).
fn spiky_over(inst: &CrmdpInstance, lv: &LvMeasure, universe: &BTreeSet<StateId>) -> (f64, Option<SpikyWitness>) {
    let (corrupt, clean): (Vec<StateId>, Vec<StateId>) = universe.iter().partition(|&&s| inst.is_corrupt(s));
    let sup = clean
        .iter()
        .map(|&y| lv.evaluate(inst, y, universe.iter().copied()))
        .fold(0.0_f64, f64::max);
    let worst = corrupt
        .iter()
        .map(|&x| (x, lv.evaluate(inst, x, clean.iter().copied())))
        .filter(|&(_, score)| score <= sup)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let witness = worst.map(|(state, corrupt_score)| SpikyWitness {
        state,
        corrupt_score,
        noncorrupt_sup: sup,
    });
    (sup, witness)
}

/// Checks conditions 1 to 3 exhaustively and samples the per-trajectory
/// condition with `traj_samples` uniformly random policies seeded by `seed`.
pub fn check_spiky_assumptions(
    inst: &CrmdpInstance,
    lv: &LvMeasure,
    traj_samples: usize,
    seed: u64,
) -> AssumptionReport {
    let corrupt = inst.corrupt_states();
    let cond_nonempty = corrupt.len() < inst.num_states();
    let smooth_violations = smoothness_violations(inst);
    let all: BTreeSet<StateId> = inst.states().collect();
    let (noncorrupt_sup, spiky_witness) = spiky_over(inst, lv, &all);

    let cond_spiky_traj = if corrupt.is_empty() {
        TrajectoryCheck::Holds
    } else {
        sample_trajectories(inst, lv, traj_samples, seed)
    };

    AssumptionReport {
        cond_nonempty,
        cond_smooth: smooth_violations.is_empty(),
        smooth_violations,
        cond_spiky: spiky_witness.is_none(),
        spiky_witness,
        noncorrupt_sup,
        cond_spiky_traj,
    }
}

/// Checks the per-trajectory condition on one trajectory. Repeated states
/// are treated as a set.
pub fn trajectory_condition(inst: &CrmdpInstance, lv: &LvMeasure, trajectory: &[StateId]) -> Option<SpikyWitness> {
    let universe: BTreeSet<StateId> = trajectory.iter().copied().collect();
    spiky_over(inst, lv, &universe).1
}

fn sample_trajectories(inst: &CrmdpInstance, lv: &LvMeasure, samples: usize, seed: u64) -> TrajectoryCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_actions = inst.num_actions();
    for _ in 0..samples {
        let tau = inst.rollout(|_, _| ActionId(rng.random_range(0..num_actions)));
        if let Some(witness) = trajectory_condition(inst, lv, &tau) {
            return TrajectoryCheck::Violated {
                trajectory: tau,
                witness,
            };
        }
    }
    TrajectoryCheck::SampledOk { samples }
}
