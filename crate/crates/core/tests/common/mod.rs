//! Random instance generators and brute-force oracles shared by the
//! integration tests. Rewards and distances are small integers so every
//! comparison is exact.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spiky_crmdp::model::{
    check_spiky_assumptions, trajectory_return, ActionId, CrmdpInstance, InstanceParts, LvMeasure, Metric, StateId,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-major grid with clamped up/down/left/right moves and Manhattan metric.
pub fn grid_skeleton(width: usize, height: usize) -> (Vec<StateId>, Metric) {
    let n = width * height;
    let mut transition = Vec::with_capacity(n * 4);
    for s in 0..n {
        let (r, c) = (s / width, s % width);
        let moves = [
            (r.saturating_sub(1), c),
            ((r + 1).min(height - 1), c),
            (r, c.saturating_sub(1)),
            (r, (c + 1).min(width - 1)),
        ];
        transition.extend(moves.iter().map(|&(r, c)| StateId(r * width + c)));
    }
    let metric = Metric::from_fn(n, |a, b| {
        let (ra, ca) = ((a.0 / width) as f64, (a.0 % width) as f64);
        let (rb, cb) = ((b.0 / width) as f64, (b.0 % width) as f64);
        (ra - rb).abs() + (ca - cb).abs()
    });
    (transition, metric)
}

/// Shortest-path metric of a random connected graph with integer edge
/// weights, and random deterministic transitions.
pub fn graph_skeleton(rng: &mut impl Rng, n: usize, num_actions: usize) -> (Vec<StateId>, Metric) {
    let inf = f64::INFINITY;
    let mut d = vec![inf; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
    }
    let add_edge = |d: &mut Vec<f64>, i: usize, j: usize, w: f64| {
        if w < d[i * n + j] {
            d[i * n + j] = w;
            d[j * n + i] = w;
        }
    };
    // A random spanning tree keeps the graph connected.
    for i in 1..n {
        let j = rng.random_range(0..i);
        let w = rng.random_range(1..=5) as f64;
        add_edge(&mut d, i, j, w);
    }
    for _ in 0..rng.random_range(0..=n) {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i != j {
            let w = rng.random_range(1..=5) as f64;
            add_edge(&mut d, i, j, w);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i * n + k] + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    let transition = (0..n * num_actions).map(|_| StateId(rng.random_range(0..n))).collect();
    (
        transition,
        Metric::from_matrix(n, d).expect("shortest paths form a metric"),
    )
}

/// 1-Lipschitz reward: `R(x) = min_a (v_a + d(a, x))` over random anchors.
pub fn mcshane_reward(rng: &mut impl Rng, metric: &Metric) -> Vec<f64> {
    let n = metric.len();
    let k = rng.random_range(1..=n.min(4));
    let anchors: Vec<(usize, f64)> = sample(rng, n, k)
        .into_iter()
        .map(|a| (a, rng.random_range(0..=20) as f64))
        .collect();
    (0..n)
        .map(|x| {
            anchors
                .iter()
                .map(|&(a, v)| v + metric.distance(StateId(a), StateId(x)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn diameter(metric: &Metric) -> f64 {
    let n = metric.len();
    let mut m: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            m = m.max(metric.distance(StateId(a), StateId(b)));
        }
    }
    m
}

/// Observed reward with a random subset of states spiked up or down by up
/// to the diameter plus 10. Small spikes usually fail the spikiness
/// conditions and get filtered by callers that need them. Returns the
/// corrupted set too.
pub fn spike(rng: &mut impl Rng, true_reward: &[f64], metric: &Metric) -> (Vec<f64>, BTreeSet<StateId>) {
    let n = true_reward.len();
    let max_corrupt = (n / 4).max(1);
    let count = rng.random_range(1..=max_corrupt);
    let diam = diameter(metric);
    let mut observed = true_reward.to_vec();
    let mut corrupt = BTreeSet::new();
    for i in sample(rng, n, count) {
        let magnitude = rng.random_range(1..=diam as u32 + 10) as f64;
        observed[i] += if rng.random_bool(0.5) { magnitude } else { -magnitude };
        corrupt.insert(StateId(i));
    }
    (observed, corrupt)
}

pub struct Generated {
    pub inst: CrmdpInstance,
    pub corrupt: BTreeSet<StateId>,
}

fn assemble(
    rng: &mut impl Rng,
    transition: Vec<StateId>,
    num_actions: usize,
    metric: Metric,
    horizon: usize,
) -> Generated {
    let n = metric.len();
    let true_reward = mcshane_reward(rng, &metric);
    let (observed_reward, corrupt) = spike(rng, &true_reward, &metric);
    let mut terminals = BTreeSet::new();
    if rng.random_bool(0.5) {
        terminals.insert(StateId(rng.random_range(1..n)));
    }
    let inst = CrmdpInstance::new(InstanceParts {
        num_actions,
        transition,
        true_reward,
        observed_reward,
        metric,
        start: StateId(0),
        terminals,
        horizon,
    })
    .expect("generated instance is valid");
    Generated { inst, corrupt }
}

/// Grid instance, sides 2..=8.
pub fn random_grid(rng: &mut impl Rng) -> Generated {
    let (w, h) = (rng.random_range(2..=8), rng.random_range(2..=8));
    let (transition, metric) = grid_skeleton(w, h);
    let horizon = rng.random_range(1..=8);
    assemble(rng, transition, 4, metric, horizon)
}

/// Graph-metric instance with `2..=max_states` states.
pub fn random_graph(rng: &mut impl Rng, max_states: usize) -> Generated {
    let n = rng.random_range(2..=max_states);
    let num_actions = rng.random_range(1..=3);
    let (transition, metric) = graph_skeleton(rng, n, num_actions);
    let horizon = rng.random_range(1..=5);
    assemble(rng, transition, num_actions, metric, horizon)
}

pub fn satisfies_conditions(inst: &CrmdpInstance, lv: &LvMeasure) -> bool {
    check_spiky_assumptions(inst, lv, 0, 0).is_spiky()
}

/// Every action sequence of length `horizon`, stopped early at terminals.
/// Returns the distinct trajectories from the start state.
pub fn all_trajectories(inst: &CrmdpInstance) -> Vec<Vec<StateId>> {
    let mut out = Vec::new();
    let mut stack = vec![vec![inst.start()]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if path.len() - 1 == inst.horizon() || (path.len() > 1 && inst.is_terminal(last)) {
            out.push(path);
            continue;
        }
        let mut seen = BTreeSet::new();
        for a in inst.actions() {
            let next = inst.next(last, a);
            if seen.insert(next) {
                let mut p = path.clone();
                p.push(next);
                stack.push(p);
            }
        }
    }
    out
}

pub fn brute_force_optimum(inst: &CrmdpInstance, reward: &[f64]) -> f64 {
    all_trajectories(inst)
        .iter()
        .map(|t| trajectory_return(t, reward))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn follow_ids(inst: &CrmdpInstance, actions: &[usize]) -> Vec<StateId> {
    let ids: Vec<ActionId> = actions.iter().map(|&a| ActionId(a)).collect();
    inst.follow(&ids)
}

/// The first `count` generated instances (alternating grids and graph
/// metrics with up to 20 states) that pass conditions 1 to 3 under `lv`,
/// plus the number of candidates generated to find them.
pub fn spiky_instances(count: usize, seed: u64, lv: &LvMeasure) -> (Vec<Generated>, usize) {
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(count);
    let mut tried = 0;
    while out.len() < count {
        let g = if tried % 2 == 0 {
            random_grid(&mut rng)
        } else {
            random_graph(&mut rng, 20)
        };
        tried += 1;
        if satisfies_conditions(&g.inst, lv) {
            out.push(g);
        }
    }
    (out, tried)
}

/// At most 12 states: a small grid or a graph metric.
pub fn random_small(rng: &mut impl Rng) -> Generated {
    if rng.random_bool(0.5) {
        let (w, h) = (rng.random_range(2..=3), rng.random_range(2..=4));
        let (transition, metric) = grid_skeleton(w, h);
        let horizon = rng.random_range(1..=6);
        assemble(rng, transition, 4, metric, horizon)
    } else {
        random_graph(rng, 12)
    }
}
