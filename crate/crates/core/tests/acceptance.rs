//! Acceptance checks. Runs as a plain program (no libtest harness) so every
//! criterion prints one PASS/FAIL line in ordinary `cargo test` output.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use spiky_crmdp::agent::{learn_online, AgentConfig, AgentMode, OnlineLearner, RewardChannel};
use spiky_crmdp::bounds::{compute_bounds, plan_value_iteration, regret_upper_bound};
use spiky_crmdp::detect::identify_corrupt_states;
use spiky_crmdp::envs::{builtin_corners, builtin_ontheway, GridEnv};
use spiky_crmdp::harness::{run_experiment, AgentSetup, ExperimentResult, ExperimentSpec};
use spiky_crmdp::model::{trajectory_return, GridState, LvKind, LvMeasure, StateId};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn builtins() -> [(&'static str, GridEnv); 2] {
    [("corners", builtin_corners()), ("ontheway", builtin_ontheway())]
}

fn cells(env: &GridEnv, cs: &[(usize, usize)]) -> BTreeSet<StateId> {
    cs.iter().map(|&(r, c)| env.state_id(GridState::new(r, c))).collect()
}

fn detection_exactness() -> Outcome {
    let expected: [&[(usize, usize)]; 2] = [&[(0, 4), (4, 0)], &[(0, 4), (4, 0), (1, 2), (2, 1)]];
    let mut failures = Vec::new();
    let mut slowest = Duration::ZERO;
    for ((name, env), want) in builtins().iter().zip(expected) {
        for kind in LvKind::ALL {
            let started = Instant::now();
            let all: BTreeSet<StateId> = env.instance().states().collect();
            let got = identify_corrupt_states(&all, &LvMeasure::counting(kind), env.instance())
                .map(|r| r.corrupt_set())
                .unwrap_or_default();
            slowest = slowest.max(started.elapsed());
            if got != cells(env, want) {
                failures.push(format!("{name}/{kind}"));
            }
        }
    }
    let fast = slowest < Duration::from_secs(1);
    outcome(
        failures.is_empty() && fast,
        format!("mismatches {failures:?}, slowest {slowest:?}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut checked = 0;
    let mut failures = 0;
    let mut tried = 0;
    for (kind, seed) in [(LvKind::Nlv, 101), (LvKind::Tlv, 202)] {
        let lv = LvMeasure::counting(kind);
        let (instances, n_tried) = common::spiky_instances(1000, seed, &lv);
        tried += n_tried;
        for g in &instances {
            let all: BTreeSet<StateId> = g.inst.states().collect();
            match identify_corrupt_states(&all, &lv, &g.inst) {
                Ok(r) if r.corrupt_set() == g.corrupt => {}
                _ => failures += 1,
            }
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    outcome(
        failures == 0 && checked >= 1000 && elapsed < Duration::from_secs(60),
        format!("{checked} instances ({tried} generated), {failures} failures, {elapsed:?}"),
    )
}

fn planner_ground_truth() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, env) in builtins() {
        let inst = env.instance();
        let dp = plan_value_iteration(inst, inst.true_rewards()).optimal_return;
        let brute = common::brute_force_optimum(inst, inst.true_rewards());
        pass &= dp == 64.0 && brute == 64.0;
        details.push(format!("{name} dp {dp} enum {brute}"));
    }
    outcome(pass, details.join(", "))
}

fn lower_bound_planning() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, env) in builtins() {
        let inst = env.instance();
        let b = compute_bounds(inst, &inst.noncorrupt_states()).expect("non-corrupt states exist");
        let plan = plan_value_iteration(inst, &b.lower);
        let r = trajectory_return(&plan.trajectory(inst), inst.true_rewards());
        pass &= r == 64.0;
        details.push(format!("{name} true return {r}"));
    }
    outcome(pass, details.join(", "))
}

fn bound_soundness() -> Outcome {
    let mut rng = common::rng(505);
    let (mut sandwich, mut regret) = (0, 0);
    let instances = 600;
    for _ in 0..instances {
        let g = common::random_small(&mut rng);
        let inst = &g.inst;
        assert!(inst.num_states() <= 12);
        let b = compute_bounds(inst, &inst.noncorrupt_states()).expect("non-corrupt states exist");
        for x in inst.states() {
            if !(b.lower(x) <= inst.true_reward(x) && inst.true_reward(x) <= b.upper(x)) {
                sandwich += 1;
            }
        }
        let bound = regret_upper_bound(inst, &b);
        let best_true = common::brute_force_optimum(inst, inst.true_rewards());
        let best_upper = common::brute_force_optimum(inst, &b.upper);
        for tau in common::all_trajectories(inst) {
            if trajectory_return(&tau, &b.upper) == best_upper
                && best_true - trajectory_return(&tau, inst.true_rewards()) > bound
            {
                regret += 1;
            }
        }
    }
    outcome(
        sandwich == 0 && regret == 0,
        format!("{instances} instances, {sandwich} sandwich violations, {regret} regret violations"),
    )
}

fn battery() -> ExperimentResult {
    let envs = builtins().map(|(n, e)| (n.to_string(), e)).to_vec();
    run_experiment(&ExperimentSpec::battery(envs, SEEDS.to_vec()))
}

fn end_to_end(res: &ExperimentResult) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for (name, _) in builtins() {
        let finals = |setup: AgentSetup| -> Vec<(f64, f64)> {
            res.runs
                .iter()
                .filter(|r| r.environment == name && r.setup == setup)
                .filter_map(|r| r.result.as_ref().ok())
                .map(|rec| {
                    let last = rec.last().expect("nonempty run");
                    (last.true_return, last.corrupt_return)
                })
                .collect()
        };
        let crmdp = finals(AgentSetup::CRMDP_OBSERVED);
        let reached = crmdp.iter().filter(|&&(t, _)| t == 64.0).count();
        let base = finals(AgentSetup::BASELINE_OBSERVED);
        let hacked = base.len() == SEEDS.len() && base.iter().all(|&(t, c)| t < 64.0 && c > 64.0);
        pass &= reached >= 4 && hacked;
        details.push(format!(
            "{name}: crmdp {reached}/{} at 64, baseline (true, observed) {base:?}",
            SEEDS.len()
        ));
    }
    outcome(pass, details.join("; "))
}

fn sample_complexity_ordering(res: &ExperimentResult) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for (name, _) in builtins() {
        let row = |s| res.row(name, s).expect("row exists");
        let sc = |s| row(s).sample_complexity;
        let corrupt_ratio = row(AgentSetup::CRMDP_OBSERVED).sc_ratio;
        let clean_ratio = row(AgentSetup::CRMDP_TRUE).sc_ratio;
        let in_range = |r: Option<f64>, lo: f64, hi: f64| r.is_some_and(|r| (lo..=hi).contains(&r));
        let ordered = match (
            sc(AgentSetup::BASELINE_OBSERVED),
            sc(AgentSetup::BASELINE_TRUE),
            sc(AgentSetup::CRMDP_OBSERVED),
        ) {
            (Some(a), Some(b), Some(c)) => a < b && b <= c,
            _ => false,
        };
        pass &= in_range(corrupt_ratio, 1.0, 4.0) && in_range(clean_ratio, 0.7, 1.5) && ordered;
        details.push(format!(
            "{name}: crmdp/observed {corrupt_ratio:.2?}, crmdp/true {clean_ratio:.2?}, ordered {ordered}"
        ));
    }
    outcome(pass, details.join("; "))
}

fn cache_correctness() -> Outcome {
    let lv = LvMeasure::nlv();
    let mut identical = true;
    for (_, env) in builtins() {
        let cfg = AgentConfig::new(AgentMode::Crmdp, RewardChannel::Observed, 7).with_episodes(3000);
        let full = env.instance().num_states();
        let unbounded = learn_online(&env, &cfg, &lv, None).expect("run succeeds");
        for cap in [full, full + 75] {
            identical &= learn_online(&env, &cfg, &lv, Some(cap)).expect("run succeeds") == unbounded;
        }
    }

    let env = builtin_corners();
    let inst = env.instance();
    let exact = compute_bounds(inst, &inst.noncorrupt_states()).expect("non-corrupt states exist");
    let cfg = AgentConfig::new(AgentMode::Crmdp, RewardChannel::Observed, 7).with_episodes(3000);
    let mut learner = OnlineLearner::new(inst, cfg, lv, Some(4)).expect("valid config");
    let mut previous = std::collections::BTreeMap::new();
    let (mut above_exact, mut decreases) = (0, 0);
    while !learner.is_finished() {
        learner.run_episode().expect("episode succeeds");
        let st = learner.state();
        for (&x, &v) in &st.cached_rllb {
            if v > exact.lower(x) {
                above_exact += 1;
            }
            if previous.get(&x).is_some_and(|&p: &f64| v < p) {
                decreases += 1;
            }
        }
        previous = st.cached_rllb.clone();
    }
    let evictions = learner.finish().cache_evictions;
    outcome(
        identical && above_exact == 0 && decreases == 0 && evictions > 0,
        format!(
            "large capacity identical {identical}; capacity 4: {evictions} evictions, {above_exact} above exact, {decreases} decreases"
        ),
    )
}

fn lv_properties() -> Outcome {
    let mut rng = common::rng(909);
    let (mut monotone, mut negative, mut smooth) = (0, 0, 0);
    let triples = 10_000;
    for i in 0..triples {
        use rand::Rng;
        let g = if i % 2 == 0 {
            common::random_grid(&mut rng)
        } else {
            common::random_graph(&mut rng, 20)
        };
        let n = g.inst.num_states();
        let x = StateId(rng.random_range(0..n));
        let b: BTreeSet<StateId> = (0..n).filter(|_| rng.random_bool(0.6)).map(StateId).collect();
        let a: BTreeSet<StateId> = b.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        let clean = g.inst.uncorrupted();
        for kind in LvKind::ALL {
            let lv = LvMeasure::counting(kind);
            let on_a = lv.evaluate(&g.inst, x, a.iter().copied());
            let on_b = lv.evaluate(&g.inst, x, b.iter().copied());
            monotone += usize::from(on_a > on_b);
            negative += usize::from(on_a < 0.0);
            smooth += usize::from(lv.evaluate(&clean, x, b.iter().copied()) != 0.0);
        }
    }
    outcome(
        monotone + negative + smooth == 0,
        format!(
            "{triples} triples x 2 measures: {monotone} monotonicity, {negative} sign, {smooth} smooth-zero violations"
        ),
    )
}

fn main() -> ExitCode {
    let res = battery();
    let results = [
        ("1 detection exactness", detection_exactness()),
        ("2 oracle equivalence", oracle_equivalence()),
        ("3 planner ground truth", planner_ground_truth()),
        ("4 lower-bound planning", lower_bound_planning()),
        ("5 bound soundness", bound_soundness()),
        ("6 end-to-end learning", end_to_end(&res)),
        ("7 sample-complexity ordering", sample_complexity_ordering(&res)),
        ("8 cache correctness", cache_correctness()),
        ("9 LV properties", lv_properties()),
    ];
    for (name, o) in &results {
        println!(
            "criterion {name}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
