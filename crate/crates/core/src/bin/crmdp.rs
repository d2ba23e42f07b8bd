use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spiky_crmdp::agent::{learn_online, AgentConfig, AgentMode, RewardChannel};
use spiky_crmdp::bounds::{compute_bounds, plan_value_iteration, regret_upper_bound};
use spiky_crmdp::detect::identify_corrupt_states;
use spiky_crmdp::envs::{builtin, parse_env, GridEnv, BUILTIN_NAMES};
use spiky_crmdp::harness::{
    emit_report, format_rows, run_experiment, run_file_name, sample_complexity, target_return, write_run_csv,
    AgentSetup, ExperimentSpec, DEFAULT_TOLERANCE,
};
use spiky_crmdp::model::{check_spiky_assumptions, trajectory_return, LvKind, LvMeasure, StateId, TrajectoryCheck};

const EXIT_USAGE: u8 = 1;
const EXIT_ASSUMPTION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "crmdp",
    version,
    about = "Corrupt-reward detection and learning on gridworlds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EnvArg {
    /// Builtin name (corners, ontheway) or path to a map file.
    #[arg(long)]
    env: String,
    #[arg(long, default_value = "nlv")]
    lv: LvKind,
}

#[derive(Subcommand)]
enum Command {
    /// Identify corrupt states and print the LV of every state.
    Detect(EnvArg),
    /// Check the spikiness assumptions against the ground truth.
    Check {
        #[command(flatten)]
        env: EnvArg,
        /// Random trajectories sampled for the per-trajectory condition.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one agent and write its per-episode record.
    Train {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long, default_value = "crmdp")]
        agent: AgentMode,
        #[arg(long, default_value = "observed")]
        reward: RewardChannel,
        #[arg(long, default_value_t = 20_000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        cache_capacity: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all agent configurations over several seeds.
    Bench {
        /// Comma-separated environments.
        #[arg(long, value_delimiter = ',', default_value = "corners,ontheway")]
        env: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 20_000)]
        episodes: usize,
        #[arg(long, default_value = "nlv")]
        lv: LvKind,
        #[arg(long)]
        cache_capacity: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print reward bounds from the non-corrupt states and the regret bound.
    Bounds(EnvArg),
}

enum Failure {
    Usage(String),
    Assumption(String),
    Runtime(String),
}

fn load_env(spec: &str) -> Result<GridEnv, Failure> {
    if let Some(env) = builtin(spec) {
        return Ok(env);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Failure::Usage(format!(
            "`{spec}` is neither a builtin ({}) nor an existing file",
            BUILTIN_NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    parse_env(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn measure(kind: LvKind) -> LvMeasure {
    match kind {
        LvKind::Nlv => LvMeasure::nlv(),
        LvKind::Tlv => LvMeasure::tlv(),
    }
}

fn cmd_detect(arg: &EnvArg) -> Result<(), Failure> {
    let env = load_env(&arg.env)?;
    let inst = env.instance();
    let all: BTreeSet<StateId> = inst.states().collect();
    let report = identify_corrupt_states(&all, &measure(arg.lv), inst).map_err(|e| Failure::Runtime(e.to_string()))?;
    let flagged = report.corrupt_set();
    println!("{:<8} {:>8} {:>8} {:>6}", "cell", "C", arg.lv, "flag");
    for s in inst.states() {
        println!(
            "{:<8} {:>8} {:>8} {:>6}",
            env.cell(s).to_string(),
            inst.observed_reward(s),
            report.scores[&s],
            if flagged.contains(&s) { "X" } else { "" }
        );
    }
    let cells: Vec<String> = report
        .identified_corrupt
        .iter()
        .map(|&s| env.cell(s).to_string())
        .collect();
    println!("corrupt: {}", cells.join(" "));
    Ok(())
}

fn cmd_check(arg: &EnvArg, samples: usize, seed: u64) -> Result<(), Failure> {
    let env = load_env(&arg.env)?;
    let report = check_spiky_assumptions(env.instance(), &measure(arg.lv), samples, seed);
    let yes = |b: bool| if b { "holds" } else { "VIOLATED" };
    println!("non-corrupt state exists: {}", yes(report.cond_nonempty));
    println!("true reward Lipschitz:    {}", yes(report.cond_smooth));
    for (x, y) in &report.smooth_violations {
        println!("  {} {}", env.cell(*x), env.cell(*y));
    }
    println!("corruption is spiky:      {}", yes(report.cond_spiky));
    println!("  largest non-corrupt LV: {}", report.noncorrupt_sup);
    if let Some(w) = &report.spiky_witness {
        println!("  {} scores only {}", env.cell(w.state), w.corrupt_score);
    }
    let traj_ok = match &report.cond_spiky_traj {
        TrajectoryCheck::Holds => {
            println!("per-trajectory:           holds (no corruption)");
            true
        }
        TrajectoryCheck::SampledOk { samples } => {
            println!("per-trajectory:           holds on {samples} sampled trajectories");
            true
        }
        TrajectoryCheck::Violated { trajectory, witness } => {
            let cells: Vec<String> = trajectory.iter().map(|&s| env.cell(s).to_string()).collect();
            println!("per-trajectory:           VIOLATED on {}", cells.join(" "));
            println!(
                "  {} scores {} <= {}",
                env.cell(witness.state),
                witness.corrupt_score,
                witness.noncorrupt_sup
            );
            false
        }
    };
    if report.is_spiky() && traj_ok {
        Ok(())
    } else {
        Err(Failure::Assumption("assumptions do not hold".into()))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    arg: &EnvArg,
    mode: AgentMode,
    channel: RewardChannel,
    episodes: usize,
    seed: u64,
    cache_capacity: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    let env = load_env(&arg.env)?;
    let cfg = AgentConfig::new(mode, channel, seed).with_episodes(episodes);
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let record =
        learn_online(&env, &cfg, &measure(arg.lv), cache_capacity).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    let setup = AgentSetup { mode, channel };
    let name = env_label(&arg.env);
    let path = out.join(run_file_name(&name, setup, seed));
    write_run_csv(&record, &path).map_err(|e| Failure::Runtime(e.to_string()))?;

    let target = target_return(&env, setup);
    let last = record.last().expect("at least one episode");
    println!("wrote {}", path.display());
    println!(
        "final greedy return: observed {} true {}",
        last.observed_return, last.true_return
    );
    match sample_complexity(&record, target, DEFAULT_TOLERANCE) {
        Some(sc) => println!("sample complexity: {sc} (target {target})"),
        None => println!("sample complexity: never (target {target})"),
    }
    let flagged: Vec<String> = record.final_corrupt.iter().map(|&s| env.cell(s).to_string()).collect();
    println!("identified corrupt: {}", flagged.join(" "));
    Ok(())
}

fn env_label(spec: &str) -> String {
    if builtin(spec).is_some() {
        return spec.to_ascii_lowercase();
    }
    Path::new(spec)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "env".into())
}

fn cmd_bench(
    envs: &[String],
    seeds: &[u64],
    episodes: usize,
    lv: LvKind,
    cache_capacity: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    let environments = envs
        .iter()
        .map(|e| load_env(e).map(|env| (env_label(e), env)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut spec = ExperimentSpec::battery(environments, seeds.to_vec());
    spec.agent = AgentConfig::default().with_episodes(episodes);
    spec.agent.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    spec.lv = measure(lv);
    spec.cache_capacity = cache_capacity;
    let result = run_experiment(&spec);
    for run in &result.runs {
        if let Err(e) = &run.result {
            eprintln!("{} {} seed {}: {e}", run.environment, run.setup, run.seed);
        }
    }
    let files = emit_report(&result.rows, &result.runs, out).map_err(|e| Failure::Runtime(e.to_string()))?;
    print!("{}", format_rows(&result.rows));
    println!("wrote {} files to {}", files.len(), out.display());
    if result.runs.iter().any(|r| r.result.is_err()) {
        return Err(Failure::Runtime("some runs failed".into()));
    }
    Ok(())
}

fn cmd_bounds(arg: &EnvArg) -> Result<(), Failure> {
    let env = load_env(&arg.env)?;
    let inst = env.instance();
    let b = compute_bounds(inst, &inst.noncorrupt_states()).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!(
        "{:<8} {:>6} {:>6} {:>6} {:>6}  lower from / upper from",
        "cell", "C", "R", "rllb", "rulb"
    );
    for s in inst.states() {
        println!(
            "{:<8} {:>6} {:>6} {:>6} {:>6}  {} / {}",
            env.cell(s).to_string(),
            inst.observed_reward(s),
            inst.true_reward(s),
            b.lower(s),
            b.upper(s),
            env.cell(b.lower_bounding_state[s.0]),
            env.cell(b.upper_bounding_state[s.0]),
        );
    }
    let plan = plan_value_iteration(inst, &b.lower);
    let traj = plan.trajectory(inst);
    println!(
        "lower-bound plan: true return {}, observed return {}",
        trajectory_return(&traj, inst.true_rewards()),
        trajectory_return(&traj, inst.observed_rewards())
    );
    println!("regret bound: {}", regret_upper_bound(inst, &b));
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Detect(arg) => cmd_detect(arg),
        Command::Check { env, samples, seed } => cmd_check(env, *samples, *seed),
        Command::Train {
            env,
            agent,
            reward,
            episodes,
            seed,
            cache_capacity,
            out,
        } => cmd_train(env, *agent, *reward, *episodes, *seed, *cache_capacity, out),
        Command::Bench {
            env,
            seeds,
            episodes,
            lv,
            cache_capacity,
            out,
        } => cmd_bench(env, seeds, *episodes, *lv, *cache_capacity, out),
        Command::Bounds(arg) => cmd_bounds(arg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Assumption(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ASSUMPTION)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
