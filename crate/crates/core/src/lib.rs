//! Corrupt-reward MDPs with spiky corruption: detect corrupt states from the
//! observed reward alone, bound the true reward with Lipschitz bounds, plan
//! and learn against those bounds.
//!
//! ```
//! use std::collections::BTreeSet;
//! use spiky_crmdp::{builtin_corners, compute_bounds, identify_corrupt_states, plan_value_iteration, LvMeasure};
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let env = builtin_corners();
//! let inst = env.instance();
//! let all: BTreeSet<_> = inst.states().collect();
//! let report = identify_corrupt_states(&all, &LvMeasure::nlv(), inst)?;
//! let trusted: BTreeSet<_> = report.noncorrupt().collect();
//! let bounds = compute_bounds(inst, &trusted)?;
//! let plan = plan_value_iteration(inst, &bounds.lower);
//! assert_eq!(plan.optimal_return, 64.0);
//! # Ok(())
//! # }
//! ```

pub mod agent;
pub mod bounds;
pub mod detect;
pub mod envs;
pub mod harness;
pub mod model;
mod plot;
pub mod record;

pub use agent::{learn_online, AgentConfig, AgentMode, RewardChannel};
pub use bounds::{compute_bounds, plan_value_iteration, regret_upper_bound, PolicyValue, RewardBounds};
pub use detect::{identify_corrupt_states, identify_in_trajectory, CorruptionReport, DetectError};
pub use envs::{builtin_corners, builtin_ontheway, parse_env, GridEnv};
pub use model::{CrmdpInstance, GridState, LvKind, LvMeasure, StateId};
pub use record::RunRecord;
