//! Data model: instances, the state metric, Lipschitz-violation measures and
//! the assumption checker.

mod assumptions;
mod grid;
mod instance;
mod lv;

pub use assumptions::{
    check_spiky_assumptions, smoothness_violations, trajectory_condition, AssumptionReport, SpikyWitness,
    TrajectoryCheck,
};
pub use grid::{chebyshev_distance, manhattan_distance, GridState};
pub use instance::{
    trajectory_return, ActionId, CrmdpInstance, InstanceError, InstanceParts, Metric, MetricViolation, StateId,
};
pub use lv::{nlv, tlv, violates, violation_excess, LvKind, LvMeasure, MeasureError};
