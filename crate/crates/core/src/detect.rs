//! Corrupt-state identification.
//!
//! Candidates are sorted by their LV against the whole candidate set
//! (descending, ties by ascending [`StateId`]) and scanned in that order. A
//! state is flagged while its LV against the not-yet-flagged candidates is
//! positive; the scan stops at the first state whose LV has dropped to zero.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{violates, CrmdpInstance, LvMeasure, StateId};

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionReport {
    /// Flagged states, in scan order. Always a prefix of `scan_order`.
    pub identified_corrupt: Vec<StateId>,
    /// LV of each candidate against the full candidate set.
    pub scores: BTreeMap<StateId, f64>,
    pub scan_order: Vec<StateId>,
}

impl CorruptionReport {
    pub fn corrupt_set(&self) -> BTreeSet<StateId> {
        self.identified_corrupt.iter().copied().collect()
    }

    /// Candidates that were not flagged.
    pub fn noncorrupt(&self) -> impl Iterator<Item = StateId> + '_ {
        self.scan_order[self.identified_corrupt.len()..].iter().copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("no candidate states given")]
    EmptyCandidates,
    /// The scan never reached a state with zero violations: relative to the
    /// candidates, no state can be non-corrupt.
    #[error("all {} candidate states were flagged corrupt", .0.identified_corrupt.len())]
    AllStatesFlagged(Box<CorruptionReport>),
}

/// How `LV` against the shrinking remainder is evaluated during the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanStrategy {
    /// Recompute the LV from scratch for each scanned state.
    Recompute,
    /// Track, per candidate, how many remaining candidates it violates with.
    /// With strictly positive measure weights the LV is zero exactly when
    /// that count is zero.
    #[default]
    Incremental,
}

pub fn identify_corrupt_states(
    candidates: &BTreeSet<StateId>,
    lv: &LvMeasure,
    inst: &CrmdpInstance,
) -> Result<CorruptionReport, DetectError> {
    identify_corrupt_states_with(candidates, lv, inst, ScanStrategy::default())
}

pub fn identify_corrupt_states_with(
    candidates: &BTreeSet<StateId>,
    lv: &LvMeasure,
    inst: &CrmdpInstance,
    strategy: ScanStrategy,
) -> Result<CorruptionReport, DetectError> {
    if candidates.is_empty() {
        return Err(DetectError::EmptyCandidates);
    }
    let universe: Vec<StateId> = candidates.iter().copied().collect();
    let scores: BTreeMap<StateId, f64> = universe
        .iter()
        .map(|&x| (x, lv.evaluate(inst, x, universe.iter().copied())))
        .collect();
    let mut scan_order = universe.clone();
    // Stable sort keeps ascending ids among equal scores.
    scan_order.sort_by(|a, b| scores[b].total_cmp(&scores[a]));

    let flagged_len = match strategy {
        ScanStrategy::Recompute => scan_recompute(&scan_order, &universe, lv, inst),
        ScanStrategy::Incremental => scan_incremental(&scan_order, &universe, inst),
    };

    let report = CorruptionReport {
        identified_corrupt: scan_order[..flagged_len.unwrap_or(scan_order.len())].to_vec(),
        scores,
        scan_order,
    };
    match flagged_len {
        Some(_) => Ok(report),
        None => Err(DetectError::AllStatesFlagged(Box::new(report))),
    }
}

/// Returns the number of flagged states, or `None` if the scan exhausted
/// the candidates.
fn scan_recompute(order: &[StateId], universe: &[StateId], lv: &LvMeasure, inst: &CrmdpInstance) -> Option<usize> {
    let mut flagged = BTreeSet::new();
    for (i, &x) in order.iter().enumerate() {
        let remaining = universe.iter().copied().filter(|y| !flagged.contains(y));
        if lv.evaluate(inst, x, remaining) == 0.0 {
            return Some(i);
        }
        flagged.insert(x);
    }
    None
}

fn scan_incremental(order: &[StateId], universe: &[StateId], inst: &CrmdpInstance) -> Option<usize> {
    let pos: BTreeMap<StateId, usize> = universe.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let violators: Vec<Vec<usize>> = universe
        .iter()
        .map(|&x| {
            universe
                .iter()
                .enumerate()
                .filter(|&(_, &y)| violates(inst, x, y))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut remaining: Vec<usize> = violators.iter().map(Vec::len).collect();
    for (i, &x) in order.iter().enumerate() {
        let xi = pos[&x];
        if remaining[xi] == 0 {
            return Some(i);
        }
        // Violation is symmetric, so x leaves exactly the lists of its own
        // violators.
        for &j in &violators[xi] {
            remaining[j] -= 1;
        }
    }
    None
}

/// Runs identification with the deduplicated states of a trajectory as the
/// candidate universe.
pub fn identify_in_trajectory(
    tau: &[StateId],
    lv: &LvMeasure,
    inst: &CrmdpInstance,
) -> Result<CorruptionReport, DetectError> {
    let candidates: BTreeSet<StateId> = tau.iter().copied().collect();
    identify_corrupt_states(&candidates, lv, inst)
}
