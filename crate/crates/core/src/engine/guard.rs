//! Termination guards checked after every recorded action.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ontology::{ActionKind, Activity, ActivityOutcome, OutcomeStatus, Phase, TaskStatus};

use super::scenario::Budgets;

pub const CHECK_ACTIONS: &str = "max_actions";
pub const CHECK_CYCLES: &str = "max_protocol_cycles";
pub const CHECK_REPEAT: &str = "repeat_state";

/// Loop-detection key. Memory contents are deliberately left out.
type StateKey = (Phase, Vec<(String, TaskStatus)>, Option<ActionKind>);

#[derive(Debug, Clone)]
pub struct Guard {
    budgets: Budgets,
    seen: HashMap<StateKey, u32>,
    checks: BTreeMap<&'static str, u64>,
}

impl Guard {
    pub fn new(budgets: Budgets) -> Self {
        Self { budgets, seen: HashMap::new(), checks: BTreeMap::new() }
    }

    /// Runs all three checks; the first that fires decides the outcome.
    pub fn check(&mut self, activity: &Activity, protocol_cycles: u64) -> Option<ActivityOutcome> {
        let mut fired = Vec::new();

        *self.checks.entry(CHECK_ACTIONS).or_default() += 1;
        let n = activity.action_log.len() as u64;
        if n > self.budgets.max_actions {
            fired.push(format!("action budget exceeded: {n} actions recorded, max_actions is {}", self.budgets.max_actions));
        }

        *self.checks.entry(CHECK_CYCLES).or_default() += 1;
        if protocol_cycles > self.budgets.max_protocol_cycles {
            fired.push(format!(
                "protocol cycle budget exceeded: {protocol_cycles} cycles, max_protocol_cycles is {}",
                self.budgets.max_protocol_cycles
            ));
        }

        *self.checks.entry(CHECK_REPEAT).or_default() += 1;
        let count = self.seen.entry(state_key(activity)).or_default();
        *count += 1;
        if *count > self.budgets.repeat_state_limit {
            fired.push(format!(
                "state repetition: the same state occurred {count} times, repeat_state_limit is {}",
                self.budgets.repeat_state_limit
            ));
        }

        fired.into_iter().next().map(|d| ActivityOutcome::failed(OutcomeStatus::NonTermination, d))
    }

    /// Names of the checks executed so far with their counts.
    pub fn checks(&self) -> &BTreeMap<&'static str, u64> {
        &self.checks
    }

    pub fn check_names(&self) -> BTreeSet<String> {
        self.checks.keys().map(|s| s.to_string()).collect()
    }
}

fn state_key(activity: &Activity) -> StateKey {
    let mut pending: Vec<(String, TaskStatus)> = activity
        .pending_tasks()
        .map(|t| (t.description.clone(), t.status))
        .collect();
    pending.sort();
    (activity.phase, pending, activity.action_log.last().map(|a| a.kind))
}
