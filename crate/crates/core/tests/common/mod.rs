#![allow(dead_code)]

use std::path::PathBuf;

use aamatrix_core::backend::{BackendConfig, Matcher, Script};
use aamatrix_core::engine::scenario::{Budgets, Policies, ProtocolConfig, Scenario};
use aamatrix_core::engine::RunReport;
use aamatrix_core::ontology::{ActionKind, AgentSpec, AgentType, Goal};
use aamatrix_core::taxonomy::{AspectConfig, AspectId};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("scenario loads")
}

pub fn uniform(au: u8, al: u8) -> std::collections::BTreeMap<AspectId, AspectConfig> {
    AspectId::ALL.iter().map(|&a| (a, AspectConfig::from_ordinals(au, al).unwrap())).collect()
}

pub fn purpose(p: &str) -> Matcher {
    Matcher { purpose: Some(p.to_string()), ..Matcher::default() }
}

pub fn dialogue(max_cycles: u32) -> ProtocolConfig {
    ProtocolConfig::DialogueCycle { instructor: "inst".into(), executor: "exec".into(), max_cycles }
}

pub fn dialogue_roster() -> Vec<AgentSpec> {
    vec![AgentSpec::new("inst", AgentType::DomainRole), AgentSpec::new("exec", AgentType::TaskExecution)]
        .into_iter()
        .map(|mut a| {
            a.role_text = format!("{} role", a.id);
            a
        })
        .collect()
}

pub fn multi_roster() -> Vec<AgentSpec> {
    vec![
        AgentSpec::new("creator", AgentType::TaskCreation),
        AgentSpec::new("prioritizer", AgentType::TaskPrioritization),
        AgentSpec::new("executor", AgentType::TaskExecution),
    ]
}

pub fn multi() -> ProtocolConfig {
    ProtocolConfig::MultiCycle { creation: "creator".into(), prioritization: "prioritizer".into(), execution: "executor".into() }
}

/// Scenario with uniform levels and a scripted backend.
pub fn build(goal: &str, au: u8, al: u8, protocol: ProtocolConfig, roster: Vec<AgentSpec>, script: Script) -> Scenario {
    Scenario {
        goal: Goal::new(goal),
        aspects: uniform(au, al),
        roster,
        protocol,
        registry: Default::default(),
        backend: BackendConfig::scripted(script, 3),
        budgets: Budgets::default(),
        user_config: Vec::new(),
        interventions: Vec::new(),
        policies: Policies::default(),
    }
}

pub fn set(s: &mut Scenario, aspect: AspectId, au: u8, al: u8) {
    s.aspects.insert(aspect, AspectConfig::from_ordinals(au, al).unwrap());
}

pub fn kinds(report: &RunReport) -> Vec<ActionKind> {
    report.activity.action_log.iter().map(|a| a.kind).collect()
}

/// Orchestration actions that belong to the dialogue protocol.
pub fn protocol_kinds(report: &RunReport) -> Vec<ActionKind> {
    report
        .activity
        .action_log
        .iter()
        .filter(|a| matches!(a.kind, ActionKind::DelegateTask | ActionKind::ExecuteTask))
        .map(|a| a.kind)
        .collect()
}
