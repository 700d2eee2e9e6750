mod common;

use aamatrix_core::backend::{Matcher, Script};
use aamatrix_core::dependency::{detect_conflicts, Severity};
use aamatrix_core::engine::gate::{ApprovalState, Command, CommandKind};
use aamatrix_core::engine::scenario::{Budgets, Juncture, JunctureKind, Intervention, MergeTemplate, ProtocolConfig, Stage, Strategy, Trigger, UserConfigEntry};
use aamatrix_core::engine::{run, RunReport};
use aamatrix_core::error::EngineError;
use aamatrix_core::ontology::{ActionKind, OutcomeStatus, TaskStatus};
use aamatrix_core::registry::{RegistryManifest, ResourceDescriptor, ResourceKind, ResourceState, Subkind};
use aamatrix_core::taxonomy::AspectId;
use common::*;

fn events_of(r: &RunReport, kind: &str) -> usize {
    r.events.iter().filter(|e| e.kind == kind).count()
}

#[test]
fn all_static_multi_cycle_concatenates_in_priority_order() {
    let r = run(&load("all-l0.json")).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::Completed, "{}", r.outcome.detail);
    // Hand trace: two tasks from the ';' split, executed in position order, then merged.
    assert_eq!(r.outcome.total_result.as_deref(), Some("payload A\npayload B"));
    assert_eq!(r.outcome.response.as_deref(), Some("Completed 2 of 2 tasks.\n\npayload A\npayload B"));
    use ActionKind::*;
    assert_eq!(
        kinds(&r),
        vec![DecomposeTask, CreateTask, CreateTask, DelegateTask, ExecuteTask, DelegateTask, ExecuteTask, MergeResult]
    );
    let ids: Vec<u64> = r.activity.action_log.iter().map(|a| a.id).collect();
    assert_eq!(ids, (1..=8).collect::<Vec<_>>());
    assert_eq!(r.backend_calls, 2);
    assert_eq!(events_of(&r, "degraded"), 0);
}

#[test]
fn all_self_organizing_completes() {
    let r = run(&load("all-l2.json")).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::Completed, "{}", r.outcome.detail);
    assert_eq!(r.outcome.total_result.as_deref(), Some("Report: findings and draft."));
    assert!(r.activity.agent(&"reviewer".into()).is_some());
    assert_eq!(r.activity.tasks[1].assignee, Some("reviewer".into()));
    assert_eq!(r.trace.len(), 1);
    assert_eq!(r.trace[0].resource, "search");
    let writer = r.activity.agent(&"writer".into()).unwrap();
    assert_eq!(writer.spec.role_text, "You write concise reports.");
}

#[test]
fn event_streams_are_reproducible() {
    for name in ["all-l0.json", "all-l2.json", "dead-end.json"] {
        let s = load(name);
        let first = run(&s).unwrap().ndjson();
        for _ in 0..2 {
            assert_eq!(run(&s).unwrap().ndjson(), first, "{name}");
        }
    }
}

#[test]
fn dead_end_is_predicted_statically() {
    let s = load("dead-end.json");
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::DeadEnd);
    assert!(r.outcome.detail.contains("`translate`"), "{}", r.outcome.detail);
    let conflicts = detect_conflicts(&s.profile());
    assert!(conflicts
        .iter()
        .any(|c| c.dependent == AspectId::Util && c.dependency == AspectId::Integ && c.severity == Severity::High));
}

#[test]
fn endless_refinement_is_caught() {
    let script = Script::default().default_response("refine further");
    let mut s = build("improve the essay", 0, 0, dialogue(5), dialogue_roster(), script);
    s.budgets = Budgets { max_actions: 200, max_protocol_cycles: 50, repeat_state_limit: 3 };
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::NonTermination);
    assert!(r.outcome.detail.contains("state repetition"));
    assert!(r.activity.action_log.len() <= 200);
}

#[test]
fn action_budget_stops_at_limit_plus_one() {
    let script = Script::default().default_response("refine further");
    let mut s = build("improve the essay", 0, 0, dialogue(1000), dialogue_roster(), script);
    s.budgets = Budgets { max_actions: 10, max_protocol_cycles: 1000, repeat_state_limit: 1000 };
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::NonTermination);
    assert_eq!(r.activity.action_log.len(), 11);
    assert!(r.outcome.detail.contains("action budget"));
}

#[test]
fn empty_free_form_decomposition_is_an_error() {
    let script = Script::default().rule(purpose("decompose"), "").default_response("ok");
    let mut s = build("g", 0, 0, dialogue(2), dialogue_roster(), script);
    set(&mut s, AspectId::Decom, 2, 0);
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::Error);
    assert_eq!(r.outcome.detail, EngineError::EmptyDecomposition.to_string());
}

#[test]
fn free_form_decomposition_parses_numbered_list() {
    let script = Script::default()
        .rule(purpose("decompose"), "1. x\n2. y")
        .default_response("done TASK_DONE");
    let mut s = build("g", 0, 0, dialogue(2), dialogue_roster(), script);
    set(&mut s, AspectId::Decom, 2, 0);
    let r = run(&s).unwrap();
    let descs: Vec<&str> = r.activity.tasks.iter().map(|t| t.description.as_str()).collect();
    assert_eq!(descs, ["x", "y"]);
    assert_eq!(r.outcome.status, OutcomeStatus::Completed);
}

#[test]
fn unparseable_strategy_degrades_to_rule() {
    let script = Script::default().rule(purpose("select_strategy"), "no idea").default_response("TASK_DONE");
    let mut s = build("a; b,c", 0, 0, dialogue(2), dialogue_roster(), script);
    set(&mut s, AspectId::Decom, 1, 0);
    s.policies.strategies = vec![Strategy { name: "deep".into(), delimiters: vec![";".into(), ",".into()] }];
    s.policies.max_depth = 2;
    let r = run(&s).unwrap();
    assert_eq!(r.activity.tasks.len(), 2);
    assert_eq!(events_of(&r, "degraded"), 1);

    let script = Script::default().rule(purpose("select_strategy"), "STRATEGY: deep").default_response("TASK_DONE");
    s.backend = aamatrix_core::backend::BackendConfig::scripted(script, 0);
    let r = run(&s).unwrap();
    let descs: Vec<&str> = r.activity.tasks.iter().map(|t| t.description.as_str()).collect();
    assert_eq!(descs, ["a", "b", "c"]);
}

#[test]
fn non_adjacent_assignment_rejected_under_fixed_network() {
    let script = Script::default().rule(purpose("assign"), "TASK:t1 AGENT:outsider").default_response("TASK_DONE");
    let mut roster = dialogue_roster();
    roster.push(aamatrix_core::ontology::AgentSpec::new("outsider", aamatrix_core::ontology::AgentType::TaskExecution));
    let mut s = build("only task", 0, 0, dialogue(2), roster, script);
    set(&mut s, AspectId::Orch, 2, 0);
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::Completed);
    assert_eq!(r.activity.tasks[0].assignee, Some("exec".into()));
    let degraded = r.events.iter().find(|e| e.kind == "degraded").unwrap();
    assert!(degraded.str_field("reason").unwrap().contains("not adjacent"));

    // An adaptive network may add the link instead.
    set(&mut s, AspectId::NetM, 1, 0);
    let r = run(&s).unwrap();
    assert_eq!(r.activity.tasks[0].assignee, Some("outsider".into()));
}

#[test]
fn adaptive_reprioritization_reorders() {
    let script = Script::default().rule(purpose("prioritize"), "ORDER: t3, t1").default_response("r");
    let mut s = build("a; b; c", 0, 0, multi(), multi_roster(), script);
    set(&mut s, AspectId::Orch, 1, 0);
    let r = run(&s).unwrap();
    let order: Vec<String> = r
        .activity
        .action_log
        .iter()
        .filter(|a| a.kind == ActionKind::ExecuteTask)
        .map(|a| a.task.clone().unwrap().0)
        .collect();
    assert_eq!(order, ["t3", "t1", "t2"]);
}

#[test]
fn adaptive_merge_redoes_once() {
    let script = Script::default()
        .rule(purpose("select_merge"), "MERGE: bullets")
        .rule(Matcher { purpose: Some("evaluate_merge".into()), step_range: Some((4, 4)), ..Matcher::default() }, "REJECT")
        .rule(purpose("evaluate_merge"), "ACCEPT")
        .default_response("p");
    let mut s = build("a; b", 0, 0, multi(), multi_roster(), script);
    set(&mut s, AspectId::Synth, 1, 0);
    s.policies.merge_templates =
        vec![MergeTemplate { name: "bullets".into(), header: "Results".into(), item_prefix: "- ".into(), separator: "\n".into() }];
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::Completed);
    let merges = r.activity.action_log.iter().filter(|a| a.kind == ActionKind::MergeResult).count();
    assert_eq!(merges, 2);
    assert_eq!(r.outcome.total_result.as_deref(), Some("Results\n- p\n- p"));
}

#[test]
fn all_failed_tasks_give_no_results() {
    let script = Script::default().default_response("   ");
    let s = build("a; b", 0, 0, multi(), multi_roster(), script);
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::Error);
    assert_eq!(r.outcome.detail, EngineError::NoResults.to_string());
    assert!(r.activity.tasks.iter().all(|t| t.status == TaskStatus::Failed));
}

#[test]
fn halt_stops_the_run() {
    let mut s = build("a; b; c", 0, 0, multi(), multi_roster(), Script::default().default_response("x"));
    s.interventions = vec![Intervention {
        trigger: Trigger::AtAction(3),
        command: Command::runtime(CommandKind::Halt, AspectId::Orch),
    }];
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::Halted);
    assert_eq!(r.activity.action_log.len(), 3);
    let gate = r.events.iter().find(|e| e.kind == "gate").unwrap();
    assert_eq!(gate.get("safety_override"), Some(&serde_json::json!(true)));
}

#[test]
fn runtime_adjustment_needs_real_time_alignment() {
    let mut s = build("a; b", 0, 0, multi(), multi_roster(), Script::default().default_response("x"));
    let adjust = CommandKind::AdjustConstraint { aspect: AspectId::MemU, key: "k".into(), value: "v".into() };
    s.interventions = vec![Intervention { trigger: Trigger::AtAction(1), command: Command::runtime(adjust.clone(), AspectId::MemU) }];
    let r = run(&s).unwrap();
    let gate = r.events.iter().find(|e| e.kind == "gate").unwrap();
    assert_eq!(gate.get("decision").unwrap()["accepted"], false);
    assert!(!r.activity.activity_memory.contains_key("constraint.memu.k"));

    set(&mut s, AspectId::MemU, 0, 2);
    let r = run(&s).unwrap();
    assert_eq!(r.activity.activity_memory.get("constraint.memu.k").map(String::as_str), Some("v"));
}

#[test]
fn pre_run_config_requires_user_guided_alignment() {
    let mut s = build("a", 0, 0, multi(), multi_roster(), Script::default().default_response("x"));
    s.user_config = vec![UserConfigEntry { aspect: AspectId::RoleD, key: "role.executor".into(), value: "QA engineer".into() }];
    assert!(matches!(run(&s), Err(EngineError::InvalidScenario(_))));
    set(&mut s, AspectId::RoleD, 0, 1);
    let r = run(&s).unwrap();
    assert_eq!(r.activity.agent(&"executor".into()).unwrap().spec.role_text, "QA engineer");
}

#[test]
fn approval_points_gate_execution() {
    let mut s = build("a; b", 0, 0, multi(), multi_roster(), Script::default().default_response("x"));
    set(&mut s, AspectId::ActM, 0, 2);
    s.policies.junctures = vec![Juncture { at: JunctureKind::BeforeExecute, aspect: AspectId::ActM }];
    s.interventions = vec![Intervention {
        trigger: Trigger::ApprovalPoint(1),
        command: Command::runtime(CommandKind::Approve { approval: "ap1".into() }, AspectId::ActM),
    }];
    let r = run(&s).unwrap();
    assert_eq!(r.approvals.len(), 2);
    assert_eq!(r.approvals[0].state, ApprovalState::Approved);
    assert_eq!(r.approvals[1].state, ApprovalState::Expired);
    assert_eq!(r.activity.tasks[0].status, TaskStatus::Done);
    assert_eq!(r.activity.tasks[1].status, TaskStatus::Failed);
    assert_eq!(r.outcome.status, OutcomeStatus::Completed);

    // Without real-time alignment no approval point is opened.
    set(&mut s, AspectId::ActM, 0, 1);
    let r = run(&s).unwrap();
    assert!(r.approvals.is_empty());
}

#[test]
fn strict_chain_passes_artefacts_downstream() {
    let stage = |a: &str, k, art: &str| Stage { agent: a.into(), action: k, artefact: art.into() };
    let roster = ["spec", "code", "test"]
        .iter()
        .map(|id| aamatrix_core::ontology::AgentSpec::new(id, aamatrix_core::ontology::AgentType::DomainRole))
        .map(|mut a| {
            a.role_text = format!("{} writer", a.id);
            a
        })
        .collect();
    let protocol = ProtocolConfig::StrictFinite {
        stages: vec![
            stage("spec", ActionKind::ExecuteTask, "prd"),
            stage("code", ActionKind::ExecuteTask, "code"),
            stage("test", ActionKind::EvaluateResult, "review"),
        ],
    };
    let script = Script::default()
        .rule(Matcher { agent_type: None, prompt_substring: Some("prd: spec text".into()), ..purpose("execute") }, "code text")
        .rule(purpose("execute"), "spec text");
    let s = build("build the game", 0, 0, protocol, roster, script);
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::Completed, "{}", r.outcome.detail);
    assert_eq!(r.outcome.total_result.as_deref(), Some("code text"));
    let names: Vec<&str> = r.activity.tasks[0].result.as_ref().unwrap().artefacts.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(names, ["prd", "code"]);
}

#[test]
fn adaptive_integration_activates_dormant_resources() {
    let mut s = build("look up @lookup capital", 0, 0, multi(), multi_roster(), Script::default().default_response("x"));
    let mut d = ResourceDescriptor::new("kv", ResourceKind::Data, Subkind::StructuredText, "kv_lookup", &["lookup"]);
    d.state = ResourceState::Dormant;
    d.data.insert("capital".into(), "Paris".into());
    s.registry = aamatrix_core::engine::scenario::RegistrySource::Inline(RegistryManifest { resources: vec![d] });
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::DeadEnd);
    set(&mut s, AspectId::Integ, 1, 0);
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::Completed);
    assert_eq!(r.trace[0].result.as_text(), "Paris");
}

#[test]
fn endless_task_creation_hits_a_budget() {
    let script = Script::default().rule(purpose("create_tasks"), "1. one more thing").default_response("x");
    let mut s = build("start", 0, 0, multi(), multi_roster(), script);
    s.policies.mid_run_task_creation = true;
    s.budgets = Budgets { max_actions: 40, max_protocol_cycles: 8, repeat_state_limit: 100 };
    let r = run(&s).unwrap();
    assert_eq!(r.outcome.status, OutcomeStatus::NonTermination);
    assert!(r.outcome.detail.contains("protocol cycle"));
}

#[test]
fn guard_checks_do_not_depend_on_autonomy() {
    let a = run(&load("all-l0.json")).unwrap();
    let b = run(&load("all-l2.json")).unwrap();
    let names = |r: &RunReport| r.guard_checks.keys().cloned().collect::<Vec<_>>();
    assert_eq!(names(&a), names(&b));
    assert_eq!(names(&a).len(), 3);
}

#[test]
fn small_memory_window_is_summarized() {
    let mut roster = multi_roster();
    roster[2].memory_policy.short_term_window = 2;
    let s = build("a; b; c; d", 0, 0, multi(), roster, Script::default().default_response("x"));
    let r = run(&s).unwrap();
    let mem = &r.activity.agent(&"executor".into()).unwrap().memory;
    assert!(mem.short_term.len() <= 2);
    assert_eq!(mem.short_term[0].role, aamatrix_core::ontology::SUMMARY_ROLE);
    assert!(events_of(&r, "memory") > 0);
}
