//! Executes a scenario as a task-management activity.
//!
//! Each aspect's autonomy level selects one of three mechanisms. Agent-made
//! choices that cannot be parsed fall back to the rule-based mechanism and the
//! fallback is logged as a `degraded` event.

pub mod events;
pub mod gate;
pub mod guard;
pub mod parse;
pub mod protocol;
pub mod scenario;
pub mod source;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde_json::json;

use crate::backend::{augment_prompt, Augmentation, CallContext, PromptTemplate, ReasoningBackend};
use crate::error::{ActivityError, BackendError, EngineError, RegistryError};
use crate::ontology::{
    Action, ActionKind, Activity, ActivityOutcome, AgentId, AgentSpec, AgentType, Artefact, ArtefactKind,
    Evaluation, MemoryEntry, OutcomeStatus, Phase, PromptRecord, Task, TaskId, TaskResult, TaskStatus,
    Verdict, truncation_summary,
};
use crate::registry::{InvocationResult, Registry, ResourceInvocation};
use crate::taxonomy::{AlignmentLevel, AspectConfig, AspectId, AutonomyLevel};

use events::{Event, EventLog, EventSink};
use gate::{apply_command, ApprovalPoint, ApprovalState, CommandKind, GateContext};
use guard::Guard;
use protocol::ProtocolState;
use scenario::{JunctureKind, Policies, ProtocolConfig, Scenario, Trigger};
use source::{CommandSource, Envelope, ScriptedSource};

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub activity: Activity,
    pub outcome: ActivityOutcome,
    pub events: Vec<Event>,
    pub approvals: Vec<ApprovalPoint>,
    pub trace: Vec<ResourceInvocation>,
    pub guard_checks: BTreeMap<String, u64>,
    pub backend_calls: u64,
}

impl RunReport {
    pub fn ndjson(&self) -> String {
        events::to_ndjson(&self.events)
    }
}

/// Runs with the scenario's own interventions as the only command source.
pub fn run(scenario: &Scenario) -> Result<RunReport, EngineError> {
    run_with(scenario, Box::new(ScriptedSource::new(&scenario.interventions)), None)
}

pub fn run_with(
    scenario: &Scenario,
    source: Box<dyn CommandSource>,
    sink: Option<EventSink>,
) -> Result<RunReport, EngineError> {
    scenario.validate()?;
    let backend = scenario.backend.build()?;
    run_with_backend(scenario, backend, source, sink)
}

pub fn run_with_backend(
    scenario: &Scenario,
    backend: Box<dyn ReasoningBackend>,
    source: Box<dyn CommandSource>,
    sink: Option<EventSink>,
) -> Result<RunReport, EngineError> {
    scenario.validate()?;
    let mut registry = Registry::from_manifest(scenario.manifest()?)
        .map_err(|e| EngineError::InvalidScenario(format!("registry: {e}")))?;
    if let Some(dir) = &scenario.policies.sandbox_dir {
        registry = registry.with_sandbox(dir);
    }
    let mut activity = Activity::new(scenario.goal.clone(), scenario.roster.clone())
        .map_err(|e| EngineError::InvalidScenario(e.to_string()))?;
    activity.mid_run_task_creation = scenario.policies.mid_run_task_creation;
    let mut engine = Engine {
        levels: scenario.aspects.clone(),
        policies: scenario.policies.clone(),
        protocol: ProtocolState::new(scenario.protocol.clone()),
        guard: Guard::new(scenario.budgets),
        log: EventLog::new(sink),
        scenario: scenario.clone(),
        activity,
        registry,
        backend,
        source,
        approvals: Vec::new(),
        links: BTreeSet::new(),
        selected_templates: BTreeMap::new(),
        authored_template: None,
    };
    let outcome = engine.drive();
    Ok(engine.finish(outcome))
}

/// Why the run stopped before completing.
enum Stop {
    Outcome(ActivityOutcome),
    Fail(EngineError),
}

impl From<EngineError> for Stop {
    fn from(e: EngineError) -> Self {
        Stop::Fail(e)
    }
}

impl From<ActivityError> for Stop {
    fn from(e: ActivityError) -> Self {
        Stop::Fail(e.into())
    }
}

impl From<BackendError> for Stop {
    fn from(e: BackendError) -> Self {
        Stop::Fail(e.into())
    }
}

type Step<T> = Result<T, Stop>;

/// Goal text split on `delimiter`, trimmed, empty pieces dropped.
pub fn split_goal(text: &str, delimiter: &str) -> Vec<String> {
    text.split(delimiter).map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

/// Splits with one delimiter per depth level, up to `max_depth` levels; returns the leaves.
pub fn hierarchical_split(text: &str, delimiters: &[String], max_depth: usize) -> Vec<String> {
    let mut pieces = vec![text.trim().to_string()];
    for d in delimiters.iter().take(max_depth.max(1)) {
        pieces = pieces.iter().flat_map(|p| split_goal(p, d)).collect();
    }
    pieces
}

/// Highest-priority (lowest number) pending task whose dependencies are done.
/// Ties go to the earlier-created task.
pub fn next_ready_task(activity: &Activity) -> Result<Option<TaskId>, EngineError> {
    let ready = activity
        .tasks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.status == TaskStatus::Pending && activity.dependencies_satisfied(t))
        .min_by_key(|(i, t)| (t.priority, *i))
        .map(|(_, t)| t.id.clone());
    if ready.is_none() && activity.pending_tasks().next().is_some() {
        return Err(EngineError::DeadlockedTasks);
    }
    Ok(ready)
}

/// Done tasks by priority, then creation order.
fn done_tasks(activity: &Activity) -> Vec<&Task> {
    let mut done: Vec<(usize, &Task)> =
        activity.tasks.iter().enumerate().filter(|(_, t)| t.status == TaskStatus::Done).collect();
    done.sort_by_key(|(i, t)| (t.priority, *i));
    done.into_iter().map(|(_, t)| t).collect()
}

fn payload(t: &Task) -> &str {
    t.result.as_ref().map_or("", |r| r.payload.as_str())
}

/// Rule-based synthesis: payloads joined by newlines under a fixed summary header.
pub fn synthesize_rule(activity: &Activity) -> Result<(String, String), EngineError> {
    let done = done_tasks(activity);
    if done.is_empty() {
        return Err(EngineError::NoResults);
    }
    let total = done.iter().map(|t| payload(t)).collect::<Vec<_>>().join("\n");
    Ok((total.clone(), response_text(done.len(), activity.tasks.len(), &total)))
}

fn response_text(done: usize, all: usize, total: &str) -> String {
    format!("Completed {done} of {all} tasks.\n\n{total}")
}

/// `(capability, request)` pairs: each `@cap` tag with the text up to the next tag.
/// A tag with no text after it carries the untagged description.
pub fn capability_requests(description: &str) -> Vec<(String, String)> {
    let plain = description
        .split_whitespace()
        .filter(|w| !w.starts_with('@'))
        .collect::<Vec<_>>()
        .join(" ");
    let mut out: Vec<(String, String)> = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    let flush = |cur: Option<(String, Vec<&str>)>, out: &mut Vec<(String, String)>| {
        if let Some((cap, words)) = cur {
            let req = if words.is_empty() { plain.clone() } else { words.join(" ") };
            if !out.iter().any(|(c, _)| c == &cap) {
                out.push((cap, req));
            }
        }
    };
    for w in description.split_whitespace() {
        if let Some(tag) = w.strip_prefix('@') {
            let tag = tag.trim_end_matches(|c: char| !c.is_alphanumeric() && c != '-' && c != '_');
            if !tag.is_empty() {
                flush(current.take(), &mut out);
                current = Some((tag.to_string(), Vec::new()));
            }
        } else if let Some((_, words)) = current.as_mut() {
            words.push(w);
        }
    }
    flush(current, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    NonEmpty,
    DoneMarker,
}

struct Executed {
    payload: String,
    artefacts: Vec<Artefact>,
    action: u64,
}

struct Engine {
    scenario: Scenario,
    levels: BTreeMap<AspectId, AspectConfig>,
    policies: Policies,
    activity: Activity,
    registry: Registry,
    backend: Box<dyn ReasoningBackend>,
    source: Box<dyn CommandSource>,
    log: EventLog,
    protocol: ProtocolState,
    guard: Guard,
    approvals: Vec<ApprovalPoint>,
    /// Undirected communication links, stored with the smaller id first.
    links: BTreeSet<(AgentId, AgentId)>,
    selected_templates: BTreeMap<ActionKind, PromptTemplate>,
    authored_template: Option<PromptTemplate>,
}

impl Engine {
    fn au(&self, a: AspectId) -> AutonomyLevel {
        self.levels[&a].autonomy
    }

    fn al(&self, a: AspectId) -> AlignmentLevel {
        self.levels[&a].alignment
    }

    fn policy(&mut self, aspect: AspectId, detail: impl Into<String>) {
        let level = self.au(aspect);
        self.log.emit("policy", json!({"aspect": aspect, "level": level, "detail": detail.into()}));
    }

    fn degrade(&mut self, aspect: AspectId, reason: impl Into<String>) {
        let level = self.au(aspect);
        self.log.emit(
            "degraded",
            json!({"aspect": aspect, "level": level, "reason": reason.into(), "fallback": "L0 rule"}),
        );
    }

    fn notice(&mut self, message: impl Into<String>) {
        self.log.emit("notice", json!({"message": message.into()}));
    }

    fn drive(&mut self) -> Step<ActivityOutcome> {
        let levels: BTreeMap<String, [u8; 2]> = self
            .levels
            .iter()
            .map(|(a, c)| (a.key().to_string(), [c.autonomy.ordinal(), c.alignment.ordinal()]))
            .collect();
        self.log.emit(
            "started",
            json!({
                "activity": self.activity.id,
                "goal": self.activity.goal.text,
                "protocol": self.protocol.config().name(),
                "levels": levels,
            }),
        );
        self.apply_pre_run()?;
        self.init_links();
        self.setup()?;
        self.decompose()?;
        self.transition(Phase::Orchestration)?;
        self.orchestrate()?;
        self.transition(Phase::Synthesis)?;
        self.synthesize()
    }

    fn finish(mut self, result: Step<ActivityOutcome>) -> RunReport {
        let outcome = match result {
            Ok(o) | Err(Stop::Outcome(o)) => o,
            Err(Stop::Fail(e)) => ActivityOutcome::failed(OutcomeStatus::Error, e.to_string()),
        };
        let from = self.activity.phase;
        self.activity.phase = Phase::Terminal;
        self.activity.outcome = Some(outcome.clone());
        self.log.emit("phase", json!({"from": from, "to": Phase::Terminal}));
        self.log.emit(
            "outcome",
            json!({
                "status": outcome.status,
                "detail": outcome.detail,
                "total_result": outcome.total_result,
                "response": outcome.response,
                "actions": self.activity.action_log.len(),
            }),
        );
        RunReport {
            guard_checks: self.guard.checks().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            backend_calls: self.backend.calls(),
            trace: self.registry.trace().to_vec(),
            approvals: self.approvals,
            events: self.log.into_events(),
            activity: self.activity,
            outcome,
        }
    }

    // ---- commands and approvals ----

    fn apply_pre_run(&mut self) -> Step<()> {
        let mut cmds = self.scenario.pre_run_commands();
        cmds.extend(
            self.scenario.interventions.iter().filter(|i| i.trigger == Trigger::PreRun).map(|i| i.command.clone()),
        );
        for c in cmds {
            self.handle(Envelope::new(c), None)?;
        }
        Ok(())
    }

    fn drain_commands(&mut self) -> Step<()> {
        let n = self.activity.action_log.len() as u64;
        for env in self.source.poll(n) {
            self.handle(env, None)?;
        }
        Ok(())
    }

    /// Gates and applies one command. Returns the verdict for approval commands.
    fn handle(&mut self, env: Envelope, pending: Option<&str>) -> Step<Option<ApprovalState>> {
        let Envelope { command, reply } = env;
        let ctx = GateContext { terminal: self.activity.phase == Phase::Terminal, pending_approval: pending };
        let decision = apply_command(&command, &self.levels, ctx);
        let safety = decision.accepted && command.kind == CommandKind::Halt;
        self.log.emit(
            "gate",
            json!({"command": command, "decision": decision, "safety_override": safety}),
        );
        if let Some(tx) = reply {
            let _ = tx.send(decision.clone());
        }
        if !decision.accepted {
            return Ok(None);
        }
        match command.kind {
            CommandKind::Halt => Err(Stop::Outcome(ActivityOutcome::failed(
                OutcomeStatus::Halted,
                format!("halted by user command ({})", decision.reason),
            ))),
            CommandKind::Approve { .. } => Ok(Some(ApprovalState::Approved)),
            CommandKind::Deny { .. } => Ok(Some(ApprovalState::Denied)),
            CommandKind::Reprioritize { task, priority } => {
                match self.activity.task_mut(&task).filter(|t| !t.status.is_finished()) {
                    Some(t) => t.priority = priority,
                    None => self.notice(format!("reprioritize: task {task} is not pending")),
                }
                Ok(None)
            }
            CommandKind::AdjustConstraint { aspect, key, value } => {
                self.adjust(aspect, &key, &value);
                Ok(None)
            }
            CommandKind::InjectTask { description, priority } => {
                let id = self.activity.next_task_id();
                self.activity.insert_task(Task::new(id.0.clone(), description, priority))?;
                self.notice(format!("task {id} injected by user"));
                Ok(None)
            }
        }
    }

    fn adjust(&mut self, aspect: AspectId, key: &str, value: &str) {
        self.activity.activity_memory.insert(format!("constraint.{}.{key}", aspect.key()), value.to_string());
        let applied = if let Some(agent) = key.strip_prefix("role.") {
            match self.activity.agent_mut(&AgentId::from(agent)) {
                Some(a) => {
                    a.spec.role_text = value.to_string();
                    true
                }
                None => false,
            }
        } else if let Some(cap) = key.strip_prefix("routing.") {
            self.policies.routing.insert(cap.to_string(), value.to_string());
            true
        } else if let Some(pref) = key.strip_prefix("preference.") {
            self.activity.goal.preferences.insert(pref.to_string(), value.to_string());
            true
        } else {
            match key {
                "delimiter" if !value.is_empty() => {
                    self.policies.delimiter = value.to_string();
                    true
                }
                "done_marker" => {
                    self.policies.done_marker = value.to_string();
                    true
                }
                "max_tasks" => value.parse().map(|n| self.policies.max_tasks = Some(n)).is_ok(),
                "max_depth" => value.parse().map(|n| self.policies.max_depth = n).is_ok(),
                _ => false,
            }
        };
        if !applied {
            self.notice(format!("constraint {key} stored in activity memory only"));
        }
    }

    /// Opens approval points for `at`; false when any is denied or expires.
    fn juncture(&mut self, at: JunctureKind, preview: Action) -> Step<bool> {
        let aspects: Vec<AspectId> = self
            .policies
            .junctures
            .iter()
            .filter(|j| j.at == at)
            .map(|j| j.aspect)
            .filter(|a| self.al(*a) == AlignmentLevel::RealTimeResponsive)
            .collect();
        for aspect in aspects {
            let id = format!("ap{}", self.approvals.len() + 1);
            let point = ApprovalPoint {
                id: id.clone(),
                action_preview: preview.clone(),
                aspect,
                created_at: self.log.last_seq() + 1,
                state: ApprovalState::Pending,
            };
            self.log.emit("approval", &point);
            self.approvals.push(point);
            let ordinal = self.approvals.len();
            let timeout = self.policies.approval_timeout_ms.map(Duration::from_millis);
            let state = loop {
                match self.source.next_for_approval(ordinal, timeout) {
                    None => break ApprovalState::Expired,
                    Some(env) => {
                        if let Some(s) = self.handle(env, Some(&id))? {
                            break s;
                        }
                    }
                }
            };
            let p = self.approvals.last_mut().expect("just pushed");
            p.resolve(state);
            let snapshot = p.clone();
            self.log.emit("approval", &snapshot);
            if state != ApprovalState::Approved {
                return Ok(false);
            }
        }
        Ok(true)
    }

    // ---- log ----

    /// Appends an action, then runs the guards and drains pending commands.
    fn append(&mut self, action: Action) -> Step<u64> {
        if self.activity.phase == Phase::Orchestration {
            self.protocol.record(action.kind)?;
        }
        let seq = self.activity.append_action(action)?;
        let recorded = self.activity.action_log.last().expect("appended").clone();
        self.log.emit("action", json!({"action": recorded}));
        if let Some(o) = self.guard.check(&self.activity, self.protocol.cycles()) {
            self.log.emit("guard", json!({"status": o.status, "detail": o.detail}));
            return Err(Stop::Outcome(o));
        }
        self.drain_commands()?;
        Ok(seq)
    }

    fn transition(&mut self, to: Phase) -> Step<()> {
        let from = self.activity.phase;
        let actor = self.coordinator();
        let preview = Action::new(ActionKind::DelegateTask, &actor, from).summary(format!("enter {to:?}"));
        if !self.juncture(JunctureKind::BeforePhaseTransition, preview)? {
            return Err(Stop::Outcome(ActivityOutcome::failed(
                OutcomeStatus::Halted,
                format!("transition to {to:?} was not approved"),
            )));
        }
        self.activity.phase = to;
        self.log.emit("phase", json!({"from": from, "to": to}));
        self.drain_commands()
    }

    // ---- agents, prompts, memory ----

    fn coordinator(&self) -> AgentId {
        match self.protocol.config() {
            ProtocolConfig::DialogueCycle { instructor, .. } => instructor.clone(),
            ProtocolConfig::MultiCycle { prioritization, .. } => prioritization.clone(),
            ProtocolConfig::StrictFinite { stages } => stages[0].agent.clone(),
        }
    }

    fn decomposer(&self) -> AgentId {
        match self.protocol.config() {
            ProtocolConfig::DialogueCycle { instructor, .. } => instructor.clone(),
            ProtocolConfig::MultiCycle { creation, .. } => creation.clone(),
            ProtocolConfig::StrictFinite { stages } => stages[0].agent.clone(),
        }
    }

    fn agent_type(&self, id: &AgentId) -> AgentType {
        self.activity.agent(id).map_or(AgentType::TaskExecution, |a| a.spec.agent_type)
    }

    fn template_for(&self, kind: Option<ActionKind>) -> Option<PromptTemplate> {
        let serves = |t: &PromptTemplate| kind.is_some_and(|k| t.action_kinds.is_empty() || t.action_kinds.contains(&k));
        let fixed = || self.policies.templates.iter().find(|t| serves(t)).cloned();
        match self.au(AspectId::PrEng) {
            AutonomyLevel::Static => fixed(),
            AutonomyLevel::Adaptive => kind.and_then(|k| self.selected_templates.get(&k).cloned()).or_else(fixed),
            AutonomyLevel::SelfOrganizing => self.authored_template.clone().or_else(fixed),
        }
    }

    fn build_prompt(
        &mut self,
        agent: &AgentId,
        kind: Option<ActionKind>,
        base: &str,
        context: Option<&str>,
        task: Option<&TaskId>,
    ) -> Step<PromptRecord> {
        let state = self.activity.agent(agent);
        let role = state.map(|a| a.spec.role_text.clone()).unwrap_or_default();
        let memory = state.and_then(|a| a.memory.excerpt(self.policies.memory_excerpt_entries));
        let mut ctx_lines: Vec<String> = Vec::new();
        if !self.activity.goal.preferences.is_empty() {
            let prefs = self.activity.goal.preferences.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>();
            ctx_lines.push(format!("preferences: {}", prefs.join(", ")));
        }
        if let Some(c) = context.filter(|c| !c.is_empty()) {
            ctx_lines.push(c.to_string());
        }
        let context_info = ctx_lines.join("\n");
        let task_text = task.and_then(|t| self.activity.task(t)).map(|t| t.description.clone()).unwrap_or_default();
        let bindings: BTreeMap<String, String> = [
            ("goal", self.activity.goal.text.clone()),
            ("task", task_text),
            ("agent", agent.0.clone()),
            ("role", role.clone()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let template = self.template_for(kind);
        let mut extra = Augmentation {
            role: Some(role.as_str()),
            memory_excerpt: memory.as_deref(),
            context_info: Some(context_info.as_str()),
            template: template.as_ref(),
            bindings,
        };
        match augment_prompt(base, &extra) {
            Ok(r) => Ok(r),
            Err(BackendError::UnboundPlaceholder(p)) => {
                let level = self.au(AspectId::PrEng);
                self.log.emit(
                    "degraded",
                    json!({"aspect": AspectId::PrEng, "level": level,
                           "reason": format!("template placeholder `{p}` has no binding"), "fallback": "no template"}),
                );
                extra.template = None;
                Ok(augment_prompt(base, &extra)?)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Builds the prompt for `agent` and asks the backend.
    fn ask(
        &mut self,
        agent: &AgentId,
        kind: Option<ActionKind>,
        purpose: &str,
        base: &str,
        context: Option<&str>,
        task: Option<&TaskId>,
    ) -> Step<PromptRecord> {
        let mut record = self.build_prompt(agent, kind, base, context, task)?;
        let mut ctx = CallContext::new(purpose).agent(self.agent_type(agent));
        if let Some(k) = kind {
            ctx = ctx.action(k);
        }
        let response = self.backend.complete(&ctx, &record)?;
        record.response = Some(response);
        Ok(record)
    }

    fn remember(&mut self, agent: &AgentId, role: &str, text: String) -> Step<()> {
        let Some(state) = self.activity.agent_mut(agent) else { return Ok(()) };
        let policy = state.spec.memory_policy;
        let mut folded = None;
        state.memory.record(&policy, MemoryEntry::new(role, text), |es| {
            folded = Some(es.to_vec());
            String::new()
        });
        let Some(entries) = folded else { return Ok(()) };
        let summary = match self.au(AspectId::MemU) {
            AutonomyLevel::Static => truncation_summary(&entries),
            _ => {
                let listing = entries.iter().map(|e| format!("[{}] {}", e.role, e.text)).collect::<Vec<_>>().join("\n");
                let r = self.ask(agent, None, "summarize", "Summarize these memory entries in one line.", Some(&listing), None)?;
                let text = r.response.unwrap_or_default().trim().to_string();
                if text.is_empty() {
                    self.degrade(AspectId::MemU, "empty summary");
                    truncation_summary(&entries)
                } else {
                    text
                }
            }
        };
        if let Some(state) = self.activity.agent_mut(agent) {
            state.memory.short_term[0].text = summary;
        }
        self.log.emit("memory", json!({"agent": agent, "folded": entries.len()}));
        Ok(())
    }

    // ---- network ----

    fn link_key(a: &AgentId, b: &AgentId) -> (AgentId, AgentId) {
        if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) }
    }

    fn init_links(&mut self) {
        let proto: Vec<AgentId> = self.protocol.config().agents().into_iter().cloned().collect();
        for (i, a) in proto.iter().enumerate() {
            for b in &proto[i + 1..] {
                if a != b {
                    self.links.insert(Self::link_key(a, b));
                }
            }
        }
        let peers: Vec<(AgentId, AgentId)> = self
            .activity
            .agents
            .iter()
            .flat_map(|a| a.spec.peers.iter().map(|p| (a.spec.id.clone(), p.clone())))
            .collect();
        for (a, b) in peers {
            self.links.insert(Self::link_key(&a, &b));
        }
    }

    fn adjacent(&self, a: &AgentId, b: &AgentId) -> bool {
        a == b || self.links.contains(&Self::link_key(a, b))
    }

    fn degree(&self, a: &AgentId) -> usize {
        self.links.iter().filter(|(x, y)| x == a || y == a).count()
    }

    fn try_link(&mut self, a: &AgentId, b: &AgentId) -> bool {
        if self.adjacent(a, b) {
            return true;
        }
        let max = self.policies.max_degree;
        if self.degree(a) >= max || self.degree(b) >= max {
            return false;
        }
        self.links.insert(Self::link_key(a, b));
        self.log.emit("network", json!({"link": [a, b]}));
        true
    }

    // ---- set-up mechanisms of the composition and collaboration aspects ----

    fn setup(&mut self) -> Step<()> {
        self.setup_protocol()?;
        self.setup_roles()?;
        self.setup_agents()?;
        self.setup_network()?;
        self.setup_prompts()
    }

    fn setup_protocol(&mut self) -> Step<()> {
        let coord = self.coordinator();
        let roster: Vec<AgentId> = self.activity.agents.iter().map(|a| a.spec.id.clone()).collect();
        match self.au(AspectId::CommP) {
            AutonomyLevel::Static => Ok(()),
            AutonomyLevel::Adaptive => {
                let menu = self.policies.protocol_menu.clone();
                if menu.is_empty() {
                    self.policy(AspectId::CommP, "no protocol menu configured; scenario protocol kept");
                    return Ok(());
                }
                let listing = menu.iter().enumerate().map(|(i, p)| format!("{}. {}", i + 1, p.name())).collect::<Vec<_>>();
                let r = self.ask(&coord, None, "select_protocol", "Choose a protocol. Answer PROTOCOL: <number>.", Some(&listing.join("\n")), None)?;
                let choice = parse::directive(r.response.as_deref().unwrap_or(""), "protocol")
                    .and_then(|v| v.parse::<usize>().ok())
                    .and_then(|n| n.checked_sub(1))
                    .and_then(|i| menu.get(i).cloned());
                match choice {
                    Some(p) => {
                        self.policy(AspectId::CommP, format!("protocol {} selected from menu", p.name()));
                        self.protocol = ProtocolState::new(p);
                    }
                    None => self.degrade(AspectId::CommP, "no valid menu choice"),
                }
                Ok(())
            }
            AutonomyLevel::SelfOrganizing => {
                let r = self.ask(&coord, None, "design_protocol", "Design the interaction protocol. Answer PROTOCOL: <json>.", None, None)?;
                let parsed = parse::directive(r.response.as_deref().unwrap_or(""), "protocol")
                    .and_then(|v| serde_json::from_str::<ProtocolConfig>(v).ok());
                let ids: BTreeSet<&AgentId> = roster.iter().collect();
                match parsed.map(|p| p.check(&ids).map(|_| p)) {
                    Some(Ok(p)) => {
                        self.policy(AspectId::CommP, format!("agent-designed protocol {}", p.name()));
                        self.protocol = ProtocolState::new(p);
                    }
                    Some(Err(e)) => self.degrade(AspectId::CommP, e),
                    None => self.degrade(AspectId::CommP, "no parseable protocol"),
                }
                Ok(())
            }
        }
    }

    fn setup_roles(&mut self) -> Step<()> {
        let level = self.au(AspectId::RoleD);
        if level == AutonomyLevel::Static {
            return Ok(());
        }
        let coord = self.coordinator();
        let listing = self
            .activity
            .agents
            .iter()
            .map(|a| format!("{}: {}", a.spec.id, a.spec.role_text))
            .collect::<Vec<_>>()
            .join("\n");
        let r = self.ask(&coord, None, "define_roles", "Define agent roles. Answer ROLE: <agent> <text> lines.", Some(&listing), None)?;
        let text = r.response.unwrap_or_default();
        let mut applied = 0;
        for line in parse::directives(&text, "role") {
            let Some((id, role)) = line.split_once(char::is_whitespace) else { continue };
            let Some(agent) = self.activity.agent_mut(&AgentId::from(id)) else {
                self.notice(format!("role for unknown agent {id} ignored"));
                continue;
            };
            if level == AutonomyLevel::Adaptive && !agent.spec.role_text.is_empty() {
                agent.spec.role_text = format!("{}\n{}", agent.spec.role_text, role.trim());
            } else {
                agent.spec.role_text = role.trim().to_string();
            }
            applied += 1;
        }
        if applied == 0 {
            self.degrade(AspectId::RoleD, "no parseable role definitions");
        } else {
            self.policy(AspectId::RoleD, format!("{applied} roles defined"));
        }
        Ok(())
    }

    fn add_agent(&mut self, spec: AgentSpec) -> bool {
        if self.activity.agents.len() >= self.policies.max_agents || self.activity.agent(&spec.id).is_some() {
            return false;
        }
        let coord = self.coordinator();
        let id = spec.id.clone();
        self.activity.agents.push(crate::ontology::AgentState { spec, memory: Default::default() });
        self.links.insert(Self::link_key(&coord, &id));
        self.log.emit("agent", json!({"agent": id}));
        true
    }

    fn setup_agents(&mut self) -> Step<()> {
        let level = self.au(AspectId::AGen);
        if level == AutonomyLevel::Static {
            return Ok(());
        }
        let coord = self.coordinator();
        let text = if level == AutonomyLevel::Adaptive {
            let listing = self.activity.agents.iter().map(|a| a.spec.id.0.clone()).collect::<Vec<_>>().join(", ");
            self.ask(&coord, None, "spawn_agents", "Instantiate agents from the roster. Answer SPAWN: <agent> lines.", Some(&listing), None)?
        } else {
            self.ask(&coord, None, "spawn_agents", "Define the agents you need. Answer AGENT: <id> TYPE: <type> ROLE: <text> TOOLS: <caps> lines.", None, None)?
        }
        .response
        .unwrap_or_default();
        let mut added = 0;
        if level == AutonomyLevel::Adaptive {
            for origin in parse::directives(&text, "spawn") {
                let Some(base) = self.activity.agent(&AgentId::from(origin)).map(|a| a.spec.clone()) else { continue };
                let n = self.activity.agents.iter().filter(|a| a.spec.id.0.starts_with(&format!("{origin}-"))).count();
                let mut spec = base;
                spec.id = AgentId(format!("{origin}-{}", n + 1));
                if self.add_agent(spec) {
                    added += 1;
                }
            }
        } else {
            let integ = self.au(AspectId::Integ);
            for def in parse::agent_definitions(&text) {
                let agent_type = def
                    .agent_type
                    .as_deref()
                    .and_then(|t| serde_json::from_value(json!(t)).ok())
                    .unwrap_or(AgentType::TaskExecution);
                let mut spec = AgentSpec::new(&def.id, agent_type);
                spec.role_text = if def.role.is_empty() { format!("{} agent", def.id) } else { def.role };
                spec.tool_grants = def
                    .tools
                    .into_iter()
                    .filter(|cap| !self.registry.candidates(cap, integ).is_empty())
                    .collect();
                if self.add_agent(spec) {
                    added += 1;
                }
            }
        }
        if added == 0 {
            self.degrade(AspectId::AGen, "no agents instantiated; roster kept");
        } else {
            self.policy(AspectId::AGen, format!("{added} agents instantiated"));
        }
        Ok(())
    }

    fn setup_network(&mut self) -> Step<()> {
        if self.au(AspectId::NetM) != AutonomyLevel::SelfOrganizing {
            return Ok(());
        }
        let coord = self.coordinator();
        let r = self.ask(&coord, None, "network", "Shape the agent network. Answer CONNECT: a-b lines.", None, None)?;
        let pairs = parse::connections(r.response.as_deref().unwrap_or(""));
        let mut added = 0;
        for (a, b) in pairs {
            if a != b && self.activity.agent(&a).is_some() && self.activity.agent(&b).is_some() && self.try_link(&a, &b) {
                added += 1;
            }
        }
        if added == 0 {
            self.degrade(AspectId::NetM, "no valid links proposed");
        } else {
            self.policy(AspectId::NetM, format!("{added} links established"));
        }
        Ok(())
    }

    fn setup_prompts(&mut self) -> Step<()> {
        let coord = self.coordinator();
        match self.au(AspectId::PrEng) {
            AutonomyLevel::Static => Ok(()),
            AutonomyLevel::Adaptive => {
                if self.policies.templates.is_empty() {
                    self.policy(AspectId::PrEng, "no template library configured");
                    return Ok(());
                }
                let listing = self.policies.templates.iter().map(|t| t.id.clone()).collect::<Vec<_>>().join(", ");
                let r = self.ask(&coord, None, "select_template", "Choose prompt templates. Answer TEMPLATE: <id> lines.", Some(&listing), None)?;
                let text = r.response.unwrap_or_default();
                for id in parse::directives(&text, "template") {
                    if let Some(t) = self.policies.templates.iter().find(|t| t.id == id).cloned() {
                        for k in &t.action_kinds {
                            self.selected_templates.insert(*k, t.clone());
                        }
                    }
                }
                if self.selected_templates.is_empty() {
                    self.degrade(AspectId::PrEng, "no known template chosen");
                } else {
                    self.policy(AspectId::PrEng, format!("{} action kinds use selected templates", self.selected_templates.len()));
                }
                Ok(())
            }
            AutonomyLevel::SelfOrganizing => {
                let r = self.ask(&coord, None, "write_prompt", "Write the prompt preamble agents should use. Answer PROMPT: <text>.", None, None)?;
                let body = parse::directive(r.response.as_deref().unwrap_or(""), "prompt").map(str::to_string);
                match body.map(|b| PromptTemplate::new("agent-authored", &b, []).normalized()) {
                    Some(Ok(t)) => {
                        self.authored_template = Some(t);
                        self.policy(AspectId::PrEng, "agent-authored prompt preamble in use");
                    }
                    _ => self.degrade(AspectId::PrEng, "no parseable prompt"),
                }
                Ok(())
            }
        }
    }

    // ---- decomposition ----

    fn decompose(&mut self) -> Step<()> {
        let agent = self.decomposer();
        let goal = self.activity.goal.text.clone();
        let rule = |e: &Engine| split_goal(&goal, &e.policies.delimiter);
        let (mut descs, prompt) = match self.au(AspectId::Decom) {
            AutonomyLevel::Static => (rule(self), None),
            AutonomyLevel::Adaptive => {
                if self.policies.strategies.is_empty() {
                    self.degrade(AspectId::Decom, "no decomposition strategies configured");
                    (rule(self), None)
                } else {
                    let listing = self.policies.strategies.iter().map(|s| s.name.clone()).collect::<Vec<_>>().join(", ");
                    let r = self.ask(&agent, Some(ActionKind::DecomposeTask), "select_strategy",
                        "Choose a decomposition strategy. Answer STRATEGY: <name>.", Some(&listing), None)?;
                    let name = parse::directive(r.response.as_deref().unwrap_or(""), "strategy").map(str::to_string);
                    match name.and_then(|n| self.policies.strategies.iter().find(|s| s.name == n).cloned()) {
                        Some(s) => {
                            self.policy(AspectId::Decom, format!("strategy {} applied", s.name));
                            (hierarchical_split(&goal, &s.delimiters, self.policies.max_depth), Some(r))
                        }
                        None => {
                            self.degrade(AspectId::Decom, "no known strategy chosen");
                            (rule(self), Some(r))
                        }
                    }
                }
            }
            AutonomyLevel::SelfOrganizing => {
                let r = self.ask(&agent, Some(ActionKind::DecomposeTask), "decompose",
                    &format!("Decompose the goal into tasks, as a numbered list.\nGoal: {goal}"), None, None)?;
                let text = r.response.clone().unwrap_or_default();
                if text.trim().is_empty() {
                    return Err(EngineError::EmptyDecomposition.into());
                }
                let items = parse::numbered_list(&text);
                if items.is_empty() {
                    self.degrade(AspectId::Decom, "response is not a numbered list");
                    (rule(self), Some(r))
                } else {
                    (items, Some(r))
                }
            }
        };
        if let Some(max) = self.policies.max_tasks {
            descs.truncate(max);
        }
        if descs.is_empty() {
            return Err(EngineError::EmptyDecomposition.into());
        }
        let summary = format!("{} tasks", descs.len());
        let parent = self.append(Action::new(ActionKind::DecomposeTask, &agent, Phase::Decomposition).prompt(prompt).summary(summary))?;
        for (i, d) in descs.into_iter().enumerate() {
            let id = self.activity.next_task_id();
            self.activity.insert_task(Task::new(id.0.clone(), d.clone(), i as u32))?;
            let mut a = Action::new(ActionKind::CreateTask, &agent, Phase::Decomposition).task(&id).summary(d);
            a.parent_action = Some(parent);
            self.append(a)?;
        }
        let n = self.activity.tasks.len();
        self.remember(&agent, "decomposition", format!("goal split into {n} tasks"))?;
        Ok(())
    }

    // ---- orchestration ----

    fn ready_tasks(&self) -> Vec<TaskId> {
        self.activity
            .tasks
            .iter()
            .filter(|t| t.status == TaskStatus::Pending && self.activity.dependencies_satisfied(t))
            .map(|t| t.id.clone())
            .collect()
    }

    /// Next task and an optional agent override chosen by the orchestration mechanism.
    fn next_task(&mut self) -> Step<Option<(TaskId, Option<AgentId>)>> {
        if self.activity.pending_tasks().next().is_none() {
            return Ok(None);
        }
        let ready = self.ready_tasks();
        if ready.is_empty() {
            return Err(EngineError::DeadlockedTasks.into());
        }
        let coord = self.coordinator();
        let listing = ready
            .iter()
            .filter_map(|id| self.activity.task(id))
            .map(|t| format!("{} (priority {}): {}", t.id, t.priority, t.description))
            .collect::<Vec<_>>()
            .join("\n");
        match self.au(AspectId::Orch) {
            AutonomyLevel::Static => {}
            AutonomyLevel::Adaptive if ready.len() >= 2 => {
                let r = self.ask(&coord, None, "prioritize", "Reprioritize the pending tasks. Answer ORDER: <ids>.", Some(&listing), None)?;
                let order: Vec<TaskId> = parse::directive(r.response.as_deref().unwrap_or(""), "order")
                    .map(parse::id_list)
                    .unwrap_or_default()
                    .into_iter()
                    .map(TaskId)
                    .filter(|id| ready.contains(id))
                    .collect();
                if order.is_empty() {
                    self.degrade(AspectId::Orch, "no parseable order");
                } else {
                    let mut rest: Vec<(u32, usize, TaskId)> = self
                        .activity
                        .tasks
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| !t.status.is_finished() && !order.contains(&t.id))
                        .map(|(i, t)| (t.priority, i, t.id.clone()))
                        .collect();
                    rest.sort();
                    let sequence: Vec<TaskId> = order.iter().cloned().chain(rest.into_iter().map(|(_, _, id)| id)).collect();
                    for (p, id) in sequence.iter().enumerate() {
                        if let Some(t) = self.activity.task_mut(id) {
                            t.priority = p as u32;
                        }
                    }
                    let ids = order.iter().map(|t| t.0.as_str()).collect::<Vec<_>>().join(", ");
                    self.policy(AspectId::Orch, format!("tasks reprioritized: {ids}"));
                }
            }
            AutonomyLevel::Adaptive => {}
            AutonomyLevel::SelfOrganizing => {
                let agents = self.activity.agents.iter().map(|a| a.spec.id.0.clone()).collect::<Vec<_>>().join(", ");
                let ctx = format!("{listing}\nagents: {agents}");
                let r = self.ask(&coord, None, "assign", "Pick the next task and agent. Answer TASK:<id> AGENT:<id>.", Some(&ctx), None)?;
                match parse::assignment(r.response.as_deref().unwrap_or("")) {
                    None => self.degrade(AspectId::Orch, "no parseable assignment"),
                    Some((task, _)) if !ready.contains(&task) => {
                        self.degrade(AspectId::Orch, format!("task {task} is not ready"))
                    }
                    Some((_, agent)) if self.activity.agent(&agent).is_none() => {
                        self.degrade(AspectId::Orch, format!("agent {agent} does not exist"))
                    }
                    Some((task, agent)) => {
                        if self.adjacent(&coord, &agent) {
                            self.policy(AspectId::Orch, format!("task {task} assigned to {agent}"));
                            return Ok(Some((task, Some(agent))));
                        }
                        if self.au(AspectId::NetM) == AutonomyLevel::Static {
                            self.degrade(
                                AspectId::Orch,
                                format!("agent {agent} is not adjacent to {coord}; network is fixed at NetM L0"),
                            );
                        } else if self.try_link(&coord, &agent) {
                            self.policy(AspectId::Orch, format!("task {task} assigned to {agent} over a new link"));
                            return Ok(Some((task, Some(agent))));
                        } else {
                            self.degrade(AspectId::Orch, format!("agent {agent} unreachable within max_degree"));
                        }
                    }
                }
            }
        }
        Ok(next_ready_task(&self.activity)?.map(|t| (t, None)))
    }

    fn orchestrate(&mut self) -> Step<()> {
        while let Some((task, agent)) = self.next_task()? {
            match self.protocol.config().clone() {
                ProtocolConfig::StrictFinite { stages } => {
                    if agent.is_some() {
                        self.notice("assignment ignored: the strict chain fixes its agents");
                    }
                    self.run_strict(&task, &stages)?;
                }
                ProtocolConfig::DialogueCycle { instructor, executor, max_cycles } => {
                    self.run_dialogue(&task, &instructor, &agent.unwrap_or(executor), max_cycles)?;
                }
                ProtocolConfig::MultiCycle { creation, prioritization, execution } => {
                    self.run_multi(&task, &prioritization, &agent.unwrap_or(execution))?;
                    if self.activity.mid_run_task_creation {
                        self.create_tasks(&creation, &task)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn set_status(&mut self, task: &TaskId, status: TaskStatus, assignee: Option<&AgentId>) {
        if let Some(t) = self.activity.task_mut(task) {
            t.status = status;
            if let Some(a) = assignee {
                t.assignee = Some(a.clone());
            }
        }
    }

    fn complete_task(&mut self, task: &TaskId, status: TaskStatus, payload: String, artefacts: Vec<Artefact>, evaluation: Option<Evaluation>) {
        if let Some(t) = self.activity.task_mut(task) {
            t.status = status;
            t.result = Some(TaskResult { task: task.clone(), payload, artefacts, evaluation });
        }
        self.log.emit("task", json!({"task": task, "status": status}));
    }

    fn delegate(&mut self, from: &AgentId, to: &AgentId, task: &TaskId, summary: String) -> Step<u64> {
        self.set_status(task, TaskStatus::Assigned, Some(to));
        let seq = self.append(Action::new(ActionKind::DelegateTask, from, Phase::Orchestration).receiver(to).task(task).summary(summary))?;
        let desc = self.activity.task(task).map(|t| t.description.clone()).unwrap_or_default();
        self.remember(to, "instruction", format!("{task}: {desc}"))?;
        Ok(seq)
    }

    fn run_dialogue(&mut self, task: &TaskId, instructor: &AgentId, executor: &AgentId, max_cycles: u32) -> Step<()> {
        for cycle in 1..=max_cycles {
            let d = self.delegate(instructor, executor, task, format!("cycle {cycle}"))?;
            let Some(ex) = self.execute(task, executor, Some(d), None)? else {
                self.complete_task(task, TaskStatus::Failed, String::new(), Vec::new(), None);
                return Ok(());
            };
            let (verdict, eval, _) = self.evaluate(task, instructor, &ex.payload, Rule::DoneMarker, false, ex.action)?;
            if verdict == Verdict::Accepted {
                self.complete_task(task, TaskStatus::Done, ex.payload, ex.artefacts, eval);
                return Ok(());
            }
        }
        self.notice(format!("task {task} failed: dialogue reached max_cycles {max_cycles}"));
        self.complete_task(task, TaskStatus::Failed, String::new(), Vec::new(), None);
        Ok(())
    }

    fn run_multi(&mut self, task: &TaskId, prioritizer: &AgentId, executor: &AgentId) -> Step<()> {
        let d = self.delegate(prioritizer, executor, task, "next task".to_string())?;
        let mut executor = executor.clone();
        let mut redo_used = false;
        loop {
            let Some(ex) = self.execute(task, &executor, Some(d), None)? else {
                self.complete_task(task, TaskStatus::Failed, String::new(), Vec::new(), None);
                return Ok(());
            };
            let (verdict, eval, reassign) = self.evaluate(task, prioritizer, &ex.payload, Rule::NonEmpty, false, ex.action)?;
            match (verdict, self.au(AspectId::ActM)) {
                (Verdict::Accepted, _) => {
                    self.complete_task(task, TaskStatus::Done, ex.payload, ex.artefacts, eval);
                    return Ok(());
                }
                (Verdict::Rejected, AutonomyLevel::Static) => {
                    self.complete_task(task, TaskStatus::Failed, ex.payload, ex.artefacts, eval);
                    return Ok(());
                }
                (Verdict::Rejected, AutonomyLevel::Adaptive) if redo_used => {
                    self.complete_task(task, TaskStatus::Failed, ex.payload, ex.artefacts, eval);
                    return Ok(());
                }
                (Verdict::Rejected, AutonomyLevel::Adaptive) => {
                    redo_used = true;
                    self.policy(AspectId::ActM, format!("task {task} rejected; one redo"));
                }
                (Verdict::Rejected, AutonomyLevel::SelfOrganizing) => {
                    if let Some(a) = reassign {
                        self.policy(AspectId::ActM, format!("task {task} reassigned to {a}"));
                        executor = a;
                    } else {
                        self.policy(AspectId::ActM, format!("task {task} rejected; redo"));
                    }
                }
            }
        }
    }

    fn create_tasks(&mut self, creator: &AgentId, after: &TaskId) -> Step<()> {
        let result = self.activity.task(after).map(|t| payload(t).to_string()).unwrap_or_default();
        let r = self.ask(creator, Some(ActionKind::CreateTask), "create_tasks",
            "List new tasks needed to reach the goal as a numbered list, or answer NONE.", Some(&format!("last result: {result}")), None)?;
        let items = parse::numbered_list(r.response.as_deref().unwrap_or(""));
        let mut prompt = Some(r);
        let first_priority = self.activity.tasks.iter().map(|t| t.priority).max().map_or(0, |p| p + 1);
        for (d, priority) in items.into_iter().zip(first_priority..) {
            if self.policies.max_tasks.is_some_and(|m| self.activity.tasks.len() >= m) {
                self.notice("max_tasks reached; further task creation skipped");
                break;
            }
            let id = self.activity.next_task_id();
            let mut t = Task::new(id.0.clone(), d.clone(), priority);
            t.parent = Some(after.clone());
            self.activity.insert_task(t)?;
            self.append(Action::new(ActionKind::CreateTask, creator, Phase::Orchestration).task(&id).prompt(prompt.take()).summary(d))?;
        }
        Ok(())
    }

    fn run_strict(&mut self, task: &TaskId, stages: &[scenario::Stage]) -> Step<()> {
        self.protocol.restart_pass();
        let mut last: Option<Executed> = None;
        let mut upstream: Option<String> = None;
        let mut artefacts = Vec::new();
        let mut evaluation = None;
        let mut parent = None;
        for (i, stage) in stages.iter().enumerate() {
            match stage.action {
                ActionKind::DelegateTask => {
                    let to = stages[i + 1..]
                        .iter()
                        .find(|s| s.agent != stage.agent)
                        .map_or_else(|| stage.agent.clone(), |s| s.agent.clone());
                    parent = Some(self.delegate(&stage.agent, &to, task, format!("hand over to {to}"))?);
                }
                ActionKind::ExecuteTask => {
                    let Some(mut ex) = self.execute(task, &stage.agent, parent, upstream.as_deref())? else {
                        self.complete_task(task, TaskStatus::Failed, String::new(), artefacts, None);
                        return Ok(());
                    };
                    let name = if stage.artefact.is_empty() { format!("{}-output", stage.agent) } else { stage.artefact.clone() };
                    artefacts.append(&mut ex.artefacts);
                    artefacts.push(Artefact { kind: ArtefactKind::Text, name: name.clone(), payload: ex.payload.clone(), produced_by: ex.action });
                    upstream = Some(format!("{name}: {}", ex.payload));
                    parent = Some(ex.action);
                    last = Some(ex);
                }
                _ => {
                    let text = last.as_ref().map(|e| e.payload.clone()).unwrap_or_default();
                    let (verdict, eval, _) = self.evaluate(task, &stage.agent, &text, Rule::NonEmpty, true, parent.unwrap_or(0))?;
                    evaluation = eval;
                    if verdict == Verdict::Rejected {
                        self.complete_task(task, TaskStatus::Failed, text, artefacts, evaluation);
                        return Ok(());
                    }
                }
            }
        }
        let payload = last.map(|e| e.payload).unwrap_or_default();
        let status = if payload.trim().is_empty() { TaskStatus::Failed } else { TaskStatus::Done };
        self.complete_task(task, status, payload, artefacts, evaluation);
        Ok(())
    }

    // ---- execution, utilization and integration ----

    fn dead_end(&self, task: &TaskId, cap: &str) -> Stop {
        let level = self.au(AspectId::Integ);
        Stop::Outcome(ActivityOutcome::failed(
            OutcomeStatus::DeadEnd,
            format!("no resource provides capability `{cap}` at Integ {level}; task {task} left incomplete"),
        ))
    }

    /// Resources to invoke for `task`, bound and activated.
    fn plan_resources(&mut self, task: &TaskId, agent: &AgentId) -> Step<Vec<(String, String)>> {
        let desc = self.activity.task(task).map(|t| t.description.clone()).unwrap_or_default();
        let reqs = capability_requests(&desc);
        if reqs.is_empty() {
            return Ok(Vec::new());
        }
        let integ = self.au(AspectId::Integ);
        for (cap, _) in &reqs {
            if self.registry.candidates(cap, integ).is_empty() {
                return Err(self.dead_end(task, cap));
            }
        }
        let rule = |e: &mut Engine| -> Step<Vec<(String, String)>> {
            let mut plan = Vec::new();
            for (cap, req) in &reqs {
                let routed = e.policies.routing.get(cap).cloned().filter(|id| {
                    e.registry.get(id).is_some_and(|d| d.capabilities.contains(cap))
                });
                let bound = match routed {
                    Some(id) => e.registry.bind(&id, integ).or_else(|_| e.registry.resolve(cap, integ)),
                    None => e.registry.resolve(cap, integ),
                };
                match bound {
                    Ok(d) => plan.push((d.id, req.clone())),
                    Err(RegistryError::ResourceUnavailable(_)) => return Err(e.dead_end(task, cap)),
                    Err(other) => return Err(EngineError::from(other).into()),
                }
            }
            Ok(plan)
        };
        match self.au(AspectId::Util) {
            AutonomyLevel::Static => rule(self),
            AutonomyLevel::Adaptive => {
                let mut plan = Vec::new();
                for (cap, req) in &reqs {
                    let cands = self.registry.candidates(cap, integ);
                    let r = self.ask(agent, None, "select_resource", &format!("Choose a resource for `{cap}`. Answer RESOURCE: <id>."),
                        Some(&format!("candidates: {}", cands.join(", "))), Some(task))?;
                    let pick = parse::directive(r.response.as_deref().unwrap_or(""), "resource")
                        .filter(|id| cands.iter().any(|c| c == id))
                        .map(str::to_string);
                    let id = match pick {
                        Some(id) => {
                            self.policy(AspectId::Util, format!("{id} selected for {cap}"));
                            id
                        }
                        None => {
                            self.degrade(AspectId::Util, format!("no valid resource chosen for {cap}"));
                            cands[0].clone()
                        }
                    };
                    let d = self.registry.bind(&id, integ).map_err(EngineError::from)?;
                    plan.push((d.id, req.clone()));
                }
                Ok(plan)
            }
            AutonomyLevel::SelfOrganizing => {
                let listing = reqs
                    .iter()
                    .map(|(cap, _)| format!("{cap}: {}", self.registry.candidates(cap, integ).join(", ")))
                    .collect::<Vec<_>>()
                    .join("\n");
                let r = self.ask(agent, None, "plan_resources", "Plan the resources to combine. Answer PLAN: <ids>.", Some(&listing), Some(task))?;
                let ids = parse::directive(r.response.as_deref().unwrap_or(""), "plan").map(parse::id_list).unwrap_or_default();
                let reachable = |e: &Engine, id: &str| {
                    e.registry.get(id).is_some_and(|d| reqs.iter().any(|(c, _)| e.registry.candidates(c, integ).iter().any(|x| x == id)) || d.state == crate::registry::ResourceState::Active)
                };
                let covers = reqs.iter().all(|(cap, _)| {
                    ids.iter().any(|id| self.registry.get(id).is_some_and(|d| d.capabilities.contains(cap)))
                });
                if ids.is_empty() || !covers || !ids.iter().all(|id| reachable(self, id)) {
                    self.degrade(AspectId::Util, "plan missing, unreachable or incomplete");
                    return rule(self);
                }
                let mut plan = Vec::new();
                for id in ids {
                    let d = self.registry.bind(&id, integ).map_err(EngineError::from)?;
                    let req = reqs
                        .iter()
                        .find(|(c, _)| d.capabilities.contains(c))
                        .map_or_else(|| desc.clone(), |(_, r)| r.clone());
                    plan.push((d.id, req));
                }
                self.policy(AspectId::Util, format!("plan: {}", plan.iter().map(|(i, _)| i.as_str()).collect::<Vec<_>>().join(", ")));
                Ok(plan)
            }
        }
    }

    /// Runs one ExecuteTask step. `None` when an approval point refused it.
    fn execute(&mut self, task: &TaskId, agent: &AgentId, parent: Option<u64>, upstream: Option<&str>) -> Step<Option<Executed>> {
        let plan = self.plan_resources(task, agent)?;
        let preview = Action::new(ActionKind::ExecuteTask, agent, Phase::Orchestration).task(task);
        let side_effects = plan.iter().any(|(id, _)| self.registry.get(id).is_some_and(|d| d.has_side_effects()));
        if side_effects && !self.juncture(JunctureKind::BeforeSideEffect, preview.clone())? {
            self.notice(format!("task {task}: side-effecting step not approved"));
            return Ok(None);
        }
        if !self.juncture(JunctureKind::BeforeExecute, preview)? {
            self.notice(format!("task {task}: execution not approved"));
            return Ok(None);
        }
        let produced_by = self.activity.action_log.last().map_or(1, |a| a.id + 1);
        let mut context = Vec::new();
        let mut artefacts = Vec::new();
        for (id, req) in plan {
            match self.registry.invoke(&id, &req) {
                Ok(inv) => {
                    self.log.emit("invocation", json!({"task": task, "invocation": inv}));
                    match &inv.result {
                        InvocationResult::Artefact(a) => {
                            let mut a = a.clone();
                            a.produced_by = produced_by;
                            context.push(format!("{id}: wrote {}", a.name));
                            artefacts.push(a);
                        }
                        InvocationResult::Text(t) => context.push(format!("{id}: {t}")),
                    }
                }
                Err(e) => {
                    self.log.emit("invocation", json!({"task": task, "resource": id, "error": e.to_string()}));
                    context.push(format!("{id} failed: {e}"));
                }
            }
        }
        if let Some(u) = upstream {
            context.push(u.to_string());
        }
        self.set_status(task, TaskStatus::Running, Some(agent));
        let desc = self.activity.task(task).map(|t| t.description.clone()).unwrap_or_default();
        let r = self.ask(agent, Some(ActionKind::ExecuteTask), "execute", &format!("Task {task}: {desc}"), Some(&context.join("\n")), Some(task))?;
        let payload = r.response.clone().unwrap_or_default();
        let first = payload.lines().next().unwrap_or("").chars().take(80).collect::<String>();
        let mut action = Action::new(ActionKind::ExecuteTask, agent, Phase::Orchestration).task(task).prompt(Some(r)).summary(first);
        action.parent_action = parent;
        let seq = self.append(action)?;
        self.remember(agent, "result", format!("{task}: {payload}"))?;
        if self.au(AspectId::MemU) == AutonomyLevel::SelfOrganizing {
            for (k, v) in parse::remembered(&payload) {
                let policy = self.activity.agent(agent).map(|a| a.spec.memory_policy).unwrap_or_default();
                let res = self.activity.agent_mut(agent).map(|a| a.memory.remember(&policy, &k, &v));
                if let Some(Err(n)) = res {
                    self.notice(n);
                }
            }
        }
        Ok(Some(Executed { payload, artefacts, action: seq }))
    }

    /// Judges a result. Records an EvaluateResult action when the backend
    /// evaluates, or when `record_rule` asks for the rule verdict to be logged.
    fn evaluate(
        &mut self,
        task: &TaskId,
        evaluator: &AgentId,
        payload: &str,
        rule: Rule,
        record_rule: bool,
        parent: u64,
    ) -> Step<(Verdict, Option<Evaluation>, Option<AgentId>)> {
        let by_rule = |marker: &str| {
            let ok = match rule {
                Rule::NonEmpty => !payload.trim().is_empty(),
                Rule::DoneMarker => !marker.is_empty() && payload.contains(marker),
            };
            if ok { Verdict::Accepted } else { Verdict::Rejected }
        };
        let marker = self.policies.done_marker.clone();
        let level = self.au(AspectId::ActM);
        if level == AutonomyLevel::Static {
            let verdict = by_rule(&marker);
            let evaluation = Evaluation { verdict, rationale: "rule".to_string() };
            if record_rule {
                let mut a = Action::new(ActionKind::EvaluateResult, evaluator, self.activity.phase)
                    .task(task)
                    .summary(format!("{verdict:?} by rule"));
                a.parent_action = Some(parent);
                self.append(a)?;
            }
            return Ok((verdict, Some(evaluation), None));
        }
        let r = self.ask(evaluator, Some(ActionKind::EvaluateResult), "evaluate",
            &format!("Evaluate the result of task {task}. Answer ACCEPT or REJECT."), Some(&format!("result: {payload}")), Some(task))?;
        let text = r.response.clone().unwrap_or_default();
        let (verdict, rationale) = match parse::verdict(&text, &marker) {
            Some(v) => (v, text.lines().next().unwrap_or("").trim().to_string()),
            None => {
                self.degrade(AspectId::ActM, "no parseable verdict");
                (by_rule(&marker), "rule".to_string())
            }
        };
        let reassign = if level == AutonomyLevel::SelfOrganizing && verdict == Verdict::Rejected {
            parse::directive(&text, "reassign").map(AgentId::from).filter(|a| self.activity.agent(a).is_some())
        } else {
            None
        };
        let mut a = Action::new(ActionKind::EvaluateResult, evaluator, self.activity.phase)
            .task(task)
            .prompt(Some(r))
            .summary(format!("{verdict:?}"));
        a.parent_action = Some(parent);
        self.append(a)?;
        self.remember(evaluator, "evaluation", format!("{task}: {verdict:?}"))?;
        Ok((verdict, Some(Evaluation { verdict, rationale }), reassign))
    }

    // ---- synthesis ----

    fn merge_with(&self, name: &str) -> Option<String> {
        let t = self.policies.merge_templates.iter().find(|t| t.name == name)?;
        let items = done_tasks(&self.activity)
            .into_iter()
            .map(|task| format!("{}{}", t.item_prefix, payload(task)))
            .collect::<Vec<_>>()
            .join(&t.separator);
        Some(if t.header.is_empty() { items } else { format!("{}\n{items}", t.header) })
    }

    fn synthesize(&mut self) -> Step<ActivityOutcome> {
        let (rule_total, _) = synthesize_rule(&self.activity)?;
        let merger = self.coordinator();
        let total = match self.au(AspectId::Synth) {
            AutonomyLevel::Static => {
                let n = done_tasks(&self.activity).len();
                self.append(Action::new(ActionKind::MergeResult, &merger, Phase::Synthesis).summary(format!("{n} results concatenated")))?;
                rule_total
            }
            AutonomyLevel::Adaptive => {
                let names = self.policies.merge_templates.iter().map(|t| t.name.clone()).collect::<Vec<_>>().join(", ");
                let mut total = rule_total.clone();
                for attempt in 1..=2 {
                    let r = self.ask(&merger, Some(ActionKind::MergeResult), "select_merge",
                        "Choose a merge template. Answer MERGE: <name>.", Some(&format!("templates: {names}")), None)?;
                    let merged = parse::directive(r.response.as_deref().unwrap_or(""), "merge").and_then(|n| self.merge_with(n));
                    total = match merged {
                        Some(m) => m,
                        None => {
                            self.degrade(AspectId::Synth, "no known merge template chosen");
                            rule_total.clone()
                        }
                    };
                    let seq = self.append(Action::new(ActionKind::MergeResult, &merger, Phase::Synthesis).prompt(Some(r)).summary(format!("attempt {attempt}")))?;
                    let e = self.ask(&merger, Some(ActionKind::EvaluateResult), "evaluate_merge",
                        "Evaluate the merged result. Answer ACCEPT or REJECT.", Some(&total), None)?;
                    let verdict = parse::verdict(e.response.as_deref().unwrap_or(""), &self.policies.done_marker).unwrap_or(Verdict::Accepted);
                    let mut a = Action::new(ActionKind::EvaluateResult, &merger, Phase::Synthesis).prompt(Some(e)).summary(format!("{verdict:?}"));
                    a.parent_action = Some(seq);
                    self.append(a)?;
                    if verdict == Verdict::Accepted {
                        break;
                    }
                    if attempt == 1 {
                        self.policy(AspectId::Synth, "merged result rejected; one redo");
                    } else {
                        self.notice("merged result rejected again; redo budget spent, result kept");
                    }
                }
                total
            }
            AutonomyLevel::SelfOrganizing => {
                let listing = done_tasks(&self.activity)
                    .into_iter()
                    .map(|t| format!("{}: {}", t.id, payload(t)))
                    .collect::<Vec<_>>()
                    .join("\n");
                let r = self.ask(&merger, Some(ActionKind::MergeResult), "merge", "Merge the task results into one result.", Some(&listing), None)?;
                let text = r.response.clone().unwrap_or_default().trim().to_string();
                self.append(Action::new(ActionKind::MergeResult, &merger, Phase::Synthesis).prompt(Some(r)).summary("merged by agent"))?;
                if text.is_empty() {
                    self.degrade(AspectId::Synth, "empty merge");
                    rule_total
                } else {
                    text
                }
            }
        };
        let done = done_tasks(&self.activity).len();
        let response = response_text(done, self.activity.tasks.len(), &total);
        Ok(ActivityOutcome::completed(total, response))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_split_rule() {
        assert_eq!(split_goal("a; b; c", ";"), vec!["a", "b", "c"]);
        assert_eq!(split_goal(" ;x;; ", ";"), vec!["x"]);
        assert_eq!(
            hierarchical_split("a,b; c", &[";".into(), ",".into()], 2),
            vec!["a", "b", "c"]
        );
        assert_eq!(hierarchical_split("a,b; c", &[";".into(), ",".into()], 1), vec!["a,b", "c"]);
    }

    #[test]
    fn capability_request_split() {
        assert_eq!(
            capability_requests("compute @calc 2 + 3 then @lookup capital"),
            vec![("calc".into(), "2 + 3 then".into()), ("lookup".into(), "capital".into())]
        );
        assert_eq!(
            capability_requests("translate the doc @translate"),
            vec![("translate".into(), "translate the doc".into())]
        );
        assert!(capability_requests("plain").is_empty());
    }

    #[test]
    fn ready_rule_prefers_lowest_priority() {
        let mut a = Activity::new(crate::ontology::Goal::new("g"), vec![AgentSpec::new("x", AgentType::TaskExecution)]).unwrap();
        for (id, p) in [("t1", 2), ("t2", 0), ("t3", 1)] {
            a.insert_task(Task::new(id, id, p)).unwrap();
        }
        assert_eq!(next_ready_task(&a).unwrap(), Some("t2".into()));
    }

    #[test]
    fn stale_dependency_deadlocks() {
        let mut a = Activity::new(crate::ontology::Goal::new("g"), vec![AgentSpec::new("x", AgentType::TaskExecution)]).unwrap();
        a.insert_task(Task::new("t1", "a", 0)).unwrap();
        a.insert_task(Task::new("t2", "b", 1)).unwrap();
        a.add_dependency(&"t2".into(), &"t1".into()).unwrap();
        a.task_mut(&"t1".into()).unwrap().status = TaskStatus::Failed;
        assert_eq!(next_ready_task(&a), Err(EngineError::DeadlockedTasks));
    }

    #[test]
    fn synthesis_rule() {
        let mut a = Activity::new(crate::ontology::Goal::new("g"), vec![AgentSpec::new("x", AgentType::TaskExecution)]).unwrap();
        for (id, p, payload) in [("t1", 1, "q"), ("t2", 0, "p")] {
            let mut t = Task::new(id, id, p);
            t.status = TaskStatus::Done;
            t.result = Some(TaskResult { task: id.into(), payload: payload.into(), artefacts: vec![], evaluation: None });
            a.insert_task(t).unwrap();
        }
        let (total, response) = synthesize_rule(&a).unwrap();
        assert_eq!(total, "p\nq");
        assert_eq!(response, "Completed 2 of 2 tasks.\n\np\nq");
        for t in &mut a.tasks {
            t.status = TaskStatus::Failed;
        }
        assert_eq!(synthesize_rule(&a), Err(EngineError::NoResults));
    }
}
