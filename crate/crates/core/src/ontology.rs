//! Runtime domain model of a task-management activity: goals, tasks, agents,
//! memories, actions and the activity log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ActivityError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_string())
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    #[serde(default = "default_goal_id")]
    pub id: String,
    pub text: String,
    /// User-guided alignment payload.
    #[serde(default)]
    pub preferences: BTreeMap<String, String>,
}

fn default_goal_id() -> String {
    "goal".to_string()
}

impl Goal {
    pub fn new(text: impl Into<String>) -> Self {
        Self { id: default_goal_id(), text: text.into(), preferences: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskStatus {
    Pending,
    Assigned,
    Running,
    Done,
    Failed,
}

impl TaskStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, TaskStatus::Done | TaskStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub verdict: Verdict,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArtefactKind {
    Text,
    Code,
    Binary,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artefact {
    pub kind: ArtefactKind,
    pub name: String,
    pub payload: String,
    pub produced_by: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: TaskId,
    pub payload: String,
    #[serde(default)]
    pub artefacts: Vec<Artefact>,
    #[serde(default)]
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub parent: Option<TaskId>,
    pub description: String,
    pub priority: u32,
    pub depends_on: BTreeSet<TaskId>,
    pub status: TaskStatus,
    pub assignee: Option<AgentId>,
    pub result: Option<TaskResult>,
}

impl Task {
    pub fn new(id: impl Into<String>, description: impl Into<String>, priority: u32) -> Self {
        Self {
            id: TaskId(id.into()),
            parent: None,
            description: description.into(),
            priority,
            depends_on: BTreeSet::new(),
            status: TaskStatus::Pending,
            assignee: None,
            result: None,
        }
    }

    /// Capability tags written as `@name` tokens in the description.
    pub fn required_capabilities(&self) -> Vec<String> {
        let mut caps: Vec<String> = self
            .description
            .split_whitespace()
            .filter_map(|w| w.strip_prefix('@'))
            .map(|w| w.trim_end_matches(|c: char| !c.is_alphanumeric() && c != '-' && c != '_'))
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect();
        caps.dedup();
        caps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentType {
    TaskCreation,
    TaskPrioritization,
    TaskExecution,
    DomainRole,
    Technical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryPolicy {
    pub short_term_window: usize,
    #[serde(default)]
    pub long_term_enabled: bool,
    #[serde(default)]
    pub summarize_on_overflow: bool,
}

impl Default for MemoryPolicy {
    fn default() -> Self {
        Self { short_term_window: 8, long_term_enabled: false, summarize_on_overflow: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub agent_type: AgentType,
    #[serde(default)]
    pub role_text: String,
    #[serde(default)]
    pub memory_policy: MemoryPolicy,
    #[serde(default)]
    pub tool_grants: BTreeSet<String>,
    #[serde(default)]
    pub peers: BTreeSet<AgentId>,
}

impl AgentSpec {
    pub fn new(id: &str, agent_type: AgentType) -> Self {
        Self {
            id: AgentId::from(id),
            agent_type,
            role_text: String::new(),
            memory_policy: MemoryPolicy::default(),
            tool_grants: BTreeSet::new(),
            peers: BTreeSet::new(),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.agent_type == AgentType::DomainRole && self.role_text.trim().is_empty() {
            return Err(format!("agent {}: domain role agents need role text", self.id));
        }
        if self.peers.contains(&self.id) {
            return Err(format!("agent {}: lists itself as a peer", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub role: String,
    pub text: String,
}

impl MemoryEntry {
    pub fn new(role: &str, text: impl Into<String>) -> Self {
        Self { role: role.to_string(), text: text.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMemory {
    pub short_term: Vec<MemoryEntry>,
    pub long_term: BTreeMap<String, String>,
}

pub const SUMMARY_ROLE: &str = "summary";
const TRUNCATION_CHARS: usize = 120;

/// Rule-based summary: the first 120 characters of the joined entries.
pub fn truncation_summary(entries: &[MemoryEntry]) -> String {
    let joined = entries.iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join(" ");
    let mut chars = joined.chars();
    let head: String = chars.by_ref().take(TRUNCATION_CHARS).collect();
    if chars.next().is_some() {
        format!("{head}...")
    } else {
        head
    }
}

impl AgentMemory {
    /// Appends `entry`; on overflow either summarizes the oldest half into one
    /// entry (via `summarize`) or drops the oldest entries.
    ///
    /// Returns the number of entries folded or dropped.
    pub fn record(
        &mut self,
        policy: &MemoryPolicy,
        entry: MemoryEntry,
        summarize: impl FnOnce(&[MemoryEntry]) -> String,
    ) -> usize {
        let window = policy.short_term_window;
        if window == 0 {
            self.short_term.clear();
            return 0;
        }
        self.short_term.push(entry);
        let len = self.short_term.len();
        if len <= window {
            return 0;
        }
        if policy.summarize_on_overflow {
            let folded = len.div_ceil(2).max(len - window + 1);
            let summary = summarize(&self.short_term[..folded]);
            self.short_term.drain(..folded);
            self.short_term.insert(0, MemoryEntry::new(SUMMARY_ROLE, summary));
            folded
        } else {
            let dropped = len - window;
            self.short_term.drain(..dropped);
            dropped
        }
    }

    /// Writes a long-term entry. `Err` carries the notice when the policy disables it.
    pub fn remember(&mut self, policy: &MemoryPolicy, key: &str, value: &str) -> Result<(), String> {
        if !policy.long_term_enabled {
            return Err(format!("long-term memory disabled; write to `{key}` skipped"));
        }
        self.long_term.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// The most recent `n` short-term entries rendered one per line.
    pub fn excerpt(&self, n: usize) -> Option<String> {
        if self.short_term.is_empty() || n == 0 {
            return None;
        }
        let start = self.short_term.len().saturating_sub(n);
        Some(
            self.short_term[start..]
                .iter()
                .map(|e| format!("[{}] {}", e.role, e.text))
                .collect::<Vec<_>>()
                .join("\n"),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    DecomposeTask,
    CreateTask,
    DelegateTask,
    ExecuteTask,
    EvaluateResult,
    MergeResult,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Decomposition,
    Orchestration,
    Synthesis,
    Terminal,
}

impl ActionKind {
    /// Whether this kind may be recorded during `phase`.
    pub fn allowed_in(self, phase: Phase, mid_run_task_creation: bool) -> bool {
        use ActionKind::*;
        match phase {
            Phase::Decomposition => matches!(self, DecomposeTask | CreateTask),
            Phase::Orchestration => {
                matches!(self, DelegateTask | ExecuteTask | EvaluateResult)
                    || (self == CreateTask && mid_run_task_creation)
            }
            Phase::Synthesis => matches!(self, MergeResult | EvaluateResult),
            Phase::Terminal => false,
        }
    }
}

/// Prompt as sent to the reasoning backend, with its augmentation sections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub base: String,
    pub augmented: String,
    pub sections: Vec<(SectionKind, String)>,
    pub response: Option<String>,
    /// Set once augmentation has run; a second pass is refused.
    pub is_augmented: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SectionKind {
    RoleSpec,
    MemoryExcerpt,
    ContextInfo,
    TemplateBody,
    Instruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    /// Sequence number in the activity log, assigned on append.
    pub id: u64,
    pub kind: ActionKind,
    pub actor: AgentId,
    pub receiver: Option<AgentId>,
    pub task: Option<TaskId>,
    pub prompt: Option<PromptRecord>,
    pub parent_action: Option<u64>,
    pub phase: Phase,
    /// Short human-readable outcome of the step.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub summary: String,
}

impl Action {
    pub fn new(kind: ActionKind, actor: &AgentId, phase: Phase) -> Self {
        Self {
            id: 0,
            kind,
            actor: actor.clone(),
            receiver: None,
            task: None,
            prompt: None,
            parent_action: None,
            phase,
            summary: String::new(),
        }
    }

    pub fn receiver(mut self, r: &AgentId) -> Self {
        self.receiver = Some(r.clone());
        self
    }

    pub fn task(mut self, t: &TaskId) -> Self {
        self.task = Some(t.clone());
        self
    }

    pub fn prompt(mut self, p: Option<PromptRecord>) -> Self {
        self.prompt = p;
        self
    }

    pub fn summary(mut self, s: impl Into<String>) -> Self {
        self.summary = s.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeStatus {
    Completed,
    Halted,
    NonTermination,
    DeadEnd,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityOutcome {
    pub status: OutcomeStatus,
    pub total_result: Option<String>,
    pub response: Option<String>,
    pub detail: String,
}

impl ActivityOutcome {
    pub fn completed(total_result: String, response: String) -> Self {
        Self {
            status: OutcomeStatus::Completed,
            total_result: Some(total_result),
            response: Some(response),
            detail: "completed".to_string(),
        }
    }

    pub fn failed(status: OutcomeStatus, detail: impl Into<String>) -> Self {
        Self { status, total_result: None, response: None, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub spec: AgentSpec,
    pub memory: AgentMemory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub id: String,
    pub goal: Goal,
    pub phase: Phase,
    /// Tasks in creation order.
    pub tasks: Vec<Task>,
    pub agents: Vec<AgentState>,
    pub action_log: Vec<Action>,
    pub activity_memory: BTreeMap<String, String>,
    pub outcome: Option<ActivityOutcome>,
    pub mid_run_task_creation: bool,
}

impl Activity {
    pub fn new(goal: Goal, roster: Vec<AgentSpec>) -> Result<Self, ActivityError> {
        if goal.text.trim().is_empty() {
            return Err(ActivityError::EmptyGoal);
        }
        if roster.is_empty() {
            return Err(ActivityError::EmptyRoster);
        }
        Ok(Self {
            id: "activity".to_string(),
            goal,
            phase: Phase::Decomposition,
            tasks: Vec::new(),
            agents: roster
                .into_iter()
                .map(|spec| AgentState { spec, memory: AgentMemory::default() })
                .collect(),
            action_log: Vec::new(),
            activity_memory: BTreeMap::new(),
            outcome: None,
            mid_run_task_creation: false,
        })
    }

    /// Appends to the log, assigning the next sequence number.
    pub fn append_action(&mut self, mut action: Action) -> Result<u64, ActivityError> {
        if self.phase == Phase::Terminal {
            return Err(ActivityError::Terminal);
        }
        if action.phase != self.phase
            || !action.kind.allowed_in(self.phase, self.mid_run_task_creation)
        {
            return Err(ActivityError::PhaseMismatch { kind: action.kind, phase: self.phase });
        }
        if action.kind == ActionKind::DelegateTask && action.receiver.is_none() {
            return Err(ActivityError::MissingReceiver);
        }
        let seq = self.action_log.last().map_or(1, |a| a.id + 1);
        action.id = seq;
        self.action_log.push(action);
        Ok(seq)
    }

    pub fn task(&self, id: &TaskId) -> Option<&Task> {
        self.tasks.iter().find(|t| &t.id == id)
    }

    pub fn task_mut(&mut self, id: &TaskId) -> Option<&mut Task> {
        self.tasks.iter_mut().find(|t| &t.id == id)
    }

    /// Inserts a task; dependencies must name existing tasks.
    pub fn insert_task(&mut self, task: Task) -> Result<(), ActivityError> {
        if self.task(&task.id).is_some() {
            return Err(ActivityError::DuplicateTask(task.id.0));
        }
        if task.depends_on.contains(&task.id) {
            return Err(ActivityError::SelfDependency(task.id.0));
        }
        if let Some(missing) = task.depends_on.iter().find(|d| self.task(d).is_none()) {
            return Err(ActivityError::UnknownTask(missing.0.clone()));
        }
        self.tasks.push(task);
        Ok(())
    }

    /// Adds `task → dependency`, refusing edges that would close a cycle.
    pub fn add_dependency(&mut self, task: &TaskId, dependency: &TaskId) -> Result<(), ActivityError> {
        if task == dependency {
            return Err(ActivityError::SelfDependency(task.0.clone()));
        }
        if self.task(dependency).is_none() {
            return Err(ActivityError::UnknownTask(dependency.0.clone()));
        }
        if self.depends_transitively(dependency, task) {
            return Err(ActivityError::CyclicDependency(task.0.clone()));
        }
        self.task_mut(task)
            .ok_or_else(|| ActivityError::UnknownTask(task.0.clone()))?
            .depends_on
            .insert(dependency.clone());
        Ok(())
    }

    fn depends_transitively(&self, from: &TaskId, target: &TaskId) -> bool {
        let mut stack = vec![from.clone()];
        let mut seen = BTreeSet::new();
        while let Some(t) = stack.pop() {
            if &t == target {
                return true;
            }
            if !seen.insert(t.clone()) {
                continue;
            }
            if let Some(task) = self.task(&t) {
                stack.extend(task.depends_on.iter().cloned());
            }
        }
        false
    }

    pub fn pending_tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| !t.status.is_finished())
    }

    /// Whether every dependency of `task` is Done.
    pub fn dependencies_satisfied(&self, task: &Task) -> bool {
        task.depends_on
            .iter()
            .all(|d| self.task(d).is_some_and(|t| t.status == TaskStatus::Done))
    }

    pub fn agent(&self, id: &AgentId) -> Option<&AgentState> {
        self.agents.iter().find(|a| &a.spec.id == id)
    }

    pub fn agent_mut(&mut self, id: &AgentId) -> Option<&mut AgentState> {
        self.agents.iter_mut().find(|a| &a.spec.id == id)
    }

    /// Per-agent view of the activity log.
    pub fn actions_by<'a>(&'a self, agent: &'a AgentId) -> impl Iterator<Item = &'a Action> + 'a {
        self.action_log.iter().filter(move |a| &a.actor == agent)
    }

    pub fn next_task_id(&self) -> TaskId {
        TaskId(format!("t{}", self.tasks.len() + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster(n: usize) -> Vec<AgentSpec> {
        (0..n).map(|i| AgentSpec::new(&format!("a{i}"), AgentType::TaskExecution)).collect()
    }

    #[test]
    fn new_activity() {
        let act = Activity::new(Goal::new("g"), roster(3)).unwrap();
        assert_eq!(act.phase, Phase::Decomposition);
        assert!(act.action_log.is_empty() && act.tasks.is_empty());
        assert_eq!(Activity::new(Goal::new("g"), vec![]), Err(ActivityError::EmptyRoster));

        let mut goal = Goal::new("g");
        goal.preferences.insert("tone".into(), "formal".into());
        goal.preferences.insert("lang".into(), "en".into());
        let act = Activity::new(goal.clone(), roster(1)).unwrap();
        assert_eq!(act.goal.preferences, goal.preferences);
    }

    #[test]
    fn append_respects_phase() {
        let mut act = Activity::new(Goal::new("g"), roster(1)).unwrap();
        let a0 = AgentId::from("a0");
        let err = act.append_action(Action::new(ActionKind::MergeResult, &a0, Phase::Decomposition));
        assert!(matches!(err, Err(ActivityError::PhaseMismatch { .. })));
        act.phase = Phase::Orchestration;
        assert_eq!(act.append_action(Action::new(ActionKind::ExecuteTask, &a0, Phase::Orchestration)), Ok(1));
        assert_eq!(
            act.append_action(Action::new(ActionKind::DelegateTask, &a0, Phase::Orchestration)),
            Err(ActivityError::MissingReceiver)
        );
        assert!(act.append_action(Action::new(ActionKind::CreateTask, &a0, Phase::Orchestration)).is_err());
        act.mid_run_task_creation = true;
        assert!(act.append_action(Action::new(ActionKind::CreateTask, &a0, Phase::Orchestration)).is_ok());
    }

    #[test]
    fn thousand_appends_are_sequential() {
        let mut act = Activity::new(Goal::new("g"), roster(1)).unwrap();
        act.phase = Phase::Orchestration;
        let a0 = AgentId::from("a0");
        for i in 1..=1000 {
            let seq = act.append_action(Action::new(ActionKind::ExecuteTask, &a0, Phase::Orchestration));
            assert_eq!(seq, Ok(i));
        }
        let ids: Vec<u64> = act.action_log.iter().map(|a| a.id).collect();
        assert_eq!(ids, (1..=1000).collect::<Vec<_>>());
    }

    #[test]
    fn memory_overflow_summarizes() {
        let policy = MemoryPolicy { short_term_window: 4, long_term_enabled: false, summarize_on_overflow: true };
        let mut m = AgentMemory::default();
        for i in 1..=4 {
            m.record(&policy, MemoryEntry::new("user", format!("e{i}")), |_| unreachable!());
        }
        let folded = m.record(&policy, MemoryEntry::new("user", "e5"), truncation_summary);
        assert_eq!(folded, 3);
        let texts: Vec<_> = m.short_term.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(texts, ["e1 e2 e3", "e4", "e5"]);
        assert_eq!(m.short_term[0].role, SUMMARY_ROLE);
    }

    #[test]
    fn memory_degenerate_window_and_long_term_gate() {
        let policy = MemoryPolicy { short_term_window: 0, long_term_enabled: false, summarize_on_overflow: true };
        let mut m = AgentMemory::default();
        m.record(&policy, MemoryEntry::new("user", "x"), truncation_summary);
        assert!(m.short_term.is_empty());
        assert!(m.remember(&policy, "k", "v").is_err());
        assert!(m.long_term.is_empty());
    }

    #[test]
    fn truncation_is_bounded() {
        let long = "x".repeat(300);
        let s = truncation_summary(&[MemoryEntry::new("u", long)]);
        assert_eq!(s.chars().count(), 123);
        assert!(s.ends_with("..."));
    }

    #[test]
    fn task_dependencies_stay_acyclic() {
        let mut act = Activity::new(Goal::new("g"), roster(1)).unwrap();
        act.insert_task(Task::new("t1", "a", 0)).unwrap();
        act.insert_task(Task::new("t2", "b", 1)).unwrap();
        act.add_dependency(&"t2".into(), &"t1".into()).unwrap();
        assert_eq!(
            act.add_dependency(&"t1".into(), &"t2".into()),
            Err(ActivityError::CyclicDependency("t1".into()))
        );
        let mut t3 = Task::new("t3", "c", 2);
        t3.depends_on.insert("t3".into());
        assert!(matches!(act.insert_task(t3), Err(ActivityError::SelfDependency(_))));
    }

    #[test]
    fn capability_tags() {
        let t = Task::new("t1", "translate the doc @translate, then @lookup.", 0);
        assert_eq!(t.required_capabilities(), vec!["translate", "lookup"]);
    }
}
