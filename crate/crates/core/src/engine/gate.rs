//! User commands and the alignment gate that decides whether they take effect.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ontology::{Action, TaskId};
use crate::taxonomy::{AlignmentLevel, AspectConfig, AspectId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IssuedAt {
    PreRun,
    Runtime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum CommandKind {
    Approve { approval: String },
    Deny { approval: String },
    Halt,
    Reprioritize { task: TaskId, priority: u32 },
    AdjustConstraint { aspect: AspectId, key: String, value: String },
    InjectTask { description: String, priority: u32 },
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Approve { .. } => "Approve",
            CommandKind::Deny { .. } => "Deny",
            CommandKind::Halt => "Halt",
            CommandKind::Reprioritize { .. } => "Reprioritize",
            CommandKind::AdjustConstraint { .. } => "AdjustConstraint",
            CommandKind::InjectTask { .. } => "InjectTask",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    #[serde(flatten)]
    pub kind: CommandKind,
    /// Aspect whose alignment level gates the command.
    pub target_aspect: AspectId,
    pub issued_at: IssuedAt,
}

impl Command {
    pub fn runtime(kind: CommandKind, target_aspect: AspectId) -> Self {
        Self { kind, target_aspect, issued_at: IssuedAt::Runtime }
    }

    pub fn pre_run(kind: CommandKind, target_aspect: AspectId) -> Self {
        Self { kind, target_aspect, issued_at: IssuedAt::PreRun }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub accepted: bool,
    pub reason: String,
}

impl GateDecision {
    pub fn accept(reason: impl Into<String>) -> Self {
        Self { accepted: true, reason: reason.into() }
    }

    pub fn reject(reason: impl Into<String>) -> Self {
        Self { accepted: false, reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApprovalState {
    Pending,
    Approved,
    Denied,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalPoint {
    pub id: String,
    pub action_preview: Action,
    pub aspect: AspectId,
    /// Event sequence number at creation.
    pub created_at: u64,
    pub state: ApprovalState,
}

impl ApprovalPoint {
    /// Only Pending points may change state.
    pub fn resolve(&mut self, to: ApprovalState) -> bool {
        if self.state != ApprovalState::Pending || to == ApprovalState::Pending {
            return false;
        }
        self.state = to;
        true
    }
}

/// Activity facts the gate needs besides the levels.
#[derive(Debug, Clone, Copy, Default)]
pub struct GateContext<'a> {
    pub terminal: bool,
    /// Currently pending approval point, if any.
    pub pending_approval: Option<&'a str>,
}

/// Accept/reject decision for `command`.
///
/// Pre-run commands need alignment ≥ L1 on the target aspect, runtime commands
/// need L2. A runtime Halt is always accepted.
pub fn apply_command(
    command: &Command,
    levels: &BTreeMap<AspectId, AspectConfig>,
    ctx: GateContext<'_>,
) -> GateDecision {
    if ctx.terminal {
        return GateDecision::reject("activity is terminal");
    }
    let al = levels.get(&command.target_aspect).map_or(AlignmentLevel::Integrated, |c| c.alignment);
    let aspect = command.target_aspect;
    let name = command.kind.name();
    if command.issued_at == IssuedAt::Runtime && command.kind == CommandKind::Halt {
        return GateDecision::accept(format!(
            "Halt accepted as safety override ({aspect} alignment is {al})"
        ));
    }
    if let CommandKind::Approve { approval } | CommandKind::Deny { approval } = &command.kind {
        if command.issued_at == IssuedAt::PreRun {
            return GateDecision::reject(format!("{name} refers to a runtime approval point"));
        }
        if ctx.pending_approval != Some(approval.as_str()) {
            return GateDecision::reject(format!("approval point {approval} is not pending"));
        }
    }
    match command.issued_at {
        IssuedAt::PreRun if al >= AlignmentLevel::UserGuided => {
            GateDecision::accept(format!("{name} accepted before start: {aspect} alignment is {al}"))
        }
        IssuedAt::PreRun => GateDecision::reject(format!(
            "{name} rejected: {aspect} alignment is {al}; mechanisms are fixed by design and cannot be altered by users"
        )),
        IssuedAt::Runtime if al == AlignmentLevel::RealTimeResponsive => {
            GateDecision::accept(format!("{name} accepted at runtime: {aspect} alignment is {al}"))
        }
        IssuedAt::Runtime => GateDecision::reject(format!(
            "{name} rejected at runtime: {aspect} alignment is {al}; runtime adjustment needs {}",
            AlignmentLevel::RealTimeResponsive
        )),
    }
}
