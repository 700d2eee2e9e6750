//! Scenario file model and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendConfig, PromptTemplate};
use crate::error::EngineError;
use crate::ontology::{ActionKind, AgentId, AgentSpec, Goal};
use crate::profile::{Category, SystemProfile};
use crate::registry::RegistryManifest;
use crate::taxonomy::{AlignmentLevel, AspectConfig, AspectId};

use super::gate::{Command, CommandKind, IssuedAt};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub agent: AgentId,
    pub action: ActionKind,
    #[serde(default)]
    pub artefact: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolConfig {
    /// Fixed execution chain, walked once per pass.
    StrictFinite { stages: Vec<Stage> },
    /// Instructor and executor alternate DelegateTask and ExecuteTask.
    DialogueCycle {
        instructor: AgentId,
        executor: AgentId,
        #[serde(default = "default_max_cycles")]
        max_cycles: u32,
    },
    /// Creation, prioritization and execution agents cycle over a task list.
    MultiCycle {
        creation: AgentId,
        prioritization: AgentId,
        execution: AgentId,
    },
}

fn default_max_cycles() -> u32 {
    10
}

impl ProtocolConfig {
    pub fn agents(&self) -> Vec<&AgentId> {
        match self {
            ProtocolConfig::StrictFinite { stages } => stages.iter().map(|s| &s.agent).collect(),
            ProtocolConfig::DialogueCycle { instructor, executor, .. } => vec![instructor, executor],
            ProtocolConfig::MultiCycle { creation, prioritization, execution } => {
                vec![creation, prioritization, execution]
            }
        }
    }

    pub fn check(&self, roster: &BTreeSet<&AgentId>) -> Result<(), String> {
        if let Some(a) = self.agents().into_iter().find(|a| !roster.contains(a)) {
            return Err(format!("protocol names unknown agent {a}"));
        }
        match self {
            ProtocolConfig::StrictFinite { stages } => {
                if !stages.iter().any(|s| s.action == ActionKind::ExecuteTask) {
                    return Err("strict protocol needs at least one ExecuteTask stage".into());
                }
                if let Some(s) = stages.iter().find(|s| {
                    !matches!(s.action, ActionKind::DelegateTask | ActionKind::ExecuteTask | ActionKind::EvaluateResult)
                }) {
                    return Err(format!("stage action {} is not an orchestration action", s.action));
                }
            }
            ProtocolConfig::DialogueCycle { instructor, executor, max_cycles } => {
                if instructor == executor {
                    return Err("dialogue instructor and executor must differ".into());
                }
                if *max_cycles == 0 {
                    return Err("dialogue max_cycles must be at least 1".into());
                }
            }
            ProtocolConfig::MultiCycle { .. } => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProtocolConfig::StrictFinite { .. } => "strict_finite",
            ProtocolConfig::DialogueCycle { .. } => "dialogue_cycle",
            ProtocolConfig::MultiCycle { .. } => "multi_cycle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub max_actions: u64,
    pub max_protocol_cycles: u64,
    pub repeat_state_limit: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { max_actions: 200, max_protocol_cycles: 50, repeat_state_limit: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub name: String,
    /// Applied hierarchically, one delimiter per depth level.
    pub delimiters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeTemplate {
    pub name: String,
    #[serde(default)]
    pub header: String,
    #[serde(default)]
    pub item_prefix: String,
    #[serde(default = "newline")]
    pub separator: String,
}

fn newline() -> String {
    "\n".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JunctureKind {
    BeforeExecute,
    BeforeSideEffect,
    BeforePhaseTransition,
}

/// A critical juncture; it becomes an approval point when `aspect` runs at alignment L2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Juncture {
    pub at: JunctureKind,
    pub aspect: AspectId,
}

/// Parameters of the per-aspect level mechanisms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Policies {
    pub delimiter: String,
    pub strategies: Vec<Strategy>,
    pub max_depth: usize,
    pub max_tasks: Option<usize>,
    pub templates: Vec<PromptTemplate>,
    pub merge_templates: Vec<MergeTemplate>,
    /// Capability → resource id, used by rule-based utilization.
    pub routing: BTreeMap<String, String>,
    pub junctures: Vec<Juncture>,
    pub approval_timeout_ms: Option<u64>,
    pub mid_run_task_creation: bool,
    pub max_degree: usize,
    pub max_agents: usize,
    pub done_marker: String,
    pub protocol_menu: Vec<ProtocolConfig>,
    pub memory_excerpt_entries: usize,
    /// Sandbox directory for file-writing resources.
    pub sandbox_dir: Option<String>,
}

impl Default for Policies {
    fn default() -> Self {
        Self {
            delimiter: ";".to_string(),
            strategies: Vec::new(),
            max_depth: 1,
            max_tasks: None,
            templates: Vec::new(),
            merge_templates: Vec::new(),
            routing: BTreeMap::new(),
            junctures: Vec::new(),
            approval_timeout_ms: None,
            mid_run_task_creation: false,
            max_degree: 4,
            max_agents: 8,
            done_marker: "TASK_DONE".to_string(),
            protocol_menu: Vec::new(),
            memory_excerpt_entries: 3,
            sandbox_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserConfigEntry {
    pub aspect: AspectId,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Delivered at the first action boundary where at least this many actions are logged.
    AtAction(u64),
    /// Delivered while the n-th (1-based) approval point is pending.
    ApprovalPoint(usize),
    /// Applied before the run starts.
    PreRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub trigger: Trigger,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegistrySource {
    Inline(RegistryManifest),
    Path(String),
}

impl Default for RegistrySource {
    fn default() -> Self {
        RegistrySource::Inline(RegistryManifest::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub goal: Goal,
    pub aspects: BTreeMap<AspectId, AspectConfig>,
    pub roster: Vec<AgentSpec>,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub registry: RegistrySource,
    pub backend: BackendConfig,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub user_config: Vec<UserConfigEntry>,
    #[serde(default)]
    pub interventions: Vec<Intervention>,
    #[serde(default)]
    pub policies: Policies,
}

impl Scenario {
    pub fn parse(doc: &str) -> Result<Self, EngineError> {
        serde_json::from_str(doc).map_err(|e| EngineError::InvalidScenario(e.to_string()))
    }

    /// Reads a scenario file; a registry given as a path is loaded relative to the file.
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::InvalidScenario(format!("{}: {e}", path.display())))?;
        let mut s = Self::parse(&text)?;
        s.resolve_registry(path.parent().unwrap_or(Path::new(".")))?;
        Ok(s)
    }

    /// Replaces a registry given as a path, relative to `base`, with its contents.
    pub fn resolve_registry(&mut self, base: &Path) -> Result<(), EngineError> {
        if let RegistrySource::Path(p) = &self.registry {
            let full = base.join(p);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| EngineError::InvalidScenario(format!("{}: {e}", full.display())))?;
            let manifest: RegistryManifest = serde_json::from_str(&text)
                .map_err(|e| EngineError::InvalidScenario(format!("registry manifest: {e}")))?;
            self.registry = RegistrySource::Inline(manifest);
        }
        Ok(())
    }

    pub fn level(&self, aspect: AspectId) -> AspectConfig {
        self.aspects[&aspect]
    }

    /// The scenario's configuration viewed as a system profile.
    pub fn profile(&self) -> SystemProfile {
        SystemProfile {
            name: "scenario".to_string(),
            category: Category::Unlabeled,
            aspects: self.aspects.clone(),
            notes: None,
        }
    }

    pub fn manifest(&self) -> Result<&RegistryManifest, EngineError> {
        match &self.registry {
            RegistrySource::Inline(m) => Ok(m),
            RegistrySource::Path(p) => Err(EngineError::InvalidScenario(format!(
                "registry manifest `{p}` was not loaded; use Scenario::load"
            ))),
        }
    }

    /// User-config entries as pre-run commands.
    pub fn pre_run_commands(&self) -> Vec<Command> {
        self.user_config
            .iter()
            .map(|e| Command {
                kind: CommandKind::AdjustConstraint { aspect: e.aspect, key: e.key.clone(), value: e.value.clone() },
                target_aspect: e.aspect,
                issued_at: IssuedAt::PreRun,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let invalid = |m: String| Err(EngineError::InvalidScenario(m));
        if self.goal.text.trim().is_empty() {
            return invalid("goal text is empty".into());
        }
        if let Some(a) = AspectId::ALL.iter().find(|a| !self.aspects.contains_key(a)) {
            return invalid(format!("aspects: missing {}", a.key()));
        }
        if self.roster.is_empty() {
            return invalid("roster is empty".into());
        }
        let mut ids = BTreeSet::new();
        for a in &self.roster {
            if !ids.insert(&a.id) {
                return invalid(format!("duplicate agent {}", a.id));
            }
            a.check().map_err(EngineError::InvalidScenario)?;
        }
        for a in &self.roster {
            if let Some(p) = a.peers.iter().find(|p| !ids.contains(p)) {
                return invalid(format!("agent {} lists unknown peer {p}", a.id));
            }
        }
        self.protocol.check(&ids).map_err(EngineError::InvalidScenario)?;
        for p in &self.policies.protocol_menu {
            p.check(&ids).map_err(|e| EngineError::InvalidScenario(format!("protocol_menu: {e}")))?;
        }
        let b = &self.budgets;
        if b.max_actions < 1 || b.max_protocol_cycles < 1 || b.repeat_state_limit < 1 {
            return invalid("budgets must all be at least 1".into());
        }
        self.backend.check().map_err(|e| EngineError::InvalidScenario(e.to_string()))?;
        for t in &self.policies.templates {
            t.clone().normalized().map_err(|e| EngineError::InvalidScenario(e.to_string()))?;
        }
        if self.policies.delimiter.is_empty() {
            return invalid("policies.delimiter is empty".into());
        }
        for e in &self.user_config {
            if self.level(e.aspect).alignment < AlignmentLevel::UserGuided {
                return invalid(format!(
                    "user_config for {} rejected: alignment is {}, pre-run configuration needs L1 or higher",
                    e.aspect,
                    self.level(e.aspect).alignment
                ));
            }
        }
        Ok(())
    }
}
