//! Contextual resources (tools, data, models) and how the integration level
//! governs which of them an activity can reach.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::RegistryError;
use crate::ontology::{Artefact, ArtefactKind};
use crate::taxonomy::AutonomyLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    Tool,
    Data,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subkind {
    SearchAnalysis,
    Execution,
    Reasoning,
    Development,
    Communication,
    StructuredText,
    UnstructuredText,
    DomainSpecific,
    #[serde(rename = "NLP")]
    Nlp,
    Vision,
    Audio,
    /// Valid for both data and models.
    Multimodal,
}

impl ResourceKind {
    pub fn allows(self, sub: Subkind) -> bool {
        use Subkind::*;
        match self {
            ResourceKind::Tool => matches!(sub, SearchAnalysis | Execution | Reasoning | Development | Communication),
            ResourceKind::Data => matches!(sub, StructuredText | UnstructuredText | Multimodal | DomainSpecific),
            ResourceKind::Model => matches!(sub, Nlp | Vision | Audio | Multimodal),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceState {
    /// Integrated and usable now.
    Active,
    /// Prepared adapter; activatable from integration level L1.
    Dormant,
    /// Discoverable in the wider pool; bindable at integration level L2.
    Catalog,
}

impl ResourceState {
    fn reachable_at(self, level: AutonomyLevel) -> bool {
        match self {
            ResourceState::Active => true,
            ResourceState::Dormant => level >= AutonomyLevel::Adaptive,
            ResourceState::Catalog => level == AutonomyLevel::SelfOrganizing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceDescriptor {
    pub id: String,
    pub kind: ResourceKind,
    pub subkind: Subkind,
    #[serde(default = "default_state")]
    pub state: ResourceState,
    #[serde(default)]
    pub capabilities: BTreeSet<String>,
    /// Built-in handler name: echo, kv_lookup, arithmetic, file_writer, web_search, email, translate.
    pub handler: String,
    /// Backing entries for the `kv_lookup` handler.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub data: BTreeMap<String, String>,
}

fn default_state() -> ResourceState {
    ResourceState::Active
}

impl ResourceDescriptor {
    pub fn new(id: &str, kind: ResourceKind, subkind: Subkind, handler: &str, caps: &[&str]) -> Self {
        Self {
            id: id.to_string(),
            kind,
            subkind,
            state: ResourceState::Active,
            capabilities: caps.iter().map(|c| c.to_string()).collect(),
            handler: handler.to_string(),
            data: BTreeMap::new(),
        }
    }

    /// Whether invoking this resource changes something outside the activity.
    pub fn has_side_effects(&self) -> bool {
        matches!(self.handler.as_str(), "email" | "file_writer")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InvocationResult {
    Text(String),
    Artefact(Artefact),
}

impl InvocationResult {
    pub fn as_text(&self) -> String {
        match self {
            InvocationResult::Text(s) => s.clone(),
            InvocationResult::Artefact(a) => format!("artefact:{}", a.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceInvocation {
    pub resource: String,
    pub request: String,
    pub result: InvocationResult,
    pub impact: Option<String>,
}

/// Registry manifest file contents.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryManifest {
    #[serde(default)]
    pub resources: Vec<ResourceDescriptor>,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    resources: BTreeMap<String, ResourceDescriptor>,
    /// Directory for the file-writer handler; artefacts stay in memory when unset.
    sandbox: Option<PathBuf>,
    trace: Vec<ResourceInvocation>,
    artefacts_written: u32,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_manifest(manifest: &RegistryManifest) -> Result<Self, RegistryError> {
        let mut r = Registry::new();
        for d in &manifest.resources {
            r.register(d.clone(), d.state)?;
        }
        Ok(r)
    }

    pub fn with_sandbox(mut self, dir: impl Into<PathBuf>) -> Self {
        self.sandbox = Some(dir.into());
        self
    }

    pub fn register(
        &mut self,
        mut descriptor: ResourceDescriptor,
        initial_state: ResourceState,
    ) -> Result<(), RegistryError> {
        if self.resources.contains_key(&descriptor.id) {
            return Err(RegistryError::DuplicateResource(descriptor.id));
        }
        if !descriptor.kind.allows(descriptor.subkind) {
            return Err(RegistryError::KindMismatch {
                id: descriptor.id,
                kind: format!("{:?}", descriptor.kind),
                subkind: format!("{:?}", descriptor.subkind),
            });
        }
        if !HANDLERS.contains(&descriptor.handler.as_str()) {
            return Err(RegistryError::UnknownHandler(descriptor.handler));
        }
        descriptor.state = initial_state;
        self.resources.insert(descriptor.id.clone(), descriptor);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ResourceDescriptor> {
        self.resources.get(id)
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &ResourceDescriptor> {
        self.resources.values()
    }

    /// Ids reachable for `capability` at `level`: Active first, then Dormant,
    /// then Catalog, ascending by id within each state.
    pub fn candidates(&self, capability: &str, level: AutonomyLevel) -> Vec<String> {
        let mut found: Vec<&ResourceDescriptor> = self
            .resources
            .values()
            .filter(|d| d.capabilities.contains(capability) && d.state.reachable_at(level))
            .collect();
        found.sort_by(|a, b| a.state.cmp(&b.state).then_with(|| a.id.cmp(&b.id)));
        found.into_iter().map(|d| d.id.clone()).collect()
    }

    /// Picks the first candidate and makes it Active.
    pub fn resolve(
        &mut self,
        capability: &str,
        level: AutonomyLevel,
    ) -> Result<ResourceDescriptor, RegistryError> {
        let id = self
            .candidates(capability, level)
            .into_iter()
            .next()
            .ok_or_else(|| RegistryError::ResourceUnavailable(capability.to_string()))?;
        self.bind(&id, level)
    }

    /// Makes a specific resource Active if it is reachable at `level`.
    pub fn bind(&mut self, id: &str, level: AutonomyLevel) -> Result<ResourceDescriptor, RegistryError> {
        let d = self
            .resources
            .get_mut(id)
            .filter(|d| d.state.reachable_at(level))
            .ok_or_else(|| RegistryError::ResourceUnavailable(id.to_string()))?;
        d.state = ResourceState::Active;
        Ok(d.clone())
    }

    pub fn invoke(&mut self, id: &str, request: &str) -> Result<ResourceInvocation, RegistryError> {
        let d = self
            .resources
            .get(id)
            .filter(|d| d.state == ResourceState::Active)
            .ok_or_else(|| RegistryError::ResourceUnavailable(id.to_string()))?
            .clone();
        let (result, impact) = self.run_handler(&d, request)?;
        let inv = ResourceInvocation { resource: d.id.clone(), request: request.to_string(), result, impact };
        self.trace.push(inv.clone());
        Ok(inv)
    }

    pub fn trace(&self) -> &[ResourceInvocation] {
        &self.trace
    }

    fn run_handler(
        &mut self,
        d: &ResourceDescriptor,
        request: &str,
    ) -> Result<(InvocationResult, Option<String>), RegistryError> {
        let text = |s: String| Ok((InvocationResult::Text(s), None));
        match d.handler.as_str() {
            "echo" => text(request.to_string()),
            "kv_lookup" => match d.data.get(request.trim()) {
                Some(v) => text(v.clone()),
                None => Err(RegistryError::HandlerFailure("key not found".into())),
            },
            "arithmetic" => arithmetic(request).map(|v| (InvocationResult::Text(v), None)),
            "web_search" => text(format!("mock results for \"{request}\"")),
            "translate" => text(format!("[translated] {request}")),
            "email" => Ok((
                InvocationResult::Text("queued".into()),
                Some(format!("email queued via {} (mock transport)", d.id)),
            )),
            "file_writer" => self.write_artefact(d, request),
            other => Err(RegistryError::UnknownHandler(other.to_string())),
        }
    }

    fn write_artefact(
        &mut self,
        d: &ResourceDescriptor,
        request: &str,
    ) -> Result<(InvocationResult, Option<String>), RegistryError> {
        self.artefacts_written += 1;
        let name = format!("artefact-{}.txt", self.artefacts_written);
        let impact = match &self.sandbox {
            Some(dir) => {
                let path = dir.join(&name);
                std::fs::write(&path, request)
                    .map_err(|e| RegistryError::HandlerFailure(format!("write {}: {e}", path.display())))?;
                format!("{} wrote {}", d.id, path.display())
            }
            None => format!("{} stored {name} in the activity", d.id),
        };
        let artefact = Artefact {
            kind: ArtefactKind::Text,
            name,
            payload: request.to_string(),
            produced_by: 0,
        };
        Ok((InvocationResult::Artefact(artefact), Some(impact)))
    }
}

const HANDLERS: [&str; 7] = ["echo", "kv_lookup", "arithmetic", "file_writer", "web_search", "email", "translate"];

/// Left-to-right evaluation of `a op b op c ...` with + - * /.
fn arithmetic(expr: &str) -> Result<String, RegistryError> {
    let fail = |m: &str| RegistryError::HandlerFailure(format!("arithmetic: {m}"));
    let mut tokens = expr.split_whitespace();
    let parse = |t: Option<&str>| -> Result<f64, RegistryError> {
        t.ok_or_else(|| fail("missing operand"))?
            .parse::<f64>()
            .map_err(|_| fail("operand is not a number"))
    };
    let mut acc = parse(tokens.next())?;
    while let Some(op) = tokens.next() {
        let rhs = parse(tokens.next())?;
        acc = match op {
            "+" => acc + rhs,
            "-" => acc - rhs,
            "*" => acc * rhs,
            "/" if rhs == 0.0 => return Err(fail("division by zero")),
            "/" => acc / rhs,
            _ => return Err(fail("unknown operator")),
        };
    }
    Ok(if acc.fract() == 0.0 && acc.abs() < 1e15 { format!("{}", acc as i64) } else { format!("{acc}") })
}
