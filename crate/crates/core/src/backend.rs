//! Reasoning backends. `Scripted` answers from a rule table and is fully
//! deterministic; `HttpChat` talks to an OpenAI-style chat-completions endpoint.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::BackendError;
use crate::ontology::{ActionKind, AgentType, PromptRecord, SectionKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub body: String,
    #[serde(default)]
    pub placeholders: BTreeSet<String>,
    #[serde(default)]
    pub action_kinds: BTreeSet<ActionKind>,
}

/// Names of `{name}` placeholders in `body`.
pub fn placeholders_in(body: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = body;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                let name = &after[..end];
                if !name.is_empty() && name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                    out.insert(name.to_string());
                }
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

impl PromptTemplate {
    pub fn new(id: &str, body: &str, action_kinds: impl IntoIterator<Item = ActionKind>) -> Self {
        Self {
            id: id.to_string(),
            body: body.to_string(),
            placeholders: placeholders_in(body),
            action_kinds: action_kinds.into_iter().collect(),
        }
    }

    /// Fills in declared placeholders when they were omitted, then checks they match the body.
    pub fn normalized(mut self) -> Result<Self, BackendError> {
        let found = placeholders_in(&self.body);
        if self.placeholders.is_empty() {
            self.placeholders = found;
        } else if self.placeholders != found {
            return Err(BackendError::InvalidTemplate(format!(
                "{}: declared {:?}, body uses {:?}",
                self.id, self.placeholders, found
            )));
        }
        Ok(self)
    }

    pub fn fill(&self, bindings: &BTreeMap<String, String>) -> Result<String, BackendError> {
        let mut out = self.body.clone();
        for name in &self.placeholders {
            let value = bindings
                .get(name)
                .ok_or_else(|| BackendError::UnboundPlaceholder(name.clone()))?;
            out = out.replace(&format!("{{{name}}}"), value);
        }
        Ok(out)
    }
}

/// Optional augmentation inputs.
#[derive(Debug, Default, Clone)]
pub struct Augmentation<'a> {
    pub role: Option<&'a str>,
    pub memory_excerpt: Option<&'a str>,
    pub context_info: Option<&'a str>,
    pub template: Option<&'a PromptTemplate>,
    pub bindings: BTreeMap<String, String>,
}

impl PromptRecord {
    pub fn plain(base: impl Into<String>) -> Self {
        let base = base.into();
        Self {
            augmented: base.clone(),
            sections: vec![(SectionKind::Instruction, base.clone())],
            base,
            response: None,
            is_augmented: false,
        }
    }
}

/// Assembles sections in the fixed order role, memory, context, template, instruction.
pub fn augment(record: &PromptRecord, extra: &Augmentation<'_>) -> Result<PromptRecord, BackendError> {
    if record.is_augmented {
        return Err(BackendError::AlreadyAugmented);
    }
    let mut sections = Vec::new();
    let nonempty = |s: Option<&str>| s.filter(|s| !s.is_empty()).map(str::to_string);
    if let Some(r) = nonempty(extra.role) {
        sections.push((SectionKind::RoleSpec, r));
    }
    if let Some(m) = nonempty(extra.memory_excerpt) {
        sections.push((SectionKind::MemoryExcerpt, m));
    }
    if let Some(c) = nonempty(extra.context_info) {
        sections.push((SectionKind::ContextInfo, c));
    }
    if let Some(t) = extra.template {
        sections.push((SectionKind::TemplateBody, t.fill(&extra.bindings)?));
    }
    sections.push((SectionKind::Instruction, record.base.clone()));
    let augmented = sections.iter().map(|(_, c)| c.as_str()).collect::<Vec<_>>().join("\n\n");
    Ok(PromptRecord {
        base: record.base.clone(),
        augmented,
        sections,
        response: None,
        is_augmented: true,
    })
}

pub fn augment_prompt(base: &str, extra: &Augmentation<'_>) -> Result<PromptRecord, BackendError> {
    augment(&PromptRecord::plain(base), extra)
}

/// Who is asking and why; scripted rules match on it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CallContext {
    pub agent_type: Option<AgentType>,
    pub action_kind: Option<ActionKind>,
    /// Engine step that issued the call, e.g. `execute`, `orchestrate`, `summarize`.
    pub purpose: String,
}

impl CallContext {
    pub fn new(purpose: &str) -> Self {
        Self { purpose: purpose.to_string(), ..Self::default() }
    }

    pub fn action(mut self, kind: ActionKind) -> Self {
        self.action_kind = Some(kind);
        self
    }

    pub fn agent(mut self, t: AgentType) -> Self {
        self.agent_type = Some(t);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matcher {
    #[serde(default)]
    pub agent_type: Option<AgentType>,
    #[serde(default)]
    pub action_kind: Option<ActionKind>,
    #[serde(default)]
    pub purpose: Option<String>,
    /// Inclusive 1-based call-index range.
    #[serde(default)]
    pub step_range: Option<(u64, u64)>,
    #[serde(default)]
    pub prompt_substring: Option<String>,
}

impl Matcher {
    fn matches(&self, ctx: &CallContext, step: u64, prompt: &str) -> bool {
        self.agent_type.is_none_or(|t| ctx.agent_type == Some(t))
            && self.action_kind.is_none_or(|k| ctx.action_kind == Some(k))
            && self.purpose.as_deref().is_none_or(|p| ctx.purpose == p)
            && self.step_range.is_none_or(|(lo, hi)| (lo..=hi).contains(&step))
            && self.prompt_substring.as_deref().is_none_or(|s| prompt.contains(s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, rename = "match")]
    pub matcher: Matcher,
    /// One response, or several to pick from with the seeded generator.
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub default_response: String,
}

impl Script {
    pub fn rule(mut self, matcher: Matcher, response: &str) -> Self {
        self.rules.push(ScriptRule { matcher, response: Some(response.to_string()), responses: vec![] });
        self
    }

    pub fn default_response(mut self, r: &str) -> Self {
        self.default_response = r.to_string();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Scripted {
        script: Script,
        #[serde(default)]
        seed: u64,
    },
    HttpChat(HttpChatConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpChatConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token. No auth header when absent.
    #[serde(default)]
    pub auth_token_env_name: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_backoff_ms() -> u64 {
    250
}

impl BackendConfig {
    pub fn scripted(script: Script, seed: u64) -> Self {
        BackendConfig::Scripted { script, seed }
    }

    pub fn check(&self) -> Result<(), BackendError> {
        match self {
            BackendConfig::Scripted { script, .. } => {
                if let Some(r) = script.rules.iter().find(|r| r.response.is_none() && r.responses.is_empty()) {
                    return Err(BackendError::InvalidConfig(format!(
                        "script rule {:?} has no response",
                        r.matcher
                    )));
                }
                Ok(())
            }
            BackendConfig::HttpChat(c) => {
                if c.base_url.trim().is_empty() || c.model_name.trim().is_empty() {
                    return Err(BackendError::InvalidConfig("base_url and model_name are required".into()));
                }
                if !(0.0..=2.0).contains(&c.temperature) {
                    return Err(BackendError::InvalidConfig(format!(
                        "temperature {} outside [0, 2]",
                        c.temperature
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn build(&self) -> Result<Box<dyn ReasoningBackend>, BackendError> {
        self.check()?;
        Ok(match self {
            BackendConfig::Scripted { script, seed } => Box::new(ScriptedBackend::new(script.clone(), *seed)),
            BackendConfig::HttpChat(c) => Box::new(HttpChatBackend::new(c.clone())?),
        })
    }
}

pub trait ReasoningBackend: Send {
    fn complete(&mut self, ctx: &CallContext, prompt: &PromptRecord) -> Result<String, BackendError>;

    /// Number of completed calls so far.
    fn calls(&self) -> u64;
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    script: Script,
    seed: u64,
    step: u64,
}

impl ScriptedBackend {
    pub fn new(script: Script, seed: u64) -> Self {
        Self { script, seed, step: 0 }
    }

    /// Pure response function of (script, seed, step, prompt).
    pub fn respond(script: &Script, seed: u64, step: u64, ctx: &CallContext, prompt: &str) -> String {
        let Some(rule) = script.rules.iter().find(|r| r.matcher.matches(ctx, step, prompt)) else {
            return script.default_response.clone();
        };
        if rule.responses.is_empty() {
            return rule.response.clone().unwrap_or_default();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rule.responses[rng.random_range(0..rule.responses.len())].clone()
    }
}

impl ReasoningBackend for ScriptedBackend {
    fn complete(&mut self, ctx: &CallContext, prompt: &PromptRecord) -> Result<String, BackendError> {
        self.step += 1;
        Ok(Self::respond(&self.script, self.seed, self.step, ctx, &prompt.augmented))
    }

    fn calls(&self) -> u64 {
        self.step
    }
}

pub struct HttpChatBackend {
    config: HttpChatConfig,
    client: reqwest::blocking::Client,
    calls: u64,
}

impl HttpChatBackend {
    pub fn new(config: HttpChatConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        Ok(Self { config, client, calls: 0 })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// Request body for one single-turn completion.
    pub fn request_body(config: &HttpChatConfig, prompt: &PromptRecord) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some((_, role)) = prompt.sections.iter().find(|(k, _)| *k == SectionKind::RoleSpec) {
            messages.push(json!({"role": "system", "content": role}));
        }
        messages.push(json!({"role": "user", "content": prompt.augmented}));
        json!({"model": config.model_name, "messages": messages, "temperature": config.temperature})
    }

    fn token(&self) -> Result<Option<String>, BackendError> {
        match &self.config.auth_token_env_name {
            None => Ok(None),
            Some(name) => std::env::var(name)
                .map(Some)
                .map_err(|_| BackendError::NoAuthToken(name.clone())),
        }
    }

    fn attempt(&self, token: Option<&str>, body: &serde_json::Value) -> Result<String, BackendError> {
        let mut req = self.client.post(self.endpoint()).json(body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::BackendUnavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::HttpStatus(status.as_u16()));
        }
        let v: serde_json::Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::BackendUnavailable(format!("unreadable response: {e}"))
            }
        })?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::BackendUnavailable("response has no choices[0].message.content".into()))
    }
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Timeout | BackendError::BackendUnavailable(_) => true,
        BackendError::HttpStatus(code) => *code == 429 || *code >= 500,
        _ => false,
    }
}

impl ReasoningBackend for HttpChatBackend {
    fn complete(&mut self, _ctx: &CallContext, prompt: &PromptRecord) -> Result<String, BackendError> {
        let token = self.token()?;
        let body = Self::request_body(&self.config, prompt);
        let mut attempt = 0;
        loop {
            match self.attempt(token.as_deref(), &body) {
                Ok(text) => {
                    self.calls += 1;
                    return Ok(text);
                }
                Err(e) if retryable(&e) && attempt < self.config.max_retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(self.config.backoff_ms));
                }
                Err(e) if self.config.max_retries > 0 && retryable(&e) => {
                    return Err(BackendError::BackendUnavailable(e.to_string()));
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_only_is_identity() {
        let r = augment_prompt("do it", &Augmentation::default()).unwrap();
        assert_eq!(r.augmented, "do it");
        assert_eq!(r.sections, vec![(SectionKind::Instruction, "do it".to_string())]);
    }

    #[test]
    fn sections_in_fixed_order() {
        let extra = Augmentation {
            role: Some("QA engineer"),
            memory_excerpt: Some("prior failure x"),
            ..Default::default()
        };
        let r = augment_prompt("check", &extra).unwrap();
        let role = r.augmented.find("QA engineer").unwrap();
        let mem = r.augmented.find("prior failure x").unwrap();
        let base = r.augmented.find("check").unwrap();
        assert!(role < mem && mem < base);
        let kinds: Vec<_> = r.sections.iter().map(|(k, _)| *k).collect();
        assert_eq!(kinds, [SectionKind::RoleSpec, SectionKind::MemoryExcerpt, SectionKind::Instruction]);
    }

    #[test]
    fn unbound_placeholder() {
        let t = PromptTemplate::new("t", "Work on {task}", [ActionKind::ExecuteTask]);
        let extra = Augmentation { template: Some(&t), ..Default::default() };
        assert_eq!(augment_prompt("x", &extra), Err(BackendError::UnboundPlaceholder("task".into())));
    }

    #[test]
    fn template_filled_and_checked() {
        let t = PromptTemplate::new("t", "Work on {task} for {who}", []);
        assert_eq!(t.placeholders.len(), 2);
        let mut extra = Augmentation { template: Some(&t), ..Default::default() };
        extra.bindings.insert("task".into(), "A".into());
        extra.bindings.insert("who".into(), "B".into());
        let r = augment_prompt("go", &extra).unwrap();
        assert!(r.augmented.starts_with("Work on A for B"));

        let mut bad = t.clone();
        bad.placeholders.insert("other".into());
        assert!(bad.normalized().is_err());
    }

    #[test]
    fn no_double_augmentation() {
        let r = augment_prompt("x", &Augmentation { role: Some("r"), ..Default::default() }).unwrap();
        assert_eq!(augment(&r, &Augmentation::default()), Err(BackendError::AlreadyAugmented));
    }

    #[test]
    fn scripted_rules_and_default() {
        let script = Script::default()
            .rule(
                Matcher { action_kind: Some(ActionKind::DecomposeTask), ..Default::default() },
                "1. A\n2. B",
            )
            .default_response("fallback");
        let mut b = ScriptedBackend::new(script, 0);
        let p = PromptRecord::plain("decompose");
        let ctx = CallContext::new("decompose").action(ActionKind::DecomposeTask);
        assert_eq!(b.complete(&ctx, &p).unwrap(), "1. A\n2. B");
        assert_eq!(b.complete(&CallContext::new("other"), &p).unwrap(), "fallback");
        assert_eq!(b.calls(), 2);
    }

    #[test]
    fn step_range_and_substring() {
        let script = Script::default()
            .rule(Matcher { step_range: Some((2, 3)), ..Default::default() }, "mid")
            .rule(Matcher { prompt_substring: Some("magic".into()), ..Default::default() }, "found")
            .default_response("d");
        let mut b = ScriptedBackend::new(script, 0);
        let ctx = CallContext::new("x");
        let out: Vec<_> = ["magic", "magic", "a", "magic"]
            .iter()
            .map(|p| b.complete(&ctx, &PromptRecord::plain(*p)).unwrap())
            .collect();
        assert_eq!(out, ["found", "mid", "mid", "found"]);
    }

    #[test]
    fn seeded_choice_is_reproducible() {
        let script = Script {
            rules: vec![ScriptRule {
                matcher: Matcher::default(),
                response: None,
                responses: (0..10).map(|i| format!("r{i}")).collect(),
            }],
            default_response: String::new(),
        };
        let run = |seed| {
            let mut b = ScriptedBackend::new(script.clone(), seed);
            (0..50)
                .map(|_| b.complete(&CallContext::new("x"), &PromptRecord::plain("p")).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn config_checks() {
        let c = BackendConfig::HttpChat(HttpChatConfig {
            base_url: String::new(),
            model_name: "m".into(),
            auth_token_env_name: None,
            temperature: 0.0,
            timeout_ms: 10,
            max_retries: 0,
            backoff_ms: 0,
        });
        assert!(c.check().is_err());
        let json = r#"{"kind":"http_chat","base_url":"http://x","model_name":"m"}"#;
        let c: BackendConfig = serde_json::from_str(json).unwrap();
        match &c {
            BackendConfig::HttpChat(h) => assert_eq!(h.temperature, 0.0),
            _ => panic!(),
        }
        assert!(c.check().is_ok());
    }

    #[test]
    fn request_body_shape() {
        let cfg = HttpChatConfig {
            base_url: "http://x".into(),
            model_name: "m".into(),
            auth_token_env_name: None,
            temperature: 0.0,
            timeout_ms: 10,
            max_retries: 0,
            backoff_ms: 0,
        };
        let p = augment_prompt("hi", &Augmentation { role: Some("planner"), ..Default::default() }).unwrap();
        let body = HttpChatBackend::request_body(&cfg, &p);
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "planner\n\nhi");
    }
}
