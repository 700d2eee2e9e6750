//! HTTP control service: activities, event streams, approvals, commands,
//! profiles and reports.
//!
//! Each activity runs on its own thread. The engine pushes events into a
//! shared log; readers take snapshots and stream clients tail the log by
//! sequence number, so a slow client never holds up the engine.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{oneshot, watch};

use crate::engine::events::Event;
use crate::engine::gate::{apply_command, ApprovalPoint, ApprovalState, Command, GateContext, GateDecision};
use crate::engine::scenario::Scenario;
use crate::engine::source::{ChannelSource, Envelope};
use crate::engine;
use crate::ontology::{ActivityOutcome, AgentId, OutcomeStatus, Phase};
use crate::profile::{builtin, builtin_profiles, llm_builtins, parse_profile, validate, SystemProfile};
use crate::report::{level_distribution, render_bars, render_radar, render_table, Dimension};
use crate::taxonomy::{AspectConfig, AspectId};

/// Events sent per stream chunk.
const CHUNK_EVENTS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub goal: String,
    pub protocol: String,
    pub roster: Vec<AgentId>,
    pub aspects: BTreeMap<AspectId, AspectConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityHandle {
    pub id: String,
    /// Current phase name, or the outcome status once terminal.
    pub status: String,
    pub phase: Phase,
    pub action_count: u64,
    /// Sequence number of the newest event, 0 before the first.
    pub last_seq: u64,
    pub pending_approvals: Vec<ApprovalPoint>,
    pub outcome: Option<ActivityOutcome>,
    pub scenario: ScenarioSummary,
}

#[derive(Debug, Default)]
struct Live {
    events: Vec<Event>,
    phase: Option<Phase>,
    action_count: u64,
    approvals: BTreeMap<String, ApprovalPoint>,
    outcome: Option<ActivityOutcome>,
    done: bool,
}

impl Live {
    fn observe(&mut self, ev: &Event) {
        match ev.kind.as_str() {
            "action" => self.action_count += 1,
            "phase" => {
                if let Some(to) = ev.get("to").and_then(|v| serde_json::from_value(v.clone()).ok()) {
                    self.phase = Some(to);
                }
            }
            "approval" => {
                if let Ok(p) = serde_json::from_value::<ApprovalPoint>(Value::Object(ev.body.clone())) {
                    self.approvals.insert(p.id.clone(), p);
                }
            }
            "outcome" => {
                if let Ok(o) = serde_json::from_value::<ActivityOutcome>(Value::Object(ev.body.clone())) {
                    self.outcome = Some(o);
                }
            }
            _ => {}
        }
        self.events.push(ev.clone());
    }
}

struct Entry {
    id: String,
    summary: ScenarioSummary,
    levels: BTreeMap<AspectId, AspectConfig>,
    live: Mutex<Live>,
    notify: watch::Sender<u64>,
    commands: Mutex<Sender<Envelope>>,
}

impl Entry {
    fn live(&self) -> MutexGuard<'_, Live> {
        self.live.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn handle(&self) -> ActivityHandle {
        let live = self.live();
        let phase = live.phase.unwrap_or(Phase::Decomposition);
        let status = match &live.outcome {
            Some(o) => format!("{:?}", o.status),
            None => format!("{phase:?}"),
        };
        ActivityHandle {
            id: self.id.clone(),
            status,
            phase,
            action_count: live.action_count,
            last_seq: live.events.last().map_or(0, |e| e.seq),
            pending_approvals: live
                .approvals
                .values()
                .filter(|p| p.state == ApprovalState::Pending)
                .cloned()
                .collect(),
            outcome: live.outcome.clone(),
            scenario: self.summary.clone(),
        }
    }

    fn mark_done(&self) {
        let n = {
            let mut live = self.live();
            live.done = true;
            live.events.len() as u64
        };
        self.notify.send_replace(n);
    }
}

/// Marks the activity finished even if the engine thread panics.
struct DoneGuard(Arc<Entry>);

impl Drop for DoneGuard {
    fn drop(&mut self) {
        let mut live = self.0.live();
        if live.outcome.is_none() {
            live.outcome = Some(ActivityOutcome::failed(OutcomeStatus::Error, "engine stopped unexpectedly"));
            live.phase = Some(Phase::Terminal);
        }
        drop(live);
        self.0.mark_done();
    }
}

/// Shared service state.
#[derive(Default)]
pub struct Service {
    activities: Mutex<BTreeMap<String, Arc<Entry>>>,
    next_id: AtomicU64,
    /// Directory that registry paths in submitted scenarios are resolved against.
    base_dir: Option<PathBuf>,
}

impl Service {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_base_dir(dir: impl Into<PathBuf>) -> Self {
        Self { base_dir: Some(dir.into()), ..Self::default() }
    }

    fn get(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        self.activities
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("UnknownActivity", format!("no activity `{id}`")))
    }

    /// Validates the scenario, starts the engine thread and returns at once.
    pub fn start(&self, mut scenario: Scenario) -> Result<ActivityHandle, ApiError> {
        let base = self.base_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        scenario.resolve_registry(&base).map_err(ApiError::invalid_scenario)?;
        scenario.validate().map_err(ApiError::invalid_scenario)?;
        let backend = scenario.backend.build().map_err(|e| ApiError::invalid_scenario(e.into()))?;
        let id = format!("a{}", self.next_id.fetch_add(1, Ordering::SeqCst) + 1);
        let (tx, rx) = std::sync::mpsc::channel();
        let (notify, _) = watch::channel(0u64);
        let entry = Arc::new(Entry {
            id: id.clone(),
            summary: ScenarioSummary {
                goal: scenario.goal.text.clone(),
                protocol: scenario.protocol.name().to_string(),
                roster: scenario.roster.iter().map(|a| a.id.clone()).collect(),
                aspects: scenario.aspects.clone(),
            },
            levels: scenario.aspects.clone(),
            live: Mutex::new(Live::default()),
            notify,
            commands: Mutex::new(tx),
        });
        let handle = entry.handle();
        self.activities.lock().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), entry.clone());
        std::thread::Builder::new()
            .name(format!("activity-{id}"))
            .spawn(move || {
                let guard = DoneGuard(entry.clone());
                let sink_entry = entry.clone();
                let sink = Box::new(move |ev: &Event| {
                    let n = {
                        let mut live = sink_entry.live();
                        live.observe(ev);
                        live.events.len() as u64
                    };
                    sink_entry.notify.send_replace(n);
                });
                let source = Box::new(ChannelSource::new(&scenario.interventions, rx));
                if let Err(e) = engine::run_with_backend(&scenario, backend, source, Some(sink)) {
                    let mut live = entry.live();
                    live.outcome = Some(ActivityOutcome::failed(OutcomeStatus::Error, e.to_string()));
                    live.phase = Some(Phase::Terminal);
                }
                drop(guard);
            })
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(handle)
    }

    /// Sends a command to the engine and waits for its gate decision.
    /// Commands for a finished activity are gated locally as terminal.
    pub async fn submit(&self, id: &str, command: Command) -> Result<GateDecision, ApiError> {
        let entry = self.get(id)?;
        if !entry.live().done {
            let (tx, rx) = oneshot::channel();
            let sent = entry
                .commands
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .send(Envelope { command: command.clone(), reply: Some(tx) })
                .is_ok();
            if sent {
                if let Ok(d) = rx.await {
                    return Ok(d);
                }
            }
        }
        Ok(apply_command(&command, &entry.levels, GateContext { terminal: true, pending_approval: None }))
    }

    pub fn handle(&self, id: &str) -> Result<ActivityHandle, ApiError> {
        Ok(self.get(id)?.handle())
    }

    pub fn approvals(&self, id: &str) -> Result<Vec<ApprovalPoint>, ApiError> {
        Ok(self.get(id)?.live().approvals.values().cloned().collect())
    }

    /// Snapshot of the events logged so far with `seq >= from`.
    pub fn events_since(&self, id: &str, from: u64) -> Result<(Vec<Event>, bool), ApiError> {
        let entry = self.get(id)?;
        let live = entry.live();
        let start = (from.max(1) - 1) as usize;
        Ok((live.events.get(start..).unwrap_or_default().to_vec(), live.done))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    pub detail: String,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        Self { status: status.as_u16(), error: error.to_string(), detail: detail.into() }
    }

    fn not_found(error: &str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, error, detail)
    }

    fn bad_request(error: &str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error, detail)
    }

    fn invalid_scenario(e: crate::error::EngineError) -> Self {
        let detail = match e {
            crate::error::EngineError::InvalidScenario(d) => d,
            other => other.to_string(),
        };
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidScenario", detail)
    }

    fn internal(detail: String) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type Shared = Arc<Service>;

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/activities", post(start_activity).get(list_activities))
        .route("/activities/{id}", get(get_activity))
        .route("/activities/{id}/events", get(stream_events))
        .route("/activities/{id}/approvals", get(get_approvals))
        .route("/activities/{id}/commands", post(submit_command))
        .route("/profiles", get(list_profiles))
        .route("/profiles/validate", post(validate_profile))
        .route("/reports/radar/{file}", get(radar))
        .route("/reports/bars/{file}", get(bars))
        .route("/reports/table.md", get(table))
        .with_state(service)
}

/// Binds and serves until the process exits.
pub async fn serve(addr: std::net::SocketAddr, service: Service) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(service))).await
}

async fn start_activity(State(svc): State<Shared>, body: String) -> Result<(StatusCode, Json<ActivityHandle>), ApiError> {
    let scenario = Scenario::parse(&body).map_err(ApiError::invalid_scenario)?;
    Ok((StatusCode::CREATED, Json(svc.start(scenario)?)))
}

async fn list_activities(State(svc): State<Shared>) -> Json<Vec<ActivityHandle>> {
    let entries: Vec<Arc<Entry>> =
        svc.activities.lock().unwrap_or_else(|e| e.into_inner()).values().cloned().collect();
    Json(entries.iter().map(|e| e.handle()).collect())
}

async fn get_activity(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Json<ActivityHandle>, ApiError> {
    Ok(Json(svc.handle(&id)?))
}

async fn get_approvals(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Json<Vec<ApprovalPoint>>, ApiError> {
    Ok(Json(svc.approvals(&id)?))
}

#[derive(Debug, Deserialize)]
struct FromQuery {
    #[serde(default)]
    from: u64,
}

async fn stream_events(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<FromQuery>,
) -> Result<Response, ApiError> {
    let entry = svc.get(&id)?;
    let rx = entry.notify.subscribe();
    let next = q.from.max(1);
    let stream = futures::stream::unfold((entry, rx, next), |(entry, mut rx, next)| async move {
        loop {
            rx.borrow_and_update();
            let (chunk, done, next_after) = {
                let live = entry.live();
                let start = (next - 1) as usize;
                if start < live.events.len() {
                    let end = (start + CHUNK_EVENTS).min(live.events.len());
                    let text: String = live.events[start..end].iter().map(|e| e.to_line() + "\n").collect();
                    (Some(text), live.done, end as u64 + 1)
                } else {
                    (None, live.done, next)
                }
            };
            if let Some(text) = chunk {
                return Some((Ok::<_, Infallible>(text), (entry, rx, next_after)));
            }
            if done || rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response())
}

async fn submit_command(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<GateDecision>, ApiError> {
    svc.get(&id)?;
    let mut value: Value =
        serde_json::from_str(&body).map_err(|e| ApiError::bad_request("InvalidCommand", e.to_string()))?;
    if let Value::Object(m) = &mut value {
        m.entry("issued_at").or_insert_with(|| json!("Runtime"));
    }
    let command: Command =
        serde_json::from_value(value).map_err(|e| ApiError::bad_request("InvalidCommand", e.to_string()))?;
    Ok(Json(svc.submit(&id, command).await?))
}

async fn list_profiles() -> Json<Vec<SystemProfile>> {
    Json(builtin_profiles())
}

async fn validate_profile(body: String) -> Response {
    match parse_profile(&body) {
        Ok(parsed) => {
            let report = validate(&parsed.profile);
            Json(json!({"valid": report.valid, "issues": report.issues, "notices": parsed.notices})).into_response()
        }
        Err(e) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({"valid": false, "issues": [{"path": "", "message": e.to_string()}], "notices": []})),
        )
            .into_response(),
    }
}

fn svg(body: String) -> Response {
    ([(header::CONTENT_TYPE, "image/svg+xml")], body).into_response()
}

fn strip_ext<'a>(file: &'a str, ext: &str) -> Result<&'a str, ApiError> {
    file.strip_suffix(ext).ok_or_else(|| ApiError::not_found("NotFound", format!("expected a `{ext}` path")))
}

async fn radar(Path(file): Path<String>) -> Result<Response, ApiError> {
    let name = strip_ext(&file, ".svg")?;
    let profile =
        builtin(name).ok_or_else(|| ApiError::not_found("UnknownProfile", format!("no profile `{name}`")))?;
    Ok(svg(render_radar(&profile)))
}

#[derive(Debug, Deserialize)]
struct PopulationQuery {
    /// `llm` (default) or `all`.
    #[serde(default)]
    population: Option<String>,
}

async fn bars(Path(file): Path<String>, Query(q): Query<PopulationQuery>) -> Result<Response, ApiError> {
    let dim: Dimension = strip_ext(&file, ".svg")?
        .parse()
        .map_err(|e: String| ApiError::not_found("UnknownDimension", e))?;
    let profiles = match q.population.as_deref() {
        None | Some("llm") => llm_builtins(),
        Some("all") => builtin_profiles(),
        Some(other) => return Err(ApiError::bad_request("InvalidPopulation", format!("unknown population `{other}`"))),
    };
    Ok(svg(render_bars(&level_distribution(&profiles, dim))))
}

#[derive(Debug, Deserialize)]
struct NamesQuery {
    /// Comma-separated profile names; all builtins when absent.
    #[serde(default)]
    names: Option<String>,
}

async fn table(Query(q): Query<NamesQuery>) -> Result<Response, ApiError> {
    let profiles = match q.names.as_deref() {
        None => builtin_profiles(),
        Some(names) => names
            .split(',')
            .filter(|n| !n.trim().is_empty())
            .map(|n| builtin(n.trim()).ok_or_else(|| ApiError::not_found("UnknownProfile", format!("no profile `{}`", n.trim()))))
            .collect::<Result<Vec<_>, _>>()?,
    };
    Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], render_table(&profiles)).into_response())
}
