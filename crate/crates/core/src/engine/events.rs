//! Line-delimited event stream of a run.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(flatten)]
    pub body: Map<String, Value>,
}

impl Event {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.body.get(key)
    }

    pub fn str_field(&self, key: &str) -> Option<&str> {
        self.body.get(key).and_then(Value::as_str)
    }
}

pub type EventSink = Box<dyn FnMut(&Event) + Send>;

/// Event store with an optional live subscriber.
pub struct EventLog {
    events: Vec<Event>,
    sink: Option<EventSink>,
}

impl EventLog {
    pub fn new(sink: Option<EventSink>) -> Self {
        Self { events: Vec::new(), sink }
    }

    /// Appends an event; `body` must serialize to a JSON object.
    pub fn emit(&mut self, kind: &str, body: impl Serialize) -> u64 {
        let body = match serde_json::to_value(body).expect("event body serializes") {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        let seq = self.events.len() as u64 + 1;
        let ev = Event { seq, kind: kind.to_string(), body };
        if let Some(sink) = self.sink.as_mut() {
            sink(&ev);
        }
        self.events.push(ev);
        seq
    }

    pub fn last_seq(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// Renders events as newline-terminated JSON lines.
pub fn to_ndjson(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}
