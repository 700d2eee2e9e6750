//! Where runtime commands come from: scripted interventions or a live channel.

use std::sync::mpsc::Receiver;
use std::time::Duration;

use tokio::sync::oneshot;

use super::gate::{Command, GateDecision};
use super::scenario::{Intervention, Trigger};

/// A command plus an optional channel for its gate decision.
#[derive(Debug)]
pub struct Envelope {
    pub command: Command,
    pub reply: Option<oneshot::Sender<GateDecision>>,
}

impl Envelope {
    pub fn new(command: Command) -> Self {
        Self { command, reply: None }
    }
}

pub trait CommandSource: Send {
    /// Commands available at an action boundary; `actions` is the current log length.
    fn poll(&mut self, actions: u64) -> Vec<Envelope>;

    /// Next command while the `ordinal`-th (1-based) approval point is pending.
    /// `None` means no answer arrived before `timeout`.
    fn next_for_approval(&mut self, ordinal: usize, timeout: Option<Duration>) -> Option<Envelope>;
}

/// Delivers a scenario's interventions at their triggers.
#[derive(Debug, Default)]
pub struct ScriptedSource {
    pending: Vec<Intervention>,
}

impl ScriptedSource {
    /// Pre-run interventions are excluded; the engine applies them separately.
    pub fn new(interventions: &[Intervention]) -> Self {
        Self {
            pending: interventions.iter().filter(|i| i.trigger != Trigger::PreRun).cloned().collect(),
        }
    }
}

impl CommandSource for ScriptedSource {
    fn poll(&mut self, actions: u64) -> Vec<Envelope> {
        let mut out = Vec::new();
        self.pending.retain(|i| match i.trigger {
            Trigger::AtAction(n) if n <= actions => {
                out.push(Envelope::new(i.command.clone()));
                false
            }
            _ => true,
        });
        out
    }

    fn next_for_approval(&mut self, ordinal: usize, _timeout: Option<Duration>) -> Option<Envelope> {
        let pos = self.pending.iter().position(|i| i.trigger == Trigger::ApprovalPoint(ordinal))?;
        Some(Envelope::new(self.pending.remove(pos).command))
    }
}

/// Live commands from a channel, after any scripted interventions.
pub struct ChannelSource {
    scripted: ScriptedSource,
    rx: Receiver<Envelope>,
}

impl ChannelSource {
    pub fn new(interventions: &[Intervention], rx: Receiver<Envelope>) -> Self {
        Self { scripted: ScriptedSource::new(interventions), rx }
    }
}

impl CommandSource for ChannelSource {
    fn poll(&mut self, actions: u64) -> Vec<Envelope> {
        let mut out = self.scripted.poll(actions);
        out.extend(self.rx.try_iter());
        out
    }

    fn next_for_approval(&mut self, ordinal: usize, timeout: Option<Duration>) -> Option<Envelope> {
        if let Some(e) = self.scripted.next_for_approval(ordinal, timeout) {
            return Some(e);
        }
        match timeout {
            None => self.rx.recv().ok(),
            Some(t) => self.rx.recv_timeout(t).ok(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::gate::CommandKind;
    use crate::taxonomy::AspectId;

    fn halt_at(trigger: Trigger) -> Intervention {
        Intervention { trigger, command: Command::runtime(CommandKind::Halt, AspectId::Orch) }
    }

    #[test]
    fn scripted_triggers() {
        let mut s = ScriptedSource::new(&[
            halt_at(Trigger::AtAction(3)),
            halt_at(Trigger::ApprovalPoint(1)),
            halt_at(Trigger::PreRun),
        ]);
        assert!(s.poll(2).is_empty());
        assert_eq!(s.poll(3).len(), 1);
        assert!(s.poll(10).is_empty());
        assert!(s.next_for_approval(2, None).is_none());
        assert!(s.next_for_approval(1, None).is_some());
        assert!(s.next_for_approval(1, None).is_none());
    }

    #[test]
    fn channel_times_out() {
        let (_tx, rx) = std::sync::mpsc::channel();
        let mut s = ChannelSource::new(&[], rx);
        assert!(s.next_for_approval(1, Some(Duration::from_millis(5))).is_none());
    }
}
