//! Expected-action state machines for the communication protocols.

use crate::error::EngineError;
use crate::ontology::ActionKind;

use super::scenario::ProtocolConfig;

/// Next action the protocol expects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expected {
    Kinds(Vec<ActionKind>),
    Terminal,
}

#[derive(Debug, Clone)]
pub struct ProtocolState {
    config: ProtocolConfig,
    last: Option<ActionKind>,
    /// Position in a strict stage list.
    stage: usize,
    cycles: u64,
}

impl ProtocolState {
    pub fn new(config: ProtocolConfig) -> Self {
        Self { config, last: None, stage: 0, cycles: 0 }
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    /// Completed returns to the protocol's first action.
    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn last(&self) -> Option<ActionKind> {
        self.last
    }

    pub fn next_expected(&self) -> Expected {
        use ActionKind::*;
        match &self.config {
            ProtocolConfig::StrictFinite { stages } => match stages.get(self.stage) {
                Some(s) => Expected::Kinds(vec![s.action]),
                None => Expected::Terminal,
            },
            ProtocolConfig::DialogueCycle { .. } => Expected::Kinds(match self.last {
                None | Some(EvaluateResult) => vec![DelegateTask],
                Some(DelegateTask) => vec![ExecuteTask],
                Some(_) => vec![EvaluateResult, DelegateTask],
            }),
            ProtocolConfig::MultiCycle { .. } => Expected::Kinds(match self.last {
                None => vec![DelegateTask],
                Some(DelegateTask) => vec![ExecuteTask],
                Some(ExecuteTask) => vec![EvaluateResult, CreateTask, DelegateTask],
                Some(EvaluateResult) => vec![ExecuteTask, CreateTask, DelegateTask],
                Some(_) => vec![CreateTask, DelegateTask],
            }),
        }
    }

    /// Records `kind`, refusing out-of-order actions.
    pub fn record(&mut self, kind: ActionKind) -> Result<(), EngineError> {
        match self.next_expected() {
            Expected::Kinds(ks) if ks.contains(&kind) => {}
            expected => {
                return Err(EngineError::ProtocolViolation {
                    expected: describe(&expected),
                    got: kind.to_string(),
                })
            }
        }
        let first = match &self.config {
            ProtocolConfig::StrictFinite { .. } => self.stage == 0,
            _ => kind == ActionKind::DelegateTask,
        };
        if first {
            self.cycles += 1;
        }
        if let ProtocolConfig::StrictFinite { .. } = self.config {
            self.stage += 1;
        }
        self.last = Some(kind);
        Ok(())
    }

    /// Starts another pass over a strict stage list.
    pub fn restart_pass(&mut self) {
        self.stage = 0;
    }
}

fn describe(e: &Expected) -> String {
    match e {
        Expected::Terminal => "Terminal".to_string(),
        Expected::Kinds(ks) => ks.iter().map(ToString::to_string).collect::<Vec<_>>().join(" or "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::scenario::Stage;
    use ActionKind::*;

    fn dialogue() -> ProtocolState {
        ProtocolState::new(ProtocolConfig::DialogueCycle {
            instructor: "i".into(),
            executor: "e".into(),
            max_cycles: 3,
        })
    }

    #[test]
    fn dialogue_alternates() {
        let mut p = dialogue();
        p.record(DelegateTask).unwrap();
        assert_eq!(p.next_expected(), Expected::Kinds(vec![ExecuteTask]));
        p.record(ExecuteTask).unwrap();
        assert!(matches!(p.record(ExecuteTask), Err(EngineError::ProtocolViolation { .. })));
        p.record(EvaluateResult).unwrap();
        p.record(DelegateTask).unwrap();
        assert_eq!(p.cycles(), 2);
    }

    #[test]
    fn strict_walks_list() {
        let stage = |a: &str, k| Stage { agent: a.into(), action: k, artefact: a.to_string() };
        let mut p = ProtocolState::new(ProtocolConfig::StrictFinite {
            stages: vec![stage("spec", ExecuteTask), stage("code", ExecuteTask), stage("test", EvaluateResult)],
        });
        p.record(ExecuteTask).unwrap();
        p.record(ExecuteTask).unwrap();
        assert_eq!(p.next_expected(), Expected::Kinds(vec![EvaluateResult]));
        p.record(EvaluateResult).unwrap();
        assert_eq!(p.next_expected(), Expected::Terminal);
        assert!(p.record(ExecuteTask).is_err());
        p.restart_pass();
        p.record(ExecuteTask).unwrap();
        assert_eq!(p.cycles(), 2);
    }

    #[test]
    fn multi_cycle_order() {
        let mut p = ProtocolState::new(ProtocolConfig::MultiCycle {
            creation: "c".into(),
            prioritization: "p".into(),
            execution: "x".into(),
        });
        assert!(p.record(ExecuteTask).is_err());
        for k in [DelegateTask, ExecuteTask, CreateTask, CreateTask, DelegateTask, ExecuteTask, EvaluateResult, ExecuteTask] {
            p.record(k).unwrap();
        }
        assert_eq!(p.cycles(), 2);
    }
}
