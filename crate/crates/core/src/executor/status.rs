use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Pending,
    Running,
    Done,
    Failed,
    Aborted,
}

impl RunState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunState::Done | RunState::Failed | RunState::Aborted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    pub state: RunState,
    pub calls_so_far: u64,
    pub partial_outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
    /// Set when the record carries the incomplete flag.
    #[serde(default)]
    pub incomplete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Shared progress of one run. Cloning yields another view of the same run.
#[derive(Debug, Clone)]
pub struct RunHandle {
    status: Arc<Mutex<RunStatus>>,
}

impl RunHandle {
    /// A handle not attached to any registry.
    pub fn detached(run_id: impl Into<String>) -> Self {
        Self {
            status: Arc::new(Mutex::new(RunStatus {
                run_id: run_id.into(),
                state: RunState::Pending,
                calls_so_far: 0,
                partial_outputs: BTreeMap::new(),
                record_id: None,
                incomplete: false,
                error: None,
            })),
        }
    }

    pub fn id(&self) -> String {
        self.status.lock().unwrap().run_id.clone()
    }

    pub fn status(&self) -> RunStatus {
        self.status.lock().unwrap().clone()
    }

    /// Moves forward along pending -> running -> {done, failed, aborted}.
    /// Backward or post-terminal transitions are ignored.
    fn advance(&self, to: RunState, update: impl FnOnce(&mut RunStatus)) -> bool {
        let mut status = self.status.lock().unwrap();
        if status.state.is_terminal() || to <= status.state {
            return false;
        }
        status.state = to;
        update(&mut status);
        true
    }

    pub(crate) fn start(&self) -> bool {
        self.advance(RunState::Running, |_| {})
    }

    pub(crate) fn record_call(&self, calls: u64, node: &str, output: &str) {
        let mut status = self.status.lock().unwrap();
        status.calls_so_far = status.calls_so_far.max(calls);
        status.partial_outputs.insert(node.to_string(), output.to_string());
    }

    pub(crate) fn finish(&self, record_id: &str) {
        self.advance(RunState::Done, |s| s.record_id = Some(record_id.to_string()));
    }

    pub(crate) fn abort(&self, record_id: &str, reason: String) {
        self.advance(RunState::Aborted, |s| {
            s.record_id = Some(record_id.to_string());
            s.incomplete = true;
            s.error = Some(reason);
        });
    }

    pub fn fail(&self, reason: String) {
        self.advance(RunState::Failed, |s| s.error = Some(reason));
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunRegistry {
    runs: Arc<Mutex<HashMap<String, RunHandle>>>,
}

impl RunRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, run_id: impl Into<String>) -> RunHandle {
        let handle = RunHandle::detached(run_id);
        self.runs.lock().unwrap().insert(handle.id(), handle.clone());
        handle
    }

    pub fn handle(&self, run_id: &str) -> Option<RunHandle> {
        self.runs.lock().unwrap().get(run_id).cloned()
    }

    pub fn run_status(&self, run_id: &str) -> Option<RunStatus> {
        self.handle(run_id).map(|h| h.status())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_machine_is_monotone() {
        let handle = RunHandle::detached("r");
        assert_eq!(handle.status().state, RunState::Pending);
        assert!(handle.start());
        assert!(!handle.start());
        handle.finish("r");
        assert_eq!(handle.status().state, RunState::Done);
        handle.fail("late".into());
        assert_eq!(handle.status().state, RunState::Done);
        assert_eq!(handle.status().error, None);
    }

    #[test]
    fn registry_lookup() {
        let registry = RunRegistry::new();
        registry.register("r1");
        assert!(registry.run_status("r1").is_some());
        assert!(registry.run_status("nope").is_none());
    }
}
