use serde::{Deserialize, Serialize};

use crate::bus::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlugState {
    Unplugged,
    Plugging,
    Plugged,
    Unplugging,
}

impl PlugState {
    /// The plug cycle, plus the timeout fallback from plugging.
    pub fn can_move_to(self, next: PlugState) -> bool {
        use PlugState::*;
        matches!(
            (self, next),
            (Unplugged, Plugging) | (Plugging, Plugged) | (Plugged, Unplugging) | (Unplugging, Unplugged) | (Plugging, Unplugged)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal plug transition {from:?} -> {to:?}")]
pub struct IllegalTransition {
    pub from: PlugState,
    pub to: PlugState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlugSession {
    pub session_id: String,
    pub state: PlugState,
    pub endpoint: AgentId,
    pub opened_at: Option<u64>,
    pub closed_at: Option<u64>,
}

impl PlugSession {
    pub fn new(session_id: impl Into<String>, endpoint: AgentId) -> Self {
        Self {
            session_id: session_id.into(),
            state: PlugState::Unplugged,
            endpoint,
            opened_at: None,
            closed_at: None,
        }
    }

    pub fn move_to(&mut self, next: PlugState, tick: u64) -> Result<(), IllegalTransition> {
        if !self.state.can_move_to(next) {
            return Err(IllegalTransition { from: self.state, to: next });
        }
        match next {
            PlugState::Plugged => self.opened_at = Some(tick),
            PlugState::Unplugged => self.closed_at = Some(tick),
            _ => {}
        }
        self.state = next;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnplugPolicy {
    /// Stay plugged until told otherwise.
    #[default]
    Explicit,
    /// Unplug as soon as no Interface 6 conversation is in flight.
    OnIdle,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlugMode {
    #[default]
    Lazy,
    Eager,
}
