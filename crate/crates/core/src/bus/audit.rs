use serde::{Deserialize, Serialize};

use super::message::{AclMessage, AgentId, Payload};

/// Outcome of a send-time authorization check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Authorization {
    /// `organization` names the rule set that admitted the message.
    Allowed { organization: String },
    Denied { reason: String },
}

/// Send-time middleware consulted for every message that passes the
/// structural checks.
pub trait SendPolicy<C: Payload>: Send + Sync {
    fn authorize(&self, msg: &AclMessage<C>) -> Authorization;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditDecision {
    Allowed,
    Denied,
}

/// One record per send attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub tick: u64,
    pub summary: String,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub ontology: String,
    pub decision: AuditDecision,
    /// Admitting organization when allowed, denial reason otherwise.
    pub detail: String,
}
