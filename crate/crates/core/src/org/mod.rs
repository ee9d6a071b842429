//! Organizational model: three organizations whose interaction tables are
//! enforced on every bus send.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bus::{AclMessage, AgentKind, AuditDecision, AuditEntry, Authorization, Payload, SendPolicy};
use crate::content::ONTOLOGIES;

pub const CLINICAL_WORKFLOW_MANAGEMENT: &str = "ClinicalWorkflowManagement";
pub const PRESCRIBER_ORDER_ENTRY: &str = "ComputerizedPrescriberOrderEntry";
pub const DECISION_SUPPORT: &str = "ClinicalDecisionSupport";

pub const ORGANIZATION_NAMES: [&str; 3] = [CLINICAL_WORKFLOW_MANAGEMENT, PRESCRIBER_ORDER_ENTRY, DECISION_SUPPORT];

/// Expected totals over the whole spec.
pub const EXPECTED_AGENTS: usize = 10;
pub const EXPECTED_TASKS: usize = 9;
pub const EXPECTED_ROLES: usize = 3;
pub const EXPECTED_GOALS: usize = 3;

/// The default spec, also shipped as `data/org_spec.json`.
pub const DEFAULT_ORG_SPEC: &str = include_str!("../../data/org_spec.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub name: String,
    pub assigned_to: Vec<AgentKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub sender: AgentKind,
    pub receiver: AgentKind,
    pub ontology: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrganizationSpec {
    pub name: String,
    pub members: Vec<AgentKind>,
    pub roles: Vec<Role>,
    pub goals: Vec<String>,
    pub tasks: Vec<String>,
    pub allowed_interactions: Vec<Interaction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrgSpecFile {
    #[serde(default)]
    pub note: String,
    pub organizations: Vec<OrganizationSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("spec error: {0}")]
pub struct SpecError(pub String);

fn spec_err(msg: impl Into<String>) -> SpecError {
    SpecError(msg.into())
}

impl OrgSpecFile {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| spec_err(format!("line {}: {e}", e.line())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|e| spec_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn default_spec() -> Self {
        Self::parse(DEFAULT_ORG_SPEC).expect("shipped org spec is valid")
    }

    pub fn organization(&self, name: &str) -> Option<&OrganizationSpec> {
        self.organizations.iter().find(|o| o.name == name)
    }

    /// Distinct mediation-agent kinds across all organizations.
    pub fn mediation_members(&self) -> BTreeSet<AgentKind> {
        self.organizations
            .iter()
            .flat_map(|o| o.members.iter().copied())
            .filter(|k| k.is_mediation())
            .collect()
    }

    pub fn task_count(&self) -> usize {
        self.organizations.iter().map(|o| o.tasks.len()).sum()
    }

    pub fn role_count(&self) -> usize {
        self.organizations.iter().map(|o| o.roles.len()).sum()
    }

    pub fn goal_count(&self) -> usize {
        self.organizations.iter().map(|o| o.goals.len()).sum()
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.organizations.len() != 3 {
            return Err(spec_err(format!("expected exactly 3 organizations, found {}", self.organizations.len())));
        }
        let names: BTreeSet<&str> = self.organizations.iter().map(|o| o.name.as_str()).collect();
        if names != ORGANIZATION_NAMES.into_iter().collect() {
            return Err(spec_err(format!("organizations must be {ORGANIZATION_NAMES:?}, found {names:?}")));
        }
        let cds: BTreeSet<AgentKind> = self.organization(DECISION_SUPPORT).expect("checked").members.iter().copied().collect();
        if cds != BTreeSet::from([AgentKind::Deda, AgentKind::Ddida]) {
            return Err(spec_err(format!("{DECISION_SUPPORT} members must be exactly DEDA and DDIDA, found {cds:?}")));
        }
        let mut seen: BTreeMap<AgentKind, &str> = BTreeMap::new();
        for org in &self.organizations {
            for m in &org.members {
                if *m == AgentKind::External {
                    return Err(spec_err(format!("{} lists External as a member", org.name)));
                }
                if let Some(other) = seen.insert(*m, &org.name) {
                    return Err(spec_err(format!("{m} belongs to both {other} and {}", org.name)));
                }
            }
            for role in &org.roles {
                if let Some(k) = role.assigned_to.iter().find(|k| !org.members.contains(k)) {
                    return Err(spec_err(format!("role {} is assigned to {k}, not a member of {}", role.name, org.name)));
                }
            }
            for i in &org.allowed_interactions {
                if !ONTOLOGIES.contains(&i.ontology.as_str()) {
                    return Err(spec_err(format!("unknown ontology `{}` in {}", i.ontology, org.name)));
                }
            }
        }
        let required: BTreeSet<AgentKind> = AgentKind::MEDIATION
            .into_iter()
            .chain([AgentKind::ClinicalWorkflowAgent, AgentKind::AgentManager, AgentKind::ConnectorAgent])
            .collect();
        if let Some(missing) = required.iter().find(|k| !seen.contains_key(k)) {
            return Err(spec_err(format!("{missing} is not a member of any organization")));
        }
        let counts = [
            ("agents", self.mediation_members().len(), EXPECTED_AGENTS),
            ("tasks", self.task_count(), EXPECTED_TASKS),
            ("roles", self.role_count(), EXPECTED_ROLES),
            ("goals", self.goal_count(), EXPECTED_GOALS),
        ];
        for (what, found, expected) in counts {
            if found != expected {
                return Err(spec_err(format!("expected {expected} {what}, found {found}")));
            }
        }
        Ok(())
    }

    pub fn authorize(&self, sender: AgentKind, receiver: AgentKind, ontology: &str) -> Authorization {
        for org in &self.organizations {
            let hit = org
                .allowed_interactions
                .iter()
                .any(|i| i.sender == sender && i.receiver == receiver && i.ontology == ontology);
            if hit {
                return Authorization::Allowed {
                    organization: org.name.clone(),
                };
            }
        }
        Authorization::Denied {
            reason: format!("no organization allows {sender} -> {receiver} on {ontology}"),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("org spec serializes")
    }
}

/// Bus middleware backed by an installed spec.
#[derive(Debug, Clone)]
pub struct OrgPolicy {
    spec: OrgSpecFile,
}

impl OrgPolicy {
    pub fn new(spec: OrgSpecFile) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &OrgSpecFile {
        &self.spec
    }
}

impl<C: Payload> SendPolicy<C> for OrgPolicy {
    fn authorize(&self, msg: &AclMessage<C>) -> Authorization {
        self.spec.authorize(msg.sender.kind, msg.receiver.kind, &msg.ontology)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFilter {
    #[serde(default)]
    pub decision: Option<AuditDecision>,
    #[serde(default)]
    pub sender: Option<AgentKind>,
    #[serde(default)]
    pub receiver: Option<AgentKind>,
    #[serde(default)]
    pub ontology: Option<String>,
}

/// Entries matching the filter, in tick order.
pub fn audit_query(log: &[AuditEntry], filter: &AuditFilter) -> Vec<AuditEntry> {
    let mut out: Vec<AuditEntry> = log
        .iter()
        .filter(|e| filter.decision.is_none_or(|d| d == e.decision))
        .filter(|e| filter.sender.is_none_or(|k| k == e.sender.kind))
        .filter(|e| filter.receiver.is_none_or(|k| k == e.receiver.kind))
        .filter(|e| filter.ontology.as_ref().is_none_or(|o| *o == e.ontology))
        .cloned()
        .collect();
    out.sort_by_key(|e| e.tick);
    out
}
