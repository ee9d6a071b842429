use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::instance::{AdvanceReport, InstanceStatus, ProcessInstance, WorkItem};
use super::resources::Grant;
use crate::bus::BusStats;
use crate::cdss::AnalysisReport;
use crate::connector::PlugSession;
use crate::cpoe::{Override, PrescriptionLine, ValidationResult};

pub const WFMC_ONTOLOGY: &str = "wfmc-interfaces";
pub const WES_ONTOLOGY: &str = "wes-coordination";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionSummary {
    pub def_id: String,
    pub version: u32,
    pub name: String,
    pub task_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub instance_id: String,
    pub def_id: String,
    pub version: u32,
    pub status: InstanceStatus,
    pub current_tasks: Vec<String>,
    pub history_len: usize,
}

/// Interface 5 monitoring view.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitoringView {
    pub instances: Vec<InstanceSummary>,
    pub states: BTreeMap<String, usize>,
    pub event_count: usize,
    pub open_workitems: usize,
    /// Filled in by the system facade after the query settles.
    pub bus: Option<BusStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorAction {
    Plug,
    Unplug,
    Status,
}

/// Interfaces 1, 2, 4 and 5 towards the Agent Manager, plus connector control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum WfmcMsg {
    LoadDefinition {
        xml: String,
    },
    DefinitionLoaded {
        definition: DefinitionSummary,
    },
    ListDefinitions,
    DefinitionList {
        definitions: Vec<DefinitionSummary>,
    },
    CreateInstance {
        def_id: String,
        #[serde(default)]
        variables: BTreeMap<String, Value>,
    },
    InstanceCreated {
        instance_id: String,
        advance: AdvanceReport,
    },
    InstanceQuery {
        instance_id: String,
    },
    InstanceView {
        instance: ProcessInstance,
        open_items: Vec<WorkItem>,
    },
    WorklistQuery {
        #[serde(default)]
        role: Option<String>,
    },
    Worklist {
        items: Vec<WorkItem>,
    },
    CompleteWorkItem {
        workitem_id: String,
        #[serde(default)]
        data: BTreeMap<String, Value>,
    },
    WorkItemCompleted {
        advance: AdvanceReport,
    },
    AcquireResource {
        instance_id: String,
        resource: String,
    },
    ReleaseResource {
        instance_id: String,
        resource: String,
    },
    ResourceStatus {
        resource: String,
        grant: Option<Grant>,
        holder: Option<String>,
        queue: Vec<String>,
    },
    AdminQuery {
        #[serde(default)]
        def_id: Option<String>,
    },
    Monitoring {
        view: MonitoringView,
    },
    /// Interface 4. Always answered with NotSupported.
    Interop {
        target: String,
        #[serde(default)]
        payload: Value,
    },
    ConnectorControl {
        action: ConnectorAction,
    },
    ConnectorStatus {
        session: PlugSession,
    },
    WfmcError {
        code: String,
        detail: String,
    },
}

impl WfmcMsg {
    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        WfmcMsg::WfmcError {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    pub fn variant(&self) -> &'static str {
        match self {
            WfmcMsg::LoadDefinition { .. } => "LoadDefinition",
            WfmcMsg::DefinitionLoaded { .. } => "DefinitionLoaded",
            WfmcMsg::ListDefinitions => "ListDefinitions",
            WfmcMsg::DefinitionList { .. } => "DefinitionList",
            WfmcMsg::CreateInstance { .. } => "CreateInstance",
            WfmcMsg::InstanceCreated { .. } => "InstanceCreated",
            WfmcMsg::InstanceQuery { .. } => "InstanceQuery",
            WfmcMsg::InstanceView { .. } => "InstanceView",
            WfmcMsg::WorklistQuery { .. } => "WorklistQuery",
            WfmcMsg::Worklist { .. } => "Worklist",
            WfmcMsg::CompleteWorkItem { .. } => "CompleteWorkItem",
            WfmcMsg::WorkItemCompleted { .. } => "WorkItemCompleted",
            WfmcMsg::AcquireResource { .. } => "AcquireResource",
            WfmcMsg::ReleaseResource { .. } => "ReleaseResource",
            WfmcMsg::ResourceStatus { .. } => "ResourceStatus",
            WfmcMsg::AdminQuery { .. } => "AdminQuery",
            WfmcMsg::Monitoring { .. } => "Monitoring",
            WfmcMsg::Interop { .. } => "Interop",
            WfmcMsg::ConnectorControl { .. } => "ConnectorControl",
            WfmcMsg::ConnectorStatus { .. } => "ConnectorStatus",
            WfmcMsg::WfmcError { .. } => "WfmcError",
        }
    }
}

/// Agent Manager to Clinical Workflow Agent, and workflow agents to the
/// Connector Agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum WesMsg {
    StartInstance,
    CompleteTask {
        workitem_id: String,
        #[serde(default)]
        data: BTreeMap<String, Value>,
    },
    TaskAdvanced {
        advance: AdvanceReport,
        instance: ProcessInstance,
        open_items: Vec<WorkItem>,
    },
    InstanceUpdate {
        instance: ProcessInstance,
        open_items: Vec<WorkItem>,
    },
    DecisionNeeded {
        instance_id: String,
        task_id: String,
        patient_id: String,
        lines: Vec<PrescriptionLine>,
    },
    DecisionOutcome {
        report: AnalysisReport,
    },
    PrescriptionNeeded {
        instance_id: String,
        task_id: String,
        patient_id: String,
        prescriber: String,
        lines: Vec<PrescriptionLine>,
        #[serde(rename = "override", default)]
        override_: Option<Override>,
    },
    PrescriptionOutcome {
        result: ValidationResult,
    },
    WesFault {
        code: String,
        detail: String,
    },
}

impl WesMsg {
    pub fn fault(code: &str, detail: impl Into<String>) -> Self {
        WesMsg::WesFault {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    pub fn variant(&self) -> &'static str {
        match self {
            WesMsg::StartInstance => "StartInstance",
            WesMsg::CompleteTask { .. } => "CompleteTask",
            WesMsg::TaskAdvanced { .. } => "TaskAdvanced",
            WesMsg::InstanceUpdate { .. } => "InstanceUpdate",
            WesMsg::DecisionNeeded { .. } => "DecisionNeeded",
            WesMsg::DecisionOutcome { .. } => "DecisionOutcome",
            WesMsg::PrescriptionNeeded { .. } => "PrescriptionNeeded",
            WesMsg::PrescriptionOutcome { .. } => "PrescriptionOutcome",
            WesMsg::WesFault { .. } => "WesFault",
        }
    }
}
