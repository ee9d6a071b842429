use serde::{Deserialize, Serialize};

use crate::cdss::AnalysisReport;
use crate::cpoe::{Override, PrescriptionLine, ValidationResult};

pub const INTERFACE6_ONTOLOGY: &str = "interface-6";

/// Interface 6 vocabulary between the Connector Agent and the mediation
/// infrastructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Interface6Msg {
    PlugRequest {
        session_id: String,
    },
    PlugAck {
        session_id: String,
    },
    /// Decision over a prescription snapshot for a patient.
    DecisionQuery {
        instance_id: String,
        patient_id: String,
        lines: Vec<PrescriptionLine>,
    },
    DecisionResult {
        report: AnalysisReport,
    },
    PrescriptionRequest {
        instance_id: String,
        task_id: String,
        patient_id: String,
        prescriber: String,
        lines: Vec<PrescriptionLine>,
        #[serde(rename = "override", default)]
        override_: Option<Override>,
    },
    PrescriptionResult {
        result: ValidationResult,
    },
    UnplugRequest {
        session_id: String,
    },
    UnplugAck {
        session_id: String,
    },
    Fault {
        code: String,
        detail: String,
    },
}

impl Interface6Msg {
    pub fn fault(code: &str, detail: impl Into<String>) -> Self {
        Interface6Msg::Fault {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    pub fn variant(&self) -> &'static str {
        match self {
            Interface6Msg::PlugRequest { .. } => "PlugRequest",
            Interface6Msg::PlugAck { .. } => "PlugAck",
            Interface6Msg::DecisionQuery { .. } => "DecisionQuery",
            Interface6Msg::DecisionResult { .. } => "DecisionResult",
            Interface6Msg::PrescriptionRequest { .. } => "PrescriptionRequest",
            Interface6Msg::PrescriptionResult { .. } => "PrescriptionResult",
            Interface6Msg::UnplugRequest { .. } => "UnplugRequest",
            Interface6Msg::UnplugAck { .. } => "UnplugAck",
            Interface6Msg::Fault { .. } => "Fault",
        }
    }
}
