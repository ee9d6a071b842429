use serde::{Deserialize, Serialize};

use super::model::*;
use crate::cdss::{AnalysisReport, DetectedError};
use crate::clinical::{ArchivedPrescription, DosingInfo, PatientContext, StockEntry};

pub const CPOE_ONTOLOGY: &str = "cpoe-order-entry";

/// Content of the `cpoe-order-entry` ontology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum CpoeMsg {
    ContextRequest {
        patient_id: String,
    },
    ContextReply {
        context: PatientContext,
    },
    DrugQuery {
        query: String,
        patient_id: Option<String>,
    },
    DrugCandidates {
        candidates: Vec<DrugCandidate>,
    },
    StockQuery {
        drug_codes: Vec<String>,
    },
    StockReply {
        entries: Vec<StockEntry>,
        substitutions: Vec<SubstitutionProposal>,
    },
    AdminInfoRequest {
        drug_code: String,
    },
    AdminInfoReply {
        drug_code: String,
        info: DosingInfo,
    },
    CreateDraft {
        patient_id: String,
        prescriber: String,
        #[serde(default)]
        lines: Vec<PrescriptionLine>,
        #[serde(default)]
        prescription_id: Option<String>,
    },
    AddLines {
        prescription_id: String,
        lines: Vec<PrescriptionLine>,
        #[serde(default)]
        replace: bool,
    },
    DraftQuery {
        prescription_id: String,
    },
    DraftMsg {
        draft: PrescriptionDraft,
    },
    AnalyzeRequest {
        prescription_id: String,
    },
    AnalysisReportMsg {
        report: AnalysisReport,
    },
    CheckRequest {
        prescription_id: String,
        patient_id: String,
        lines: Vec<PrescriptionLine>,
    },
    PartialReport {
        prescription_id: String,
        errors: Vec<DetectedError>,
    },
    ValidateRequest {
        prescription_id: String,
        #[serde(rename = "override", default)]
        override_: Option<Override>,
    },
    ValidationResult {
        result: ValidationResult,
    },
    ProtocolSave {
        title: String,
        prescription_id: String,
    },
    ProtocolAck {
        title: String,
        lines: Vec<PrescriptionLine>,
    },
    ProtocolInstantiate {
        title: String,
        patient_id: String,
        prescriber: String,
    },
    ArchiveRequest {
        prescription: PrescriptionDraft,
        report: AnalysisReport,
    },
    ArchiveAck {
        entry: ArchivedPrescription,
    },
    ArchiveQuery {
        patient_id: String,
    },
    ArchiveList {
        entries: Vec<ArchivedPrescription>,
    },
    Notify {
        prescription_id: String,
        archive_id: String,
        summary: String,
    },
    NotifyAck {
        notices: Vec<DeliveryNotice>,
    },
    DeliveryNoticeMsg {
        notice: DeliveryNotice,
    },
    NoticeQuery {
        #[serde(default)]
        prescription_id: Option<String>,
    },
    NoticeList {
        notices: Vec<DeliveryNotice>,
    },
    Failure {
        code: String,
        detail: String,
    },
}

impl CpoeMsg {
    pub fn failure(code: &str, detail: impl Into<String>) -> Self {
        CpoeMsg::Failure {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    pub fn variant(&self) -> &'static str {
        match self {
            CpoeMsg::ContextRequest { .. } => "ContextRequest",
            CpoeMsg::ContextReply { .. } => "ContextReply",
            CpoeMsg::DrugQuery { .. } => "DrugQuery",
            CpoeMsg::DrugCandidates { .. } => "DrugCandidates",
            CpoeMsg::StockQuery { .. } => "StockQuery",
            CpoeMsg::StockReply { .. } => "StockReply",
            CpoeMsg::AdminInfoRequest { .. } => "AdminInfoRequest",
            CpoeMsg::AdminInfoReply { .. } => "AdminInfoReply",
            CpoeMsg::CreateDraft { .. } => "CreateDraft",
            CpoeMsg::AddLines { .. } => "AddLines",
            CpoeMsg::DraftQuery { .. } => "DraftQuery",
            CpoeMsg::DraftMsg { .. } => "DraftMsg",
            CpoeMsg::AnalyzeRequest { .. } => "AnalyzeRequest",
            CpoeMsg::AnalysisReportMsg { .. } => "AnalysisReportMsg",
            CpoeMsg::CheckRequest { .. } => "CheckRequest",
            CpoeMsg::PartialReport { .. } => "PartialReport",
            CpoeMsg::ValidateRequest { .. } => "ValidateRequest",
            CpoeMsg::ValidationResult { .. } => "ValidationResult",
            CpoeMsg::ProtocolSave { .. } => "ProtocolSave",
            CpoeMsg::ProtocolAck { .. } => "ProtocolAck",
            CpoeMsg::ProtocolInstantiate { .. } => "ProtocolInstantiate",
            CpoeMsg::ArchiveRequest { .. } => "ArchiveRequest",
            CpoeMsg::ArchiveAck { .. } => "ArchiveAck",
            CpoeMsg::ArchiveQuery { .. } => "ArchiveQuery",
            CpoeMsg::ArchiveList { .. } => "ArchiveList",
            CpoeMsg::Notify { .. } => "Notify",
            CpoeMsg::NotifyAck { .. } => "NotifyAck",
            CpoeMsg::DeliveryNoticeMsg { .. } => "DeliveryNoticeMsg",
            CpoeMsg::NoticeQuery { .. } => "NoticeQuery",
            CpoeMsg::NoticeList { .. } => "NoticeList",
            CpoeMsg::Failure { .. } => "Failure",
        }
    }
}
