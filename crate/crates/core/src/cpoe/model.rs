use serde::{Deserialize, Serialize};

use crate::cdss::AnalysisReport;
use crate::clinical::{DrugRecord, StockEntry};

/// One ordered drug. `dose_per_catch` is expressed in the drug's unit of catch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescriptionLine {
    pub drug_code: String,
    pub dose_per_catch: f64,
    pub catches_per_day: u32,
    pub admin_mode: String,
    pub duration_days: u32,
}

impl PrescriptionLine {
    pub fn check(&self) -> Result<(), String> {
        if !(self.dose_per_catch.is_finite() && self.dose_per_catch > 0.0) {
            return Err(format!("{}: dose_per_catch must be positive", self.drug_code));
        }
        if self.catches_per_day == 0 {
            return Err(format!("{}: catches_per_day must be at least 1", self.drug_code));
        }
        if self.duration_days == 0 {
            return Err(format!("{}: duration_days must be at least 1", self.drug_code));
        }
        Ok(())
    }

    pub fn daily_dose(&self) -> f64 {
        self.dose_per_catch * f64::from(self.catches_per_day)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftStatus {
    Draft,
    Analyzed,
    Validated,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Override {
    pub reason: String,
    pub principal: String,
}

impl Override {
    /// Blank reasons do not count as an override.
    pub fn is_usable(&self) -> bool {
        !self.reason.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescriptionDraft {
    pub prescription_id: String,
    pub patient_id: String,
    pub prescriber: String,
    pub lines: Vec<PrescriptionLine>,
    pub status: DraftStatus,
    pub last_report: Option<AnalysisReport>,
    #[serde(rename = "override")]
    pub override_: Option<Override>,
    /// Bumped on every change to `lines`.
    pub revision: u64,
    /// Revision the stored report was computed on.
    pub report_revision: Option<u64>,
    pub archive_id: Option<String>,
}

impl PrescriptionDraft {
    pub fn new(prescription_id: impl Into<String>, patient_id: impl Into<String>, prescriber: impl Into<String>) -> Self {
        Self {
            prescription_id: prescription_id.into(),
            patient_id: patient_id.into(),
            prescriber: prescriber.into(),
            lines: Vec::new(),
            status: DraftStatus::Draft,
            last_report: None,
            override_: None,
            revision: 0,
            report_revision: None,
            archive_id: None,
        }
    }

    pub fn report_is_current(&self) -> bool {
        self.last_report.is_some() && self.report_revision == Some(self.revision)
    }

    pub fn set_lines(&mut self, lines: Vec<PrescriptionLine>) {
        self.lines = lines;
        self.revision += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubstitutionReason {
    RuptureOfSupply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionProposal {
    pub original: String,
    pub proposed: String,
    pub reason: SubstitutionReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Audience {
    Pharmacist,
    Nurse,
    Prescriber,
}

impl Audience {
    pub fn as_str(self) -> &'static str {
        match self {
            Audience::Pharmacist => "pharmacist",
            Audience::Nurse => "nurse",
            Audience::Prescriber => "prescriber",
        }
    }
}

pub const DEFAULT_AUDIENCES: [Audience; 2] = [Audience::Pharmacist, Audience::Nurse];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryNotice {
    pub notice_id: String,
    pub prescription_id: String,
    pub audience: Audience,
    pub summary: String,
    pub delivered_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextFlag {
    AllergyHit,
    ContraindicationHit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugCandidate {
    pub drug: DrugRecord,
    pub stock: StockEntry,
    pub substitutions: Vec<SubstitutionProposal>,
    pub context_flags: Vec<ContextFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub prescription_id: String,
    pub status: DraftStatus,
    pub report: AnalysisReport,
    pub archive_id: Option<String>,
    pub notices: Vec<DeliveryNotice>,
    /// Set when validation was refused.
    pub refusal: Option<String>,
}

impl ValidationResult {
    pub fn is_validated(&self) -> bool {
        self.status == DraftStatus::Validated
    }
}
