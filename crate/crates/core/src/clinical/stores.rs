use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{ArchivedPrescription, ProtocolRecord};
use super::ClinicalError;
use crate::cdss::{AnalysisReport, Verdict};
use crate::cpoe::{DraftStatus, PrescriptionDraft, PrescriptionLine};

/// Named prescription templates, recalled by title.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStore {
    records: BTreeMap<String, ProtocolRecord>,
}

impl ProtocolStore {
    pub fn seeded(seed: &[ProtocolRecord]) -> Self {
        Self {
            records: seed.iter().map(|r| (r.title.clone(), r.clone())).collect(),
        }
    }

    pub fn save_protocol(
        &mut self,
        title: &str,
        lines: Vec<PrescriptionLine>,
    ) -> Result<ProtocolRecord, ClinicalError> {
        if title.trim().is_empty() {
            return Err(ClinicalError::InvalidProtocol("title is empty".into()));
        }
        if lines.is_empty() {
            return Err(ClinicalError::InvalidProtocol(format!("protocol `{title}` has no lines")));
        }
        if self.records.contains_key(title) {
            return Err(ClinicalError::DuplicateTitle(title.to_string()));
        }
        let record = ProtocolRecord {
            title: title.to_string(),
            lines,
        };
        self.records.insert(title.to_string(), record.clone());
        Ok(record)
    }

    pub fn fetch_protocol(&self, title: &str) -> Result<ProtocolRecord, ClinicalError> {
        self.records
            .get(title)
            .cloned()
            .ok_or_else(|| ClinicalError::NotFound(title.to_string()))
    }

    pub fn titles(&self) -> Vec<String> {
        self.records.keys().cloned().collect()
    }
}

/// Append-only archive of validated prescriptions, optionally mirrored to a
/// directory as one JSON file per entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchiveStore {
    entries: Vec<ArchivedPrescription>,
    #[serde(skip)]
    dir: Option<PathBuf>,
}

impl ArchiveStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            entries: Vec::new(),
            dir: Some(dir.into()),
        }
    }

    pub fn set_dir(&mut self, dir: Option<PathBuf>) {
        self.dir = dir;
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn archive_id_for(prescription_id: &str) -> String {
        format!("ar-{prescription_id}")
    }

    pub fn archive_prescription(
        &mut self,
        prescription: PrescriptionDraft,
        report: AnalysisReport,
        archived_at: u64,
    ) -> Result<ArchivedPrescription, ClinicalError> {
        let verdict_ok = matches!(report.verdict, Verdict::Pass | Verdict::PassWithWarnings);
        if prescription.status != DraftStatus::Validated || !verdict_ok {
            return Err(ClinicalError::NotValidated(prescription.prescription_id));
        }
        let archive_id = Self::archive_id_for(&prescription.prescription_id);
        if self.entries.iter().any(|e| e.archive_id == archive_id) {
            return Err(ClinicalError::AlreadyArchived(archive_id));
        }
        let entry = ArchivedPrescription {
            archive_id,
            patient_id: prescription.patient_id.clone(),
            prescription,
            report,
            archived_at,
        };
        if let Some(dir) = &self.dir {
            write_entry(dir, &entry)?;
        }
        self.entries.push(entry.clone());
        Ok(entry)
    }

    /// Entries for a patient in archival order.
    pub fn query_archive(&self, patient_id: &str) -> Vec<ArchivedPrescription> {
        let mut out: Vec<ArchivedPrescription> = self
            .entries
            .iter()
            .filter(|e| e.patient_id == patient_id)
            .cloned()
            .collect();
        out.sort_by_key(|e| e.archived_at);
        out
    }

    pub fn entries(&self) -> &[ArchivedPrescription] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn write_entry(dir: &Path, entry: &ArchivedPrescription) -> Result<(), ClinicalError> {
    let io = |e: std::io::Error| ClinicalError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(format!("{}.json", entry.archive_id));
    let text = serde_json::to_string_pretty(entry).expect("archive entry serializes");
    std::fs::write(path, text).map_err(io)
}
