use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::cdss::AnalysisReport;
use crate::cpoe::{PrescriptionDraft, PrescriptionLine};

/// Administrative record of a patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientAdmin {
    pub patient_id: String,
    pub name: String,
    /// Patient "type" as recorded by the hospital system. Never interpreted.
    pub category: String,
    pub date_of_birth: NaiveDate,
    pub service: String,
    #[serde(default)]
    pub weight_kg: Option<f64>,
    #[serde(default)]
    pub height_cm: Option<f64>,
}

/// Physio-pathologic profile.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysioProfile {
    pub patient_id: String,
    #[serde(default)]
    pub diagnoses: Vec<String>,
    /// Ingredient codes.
    #[serde(default)]
    pub allergies: Vec<String>,
    /// Ingredient or drug codes.
    #[serde(default)]
    pub contraindications: Vec<String>,
    #[serde(default)]
    pub risk_situations: Vec<String>,
}

impl PhysioProfile {
    pub fn empty(patient_id: &str) -> Self {
        Self {
            patient_id: patient_id.to_string(),
            ..Self::default()
        }
    }

    pub(crate) fn dedup(&mut self) {
        for list in [
            &mut self.diagnoses,
            &mut self.allergies,
            &mut self.contraindications,
            &mut self.risk_situations,
        ] {
            let mut seen = BTreeSet::new();
            list.retain(|item| seen.insert(item.clone()));
        }
    }
}

/// Upper dosing bounds. Absent means unchecked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DoseBounds {
    #[serde(default)]
    pub max_dose_per_catch: Option<f64>,
    #[serde(default)]
    pub max_dose_per_day: Option<f64>,
    #[serde(default)]
    pub max_dose_per_kg_per_day: Option<f64>,
}

impl DoseBounds {
    pub fn is_empty(&self) -> bool {
        self.max_dose_per_catch.is_none()
            && self.max_dose_per_day.is_none()
            && self.max_dose_per_kg_per_day.is_none()
    }
}

/// Administration data served per drug by the administration-mode agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosingInfo {
    pub admin_modes: Vec<String>,
    /// Unit of a single administration ("unit of catch").
    pub unit_of_catch: String,
    pub default_dose_per_catch: f64,
    #[serde(flatten)]
    pub bounds: DoseBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugRecord {
    pub drug_code: String,
    pub name: String,
    pub active_ingredient: String,
    /// Products sharing a group are substitutable for one another.
    pub generic_group: String,
    #[serde(flatten)]
    pub dosing: DosingInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StockStatus {
    Available,
    Rupture,
}

impl StockStatus {
    pub fn for_quantity(quantity: u64) -> Self {
        if quantity == 0 {
            StockStatus::Rupture
        } else {
            StockStatus::Available
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StockEntry {
    pub drug_code: String,
    pub quantity_on_hand: u64,
    pub status: StockStatus,
}

impl StockEntry {
    pub fn new(drug_code: impl Into<String>, quantity_on_hand: u64) -> Self {
        Self {
            drug_code: drug_code.into(),
            quantity_on_hand,
            status: StockStatus::for_quantity(quantity_on_hand),
        }
    }

    pub fn in_stock(&self) -> bool {
        self.status == StockStatus::Available
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabResult {
    pub patient_id: String,
    pub analyte: String,
    pub value: f64,
    pub unit: String,
    pub taken_at: DateTime<Utc>,
}

/// Severity scale shared by interaction rules and detected errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Minor,
    Moderate,
    Major,
    Contraindicated,
}

impl Severity {
    pub fn is_blocking(self) -> bool {
        matches!(self, Severity::Major | Severity::Contraindicated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabCondition {
    pub analyte: String,
    pub comparator: Comparator,
    pub threshold: f64,
    pub unit: String,
}

/// Drug-drug interaction over an unordered ingredient pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRule {
    pub rule_id: String,
    pub ingredient_a: String,
    pub ingredient_b: String,
    pub severity: Severity,
    pub effect: String,
    #[serde(default)]
    pub lab_condition: Option<LabCondition>,
}

impl InteractionRule {
    pub fn matches(&self, x: &str, y: &str) -> bool {
        (self.ingredient_a == x && self.ingredient_b == y)
            || (self.ingredient_a == y && self.ingredient_b == x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRecord {
    pub title: String,
    pub lines: Vec<PrescriptionLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedPrescription {
    pub archive_id: String,
    pub patient_id: String,
    pub prescription: PrescriptionDraft,
    pub report: AnalysisReport,
    /// Bus tick at which the entry was written.
    pub archived_at: u64,
}

/// Reference drug sets used to decide choice errors.
///
/// Keyed by diagnosis code, with a per-service fallback. An empty formulary
/// admits everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formulary {
    #[serde(default)]
    pub diagnoses: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub services: BTreeMap<String, BTreeSet<String>>,
}

impl Formulary {
    pub fn is_open(&self) -> bool {
        self.diagnoses.values().all(BTreeSet::is_empty) && self.services.values().all(BTreeSet::is_empty)
    }

    pub fn admits(&self, drug_code: &str, diagnoses: &[String], service: &str) -> bool {
        if self.is_open() {
            return true;
        }
        let by_diagnosis = diagnoses
            .iter()
            .filter_map(|d| self.diagnoses.get(d))
            .any(|set| set.contains(drug_code));
        by_diagnosis
            || self
                .services
                .get(service)
                .is_some_and(|set| set.contains(drug_code))
    }

    pub fn drug_codes(&self) -> impl Iterator<Item = &String> {
        self.diagnoses.values().chain(self.services.values()).flatten()
    }
}

/// Merged view assembled for a patient: admin data, profile and the latest
/// result per analyte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientContext {
    pub admin: PatientAdmin,
    pub profile: PhysioProfile,
    pub latest_labs: BTreeMap<String, LabResult>,
}

impl PatientContext {
    pub fn patient_id(&self) -> &str {
        &self.admin.patient_id
    }

    pub fn weight_kg(&self) -> Option<f64> {
        self.admin.weight_kg
    }

    pub fn allergies(&self) -> &[String] {
        &self.profile.allergies
    }

    pub fn contraindications(&self) -> &[String] {
        &self.profile.contraindications
    }

    pub fn diagnoses(&self) -> &[String] {
        &self.profile.diagnoses
    }

    pub fn latest_lab(&self, analyte: &str) -> Option<&LabResult> {
        self.latest_labs.get(analyte)
    }
}
