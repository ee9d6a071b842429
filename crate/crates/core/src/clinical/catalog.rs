use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::de::DeserializeOwned;

use super::model::*;
use super::ClinicalError;

pub const PATIENTS_FILE: &str = "patients.json";
pub const PROFILES_FILE: &str = "physio_profiles.json";
pub const DRUG_BANK_FILE: &str = "drug_bank.json";
pub const STOCK_FILE: &str = "pharmacy_stock.json";
pub const LABS_FILE: &str = "lab_results.json";
pub const FORMULARY_FILE: &str = "formulary.json";
pub const RULES_FILE: &str = "interaction_rules.json";
pub const PROTOCOLS_FILE: &str = "protocols.json";

/// The clinical data sources, in load order.
pub const CLINICAL_SOURCES: [&str; 5] = [
    "patient-administrative-data",
    "physio-pathologic-profile",
    "drug-bank",
    "pharmacy-stock",
    "biological-analysis",
];

/// Read-only clinical stores plus the reference tables built on them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataCatalog {
    pub patients: BTreeMap<String, PatientAdmin>,
    pub profiles: BTreeMap<String, PhysioProfile>,
    pub drugs: BTreeMap<String, DrugRecord>,
    pub stock: BTreeMap<String, StockEntry>,
    pub labs: Vec<LabResult>,
    pub formulary: Formulary,
    pub rules: Vec<InteractionRule>,
    /// Protocols shipped with the dataset, used to seed the protocol store.
    pub protocol_seed: Vec<ProtocolRecord>,
}

#[derive(serde::Deserialize)]
struct RawStock {
    drug_code: String,
    quantity_on_hand: u64,
    #[serde(default)]
    status: Option<StockStatus>,
}

fn read_json<T: DeserializeOwned>(root: &Path, file: &str) -> Result<T, ClinicalError> {
    let path = root.join(file);
    let text = std::fs::read_to_string(&path).map_err(|e| ClinicalError::Parse {
        file: file.to_string(),
        line: 0,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| ClinicalError::Parse {
        file: file.to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn integrity(file: &str, detail: impl Into<String>) -> ClinicalError {
    ClinicalError::Integrity {
        file: file.to_string(),
        detail: detail.into(),
    }
}

fn positive(value: Option<f64>) -> bool {
    value.is_none_or(|v| v.is_finite() && v > 0.0)
}

/// Loads and cross-validates a dataset directory.
pub fn load_dataset(root: &Path) -> Result<DataCatalog, ClinicalError> {
    let patients: Vec<PatientAdmin> = read_json(root, PATIENTS_FILE)?;
    let profiles: Vec<PhysioProfile> = read_json(root, PROFILES_FILE)?;
    let drugs: Vec<DrugRecord> = read_json(root, DRUG_BANK_FILE)?;
    let stock: Vec<RawStock> = read_json(root, STOCK_FILE)?;
    let labs: Vec<LabResult> = read_json(root, LABS_FILE)?;
    let formulary: Formulary = read_json(root, FORMULARY_FILE)?;
    let rules: Vec<InteractionRule> = read_json(root, RULES_FILE)?;
    let protocol_seed: Vec<ProtocolRecord> = if root.join(PROTOCOLS_FILE).exists() {
        read_json(root, PROTOCOLS_FILE)?
    } else {
        Vec::new()
    };

    let mut catalog = DataCatalog::default();
    for p in patients {
        if !positive(p.weight_kg) || !positive(p.height_cm) {
            return Err(integrity(PATIENTS_FILE, format!("patient {} has a non-positive weight or height", p.patient_id)));
        }
        if catalog.patients.contains_key(&p.patient_id) {
            return Err(integrity(PATIENTS_FILE, format!("duplicate patient_id {}", p.patient_id)));
        }
        catalog.patients.insert(p.patient_id.clone(), p);
    }
    for mut profile in profiles {
        if !catalog.patients.contains_key(&profile.patient_id) {
            return Err(integrity(PROFILES_FILE, format!("unknown patient_id {}", profile.patient_id)));
        }
        if catalog.profiles.contains_key(&profile.patient_id) {
            return Err(integrity(PROFILES_FILE, format!("duplicate profile for {}", profile.patient_id)));
        }
        profile.dedup();
        catalog.profiles.insert(profile.patient_id.clone(), profile);
    }
    for d in drugs {
        validate_drug(&d)?;
        if catalog.drugs.contains_key(&d.drug_code) {
            return Err(integrity(DRUG_BANK_FILE, format!("duplicate drug_code {}", d.drug_code)));
        }
        catalog.drugs.insert(d.drug_code.clone(), d);
    }
    for raw in stock {
        if !catalog.drugs.contains_key(&raw.drug_code) {
            return Err(integrity(STOCK_FILE, format!("unknown drug_code {}", raw.drug_code)));
        }
        let entry = StockEntry::new(raw.drug_code, raw.quantity_on_hand);
        if raw.status.is_some_and(|s| s != entry.status) {
            return Err(integrity(STOCK_FILE, format!("status of {} disagrees with quantity {}", entry.drug_code, entry.quantity_on_hand)));
        }
        if catalog.stock.insert(entry.drug_code.clone(), entry.clone()).is_some() {
            return Err(integrity(STOCK_FILE, format!("duplicate stock entry {}", entry.drug_code)));
        }
    }
    for lab in &labs {
        if !catalog.patients.contains_key(&lab.patient_id) {
            return Err(integrity(LABS_FILE, format!("unknown patient_id {}", lab.patient_id)));
        }
        if lab.unit.trim().is_empty() {
            return Err(integrity(LABS_FILE, format!("empty unit for {} / {}", lab.patient_id, lab.analyte)));
        }
    }
    catalog.labs = labs;
    if let Some(code) = formulary.drug_codes().find(|c| !catalog.drugs.contains_key(*c)) {
        return Err(integrity(FORMULARY_FILE, format!("unknown drug_code {code}")));
    }
    catalog.formulary = formulary;
    for rule in &rules {
        if rule.ingredient_a == rule.ingredient_b {
            return Err(integrity(RULES_FILE, format!("rule {} pairs an ingredient with itself", rule.rule_id)));
        }
        if rule.severity == Severity::Info {
            return Err(integrity(RULES_FILE, format!("rule {} uses severity info", rule.rule_id)));
        }
        if let Some(cond) = &rule.lab_condition {
            if !(cond.threshold.is_finite() && cond.threshold > 0.0) {
                return Err(integrity(RULES_FILE, format!("rule {} has a non-positive threshold", rule.rule_id)));
            }
        }
    }
    let ids: BTreeSet<&str> = rules.iter().map(|r| r.rule_id.as_str()).collect();
    if ids.len() != rules.len() {
        return Err(integrity(RULES_FILE, "duplicate rule_id"));
    }
    catalog.rules = rules;
    let mut titles = BTreeSet::new();
    for protocol in &protocol_seed {
        if protocol.title.trim().is_empty() || protocol.lines.is_empty() {
            return Err(integrity(PROTOCOLS_FILE, format!("protocol `{}` needs a title and lines", protocol.title)));
        }
        if !titles.insert(protocol.title.as_str()) {
            return Err(integrity(PROTOCOLS_FILE, format!("duplicate title {}", protocol.title)));
        }
        if let Some(line) = protocol.lines.iter().find(|l| !catalog.drugs.contains_key(&l.drug_code)) {
            return Err(integrity(PROTOCOLS_FILE, format!("unknown drug_code {}", line.drug_code)));
        }
    }
    catalog.protocol_seed = protocol_seed;
    Ok(catalog)
}

fn validate_drug(d: &DrugRecord) -> Result<(), ClinicalError> {
    let fail = |what: &str| Err(integrity(DRUG_BANK_FILE, format!("drug {}: {what}", d.drug_code)));
    if d.dosing.admin_modes.is_empty() {
        return fail("admin_modes is empty");
    }
    let b = &d.dosing.bounds;
    if !positive(Some(d.dosing.default_dose_per_catch))
        || !positive(b.max_dose_per_catch)
        || !positive(b.max_dose_per_day)
        || !positive(b.max_dose_per_kg_per_day)
    {
        return fail("dose values must be positive");
    }
    if b.max_dose_per_catch.is_some_and(|max| d.dosing.default_dose_per_catch > max) {
        return fail("default dose exceeds max_dose_per_catch");
    }
    Ok(())
}

impl DataCatalog {
    pub fn sources(&self) -> [&'static str; 5] {
        CLINICAL_SOURCES
    }

    /// Number of populated clinical sources.
    pub fn populated_sources(&self) -> usize {
        [
            !self.patients.is_empty(),
            !self.profiles.is_empty(),
            !self.drugs.is_empty(),
            !self.stock.is_empty(),
            !self.labs.is_empty(),
        ]
        .into_iter()
        .filter(|x| *x)
        .count()
    }

    pub fn drug(&self, code: &str) -> Result<&DrugRecord, ClinicalError> {
        self.drugs
            .get(code)
            .ok_or_else(|| ClinicalError::UnknownDrug(code.to_string()))
    }

    pub fn has_patient(&self, patient_id: &str) -> bool {
        self.patients.contains_key(patient_id)
    }

    pub fn get_patient_context(&self, patient_id: &str) -> Result<PatientContext, ClinicalError> {
        let admin = self
            .patients
            .get(patient_id)
            .ok_or_else(|| ClinicalError::UnknownPatient(patient_id.to_string()))?
            .clone();
        let profile = self
            .profiles
            .get(patient_id)
            .cloned()
            .unwrap_or_else(|| PhysioProfile::empty(patient_id));
        let mut latest_labs: BTreeMap<String, LabResult> = BTreeMap::new();
        for lab in self.labs.iter().filter(|l| l.patient_id == patient_id) {
            match latest_labs.get(&lab.analyte) {
                Some(seen) if seen.taken_at >= lab.taken_at => {}
                _ => {
                    latest_labs.insert(lab.analyte.clone(), lab.clone());
                }
            }
        }
        Ok(PatientContext {
            admin,
            profile,
            latest_labs,
        })
    }

    /// Case-insensitive match on name or code. An exact code match ranks
    /// first; the rest follow in drug_code order.
    pub fn find_drugs(&self, query: &str) -> Vec<DrugRecord> {
        let q = query.trim().to_lowercase();
        let mut hits: Vec<&DrugRecord> = self
            .drugs
            .values()
            .filter(|d| d.name.to_lowercase().contains(&q) || d.drug_code.to_lowercase().contains(&q))
            .collect();
        hits.sort_by_key(|d| (d.drug_code.to_lowercase() != q, d.drug_code.clone()));
        hits.into_iter().cloned().collect()
    }

    pub fn check_stock(&self, drug_code: &str) -> Result<StockEntry, ClinicalError> {
        self.stock
            .get(drug_code)
            .cloned()
            .ok_or_else(|| ClinicalError::UnknownDrug(drug_code.to_string()))
    }

    fn in_stock(&self, drug_code: &str) -> bool {
        self.stock.get(drug_code).is_some_and(StockEntry::in_stock)
    }

    /// Other members of the drug's generic group: in-stock first, then by code.
    pub fn list_generic_alternatives(&self, drug_code: &str) -> Result<Vec<DrugRecord>, ClinicalError> {
        let drug = self.drug(drug_code)?;
        let mut alternatives: Vec<&DrugRecord> = self
            .drugs
            .values()
            .filter(|d| d.generic_group == drug.generic_group && d.drug_code != drug.drug_code)
            .collect();
        alternatives.sort_by_key(|d| (!self.in_stock(&d.drug_code), d.drug_code.clone()));
        Ok(alternatives.into_iter().cloned().collect())
    }
}
