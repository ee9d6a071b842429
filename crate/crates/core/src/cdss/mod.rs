//! Decision support over a prescription: pure detectors plus the two agents
//! (errors detection and drug-drug interaction detection) that run them on
//! the bus.
//!
//! Every finding is a *potential* medicinal error, i.e. caught before the
//! drug reaches the patient. Verdicts follow a fixed policy:
//!
//! * `blocked` if any finding is `contraindicated` or `major`,
//! * `pass` if there are no findings, or only informational
//!   `InsufficientData` notes,
//! * `pass_with_warnings` otherwise.

mod agents;

use serde::{Deserialize, Serialize};

use crate::clinical::{
    ClinicalError, DataCatalog, DosingInfo, DrugRecord, Formulary, InteractionRule, PatientContext, Severity,
};
use crate::cpoe::PrescriptionLine;

pub use agents::{decision_report_id, ErrorsDetectionAgent, InteractionDetectionAgent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorKind {
    Dose,
    Choice,
    AdministrationMode,
    Interaction,
    Allergy,
    Contraindication,
    InsufficientData,
}

/// Only potential errors exist in this system.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    #[default]
    Potential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedError {
    pub kind: ErrorKind,
    pub severity: Severity,
    /// Zero-based indices of the implicated prescription lines.
    pub line_refs: Vec<usize>,
    pub rule_id: Option<String>,
    pub explanation: String,
    pub error_class: ErrorClass,
}

impl DetectedError {
    fn unary(kind: ErrorKind, severity: Severity, line: usize, rule_id: &str, explanation: String) -> Self {
        Self {
            kind,
            severity,
            line_refs: vec![line],
            rule_id: Some(rule_id.to_string()),
            explanation,
            error_class: ErrorClass::Potential,
        }
    }

    fn pair(kind: ErrorKind, severity: Severity, i: usize, j: usize, rule_id: &str, explanation: String) -> Self {
        Self {
            kind,
            severity,
            line_refs: vec![i.min(j), i.max(j)],
            rule_id: Some(rule_id.to_string()),
            explanation,
            error_class: ErrorClass::Potential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    PassWithWarnings,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub prescription_id: String,
    pub errors: Vec<DetectedError>,
    pub verdict: Verdict,
}

impl AnalysisReport {
    /// Sorts the findings into report order and derives the verdict.
    pub fn assemble(prescription_id: impl Into<String>, mut errors: Vec<DetectedError>) -> Self {
        sort_errors(&mut errors);
        let verdict = verdict_for(&errors);
        Self {
            prescription_id: prescription_id.into(),
            errors,
            verdict,
        }
    }
}

pub fn sort_errors(errors: &mut [DetectedError]) {
    errors.sort_by(|a, b| {
        (&a.line_refs, a.kind, &a.rule_id, a.severity, &a.explanation)
            .cmp(&(&b.line_refs, b.kind, &b.rule_id, b.severity, &b.explanation))
    });
}

pub fn verdict_for(errors: &[DetectedError]) -> Verdict {
    if errors.iter().any(|e| e.severity.is_blocking()) {
        Verdict::Blocked
    } else if errors
        .iter()
        .all(|e| e.kind == ErrorKind::InsufficientData && e.severity == Severity::Info)
    {
        Verdict::Pass
    } else {
        Verdict::PassWithWarnings
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CdssError {
    #[error("line {line}: unknown drug {drug_code}")]
    UnknownDrug { line: usize, drug_code: String },
}

pub fn detect_dose_errors(
    line_index: usize,
    line: &PrescriptionLine,
    dosing: &DosingInfo,
    patient: &PatientContext,
) -> Vec<DetectedError> {
    let mut out = Vec::new();
    let unit = &dosing.unit_of_catch;
    let bounds = &dosing.bounds;
    let daily = line.dose_per_catch * f64::from(line.catches_per_day);
    if let Some(max) = bounds.max_dose_per_catch {
        if line.dose_per_catch > max {
            out.push(DetectedError::unary(
                ErrorKind::Dose,
                Severity::Major,
                line_index,
                "max-dose-per-catch",
                format!("{} {unit} per catch exceeds the {max} {unit} limit", line.dose_per_catch),
            ));
        }
    }
    if let Some(max) = bounds.max_dose_per_day {
        if daily > max {
            out.push(DetectedError::unary(
                ErrorKind::Dose,
                Severity::Major,
                line_index,
                "max-dose-per-day",
                format!("{daily} {unit}/day exceeds the {max} {unit}/day limit"),
            ));
        }
    }
    if let Some(max) = bounds.max_dose_per_kg_per_day {
        match patient.weight_kg() {
            Some(weight) => {
                let per_kg = daily / weight;
                if per_kg > max {
                    out.push(DetectedError::unary(
                        ErrorKind::Dose,
                        Severity::Major,
                        line_index,
                        "max-dose-per-kg-per-day",
                        format!("{per_kg} {unit}/kg/day exceeds the {max} {unit}/kg/day limit"),
                    ));
                }
            }
            None => out.push(DetectedError::unary(
                ErrorKind::InsufficientData,
                Severity::Info,
                line_index,
                "weight-required",
                format!("per-kg bound of {} cannot be checked without a weight", line.drug_code),
            )),
        }
    }
    out
}

pub fn detect_choice_errors(
    line_index: usize,
    line: &PrescriptionLine,
    formulary: &Formulary,
    patient: &PatientContext,
) -> Vec<DetectedError> {
    if formulary.admits(&line.drug_code, patient.diagnoses(), &patient.admin.service) {
        return Vec::new();
    }
    vec![DetectedError::unary(
        ErrorKind::Choice,
        Severity::Moderate,
        line_index,
        "formulary",
        format!(
            "{} is not a reference drug for the patient's diagnoses or service {}",
            line.drug_code, patient.admin.service
        ),
    )]
}

pub fn detect_admin_mode_errors(line_index: usize, line: &PrescriptionLine, dosing: &DosingInfo) -> Vec<DetectedError> {
    if dosing.admin_modes.contains(&line.admin_mode) {
        return Vec::new();
    }
    vec![DetectedError::unary(
        ErrorKind::AdministrationMode,
        Severity::Major,
        line_index,
        "admin-mode",
        format!(
            "{} cannot be given by {} (allowed: {})",
            line.drug_code,
            line.admin_mode,
            dosing.admin_modes.join(", ")
        ),
    )]
}

pub fn detect_patient_conflicts(line_index: usize, drug: &DrugRecord, patient: &PatientContext) -> Vec<DetectedError> {
    let mut out = Vec::new();
    if patient.allergies().contains(&drug.active_ingredient) {
        out.push(DetectedError::unary(
            ErrorKind::Allergy,
            Severity::Contraindicated,
            line_index,
            "allergy",
            format!("patient is allergic to {}", drug.active_ingredient),
        ));
    }
    let contra = patient.contraindications();
    if contra.contains(&drug.drug_code) || contra.contains(&drug.active_ingredient) {
        out.push(DetectedError::unary(
            ErrorKind::Contraindication,
            Severity::Major,
            line_index,
            "contraindication",
            format!("{} is contraindicated for this patient", drug.drug_code),
        ));
    }
    out
}

/// Pairwise interaction scan. `drugs[i]` is the drug of line `i`.
pub fn detect_interactions(
    drugs: &[&DrugRecord],
    rules: &[InteractionRule],
    patient: &PatientContext,
) -> Vec<DetectedError> {
    let mut out = Vec::new();
    for i in 0..drugs.len() {
        for j in i + 1..drugs.len() {
            let (a, b) = (&drugs[i].active_ingredient, &drugs[j].active_ingredient);
            if a == b {
                out.push(DetectedError::pair(
                    ErrorKind::Interaction,
                    Severity::Major,
                    i,
                    j,
                    "duplicate-therapy",
                    format!("{a} is prescribed twice"),
                ));
                continue;
            }
            for rule in rules.iter().filter(|r| r.matches(a, b)) {
                match &rule.lab_condition {
                    None => out.push(interaction(rule, i, j)),
                    Some(cond) => match patient.latest_lab(&cond.analyte) {
                        None => out.push(DetectedError::pair(
                            ErrorKind::InsufficientData,
                            Severity::Info,
                            i,
                            j,
                            &rule.rule_id,
                            format!("no {} result to evaluate rule {}", cond.analyte, rule.rule_id),
                        )),
                        Some(lab) if lab.unit != cond.unit => out.push(DetectedError::pair(
                            ErrorKind::InsufficientData,
                            Severity::Info,
                            i,
                            j,
                            &rule.rule_id,
                            format!(
                                "{} is recorded in {}, rule {} expects {}",
                                cond.analyte, lab.unit, rule.rule_id, cond.unit
                            ),
                        )),
                        Some(lab) if cond.comparator.holds(lab.value, cond.threshold) => {
                            out.push(interaction(rule, i, j))
                        }
                        Some(_) => {}
                    },
                }
            }
        }
    }
    out
}

fn interaction(rule: &InteractionRule, i: usize, j: usize) -> DetectedError {
    DetectedError::pair(
        ErrorKind::Interaction,
        rule.severity,
        i,
        j,
        &rule.rule_id,
        format!("{} + {}: {}", rule.ingredient_a, rule.ingredient_b, rule.effect),
    )
}

/// Resolves every line's drug, failing on the first unknown code.
pub fn resolve_lines<'c>(
    lines: &[PrescriptionLine],
    catalog: &'c DataCatalog,
) -> Result<Vec<&'c DrugRecord>, CdssError> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            catalog.drug(&l.drug_code).map_err(|_| CdssError::UnknownDrug {
                line: i,
                drug_code: l.drug_code.clone(),
            })
        })
        .collect()
}

/// Dose, choice and administration-mode findings for every line.
pub fn drug_error_checks<'d>(
    lines: &[PrescriptionLine],
    dosing: impl Fn(usize) -> &'d DosingInfo,
    formulary: &Formulary,
    patient: &PatientContext,
) -> Vec<DetectedError> {
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        out.extend(detect_dose_errors(i, line, dosing(i), patient));
        out.extend(detect_choice_errors(i, line, formulary, patient));
        out.extend(detect_admin_mode_errors(i, line, dosing(i)));
    }
    out
}

/// Allergy, contraindication and pairwise interaction findings.
pub fn interaction_checks(drugs: &[&DrugRecord], rules: &[InteractionRule], patient: &PatientContext) -> Vec<DetectedError> {
    let mut out = Vec::new();
    for (i, drug) in drugs.iter().enumerate() {
        out.extend(detect_patient_conflicts(i, drug, patient));
    }
    out.extend(detect_interactions(drugs, rules, patient));
    out
}

/// Runs every detector over a prescription.
pub fn analyze(
    prescription_id: &str,
    lines: &[PrescriptionLine],
    catalog: &DataCatalog,
    patient: &PatientContext,
) -> Result<AnalysisReport, CdssError> {
    let drugs = resolve_lines(lines, catalog)?;
    let mut errors = drug_error_checks(lines, |i| &drugs[i].dosing, &catalog.formulary, patient);
    errors.extend(interaction_checks(&drugs, &catalog.rules, patient));
    Ok(AnalysisReport::assemble(prescription_id, errors))
}

impl From<CdssError> for ClinicalError {
    fn from(e: CdssError) -> Self {
        match e {
            CdssError::UnknownDrug { drug_code, .. } => ClinicalError::UnknownDrug(drug_code),
        }
    }
}

#[cfg(test)]
mod tests;
