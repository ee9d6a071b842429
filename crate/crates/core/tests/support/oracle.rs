//! Brute-force prescription checker written against the raw dataset files.
//!
//! Shares no code with the library: it reads the JSON sources as untyped
//! values and re-applies every rule with plain loops.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

pub type Finding = (String, String, Option<String>);

pub struct OracleLine<'a> {
    pub drug_code: &'a str,
    pub dose_per_catch: f64,
    pub catches_per_day: u32,
    pub admin_mode: &'a str,
}

pub struct Oracle {
    patients: Vec<Value>,
    profiles: Vec<Value>,
    labs: Vec<Value>,
    drugs: Vec<Value>,
    rules: Vec<Value>,
    formulary: Value,
}

fn read(dir: &Path, file: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{file}: {e}"))
}

fn array(v: Value) -> Vec<Value> {
    match v {
        Value::Array(a) => a,
        _ => panic!("expected an array"),
    }
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array()
        .map(|a| a.iter().filter_map(|s| s.as_str().map(str::to_owned)).collect())
        .unwrap_or_default()
}

fn finding(kind: &str, severity: &str, rule: &str) -> Finding {
    (kind.to_string(), severity.to_string(), Some(rule.to_string()))
}

impl Oracle {
    pub fn load(dir: &Path) -> Self {
        let formulary_path = dir.join("formulary.json");
        Self {
            patients: array(read(dir, "patients.json")),
            profiles: array(read(dir, "physio_profiles.json")),
            labs: array(read(dir, "lab_results.json")),
            drugs: array(read(dir, "drug_bank.json")),
            rules: array(read(dir, "interaction_rules.json")),
            formulary: if formulary_path.exists() { read(dir, "formulary.json") } else { Value::Null },
        }
    }

    pub fn drug_codes(&self) -> Vec<String> {
        self.drugs.iter().map(|d| d["drug_code"].as_str().unwrap().to_string()).collect()
    }

    pub fn patient_ids(&self) -> Vec<String> {
        self.patients.iter().map(|p| p["patient_id"].as_str().unwrap().to_string()).collect()
    }

    fn drug(&self, code: &str) -> &Value {
        self.drugs.iter().find(|d| d["drug_code"] == code).expect("known drug")
    }

    fn patient(&self, id: &str) -> &Value {
        self.patients.iter().find(|p| p["patient_id"] == id).expect("known patient")
    }

    fn profile(&self, id: &str) -> Value {
        self.profiles.iter().find(|p| p["patient_id"] == id).cloned().unwrap_or(Value::Null)
    }

    /// Latest value of an analyte; ISO-8601 UTC timestamps order as strings.
    fn latest_lab(&self, patient: &str, analyte: &str) -> Option<(f64, String)> {
        let mut best: Option<(&str, f64, String)> = None;
        for lab in &self.labs {
            if lab["patient_id"] != patient || lab["analyte"] != analyte {
                continue;
            }
            let at = lab["taken_at"].as_str().unwrap();
            if best.as_ref().is_none_or(|(b, _, _)| at > *b) {
                best = Some((at, lab["value"].as_f64().unwrap(), lab["unit"].as_str().unwrap().to_string()));
            }
        }
        best.map(|(_, v, u)| (v, u))
    }

    fn formulary_admits(&self, code: &str, diagnoses: &[String], service: &str) -> bool {
        let sets = |key: &str| -> BTreeMap<String, Vec<String>> {
            self.formulary[key]
                .as_object()
                .map(|o| o.iter().map(|(k, v)| (k.clone(), strings(v))).collect())
                .unwrap_or_default()
        };
        let by_dx = sets("diagnoses");
        let by_service = sets("services");
        let open = by_dx.values().chain(by_service.values()).all(|s| s.is_empty());
        if open {
            return true;
        }
        for d in diagnoses {
            if let Some(set) = by_dx.get(d) {
                if set.iter().any(|c| c == code) {
                    return true;
                }
            }
        }
        by_service.get(service).is_some_and(|set| set.iter().any(|c| c == code))
    }

    pub fn check(&self, patient_id: &str, lines: &[OracleLine<'_>]) -> (Vec<Finding>, String) {
        let patient = self.patient(patient_id);
        let profile = self.profile(patient_id);
        let weight = patient["weight_kg"].as_f64();
        let service = patient["service"].as_str().unwrap_or("");
        let diagnoses = strings(&profile["diagnoses"]);
        let allergies = strings(&profile["allergies"]);
        let contra = strings(&profile["contraindications"]);
        let mut out = Vec::new();

        for line in lines {
            let drug = self.drug(line.drug_code);
            let daily = line.dose_per_catch * line.catches_per_day as f64;
            if let Some(max) = drug["max_dose_per_catch"].as_f64() {
                if line.dose_per_catch > max {
                    out.push(finding("Dose", "major", "max-dose-per-catch"));
                }
            }
            if let Some(max) = drug["max_dose_per_day"].as_f64() {
                if daily > max {
                    out.push(finding("Dose", "major", "max-dose-per-day"));
                }
            }
            if let Some(max) = drug["max_dose_per_kg_per_day"].as_f64() {
                match weight {
                    Some(w) if daily / w > max => out.push(finding("Dose", "major", "max-dose-per-kg-per-day")),
                    Some(_) => {}
                    None => out.push(finding("InsufficientData", "info", "weight-required")),
                }
            }
            if !self.formulary_admits(line.drug_code, &diagnoses, service) {
                out.push(finding("Choice", "moderate", "formulary"));
            }
            if !strings(&drug["admin_modes"]).iter().any(|m| m == line.admin_mode) {
                out.push(finding("AdministrationMode", "major", "admin-mode"));
            }
            let ingredient = drug["active_ingredient"].as_str().unwrap();
            if allergies.iter().any(|a| a == ingredient) {
                out.push(finding("Allergy", "contraindicated", "allergy"));
            }
            if contra.iter().any(|c| c == ingredient || c == line.drug_code) {
                out.push(finding("Contraindication", "major", "contraindication"));
            }
        }

        for i in 0..lines.len() {
            for j in 0..lines.len() {
                if j <= i {
                    continue;
                }
                let a = self.drug(lines[i].drug_code)["active_ingredient"].as_str().unwrap();
                let b = self.drug(lines[j].drug_code)["active_ingredient"].as_str().unwrap();
                if a == b {
                    out.push(finding("Interaction", "major", "duplicate-therapy"));
                    continue;
                }
                for rule in &self.rules {
                    let ra = rule["ingredient_a"].as_str().unwrap();
                    let rb = rule["ingredient_b"].as_str().unwrap();
                    if !((ra == a && rb == b) || (ra == b && rb == a)) {
                        continue;
                    }
                    let id = rule["rule_id"].as_str().unwrap();
                    let sev = rule["severity"].as_str().unwrap();
                    let cond = &rule["lab_condition"];
                    if cond.is_null() {
                        out.push(finding("Interaction", sev, id));
                        continue;
                    }
                    let analyte = cond["analyte"].as_str().unwrap();
                    match self.latest_lab(patient_id, analyte) {
                        None => out.push(finding("InsufficientData", "info", id)),
                        Some((_, unit)) if unit != cond["unit"].as_str().unwrap() => {
                            out.push(finding("InsufficientData", "info", id))
                        }
                        Some((value, _)) => {
                            let t = cond["threshold"].as_f64().unwrap();
                            let holds = match cond["comparator"].as_str().unwrap() {
                                "<" => value < t,
                                "<=" | "≤" => value <= t,
                                ">" => value > t,
                                ">=" | "≥" => value >= t,
                                other => panic!("comparator {other}"),
                            };
                            if holds {
                                out.push(finding("Interaction", sev, id));
                            }
                        }
                    }
                }
            }
        }

        out.sort();
        let blocked = out.iter().any(|(_, s, _)| s == "major" || s == "contraindicated");
        let only_notes = out.iter().all(|(k, s, _)| k == "InsufficientData" && s == "info");
        let verdict = if blocked {
            "blocked"
        } else if only_notes {
            "pass"
        } else {
            "pass_with_warnings"
        };
        (out, verdict.to_string())
    }
}
