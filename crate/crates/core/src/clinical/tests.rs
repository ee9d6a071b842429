use std::path::Path;

use super::*;
use crate::cdss::{AnalysisReport, Verdict};
use crate::cpoe::{DraftStatus, PrescriptionDraft, PrescriptionLine};

fn demo() -> DataCatalog {
    load_dataset(&crate::system::demo_dataset_dir()).expect("demo dataset loads")
}

fn drug(code: &str, name: &str, group: &str) -> DrugRecord {
    DrugRecord {
        drug_code: code.into(),
        name: name.into(),
        active_ingredient: group.into(),
        generic_group: group.into(),
        dosing: DosingInfo {
            admin_modes: vec!["oral".into()],
            unit_of_catch: "mg".into(),
            default_dose_per_catch: 100.0,
            bounds: DoseBounds::default(),
        },
    }
}

fn catalog_with(drugs: &[DrugRecord], stock: &[(&str, u64)]) -> DataCatalog {
    let mut c = DataCatalog::default();
    for d in drugs {
        c.drugs.insert(d.drug_code.clone(), d.clone());
    }
    for (code, q) in stock {
        c.stock.insert(code.to_string(), StockEntry::new(*code, *q));
    }
    c
}

fn line(code: &str) -> PrescriptionLine {
    PrescriptionLine {
        drug_code: code.into(),
        dose_per_catch: 500.0,
        catches_per_day: 2,
        admin_mode: "oral".into(),
        duration_days: 3,
    }
}

fn copy_demo(to: &Path) {
    for entry in std::fs::read_dir(crate::system::demo_dataset_dir()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
    }
}

#[test]
fn demo_dataset_populates_five_sources() {
    let c = demo();
    assert_eq!(c.sources().len(), 5);
    assert_eq!(c.populated_sources(), 5);
    assert!(c.stock.keys().eq(c.drugs.keys()), "every drug has a stock entry");
}

#[test]
fn dangling_stock_reference_is_an_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    copy_demo(dir.path());
    let stock = r#"[{"drug_code": "NOPE", "quantity_on_hand": 3}]"#;
    std::fs::write(dir.path().join(STOCK_FILE), stock).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert_eq!(err.code(), "IntegrityError");
    assert!(err.to_string().contains("NOPE"), "{err}");
}

#[test]
fn empty_directory_fails_on_first_file() {
    let dir = tempfile::tempdir().unwrap();
    match load_dataset(dir.path()).unwrap_err() {
        ClinicalError::Parse { file, .. } => assert_eq!(file, PATIENTS_FILE),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_json_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    copy_demo(dir.path());
    std::fs::write(dir.path().join(LABS_FILE), "[\n{\"patient_id\": \n").unwrap();
    match load_dataset(dir.path()).unwrap_err() {
        ClinicalError::Parse { file, line, .. } => {
            assert_eq!(file, LABS_FILE);
            assert!(line >= 2);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn stock_status_must_agree_with_quantity() {
    let dir = tempfile::tempdir().unwrap();
    copy_demo(dir.path());
    let mut rows: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(dir.path().join(STOCK_FILE)).unwrap()).unwrap();
    rows[0]["status"] = "rupture".into();
    rows[0]["quantity_on_hand"] = 5.into();
    std::fs::write(dir.path().join(STOCK_FILE), serde_json::to_string(&rows).unwrap()).unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap_err().code(), "IntegrityError");
}

#[test]
fn default_dose_above_max_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    copy_demo(dir.path());
    let mut drugs: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(dir.path().join(DRUG_BANK_FILE)).unwrap()).unwrap();
    drugs[0]["default_dose_per_catch"] = 5000.0.into();
    std::fs::write(dir.path().join(DRUG_BANK_FILE), serde_json::to_string(&drugs).unwrap()).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(err.to_string().contains("default dose"), "{err}");
}

#[test]
fn latest_lab_wins() {
    let ctx = demo().get_patient_context("P003").unwrap();
    let k = ctx.latest_lab("serum-potassium").unwrap();
    assert_eq!(k.value, 5.5);
    assert_eq!(ctx.latest_labs.len(), 2);
}

#[test]
fn allergy_reads_back() {
    let ctx = demo().get_patient_context("P002").unwrap();
    assert!(ctx.allergies().contains(&"penicillin-group".to_string()));
}

#[test]
fn unknown_patient() {
    assert_eq!(demo().get_patient_context("P404").unwrap_err(), ClinicalError::UnknownPatient("P404".into()));
}

#[test]
fn category_is_kept_verbatim() {
    assert_eq!(demo().get_patient_context("P001").unwrap().admin.category, "pediatric");
}

#[test]
fn find_drugs_exact_code_first() {
    let c = demo();
    let hits = c.find_drugs("pcm500-a");
    assert_eq!(hits[0].drug_code, "PCM500-A");
    let hits = c.find_drugs("PCM500");
    assert_eq!(hits.iter().map(|d| d.drug_code.as_str()).collect::<Vec<_>>(), ["PCM500", "PCM500-A", "PCM500-B"]);
}

#[test]
fn find_drugs_breaks_ties_by_code() {
    let c = catalog_with(&[drug("B2", "Amoxil-250", "amx"), drug("A1", "Amoxil-500", "amx")], &[]);
    let codes: Vec<String> = c.find_drugs("amoxil").into_iter().map(|d| d.drug_code).collect();
    assert_eq!(codes, ["A1", "B2"]);
}

#[test]
fn find_drugs_no_match() {
    assert!(demo().find_drugs("zzz-not-a-drug").is_empty());
}

#[test]
fn stock_status_follows_quantity() {
    let c = catalog_with(&[drug("X", "x", "g"), drug("Y", "y", "g")], &[("X", 0), ("Y", 12)]);
    assert_eq!(c.check_stock("X").unwrap().status, StockStatus::Rupture);
    assert_eq!(c.check_stock("Y").unwrap().status, StockStatus::Available);
    assert_eq!(c.check_stock("Z").unwrap_err(), ClinicalError::UnknownDrug("Z".into()));
}

#[test]
fn generic_alternatives_in_stock_first() {
    let c = catalog_with(
        &[drug("X", "x", "g"), drug("Z", "z", "g"), drug("Y", "y", "g"), drug("W", "w", "g"), drug("S", "s", "solo")],
        &[("X", 0), ("Y", 4), ("Z", 9), ("W", 0), ("S", 1)],
    );
    let codes: Vec<String> = c.list_generic_alternatives("X").unwrap().into_iter().map(|d| d.drug_code).collect();
    // Y and Z are in stock and sort by code; W is out and comes last.
    assert_eq!(codes, ["Y", "Z", "W"]);
    assert!(c.list_generic_alternatives("S").unwrap().is_empty());
    assert_eq!(c.list_generic_alternatives("Q").unwrap_err().code(), "UnknownDrug");
}

#[test]
fn demo_substitution_groups() {
    let c = demo();
    let alts: Vec<String> = c.list_generic_alternatives("CEF1G").unwrap().into_iter().map(|d| d.drug_code).collect();
    assert_eq!(alts, ["CEFX1G"]);
    let alts: Vec<String> = c.list_generic_alternatives("PCM500").unwrap().into_iter().map(|d| d.drug_code).collect();
    assert_eq!(alts, ["PCM500-A", "PCM500-B"]);
}

#[test]
fn protocol_round_trip() {
    let mut store = ProtocolStore::default();
    let lines = vec![line("A"), line("B")];
    store.save_protocol("fever", lines.clone()).unwrap();
    assert_eq!(store.fetch_protocol("fever").unwrap().lines, lines);
    assert_eq!(store.save_protocol("fever", lines).unwrap_err(), ClinicalError::DuplicateTitle("fever".into()));
    assert_eq!(store.fetch_protocol("cough").unwrap_err(), ClinicalError::NotFound("cough".into()));
    assert_eq!(store.save_protocol(" ", vec![line("A")]).unwrap_err().code(), "InvalidProtocol");
    assert_eq!(store.save_protocol("empty", vec![]).unwrap_err().code(), "InvalidProtocol");
}

fn validated(id: &str, patient: &str) -> (PrescriptionDraft, AnalysisReport) {
    let mut draft = PrescriptionDraft::new(id, patient, "dr");
    draft.set_lines(vec![line("A")]);
    draft.status = DraftStatus::Validated;
    (draft, AnalysisReport::assemble(id, vec![]))
}

#[test]
fn archive_refuses_unvalidated() {
    let mut store = ArchiveStore::in_memory();
    let (mut draft, mut report) = validated("rx-1", "P1");
    draft.status = DraftStatus::Blocked;
    assert_eq!(store.archive_prescription(draft.clone(), report.clone(), 1).unwrap_err().code(), "NotValidated");
    draft.status = DraftStatus::Validated;
    report.verdict = Verdict::Blocked;
    assert_eq!(store.archive_prescription(draft, report, 1).unwrap_err().code(), "NotValidated");
    assert!(store.is_empty());
}

#[test]
fn archive_round_trip_and_order() {
    let mut store = ArchiveStore::in_memory();
    let (d1, r1) = validated("rx-1", "P1");
    let (d2, r2) = validated("rx-2", "P1");
    let (d3, r3) = validated("rx-3", "P2");
    store.archive_prescription(d2.clone(), r2, 7).unwrap();
    store.archive_prescription(d1.clone(), r1, 9).unwrap();
    store.archive_prescription(d3, r3, 8).unwrap();
    let p1 = store.query_archive("P1");
    assert_eq!(p1.len(), 2);
    assert_eq!(p1[0].prescription, d2);
    assert_eq!(p1[1].archived_at, 9);
    assert!(store.query_archive("P9").is_empty());
    assert_eq!(store.archive_prescription(d1, AnalysisReport::assemble("rx-1", vec![]), 10).unwrap_err().code(), "AlreadyArchived");
}

#[test]
fn archive_mirrors_to_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ArchiveStore::with_dir(dir.path());
    let (d, r) = validated("rx-5", "P1");
    let entry = store.archive_prescription(d, r, 3).unwrap();
    let text = std::fs::read_to_string(dir.path().join(format!("{}.json", entry.archive_id))).unwrap();
    let back: ArchivedPrescription = serde_json::from_str(&text).unwrap();
    assert_eq!(back, entry);
}

#[test]
fn profile_lists_are_deduplicated() {
    let mut p = PhysioProfile {
        patient_id: "P".into(),
        allergies: vec!["a".into(), "b".into(), "a".into()],
        ..PhysioProfile::default()
    };
    p.dedup();
    assert_eq!(p.allergies, ["a", "b"]);
}

#[test]
fn empty_formulary_admits_everything() {
    let f = Formulary::default();
    assert!(f.admits("ANY", &[], "nowhere"));
}
