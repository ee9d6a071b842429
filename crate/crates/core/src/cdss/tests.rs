use proptest::prelude::*;

use super::*;
use crate::clinical::{load_dataset, DoseBounds, LabResult};

fn demo() -> DataCatalog {
    load_dataset(&crate::system::demo_dataset_dir()).unwrap()
}

fn ctx(id: &str) -> PatientContext {
    demo().get_patient_context(id).unwrap()
}

fn line(code: &str, dose: f64, per_day: u32, mode: &str) -> PrescriptionLine {
    PrescriptionLine {
        drug_code: code.into(),
        dose_per_catch: dose,
        catches_per_day: per_day,
        admin_mode: mode.into(),
        duration_days: 5,
    }
}

fn dosing(catch: Option<f64>, day: Option<f64>, kg: Option<f64>) -> DosingInfo {
    DosingInfo {
        admin_modes: vec!["oral".into()],
        unit_of_catch: "mg".into(),
        default_dose_per_catch: 100.0,
        bounds: DoseBounds {
            max_dose_per_catch: catch,
            max_dose_per_day: day,
            max_dose_per_kg_per_day: kg,
        },
    }
}

fn kinds(errors: &[DetectedError]) -> Vec<(ErrorKind, Severity, Option<String>)> {
    let mut v: Vec<_> = errors.iter().map(|e| (e.kind, e.severity, e.rule_id.clone())).collect();
    v.sort();
    v
}

#[test]
fn no_bounds_no_dose_errors() {
    let p = ctx("P001");
    assert!(detect_dose_errors(0, &line("X", 1e6, 24, "oral"), &dosing(None, None, None), &p).is_empty());
}

#[test]
fn twenty_kilo_child_at_sixty_per_kilo() {
    let p = ctx("P001");
    assert_eq!(p.weight_kg(), Some(20.0));
    let errs = detect_dose_errors(0, &line("AMX500", 300.0, 4, "oral"), &dosing(Some(1000.0), Some(4000.0), Some(50.0)), &p);
    assert_eq!(errs.len(), 1);
    assert_eq!(errs[0].kind, ErrorKind::Dose);
    assert_eq!(errs[0].severity, Severity::Major);
    assert_eq!(errs[0].rule_id.as_deref(), Some("max-dose-per-kg-per-day"));
    // 300 * 4 = 1200 mg/day; 1200 / 20 = 60 mg/kg/day.
    assert!(errs[0].explanation.starts_with("60 mg/kg/day"), "{}", errs[0].explanation);
}

#[test]
fn twenty_kilo_fixture_through_analyze() {
    let report = analyze("rx", &[line("AMX500", 300.0, 4, "oral")], &demo(), &ctx("P001")).unwrap();
    assert_eq!(kinds(&report.errors), [(ErrorKind::Dose, Severity::Major, Some("max-dose-per-kg-per-day".into()))]);
    assert_eq!(report.verdict, Verdict::Blocked);
}

#[test]
fn each_violated_bound_is_reported() {
    let p = ctx("P001");
    let errs = detect_dose_errors(3, &line("X", 600.0, 4, "oral"), &dosing(Some(500.0), Some(2000.0), Some(100.0)), &p);
    let rules: Vec<_> = errs.iter().map(|e| e.rule_id.clone().unwrap()).collect();
    assert_eq!(rules, ["max-dose-per-catch", "max-dose-per-day", "max-dose-per-kg-per-day"]);
    assert!(errs.iter().all(|e| e.line_refs == [3]));
}

#[test]
fn at_the_bound_is_allowed() {
    let p = ctx("P001");
    assert!(detect_dose_errors(0, &line("X", 250.0, 4, "oral"), &dosing(Some(250.0), Some(1000.0), Some(50.0)), &p).is_empty());
}

#[test]
fn missing_weight_gives_insufficient_data() {
    let p = ctx("P006");
    assert_eq!(p.weight_kg(), None);
    let errs = detect_dose_errors(0, &line("X", 300.0, 4, "oral"), &dosing(None, None, Some(1.0)), &p);
    assert_eq!(kinds(&errs), [(ErrorKind::InsufficientData, Severity::Info, Some("weight-required".into()))]);
}

#[test]
fn choice_follows_formulary() {
    let c = demo();
    let p = ctx("P001");
    assert!(detect_choice_errors(0, &line("AMX500", 500.0, 3, "oral"), &c.formulary, &p).is_empty());
    let errs = detect_choice_errors(0, &line("SIM20", 20.0, 1, "oral"), &c.formulary, &p);
    assert_eq!(kinds(&errs), [(ErrorKind::Choice, Severity::Moderate, Some("formulary".into()))]);
    assert!(detect_choice_errors(0, &line("SIM20", 20.0, 1, "oral"), &Formulary::default(), &p).is_empty());
}

#[test]
fn service_fallback_admits() {
    let c = demo();
    // P007 is in emergency with open-fracture; a P001-like diagnosis set is not needed.
    let mut p = ctx("P007");
    p.profile.diagnoses.clear();
    assert!(detect_choice_errors(0, &line("PCM500", 500.0, 3, "oral"), &c.formulary, &p).is_empty());
    assert_eq!(detect_choice_errors(0, &line("CEFX1G", 500.0, 3, "IV"), &c.formulary, &p).len(), 1);
}

#[test]
fn admin_mode_membership() {
    let d = dosing(None, None, None);
    assert_eq!(detect_admin_mode_errors(0, &line("X", 1.0, 1, "IV"), &d).len(), 1);
    assert!(detect_admin_mode_errors(0, &line("X", 1.0, 1, "oral"), &d).is_empty());
}

#[test]
fn allergy_and_contraindication() {
    let c = demo();
    let amx = c.drug("AMX500").unwrap();
    let errs = detect_patient_conflicts(0, amx, &ctx("P002"));
    assert_eq!(kinds(&errs), [(ErrorKind::Allergy, Severity::Contraindicated, Some("allergy".into()))]);
    let ibu = c.drug("IBU400").unwrap();
    let errs = detect_patient_conflicts(1, ibu, &ctx("P004"));
    assert_eq!(kinds(&errs), [(ErrorKind::Contraindication, Severity::Major, Some("contraindication".into()))]);
    assert!(detect_patient_conflicts(0, amx, &ctx("P001")).is_empty());
}

fn interactions_for(patient: &PatientContext, codes: &[&str]) -> Vec<DetectedError> {
    let c = demo();
    let drugs: Vec<&DrugRecord> = codes.iter().map(|code| c.drug(code).unwrap()).collect();
    detect_interactions(&drugs, &c.rules, patient)
}

#[test]
fn single_line_has_no_pairs() {
    assert!(interactions_for(&ctx("P006"), &["SIM20"]).is_empty());
}

#[test]
fn contraindicated_pair() {
    let errs = interactions_for(&ctx("P006"), &["SIM20", "CLR500"]);
    assert_eq!(kinds(&errs), [(ErrorKind::Interaction, Severity::Contraindicated, Some("simvastatin-clarithromycin".into()))]);
    assert_eq!(errs[0].line_refs, [0, 1]);
}

#[test]
fn potassium_condition() {
    // P003 latest potassium is 5.5, P004 is 4.0, P005 has none.
    let fired = interactions_for(&ctx("P003"), &["SPI25", "LIS10"]);
    assert_eq!(kinds(&fired), [(ErrorKind::Interaction, Severity::Major, Some("spironolactone-lisinopril".into()))]);
    assert!(interactions_for(&ctx("P004"), &["SPI25", "LIS10"]).is_empty());
    let unknown = interactions_for(&ctx("P005"), &["LIS10", "SPI25"]);
    assert_eq!(kinds(&unknown), [(ErrorKind::InsufficientData, Severity::Info, Some("spironolactone-lisinopril".into()))]);
}

#[test]
fn lab_in_other_unit_is_insufficient() {
    let mut p = ctx("P003");
    let k = p.latest_labs.get_mut("serum-potassium").unwrap();
    *k = LabResult { unit: "mEq/L".into(), ..k.clone() };
    let errs = interactions_for(&p, &["SPI25", "LIS10"]);
    assert_eq!(errs[0].kind, ErrorKind::InsufficientData);
}

#[test]
fn duplicate_therapy() {
    let errs = interactions_for(&ctx("P001"), &["PCM500-A", "PCM500-B"]);
    assert_eq!(kinds(&errs), [(ErrorKind::Interaction, Severity::Major, Some("duplicate-therapy".into()))]);
}

#[test]
fn empty_prescription_passes() {
    let r = analyze("rx", &[], &demo(), &ctx("P001")).unwrap();
    assert!(r.errors.is_empty());
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn overdose_with_minor_interaction_blocks() {
    // P005: metformin + furosemide is minor; 900 mg furosemide per day is an overdose.
    let lines = [line("MET850", 850.0, 2, "oral"), line("FUR40", 80.0, 3, "oral")];
    let r = analyze("rx", &lines, &demo(), &ctx("P005")).unwrap();
    let k = kinds(&r.errors);
    assert!(k.contains(&(ErrorKind::Interaction, Severity::Minor, Some("metformin-furosemide".into()))));
    assert!(k.contains(&(ErrorKind::Dose, Severity::Major, Some("max-dose-per-day".into()))));
    assert_eq!(r.verdict, Verdict::Blocked);
}

#[test]
fn minor_alone_warns() {
    let lines = [line("MET850", 850.0, 2, "oral"), line("FUR40", 40.0, 1, "oral")];
    let r = analyze("rx", &lines, &demo(), &ctx("P005")).unwrap();
    assert_eq!(r.verdict, Verdict::PassWithWarnings);
}

#[test]
fn insufficient_data_alone_passes() {
    let lines = [line("LIS10", 10.0, 1, "oral"), line("SPI25", 25.0, 1, "oral")];
    let r = analyze("rx", &lines, &demo(), &ctx("P005")).unwrap();
    assert_eq!(r.errors.len(), 1);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn unknown_drug_names_first_line() {
    let lines = [line("AMX500", 1.0, 1, "oral"), line("NOPE", 1.0, 1, "oral"), line("ALSO", 1.0, 1, "oral")];
    assert_eq!(
        analyze("rx", &lines, &demo(), &ctx("P001")).unwrap_err(),
        CdssError::UnknownDrug {
            line: 1,
            drug_code: "NOPE".into()
        }
    );
}

#[test]
fn report_is_sorted() {
    let lines = [line("SIM20", 200.0, 1, "IV"), line("CLR500", 500.0, 1, "oral")];
    let r = analyze("rx", &lines, &demo(), &ctx("P006")).unwrap();
    let keys: Vec<_> = r.errors.iter().map(|e| (e.line_refs.clone(), e.kind, e.rule_id.clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

const CODES: [&str; 15] = [
    "AMX250", "AMX500", "CEF1G", "CEFX1G", "CLR500", "FUR40", "IBU400", "LIS10", "MET850", "PCM500", "PCM500-A", "PCM500-B",
    "SIM20", "SPI25", "WAR5",
];
const PATIENTS: [&str; 7] = ["P001", "P002", "P003", "P004", "P005", "P006", "P007"];

fn arb_line() -> impl Strategy<Value = PrescriptionLine> {
    (
        prop::sample::select(&CODES[..]),
        prop::sample::select(&[5.0, 10.0, 25.0, 40.0, 300.0, 500.0, 850.0, 1000.0, 2500.0][..]),
        1u32..=6,
        prop::sample::select(&["oral", "IV", "IM"][..]),
    )
        .prop_map(|(c, d, n, m)| line(c, d, n, m))
}

fn triples(r: &AnalysisReport) -> Vec<(ErrorKind, Severity, Option<String>)> {
    kinds(&r.errors)
}

proptest! {
    #[test]
    fn analysis_is_pure(lines in prop::collection::vec(arb_line(), 0..5), p in prop::sample::select(&PATIENTS[..])) {
        let c = demo();
        let ctx = c.get_patient_context(p).unwrap();
        prop_assert_eq!(analyze("rx", &lines, &c, &ctx).unwrap(), analyze("rx", &lines, &c, &ctx).unwrap());
    }

    #[test]
    fn line_order_does_not_matter(
        lines in prop::collection::vec(arb_line(), 0..5),
        p in prop::sample::select(&PATIENTS[..]),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let c = demo();
        let ctx = c.get_patient_context(p).unwrap();
        let mut perm: Vec<usize> = (0..lines.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<_> = perm.iter().map(|&i| lines[i].clone()).collect();
        let a = analyze("rx", &lines, &c, &ctx).unwrap();
        let b = analyze("rx", &shuffled, &c, &ctx).unwrap();
        prop_assert_eq!(triples(&a), triples(&b));
        prop_assert_eq!(a.verdict, b.verdict);
        // line_refs follow the permutation: new index k holds old line perm[k].
        let mut mapped: Vec<_> = b.errors.iter().map(|e| {
            let mut refs: Vec<usize> = e.line_refs.iter().map(|&k| perm[k]).collect();
            refs.sort();
            (refs, e.kind, e.rule_id.clone())
        }).collect();
        mapped.sort();
        let mut orig: Vec<_> = a.errors.iter().map(|e| (e.line_refs.clone(), e.kind, e.rule_id.clone())).collect();
        orig.sort();
        prop_assert_eq!(mapped, orig);
    }

    #[test]
    fn appending_a_line_keeps_earlier_findings(
        lines in prop::collection::vec(arb_line(), 0..4),
        extra in arb_line(),
        p in prop::sample::select(&PATIENTS[..]),
    ) {
        let c = demo();
        let ctx = c.get_patient_context(p).unwrap();
        let before = analyze("rx", &lines, &c, &ctx).unwrap();
        let mut longer = lines.clone();
        longer.push(extra);
        let after = analyze("rx", &longer, &c, &ctx).unwrap();
        for e in &before.errors {
            prop_assert!(after.errors.contains(e), "lost {:?}", e);
        }
        let rank = |v: Verdict| match v { Verdict::Pass => 0, Verdict::PassWithWarnings => 1, Verdict::Blocked => 2 };
        prop_assert!(rank(after.verdict) >= rank(before.verdict));
    }

    #[test]
    fn blocked_iff_blocking_severity(lines in prop::collection::vec(arb_line(), 0..5), p in prop::sample::select(&PATIENTS[..])) {
        let c = demo();
        let ctx = c.get_patient_context(p).unwrap();
        let r = analyze("rx", &lines, &c, &ctx).unwrap();
        let blocking = r.errors.iter().any(|e| matches!(e.severity, Severity::Major | Severity::Contraindicated));
        prop_assert_eq!(r.verdict == Verdict::Blocked, blocking);
        prop_assert!(r.errors.iter().all(|e| e.error_class == ErrorClass::Potential));
    }
}
