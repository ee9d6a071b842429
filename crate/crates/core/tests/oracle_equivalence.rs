mod support;

use careflow_core::cdss::analyze;
use careflow_core::system::{demo_dataset_dir, System, SystemConfig};

use support::oracle::Oracle;
use support::{oracle_view, pipeline_report, random_cases, report_view};

const CASES: usize = 1000;
const SEED: u64 = 0x5eed_0001;

#[test]
fn agent_pipeline_matches_brute_force_checker() {
    let oracle = Oracle::load(&demo_dataset_dir());
    let cases = random_cases(SEED, CASES, &oracle);
    let mut sys = System::new(SystemConfig::demo(11)).unwrap();
    let mut mismatches = Vec::new();
    let mut blocked = 0;
    for (n, case) in cases.iter().enumerate() {
        let got = report_view(&pipeline_report(&mut sys, case));
        let want = oracle_view(&oracle, case);
        if got.1 == "blocked" {
            blocked += 1;
        }
        if got != want {
            mismatches.push(format!("case {n} {case:?}\n  pipeline {got:?}\n  oracle   {want:?}"));
        }
    }
    assert!(mismatches.is_empty(), "{} mismatches, first:\n{}", mismatches.len(), mismatches[0]);
    // The generator should exercise every verdict, not just the blocked one.
    assert!(blocked > 0 && blocked < CASES, "blocked {blocked} of {CASES}");
}

#[test]
fn direct_analysis_matches_brute_force_checker() {
    let oracle = Oracle::load(&demo_dataset_dir());
    let sys = System::new(SystemConfig::demo(1)).unwrap();
    let catalog = sys.catalog().clone();
    for case in random_cases(SEED + 1, CASES, &oracle) {
        let ctx = catalog.get_patient_context(&case.patient_id).unwrap();
        let report = analyze("rx", &case.lines, &catalog, &ctx).unwrap();
        assert_eq!(report_view(&report), oracle_view(&oracle, &case), "{case:?}");
    }
}

#[test]
fn generator_covers_all_verdicts_and_kinds() {
    let oracle = Oracle::load(&demo_dataset_dir());
    let mut verdicts = std::collections::BTreeSet::new();
    let mut kinds = std::collections::BTreeSet::new();
    for case in random_cases(SEED, CASES, &oracle) {
        let (findings, verdict) = oracle_view(&oracle, &case);
        verdicts.insert(verdict);
        kinds.extend(findings.into_iter().map(|f| f.0));
    }
    assert_eq!(verdicts.len(), 3, "{verdicts:?}");
    assert_eq!(kinds.len(), 7, "{kinds:?}");
}
