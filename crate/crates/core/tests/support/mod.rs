//! Helpers shared by the integration tests and the acceptance runner.

#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use careflow_core::bus::{AgentId, AgentKind, Performative};
use careflow_core::cdss::AnalysisReport;
use careflow_core::content::{Content, Msg};
use careflow_core::cpoe::{CpoeMsg, PrescriptionDraft, PrescriptionLine};
use careflow_core::scenario::{histories, run_scenario, LoadedScenario, RunOptions, RunOutcome};
use careflow_core::system::{reply_error, System};
use careflow_core::wfms::{HistoryEvent, InstanceStatus};

use oracle::{Finding, Oracle, OracleLine};

pub const MODES: [&str; 3] = ["oral", "IV", "IM"];
const DOSE_FACTORS: [f64; 7] = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0];

/// A random prescription over the demo dataset.
#[derive(Debug, Clone)]
pub struct Case {
    pub patient_id: String,
    pub lines: Vec<PrescriptionLine>,
}

pub fn random_cases(seed: u64, count: usize, oracle: &Oracle) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drugs = oracle.drug_codes();
    let patients = oracle.patient_ids();
    (0..count)
        .map(|_| {
            let n = rng.gen_range(0..=5);
            let lines = (0..n)
                .map(|_| {
                    let code = drugs.choose(&mut rng).unwrap().clone();
                    let base = [5.0, 20.0, 40.0, 250.0, 500.0, 1000.0].choose(&mut rng).unwrap();
                    PrescriptionLine {
                        drug_code: code,
                        dose_per_catch: base * DOSE_FACTORS.choose(&mut rng).unwrap(),
                        catches_per_day: rng.gen_range(1..=6),
                        admin_mode: MODES.choose(&mut rng).unwrap().to_string(),
                        duration_days: rng.gen_range(1..=14),
                    }
                })
                .collect();
            Case {
                patient_id: patients.choose(&mut rng).unwrap().clone(),
                lines,
            }
        })
        .collect()
}

pub fn oracle_view(oracle: &Oracle, case: &Case) -> (Vec<Finding>, String) {
    let lines: Vec<OracleLine<'_>> = case
        .lines
        .iter()
        .map(|l| OracleLine {
            drug_code: &l.drug_code,
            dose_per_catch: l.dose_per_catch,
            catches_per_day: l.catches_per_day,
            admin_mode: &l.admin_mode,
        })
        .collect();
    oracle.check(&case.patient_id, &lines)
}

/// (kind, severity, rule_id) multiset and verdict, as wire strings.
pub fn report_view(report: &AnalysisReport) -> (Vec<Finding>, String) {
    let as_str = |v: Value| v.as_str().unwrap().to_string();
    let mut findings: Vec<Finding> = report
        .errors
        .iter()
        .map(|e| {
            (
                as_str(serde_json::to_value(e.kind).unwrap()),
                as_str(serde_json::to_value(e.severity).unwrap()),
                e.rule_id.clone(),
            )
        })
        .collect();
    findings.sort();
    (findings, as_str(serde_json::to_value(report.verdict).unwrap()))
}

pub fn paa() -> AgentId {
    AgentId::main(AgentKind::Paa)
}

pub fn cpoe(sys: &mut System, receiver: AgentId, msg: CpoeMsg) -> Msg {
    let perf = match msg {
        CpoeMsg::DrugQuery { .. } | CpoeMsg::DraftQuery { .. } | CpoeMsg::ArchiveQuery { .. } => Performative::Query,
        _ => Performative::Request,
    };
    sys.call(receiver, perf, msg.into()).expect("reply")
}

pub fn draft_of(reply: &Msg) -> PrescriptionDraft {
    match &reply.content {
        Content::Cpoe(CpoeMsg::DraftMsg { draft }) => draft.clone(),
        other => panic!("expected a draft, got {other:?} ({:?})", reply_error(reply)),
    }
}

/// Runs one prescription through the agent pipeline: draft at the analyzer,
/// then analysis by the two decision-support agents.
pub fn pipeline_report(sys: &mut System, case: &Case) -> AnalysisReport {
    let draft = draft_of(&cpoe(
        sys,
        paa(),
        CpoeMsg::CreateDraft {
            patient_id: case.patient_id.clone(),
            prescriber: "dr-test".into(),
            lines: case.lines.clone(),
            prescription_id: None,
        },
    ));
    let reply = cpoe(
        sys,
        paa(),
        CpoeMsg::AnalyzeRequest {
            prescription_id: draft.prescription_id,
        },
    );
    match reply.content {
        Content::Cpoe(CpoeMsg::AnalysisReportMsg { report }) => report,
        other => panic!("expected a report, got {other:?}"),
    }
}

pub fn demo_scenario(name: &str) -> LoadedScenario {
    let path = careflow_core::system::data_dir().join("scenarios").join(format!("{name}.json"));
    LoadedScenario::from_file(&path).unwrap()
}

pub fn run_in(dir: &Path, scenario: &LoadedScenario, tweak: impl FnOnce(&mut RunOptions)) -> RunOutcome {
    let mut opts = RunOptions {
        out_dir: Some(dir.to_path_buf()),
        ..RunOptions::default()
    };
    tweak(&mut opts);
    run_scenario(scenario, &opts).unwrap()
}

pub fn final_histories(outcome: &RunOutcome) -> BTreeMap<String, (InstanceStatus, Vec<HistoryEvent>)> {
    histories(&outcome.report)
}
