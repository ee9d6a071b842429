//! One PASS/FAIL line per primary acceptance criterion.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;

use careflow_core::bus::{AclMessage, AgentId, AgentKind, AuditDecision, BusError, Performative};
use careflow_core::cdss::{analyze, ErrorKind};
use careflow_core::connector::{ConnectorAgent, PlugMode, INTERFACE6_ONTOLOGY};
use careflow_core::content::{Content, Msg};
use careflow_core::cpoe::{Audience, CpoeMsg, Override, PrescriptionLine};
use careflow_core::org::{OrgSpecFile, DECISION_SUPPORT};
use careflow_core::scenario::RunOutcome;
use careflow_core::system::{demo_dataset_dir, demo_process_xml, reply_error, System, SystemConfig};
use careflow_core::wfms::{AgentManager, ConnectorAction, TaskOutcome, WfmcMsg};
use serde_json::json;
use support::oracle::Oracle;
use support::{cpoe, demo_scenario, draft_of, final_histories, oracle_view, paa, pipeline_report, random_cases, report_view, run_in};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn am(sys: &mut System, msg: WfmcMsg) -> Msg {
    sys.call(AgentManager::id(), Performative::Request, msg.into()).unwrap()
}

fn structural_fidelity() -> Check {
    let mut sys = System::new(SystemConfig::demo(1)).unwrap();
    let mediation: Vec<AgentKind> = AgentKind::MEDIATION.into_iter().filter(|k| sys.bus().by_kind(*k).len() == 1).collect();
    ensure!(mediation.len() == 10, "{} mediation kinds registered", mediation.len());
    let sources = sys.catalog().populated_sources();
    ensure!(sources == 5, "{sources} clinical sources");
    let spec = OrgSpecFile::default_spec();
    ensure!(spec.organizations.len() == 3, "{} organizations", spec.organizations.len());
    let cds = &spec.organization(DECISION_SUPPORT).unwrap().members;
    ensure!(cds[..] == [AgentKind::Deda, AgentKind::Ddida], "CDS members {cds:?}");

    // Interface 1: definitions in.
    let loaded = am(&mut sys, WfmcMsg::LoadDefinition { xml: demo_process_xml("bed-transfer").unwrap() });
    ensure!(matches!(loaded.content, Content::Wfmc(WfmcMsg::DefinitionLoaded { .. })), "interface 1: {:?}", reply_error(&loaded));
    // Interface 2: instances and worklist.
    let created = am(&mut sys, WfmcMsg::CreateInstance { def_id: "bed-transfer".into(), variables: BTreeMap::from([("severity".into(), json!("high"))]) });
    ensure!(reply_error(&created).is_none(), "interface 2 create: {:?}", reply_error(&created));
    let list = am(&mut sys, WfmcMsg::WorklistQuery { role: None });
    ensure!(matches!(&list.content, Content::Wfmc(WfmcMsg::Worklist { items }) if items.len() == 1), "interface 2 worklist");
    let done = am(&mut sys, WfmcMsg::CompleteWorkItem { workitem_id: "wf-1:request".into(), data: BTreeMap::new() });
    ensure!(reply_error(&done).is_none(), "interface 2 complete: {:?}", reply_error(&done));
    // Interface 3: the automatic vitals task invoked its application.
    let inst = &sys.instances()["wf-1"];
    ensure!(
        inst.history.iter().any(|e| e.task_id == "vitals" && e.outcome == TaskOutcome::Completed),
        "interface 3: vitals application not invoked"
    );
    // Interface 4 is declared but not supported.
    let interop = am(&mut sys, WfmcMsg::Interop { target: "other-wfms".into(), payload: json!({}) });
    let i4 = reply_error(&interop).map(|e| e.0);
    ensure!(interop.performative == Performative::Refuse && i4.as_deref() == Some("NotSupported"), "interface 4: {:?}", i4);
    // Interface 5: monitoring.
    let admin = am(&mut sys, WfmcMsg::AdminQuery { def_id: None });
    ensure!(matches!(admin.content, Content::Wfmc(WfmcMsg::Monitoring { .. })), "interface 5");
    // Interface 6: the connector plugs into the mediation layer.
    let plug = sys
        .call(ConnectorAgent::id(), Performative::Request, WfmcMsg::ConnectorControl { action: ConnectorAction::Plug }.into())
        .unwrap();
    ensure!(reply_error(&plug).is_none(), "interface 6: {:?}", reply_error(&plug));
    let i6 = sys.bus().trace().messages().filter(|m| m.ontology == INTERFACE6_ONTOLOGY).count();
    ensure!(i6 == 2, "interface 6: {i6} messages");
    Ok("10 mediation kinds, 5 sources, 3 organizations, CDS = {DEDA, DDIDA}, interfaces 1/2/3/5/6 answer, 4 refuses NotSupported".into())
}

fn oracle_equivalence() -> Check {
    let oracle = Oracle::load(&demo_dataset_dir());
    let cases = random_cases(20_260_101, 1000, &oracle);
    let mut sys = System::new(SystemConfig::demo(3)).unwrap();
    let mut verdicts = BTreeMap::<String, usize>::new();
    let mut mismatches = 0;
    for case in &cases {
        let got = report_view(&pipeline_report(&mut sys, case));
        *verdicts.entry(got.1.clone()).or_default() += 1;
        if got != oracle_view(&oracle, case) {
            mismatches += 1;
        }
    }
    ensure!(mismatches == 0, "{mismatches} of {} cases differ", cases.len());
    Ok(format!("{} random prescriptions, 0 mismatches, verdicts {verdicts:?}", cases.len()))
}

fn i6_count(o: &RunOutcome) -> usize {
    o.trace.messages().filter(|m| m.ontology == INTERFACE6_ONTOLOGY).count()
}

fn determinism(dir: &Path) -> Check {
    let scenario = demo_scenario("accident-care");
    let a = run_in(&dir.join("a"), &scenario, |_| {});
    let b = run_in(&dir.join("b"), &scenario, |_| {});
    let bytes = |o: &RunOutcome| std::fs::read(o.trace_path.as_ref().unwrap()).unwrap();
    ensure!(bytes(&a) == bytes(&b), "same seed produced different trace files");
    let mut differing = 0;
    for seed in [1, 7, 99, 2024] {
        let other = run_in(&dir.join(format!("s{seed}")), &scenario, |o| o.seed = Some(seed));
        ensure!(final_histories(&other) == final_histories(&a), "seed {seed} changed a final history");
        differing += usize::from(other.trace_ndjson() != a.trace_ndjson());
    }
    ensure!(differing > 0, "no seed changed the interleaving");
    Ok(format!("identical trace files ({} events); {differing}/4 other seeds reorder deliveries, histories unchanged", a.trace.events.len()))
}

fn lazy_plugging(dir: &Path) -> Check {
    let bed = run_in(&dir.join("bed"), &demo_scenario("bed-transfer"), |_| {});
    ensure!(bed.exit_code == 0, "bed-transfer faults {:?}", bed.faults);
    ensure!(i6_count(&bed) == 0, "bed-transfer sent {} interface-6 messages", i6_count(&bed));
    let scenario = demo_scenario("accident-care");
    let lazy = run_in(&dir.join("lazy"), &scenario, |o| o.mode = Some(PlugMode::Lazy));
    let variants: Vec<&str> = lazy
        .trace
        .messages()
        .filter_map(|m| match &m.content {
            Content::Interface6(i) => Some(i.variant()),
            _ => None,
        })
        .collect();
    let plug = variants.iter().position(|v| *v == "PlugRequest");
    let query = variants.iter().position(|v| *v == "DecisionQuery");
    ensure!(matches!((plug, query), (Some(p), Some(q)) if p < q), "PlugRequest at {plug:?}, first DecisionQuery at {query:?}");
    let eager = run_in(&dir.join("eager"), &scenario, |o| o.mode = Some(PlugMode::Eager));
    ensure!(final_histories(&eager) == final_histories(&lazy), "eager and lazy histories differ");
    Ok("bed-transfer: 0 interface-6 messages; PlugRequest precedes first DecisionQuery; eager = lazy histories".into())
}

fn persistence(dir: &Path) -> Check {
    let file = support_scenario_path("accident-care");
    let bin = env!("CARGO_BIN_EXE_careflow");
    let run = |out: &Path, extra: &[&str]| {
        let status = Command::new(bin)
            .arg("run-scenario")
            .arg(&file)
            .arg("--out")
            .arg(out)
            .args(extra)
            .output()
            .unwrap();
        status.status.code()
    };
    let (full, cut, resumed) = (dir.join("full"), dir.join("cut"), dir.join("resumed"));
    ensure!(run(&full, &[]) == Some(0), "uninterrupted run failed");
    ensure!(run(&cut, &["--stop-at-snapshot"]) == Some(0), "interrupted run failed");
    let snapshot = cut.join("accident-care.snapshot.json");
    ensure!(run(&resumed, &["--resume", snapshot.to_str().unwrap()]) == Some(0), "resumed run failed");
    let report = |d: &Path| -> serde_json::Value { serde_json::from_str(&std::fs::read_to_string(d.join("accident-care.report.json")).unwrap()).unwrap() };
    let (a, b) = (report(&full), report(&resumed));
    let histories = |r: &serde_json::Value| -> BTreeMap<String, (serde_json::Value, serde_json::Value)> {
        r["instances"].as_object().unwrap().iter().map(|(k, v)| (k.clone(), (v["status"].clone(), v["history"].clone()))).collect()
    };
    ensure!(histories(&a) == histories(&b), "resumed histories differ");
    ensure!(a["archive"] == b["archive"], "resumed archive differs");
    Ok(format!(
        "snapshot restored in a fresh process; {} histories and {} archive entries match",
        histories(&a).len(),
        a["archive"].as_array().unwrap().len()
    ))
}

fn support_scenario_path(name: &str) -> std::path::PathBuf {
    careflow_core::system::data_dir().join("scenarios").join(format!("{name}.json"))
}

fn authorization(dir: &Path) -> Check {
    let outcome = run_in(&dir.join("auth"), &demo_scenario("accident-care"), |_| {});
    ensure!(outcome.report.stats.denied == 0, "{} denials in the demo scenario", outcome.report.stats.denied);

    let mut sys = System::new(SystemConfig::demo(4)).unwrap();
    let id = draft_of(&cpoe(
        &mut sys,
        paa(),
        CpoeMsg::CreateDraft {
            patient_id: "P003".into(),
            prescriber: "dr-a".into(),
            lines: vec![line("FUR40", 40.0, 1, "oral"), line("SIM20", 20.0, 1, "oral")],
            prescription_id: None,
        },
    ))
    .prescription_id;
    cpoe(&mut sys, paa(), CpoeMsg::AnalyzeRequest { prescription_id: id.clone() });
    let tfa_before = sys.bus().trace().messages().filter(|m| m.receiver.kind == AgentKind::Tfa).count();
    let injected = AclMessage::new(
        Performative::Query,
        AgentId::main(AgentKind::Dsa),
        AgentId::main(AgentKind::Tfa),
        "conv-injected",
        Content::from(CpoeMsg::DraftQuery { prescription_id: id }),
    );
    let denied = matches!(sys.send(injected), Err(BusError::Unauthorized(_)));
    sys.run().unwrap();
    ensure!(denied, "DSA -> TFA was not refused");
    let last = sys.bus().audit_log().last().unwrap();
    ensure!(last.decision == AuditDecision::Denied && last.sender.kind == AgentKind::Dsa, "denial not audited");
    let tfa_after = sys.bus().trace().messages().filter(|m| m.receiver.kind == AgentKind::Tfa).count();
    ensure!(tfa_after == tfa_before, "TFA received the injected message");
    let allowed = sys.bus().audit_log().iter().filter(|e| e.decision == AuditDecision::Allowed).count() as u64;
    let delivered = sys.bus().stats().delivered;
    ensure!(allowed == delivered, "audited-allowed {allowed} vs delivered {delivered}");
    let scenario_delivered = outcome.report.stats.delivered;
    ensure!(scenario_delivered == outcome.trace.events.len() as u64, "scenario delivered count differs from its trace");
    Ok(format!("0 denials over {scenario_delivered} scenario deliveries; DSA -> TFA denied, audited, undelivered; allowed = delivered = {delivered}"))
}

fn line(code: &str, dose: f64, catches: u32, mode: &str) -> PrescriptionLine {
    PrescriptionLine { drug_code: code.into(), dose_per_catch: dose, catches_per_day: catches, admin_mode: mode.into(), duration_days: 5 }
}

fn validation(reply: &Msg) -> careflow_core::cpoe::ValidationResult {
    match &reply.content {
        Content::Cpoe(CpoeMsg::ValidationResult { result }) => result.clone(),
        other => panic!("{other:?}"),
    }
}

fn end_to_end_cpoe() -> Check {
    let mut sys = System::new(SystemConfig::demo(6)).unwrap();
    let reply = cpoe(&mut sys, AgentId::main(AgentKind::Dsa), CpoeMsg::DrugQuery { query: "CEF1G".into(), patient_id: Some("P007".into()) });
    let Content::Cpoe(CpoeMsg::DrugCandidates { candidates }) = reply.content else {
        return Err("no candidates".into());
    };
    let proposals: Vec<_> = candidates.iter().flat_map(|c| c.substitutions.clone()).collect();
    ensure!(proposals.len() == 1, "{} substitution proposals", proposals.len());
    let generic = proposals[0].proposed.clone();
    let stock = sys.catalog().check_stock(&generic).unwrap();
    ensure!(stock.quantity_on_hand > 0, "{generic} is not in stock");

    let id = draft_of(&cpoe(
        &mut sys,
        paa(),
        CpoeMsg::CreateDraft {
            patient_id: "P007".into(),
            prescriber: "dr-a".into(),
            lines: vec![line(&generic, 1000.0, 2, "IV")],
            prescription_id: None,
        },
    ))
    .prescription_id;
    cpoe(&mut sys, paa(), CpoeMsg::AnalyzeRequest { prescription_id: id.clone() });
    let ok = validation(&cpoe(&mut sys, paa(), CpoeMsg::ValidateRequest { prescription_id: id, override_: None }));
    ensure!(ok.report.errors.is_empty(), "analysis not clean: {:?}", ok.report.errors);
    ensure!(ok.is_validated(), "validation refused: {:?}", ok.refusal);
    let archived = sys.archive_entries().len();
    ensure!(archived == 1, "{archived} archive entries");
    let (ph, nu) = (sys.notices_for(Audience::Pharmacist).len(), sys.notices_for(Audience::Nurse).len());
    ensure!(ph == 1 && nu == 1, "notices pharmacist {ph}, nurse {nu}");

    let mut blocked_sys = System::new(SystemConfig::demo(6)).unwrap();
    let bid = draft_of(&cpoe(
        &mut blocked_sys,
        paa(),
        CpoeMsg::CreateDraft {
            patient_id: "P001".into(),
            prescriber: "dr-a".into(),
            lines: vec![line("AMX500", 300.0, 4, "oral")],
            prescription_id: None,
        },
    ))
    .prescription_id;
    cpoe(&mut blocked_sys, paa(), CpoeMsg::AnalyzeRequest { prescription_id: bid.clone() });
    let ov = Override { reason: "clinical judgement".into(), principal: "dr-a".into() };
    let refused = validation(&cpoe(&mut blocked_sys, paa(), CpoeMsg::ValidateRequest { prescription_id: bid, override_: Some(ov) }));
    ensure!(!refused.is_validated(), "blocked draft was validated");
    ensure!(blocked_sys.archive_entries().is_empty(), "blocked draft archived");
    Ok(format!("CEF1G -> {generic} (1 proposal); clean validation: 1 archive entry, pharmacist + nurse notified; blocked + override: 0 entries"))
}

fn dose_arithmetic() -> Check {
    let sys = System::new(SystemConfig::demo(1)).unwrap();
    let catalog = sys.catalog();
    let ctx = catalog.get_patient_context("P001").unwrap();
    let drug = catalog.drug("AMX500").unwrap();
    ensure!(ctx.admin.weight_kg == Some(20.0), "fixture weight {:?}", ctx.admin.weight_kg);
    ensure!(drug.dosing.bounds.max_dose_per_kg_per_day == Some(50.0), "fixture bound {:?}", drug.dosing.bounds.max_dose_per_kg_per_day);
    let report = analyze("rx-dose", &[line("AMX500", 300.0, 4, "oral")], catalog, &ctx).unwrap();
    let doses: Vec<_> = report.errors.iter().filter(|e| e.kind == ErrorKind::Dose).collect();
    ensure!(report.errors.len() == 1 && doses.len() == 1, "findings {:?}", report.errors);
    // 300 mg x 4 = 1200 mg/day; 1200 / 20 kg = 60 mg/kg/day > 50.
    ensure!(doses[0].explanation.starts_with("60 mg/kg/day"), "explanation {:?}", doses[0].explanation);
    Ok(format!("exactly one Dose error: {}", doses[0].explanation))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("structural-fidelity", Box::new(structural_fidelity)),
        ("oracle-equivalence", Box::new(oracle_equivalence)),
        ("determinism", Box::new(|| determinism(d))),
        ("lazy-plugging", Box::new(|| lazy_plugging(d))),
        ("persistence", Box::new(|| persistence(d))),
        ("authorization", Box::new(|| authorization(d))),
        ("end-to-end-cpoe", Box::new(end_to_end_cpoe)),
        ("dose-arithmetic", Box::new(dose_arithmetic)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
