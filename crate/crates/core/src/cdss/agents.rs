use std::collections::BTreeMap;
use std::sync::Arc;

use super::{drug_error_checks, interaction_checks, DetectedError};
use crate::bus::{Agent, AgentId, AgentKind, Payload, Performative};
use crate::clinical::{DataCatalog, DosingInfo, PatientContext};
use crate::connector::Interface6Msg;
use crate::content::{Content, Ctx, Msg};
use crate::cpoe::{CpoeMsg, PrescriptionLine};

/// One pending analysis: the request that opened it and what has arrived.
struct Job {
    origin: Msg,
    prescription_id: String,
    lines: Vec<PrescriptionLine>,
    context: Option<PatientContext>,
    dosing: BTreeMap<String, DosingInfo>,
    outstanding: usize,
}

/// Extracts (prescription id, patient, lines) from either entry point.
fn job_request(msg: &Msg) -> Option<(String, String, Vec<PrescriptionLine>)> {
    match &msg.content {
        Content::Cpoe(CpoeMsg::CheckRequest {
            prescription_id,
            patient_id,
            lines,
        }) => Some((prescription_id.clone(), patient_id.clone(), lines.clone())),
        Content::Interface6(Interface6Msg::DecisionQuery {
            instance_id,
            patient_id,
            lines,
        }) => Some((decision_report_id(instance_id), patient_id.clone(), lines.clone())),
        _ => None,
    }
}

/// Report id used for decisions asked over Interface 6.
pub fn decision_report_id(instance_id: &str) -> String {
    format!("{instance_id}:decision")
}

fn answer(ctx: &mut Ctx<'_>, origin: &Msg, prescription_id: String, errors: Vec<DetectedError>) {
    let content = match origin.content {
        Content::Interface6(_) => Interface6Msg::DecisionResult {
            report: super::AnalysisReport::assemble(prescription_id, errors),
        }
        .into(),
        _ => CpoeMsg::PartialReport {
            prescription_id,
            errors,
        }
        .into(),
    };
    let _ = ctx.reply(origin, Performative::Inform, content);
}

fn fail(ctx: &mut Ctx<'_>, origin: &Msg, code: &str, detail: &str) {
    let content: Content = match origin.content {
        Content::Interface6(_) => Interface6Msg::fault(code, detail).into(),
        _ => CpoeMsg::failure(code, detail).into(),
    };
    let _ = ctx.reply(origin, Performative::Failure, content);
}

fn failure_of(msg: &Msg) -> Option<(&str, &str)> {
    match &msg.content {
        Content::Cpoe(CpoeMsg::Failure { code, detail }) => Some((code, detail)),
        _ => None,
    }
}

/// Drug Errors Detection Agent: dose, choice and administration-mode errors.
///
/// Bounds come from the administration-mode agent and patient data from the
/// collection agent; the formulary is read from the shared catalog.
pub struct ErrorsDetectionAgent {
    catalog: Arc<DataCatalog>,
    jobs: BTreeMap<String, Job>,
    waits: BTreeMap<String, String>,
}

impl ErrorsDetectionAgent {
    pub fn new(catalog: Arc<DataCatalog>) -> Self {
        Self {
            catalog,
            jobs: BTreeMap::new(),
            waits: BTreeMap::new(),
        }
    }

    fn finish_if_ready(&mut self, key: &str, ctx: &mut Ctx<'_>) {
        if self.jobs.get(key).is_some_and(|j| j.outstanding == 0) {
            let job = self.jobs.remove(key).expect("present");
            let context = job.context.expect("context arrived");
            let errors = drug_error_checks(
                &job.lines,
                |i| &job.dosing[&job.lines[i].drug_code],
                &self.catalog.formulary,
                &context,
            );
            answer(ctx, &job.origin, job.prescription_id, errors);
        }
    }

    fn abort(&mut self, key: &str, code: &str, detail: &str, ctx: &mut Ctx<'_>) {
        if let Some(job) = self.jobs.remove(key) {
            self.waits.retain(|_, k| k != key);
            fail(ctx, &job.origin, code, detail);
        }
    }
}

impl Agent<Content> for ErrorsDetectionAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        if let Some(key) = self.waits.remove(&msg.conversation_id) {
            if let Some((code, detail)) = failure_of(&msg) {
                let (code, detail) = (code.to_string(), detail.to_string());
                return self.abort(&key, &code, &detail, ctx);
            }
            let Some(job) = self.jobs.get_mut(&key) else { return };
            match msg.content {
                Content::Cpoe(CpoeMsg::ContextReply { context }) => job.context = Some(context),
                Content::Cpoe(CpoeMsg::AdminInfoReply { drug_code, info }) => {
                    job.dosing.insert(drug_code, info);
                }
                _ => return,
            }
            job.outstanding -= 1;
            return self.finish_if_ready(&key, ctx);
        }
        let Some((prescription_id, patient_id, lines)) = job_request(&msg) else {
            let _ = ctx.reply(&msg, Performative::NotUnderstood, CpoeMsg::failure("NotUnderstood", msg.content.variant()).into());
            return;
        };
        let key = format!("{}#{}", msg.conversation_id, msg.reply_with.clone().unwrap_or_default());
        let mut codes: Vec<&str> = lines.iter().map(|l| l.drug_code.as_str()).collect();
        codes.sort_unstable();
        codes.dedup();
        let codes: Vec<String> = codes.into_iter().map(String::from).collect();
        let mut outstanding = 0;
        let conv = ctx.new_conversation();
        if ctx
            .request_in(&conv, AgentId::main(AgentKind::Ica), Performative::Query, CpoeMsg::ContextRequest { patient_id }.into())
            .is_ok()
        {
            self.waits.insert(conv, key.clone());
            outstanding += 1;
        }
        for drug_code in codes {
            let conv = ctx.new_conversation();
            if ctx
                .request_in(&conv, AgentId::main(AgentKind::Amsa), Performative::Query, CpoeMsg::AdminInfoRequest { drug_code }.into())
                .is_ok()
            {
                self.waits.insert(conv, key.clone());
                outstanding += 1;
            }
        }
        let expected = 1 + lines.iter().map(|l| &l.drug_code).collect::<std::collections::BTreeSet<_>>().len();
        self.jobs.insert(
            key.clone(),
            Job {
                origin: msg,
                prescription_id,
                lines,
                context: None,
                dosing: BTreeMap::new(),
                outstanding,
            },
        );
        if outstanding != expected {
            self.abort(&key, "Unavailable", "a supplier agent could not be reached", ctx);
        }
    }
}

/// Drug-Drug Interaction Detection Agent: pairwise interactions plus
/// allergy and contraindication conflicts, using the patient's latest labs.
pub struct InteractionDetectionAgent {
    catalog: Arc<DataCatalog>,
    jobs: BTreeMap<String, Job>,
}

impl InteractionDetectionAgent {
    pub fn new(catalog: Arc<DataCatalog>) -> Self {
        Self {
            catalog,
            jobs: BTreeMap::new(),
        }
    }
}

impl Agent<Content> for InteractionDetectionAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        if let Some(job) = self.jobs.remove(&msg.conversation_id) {
            if let Some((code, detail)) = failure_of(&msg) {
                return fail(ctx, &job.origin, code, detail);
            }
            let Content::Cpoe(CpoeMsg::ContextReply { context }) = msg.content else {
                return fail(ctx, &job.origin, "NotUnderstood", "unexpected reply");
            };
            let drugs = match super::resolve_lines(&job.lines, &self.catalog) {
                Ok(d) => d,
                Err(e) => return fail(ctx, &job.origin, "UnknownDrug", &e.to_string()),
            };
            let errors = interaction_checks(&drugs, &self.catalog.rules, &context);
            return answer(ctx, &job.origin, job.prescription_id, errors);
        }
        let Some((prescription_id, patient_id, lines)) = job_request(&msg) else {
            let _ = ctx.reply(&msg, Performative::NotUnderstood, CpoeMsg::failure("NotUnderstood", msg.content.variant()).into());
            return;
        };
        let conv = ctx.new_conversation();
        let sent = ctx.request_in(&conv, AgentId::main(AgentKind::Ica), Performative::Query, CpoeMsg::ContextRequest { patient_id }.into());
        let job = Job {
            origin: msg,
            prescription_id,
            lines,
            context: None,
            dosing: BTreeMap::new(),
            outstanding: 1,
        };
        if sent.is_ok() {
            self.jobs.insert(conv, job);
        } else {
            fail(ctx, &job.origin, "Unavailable", "the collection agent could not be reached");
        }
    }
}
