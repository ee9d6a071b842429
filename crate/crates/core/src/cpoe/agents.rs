//! The eight order-entry agents.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::messages::CpoeMsg;
use super::model::*;
use crate::bus::{Agent, AgentId, AgentKind, Payload, Performative};
use crate::cdss::{AnalysisReport, DetectedError, Verdict};
use crate::clinical::{ArchiveStore, ClinicalError, DataCatalog, PatientContext, ProtocolStore, StockEntry};
use crate::connector::Interface6Msg;
use crate::content::{Content, Ctx, Msg};

fn reply(ctx: &mut Ctx<'_>, to: &Msg, perf: Performative, content: impl Into<Content>) {
    // A refused reply is already in the audit log; the requester's own
    // bookkeeping is the only thing that could react to it.
    let _ = ctx.reply(to, perf, content.into());
}

fn fail(ctx: &mut Ctx<'_>, to: &Msg, code: &str, detail: impl Into<String>) {
    let detail = detail.into();
    let content: Content = match to.content {
        Content::Interface6(_) => Interface6Msg::fault(code, detail).into(),
        _ => CpoeMsg::failure(code, detail).into(),
    };
    let _ = ctx.reply(to, Performative::Failure, content);
}

fn fail_clinical(ctx: &mut Ctx<'_>, to: &Msg, e: &ClinicalError) {
    fail(ctx, to, e.code(), e.to_string());
}

fn not_understood(ctx: &mut Ctx<'_>, to: &Msg) {
    let detail = format!("{} does not handle {}", ctx.me(), to.content.variant());
    let _ = ctx.reply(to, Performative::NotUnderstood, CpoeMsg::failure("NotUnderstood", detail).into());
}

fn is_reply(msg: &Msg) -> bool {
    msg.in_reply_to.is_some()
}

fn failure_of(msg: &Msg) -> Option<(String, String)> {
    match &msg.content {
        Content::Cpoe(CpoeMsg::Failure { code, detail }) | Content::Interface6(Interface6Msg::Fault { code, detail }) => {
            Some((code.clone(), detail.clone()))
        }
        _ => None,
    }
}

fn state_of<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("agent state serializes")
}

/// Information Collection Agent: merged patient view.
pub struct InformationCollectionAgent {
    catalog: Arc<DataCatalog>,
}

impl InformationCollectionAgent {
    pub fn new(catalog: Arc<DataCatalog>) -> Self {
        Self { catalog }
    }
}

impl Agent<Content> for InformationCollectionAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        match &msg.content {
            Content::Cpoe(CpoeMsg::ContextRequest { patient_id }) => match self.catalog.get_patient_context(patient_id) {
                Ok(context) => reply(ctx, &msg, Performative::Inform, CpoeMsg::ContextReply { context }),
                Err(e) => fail_clinical(ctx, &msg, &e),
            },
            _ => not_understood(ctx, &msg),
        }
    }
}

/// Administration Mode Selection Agent: the single source of dosing bounds.
pub struct AdminModeAgent {
    catalog: Arc<DataCatalog>,
}

impl AdminModeAgent {
    pub fn new(catalog: Arc<DataCatalog>) -> Self {
        Self { catalog }
    }
}

impl Agent<Content> for AdminModeAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        match &msg.content {
            Content::Cpoe(CpoeMsg::AdminInfoRequest { drug_code }) => match self.catalog.drug(drug_code) {
                Ok(d) => reply(
                    ctx,
                    &msg,
                    Performative::Inform,
                    CpoeMsg::AdminInfoReply {
                        drug_code: drug_code.clone(),
                        info: d.dosing.clone(),
                    },
                ),
                Err(e) => fail_clinical(ctx, &msg, &e),
            },
            _ => not_understood(ctx, &msg),
        }
    }
}

/// Substitutions for a drug in rupture: in-stock members of its group.
pub fn substitutions_for(catalog: &DataCatalog, entry: &StockEntry) -> Result<Vec<SubstitutionProposal>, ClinicalError> {
    if entry.in_stock() {
        return Ok(Vec::new());
    }
    Ok(catalog
        .list_generic_alternatives(&entry.drug_code)?
        .into_iter()
        .filter(|alt| catalog.stock.get(&alt.drug_code).is_some_and(StockEntry::in_stock))
        .map(|alt| SubstitutionProposal {
            original: entry.drug_code.clone(),
            proposed: alt.drug_code,
            reason: SubstitutionReason::RuptureOfSupply,
        })
        .collect())
}

/// Pharmacy Stock Checker Agent.
pub struct StockCheckerAgent {
    catalog: Arc<DataCatalog>,
}

impl StockCheckerAgent {
    pub fn new(catalog: Arc<DataCatalog>) -> Self {
        Self { catalog }
    }

    fn check(&self, codes: &[String]) -> Result<(Vec<StockEntry>, Vec<SubstitutionProposal>), ClinicalError> {
        let mut entries = Vec::new();
        let mut substitutions = Vec::new();
        for code in codes {
            let entry = self.catalog.check_stock(code)?;
            substitutions.extend(substitutions_for(&self.catalog, &entry)?);
            entries.push(entry);
        }
        Ok((entries, substitutions))
    }
}

impl Agent<Content> for StockCheckerAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        match &msg.content {
            Content::Cpoe(CpoeMsg::StockQuery { drug_codes }) => match self.check(drug_codes) {
                Ok((entries, substitutions)) => {
                    let perf = if substitutions.is_empty() {
                        Performative::Inform
                    } else {
                        Performative::Propose
                    };
                    reply(ctx, &msg, perf, CpoeMsg::StockReply { entries, substitutions });
                }
                Err(e) => fail_clinical(ctx, &msg, &e),
            },
            _ => not_understood(ctx, &msg),
        }
    }
}

struct Selection {
    origin: Msg,
    drugs: Vec<crate::clinical::DrugRecord>,
    stock: Option<(Vec<StockEntry>, Vec<SubstitutionProposal>)>,
    context: Option<PatientContext>,
    outstanding: usize,
}

/// Drug Selecting Agent: search, stock status and patient risk flags.
pub struct DrugSelectingAgent {
    catalog: Arc<DataCatalog>,
    pending: BTreeMap<String, Selection>,
}

impl DrugSelectingAgent {
    pub fn new(catalog: Arc<DataCatalog>) -> Self {
        Self {
            catalog,
            pending: BTreeMap::new(),
        }
    }

    fn finish(sel: Selection, ctx: &mut Ctx<'_>) {
        let (entries, substitutions) = sel.stock.unwrap_or_default();
        let candidates = sel
            .drugs
            .into_iter()
            .zip(entries)
            .map(|(drug, stock)| {
                let mut flags = BTreeSet::new();
                if let Some(c) = &sel.context {
                    if c.allergies().contains(&drug.active_ingredient) {
                        flags.insert(ContextFlag::AllergyHit);
                    }
                    if c.contraindications().iter().any(|x| *x == drug.drug_code || *x == drug.active_ingredient) {
                        flags.insert(ContextFlag::ContraindicationHit);
                    }
                }
                DrugCandidate {
                    substitutions: substitutions.iter().filter(|s| s.original == drug.drug_code).cloned().collect(),
                    drug,
                    stock,
                    context_flags: flags.into_iter().collect(),
                }
            })
            .collect();
        reply(ctx, &sel.origin, Performative::Inform, CpoeMsg::DrugCandidates { candidates });
    }
}

impl Agent<Content> for DrugSelectingAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        if is_reply(&msg) {
            let Some(mut sel) = self.pending.remove(&msg.conversation_id) else { return };
            if let Some((code, detail)) = failure_of(&msg) {
                return fail(ctx, &sel.origin, &code, detail);
            }
            match msg.content {
                Content::Cpoe(CpoeMsg::StockReply { entries, substitutions }) => sel.stock = Some((entries, substitutions)),
                Content::Cpoe(CpoeMsg::ContextReply { context }) => sel.context = Some(context),
                _ => return fail(ctx, &sel.origin, "NotUnderstood", "unexpected reply"),
            }
            sel.outstanding -= 1;
            if sel.outstanding == 0 {
                Self::finish(sel, ctx);
            } else {
                self.pending.insert(msg.conversation_id, sel);
            }
            return;
        }
        let Content::Cpoe(CpoeMsg::DrugQuery { query, patient_id }) = &msg.content else {
            return not_understood(ctx, &msg);
        };
        let drugs = self.catalog.find_drugs(query);
        let patient_id = patient_id.clone();
        if drugs.is_empty() && patient_id.is_none() {
            return reply(ctx, &msg, Performative::Inform, CpoeMsg::DrugCandidates { candidates: Vec::new() });
        }
        let conv = ctx.new_conversation();
        let mut outstanding = 0;
        let mut ok = true;
        if !drugs.is_empty() {
            let drug_codes = drugs.iter().map(|d| d.drug_code.clone()).collect();
            ok &= ctx
                .request_in(&conv, AgentId::main(AgentKind::Psca), Performative::Query, CpoeMsg::StockQuery { drug_codes }.into())
                .is_ok();
            outstanding += 1;
        }
        if let Some(patient_id) = patient_id {
            ok &= ctx
                .request_in(&conv, AgentId::main(AgentKind::Ica), Performative::Query, CpoeMsg::ContextRequest { patient_id }.into())
                .is_ok();
            outstanding += 1;
        }
        if !ok {
            return fail(ctx, &msg, "Unavailable", "a supplier agent could not be reached");
        }
        self.pending.insert(
            conv,
            Selection {
                origin: msg,
                drugs,
                stock: None,
                context: None,
                outstanding,
            },
        );
    }
}

#[derive(Debug, Clone)]
enum Purpose {
    Report,
    Validate(Option<Override>),
}

struct PendingAnalysis {
    origin: Msg,
    prescription_id: String,
    revision: u64,
    parts: Vec<Vec<DetectedError>>,
    purpose: Purpose,
}

struct PendingValidation {
    origin: Msg,
    prescription_id: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct AnalyzerState {
    drafts: BTreeMap<String, PrescriptionDraft>,
    next_draft: u64,
    /// Interface 6 sessions currently plugged into this endpoint.
    sessions: BTreeSet<String>,
}

/// Prescription Analyzer Agent. Owns every draft, drives analysis through
/// the two decision-support agents and validation through archiving and
/// notification. Also the mediation endpoint for Interface 6.
pub struct PrescriptionAnalyzerAgent {
    catalog: Arc<DataCatalog>,
    state: AnalyzerState,
    analyses: BTreeMap<String, PendingAnalysis>,
    validations: BTreeMap<String, PendingValidation>,
}

impl PrescriptionAnalyzerAgent {
    pub fn new(catalog: Arc<DataCatalog>) -> Self {
        Self {
            catalog,
            state: AnalyzerState::default(),
            analyses: BTreeMap::new(),
            validations: BTreeMap::new(),
        }
    }

    pub fn from_state(catalog: Arc<DataCatalog>, state: &Value) -> Result<Self, String> {
        let mut agent = Self::new(catalog);
        if !state.is_null() {
            agent.state = serde_json::from_value(state.clone()).map_err(|e| e.to_string())?;
        }
        Ok(agent)
    }

    /// Id given to drafts opened by a workflow prescription task.
    pub fn workflow_draft_id(instance_id: &str, task_id: &str) -> String {
        format!("rx-{instance_id}-{task_id}")
    }

    fn check_lines(&self, lines: &[PrescriptionLine]) -> Result<(), (&'static str, String)> {
        for line in lines {
            line.check().map_err(|e| ("InvalidLine", e))?;
        }
        if let Err(e) = crate::cdss::resolve_lines(lines, &self.catalog) {
            return Err(("UnknownDrug", e.to_string()));
        }
        Ok(())
    }

    fn open_draft(
        &mut self,
        id: Option<String>,
        patient_id: &str,
        prescriber: &str,
        lines: Vec<PrescriptionLine>,
    ) -> Result<PrescriptionDraft, (&'static str, String)> {
        if !self.catalog.has_patient(patient_id) {
            return Err(("UnknownPatient", format!("unknown patient {patient_id}")));
        }
        self.check_lines(&lines)?;
        let id = match id {
            Some(id) => id,
            None => {
                self.state.next_draft += 1;
                format!("rx-{}", self.state.next_draft)
            }
        };
        if self.state.drafts.contains_key(&id) {
            return Err(("DuplicateDraft", format!("prescription {id} already exists")));
        }
        let mut draft = PrescriptionDraft::new(id.clone(), patient_id, prescriber);
        draft.lines = lines;
        self.state.drafts.insert(id, draft.clone());
        Ok(draft)
    }

    fn start_analysis(&mut self, origin: Msg, prescription_id: &str, purpose: Purpose, ctx: &mut Ctx<'_>) {
        let draft = &self.state.drafts[prescription_id];
        let check = CpoeMsg::CheckRequest {
            prescription_id: draft.prescription_id.clone(),
            patient_id: draft.patient_id.clone(),
            lines: draft.lines.clone(),
        };
        let conv = ctx.new_conversation();
        let a = ctx.request_in(&conv, AgentId::main(AgentKind::Deda), Performative::Request, check.clone().into());
        let b = ctx.request_in(&conv, AgentId::main(AgentKind::Ddida), Performative::Request, check.into());
        if a.is_err() || b.is_err() {
            return fail(ctx, &origin, "Unavailable", "decision support agents could not be reached");
        }
        self.analyses.insert(
            conv,
            PendingAnalysis {
                origin,
                prescription_id: prescription_id.to_string(),
                revision: draft.revision,
                parts: Vec::new(),
                purpose,
            },
        );
    }

    fn on_partial(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        let Some(mut pending) = self.analyses.remove(&msg.conversation_id) else { return };
        if let Some((code, detail)) = failure_of(&msg) {
            // Drop the sibling's answer when it arrives.
            return fail(ctx, &pending.origin, &code, detail);
        }
        let Content::Cpoe(CpoeMsg::PartialReport { errors, .. }) = msg.content else { return };
        pending.parts.push(errors);
        if pending.parts.len() < 2 {
            self.analyses.insert(msg.conversation_id, pending);
            return;
        }
        let errors = pending.parts.concat();
        let report = AnalysisReport::assemble(pending.prescription_id.clone(), errors);
        let draft = self.state.drafts.get_mut(&pending.prescription_id).expect("drafts are never removed");
        draft.last_report = Some(report.clone());
        draft.report_revision = Some(pending.revision);
        if matches!(draft.status, DraftStatus::Draft | DraftStatus::Analyzed) {
            draft.status = DraftStatus::Analyzed;
        }
        match pending.purpose {
            Purpose::Report => reply(ctx, &pending.origin, Performative::Inform, CpoeMsg::AnalysisReportMsg { report }),
            Purpose::Validate(ov) => self.decide(pending.origin, &pending.prescription_id, ov, ctx),
        }
    }

    /// Applies the override policy to an analyzed draft with a current report.
    fn decide(&mut self, origin: Msg, id: &str, ov: Option<Override>, ctx: &mut Ctx<'_>) {
        let draft = self.state.drafts.get_mut(id).expect("caller checked");
        let report = draft.last_report.clone().expect("caller checked");
        let refuse = |draft: &PrescriptionDraft, reason: &str| ValidationResult {
            prescription_id: draft.prescription_id.clone(),
            status: draft.status,
            report: report.clone(),
            archive_id: None,
            notices: Vec::new(),
            refusal: Some(reason.to_string()),
        };
        let ov = ov.filter(Override::is_usable);
        match report.verdict {
            Verdict::Blocked => {
                draft.status = DraftStatus::Blocked;
                draft.override_ = None;
                let result = refuse(draft, "a blocked verdict cannot be overridden");
                return respond_validation(ctx, &origin, result);
            }
            Verdict::PassWithWarnings if ov.is_none() => {
                let result = refuse(draft, "warnings require an override reason");
                return respond_validation(ctx, &origin, result);
            }
            Verdict::PassWithWarnings => draft.override_ = ov,
            Verdict::Pass => draft.override_ = None,
        }
        draft.status = DraftStatus::Validated;
        let request = CpoeMsg::ArchiveRequest {
            prescription: draft.clone(),
            report,
        };
        let conv = ctx.new_conversation();
        if ctx
            .request_in(&conv, AgentId::main(AgentKind::Tfa), Performative::Request, request.into())
            .is_err()
        {
            draft.status = DraftStatus::Analyzed;
            return fail(ctx, &origin, "Unavailable", "the archive agent could not be reached");
        }
        self.validations.insert(
            conv,
            PendingValidation {
                origin,
                prescription_id: id.to_string(),
            },
        );
    }

    fn on_validation_step(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        let Some(pending) = self.validations.remove(&msg.conversation_id) else { return };
        let draft = self.state.drafts.get_mut(&pending.prescription_id).expect("drafts are never removed");
        if let Some((code, detail)) = failure_of(&msg) {
            if draft.archive_id.is_none() {
                draft.status = DraftStatus::Analyzed;
            }
            return fail(ctx, &pending.origin, &code, detail);
        }
        match msg.content {
            Content::Cpoe(CpoeMsg::ArchiveAck { entry }) => {
                draft.archive_id = Some(entry.archive_id.clone());
                let notify = CpoeMsg::Notify {
                    prescription_id: draft.prescription_id.clone(),
                    archive_id: entry.archive_id,
                    summary: notice_summary(draft),
                };
                let conv = msg.conversation_id.clone();
                if ctx
                    .request_in(&conv, AgentId::main(AgentKind::Ida), Performative::Request, notify.into())
                    .is_err()
                {
                    return fail(ctx, &pending.origin, "Unavailable", "the delivery agent could not be reached");
                }
                self.validations.insert(conv, pending);
            }
            Content::Cpoe(CpoeMsg::NotifyAck { notices }) => {
                let result = ValidationResult {
                    prescription_id: draft.prescription_id.clone(),
                    status: draft.status,
                    report: draft.last_report.clone().expect("validated drafts carry a report"),
                    archive_id: draft.archive_id.clone(),
                    notices,
                    refusal: None,
                };
                respond_validation(ctx, &pending.origin, result);
            }
            _ => fail(ctx, &pending.origin, "NotUnderstood", "unexpected reply"),
        }
    }

    fn validate(&mut self, msg: Msg, id: &str, ov: Option<Override>, ctx: &mut Ctx<'_>) {
        let Some(draft) = self.state.drafts.get(id) else {
            return fail(ctx, &msg, "NotFound", format!("prescription {id} not found"));
        };
        match draft.status {
            DraftStatus::Validated => return fail(ctx, &msg, "AlreadyValidated", format!("prescription {id} is already validated")),
            DraftStatus::Blocked if draft.report_is_current() => return self.decide(msg, id, ov, ctx),
            _ => {}
        }
        if draft.last_report.is_none() {
            return fail(ctx, &msg, "NotAnalyzed", format!("prescription {id} has not been analyzed"));
        }
        if draft.report_is_current() {
            return self.decide(msg, id, ov, ctx);
        }
        if ov.as_ref().is_some_and(Override::is_usable) {
            return fail(ctx, &msg, "StaleReport", format!("lines of {id} changed after the report the override refers to"));
        }
        self.start_analysis(msg, id, Purpose::Validate(None), ctx);
    }
}

fn notice_summary(draft: &PrescriptionDraft) -> String {
    let drugs: Vec<String> = draft
        .lines
        .iter()
        .map(|l| format!("{} {}x{}/day {}", l.drug_code, l.dose_per_catch, l.catches_per_day, l.admin_mode))
        .collect();
    format!("{} for {}: {}", draft.prescription_id, draft.patient_id, drugs.join("; "))
}

fn respond_validation(ctx: &mut Ctx<'_>, origin: &Msg, result: ValidationResult) {
    let perf = if result.is_validated() {
        Performative::Inform
    } else {
        Performative::Refuse
    };
    let content: Content = match origin.content {
        Content::Interface6(_) => Interface6Msg::PrescriptionResult { result }.into(),
        _ => CpoeMsg::ValidationResult { result }.into(),
    };
    let _ = ctx.reply(origin, perf, content);
}

impl Agent<Content> for PrescriptionAnalyzerAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        if is_reply(&msg) {
            if self.analyses.contains_key(&msg.conversation_id) {
                return self.on_partial(msg, ctx);
            }
            if self.validations.contains_key(&msg.conversation_id) {
                return self.on_validation_step(msg, ctx);
            }
            return;
        }
        match msg.content.clone() {
            Content::Cpoe(CpoeMsg::CreateDraft {
                patient_id,
                prescriber,
                lines,
                prescription_id,
            }) => match self.open_draft(prescription_id, &patient_id, &prescriber, lines) {
                Ok(draft) => reply(ctx, &msg, Performative::Inform, CpoeMsg::DraftMsg { draft }),
                Err((code, detail)) => fail(ctx, &msg, code, detail),
            },
            Content::Cpoe(CpoeMsg::AddLines {
                prescription_id,
                lines,
                replace,
            }) => {
                if let Err((code, detail)) = self.check_lines(&lines) {
                    return fail(ctx, &msg, code, detail);
                }
                let Some(draft) = self.state.drafts.get_mut(&prescription_id) else {
                    return fail(ctx, &msg, "NotFound", format!("prescription {prescription_id} not found"));
                };
                if draft.status == DraftStatus::Validated {
                    return fail(ctx, &msg, "DraftClosed", format!("prescription {prescription_id} is validated"));
                }
                let mut next = if replace { Vec::new() } else { draft.lines.clone() };
                next.extend(lines);
                draft.set_lines(next);
                draft.status = DraftStatus::Draft;
                let draft = draft.clone();
                reply(ctx, &msg, Performative::Inform, CpoeMsg::DraftMsg { draft });
            }
            Content::Cpoe(CpoeMsg::DraftQuery { prescription_id }) => match self.state.drafts.get(&prescription_id) {
                Some(d) => reply(ctx, &msg, Performative::Inform, CpoeMsg::DraftMsg { draft: d.clone() }),
                None => fail(ctx, &msg, "NotFound", format!("prescription {prescription_id} not found")),
            },
            Content::Cpoe(CpoeMsg::AnalyzeRequest { prescription_id }) => {
                let Some(draft) = self.state.drafts.get(&prescription_id) else {
                    return fail(ctx, &msg, "NotFound", format!("prescription {prescription_id} not found"));
                };
                if !matches!(draft.status, DraftStatus::Draft | DraftStatus::Analyzed) {
                    return fail(ctx, &msg, "DraftClosed", format!("prescription {prescription_id} is {:?}", draft.status));
                }
                self.start_analysis(msg, &prescription_id, Purpose::Report, ctx);
            }
            Content::Cpoe(CpoeMsg::ValidateRequest {
                prescription_id,
                override_,
            }) => self.validate(msg, &prescription_id, override_, ctx),
            Content::Interface6(Interface6Msg::PrescriptionRequest {
                instance_id,
                task_id,
                patient_id,
                prescriber,
                lines,
                override_,
            }) => {
                let id = Self::workflow_draft_id(&instance_id, &task_id);
                match self.open_draft(Some(id.clone()), &patient_id, &prescriber, lines) {
                    Ok(_) => self.start_analysis(msg, &id, Purpose::Validate(override_), ctx),
                    Err((code, detail)) => fail(ctx, &msg, code, detail),
                }
            }
            Content::Interface6(Interface6Msg::PlugRequest { session_id }) => {
                self.state.sessions.insert(session_id.clone());
                reply(ctx, &msg, Performative::Agree, Interface6Msg::PlugAck { session_id });
            }
            Content::Interface6(Interface6Msg::UnplugRequest { session_id }) => {
                self.state.sessions.remove(&session_id);
                reply(ctx, &msg, Performative::Agree, Interface6Msg::UnplugAck { session_id });
            }
            _ => not_understood(ctx, &msg),
        }
    }

    fn save_state(&self) -> Value {
        state_of(&self.state)
    }
}

enum ProtocolJob {
    Save { origin: Msg, title: String },
    Instantiate { origin: Msg },
}

/// Prescription Recall Agent: protocols saved from drafts and recalled by title.
pub struct ProtocolRecallAgent {
    store: ProtocolStore,
    pending: BTreeMap<String, ProtocolJob>,
}

impl ProtocolRecallAgent {
    pub fn new(store: ProtocolStore) -> Self {
        Self {
            store,
            pending: BTreeMap::new(),
        }
    }

    pub fn from_state(state: &Value) -> Result<Self, String> {
        let store = serde_json::from_value(state.clone()).map_err(|e| e.to_string())?;
        Ok(Self::new(store))
    }
}

impl Agent<Content> for ProtocolRecallAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        if is_reply(&msg) {
            let Some(job) = self.pending.remove(&msg.conversation_id) else { return };
            let (origin, failure) = match &job {
                ProtocolJob::Save { origin, .. } | ProtocolJob::Instantiate { origin } => (origin, failure_of(&msg)),
            };
            if let Some((code, detail)) = failure {
                return fail(ctx, origin, &code, detail);
            }
            let Content::Cpoe(CpoeMsg::DraftMsg { draft }) = msg.content else {
                return fail(ctx, origin, "NotUnderstood", "unexpected reply");
            };
            match job {
                ProtocolJob::Save { origin, title } => match self.store.save_protocol(&title, draft.lines) {
                    Ok(record) => reply(
                        ctx,
                        &origin,
                        Performative::Inform,
                        CpoeMsg::ProtocolAck {
                            title: record.title,
                            lines: record.lines,
                        },
                    ),
                    Err(e) => fail_clinical(ctx, &origin, &e),
                },
                ProtocolJob::Instantiate { origin } => reply(ctx, &origin, Performative::Inform, CpoeMsg::DraftMsg { draft }),
            }
            return;
        }
        let (request, job) = match &msg.content {
            Content::Cpoe(CpoeMsg::ProtocolSave { title, prescription_id }) => {
                if self.store.fetch_protocol(title).is_ok() {
                    return fail_clinical(ctx, &msg, &ClinicalError::DuplicateTitle(title.clone()));
                }
                (
                    CpoeMsg::DraftQuery {
                        prescription_id: prescription_id.clone(),
                    },
                    ProtocolJob::Save {
                        origin: msg.clone(),
                        title: title.clone(),
                    },
                )
            }
            Content::Cpoe(CpoeMsg::ProtocolInstantiate {
                title,
                patient_id,
                prescriber,
            }) => match self.store.fetch_protocol(title) {
                Ok(record) => (
                    CpoeMsg::CreateDraft {
                        patient_id: patient_id.clone(),
                        prescriber: prescriber.clone(),
                        lines: record.lines,
                        prescription_id: None,
                    },
                    ProtocolJob::Instantiate { origin: msg.clone() },
                ),
                Err(e) => return fail_clinical(ctx, &msg, &e),
            },
            _ => return not_understood(ctx, &msg),
        };
        let conv = ctx.new_conversation();
        if ctx
            .request_in(&conv, AgentId::main(AgentKind::Paa), Performative::Request, request.into())
            .is_err()
        {
            return fail(ctx, &msg, "Unavailable", "the analyzer agent could not be reached");
        }
        self.pending.insert(conv, job);
    }

    fn save_state(&self) -> Value {
        state_of(&self.store)
    }
}

/// Therapeutic File Agent: archive of validated prescriptions.
pub struct TherapeuticFileAgent {
    store: ArchiveStore,
}

impl TherapeuticFileAgent {
    pub fn new(store: ArchiveStore) -> Self {
        Self { store }
    }

    pub fn from_state(state: &Value, dir: Option<std::path::PathBuf>) -> Result<Self, String> {
        let mut store: ArchiveStore = serde_json::from_value(state.clone()).map_err(|e| e.to_string())?;
        store.set_dir(dir);
        Ok(Self::new(store))
    }
}

impl Agent<Content> for TherapeuticFileAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        match &msg.content {
            Content::Cpoe(CpoeMsg::ArchiveRequest { prescription, report }) => {
                match self.store.archive_prescription(prescription.clone(), report.clone(), ctx.tick()) {
                    Ok(entry) => reply(ctx, &msg, Performative::Confirm, CpoeMsg::ArchiveAck { entry }),
                    Err(e) => fail_clinical(ctx, &msg, &e),
                }
            }
            Content::Cpoe(CpoeMsg::ArchiveQuery { patient_id }) => {
                let entries = self.store.query_archive(patient_id);
                reply(ctx, &msg, Performative::Inform, CpoeMsg::ArchiveList { entries });
            }
            _ => not_understood(ctx, &msg),
        }
    }

    fn save_state(&self) -> Value {
        state_of(&self.store)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct DeliveryState {
    audiences: Vec<Audience>,
    notices: Vec<DeliveryNotice>,
}

/// Information Delivery Agent: tells pharmacy and nursing about validated
/// prescriptions and keeps the notice log.
pub struct InformationDeliveryAgent {
    state: DeliveryState,
}

impl InformationDeliveryAgent {
    pub fn new(audiences: Vec<Audience>) -> Self {
        Self {
            state: DeliveryState {
                audiences,
                notices: Vec::new(),
            },
        }
    }

    pub fn from_state(state: &Value) -> Result<Self, String> {
        let state = serde_json::from_value(state.clone()).map_err(|e| e.to_string())?;
        Ok(Self { state })
    }

    /// The External endpoint that receives notices for an audience.
    pub fn endpoint(audience: Audience) -> AgentId {
        AgentId::new(AgentKind::External, audience.as_str())
    }
}

impl Agent<Content> for InformationDeliveryAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        match &msg.content {
            Content::Cpoe(CpoeMsg::Notify {
                prescription_id,
                summary,
                ..
            }) => {
                let mut sent = Vec::new();
                for audience in self.state.audiences.clone() {
                    let notice_id = format!("{prescription_id}:{}", audience.as_str());
                    if self.state.notices.iter().any(|n| n.notice_id == notice_id) {
                        continue;
                    }
                    let notice = DeliveryNotice {
                        notice_id,
                        prescription_id: prescription_id.clone(),
                        audience,
                        summary: summary.clone(),
                        delivered_at: ctx.tick(),
                    };
                    let endpoint = Self::endpoint(audience);
                    if ctx.is_registered(&endpoint) {
                        let _ = ctx.tell(endpoint, Performative::Inform, CpoeMsg::DeliveryNoticeMsg { notice: notice.clone() }.into());
                    }
                    self.state.notices.push(notice.clone());
                    sent.push(notice);
                }
                reply(ctx, &msg, Performative::Confirm, CpoeMsg::NotifyAck { notices: sent });
            }
            Content::Cpoe(CpoeMsg::NoticeQuery { prescription_id }) => {
                let notices = self
                    .state
                    .notices
                    .iter()
                    .filter(|n| prescription_id.as_ref().is_none_or(|p| *p == n.prescription_id))
                    .cloned()
                    .collect();
                reply(ctx, &msg, Performative::Inform, CpoeMsg::NoticeList { notices });
            }
            _ => not_understood(ctx, &msg),
        }
    }

    fn save_state(&self) -> Value {
        state_of(&self.state)
    }
}
