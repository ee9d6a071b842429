//! HTTP + JSON endpoints. Every request becomes one or more messages from the
//! External client endpoint, routed through the bus and its authorization
//! policy like any scenario stimulus.

use std::collections::BTreeMap;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Path, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use careflow_core::bus::{AgentId, AgentKind, Payload, Performative};
use careflow_core::content::{Content, Msg};
use careflow_core::cpoe::{CpoeMsg, Override, PrescriptionLine};
use careflow_core::org::{audit_query, AuditFilter};
use careflow_core::system::reply_error;
use careflow_core::wfms::{AgentManager, WfmcMsg};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::driver::Driver;

pub const PRINCIPAL_HEADER: &str = "x-principal-id";

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub detail: String,
}

impl ApiError {
    fn new(code: impl Into<String>, detail: impl Into<String>) -> Self {
        let code = code.into();
        Self {
            status: status_for(&code),
            code,
            detail: detail.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "detail": self.detail}))).into_response()
    }
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "BadRequest" | "NotUnderstood" | "SchemaError" | "GraphError" | "ParseError" | "InvalidProtocol" | "InvalidLine" => {
            StatusCode::BAD_REQUEST
        }
        "Unauthorized" => StatusCode::FORBIDDEN,
        "NotFound" | "UnknownPatient" | "UnknownInstance" | "UnknownDefinition" | "UnknownWorkItem" => StatusCode::NOT_FOUND,
        "DuplicateDefinition" | "DuplicateTitle" | "AlreadyValidated" | "AlreadyCompleted" | "AlreadyArchived" | "DraftClosed"
        | "StaleReport" | "NotAnalyzed" | "NotValidated" | "NotHolder" => StatusCode::CONFLICT,
        "UnknownDrug" | "DataMissing" => StatusCode::UNPROCESSABLE_ENTITY,
        "NotSupported" => StatusCode::NOT_IMPLEMENTED,
        "Unavailable" | "PlugTimeout" => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

/// JSON body whose rejections use the error envelope.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::new("BadRequest", rejection_text(&e))),
        }
    }
}

fn rejection_text(e: &JsonRejection) -> String {
    e.body_text()
}

/// Like `Body`, but an empty request body reads as `T::default()`.
pub struct MaybeBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned + Default> FromRequest<S> for MaybeBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = axum::body::Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new("BadRequest", e.body_text()))?;
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Ok(MaybeBody(T::default()));
        }
        serde_json::from_slice(&bytes)
            .map(MaybeBody)
            .map_err(|e| ApiError::new("BadRequest", e.to_string()))
    }
}

/// Query string with the same error envelope.
pub struct Params<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        match axum::extract::Query::<T>::from_request_parts(parts, state).await {
            Ok(q) => Ok(Params(q.0)),
            Err(e) => Err(ApiError::new("BadRequest", QueryRejection::body_text(&e))),
        }
    }
}

fn principal(headers: &HeaderMap) -> Option<String> {
    headers
        .get(PRINCIPAL_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
}

fn prescriber_or(headers: &HeaderMap, given: Option<String>) -> Result<String, ApiError> {
    given
        .filter(|s| !s.trim().is_empty())
        .or_else(|| principal(headers))
        .ok_or_else(|| ApiError::new("BadRequest", format!("prescriber missing: set it in the body or the {PRINCIPAL_HEADER} header")))
}

/// Sends one message from the client endpoint and waits for quiescence.
/// Error replies become ApiErrors; `commit` persists the new state.
async fn call(driver: &Driver, receiver: AgentId, performative: Performative, content: Content, commit: bool) -> Result<Msg, ApiError> {
    let result = driver
        .run(move |engine| {
            let reply = engine.sys.call(receiver, performative, content)?;
            if commit {
                engine.commit()?;
            }
            Ok::<_, careflow_core::system::SystemError>(reply)
        })
        .await
        .map_err(|e| ApiError::new("Unavailable", e.to_string()))?;
    let reply = result.map_err(|e| ApiError::new(e.code(), e.to_string()))?;
    match reply_error(&reply) {
        Some((code, detail)) => Err(ApiError::new(code, detail)),
        None => Ok(reply),
    }
}

fn unexpected(reply: &Msg) -> ApiError {
    ApiError::new("Internal", format!("unexpected reply {}", reply.content.variant()))
}

async fn wfmc(driver: &Driver, performative: Performative, msg: WfmcMsg, commit: bool) -> Result<WfmcMsg, ApiError> {
    let reply = call(driver, AgentManager::id(), performative, msg.into(), commit).await?;
    match reply.content {
        Content::Wfmc(m) => Ok(m),
        _ => Err(unexpected(&reply)),
    }
}

/// Order-entry messages use the same performatives as scenario stimuli.
async fn cpoe(driver: &Driver, kind: AgentKind, msg: CpoeMsg) -> Result<CpoeMsg, ApiError> {
    let (performative, commit) = match msg {
        CpoeMsg::ContextRequest { .. }
        | CpoeMsg::DrugQuery { .. }
        | CpoeMsg::DraftQuery { .. }
        | CpoeMsg::ArchiveQuery { .. }
        | CpoeMsg::NoticeQuery { .. } => (Performative::Query, false),
        _ => (Performative::Request, true),
    };
    let reply = call(driver, AgentId::main(kind), performative, msg.into(), commit).await?;
    match reply.content {
        Content::Cpoe(m) => Ok(m),
        _ => Err(unexpected(&reply)),
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn to_json(v: impl serde::Serialize) -> Json<Value> {
    Json(serde_json::to_value(v).expect("serializable"))
}

pub fn router(driver: Driver) -> Router {
    Router::new()
        .route("/processes", get(list_processes).post(load_process))
        .route("/instances", post(create_instance))
        .route("/instances/{id}", get(get_instance))
        .route("/worklist", get(worklist))
        .route("/workitems/{id}/complete", post(complete_workitem))
        .route("/orders", post(create_order))
        .route("/orders/{id}", get(get_order))
        .route("/orders/{id}/lines", post(add_lines))
        .route("/orders/{id}/analyze", post(analyze_order))
        .route("/orders/{id}/validate", post(validate_order))
        .route("/drugs", get(find_drugs))
        .route("/patients/{id}/context", get(patient_context))
        .route("/protocols", post(save_protocol))
        .route("/protocols/{title}/instantiate", post(instantiate_protocol))
        .route("/archive", get(archive))
        .route("/admin/instances", get(admin_instances))
        .route("/admin/trace", get(admin_trace))
        .route("/admin/audit", get(admin_audit))
        .fallback(|| async { ApiError::new("NotFound", "no such endpoint") })
        .with_state(driver)
}

async fn list_processes(State(d): State<Driver>) -> ApiResult {
    match wfmc(&d, Performative::Query, WfmcMsg::ListDefinitions, false).await? {
        WfmcMsg::DefinitionList { definitions } => Ok(to_json(json!({ "definitions": definitions }))),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct LoadProcess {
    xml: String,
}

async fn load_process(State(d): State<Driver>, Body(body): Body<LoadProcess>) -> ApiResult {
    match wfmc(&d, Performative::Request, WfmcMsg::LoadDefinition { xml: body.xml }, true).await? {
        WfmcMsg::DefinitionLoaded { definition } => Ok(to_json(definition)),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct CreateInstance {
    def_id: String,
    #[serde(default)]
    variables: BTreeMap<String, Value>,
}

async fn create_instance(State(d): State<Driver>, Body(body): Body<CreateInstance>) -> ApiResult {
    let msg = WfmcMsg::CreateInstance {
        def_id: body.def_id,
        variables: body.variables,
    };
    match wfmc(&d, Performative::Request, msg, true).await? {
        WfmcMsg::InstanceCreated { instance_id, advance } => Ok(to_json(json!({"instance_id": instance_id, "advance": advance}))),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

async fn get_instance(State(d): State<Driver>, Path(id): Path<String>) -> ApiResult {
    match wfmc(&d, Performative::Query, WfmcMsg::InstanceQuery { instance_id: id }, false).await? {
        WfmcMsg::InstanceView { instance, open_items } => Ok(to_json(json!({"instance": instance, "open_items": open_items}))),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct RoleParam {
    role: Option<String>,
}

async fn worklist(State(d): State<Driver>, Params(p): Params<RoleParam>) -> ApiResult {
    match wfmc(&d, Performative::Query, WfmcMsg::WorklistQuery { role: p.role }, false).await? {
        WfmcMsg::Worklist { items } => Ok(to_json(json!({ "items": items }))),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize, Default)]
struct CompleteItem {
    #[serde(default)]
    data: BTreeMap<String, Value>,
}

async fn complete_workitem(State(d): State<Driver>, Path(id): Path<String>, MaybeBody(body): MaybeBody<CompleteItem>) -> ApiResult {
    let msg = WfmcMsg::CompleteWorkItem {
        workitem_id: id,
        data: body.data,
    };
    match wfmc(&d, Performative::Request, msg, true).await? {
        WfmcMsg::WorkItemCompleted { advance } => Ok(to_json(json!({ "advance": advance }))),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct CreateOrder {
    patient_id: String,
    #[serde(default)]
    prescriber: Option<String>,
    #[serde(default)]
    lines: Vec<PrescriptionLine>,
}

/// Creates the draft and, when it has lines, analyzes it right away.
async fn create_order(State(d): State<Driver>, headers: HeaderMap, Body(body): Body<CreateOrder>) -> ApiResult {
    let prescriber = prescriber_or(&headers, body.prescriber)?;
    let analyze = !body.lines.is_empty();
    let msg = CpoeMsg::CreateDraft {
        patient_id: body.patient_id,
        prescriber,
        lines: body.lines,
        prescription_id: None,
    };
    let CpoeMsg::DraftMsg { draft } = cpoe(&d, AgentKind::Paa, msg).await? else {
        return Err(ApiError::new("Internal", "expected a draft"));
    };
    if !analyze {
        return Ok(to_json(json!({"draft": draft, "report": null})));
    }
    let id = draft.prescription_id.clone();
    let report = match cpoe(&d, AgentKind::Paa, CpoeMsg::AnalyzeRequest { prescription_id: id.clone() }).await? {
        CpoeMsg::AnalysisReportMsg { report } => report,
        other => return Err(ApiError::new("Internal", other.variant())),
    };
    let draft = match cpoe(&d, AgentKind::Paa, CpoeMsg::DraftQuery { prescription_id: id }).await? {
        CpoeMsg::DraftMsg { draft } => draft,
        other => return Err(ApiError::new("Internal", other.variant())),
    };
    Ok(to_json(json!({"draft": draft, "report": report})))
}

async fn get_order(State(d): State<Driver>, Path(id): Path<String>) -> ApiResult {
    match cpoe(&d, AgentKind::Paa, CpoeMsg::DraftQuery { prescription_id: id }).await? {
        CpoeMsg::DraftMsg { draft } => Ok(to_json(draft)),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct AddLines {
    lines: Vec<PrescriptionLine>,
    #[serde(default)]
    replace: bool,
}

async fn add_lines(State(d): State<Driver>, Path(id): Path<String>, Body(body): Body<AddLines>) -> ApiResult {
    let msg = CpoeMsg::AddLines {
        prescription_id: id,
        lines: body.lines,
        replace: body.replace,
    };
    match cpoe(&d, AgentKind::Paa, msg).await? {
        CpoeMsg::DraftMsg { draft } => Ok(to_json(draft)),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

async fn analyze_order(State(d): State<Driver>, Path(id): Path<String>) -> ApiResult {
    match cpoe(&d, AgentKind::Paa, CpoeMsg::AnalyzeRequest { prescription_id: id }).await? {
        CpoeMsg::AnalysisReportMsg { report } => Ok(to_json(report)),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize, Default)]
struct ValidateBody {
    #[serde(default)]
    override_reason: Option<String>,
}

/// A refusal is a normal outcome here: 200 with `refusal` set.
async fn validate_order(State(d): State<Driver>, Path(id): Path<String>, headers: HeaderMap, MaybeBody(body): MaybeBody<ValidateBody>) -> ApiResult {
    let override_ = body.override_reason.map(|reason| Override {
        reason,
        principal: principal(&headers).unwrap_or_else(|| "anonymous".into()),
    });
    let msg = CpoeMsg::ValidateRequest {
        prescription_id: id,
        override_,
    };
    match cpoe(&d, AgentKind::Paa, msg).await? {
        CpoeMsg::ValidationResult { result } => Ok(to_json(result)),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct DrugParams {
    query: String,
    #[serde(default)]
    patient: Option<String>,
}

async fn find_drugs(State(d): State<Driver>, Params(p): Params<DrugParams>) -> ApiResult {
    let msg = CpoeMsg::DrugQuery {
        query: p.query,
        patient_id: p.patient,
    };
    match cpoe(&d, AgentKind::Dsa, msg).await? {
        CpoeMsg::DrugCandidates { candidates } => Ok(to_json(json!({ "candidates": candidates }))),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

async fn patient_context(State(d): State<Driver>, Path(id): Path<String>) -> ApiResult {
    match cpoe(&d, AgentKind::Ica, CpoeMsg::ContextRequest { patient_id: id }).await? {
        CpoeMsg::ContextReply { context } => Ok(to_json(context)),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct SaveProtocol {
    title: String,
    prescription_id: String,
}

async fn save_protocol(State(d): State<Driver>, Body(body): Body<SaveProtocol>) -> ApiResult {
    let msg = CpoeMsg::ProtocolSave {
        title: body.title,
        prescription_id: body.prescription_id,
    };
    match cpoe(&d, AgentKind::Pra, msg).await? {
        CpoeMsg::ProtocolAck { title, lines } => Ok(to_json(json!({"title": title, "lines": lines}))),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct Instantiate {
    patient_id: String,
    #[serde(default)]
    prescriber: Option<String>,
}

async fn instantiate_protocol(State(d): State<Driver>, Path(title): Path<String>, headers: HeaderMap, Body(body): Body<Instantiate>) -> ApiResult {
    let msg = CpoeMsg::ProtocolInstantiate {
        title,
        patient_id: body.patient_id,
        prescriber: prescriber_or(&headers, body.prescriber)?,
    };
    match cpoe(&d, AgentKind::Pra, msg).await? {
        CpoeMsg::DraftMsg { draft } => Ok(to_json(draft)),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct PatientParam {
    patient: String,
}

async fn archive(State(d): State<Driver>, Params(p): Params<PatientParam>) -> ApiResult {
    match cpoe(&d, AgentKind::Tfa, CpoeMsg::ArchiveQuery { patient_id: p.patient }).await? {
        CpoeMsg::ArchiveList { entries } => Ok(to_json(json!({ "entries": entries }))),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct DefParam {
    def_id: Option<String>,
}

/// Sent as a request, the way scenario files issue it.
async fn admin_instances(State(d): State<Driver>, Params(p): Params<DefParam>) -> ApiResult {
    match wfmc(&d, Performative::Request, WfmcMsg::AdminQuery { def_id: p.def_id }, false).await? {
        WfmcMsg::Monitoring { view } => Ok(to_json(view)),
        other => Err(ApiError::new("Internal", other.variant())),
    }
}

#[derive(Deserialize)]
struct TraceParams {
    #[serde(default)]
    format: Option<String>,
}

/// Delivery events so far; `format=ndjson` gives the trace-file form.
async fn admin_trace(State(d): State<Driver>, Params(p): Params<TraceParams>) -> Result<Response, ApiError> {
    let trace = d.run(|e| e.sys.bus().trace()).await.map_err(|e| ApiError::new("Unavailable", e.to_string()))?;
    match p.format.as_deref() {
        None | Some("json") => Ok(to_json(json!({"count": trace.events.len(), "events": trace.events})).into_response()),
        Some("ndjson") => Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], trace.to_ndjson()).into_response()),
        Some(other) => Err(ApiError::new("BadRequest", format!("unknown format `{other}`"))),
    }
}

async fn admin_audit(State(d): State<Driver>, Params(filter): Params<AuditFilter>) -> ApiResult {
    let (entries, stats) = d
        .run(move |e| (audit_query(e.sys.bus().audit_log(), &filter), e.sys.bus().stats()))
        .await
        .map_err(|e| ApiError::new("Unavailable", e.to_string()))?;
    Ok(to_json(json!({"count": entries.len(), "stats": stats, "entries": entries})))
}
