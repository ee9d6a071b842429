use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::apps::ApplicationRegistry;
use super::definition::{ProcessDefinition, TaskDef, TaskKind};
use super::instance::{AdvanceReport, InstanceStatus, ProcessInstance, WorkItem, WorkItemState};
use super::messages::WesMsg;
use crate::bus::{Agent, AgentId, AgentKind, Performative};
use crate::connector::ConnectorAgent;
use crate::content::{Content, Ctx, Msg};
use crate::cpoe::{Override, PrescriptionLine};

pub const DEFAULT_ORDER_VARIABLE: &str = "order";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WorkflowState {
    definition: ProcessDefinition,
    instance: ProcessInstance,
    items: BTreeMap<String, WorkItem>,
}

/// Clinical Workflow Agent: runs exactly one process instance.
pub struct ClinicalWorkflowAgent {
    state: WorkflowState,
    apps: Arc<ApplicationRegistry>,
    /// Connector conversations awaiting an outcome, by task.
    pending: BTreeMap<String, String>,
}

impl ClinicalWorkflowAgent {
    pub fn new(definition: ProcessDefinition, instance: ProcessInstance, apps: Arc<ApplicationRegistry>) -> Self {
        Self {
            state: WorkflowState {
                definition,
                instance,
                items: BTreeMap::new(),
            },
            apps,
            pending: BTreeMap::new(),
        }
    }

    pub fn from_state(state: &Value, apps: Arc<ApplicationRegistry>) -> Result<Self, String> {
        let state: WorkflowState = serde_json::from_value(state.clone()).map_err(|e| e.to_string())?;
        Ok(Self {
            state,
            apps,
            pending: BTreeMap::new(),
        })
    }

    pub fn id_for(instance_id: &str) -> AgentId {
        AgentId::new(AgentKind::ClinicalWorkflowAgent, instance_id)
    }

    fn open_items(&self) -> Vec<WorkItem> {
        self.state.items.values().filter(|i| i.state == WorkItemState::Offered).cloned().collect()
    }

    fn variables_map(&self) -> Map<String, Value> {
        self.state.instance.variables.clone().into_iter().collect()
    }

    fn string_var(&self, name: &str) -> Option<String> {
        self.state.instance.variables.get(name).and_then(Value::as_str).map(str::to_owned)
    }

    fn lines_of(&self, task: &TaskDef) -> Result<Vec<PrescriptionLine>, String> {
        let var = task.input.as_deref().unwrap_or(DEFAULT_ORDER_VARIABLE);
        match self.state.instance.variables.get(var) {
            None | Some(Value::Null) => Ok(Vec::new()),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| format!("variable {var} is not a list of prescription lines: {e}")),
        }
    }

    fn connector_request(&self, task: &TaskDef) -> Result<WesMsg, (String, String)> {
        let instance_id = self.state.instance.instance_id.clone();
        let patient_id = self
            .string_var("patient_id")
            .ok_or_else(|| ("MissingVariable".to_string(), "patient_id is not set".to_string()))?;
        let lines = self.lines_of(task).map_err(|e| ("MissingVariable".to_string(), e))?;
        Ok(match task.kind {
            TaskKind::DecisionSupport => WesMsg::DecisionNeeded {
                instance_id,
                task_id: task.task_id.clone(),
                patient_id,
                lines,
            },
            _ => {
                let prescriber = self.string_var("prescriber").unwrap_or_else(|| task.performer_role.clone());
                let override_ = self.string_var("override_reason").map(|reason| Override {
                    reason,
                    principal: prescriber.clone(),
                });
                WesMsg::PrescriptionNeeded {
                    instance_id,
                    task_id: task.task_id.clone(),
                    patient_id,
                    prescriber,
                    lines,
                    override_,
                }
            }
        })
    }

    /// Works through newly active tasks until only manual or connector
    /// tasks remain, or the instance stops.
    fn activate(&mut self, tasks: Vec<String>, report: &mut AdvanceReport, ctx: &mut Ctx<'_>) {
        let mut queue: VecDeque<String> = tasks.into();
        while let Some(task_id) = queue.pop_front() {
            if self.state.instance.status != InstanceStatus::Running {
                break;
            }
            report.activated.push(task_id.clone());
            let task = self.state.definition.task(&task_id).expect("validated definition").clone();
            match task.kind {
                TaskKind::Manual => {
                    let workitem_id = WorkItem::id_for(&self.state.instance.instance_id, &task_id);
                    self.state.items.insert(
                        workitem_id.clone(),
                        WorkItem {
                            workitem_id: workitem_id.clone(),
                            instance_id: self.state.instance.instance_id.clone(),
                            task_id,
                            performer_role: task.performer_role.clone(),
                            state: WorkItemState::Offered,
                        },
                    );
                    report.actions.push(format!("offer {workitem_id}"));
                }
                TaskKind::Automatic => {
                    let app = task.application.clone().expect("validated definition");
                    report.actions.push(format!("invoke {app}"));
                    match self.apps.invoke(&app, &self.variables_map()) {
                        Ok(out) => {
                            let next = self.state.instance.complete_task(&self.state.definition, &task_id, out.into_iter().collect());
                            queue.extend(next);
                        }
                        Err(e) => {
                            self.state.instance.fault(&task_id, e.code(), &e.to_string());
                            report.actions.push(format!("fault {task_id} {}", e.code()));
                        }
                    }
                }
                TaskKind::DecisionSupport | TaskKind::Prescription => match self.connector_request(&task) {
                    Ok(request) => {
                        report.actions.push(format!("dispatch {} {task_id}", request_kind(task.kind)));
                        match ctx.request(ConnectorAgent::id(), Performative::Request, request.into()) {
                            Ok(receipt) => {
                                self.pending.insert(receipt.conversation_id, task_id);
                            }
                            Err(e) => self.state.instance.fault(&task_id, "ApplicationFault", &e.to_string()),
                        }
                    }
                    Err((code, detail)) => {
                        self.state.instance.fault(&task_id, &code, &detail);
                        report.actions.push(format!("fault {task_id} {code}"));
                    }
                },
            }
        }
        report.status = Some(self.state.instance.status);
    }

    fn advanced(&self, advance: AdvanceReport) -> Content {
        WesMsg::TaskAdvanced {
            advance,
            instance: self.state.instance.clone(),
            open_items: self.open_items(),
        }
        .into()
    }

    fn new_report(&self) -> AdvanceReport {
        AdvanceReport {
            instance_id: self.state.instance.instance_id.clone(),
            ..AdvanceReport::default()
        }
    }

    fn complete_workitem(&mut self, workitem_id: &str, data: BTreeMap<String, Value>, ctx: &mut Ctx<'_>) -> Result<AdvanceReport, (String, String)> {
        let item = self
            .state
            .items
            .get_mut(workitem_id)
            .ok_or_else(|| ("UnknownWorkItem".to_string(), format!("no work item {workitem_id}")))?;
        if item.state == WorkItemState::Completed {
            return Err(("AlreadyCompleted".to_string(), format!("{workitem_id} is already completed")));
        }
        if self.state.instance.status != InstanceStatus::Running {
            return Err(("InstanceNotRunning".to_string(), format!("{} is {:?}", self.state.instance.instance_id, self.state.instance.status)));
        }
        item.state = WorkItemState::Completed;
        let task_id = item.task_id.clone();
        let mut report = self.new_report();
        let next = self.state.instance.complete_task(&self.state.definition, &task_id, data);
        self.activate(next, &mut report, ctx);
        Ok(report)
    }

    fn on_outcome(&mut self, task_id: String, msg: Msg, ctx: &mut Ctx<'_>) {
        let outputs: BTreeMap<String, Value> = match msg.content {
            Content::Wes(WesMsg::DecisionOutcome { report }) => BTreeMap::from([
                ("verdict".to_string(), serde_json::to_value(report.verdict).expect("verdict")),
                ("report".to_string(), serde_json::to_value(&report).expect("report")),
            ]),
            Content::Wes(WesMsg::PrescriptionOutcome { result }) => BTreeMap::from([
                ("prescription_status".to_string(), serde_json::to_value(result.status).expect("status")),
                ("prescription_id".to_string(), Value::String(result.prescription_id.clone())),
                ("archive_id".to_string(), result.archive_id.clone().map_or(Value::Null, Value::String)),
                ("verdict".to_string(), serde_json::to_value(result.report.verdict).expect("verdict")),
            ]),
            Content::Wes(WesMsg::WesFault { code, detail }) => {
                self.state.instance.fault(&task_id, "ApplicationFault", &format!("{code}: {detail}"));
                return self.publish(ctx);
            }
            _ => return,
        };
        let mut report = self.new_report();
        let next = self.state.instance.complete_task(&self.state.definition, &task_id, outputs);
        self.activate(next, &mut report, ctx);
        self.publish(ctx);
    }

    fn publish(&self, ctx: &mut Ctx<'_>) {
        let update = WesMsg::InstanceUpdate {
            instance: self.state.instance.clone(),
            open_items: self.open_items(),
        };
        let _ = ctx.tell(AgentId::main(AgentKind::AgentManager), Performative::Inform, update.into());
    }
}

fn request_kind(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::DecisionSupport => "decision-support",
        TaskKind::Prescription => "prescription",
        TaskKind::Manual => "manual",
        TaskKind::Automatic => "automatic",
    }
}

impl Agent<Content> for ClinicalWorkflowAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        if msg.in_reply_to.is_some() {
            if let Some(task_id) = self.pending.remove(&msg.conversation_id) {
                self.on_outcome(task_id, msg, ctx);
            }
            return;
        }
        match &msg.content {
            Content::Wes(WesMsg::StartInstance) => {
                let mut report = self.new_report();
                let start = self.state.instance.current_tasks.iter().cloned().collect();
                self.activate(start, &mut report, ctx);
                let content = self.advanced(report);
                let _ = ctx.reply(&msg, Performative::Inform, content);
            }
            Content::Wes(WesMsg::CompleteTask { workitem_id, data }) => {
                match self.complete_workitem(workitem_id, data.clone(), ctx) {
                    Ok(report) => {
                        let content = self.advanced(report);
                        let _ = ctx.reply(&msg, Performative::Inform, content);
                    }
                    Err((code, detail)) => {
                        let _ = ctx.reply(&msg, Performative::Failure, WesMsg::fault(&code, detail).into());
                    }
                }
            }
            _ => {
                let _ = ctx.reply(&msg, Performative::NotUnderstood, WesMsg::fault("NotUnderstood", "workflow agent").into());
            }
        }
    }

    fn save_state(&self) -> Value {
        serde_json::to_value(&self.state).expect("workflow state serializes")
    }
}
