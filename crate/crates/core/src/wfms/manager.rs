use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::apps::ApplicationRegistry;
use super::cwa::ClinicalWorkflowAgent;
use super::definition::ProcessDefinition;
use super::instance::{InstanceStatus, ProcessInstance, WorkItem, WorkItemState};
use super::messages::*;
use super::resources::{Grant, ResourceTable};
use crate::bus::{Agent, AgentId, AgentKind, Performative};
use crate::content::{Content, Ctx, Msg};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ManagerState {
    definitions: BTreeMap<String, ProcessDefinition>,
    next_instance: u64,
    instances: BTreeMap<String, ProcessInstance>,
    items: BTreeMap<String, WorkItem>,
    resources: ResourceTable,
}

enum Pending {
    Create { origin: Msg, instance_id: String },
    Complete { origin: Msg },
}

/// The Agent Manager: process definitions (Interface 1), worklists
/// (Interface 2), monitoring (Interface 5), instance lifecycle and shared
/// resource locks. Keeps a read model of every instance its workflow agents
/// report.
pub struct AgentManager {
    state: ManagerState,
    apps: Arc<ApplicationRegistry>,
    pending: BTreeMap<String, Pending>,
}

impl AgentManager {
    pub fn new(apps: Arc<ApplicationRegistry>) -> Self {
        Self {
            state: ManagerState::default(),
            apps,
            pending: BTreeMap::new(),
        }
    }

    pub fn from_state(state: &Value, apps: Arc<ApplicationRegistry>) -> Result<Self, String> {
        let mut agent = Self::new(apps);
        agent.state = serde_json::from_value(state.clone()).map_err(|e| e.to_string())?;
        Ok(agent)
    }

    pub fn id() -> AgentId {
        AgentId::main(AgentKind::AgentManager)
    }

    fn mirror(&mut self, instance: ProcessInstance, open_items: Vec<WorkItem>, ctx: &mut Ctx<'_>) {
        let id = instance.instance_id.clone();
        for item in self.state.items.values_mut().filter(|i| i.instance_id == id) {
            if item.state == WorkItemState::Offered && !open_items.iter().any(|o| o.workitem_id == item.workitem_id) {
                item.state = WorkItemState::Completed;
            }
        }
        for item in open_items {
            self.state.items.insert(item.workitem_id.clone(), item);
        }
        if instance.status == InstanceStatus::Completed {
            ctx.retire(&ClinicalWorkflowAgent::id_for(&id));
        }
        self.state.instances.insert(id, instance);
    }

    fn monitoring(&self, def_id: Option<&str>) -> MonitoringView {
        let mut view = MonitoringView::default();
        for inst in self.state.instances.values().filter(|i| def_id.is_none_or(|d| d == i.def_id)) {
            let status = serde_json::to_value(inst.status).expect("status").as_str().unwrap_or_default().to_string();
            *view.states.entry(status).or_default() += 1;
            view.event_count += inst.history.len();
            view.instances.push(InstanceSummary {
                instance_id: inst.instance_id.clone(),
                def_id: inst.def_id.clone(),
                version: inst.version,
                status: inst.status,
                current_tasks: inst.current_tasks.iter().cloned().collect(),
                history_len: inst.history.len(),
            });
            view.open_workitems += self
                .state
                .items
                .values()
                .filter(|w| w.instance_id == inst.instance_id && w.state == WorkItemState::Offered)
                .count();
        }
        view
    }

    fn summary(def: &ProcessDefinition) -> DefinitionSummary {
        DefinitionSummary {
            def_id: def.def_id.clone(),
            version: def.version,
            name: def.name.clone(),
            task_count: def.tasks.len(),
        }
    }

    fn resource_status(&self, resource: &str, grant: Option<Grant>) -> WfmcMsg {
        let lock = self.state.resources.get(resource);
        WfmcMsg::ResourceStatus {
            resource: resource.to_string(),
            grant,
            holder: lock.and_then(|l| l.holder.clone()),
            queue: lock.map(|l| l.queue.iter().cloned().collect()).unwrap_or_default(),
        }
    }

    fn on_reply(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        let Some(pending) = self.pending.remove(&msg.conversation_id) else { return };
        let (origin, created) = match pending {
            Pending::Create { origin, instance_id } => (origin, Some(instance_id)),
            Pending::Complete { origin } => (origin, None),
        };
        match msg.content {
            Content::Wes(WesMsg::TaskAdvanced {
                advance,
                instance,
                open_items,
            }) => {
                self.mirror(instance, open_items, ctx);
                let answer = match created {
                    Some(instance_id) => WfmcMsg::InstanceCreated { instance_id, advance },
                    None => WfmcMsg::WorkItemCompleted { advance },
                };
                let _ = ctx.reply(&origin, Performative::Inform, answer.into());
            }
            Content::Wes(WesMsg::WesFault { code, detail }) => {
                let _ = ctx.reply(&origin, Performative::Failure, WfmcMsg::error(&code, detail).into());
            }
            _ => {}
        }
    }

    fn handle_wfmc(&mut self, msg: &Msg, request: WfmcMsg, ctx: &mut Ctx<'_>) -> Option<(Performative, WfmcMsg)> {
        let fail = |code: &str, detail: String| Some((Performative::Failure, WfmcMsg::error(code, detail)));
        match request {
            WfmcMsg::LoadDefinition { xml } => match ProcessDefinition::from_xml(&xml) {
                Ok(def) => {
                    if self.state.definitions.get(&def.def_id).is_some_and(|d| d.version >= def.version) {
                        return fail("DuplicateDefinition", format!("{} version {} is already registered", def.def_id, def.version));
                    }
                    let summary = Self::summary(&def);
                    self.state.definitions.insert(def.def_id.clone(), def);
                    Some((Performative::Inform, WfmcMsg::DefinitionLoaded { definition: summary }))
                }
                Err(e) => fail(e.code(), e.to_string()),
            },
            WfmcMsg::ListDefinitions => Some((
                Performative::Inform,
                WfmcMsg::DefinitionList {
                    definitions: self.state.definitions.values().map(Self::summary).collect(),
                },
            )),
            WfmcMsg::CreateInstance { def_id, variables } => {
                let Some(def) = self.state.definitions.get(&def_id).cloned() else {
                    return fail("UnknownDefinition", format!("no process definition {def_id}"));
                };
                self.state.next_instance += 1;
                let instance_id = format!("wf-{}", self.state.next_instance);
                let instance = ProcessInstance::start(instance_id.clone(), &def, variables);
                let agent = ClinicalWorkflowAgent::new(def, instance.clone(), self.apps.clone());
                let cwa = ClinicalWorkflowAgent::id_for(&instance_id);
                if let Err(e) = ctx.spawn(cwa.clone(), Box::new(agent)) {
                    return fail("SpawnFailed", e.to_string());
                }
                self.state.instances.insert(instance_id.clone(), instance);
                match ctx.request(cwa, Performative::Request, WesMsg::StartInstance.into()) {
                    Ok(r) => {
                        self.pending.insert(
                            r.conversation_id,
                            Pending::Create {
                                origin: msg.clone(),
                                instance_id,
                            },
                        );
                        None
                    }
                    Err(e) => fail("Unavailable", e.to_string()),
                }
            }
            WfmcMsg::InstanceQuery { instance_id } => match self.state.instances.get(&instance_id) {
                Some(instance) => Some((
                    Performative::Inform,
                    WfmcMsg::InstanceView {
                        instance: instance.clone(),
                        open_items: self
                            .state
                            .items
                            .values()
                            .filter(|w| w.instance_id == instance_id && w.state == WorkItemState::Offered)
                            .cloned()
                            .collect(),
                    },
                )),
                None => fail("UnknownInstance", format!("no instance {instance_id}")),
            },
            WfmcMsg::WorklistQuery { role } => Some((
                Performative::Inform,
                WfmcMsg::Worklist {
                    items: self
                        .state
                        .items
                        .values()
                        .filter(|w| w.state == WorkItemState::Offered)
                        .filter(|w| role.as_ref().is_none_or(|r| *r == w.performer_role))
                        .cloned()
                        .collect(),
                },
            )),
            WfmcMsg::CompleteWorkItem { workitem_id, data } => {
                let Some(item) = self.state.items.get(&workitem_id) else {
                    return fail("UnknownWorkItem", format!("no work item {workitem_id}"));
                };
                if item.state == WorkItemState::Completed {
                    return fail("AlreadyCompleted", format!("{workitem_id} is already completed"));
                }
                let cwa = ClinicalWorkflowAgent::id_for(&item.instance_id);
                match ctx.request(cwa, Performative::Request, WesMsg::CompleteTask { workitem_id, data }.into()) {
                    Ok(r) => {
                        self.pending.insert(r.conversation_id, Pending::Complete { origin: msg.clone() });
                        None
                    }
                    Err(e) => fail("Unavailable", e.to_string()),
                }
            }
            WfmcMsg::AcquireResource { instance_id, resource } => {
                if !self.state.instances.contains_key(&instance_id) {
                    return fail("UnknownInstance", format!("no instance {instance_id}"));
                }
                let grant = self.state.resources.acquire(&instance_id, &resource);
                Some((Performative::Inform, self.resource_status(&resource, Some(grant))))
            }
            WfmcMsg::ReleaseResource { instance_id, resource } => match self.state.resources.release(&instance_id, &resource) {
                Ok(_) => Some((Performative::Inform, self.resource_status(&resource, None))),
                Err(e) => fail("NotHolder", e.to_string()),
            },
            WfmcMsg::AdminQuery { def_id } => Some((
                Performative::Inform,
                WfmcMsg::Monitoring {
                    view: self.monitoring(def_id.as_deref()),
                },
            )),
            WfmcMsg::Interop { target, .. } => Some((
                Performative::Refuse,
                WfmcMsg::error("NotSupported", format!("Interface 4 towards {target} is not supported")),
            )),
            other => Some((
                Performative::NotUnderstood,
                WfmcMsg::error("NotUnderstood", format!("{} is not a request", other.variant())),
            )),
        }
    }
}

impl Agent<Content> for AgentManager {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        if msg.in_reply_to.is_some() {
            return self.on_reply(msg, ctx);
        }
        match msg.content.clone() {
            Content::Wes(WesMsg::InstanceUpdate { instance, open_items }) => self.mirror(instance, open_items, ctx),
            Content::Wfmc(request) => {
                if let Some((perf, answer)) = self.handle_wfmc(&msg, request, ctx) {
                    let _ = ctx.reply(&msg, perf, answer.into());
                }
            }
            _ => {
                let _ = ctx.reply(&msg, Performative::NotUnderstood, WfmcMsg::error("NotUnderstood", "agent manager").into());
            }
        }
    }

    fn save_state(&self) -> Value {
        serde_json::to_value(&self.state).expect("manager state serializes")
    }
}
