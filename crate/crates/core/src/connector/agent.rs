use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::messages::Interface6Msg;
use super::session::{PlugMode, PlugSession, PlugState, UnplugPolicy};
use crate::bus::{Agent, AgentId, AgentKind, Performative, TimerId};
use crate::cdss::{decision_report_id, AnalysisReport, DetectedError};
use crate::content::{Content, Ctx, Msg};
use crate::wfms::{ConnectorAction, WesMsg, WfmcMsg};

pub const DEFAULT_PLUG_TIMEOUT: u64 = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectorConfig {
    pub endpoint: AgentId,
    pub plug_timeout: u64,
    pub unplug_policy: UnplugPolicy,
    pub mode: PlugMode,
}

impl Default for ConnectorConfig {
    fn default() -> Self {
        Self {
            endpoint: AgentId::main(AgentKind::Paa),
            plug_timeout: DEFAULT_PLUG_TIMEOUT,
            unplug_policy: UnplugPolicy::default(),
            mode: PlugMode::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConnectorState {
    config: ConnectorConfig,
    session: PlugSession,
    sessions_opened: u64,
}

enum Inflight {
    Decision { origin: Msg, instance_id: String, parts: Vec<Vec<DetectedError>> },
    Prescription { origin: Msg },
}

impl Inflight {
    fn origin(&self) -> &Msg {
        match self {
            Inflight::Decision { origin, .. } | Inflight::Prescription { origin } => origin,
        }
    }
}

/// The Connector Agent. Plugs the mediation infrastructure on first need,
/// then routes decision requests to the two decision-support agents and
/// prescription requests to the analyzer agent.
pub struct ConnectorAgent {
    state: ConnectorState,
    queue: Vec<Msg>,
    inflight: BTreeMap<String, Inflight>,
    plug_timer: Option<TimerId>,
    waiters: Vec<Msg>,
}

impl ConnectorAgent {
    pub fn new(config: ConnectorConfig) -> Self {
        let session = PlugSession::new("plug-0", config.endpoint.clone());
        Self {
            state: ConnectorState {
                config,
                session,
                sessions_opened: 0,
            },
            queue: Vec::new(),
            inflight: BTreeMap::new(),
            plug_timer: None,
            waiters: Vec::new(),
        }
    }

    pub fn from_state(state: &Value) -> Result<Self, String> {
        let state: ConnectorState = serde_json::from_value(state.clone()).map_err(|e| e.to_string())?;
        let mut agent = Self::new(state.config.clone());
        agent.state = state;
        Ok(agent)
    }

    pub fn id() -> AgentId {
        AgentId::main(AgentKind::ConnectorAgent)
    }

    fn ensure_plugged(&mut self, ctx: &mut Ctx<'_>) {
        if self.state.session.state != PlugState::Unplugged {
            return;
        }
        self.state.sessions_opened += 1;
        let session_id = format!("plug-{}", self.state.sessions_opened);
        self.state.session = PlugSession::new(session_id.clone(), self.state.config.endpoint.clone());
        self.state.session.move_to(PlugState::Plugging, ctx.tick()).expect("unplugged -> plugging");
        // Without an endpoint the request fails to route; the timer still
        // bounds the wait.
        let _ = ctx.request(self.state.config.endpoint.clone(), Performative::Request, Interface6Msg::PlugRequest { session_id }.into());
        self.plug_timer = Some(ctx.set_timer(self.state.config.plug_timeout));
    }

    fn start_unplug(&mut self, ctx: &mut Ctx<'_>) {
        let session_id = self.state.session.session_id.clone();
        self.state.session.move_to(PlugState::Unplugging, ctx.tick()).expect("plugged -> unplugging");
        if ctx
            .request(self.state.config.endpoint.clone(), Performative::Request, Interface6Msg::UnplugRequest { session_id }.into())
            .is_err()
        {
            self.finish_unplug(ctx);
        }
    }

    fn finish_unplug(&mut self, ctx: &mut Ctx<'_>) {
        self.state.session.move_to(PlugState::Unplugged, ctx.tick()).expect("unplugging -> unplugged");
        self.answer_waiters(ctx);
        if !self.queue.is_empty() {
            self.ensure_plugged(ctx);
        }
    }

    fn answer_waiters(&mut self, ctx: &mut Ctx<'_>) {
        for w in std::mem::take(&mut self.waiters) {
            let _ = ctx.reply(&w, Performative::Inform, WfmcMsg::ConnectorStatus { session: self.state.session.clone() }.into());
        }
    }

    fn dispatch(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        let conv = ctx.new_conversation();
        let (sent, inflight) = match &msg.content {
            Content::Wes(WesMsg::DecisionNeeded {
                instance_id,
                patient_id,
                lines,
                ..
            }) => {
                let query: Content = Interface6Msg::DecisionQuery {
                    instance_id: instance_id.clone(),
                    patient_id: patient_id.clone(),
                    lines: lines.clone(),
                }
                .into();
                let a = ctx.request_in(&conv, AgentId::main(AgentKind::Deda), Performative::Query, query.clone());
                let b = a.clone().and_then(|_| ctx.request_in(&conv, AgentId::main(AgentKind::Ddida), Performative::Query, query));
                let instance_id = instance_id.clone();
                (
                    b,
                    Inflight::Decision {
                        origin: msg,
                        instance_id,
                        parts: Vec::new(),
                    },
                )
            }
            Content::Wes(WesMsg::PrescriptionNeeded {
                instance_id,
                task_id,
                patient_id,
                prescriber,
                lines,
                override_,
            }) => {
                let request = Interface6Msg::PrescriptionRequest {
                    instance_id: instance_id.clone(),
                    task_id: task_id.clone(),
                    patient_id: patient_id.clone(),
                    prescriber: prescriber.clone(),
                    lines: lines.clone(),
                    override_: override_.clone(),
                };
                let sent = ctx.request_in(&conv, self.state.config.endpoint.clone(), Performative::Request, request.into());
                (sent, Inflight::Prescription { origin: msg })
            }
            _ => return,
        };
        match sent {
            Ok(_) => {
                self.inflight.insert(conv, inflight);
            }
            Err(e) => {
                let code = match e {
                    crate::bus::BusError::Unauthorized(_) => "Unauthorized",
                    _ => "Unavailable",
                };
                let _ = ctx.reply(inflight.origin(), Performative::Failure, WesMsg::fault(code, e.to_string()).into());
            }
        }
    }

    fn on_result(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        let Some(mut job) = self.inflight.remove(&msg.conversation_id) else { return };
        match (msg.content, &mut job) {
            (Content::Interface6(Interface6Msg::Fault { code, detail }), job) => {
                let _ = ctx.reply(job.origin(), Performative::Failure, WesMsg::fault(&code, detail).into());
            }
            (Content::Interface6(Interface6Msg::DecisionResult { report }), Inflight::Decision { origin, instance_id, parts }) => {
                parts.push(report.errors);
                if parts.len() < 2 {
                    self.inflight.insert(msg.conversation_id, job);
                    return;
                }
                let report = AnalysisReport::assemble(decision_report_id(instance_id), parts.concat());
                let _ = ctx.reply(origin, Performative::Inform, WesMsg::DecisionOutcome { report }.into());
            }
            (Content::Interface6(Interface6Msg::PrescriptionResult { result }), Inflight::Prescription { origin }) => {
                let _ = ctx.reply(origin, Performative::Inform, WesMsg::PrescriptionOutcome { result }.into());
            }
            (_, job) => {
                let _ = ctx.reply(job.origin(), Performative::Failure, WesMsg::fault("NotUnderstood", "unexpected Interface 6 reply").into());
            }
        }
        self.maybe_unplug_idle(ctx);
    }

    fn maybe_unplug_idle(&mut self, ctx: &mut Ctx<'_>) {
        if self.state.config.unplug_policy == UnplugPolicy::OnIdle
            && self.state.session.state == PlugState::Plugged
            && self.inflight.is_empty()
            && self.queue.is_empty()
        {
            self.start_unplug(ctx);
        }
    }

    fn control(&mut self, msg: Msg, action: ConnectorAction, ctx: &mut Ctx<'_>) {
        let status = |s: &Self| WfmcMsg::ConnectorStatus { session: s.state.session.clone() };
        match action {
            ConnectorAction::Status => {
                let _ = ctx.reply(&msg, Performative::Inform, status(self).into());
            }
            ConnectorAction::Plug => match self.state.session.state {
                PlugState::Plugged => {
                    let _ = ctx.reply(&msg, Performative::Inform, status(self).into());
                }
                _ => {
                    self.waiters.push(msg);
                    self.ensure_plugged(ctx);
                }
            },
            ConnectorAction::Unplug => match self.state.session.state {
                PlugState::Unplugged => {
                    let _ = ctx.reply(&msg, Performative::Inform, status(self).into());
                }
                PlugState::Plugged if self.inflight.is_empty() && self.queue.is_empty() => {
                    self.waiters.push(msg);
                    self.start_unplug(ctx);
                }
                _ => {
                    let detail = format!("{} Interface 6 conversation(s) in flight", self.inflight.len() + self.queue.len());
                    let _ = ctx.reply(&msg, Performative::Refuse, WfmcMsg::error("BusySession", detail).into());
                }
            },
        }
    }
}

impl Agent<Content> for ConnectorAgent {
    fn handle(&mut self, msg: Msg, ctx: &mut Ctx<'_>) {
        match &msg.content {
            Content::Wes(WesMsg::DecisionNeeded { .. } | WesMsg::PrescriptionNeeded { .. }) => {
                if self.state.session.state == PlugState::Plugged {
                    self.dispatch(msg, ctx);
                } else {
                    self.queue.push(msg);
                    self.ensure_plugged(ctx);
                }
            }
            Content::Interface6(Interface6Msg::PlugAck { session_id }) => {
                if self.state.session.state != PlugState::Plugging || *session_id != self.state.session.session_id {
                    return;
                }
                if let Some(t) = self.plug_timer.take() {
                    ctx.cancel_timer(t);
                }
                self.state.session.move_to(PlugState::Plugged, ctx.tick()).expect("plugging -> plugged");
                self.answer_waiters(ctx);
                for queued in std::mem::take(&mut self.queue) {
                    self.dispatch(queued, ctx);
                }
                self.maybe_unplug_idle(ctx);
            }
            Content::Interface6(Interface6Msg::UnplugAck { session_id }) => {
                if self.state.session.state == PlugState::Unplugging && *session_id == self.state.session.session_id {
                    self.finish_unplug(ctx);
                }
            }
            Content::Interface6(_) => self.on_result(msg, ctx),
            Content::Wfmc(WfmcMsg::ConnectorControl { action }) => {
                let action = *action;
                self.control(msg, action, ctx);
            }
            _ => {
                let _ = ctx.reply(&msg, Performative::NotUnderstood, WfmcMsg::error("NotUnderstood", "connector").into());
            }
        }
    }

    fn on_timer(&mut self, timer: TimerId, ctx: &mut Ctx<'_>) {
        if self.plug_timer != Some(timer) || self.state.session.state != PlugState::Plugging {
            return;
        }
        self.plug_timer = None;
        self.state.session.move_to(PlugState::Unplugged, ctx.tick()).expect("plugging -> unplugged");
        let detail = format!("no PlugAck from {} within {} ticks", self.state.config.endpoint, self.state.config.plug_timeout);
        for queued in std::mem::take(&mut self.queue) {
            let _ = ctx.reply(&queued, Performative::Failure, WesMsg::fault("PlugTimeout", detail.clone()).into());
        }
        for w in std::mem::take(&mut self.waiters) {
            let _ = ctx.reply(&w, Performative::Failure, WfmcMsg::error("PlugTimeout", detail.clone()).into());
        }
    }

    fn save_state(&self) -> Value {
        serde_json::to_value(&self.state).expect("connector state serializes")
    }
}
