//! Agent directory and deterministic in-memory message bus.
//!
//! Every agent is an isolated state machine reached only through its mailbox.
//! The scheduler is cooperative: each tick it picks one non-empty mailbox with
//! a seeded generator and delivers the head message, so a run is a pure
//! function of the registered agents, the injected stimuli and the seed.
//! Mailboxes are FIFO per receiver, which gives per-pair FIFO for free.

mod audit;
mod message;
mod trace;

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use audit::{AuditDecision, AuditEntry, Authorization, SendPolicy};
pub use message::{
    AclMessage, AgentId, AgentKind, Payload, Performative, WireError, CONTENT_LANGUAGE,
};
pub use trace::{first_divergence, BusTrace, DeliveryEvent, TraceViolation};

pub const DEFAULT_TICK_BUDGET: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("agent {0} is already registered")]
    DuplicateAgent(AgentId),
    #[error("sender {0} is not registered")]
    UnknownSender(AgentId),
    #[error("receiver {0} is not registered")]
    UnknownReceiver(AgentId),
    #[error("content variant {variant} is not legal for ontology `{ontology}`")]
    OntologyMismatch { ontology: String, variant: String },
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("no quiescence after {0} scheduler steps")]
    NonQuiescence(u64),
    #[error("bus is not quiescent: {0}")]
    NotQuiescent(String),
    #[error("no agents registered")]
    Empty,
}

/// Behaviour of an agent. Handlers run one message at a time.
pub trait Agent<C: Payload>: Send {
    fn handle(&mut self, msg: AclMessage<C>, ctx: &mut Context<'_, C>);

    fn on_timer(&mut self, _timer: TimerId, _ctx: &mut Context<'_, C>) {}

    /// Serializable state for snapshots. Stateless agents keep the default.
    fn save_state(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Adapter turning a closure into an agent.
pub struct FnAgent<F>(pub F);

impl<C, F> Agent<C> for FnAgent<F>
where
    C: Payload,
    F: FnMut(AclMessage<C>, &mut Context<'_, C>) + Send,
{
    fn handle(&mut self, msg: AclMessage<C>, ctx: &mut Context<'_, C>) {
        (self.0)(msg, ctx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegistrationToken(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimerId(pub u64);

/// Returned for every accepted send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub conversation_id: String,
    pub reply_with: Option<String>,
    pub enqueued_at: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct BusConfig {
    pub seed: u64,
    pub tick_budget: u64,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tick_budget: DEFAULT_TICK_BUDGET,
        }
    }
}

struct Slot<C: Payload> {
    agent: Option<Box<dyn Agent<C>>>,
    mailbox: VecDeque<AclMessage<C>>,
    token: RegistrationToken,
    retiring: bool,
}

/// Scheduler counters and generator position, enough to resume a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusState {
    pub seed: u64,
    /// Generator word position, decimal.
    pub rng_word_pos: String,
    pub tick: u64,
    pub next_seq: u64,
    pub next_conversation: u64,
    pub next_token: u64,
    pub next_timer: u64,
    pub next_registration: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusStats {
    pub delivered: u64,
    pub denied: u64,
    pub registered_agents: usize,
}

pub struct Bus<C: Payload> {
    slots: BTreeMap<AgentId, Slot<C>>,
    policy: Option<Arc<dyn SendPolicy<C>>>,
    audit: Vec<AuditEntry>,
    trace: Vec<DeliveryEvent<C>>,
    timers: BTreeMap<(u64, TimerId), AgentId>,
    rng: ChaCha8Rng,
    seed: u64,
    tick_budget: u64,
    tick: u64,
    next_seq: u64,
    next_conversation: u64,
    next_token: u64,
    next_timer: u64,
    next_registration: u64,
    denied: u64,
}

impl<C: Payload> Bus<C> {
    pub fn new(config: BusConfig) -> Self {
        Self {
            slots: BTreeMap::new(),
            policy: None,
            audit: Vec::new(),
            trace: Vec::new(),
            timers: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            seed: config.seed,
            tick_budget: config.tick_budget,
            tick: 0,
            next_seq: 0,
            next_conversation: 0,
            next_token: 0,
            next_timer: 0,
            next_registration: 0,
            denied: 0,
        }
    }

    pub fn with_seed(seed: u64) -> Self {
        Self::new(BusConfig {
            seed,
            ..BusConfig::default()
        })
    }

    pub fn set_tick_budget(&mut self, budget: u64) {
        self.tick_budget = budget;
    }

    pub fn install_policy(&mut self, policy: Arc<dyn SendPolicy<C>>) {
        self.policy = Some(policy);
    }

    pub fn register_agent(
        &mut self,
        id: AgentId,
        agent: Box<dyn Agent<C>>,
    ) -> Result<RegistrationToken, BusError> {
        if self.slots.contains_key(&id) {
            return Err(BusError::DuplicateAgent(id));
        }
        let token = RegistrationToken(self.next_registration);
        self.next_registration += 1;
        self.slots.insert(
            id,
            Slot {
                agent: Some(agent),
                mailbox: VecDeque::new(),
                token,
                retiring: false,
            },
        );
        Ok(token)
    }

    pub fn register_fn<F>(&mut self, id: AgentId, f: F) -> Result<RegistrationToken, BusError>
    where
        F: FnMut(AclMessage<C>, &mut Context<'_, C>) + Send + 'static,
    {
        self.register_agent(id, Box::new(FnAgent(f)))
    }

    /// Live agents in directory order.
    pub fn directory(&self) -> Vec<AgentId> {
        self.slots
            .iter()
            .filter(|(_, s)| !s.retiring)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn by_kind(&self, kind: AgentKind) -> Vec<AgentId> {
        self.directory().into_iter().filter(|id| id.kind == kind).collect()
    }

    pub fn is_registered(&self, id: &AgentId) -> bool {
        self.slots.get(id).is_some_and(|s| !s.retiring)
    }

    pub fn registration(&self, id: &AgentId) -> Option<RegistrationToken> {
        self.slots.get(id).map(|s| s.token)
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn next_conversation_id(&mut self) -> String {
        self.next_conversation += 1;
        format!("conv-{}", self.next_conversation)
    }

    pub fn next_reply_token(&mut self) -> String {
        self.next_token += 1;
        format!("rw-{}", self.next_token)
    }

    /// Injects a stimulus from outside any handler.
    pub fn send(&mut self, msg: AclMessage<C>) -> Result<Receipt, BusError> {
        self.route(msg)
    }

    fn route(&mut self, msg: AclMessage<C>) -> Result<Receipt, BusError> {
        let checked = self.structural_check(&msg).and_then(|()| match &self.policy {
            None => Ok(String::new()),
            Some(policy) => match policy.authorize(&msg) {
                Authorization::Allowed { organization } => Ok(organization),
                Authorization::Denied { reason } => Err(BusError::Unauthorized(reason)),
            },
        });
        let (decision, detail) = match &checked {
            Ok(org) => (AuditDecision::Allowed, org.clone()),
            Err(e) => (AuditDecision::Denied, e.to_string()),
        };
        self.audit.push(AuditEntry {
            tick: self.tick,
            summary: msg.summary(),
            sender: msg.sender.clone(),
            receiver: msg.receiver.clone(),
            ontology: msg.ontology.clone(),
            decision,
            detail,
        });
        if let Err(e) = checked {
            self.denied += 1;
            return Err(e);
        }
        let receipt = Receipt {
            conversation_id: msg.conversation_id.clone(),
            reply_with: msg.reply_with.clone(),
            enqueued_at: self.tick,
        };
        self.slots
            .get_mut(&msg.receiver)
            .expect("receiver checked above")
            .mailbox
            .push_back(msg);
        Ok(receipt)
    }

    fn structural_check(&self, msg: &AclMessage<C>) -> Result<(), BusError> {
        if !self.is_registered(&msg.sender) {
            return Err(BusError::UnknownSender(msg.sender.clone()));
        }
        if msg.ontology != msg.content.ontology() {
            return Err(BusError::OntologyMismatch {
                ontology: msg.ontology.clone(),
                variant: msg.content.variant().to_string(),
            });
        }
        if !self.is_registered(&msg.receiver) {
            return Err(BusError::UnknownReceiver(msg.receiver.clone()));
        }
        Ok(())
    }

    pub fn pending_messages(&self) -> usize {
        self.slots.values().map(|s| s.mailbox.len()).sum()
    }

    pub fn pending_timers(&self) -> usize {
        self.timers.len()
    }

    /// Delivers until every mailbox is empty and no timer is pending.
    ///
    /// Returns the deliveries made by this call; the bus keeps the
    /// cumulative trace as well.
    pub fn run_until_quiescent(&mut self) -> Result<BusTrace<C>, BusError> {
        if self.slots.is_empty() {
            return Err(BusError::Empty);
        }
        let start = self.trace.len();
        let mut steps = 0u64;
        loop {
            if let Some((&(due, timer), _)) = self.timers.iter().next() {
                let idle = self.pending_messages() == 0;
                if due <= self.tick || idle {
                    if steps >= self.tick_budget {
                        return Err(BusError::NonQuiescence(self.tick_budget));
                    }
                    steps += 1;
                    let owner = self.timers.remove(&(due, timer)).expect("timer present");
                    self.tick = self.tick.max(due);
                    self.fire_timer(owner, timer);
                    continue;
                }
            }
            let ready: Vec<AgentId> = self
                .slots
                .iter()
                .filter(|(_, s)| !s.mailbox.is_empty())
                .map(|(id, _)| id.clone())
                .collect();
            if ready.is_empty() {
                break;
            }
            if steps >= self.tick_budget {
                return Err(BusError::NonQuiescence(self.tick_budget));
            }
            steps += 1;
            let pick = self.rng.gen_range(0..ready.len());
            self.deliver(&ready[pick]);
        }
        Ok(BusTrace {
            events: self.trace[start..].to_vec(),
        })
    }

    fn deliver(&mut self, receiver: &AgentId) {
        let slot = self.slots.get_mut(receiver).expect("ready agent exists");
        let msg = slot.mailbox.pop_front().expect("ready mailbox non-empty");
        let mut agent = slot.agent.take().expect("agent not re-entered");
        self.tick += 1;
        self.trace.push(DeliveryEvent {
            seq_no: self.next_seq,
            deliver_tick: self.tick,
            message: msg.clone(),
        });
        self.next_seq += 1;
        {
            let mut ctx = Context {
                bus: self,
                me: receiver.clone(),
            };
            agent.handle(msg, &mut ctx);
        }
        self.restore_slot(receiver, agent);
    }

    fn fire_timer(&mut self, owner: AgentId, timer: TimerId) {
        let Some(slot) = self.slots.get_mut(&owner) else {
            return;
        };
        let Some(mut agent) = slot.agent.take() else {
            return;
        };
        {
            let mut ctx = Context {
                bus: self,
                me: owner.clone(),
            };
            agent.on_timer(timer, &mut ctx);
        }
        self.restore_slot(&owner, agent);
    }

    fn restore_slot(&mut self, id: &AgentId, agent: Box<dyn Agent<C>>) {
        if let Some(slot) = self.slots.get_mut(id) {
            slot.agent = Some(agent);
            if slot.retiring && slot.mailbox.is_empty() {
                self.slots.remove(id);
                self.timers.retain(|_, owner| owner != id);
            }
        }
    }

    fn retire(&mut self, id: &AgentId) {
        if let Some(slot) = self.slots.get_mut(id) {
            slot.retiring = true;
            if slot.mailbox.is_empty() && slot.agent.is_some() {
                self.slots.remove(id);
                self.timers.retain(|_, owner| owner != id);
            }
        }
    }

    /// Cumulative delivery log since construction (or restore).
    pub fn trace(&self) -> BusTrace<C> {
        BusTrace {
            events: self.trace.clone(),
        }
    }

    pub fn trace_len(&self) -> usize {
        self.trace.len()
    }

    pub fn audit_log(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn stats(&self) -> BusStats {
        BusStats {
            delivered: self.trace.len() as u64,
            denied: self.denied,
            registered_agents: self.directory().len(),
        }
    }

    pub fn agent_states(&self) -> BTreeMap<AgentId, serde_json::Value> {
        self.slots
            .iter()
            .filter(|(_, s)| !s.retiring)
            .map(|(id, s)| {
                let state = s
                    .agent
                    .as_ref()
                    .map(|a| a.save_state())
                    .unwrap_or(serde_json::Value::Null);
                (id.clone(), state)
            })
            .collect()
    }

    /// Scheduler state; only meaningful at quiescence.
    pub fn save_state(&self) -> Result<BusState, BusError> {
        if self.pending_messages() > 0 {
            return Err(BusError::NotQuiescent(format!(
                "{} messages in flight",
                self.pending_messages()
            )));
        }
        if !self.timers.is_empty() {
            return Err(BusError::NotQuiescent(format!(
                "{} timers pending",
                self.timers.len()
            )));
        }
        Ok(BusState {
            seed: self.seed,
            rng_word_pos: self.rng.get_word_pos().to_string(),
            tick: self.tick,
            next_seq: self.next_seq,
            next_conversation: self.next_conversation,
            next_token: self.next_token,
            next_timer: self.next_timer,
            next_registration: self.next_registration,
        })
    }

    /// Resumes counters and generator position from a saved state.
    pub fn load_state(&mut self, state: &BusState) -> Result<(), String> {
        let pos: u128 = state
            .rng_word_pos
            .parse()
            .map_err(|_| format!("bad generator position `{}`", state.rng_word_pos))?;
        self.seed = state.seed;
        self.rng = ChaCha8Rng::seed_from_u64(state.seed);
        self.rng.set_word_pos(pos);
        self.tick = state.tick;
        self.next_seq = state.next_seq;
        self.next_conversation = state.next_conversation;
        self.next_token = state.next_token;
        self.next_timer = state.next_timer;
        self.next_registration = self.next_registration.max(state.next_registration);
        Ok(())
    }
}

/// Handler-side view of the bus.
pub struct Context<'a, C: Payload> {
    bus: &'a mut Bus<C>,
    me: AgentId,
}

impl<C: Payload> Context<'_, C> {
    pub fn me(&self) -> &AgentId {
        &self.me
    }

    pub fn tick(&self) -> u64 {
        self.bus.tick
    }

    pub fn is_registered(&self, id: &AgentId) -> bool {
        self.bus.is_registered(id)
    }

    pub fn new_conversation(&mut self) -> String {
        self.bus.next_conversation_id()
    }

    /// Sends a fully built envelope. The sender is forced to this agent.
    pub fn post(&mut self, mut msg: AclMessage<C>) -> Result<Receipt, BusError> {
        msg.sender = self.me.clone();
        self.bus.route(msg)
    }

    /// Opens a new conversation with a request that expects a reply.
    pub fn request(
        &mut self,
        receiver: AgentId,
        performative: Performative,
        content: C,
    ) -> Result<Receipt, BusError> {
        let conversation = self.bus.next_conversation_id();
        self.request_in(&conversation, receiver, performative, content)
    }

    /// Sends a request inside an existing conversation with a fresh reply token.
    pub fn request_in(
        &mut self,
        conversation_id: &str,
        receiver: AgentId,
        performative: Performative,
        content: C,
    ) -> Result<Receipt, BusError> {
        let token = self.bus.next_reply_token();
        let msg = AclMessage::new(performative, self.me.clone(), receiver, conversation_id, content)
            .with_reply_with(token);
        self.bus.route(msg)
    }

    /// Answers `to` in its conversation, linking `in_reply_to`.
    pub fn reply(
        &mut self,
        to: &AclMessage<C>,
        performative: Performative,
        content: C,
    ) -> Result<Receipt, BusError> {
        let msg = AclMessage::new(
            performative,
            self.me.clone(),
            to.sender.clone(),
            to.conversation_id.clone(),
            content,
        )
        .with_in_reply_to(to.reply_with.clone());
        self.bus.route(msg)
    }

    /// One-way message in a new conversation.
    pub fn tell(
        &mut self,
        receiver: AgentId,
        performative: Performative,
        content: C,
    ) -> Result<Receipt, BusError> {
        let conversation = self.bus.next_conversation_id();
        let msg = AclMessage::new(performative, self.me.clone(), receiver, conversation, content);
        self.bus.route(msg)
    }

    pub fn spawn(
        &mut self,
        id: AgentId,
        agent: Box<dyn Agent<C>>,
    ) -> Result<RegistrationToken, BusError> {
        self.bus.register_agent(id, agent)
    }

    /// Removes an agent from the directory once its mailbox drains.
    pub fn retire(&mut self, id: &AgentId) {
        if *id == self.me {
            if let Some(slot) = self.bus.slots.get_mut(id) {
                slot.retiring = true;
            }
        } else {
            self.bus.retire(id);
        }
    }

    pub fn set_timer(&mut self, delay: u64) -> TimerId {
        let id = TimerId(self.bus.next_timer);
        self.bus.next_timer += 1;
        let due = self.bus.tick + delay;
        self.bus.timers.insert((due, id), self.me.clone());
        id
    }

    pub fn cancel_timer(&mut self, timer: TimerId) {
        self.bus.timers.retain(|(_, id), _| *id != timer);
    }
}
