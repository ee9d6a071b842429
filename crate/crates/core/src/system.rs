//! The assembled deployment: every agent on one bus behind the
//! organizational policy, plus the External endpoints that stand in for
//! clients and clinical users.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bus::{AclMessage, Agent, AgentId, AgentKind, Bus, BusConfig, BusError, BusState, Performative, Receipt, DEFAULT_TICK_BUDGET};
use crate::cdss::{ErrorsDetectionAgent, InteractionDetectionAgent};
use crate::clinical::{load_dataset, ArchiveStore, ArchivedPrescription, ClinicalError, DataCatalog, ProtocolStore};
use crate::connector::{ConnectorAgent, ConnectorConfig, PlugMode};
use crate::content::{Content, Msg};
use crate::cpoe::{
    AdminModeAgent, Audience, CpoeMsg, DrugSelectingAgent, InformationCollectionAgent, InformationDeliveryAgent,
    PrescriptionAnalyzerAgent, ProtocolRecallAgent, StockCheckerAgent, TherapeuticFileAgent, DEFAULT_AUDIENCES,
};
use crate::org::{OrgPolicy, OrgSpecFile, SpecError};
use crate::wfms::{
    AgentManager, ApplicationRegistry, ClinicalWorkflowAgent, ConnectorAction, MonitoringView, ProcessInstance, WesMsg, WfmcMsg,
};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

/// Instance name of the External endpoint that issues stimuli.
pub const CLIENT: &str = "client";

/// Bundled data shipped with the crate.
pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn demo_dataset_dir() -> PathBuf {
    data_dir().join("demo")
}

pub fn processes_dir() -> PathBuf {
    data_dir().join("processes")
}

pub fn demo_process_xml(name: &str) -> std::io::Result<String> {
    std::fs::read_to_string(processes_dir().join(format!("{name}.xml")))
}

#[derive(Debug, thiserror::Error)]
pub enum SystemError {
    #[error(transparent)]
    Clinical(#[from] ClinicalError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("no reply to {0}")]
    NoReply(String),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("{0}")]
    Io(String),
}

impl SystemError {
    pub fn code(&self) -> &'static str {
        match self {
            SystemError::Clinical(e) => e.code(),
            SystemError::Spec(_) => "SpecError",
            SystemError::Bus(BusError::Unauthorized(_)) => "Unauthorized",
            SystemError::Bus(BusError::UnknownReceiver(_)) => "UnknownReceiver",
            SystemError::Bus(BusError::OntologyMismatch { .. }) => "OntologyMismatch",
            SystemError::Bus(BusError::NonQuiescence(_)) => "NonQuiescence",
            SystemError::Bus(_) => "BusError",
            SystemError::NoReply(_) => "NoReply",
            SystemError::CorruptSnapshot(_) => "CorruptSnapshot",
            SystemError::Io(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub seed: u64,
    pub tick_budget: u64,
    pub dataset: PathBuf,
    pub org_spec: OrgSpecFile,
    pub connector: ConnectorConfig,
    pub audiences: Vec<Audience>,
    /// Mirror archive entries to this directory.
    pub archive_dir: Option<PathBuf>,
}

impl SystemConfig {
    pub fn demo(seed: u64) -> Self {
        Self {
            seed,
            tick_budget: DEFAULT_TICK_BUDGET,
            dataset: demo_dataset_dir(),
            org_spec: OrgSpecFile::default_spec(),
            connector: ConnectorConfig::default(),
            audiences: DEFAULT_AUDIENCES.to_vec(),
            archive_dir: None,
        }
    }
}

/// External endpoint: records what it is sent, never answers.
struct Recorder {
    inbox: Arc<Mutex<Vec<Msg>>>,
}

impl Agent<Content> for Recorder {
    fn handle(&mut self, msg: Msg, _ctx: &mut crate::content::Ctx<'_>) {
        self.inbox.lock().expect("inbox lock").push(msg);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub id: AgentId,
    pub state: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotBody {
    pub bus: BusState,
    pub agents: Vec<AgentSnapshot>,
}

/// Persisted form: the body plus its version and SHA-256 over the body's
/// compact JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format_version: u32,
    pub content_hash: String,
    pub body: SnapshotBody,
}

fn body_hash(body: &Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_string(body).expect("json value serializes").as_bytes()))
}

impl Snapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    /// Parses and checks version and hash.
    pub fn from_json(text: &str) -> Result<Self, SystemError> {
        let raw: Value = serde_json::from_str(text).map_err(|e| SystemError::CorruptSnapshot(e.to_string()))?;
        let version = raw.get("format_version").and_then(Value::as_u64);
        if version != Some(u64::from(SNAPSHOT_FORMAT_VERSION)) {
            return Err(SystemError::CorruptSnapshot(format!("unsupported format_version {version:?}")));
        }
        let body = raw.get("body").ok_or_else(|| SystemError::CorruptSnapshot("missing body".into()))?;
        let stored = raw.get("content_hash").and_then(Value::as_str).unwrap_or_default();
        let actual = body_hash(body);
        if stored != actual {
            return Err(SystemError::CorruptSnapshot(format!("content hash mismatch: stored {stored}, computed {actual}")));
        }
        let body: SnapshotBody = serde_json::from_value(body.clone()).map_err(|e| SystemError::CorruptSnapshot(e.to_string()))?;
        Ok(Self {
            format_version: SNAPSHOT_FORMAT_VERSION,
            content_hash: actual,
            body,
        })
    }
}

pub struct System {
    bus: Bus<Content>,
    catalog: Arc<DataCatalog>,
    apps: Arc<ApplicationRegistry>,
    inbox: Arc<Mutex<Vec<Msg>>>,
    config: SystemConfig,
}

fn external(name: &str) -> AgentId {
    AgentId::new(AgentKind::External, name)
}

impl System {
    /// Fresh deployment over the configured dataset.
    pub fn new(config: SystemConfig) -> Result<Self, SystemError> {
        let mut sys = Self::empty(config)?;
        let c = sys.catalog.clone();
        let archive = match &sys.config.archive_dir {
            Some(dir) => ArchiveStore::with_dir(dir),
            None => ArchiveStore::in_memory(),
        };
        let agents: Vec<(AgentId, Box<dyn Agent<Content>>)> = vec![
            (AgentId::main(AgentKind::Ica), Box::new(InformationCollectionAgent::new(c.clone()))),
            (AgentId::main(AgentKind::Dsa), Box::new(DrugSelectingAgent::new(c.clone()))),
            (AgentId::main(AgentKind::Psca), Box::new(StockCheckerAgent::new(c.clone()))),
            (AgentId::main(AgentKind::Amsa), Box::new(AdminModeAgent::new(c.clone()))),
            (AgentId::main(AgentKind::Paa), Box::new(PrescriptionAnalyzerAgent::new(c.clone()))),
            (AgentId::main(AgentKind::Deda), Box::new(ErrorsDetectionAgent::new(c.clone()))),
            (AgentId::main(AgentKind::Ddida), Box::new(InteractionDetectionAgent::new(c.clone()))),
            (AgentId::main(AgentKind::Pra), Box::new(ProtocolRecallAgent::new(ProtocolStore::seeded(&c.protocol_seed)))),
            (AgentId::main(AgentKind::Ida), Box::new(InformationDeliveryAgent::new(sys.config.audiences.clone()))),
            (AgentId::main(AgentKind::Tfa), Box::new(TherapeuticFileAgent::new(archive))),
            (AgentManager::id(), Box::new(AgentManager::new(sys.apps.clone()))),
            (ConnectorAgent::id(), Box::new(ConnectorAgent::new(sys.config.connector.clone()))),
        ];
        for (id, agent) in agents {
            sys.bus.register_agent(id, agent)?;
        }
        sys.register_externals()?;
        if sys.config.connector.mode == PlugMode::Eager {
            sys.call(ConnectorAgent::id(), Performative::Request, WfmcMsg::ConnectorControl { action: ConnectorAction::Plug }.into())?;
        }
        Ok(sys)
    }

    fn empty(config: SystemConfig) -> Result<Self, SystemError> {
        config.org_spec.validate()?;
        let catalog = Arc::new(load_dataset(&config.dataset)?);
        let mut bus = Bus::new(BusConfig {
            seed: config.seed,
            tick_budget: config.tick_budget,
        });
        bus.install_policy(Arc::new(OrgPolicy::new(config.org_spec.clone())));
        Ok(Self {
            bus,
            catalog,
            apps: Arc::new(ApplicationRegistry::demo()),
            inbox: Arc::new(Mutex::new(Vec::new())),
            config,
        })
    }

    fn register_externals(&mut self) -> Result<(), SystemError> {
        let mut names = vec![CLIENT.to_string()];
        names.extend([Audience::Pharmacist, Audience::Nurse, Audience::Prescriber].map(|a| a.as_str().to_string()));
        for name in names {
            let id = external(&name);
            if !self.bus.is_registered(&id) {
                self.bus.register_agent(id, Box::new(Recorder { inbox: self.inbox.clone() }))?;
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn bus(&self) -> &Bus<Content> {
        &self.bus
    }

    pub fn bus_mut(&mut self) -> &mut Bus<Content> {
        &mut self.bus
    }

    pub fn catalog(&self) -> &Arc<DataCatalog> {
        &self.catalog
    }

    pub fn client() -> AgentId {
        external(CLIENT)
    }

    /// Sends from the client, runs to quiescence, returns the reply.
    pub fn call(&mut self, receiver: AgentId, performative: Performative, content: Content) -> Result<Msg, SystemError> {
        let conversation = self.bus.next_conversation_id();
        let token = self.bus.next_reply_token();
        let msg = AclMessage::new(performative, Self::client(), receiver, conversation, content).with_reply_with(token.clone());
        let summary = msg.summary();
        self.bus.send(msg)?;
        self.bus.run_until_quiescent()?;
        let inbox = self.inbox.lock().expect("inbox lock");
        inbox
            .iter()
            .rev()
            .find(|m| m.in_reply_to.as_deref() == Some(token.as_str()))
            .cloned()
            .ok_or(SystemError::NoReply(summary))
    }

    /// Sends a raw envelope without running the scheduler.
    pub fn send(&mut self, msg: Msg) -> Result<Receipt, BusError> {
        self.bus.send(msg)
    }

    pub fn run(&mut self) -> Result<(), SystemError> {
        self.bus.run_until_quiescent()?;
        Ok(())
    }

    /// Everything delivered to External endpoints, in delivery order.
    pub fn external_inbox(&self) -> Vec<Msg> {
        self.inbox.lock().expect("inbox lock").clone()
    }

    /// Notices delivered to an audience endpoint.
    pub fn notices_for(&self, audience: Audience) -> Vec<Msg> {
        let endpoint = InformationDeliveryAgent::endpoint(audience);
        self.external_inbox()
            .into_iter()
            .filter(|m| m.receiver == endpoint && matches!(m.content, Content::Cpoe(CpoeMsg::DeliveryNoticeMsg { .. })))
            .collect()
    }

    /// Interface 5 view, completed with bus statistics.
    pub fn monitoring(&mut self, def_id: Option<String>) -> Result<MonitoringView, SystemError> {
        let reply = self.call(AgentManager::id(), Performative::Query, WfmcMsg::AdminQuery { def_id }.into())?;
        let mut view = match reply.content {
            Content::Wfmc(WfmcMsg::Monitoring { view }) => view,
            other => return Err(SystemError::NoReply(format!("unexpected {other:?}"))),
        };
        view.bus = Some(self.bus.stats());
        Ok(view)
    }

    fn agent_state(&self, id: &AgentId) -> Option<Value> {
        self.bus.agent_states().remove(id)
    }

    /// Every instance the Agent Manager knows, by id.
    pub fn instances(&self) -> BTreeMap<String, ProcessInstance> {
        self.agent_state(&AgentManager::id())
            .and_then(|s| s.get("instances").cloned())
            .and_then(|v| serde_json::from_value(v).ok())
            .unwrap_or_default()
    }

    pub fn archive_entries(&self) -> Vec<ArchivedPrescription> {
        self.agent_state(&AgentId::main(AgentKind::Tfa))
            .and_then(|s| serde_json::from_value::<ArchiveStore>(s).ok())
            .map(|store| store.entries().to_vec())
            .unwrap_or_default()
    }

    /// Requires quiescence: no queued message and no pending timer.
    pub fn snapshot(&self) -> Result<Snapshot, SystemError> {
        let bus = self.bus.save_state()?;
        let agents = self
            .bus
            .agent_states()
            .into_iter()
            .map(|(id, state)| AgentSnapshot { id, state })
            .collect();
        let body = SnapshotBody { bus, agents };
        let hash = body_hash(&serde_json::to_value(&body).expect("snapshot body serializes"));
        Ok(Snapshot {
            format_version: SNAPSHOT_FORMAT_VERSION,
            content_hash: hash,
            body,
        })
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<Snapshot, SystemError> {
        let snap = self.snapshot()?;
        std::fs::write(path, snap.to_json()).map_err(|e| SystemError::Io(format!("{}: {e}", path.display())))?;
        Ok(snap)
    }

    pub fn load_snapshot(config: SystemConfig, path: &Path) -> Result<Self, SystemError> {
        let text = std::fs::read_to_string(path).map_err(|e| SystemError::Io(format!("{}: {e}", path.display())))?;
        Self::restore(config, &Snapshot::from_json(&text)?)
    }

    /// Rebuilds a deployment from a snapshot. Dataset, policy and
    /// application bindings come from `config`; everything else from the
    /// snapshot.
    pub fn restore(config: SystemConfig, snapshot: &Snapshot) -> Result<Self, SystemError> {
        let mut sys = Self::empty(config)?;
        let c = sys.catalog.clone();
        let corrupt = |id: &AgentId, e: String| SystemError::CorruptSnapshot(format!("{id}: {e}"));
        for AgentSnapshot { id, state } in &snapshot.body.agents {
            let agent: Box<dyn Agent<Content>> = match id.kind {
                AgentKind::Ica => Box::new(InformationCollectionAgent::new(c.clone())),
                AgentKind::Dsa => Box::new(DrugSelectingAgent::new(c.clone())),
                AgentKind::Psca => Box::new(StockCheckerAgent::new(c.clone())),
                AgentKind::Amsa => Box::new(AdminModeAgent::new(c.clone())),
                AgentKind::Deda => Box::new(ErrorsDetectionAgent::new(c.clone())),
                AgentKind::Ddida => Box::new(InteractionDetectionAgent::new(c.clone())),
                AgentKind::Paa => Box::new(PrescriptionAnalyzerAgent::from_state(c.clone(), state).map_err(|e| corrupt(id, e))?),
                AgentKind::Pra => Box::new(ProtocolRecallAgent::from_state(state).map_err(|e| corrupt(id, e))?),
                AgentKind::Ida => Box::new(InformationDeliveryAgent::from_state(state).map_err(|e| corrupt(id, e))?),
                AgentKind::Tfa => Box::new(TherapeuticFileAgent::from_state(state, sys.config.archive_dir.clone()).map_err(|e| corrupt(id, e))?),
                AgentKind::AgentManager => Box::new(AgentManager::from_state(state, sys.apps.clone()).map_err(|e| corrupt(id, e))?),
                AgentKind::ConnectorAgent => Box::new(ConnectorAgent::from_state(state).map_err(|e| corrupt(id, e))?),
                AgentKind::ClinicalWorkflowAgent => Box::new(ClinicalWorkflowAgent::from_state(state, sys.apps.clone()).map_err(|e| corrupt(id, e))?),
                AgentKind::External => Box::new(Recorder { inbox: sys.inbox.clone() }),
            };
            sys.bus.register_agent(id.clone(), agent)?;
        }
        sys.register_externals()?;
        sys.bus.load_state(&snapshot.body.bus).map_err(SystemError::CorruptSnapshot)?;
        Ok(sys)
    }
}

/// A reply's error code and detail, when it carries one.
pub fn reply_error(msg: &Msg) -> Option<(String, String)> {
    match &msg.content {
        Content::Cpoe(CpoeMsg::Failure { code, detail })
        | Content::Wfmc(WfmcMsg::WfmcError { code, detail })
        | Content::Wes(WesMsg::WesFault { code, detail })
        | Content::Interface6(crate::connector::Interface6Msg::Fault { code, detail }) => Some((code.clone(), detail.clone())),
        _ => None,
    }
}
