//! Scripted runs: load processes, replay stimuli through the client
//! endpoint, write the delivery trace and a final-state report, optionally
//! compare against a golden trace.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bus::{AgentId, AgentKind, BusStats, BusTrace, DeliveryEvent, Payload, Performative};
use crate::clinical::ArchivedPrescription;
use crate::connector::{ConnectorAgent, PlugMode, UnplugPolicy, DEFAULT_PLUG_TIMEOUT};
use crate::content::{Content, Msg};
use crate::cpoe::CpoeMsg;
use crate::org::OrgSpecFile;
use crate::system::{demo_dataset_dir, reply_error, System, SystemConfig, SystemError};
use crate::wfms::{AgentManager, ConnectorAction, InstanceStatus, ProcessDefinition, ProcessInstance, TaskOutcome, WfmcMsg};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAULT: i32 = 1;
pub const EXIT_GOLDEN_MISMATCH: i32 = 2;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectorSettings {
    #[serde(default)]
    pub mode: PlugMode,
    #[serde(default)]
    pub unplug_policy: UnplugPolicy,
    #[serde(default = "default_plug_timeout")]
    pub plug_timeout: u64,
}

fn default_plug_timeout() -> u64 {
    DEFAULT_PLUG_TIMEOUT
}

impl Default for ConnectorSettings {
    fn default() -> Self {
        Self {
            mode: PlugMode::default(),
            unplug_policy: UnplugPolicy::default(),
            plug_timeout: DEFAULT_PLUG_TIMEOUT,
        }
    }
}

/// One scripted client action.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
#[allow(clippy::large_enum_variant)]
pub enum Stimulus {
    CreateInstance {
        def_id: String,
        #[serde(default)]
        variables: BTreeMap<String, Value>,
        #[serde(default)]
        expect: Option<Performative>,
    },
    CompleteWorkitem {
        workitem_id: String,
        #[serde(default)]
        data: BTreeMap<String, Value>,
        #[serde(default)]
        expect: Option<Performative>,
    },
    /// Any Interface 1/2/4/5 request to the Agent Manager.
    Wfmc {
        message: WfmcMsg,
        #[serde(default)]
        expect: Option<Performative>,
    },
    OrderEntry {
        agent: AgentKind,
        message: CpoeMsg,
        #[serde(default)]
        expect: Option<Performative>,
    },
    Connector {
        control: ConnectorAction,
        #[serde(default)]
        expect: Option<Performative>,
    },
    ExpectInstance {
        instance_id: String,
        status: InstanceStatus,
        #[serde(default)]
        variables: BTreeMap<String, Value>,
    },
    /// Writes a snapshot file next to the other outputs.
    Snapshot,
    /// Replaces the running system with one rebuilt from the last snapshot file.
    Restore,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Relative to the scenario file. Defaults to the bundled demo dataset.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Process definition files, relative to the scenario file.
    #[serde(default)]
    pub processes: Vec<PathBuf>,
    #[serde(default)]
    pub connector: ConnectorSettings,
    pub stimuli: Vec<Stimulus>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Load { path: String, message: String },
    #[error("stimulus {index}: {message}")]
    Reference { index: usize, message: String },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("{0}")]
    Io(String),
}

/// A scenario with its files read and references checked.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub dataset: PathBuf,
    pub process_xml: Vec<String>,
}

fn load_err(path: &Path, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Load {
        path: path.display().to_string(),
        message: message.into(),
    }
}

impl LoadedScenario {
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| load_err(path, e.to_string()))?;
        let scenario: Scenario = serde_json::from_str(&text).map_err(|e| load_err(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::resolve(scenario, base)
    }

    pub fn resolve(scenario: Scenario, base: &Path) -> Result<Self, ScenarioError> {
        let dataset = scenario.dataset.as_ref().map_or_else(demo_dataset_dir, |d| base.join(d));
        let mut process_xml = Vec::new();
        let mut def_ids = BTreeSet::new();
        for p in &scenario.processes {
            let full = base.join(p);
            let xml = std::fs::read_to_string(&full).map_err(|e| load_err(&full, e.to_string()))?;
            let def = ProcessDefinition::from_xml(&xml).map_err(|e| load_err(&full, e.to_string()))?;
            def_ids.insert(def.def_id);
            process_xml.push(xml);
        }
        check_references(&scenario.stimuli, &def_ids)?;
        Ok(Self {
            scenario,
            dataset,
            process_xml,
        })
    }
}

/// Stimuli may only name definitions, instances and snapshots that exist
/// by the time they run. Instance ids are assigned `wf-1`, `wf-2`, … in
/// creation order.
fn check_references(stimuli: &[Stimulus], def_ids: &BTreeSet<String>) -> Result<(), ScenarioError> {
    let mut created = 0usize;
    let mut snapshots = 0usize;
    let known = |id: &str, created: usize| {
        id.strip_prefix("wf-")
            .and_then(|n| n.parse::<usize>().ok())
            .is_some_and(|n| n >= 1 && n <= created)
    };
    for (index, s) in stimuli.iter().enumerate() {
        let fail = |message: String| Err(ScenarioError::Reference { index, message });
        match s {
            Stimulus::CreateInstance { def_id, .. } => {
                if !def_ids.contains(def_id) {
                    return fail(format!("process {def_id} is not loaded by this scenario"));
                }
                created += 1;
            }
            Stimulus::CompleteWorkitem { workitem_id, .. } => {
                let instance = workitem_id.split(':').next().unwrap_or_default();
                if !known(instance, created) {
                    return fail(format!("work item {workitem_id} belongs to an instance not created yet"));
                }
            }
            Stimulus::ExpectInstance { instance_id, .. } => {
                if !known(instance_id, created) {
                    return fail(format!("instance {instance_id} is not created yet"));
                }
            }
            Stimulus::Snapshot => snapshots += 1,
            Stimulus::Restore => {
                if snapshots == 0 {
                    return fail("restore before any snapshot".into());
                }
            }
            Stimulus::Wfmc { .. } | Stimulus::OrderEntry { .. } | Stimulus::Connector { .. } => {}
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub golden: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<PlugMode>,
    pub org_spec: Option<OrgSpecFile>,
    /// Stop right after the first snapshot stimulus.
    pub stop_at_snapshot: bool,
    /// Start from this snapshot and run only the stimuli after the first
    /// snapshot stimulus.
    pub resume: Option<PathBuf>,
}

/// Final state written next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub scenario: String,
    pub seed: u64,
    pub instances: BTreeMap<String, ProcessInstance>,
    pub archive: Vec<ArchivedPrescription>,
    pub faults: Vec<String>,
    pub stats: BusStats,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub trace: BusTrace<Content>,
    pub report: FinalReport,
    pub faults: Vec<String>,
    /// First divergence from the golden trace.
    pub divergence: Option<String>,
    pub trace_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    pub snapshot_path: Option<PathBuf>,
}

impl RunOutcome {
    pub fn trace_ndjson(&self) -> String {
        self.trace.to_ndjson()
    }
}

fn snapshot_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.snapshot.json"))
}

fn config_for(loaded: &LoadedScenario, opts: &RunOptions) -> SystemConfig {
    let s = &loaded.scenario;
    let mut config = SystemConfig::demo(opts.seed.unwrap_or(s.seed));
    config.dataset = loaded.dataset.clone();
    config.connector.mode = opts.mode.unwrap_or(s.connector.mode);
    config.connector.unplug_policy = s.connector.unplug_policy;
    config.connector.plug_timeout = s.connector.plug_timeout;
    if let Some(spec) = &opts.org_spec {
        config.org_spec = spec.clone();
    }
    config
}

struct Runner {
    sys: System,
    config: SystemConfig,
    events: Vec<DeliveryEvent<Content>>,
    copied: usize,
    faults: Vec<String>,
    out_dir: PathBuf,
    name: String,
    last_snapshot: Option<PathBuf>,
}

impl Runner {
    /// Copies deliveries not yet taken from the current bus, whose trace
    /// starts over after a restore.
    fn flush_trace(&mut self) {
        let trace = self.sys.bus().trace();
        self.events.extend(trace.events.into_iter().skip(self.copied));
        self.copied = self.sys.bus().trace_len();
    }

    fn check(&mut self, index: usize, what: &str, reply: Result<Msg, SystemError>, expect: Option<Performative>) {
        match reply {
            Err(e) => self.faults.push(format!("stimulus {index} ({what}): {}: {e}", e.code())),
            Ok(msg) => {
                let bad = match expect {
                    Some(p) => msg.performative != p,
                    None => matches!(msg.performative, Performative::Failure | Performative::Refuse | Performative::NotUnderstood),
                };
                if bad {
                    let detail = reply_error(&msg)
                        .map(|(code, detail)| format!("{code}: {detail}"))
                        .unwrap_or_else(|| msg.content.variant().to_string());
                    self.faults.push(format!("stimulus {index} ({what}): {} {detail}", msg.performative.as_str()));
                }
            }
        }
    }

    fn step(&mut self, index: usize, stimulus: &Stimulus) -> Result<(), ScenarioError> {
        let am = AgentManager::id();
        match stimulus {
            Stimulus::CreateInstance { def_id, variables, expect } => {
                let msg = WfmcMsg::CreateInstance {
                    def_id: def_id.clone(),
                    variables: variables.clone(),
                };
                let reply = self.sys.call(am, Performative::Request, msg.into());
                self.check(index, "create_instance", reply, *expect);
            }
            Stimulus::CompleteWorkitem { workitem_id, data, expect } => {
                let msg = WfmcMsg::CompleteWorkItem {
                    workitem_id: workitem_id.clone(),
                    data: data.clone(),
                };
                let reply = self.sys.call(am, Performative::Request, msg.into());
                self.check(index, "complete_workitem", reply, *expect);
            }
            Stimulus::Wfmc { message, expect } => {
                let reply = self.sys.call(am, Performative::Request, message.clone().into());
                self.check(index, "wfmc", reply, *expect);
            }
            Stimulus::OrderEntry { agent, message, expect } => {
                let performative = match message {
                    CpoeMsg::ContextRequest { .. } | CpoeMsg::DrugQuery { .. } | CpoeMsg::DraftQuery { .. } | CpoeMsg::ArchiveQuery { .. } | CpoeMsg::NoticeQuery { .. } => Performative::Query,
                    _ => Performative::Request,
                };
                let reply = self.sys.call(AgentId::main(*agent), performative, message.clone().into());
                self.check(index, "order_entry", reply, *expect);
            }
            Stimulus::Connector { control, expect } => {
                let reply = self.sys.call(ConnectorAgent::id(), Performative::Request, WfmcMsg::ConnectorControl { action: *control }.into());
                self.check(index, "connector", reply, *expect);
            }
            Stimulus::ExpectInstance {
                instance_id,
                status,
                variables,
            } => {
                let instances = self.sys.instances();
                match instances.get(instance_id) {
                    None => self.faults.push(format!("stimulus {index}: instance {instance_id} does not exist")),
                    Some(inst) => {
                        if inst.status != *status {
                            self.faults.push(format!("stimulus {index}: {instance_id} is {:?}, expected {status:?}", inst.status));
                        }
                        for (k, v) in variables {
                            if inst.variables.get(k) != Some(v) {
                                self.faults.push(format!(
                                    "stimulus {index}: {instance_id}.{k} is {}, expected {v}",
                                    inst.variables.get(k).map_or("unset".to_string(), Value::to_string)
                                ));
                            }
                        }
                    }
                }
            }
            Stimulus::Snapshot => {
                let path = snapshot_file(&self.out_dir, &self.name);
                self.sys.save_snapshot(&path)?;
                self.last_snapshot = Some(path);
            }
            Stimulus::Restore => {
                let path = self.last_snapshot.clone().expect("checked at load");
                self.flush_trace();
                self.sys = System::load_snapshot(self.config.clone(), &path)?;
                self.copied = 0;
            }
        }
        Ok(())
    }

    /// Suspended instances are faults too.
    fn instance_faults(&mut self) {
        for inst in self.sys.instances().values() {
            for ev in inst.history.iter().filter(|e| e.outcome == TaskOutcome::Faulted) {
                let code = ev.data.get("error").and_then(Value::as_str).unwrap_or("Fault");
                let detail = ev.data.get("detail").and_then(Value::as_str).unwrap_or("");
                self.faults.push(format!("{}/{}: {code}: {detail}", inst.instance_id, ev.task_id));
            }
        }
    }
}

/// First differing line between two NDJSON traces.
pub fn first_divergence(expected: &str, actual: &str) -> Option<String> {
    let mut e = expected.lines();
    let mut a = actual.lines();
    let mut line = 1;
    loop {
        match (e.next(), a.next()) {
            (None, None) => return None,
            (x, y) if x == y => line += 1,
            (x, y) => {
                return Some(format!(
                    "first divergence at line {line}\n  golden: {}\n  actual: {}",
                    x.unwrap_or("<end of trace>"),
                    y.unwrap_or("<end of trace>")
                ))
            }
        }
    }
}

pub fn run_scenario(loaded: &LoadedScenario, opts: &RunOptions) -> Result<RunOutcome, ScenarioError> {
    let s = &loaded.scenario;
    let config = config_for(loaded, opts);
    let out_dir = opts.out_dir.clone().unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| ScenarioError::Io(format!("{}: {e}", out_dir.display())))?;

    let first_snapshot = s.stimuli.iter().position(|x| matches!(x, Stimulus::Snapshot));
    let (sys, start) = match &opts.resume {
        Some(path) => {
            let Some(at) = first_snapshot else {
                return Err(ScenarioError::Reference {
                    index: 0,
                    message: "--resume needs a scenario with a snapshot stimulus".into(),
                });
            };
            (System::load_snapshot(config.clone(), path)?, at + 1)
        }
        None => (System::new(config.clone())?, 0),
    };
    let mut runner = Runner {
        sys,
        config,
        events: Vec::new(),
        copied: 0,
        faults: Vec::new(),
        out_dir: out_dir.clone(),
        name: s.name.clone(),
        last_snapshot: opts.resume.clone(),
    };
    if opts.resume.is_none() {
        for xml in &loaded.process_xml {
            let reply = runner.sys.call(AgentManager::id(), Performative::Request, WfmcMsg::LoadDefinition { xml: xml.clone() }.into());
            runner.check(0, "load_definition", reply, Some(Performative::Inform));
        }
    }
    for (index, stimulus) in s.stimuli.iter().enumerate().skip(start) {
        runner.step(index, stimulus)?;
        if opts.stop_at_snapshot && matches!(stimulus, Stimulus::Snapshot) {
            break;
        }
    }
    runner.flush_trace();
    runner.instance_faults();

    let trace = BusTrace { events: runner.events };
    let report = FinalReport {
        scenario: s.name.clone(),
        seed: runner.sys.config().seed,
        instances: runner.sys.instances(),
        archive: runner.sys.archive_entries(),
        faults: runner.faults.clone(),
        stats: runner.sys.bus().stats(),
    };
    let ndjson = trace.to_ndjson();
    let trace_path = out_dir.join(format!("{}.trace.ndjson", s.name));
    let report_path = out_dir.join(format!("{}.report.json", s.name));
    let write = |p: &Path, text: &str| std::fs::write(p, text).map_err(|e| ScenarioError::Io(format!("{}: {e}", p.display())));
    write(&trace_path, &ndjson)?;
    write(&report_path, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;

    let divergence = match &opts.golden {
        Some(g) => {
            let golden = std::fs::read_to_string(g).map_err(|e| ScenarioError::Io(format!("{}: {e}", g.display())))?;
            first_divergence(&golden, &ndjson)
        }
        None => None,
    };
    let exit_code = if !runner.faults.is_empty() {
        EXIT_FAULT
    } else if divergence.is_some() {
        EXIT_GOLDEN_MISMATCH
    } else {
        EXIT_OK
    };
    Ok(RunOutcome {
        exit_code,
        trace,
        report,
        faults: runner.faults,
        divergence,
        trace_path: Some(trace_path),
        report_path: Some(report_path),
        snapshot_path: runner.last_snapshot,
    })
}

/// Histories only: what must not depend on the scheduler seed or on when
/// the connector plugs.
pub fn histories(report: &FinalReport) -> BTreeMap<String, (InstanceStatus, Vec<crate::wfms::HistoryEvent>)> {
    report
        .instances
        .iter()
        .map(|(id, i)| (id.clone(), (i.status, i.history.clone())))
        .collect()
}
