use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::definition::ProcessDefinition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Running,
    Completed,
    Suspended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOutcome {
    Completed,
    Faulted,
}

/// One entry of an instance history. No ticks, so histories compare across
/// seeds and plugging modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub task_id: String,
    pub outcome: TaskOutcome,
    pub data: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessInstance {
    pub instance_id: String,
    pub def_id: String,
    pub version: u32,
    pub current_tasks: BTreeSet<String>,
    pub variables: BTreeMap<String, Value>,
    pub history: Vec<HistoryEvent>,
    pub status: InstanceStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkItemState {
    Offered,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkItem {
    pub workitem_id: String,
    pub instance_id: String,
    pub task_id: String,
    pub performer_role: String,
    pub state: WorkItemState,
}

impl WorkItem {
    pub fn id_for(instance_id: &str, task_id: &str) -> String {
        format!("{instance_id}:{task_id}")
    }
}

/// What one step of the engine did.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvanceReport {
    pub instance_id: String,
    pub activated: Vec<String>,
    pub actions: Vec<String>,
    pub status: Option<InstanceStatus>,
}

impl ProcessInstance {
    pub fn start(instance_id: impl Into<String>, def: &ProcessDefinition, variables: BTreeMap<String, Value>) -> Self {
        Self {
            instance_id: instance_id.into(),
            def_id: def.def_id.clone(),
            version: def.version,
            current_tasks: BTreeSet::from([def.start_task.clone()]),
            variables,
            history: Vec::new(),
            status: InstanceStatus::Running,
        }
    }

    pub fn is_live(&self) -> bool {
        self.status != InstanceStatus::Completed
    }

    /// Records `task_id` as done, merges `data` into the variables and
    /// activates successors whose guards hold. Returns the newly active tasks.
    pub fn complete_task(&mut self, def: &ProcessDefinition, task_id: &str, data: BTreeMap<String, Value>) -> Vec<String> {
        debug_assert!(self.current_tasks.contains(task_id));
        self.current_tasks.remove(task_id);
        self.history.push(HistoryEvent {
            task_id: task_id.to_string(),
            outcome: TaskOutcome::Completed,
            data: Value::Object(data.clone().into_iter().collect()),
        });
        self.variables.extend(data);
        let mut activated = Vec::new();
        let mut enabled = false;
        for tr in def.outgoing(task_id) {
            if tr.guard.as_ref().is_none_or(|g| g.eval(&self.variables)) {
                enabled = true;
                if self.current_tasks.insert(tr.to_task.clone()) {
                    activated.push(tr.to_task.clone());
                }
            }
        }
        if !def.is_end(task_id) && !enabled {
            self.fault(task_id, "NoEnabledTransition", "no outgoing guard holds");
            return activated;
        }
        if self.current_tasks.is_empty() {
            self.status = InstanceStatus::Completed;
        }
        activated
    }

    /// Records a fault and suspends the instance. The task stays active.
    pub fn fault(&mut self, task_id: &str, code: &str, detail: &str) {
        self.history.push(HistoryEvent {
            task_id: task_id.to_string(),
            outcome: TaskOutcome::Faulted,
            data: serde_json::json!({ "error": code, "detail": detail }),
        });
        self.status = InstanceStatus::Suspended;
    }
}
