//! The agentified workflow enactment service.
//!
//! One [`ClinicalWorkflowAgent`] per running process instance, spawned and
//! retired by the [`AgentManager`], which also serves process definitions
//! (Interface 1), worklists (Interface 2) and monitoring (Interface 5).
//! Automatic tasks call registered applications synchronously (Interface 3).
//! Interface 4 is answered with `NotSupported`.

mod apps;
mod cwa;
mod definition;
mod guard;
mod instance;
mod manager;
mod messages;
mod resources;

pub use apps::{ApplicationRegistry, InvokeError};
pub use cwa::{ClinicalWorkflowAgent, DEFAULT_ORDER_VARIABLE};
pub use definition::{DefinitionError, ProcessDefinition, TaskDef, TaskKind, Transition, VarType, VariableDecl};
pub use guard::{Guard, GuardError};
pub use instance::{AdvanceReport, HistoryEvent, InstanceStatus, ProcessInstance, TaskOutcome, WorkItem, WorkItemState};
pub use manager::AgentManager;
pub use messages::*;
pub use resources::{Grant, NotHolder, ResourceLock, ResourceTable};
