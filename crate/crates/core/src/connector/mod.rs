//! The Connector Agent and Interface 6.
//!
//! The mediation infrastructure stays independent of the workflow engine
//! and is plugged in only when a workflow task first needs it: the connector
//! holds decision and prescription requests until a PlugRequest/PlugAck
//! handshake with the mediation endpoint succeeds, then forwards them.

mod agent;
mod messages;
mod session;

pub use agent::{ConnectorAgent, ConnectorConfig, DEFAULT_PLUG_TIMEOUT};
pub use messages::{Interface6Msg, INTERFACE6_ONTOLOGY};
pub use session::{IllegalTransition, PlugMode, PlugSession, PlugState, UnplugPolicy};
