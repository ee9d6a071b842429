//! Computerized prescriber order entry: the order model, the
//! `cpoe-order-entry` ontology and its eight agents.
//!
//! Drafts live in the analyzer agent. Everyone else sees them only through
//! messages: the analyzer asks the two decision-support agents for partial
//! reports, merges them, and on validation asks the therapeutic file agent
//! to archive and the delivery agent to notify pharmacy and nursing.

mod agents;
mod messages;
mod model;

pub use agents::{
    substitutions_for, AdminModeAgent, DrugSelectingAgent, InformationCollectionAgent, InformationDeliveryAgent,
    PrescriptionAnalyzerAgent, ProtocolRecallAgent, StockCheckerAgent, TherapeuticFileAgent,
};
pub use messages::{CpoeMsg, CPOE_ONTOLOGY};
pub use model::*;
