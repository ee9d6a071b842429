//! Workflow-driven clinical order entry with agent-mediated decision support.

pub mod bus;
pub mod cdss;
pub mod clinical;
pub mod connector;
pub mod content;
pub mod cpoe;
pub mod org;
pub mod scenario;
pub mod system;
pub mod wfms;
