//! Clinical data sources and the two writable order-entry stores.
//!
//! The five clinical sources (patient administrative data, physio-pathologic
//! profiles, drug bank, pharmacy stock, biological analyses) plus the
//! formulary and interaction rules are loaded once and read-only afterwards.
//! Only [`ProtocolStore`] and [`ArchiveStore`] accept writes, each owned by a
//! single agent.

mod catalog;
mod model;
mod stores;

pub use catalog::*;
pub use model::*;
pub use stores::{ArchiveStore, ProtocolStore};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClinicalError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: {detail}")]
    Integrity { file: String, detail: String },
    #[error("unknown patient {0}")]
    UnknownPatient(String),
    #[error("unknown drug {0}")]
    UnknownDrug(String),
    #[error("protocol title `{0}` already used")]
    DuplicateTitle(String),
    #[error("protocol `{0}` not found")]
    NotFound(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("prescription {0} is not validated")]
    NotValidated(String),
    #[error("archive entry {0} already exists")]
    AlreadyArchived(String),
    #[error("io: {0}")]
    Io(String),
}

impl ClinicalError {
    /// Stable error code used in failure messages and HTTP bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ClinicalError::Parse { .. } => "ParseError",
            ClinicalError::Integrity { .. } => "IntegrityError",
            ClinicalError::UnknownPatient(_) => "UnknownPatient",
            ClinicalError::UnknownDrug(_) => "UnknownDrug",
            ClinicalError::DuplicateTitle(_) => "DuplicateTitle",
            ClinicalError::NotFound(_) => "NotFound",
            ClinicalError::InvalidProtocol(_) => "InvalidProtocol",
            ClinicalError::NotValidated(_) => "NotValidated",
            ClinicalError::AlreadyArchived(_) => "AlreadyArchived",
            ClinicalError::Io(_) => "IoError",
        }
    }
}

#[cfg(test)]
mod tests;
