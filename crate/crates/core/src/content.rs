//! The system-wide message payload: one variant per ontology.

use serde::{Deserialize, Serialize};

use crate::bus::Payload;
use crate::connector::{Interface6Msg, INTERFACE6_ONTOLOGY};
use crate::cpoe::{CpoeMsg, CPOE_ONTOLOGY};
use crate::wfms::{WesMsg, WfmcMsg, WES_ONTOLOGY, WFMC_ONTOLOGY};

/// Variant names are unique across ontologies, so the untagged wrapper
/// round-trips through the `type` field of the inner enum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Content {
    Cpoe(CpoeMsg),
    Interface6(Interface6Msg),
    Wfmc(WfmcMsg),
    Wes(WesMsg),
}

pub const ONTOLOGIES: [&str; 4] = [CPOE_ONTOLOGY, INTERFACE6_ONTOLOGY, WFMC_ONTOLOGY, WES_ONTOLOGY];

impl Payload for Content {
    fn ontology(&self) -> &'static str {
        match self {
            Content::Cpoe(_) => CPOE_ONTOLOGY,
            Content::Interface6(_) => INTERFACE6_ONTOLOGY,
            Content::Wfmc(_) => WFMC_ONTOLOGY,
            Content::Wes(_) => WES_ONTOLOGY,
        }
    }

    fn variant(&self) -> &'static str {
        match self {
            Content::Cpoe(m) => m.variant(),
            Content::Interface6(m) => m.variant(),
            Content::Wfmc(m) => m.variant(),
            Content::Wes(m) => m.variant(),
        }
    }
}

impl From<CpoeMsg> for Content {
    fn from(m: CpoeMsg) -> Self {
        Content::Cpoe(m)
    }
}

impl From<Interface6Msg> for Content {
    fn from(m: Interface6Msg) -> Self {
        Content::Interface6(m)
    }
}

impl From<WfmcMsg> for Content {
    fn from(m: WfmcMsg) -> Self {
        Content::Wfmc(m)
    }
}

impl From<WesMsg> for Content {
    fn from(m: WesMsg) -> Self {
        Content::Wes(m)
    }
}

pub type Msg = crate::bus::AclMessage<Content>;
pub type Ctx<'a> = crate::bus::Context<'a, Content>;
