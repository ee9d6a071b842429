use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Content encoding tag carried in every envelope.
pub const CONTENT_LANGUAGE: &str = "app-json/1";

/// Kinds of agent that can live on the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    /// Information Collection Agent.
    #[serde(rename = "ICA")]
    Ica,
    /// Drug Selection Agent.
    #[serde(rename = "DSA")]
    Dsa,
    /// Pharmacy Stock Checker Agent.
    #[serde(rename = "PSCA")]
    Psca,
    /// Administration Mode Selection Agent.
    #[serde(rename = "AMSA")]
    Amsa,
    /// Prescription Analyzer Agent.
    #[serde(rename = "PAA")]
    Paa,
    /// Drug Errors Detection Agent.
    #[serde(rename = "DEDA")]
    Deda,
    /// Drug-Drug Interaction Detection Agent.
    #[serde(rename = "DDIDA")]
    Ddida,
    /// Protocols Recording Agent.
    #[serde(rename = "PRA")]
    Pra,
    /// Information Delivery Agent.
    #[serde(rename = "IDA")]
    Ida,
    /// Therapeutic File Agent.
    #[serde(rename = "TFA")]
    Tfa,
    ClinicalWorkflowAgent,
    AgentManager,
    ConnectorAgent,
    /// Anything outside the agent system: clients, clinical users.
    External,
}

impl AgentKind {
    /// The ten agents of the order-entry / decision-support mediation layer.
    pub const MEDIATION: [AgentKind; 10] = [
        AgentKind::Ica,
        AgentKind::Dsa,
        AgentKind::Psca,
        AgentKind::Amsa,
        AgentKind::Paa,
        AgentKind::Deda,
        AgentKind::Ddida,
        AgentKind::Pra,
        AgentKind::Ida,
        AgentKind::Tfa,
    ];

    pub const ALL: [AgentKind; 14] = [
        AgentKind::Ica,
        AgentKind::Dsa,
        AgentKind::Psca,
        AgentKind::Amsa,
        AgentKind::Paa,
        AgentKind::Deda,
        AgentKind::Ddida,
        AgentKind::Pra,
        AgentKind::Ida,
        AgentKind::Tfa,
        AgentKind::ClinicalWorkflowAgent,
        AgentKind::AgentManager,
        AgentKind::ConnectorAgent,
        AgentKind::External,
    ];

    pub fn is_mediation(self) -> bool {
        Self::MEDIATION.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Ica => "ICA",
            AgentKind::Dsa => "DSA",
            AgentKind::Psca => "PSCA",
            AgentKind::Amsa => "AMSA",
            AgentKind::Paa => "PAA",
            AgentKind::Deda => "DEDA",
            AgentKind::Ddida => "DDIDA",
            AgentKind::Pra => "PRA",
            AgentKind::Ida => "IDA",
            AgentKind::Tfa => "TFA",
            AgentKind::ClinicalWorkflowAgent => "ClinicalWorkflowAgent",
            AgentKind::AgentManager => "AgentManager",
            AgentKind::ConnectorAgent => "ConnectorAgent",
            AgentKind::External => "External",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown agent kind `{s}`"))
    }
}

/// Directory key of an agent: its kind plus an instance discriminator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId {
    pub kind: AgentKind,
    pub instance: String,
}

impl AgentId {
    /// Instance tag used for agents that exist once per deployment.
    pub const MAIN: &'static str = "main";

    pub fn new(kind: AgentKind, instance: impl Into<String>) -> Self {
        Self {
            kind,
            instance: instance.into(),
        }
    }

    pub fn main(kind: AgentKind) -> Self {
        Self::new(kind, Self::MAIN)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.kind, self.instance)
    }
}

/// Communicative act of a message.
///
/// `Query` stands in for both FIPA query-if and query-ref.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Performative {
    Inform,
    Query,
    Request,
    Propose,
    Agree,
    Refuse,
    Cfp,
    Confirm,
    Failure,
    NotUnderstood,
}

impl Performative {
    pub const ALL: [Performative; 10] = [
        Performative::Inform,
        Performative::Query,
        Performative::Request,
        Performative::Propose,
        Performative::Agree,
        Performative::Refuse,
        Performative::Cfp,
        Performative::Confirm,
        Performative::Failure,
        Performative::NotUnderstood,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Performative::Inform => "inform",
            Performative::Query => "query",
            Performative::Request => "request",
            Performative::Propose => "propose",
            Performative::Agree => "agree",
            Performative::Refuse => "refuse",
            Performative::Cfp => "cfp",
            Performative::Confirm => "confirm",
            Performative::Failure => "failure",
            Performative::NotUnderstood => "not-understood",
        }
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Message content carried on the bus.
///
/// Every variant belongs to exactly one ontology; the bus refuses envelopes
/// whose ontology tag disagrees with the content.
pub trait Payload: Clone + fmt::Debug + Serialize + DeserializeOwned + Send + 'static {
    fn ontology(&self) -> &'static str;

    /// Short variant name, used in audit summaries.
    fn variant(&self) -> &'static str;
}

/// A performative-tagged envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "C: DeserializeOwned"))]
pub struct AclMessage<C> {
    pub performative: Performative,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub conversation_id: String,
    pub reply_with: Option<String>,
    pub in_reply_to: Option<String>,
    pub ontology: String,
    pub language: String,
    pub content: C,
}

impl<C: Payload> AclMessage<C> {
    /// Builds an envelope whose ontology is taken from the content.
    pub fn new(
        performative: Performative,
        sender: AgentId,
        receiver: AgentId,
        conversation_id: impl Into<String>,
        content: C,
    ) -> Self {
        Self {
            performative,
            sender,
            receiver,
            conversation_id: conversation_id.into(),
            reply_with: None,
            in_reply_to: None,
            ontology: content.ontology().to_string(),
            language: CONTENT_LANGUAGE.to_string(),
            content,
        }
    }

    pub fn with_reply_with(mut self, token: impl Into<String>) -> Self {
        self.reply_with = Some(token.into());
        self
    }

    pub fn with_in_reply_to(mut self, token: Option<String>) -> Self {
        self.in_reply_to = token;
        self
    }

    /// Overrides the ontology tag. Used to exercise the mismatch check.
    pub fn with_ontology(mut self, ontology: impl Into<String>) -> Self {
        self.ontology = ontology.into();
        self
    }

    pub fn summary(&self) -> String {
        format!(
            "{} -> {} {} {}:{}",
            self.sender,
            self.receiver,
            serde_json::to_value(self.performative)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            self.ontology,
            self.content.variant()
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serialization cannot fail")
    }

    /// Parses one wire-form message, checking the language and ontology tags.
    pub fn from_json(text: &str) -> Result<Self, WireError> {
        let msg: Self = serde_json::from_str(text).map_err(|e| WireError::Malformed(e.to_string()))?;
        if msg.language != CONTENT_LANGUAGE {
            return Err(WireError::Language(msg.language));
        }
        if msg.ontology != msg.content.ontology() {
            return Err(WireError::Ontology {
                ontology: msg.ontology,
                variant: msg.content.variant().to_string(),
            });
        }
        Ok(msg)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported content language `{0}`")]
    Language(String),
    #[error("content variant {variant} is not part of ontology `{ontology}`")]
    Ontology { ontology: String, variant: String },
}
