use std::collections::{BTreeMap, BTreeSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::message::{AclMessage, AgentId, Payload};

/// A single delivery performed by the scheduler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "C: DeserializeOwned"))]
pub struct DeliveryEvent<C> {
    pub seq_no: u64,
    pub deliver_tick: u64,
    pub message: AclMessage<C>,
}

/// Ordered delivery log.
#[derive(Debug, Clone, PartialEq)]
pub struct BusTrace<C> {
    pub events: Vec<DeliveryEvent<C>>,
}

impl<C> Default for BusTrace<C> {
    fn default() -> Self {
        Self { events: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceViolation {
    #[error("seq_no {0} does not increase")]
    SeqOrder(u64),
    #[error("message seq_no {seq_no} replies to `{token}` which was never delivered in conversation `{conversation}`")]
    DanglingReply {
        seq_no: u64,
        token: String,
        conversation: String,
    },
}

impl<C: Payload> BusTrace<C> {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn messages(&self) -> impl Iterator<Item = &AclMessage<C>> {
        self.events.iter().map(|e| &e.message)
    }

    /// Newline-delimited JSON, one delivery event per line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("trace serialization cannot fail"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Self, String> {
        let mut events = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event: DeliveryEvent<C> =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
            events.push(event);
        }
        Ok(Self { events })
    }

    /// Checks that seq numbers increase and every `in_reply_to` names a
    /// `reply_with` delivered earlier in the same conversation.
    pub fn check_invariants(&self) -> Result<(), TraceViolation> {
        let mut last: Option<u64> = None;
        let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
        for event in &self.events {
            if last.is_some_and(|l| event.seq_no <= l) {
                return Err(TraceViolation::SeqOrder(event.seq_no));
            }
            last = Some(event.seq_no);
            let msg = &event.message;
            if let Some(token) = &msg.in_reply_to {
                if !seen.contains(&(msg.conversation_id.as_str(), token.as_str())) {
                    return Err(TraceViolation::DanglingReply {
                        seq_no: event.seq_no,
                        token: token.clone(),
                        conversation: msg.conversation_id.clone(),
                    });
                }
            }
            if let Some(token) = &msg.reply_with {
                seen.insert((msg.conversation_id.as_str(), token.as_str()));
            }
        }
        Ok(())
    }

    /// Per (sender, receiver) pair, the sequence of reply_with/summary keys in
    /// delivery order. Used to compare pairwise order across runs.
    pub fn per_pair_order(&self) -> BTreeMap<(AgentId, AgentId), Vec<String>> {
        let mut out: BTreeMap<(AgentId, AgentId), Vec<String>> = BTreeMap::new();
        for msg in self.messages() {
            out.entry((msg.sender.clone(), msg.receiver.clone()))
                .or_default()
                .push(msg.summary());
        }
        out
    }

    pub fn count_ontology(&self, ontology: &str) -> usize {
        self.messages().filter(|m| m.ontology == ontology).count()
    }
}

/// First line at which two NDJSON traces differ, with both sides.
pub fn first_divergence(expected: &str, actual: &str) -> Option<(usize, String, String)> {
    let mut left = expected.lines();
    let mut right = actual.lines();
    let mut n = 1;
    loop {
        match (left.next(), right.next()) {
            (None, None) => return None,
            (l, r) if l == r => {}
            (l, r) => {
                return Some((
                    n,
                    l.unwrap_or("<end of trace>").to_string(),
                    r.unwrap_or("<end of trace>").to_string(),
                ))
            }
        }
        n += 1;
    }
}
