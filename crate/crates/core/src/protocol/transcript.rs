use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::RoundConfig;
use super::message::{MessageKind, Party, Stage};
use crate::error::{Error, Result};
use crate::numerics::RealTensor;
use crate::ClientId;

pub const TRANSCRIPT_SCHEMA: &str = "svafd.transcript/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub stage: Stage,
    /// Superstep within the stage in which the message was sent.
    pub step: usize,
    pub from: Party,
    pub to: Party,
    pub kind: MessageKind,
    pub group: Option<ClientId>,
    /// FNV-1a digest of the payload, hex encoded.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GroupOutcome {
    Accepted,
    Rejected {
        offset: Option<i64>,
    },
    /// Decoded, but `f` is not linear so the signature check does not apply.
    Unverified,
    InsufficientShares {
        have: usize,
        need: usize,
    },
    IncompleteAux {
        member: ClientId,
    },
    Failed {
        reason: String,
    },
}

impl GroupOutcome {
    pub fn accepted(&self) -> bool {
        matches!(self, Self::Accepted)
    }

    pub fn from_error(e: &Error) -> Self {
        match e {
            Error::InsufficientShares { have, need } => Self::InsufficientShares { have: *have, need: *need },
            Error::IncompleteAux(member) => Self::IncompleteAux { member: *member },
            other => Self::Failed { reason: other.to_string() },
        }
    }
}

/// Everything the round established about one leader's group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub leader: ClientId,
    /// Evaluation-point order.
    pub roster: Vec<ClientId>,
    pub stragglers: Vec<ClientId>,
    pub aggregates_received: usize,
    pub outcome: GroupOutcome,
    /// Deblinded teacher knowledge, when decoding succeeded.
    pub teacher: Option<Vec<Vec<f64>>>,
    /// Plaintext weighted aggregate of the members' quantized knowledge.
    pub oracle: Vec<Vec<f64>>,
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub config: RoundConfig,
    /// Each leader's selected followers.
    pub selections: BTreeMap<ClientId, Vec<ClientId>>,
    pub messages: Vec<MessageRecord>,
    pub groups: BTreeMap<ClientId, GroupRecord>,
}

#[derive(Serialize)]
struct Header<'a> {
    schema: &'a str,
    config: &'a RoundConfig,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line<'a> {
    Selection { leader: ClientId, members: &'a [ClientId] },
    Message(&'a MessageRecord),
    Group(&'a GroupRecord),
}

impl RoundTranscript {
    pub fn messages_of(&self, kind: MessageKind) -> impl Iterator<Item = &MessageRecord> {
        self.messages.iter().filter(move |m| m.kind == kind)
    }

    pub fn accepted(&self) -> usize {
        self.groups.values().filter(|g| g.outcome.accepted()).count()
    }

    /// One JSON object per line, a schema header first.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = Header { schema: TRANSCRIPT_SCHEMA, config: &self.config };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for (leader, members) in &self.selections {
            writeln!(w, "{}", serde_json::to_string(&Line::Selection { leader: *leader, members })?)?;
        }
        for m in &self.messages {
            writeln!(w, "{}", serde_json::to_string(&Line::Message(m))?)?;
        }
        for g in self.groups.values() {
            writeln!(w, "{}", serde_json::to_string(&Line::Group(g))?)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to a vector cannot fail");
        String::from_utf8(out).expect("JSON is UTF-8")
    }

    /// Checks stage discipline: every kind only in its stage, no share for a
    /// group before that group's plan, and no decoded result before the
    /// aggregation stage is over.
    pub fn check_stage_order(&self) -> Result<()> {
        let mut planned = std::collections::BTreeSet::new();
        let mut decoded = std::collections::BTreeSet::new();
        let mut last_stage = Stage::Filtration;
        for (i, m) in self.messages.iter().enumerate() {
            let fail = |why: &str| Err(Error::InvalidParameter(format!("message {i} ({:?}): {why}", m.kind)));
            if m.kind.stage() != m.stage {
                return fail("sent outside its stage");
            }
            if m.stage < last_stage {
                return fail("stages out of order");
            }
            last_stage = m.stage;
            match m.kind {
                MessageKind::PlanDistribution => {
                    planned.insert((m.group, m.to));
                }
                MessageKind::Share if !planned.contains(&(m.group, m.from)) => {
                    return fail("share precedes the sender's plan");
                }
                MessageKind::AggregatedShare if decoded.contains(&m.group) => {
                    return fail("aggregate arrives after the group was decoded");
                }
                MessageKind::DecodedResult => {
                    decoded.insert(m.group);
                }
                _ => {}
            }
        }
        Ok(())
    }
}

pub(crate) fn rows(t: &RealTensor) -> Vec<Vec<f64>> {
    t.rows().into_iter().map(|r| r.to_vec()).collect()
}
