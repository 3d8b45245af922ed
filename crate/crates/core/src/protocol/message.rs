use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coding::{AggregatedShare, EncodedShare, PlanView};
use crate::error::Error;
use crate::filtration::HashedCal;
use crate::numerics::{InterpolationNodes, RealTensor};
use crate::sigcrypto::{PairingBackend, PrivateKey, Proof};
use crate::ClientId;

/// A participant of the round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Client(ClientId),
    Server,
}

impl std::fmt::Display for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Client(c) => c.fmt(f),
            Self::Server => f.write_str("server"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Filtration,
    Aggregation,
    Verification,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Filtration, Stage::Aggregation, Stage::Verification];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    HashedCal,
    GroupInvite,
    PlanDistribution,
    Share,
    KeyShare,
    AggregatedShare,
    AuxProof,
    DecodedResult,
}

impl MessageKind {
    /// The only stage in which this kind may travel.
    pub fn stage(self) -> Stage {
        match self {
            Self::HashedCal | Self::GroupInvite => Stage::Filtration,
            Self::PlanDistribution | Self::Share | Self::KeyShare | Self::AggregatedShare | Self::AuxProof => {
                Stage::Aggregation
            }
            Self::DecodedResult => Stage::Verification,
        }
    }
}

/// What a leader hands to the server when it registers its group.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerPlan {
    pub roster: Vec<ClientId>,
    pub nodes: InterpolationNodes,
    pub k: usize,
    pub t: usize,
    pub deg_f: usize,
}

#[derive(Debug, Clone)]
pub enum PlanBody {
    /// `(L_c, W̃_c)` plus roster and `f`, for members.
    Member(Arc<PlanView>),
    /// Roster and node parameters only.
    Server(Arc<ServerPlan>),
}

#[derive(Debug, Clone)]
pub enum AuxBody<B: PairingBackend> {
    /// A member's slice signatures.
    Logits(Vec<B::G>),
    /// The leader's weight signatures, keyed by member.
    Weights(Vec<(ClientId, B::G)>),
}

/// The server's answer to a leader: the still-blinded decoded slices and
/// the aggregated proof, or the reason decoding failed.
#[derive(Debug, Clone)]
pub struct Decoded<B: PairingBackend> {
    pub slices: Vec<RealTensor>,
    pub proof: Option<Proof<B>>,
}

#[derive(Debug, Clone)]
pub enum Body<B: PairingBackend> {
    HashedCal(Arc<HashedCal>),
    GroupInvite { roster: Vec<ClientId> },
    PlanDistribution(PlanBody),
    Share(EncodedShare),
    KeyShare(PrivateKey),
    AggregatedShare(AggregatedShare),
    AuxProof(AuxBody<B>),
    DecodedResult(Result<Decoded<B>, Error>),
}

impl<B: PairingBackend> Body<B> {
    pub fn kind(&self) -> MessageKind {
        match self {
            Self::HashedCal(_) => MessageKind::HashedCal,
            Self::GroupInvite { .. } => MessageKind::GroupInvite,
            Self::PlanDistribution(_) => MessageKind::PlanDistribution,
            Self::Share(_) => MessageKind::Share,
            Self::KeyShare(_) => MessageKind::KeyShare,
            Self::AggregatedShare(_) => MessageKind::AggregatedShare,
            Self::AuxProof(_) => MessageKind::AuxProof,
            Self::DecodedResult(_) => MessageKind::DecodedResult,
        }
    }

    /// Stable 64-bit digest of the payload.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::default();
        h.u64(self.kind() as u64);
        match self {
            Self::HashedCal(c) => {
                h.reals(c.values.iter());
                h.bools(&c.absent);
            }
            Self::GroupInvite { roster } => h.ids(roster),
            Self::PlanDistribution(PlanBody::Member(v)) => {
                h.ids(&v.members);
                for z in v.lagrange.iter() {
                    h.f64(z.re);
                    h.f64(z.im);
                }
                for w in &v.blinded_weights {
                    h.reals(w.iter());
                }
                h.reals(v.f.coefficients().iter());
            }
            Self::PlanDistribution(PlanBody::Server(s)) => {
                h.ids(&s.roster);
                h.u64(s.k as u64);
                h.u64(s.t as u64);
                h.u64(s.deg_f as u64);
                h.f64(s.nodes.offset());
            }
            Self::Share(s) => {
                for z in s.payload.iter() {
                    h.f64(z.re);
                    h.f64(z.im);
                }
            }
            Self::KeyShare(k) => h.bytes(&k.value().to_bytes_le()),
            Self::AggregatedShare(a) => {
                for z in a.payload.iter() {
                    h.f64(z.re);
                    h.f64(z.im);
                }
            }
            Self::AuxProof(AuxBody::Logits(sigs)) => h.json(sigs),
            Self::AuxProof(AuxBody::Weights(sigs)) => h.json(sigs),
            Self::DecodedResult(Ok(d)) => {
                for s in &d.slices {
                    h.reals(s.iter());
                }
                if let Some(p) = &d.proof {
                    h.json(&p.pi_c);
                }
            }
            Self::DecodedResult(Err(e)) => h.bytes(e.to_string().as_bytes()),
        }
        h.0
    }
}

/// One message on the bus. `group` names the leader whose group the message
/// belongs to, when there is one.
#[derive(Debug, Clone)]
pub struct Message<B: PairingBackend> {
    pub from: Party,
    pub to: Party,
    pub group: Option<ClientId>,
    pub body: Body<B>,
}

impl<B: PairingBackend> Message<B> {
    pub fn kind(&self) -> MessageKind {
        self.body.kind()
    }
}

/// 64-bit FNV-1a.
struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    fn reals<'a>(&mut self, vs: impl Iterator<Item = &'a f64>) {
        for v in vs {
            self.f64(*v);
        }
    }

    fn bools(&mut self, vs: &[bool]) {
        for &v in vs {
            self.bytes(&[u8::from(v)]);
        }
    }

    fn ids(&mut self, ids: &[ClientId]) {
        for id in ids {
            self.u64(id.0 as u64);
        }
    }

    fn json<T: Serialize>(&mut self, v: &T) {
        self.bytes(serde_json::to_string(v).expect("group elements serialize").as_bytes());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigcrypto::MockPairing;

    #[test]
    fn kinds_belong_to_one_stage() {
        assert_eq!(MessageKind::HashedCal.stage(), Stage::Filtration);
        assert_eq!(MessageKind::Share.stage(), Stage::Aggregation);
        assert_eq!(MessageKind::DecodedResult.stage(), Stage::Verification);
    }

    #[test]
    fn fingerprint_tracks_payload() {
        let a: Body<MockPairing> = Body::GroupInvite { roster: vec![ClientId(1), ClientId(2)] };
        let b: Body<MockPairing> = Body::GroupInvite { roster: vec![ClientId(2), ClientId(1)] };
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(Party::Server.to_string(), "server");
        assert_eq!(Party::Client(ClientId(4)).to_string(), "c4");
    }
}
