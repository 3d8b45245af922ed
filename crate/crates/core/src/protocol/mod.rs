//! The round engine.
//!
//! Clients and the server are actors that exchange [`Message`]s over an
//! in-process bus. A round runs three stages in order: filtration (hashed
//! CALs and group selection), aggregation (plans, encoded shares, local
//! aggregation, signatures) and verification (server decoding, proof
//! aggregation, the leader's check). Delivery is bulk synchronous and the
//! order within each inbox is fixed by the round seed, so sequential and
//! parallel scheduling produce the same transcript.

mod campaign;
mod config;
mod membership;
mod message;
mod round;
mod transcript;

pub use campaign::{run_campaign, CampaignSpec, Cell, CellResult, CodedGroup, CodedResult};
pub use config::{RoundConfig, Straggler};
pub use membership::membership_update;
pub use message::{AuxBody, Body, Decoded, Message, MessageKind, Party, PlanBody, ServerPlan, Stage};
pub use round::{
    run_round, run_round_hooked, run_round_with, AggregateContext, ClientInput, NoHooks, Phase, Role, RoundHooks,
    RoundOutcome, SplitContext, TimingSample,
};
pub use transcript::{GroupOutcome, GroupRecord, MessageRecord, RoundTranscript, TRANSCRIPT_SCHEMA};
