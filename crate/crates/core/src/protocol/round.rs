use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RoundConfig;
use super::message::{AuxBody, Body, Decoded, Message, Party, PlanBody, ServerPlan, Stage};
use super::transcript::{rows, GroupOutcome, GroupRecord, MessageRecord, RoundTranscript};
use crate::coding::{
    blind, deblind_and_join, decode, encode, local_aggregate_weighted, plaintext_oracle, random_blind_factor, split,
    AggregatedShare, ElementwisePoly, EncodedShare, GroupPlan, NoiseParams, PlanView, SplitBundle,
};
use crate::error::{Error, Result};
use crate::filtration::{
    build_topology, compute_cal, intimacy_list, lsh_project, select_group, HashedCal, LshConfig, Sample, Topology,
};
use crate::numerics::{frobenius_norm, make_nodes_with, relative_error, RealTensor};
use crate::sigcrypto::{
    aggregate_proof, conv, digest_units, quantize_tensor, rounding_margin, sign_logits, sign_weight, verify, AuxProofs,
    BackendKind, MockPairing, PairingBackend, PrivateKey, TypeAPairing, ROUNDING_WARN_THRESHOLD,
};
use crate::workload::ClientData;
use crate::{derive_seed, ClientId, Grain};

const TAG_LSH: u64 = 0x15;
const TAG_LEAD: u64 = 0x1ead;
const TAG_MEMBER: u64 = 0x3e3b;
const TAG_INBOX: u64 = 0x1b0c;

/// What a client brings to a round: its labelled local rows (for the CAL)
/// and the knowledge it contributes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientInput {
    pub samples: Vec<Sample>,
    pub logits: RealTensor,
}

impl From<ClientData> for ClientInput {
    fn from(d: ClientData) -> Self {
        Self { samples: d.samples, logits: d.logits }
    }
}

/// Passed to [`RoundHooks::on_split`].
#[derive(Debug, Clone, Copy)]
pub struct SplitContext {
    pub client: ClientId,
    pub group: ClientId,
}

/// Passed to [`RoundHooks::on_aggregate`]. `quantized_weights[x]` is the
/// public `w̄` of roster member `x`.
#[derive(Debug, Clone, Copy)]
pub struct AggregateContext<'a> {
    pub holder: ClientId,
    pub group: ClientId,
    pub members: &'a [ClientId],
    pub quantized_weights: &'a [i64],
    pub q: u32,
}

/// Instrumentation points inside the party handlers. Every method defaults
/// to doing nothing.
pub trait RoundHooks<B: PairingBackend>: Sync {
    /// A member has split its knowledge for a group, before signing.
    fn on_split(&self, _ctx: SplitContext, _bundle: &SplitBundle) {}

    /// A message is about to leave its sender.
    fn on_send(&self, _msg: &mut Message<B>) {}

    /// A member is about to aggregate with these blinded weights.
    fn on_aggregate(&self, _ctx: AggregateContext<'_>, _blinded_weights: &mut [RealTensor]) {}
}

/// Honest parties.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoHooks;

impl<B: PairingBackend> RoundHooks<B> for NoHooks {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Leader,
    Follower,
    Server,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Leader => "leader",
            Self::Follower => "follower",
            Self::Server => "server",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Filtration,
    Preprocess,
    Auxiliary,
    Encode,
    Aggregate,
    Decode,
    Proof,
    Verify,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Self::Filtration,
        Self::Preprocess,
        Self::Auxiliary,
        Self::Encode,
        Self::Aggregate,
        Self::Decode,
        Self::Proof,
        Self::Verify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Filtration => "filtration",
            Self::Preprocess => "preprocess",
            Self::Auxiliary => "auxiliary",
            Self::Encode => "encode",
            Self::Aggregate => "aggregate",
            Self::Decode => "decode",
            Self::Proof => "proof",
            Self::Verify => "verify",
        }
    }
}

/// Wall-clock time one party spent in one phase for one group. `count` is
/// the number of items the phase produced (signatures, shares, points).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingSample {
    pub party: Party,
    pub role: Role,
    pub phase: Phase,
    pub group: Option<ClientId>,
    pub nanos: u64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub transcript: RoundTranscript,
    pub topology: Topology,
    pub timings: Vec<TimingSample>,
}

impl RoundOutcome {
    pub fn timings_of(&self, role: Role, phase: Phase) -> impl Iterator<Item = &TimingSample> {
        self.timings.iter().filter(move |t| t.role == role && t.phase == phase)
    }
}

/// Runs one round on the backend named in the config.
pub fn run_round(cfg: &RoundConfig, inputs: &[ClientInput]) -> Result<RoundOutcome> {
    run_round_hooked(cfg, inputs, &NoHooks)
}

pub fn run_round_hooked<H>(cfg: &RoundConfig, inputs: &[ClientInput], hooks: &H) -> Result<RoundOutcome>
where
    H: RoundHooks<MockPairing> + RoundHooks<TypeAPairing>,
{
    match cfg.backend {
        BackendKind::Mock => run_round_with(cfg, inputs, &MockPairing::new(), hooks),
        BackendKind::Pairing => run_round_with(cfg, inputs, &TypeAPairing::shared(), hooks),
    }
}

/// Runs one round on an explicit backend.
pub fn run_round_with<B: PairingBackend, H: RoundHooks<B>>(
    cfg: &RoundConfig,
    inputs: &[ClientInput],
    backend: &B,
    hooks: &H,
) -> Result<RoundOutcome> {
    cfg.validate()?;
    let block_shape = check_inputs(cfg, inputs)?;
    preflight(cfg, inputs);
    let ctx = Ctx {
        cfg,
        backend,
        hooks,
        poly: cfg.poly(),
        lsh: LshConfig { projection_seed: derive_seed(cfg.seed, &[TAG_LSH]), output_dim: cfg.lsh_dim },
        block_shape,
    };
    let mut actors: Vec<Actor<'_, B>> = inputs
        .iter()
        .enumerate()
        .map(|(i, input)| Actor::Client(Box::new(ClientState::new(ClientId(i), input))))
        .chain(std::iter::once(Actor::Server(Box::default())))
        .collect();
    let mut messages = Vec::new();
    let mut topology = Topology::default();
    for stage in Stage::ALL {
        run_stage(stage, &mut actors, &ctx, &mut messages)?;
        if stage == Stage::Filtration {
            topology = build_topology(&selections(&actors))?;
            topology.check_round(cfg.r)?;
        }
    }
    let transcript = assemble(cfg, &ctx, &actors, messages)?;
    let timings = actors
        .iter()
        .flat_map(|a| match a {
            Actor::Client(c) => c.timings.iter(),
            Actor::Server(s) => s.timings.iter(),
        })
        .copied()
        .collect();
    Ok(RoundOutcome { transcript, topology, timings })
}

fn check_inputs(cfg: &RoundConfig, inputs: &[ClientInput]) -> Result<(usize, usize)> {
    if inputs.len() != cfg.n {
        return Err(Error::InvalidParameter(format!("{} inputs for N={}", inputs.len(), cfg.n)));
    }
    let shape = inputs[0].logits.dim();
    if let Some(bad) = inputs.iter().find(|i| i.logits.dim() != shape) {
        return Err(Error::ShapeMismatch { expected: shape, found: bad.logits.dim() });
    }
    let (rows, d) = shape;
    match cfg.grain {
        Grain::Class if rows != d => Err(Error::ShapeMismatch { expected: (d, d), found: shape }),
        Grain::Class => Ok((d, d)),
        Grain::Sample if rows % cfg.k != 0 => Err(Error::IndivisibleO { rows, k: cfg.k }),
        Grain::Sample => Ok((rows / cfg.k, d)),
    }
}

/// Warns when the expected floating error could flip the integer rounding
/// of the verification exponent.
fn preflight(cfg: &RoundConfig, inputs: &[ClientInput]) {
    let norm = inputs.iter().map(|i| frobenius_norm(&i.logits)).fold(0.0, f64::max);
    let bound = NoiseParams { t: cfg.t, sigma: cfg.sigma, theta: cfg.theta }.bound();
    let anchors = (cfg.k + cfg.t) as f64;
    let re_est = f64::EPSILON * (1.0 + bound / crate::workload::LOGIT_BOUND) * anchors * cfg.group_size() as f64;
    let margin = rounding_margin(norm, re_est, cfg.q);
    if cfg.f_degree == 1 && margin > ROUNDING_WARN_THRESHOLD {
        log::warn!(
            "estimated rounding margin {margin:.3} exceeds {ROUNDING_WARN_THRESHOLD}: honest groups may be rejected (q={}, K={}, T={})",
            cfg.q,
            cfg.k,
            cfg.t
        );
    }
}

struct Ctx<'a, B: PairingBackend, H> {
    cfg: &'a RoundConfig,
    backend: &'a B,
    hooks: &'a H,
    poly: ElementwisePoly,
    lsh: LshConfig,
    block_shape: (usize, usize),
}

impl<B: PairingBackend, H: RoundHooks<B>> Ctx<'_, B, H> {
    fn send(&self, out: &mut Vec<Message<B>>, from: Party, to: Party, group: Option<ClientId>, body: Body<B>) {
        let mut msg = Message { from, to, group, body };
        self.hooks.on_send(&mut msg);
        out.push(msg);
    }

    fn quantized_weights(&self, size: usize) -> Result<Vec<i64>> {
        Ok(vec![conv(1.0 / size as f64, self.cfg.q)?; size])
    }
}

fn party_index(p: Party, n: usize) -> usize {
    match p {
        Party::Client(c) => c.0,
        Party::Server => n,
    }
}

/// Bulk-synchronous delivery: every message sent in step `s` is delivered
/// in step `s + 1`, each inbox shuffled by a seed derived from the stage,
/// step and recipient. The stage ends when a step sends nothing.
fn run_stage<B: PairingBackend, H: RoundHooks<B>>(
    stage: Stage,
    actors: &mut [Actor<'_, B>],
    ctx: &Ctx<'_, B, H>,
    log: &mut Vec<MessageRecord>,
) -> Result<()> {
    let n = actors.len() - 1;
    let mut outgoing = map_actors(ctx.cfg.parallel, actors, Vec::new(), |a, _| a.start(stage, ctx))?;
    for step in 0.. {
        let batch: Vec<Message<B>> = outgoing.into_iter().flatten().collect();
        if batch.is_empty() {
            break;
        }
        let mut inboxes: Vec<Vec<Message<B>>> = (0..=n).map(|_| Vec::new()).collect();
        for msg in batch {
            if msg.kind().stage() != stage {
                return Err(Error::InvalidParameter(format!("{:?} sent during {stage:?}", msg.kind())));
            }
            log.push(MessageRecord {
                stage,
                step,
                from: msg.from,
                to: msg.to,
                kind: msg.kind(),
                group: msg.group,
                fingerprint: format!("{:016x}", msg.body.fingerprint()),
            });
            let to = party_index(msg.to, n);
            if to > n {
                return Err(Error::InvalidParameter(format!("message to unknown party {}", msg.to)));
            }
            inboxes[to].push(msg);
        }
        for (i, inbox) in inboxes.iter_mut().enumerate() {
            let seed = derive_seed(ctx.cfg.seed, &[TAG_INBOX, stage as u64, step as u64, i as u64]);
            inbox.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        outgoing = map_actors(ctx.cfg.parallel, actors, inboxes, |a, inbox| {
            let mut out = Vec::new();
            for msg in inbox {
                out.extend(a.handle(msg, ctx)?);
            }
            Ok(out)
        })?;
    }
    Ok(())
}

/// Applies `f` to every actor with its inbox, in parallel or in order. The
/// result is in party order either way.
fn map_actors<'a, B, F>(
    parallel: bool,
    actors: &mut [Actor<'a, B>],
    inboxes: Vec<Vec<Message<B>>>,
    f: F,
) -> Result<Vec<Vec<Message<B>>>>
where
    B: PairingBackend,
    F: Fn(&mut Actor<'a, B>, Vec<Message<B>>) -> Result<Vec<Message<B>>> + Sync,
{
    let mut inboxes = inboxes;
    inboxes.resize_with(actors.len(), Vec::new);
    if parallel {
        actors.par_iter_mut().zip(inboxes).map(|(a, inbox)| f(a, inbox)).collect()
    } else {
        actors.iter_mut().zip(inboxes).map(|(a, inbox)| f(a, inbox)).collect()
    }
}

enum Actor<'a, B: PairingBackend> {
    Client(Box<ClientState<'a>>),
    Server(Box<ServerState<B>>),
}

impl<B: PairingBackend> Actor<'_, B> {
    fn start<H: RoundHooks<B>>(&mut self, stage: Stage, ctx: &Ctx<'_, B, H>) -> Result<Vec<Message<B>>> {
        match self {
            Self::Client(c) => c.start(stage, ctx),
            Self::Server(s) => s.start(stage, ctx),
        }
    }

    fn handle<H: RoundHooks<B>>(&mut self, msg: Message<B>, ctx: &Ctx<'_, B, H>) -> Result<Vec<Message<B>>> {
        match self {
            Self::Client(c) => c.handle(msg, ctx),
            Self::Server(s) => s.handle(msg, ctx),
        }
    }
}

fn selections<B: PairingBackend>(actors: &[Actor<'_, B>]) -> BTreeMap<ClientId, Vec<ClientId>> {
    actors
        .iter()
        .filter_map(|a| match a {
            Actor::Client(c) => c.selection.clone().map(|s| (c.id, s)),
            Actor::Server(_) => None,
        })
        .collect()
}

struct Membership {
    view: Arc<PlanView>,
    /// Unblinded slices, kept for the plaintext oracle.
    bundle: SplitBundle,
    received: Vec<EncodedShare>,
    aggregated: bool,
}

struct Lead {
    plan: GroupPlan,
    quantized_weights: Vec<i64>,
    keys: BTreeMap<ClientId, PrivateKey>,
    teacher: Option<RealTensor>,
    outcome: Option<GroupOutcome>,
}

struct ClientState<'a> {
    id: ClientId,
    input: &'a ClientInput,
    hashed: BTreeMap<ClientId, Arc<HashedCal>>,
    selection: Option<Vec<ClientId>>,
    invited_by: BTreeSet<ClientId>,
    memberships: BTreeMap<ClientId, Membership>,
    early_shares: BTreeMap<ClientId, Vec<EncodedShare>>,
    lead: Option<Lead>,
    timings: Vec<TimingSample>,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, u64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_nanos() as u64))
}

impl<'a> ClientState<'a> {
    fn new(id: ClientId, input: &'a ClientInput) -> Self {
        Self {
            id,
            input,
            hashed: BTreeMap::new(),
            selection: None,
            invited_by: BTreeSet::new(),
            memberships: BTreeMap::new(),
            early_shares: BTreeMap::new(),
            lead: None,
            timings: Vec::new(),
        }
    }

    fn me(&self) -> Party {
        Party::Client(self.id)
    }

    fn record(&mut self, role: Role, phase: Phase, group: Option<ClientId>, nanos: u64, count: usize) {
        self.timings.push(TimingSample { party: self.me(), role, phase, group, nanos, count });
    }

    fn start<B: PairingBackend, H: RoundHooks<B>>(
        &mut self,
        stage: Stage,
        ctx: &Ctx<'_, B, H>,
    ) -> Result<Vec<Message<B>>> {
        let mut out = Vec::new();
        match stage {
            Stage::Filtration => {
                let (hashed, nanos) = timed(|| lsh_project(&compute_cal(&self.input.samples)?, &ctx.lsh))?;
                self.record(Role::Follower, Phase::Filtration, None, nanos, 1);
                let hashed = Arc::new(hashed);
                self.hashed.insert(self.id, hashed.clone());
                for other in (0..ctx.cfg.n).map(ClientId).filter(|&c| c != self.id) {
                    ctx.send(&mut out, self.me(), Party::Client(other), None, Body::HashedCal(hashed.clone()));
                }
            }
            Stage::Aggregation => self.open_group(ctx, &mut out)?,
            Stage::Verification => {}
        }
        Ok(out)
    }

    fn handle<B: PairingBackend, H: RoundHooks<B>>(
        &mut self,
        msg: Message<B>,
        ctx: &Ctx<'_, B, H>,
    ) -> Result<Vec<Message<B>>> {
        let mut out = Vec::new();
        let Party::Client(sender) = msg.from else {
            return match msg.body {
                Body::DecodedResult(result) => {
                    self.close_group(result, ctx)?;
                    Ok(out)
                }
                _ => Err(Error::InvalidParameter(format!("unexpected {:?} from the server", msg.kind()))),
            };
        };
        match msg.body {
            Body::HashedCal(h) => {
                self.hashed.insert(sender, h);
                if self.hashed.len() == ctx.cfg.n {
                    self.choose_group(ctx, &mut out)?;
                }
            }
            Body::GroupInvite { .. } => {
                self.invited_by.insert(sender);
            }
            Body::PlanDistribution(PlanBody::Member(view)) => self.join_group(view, ctx, &mut out)?,
            Body::Share(share) => {
                let leader = msg.group.ok_or_else(|| Error::InvalidParameter("share without a group".into()))?;
                match self.memberships.get_mut(&leader) {
                    Some(m) => m.received.push(share),
                    None => self.early_shares.entry(leader).or_default().push(share),
                }
                self.try_aggregate(leader, ctx, &mut out)?;
            }
            Body::KeyShare(key) => {
                let lead =
                    self.lead.as_mut().ok_or_else(|| Error::InvalidParameter("key share to a non-leader".into()))?;
                lead.keys.insert(sender, key);
            }
            other => return Err(Error::InvalidParameter(format!("client received {:?}", other.kind()))),
        }
        Ok(out)
    }

    fn choose_group<B: PairingBackend, H: RoundHooks<B>>(
        &mut self,
        ctx: &Ctx<'_, B, H>,
        out: &mut Vec<Message<B>>,
    ) -> Result<()> {
        let ((selection, roster), nanos) = timed(|| {
            let owned: BTreeMap<ClientId, HashedCal> = self.hashed.iter().map(|(&id, h)| (id, (**h).clone())).collect();
            let selection = select_group(&intimacy_list(self.id, &owned)?, ctx.cfg.r)?;
            Ok((selection.clone(), self.roster(selection, ctx.cfg)))
        })?;
        self.record(Role::Leader, Phase::Filtration, Some(self.id), nanos, selection.len());
        for &member in &selection {
            ctx.send(
                out,
                self.me(),
                Party::Client(member),
                Some(self.id),
                Body::GroupInvite { roster: roster.clone() },
            );
        }
        self.selection = Some(selection);
        Ok(())
    }

    fn roster(&self, selection: Vec<ClientId>, cfg: &RoundConfig) -> Vec<ClientId> {
        if cfg.include_leader {
            std::iter::once(self.id).chain(selection).collect()
        } else {
            selection
        }
    }

    fn open_group<B: PairingBackend, H: RoundHooks<B>>(
        &mut self,
        ctx: &Ctx<'_, B, H>,
        out: &mut Vec<Message<B>>,
    ) -> Result<()> {
        let cfg = ctx.cfg;
        let selection =
            self.selection.clone().ok_or_else(|| Error::InvalidParameter(format!("{} selected no group", self.id)))?;
        let roster = self.roster(selection, cfg);
        let ((plan, quantized_weights), nanos) = timed(|| {
            let size = roster.len();
            let nodes = make_nodes_with(size, cfg.k, cfg.t, cfg.radius, cfg.node_layout)?;
            let quantized_weights = ctx.quantized_weights(size)?;
            let scale = 10f64.powi(cfg.q as i32);
            let weights = quantized_weights.iter().map(|&w| w as f64 / scale).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[TAG_LEAD, self.id.0 as u64]));
            let blind_factor = random_blind_factor(ctx.block_shape, &mut rng);
            Ok((
                GroupPlan::new(self.id, roster.clone(), cfg.k, cfg.t, nodes, weights, blind_factor)?,
                quantized_weights,
            ))
        })?;
        self.record(Role::Leader, Phase::Preprocess, Some(self.id), nanos, roster.len());
        let (weight_sigs, nanos) = timed(|| {
            Ok(roster
                .iter()
                .zip(&quantized_weights)
                .map(|(&m, &w)| (m, sign_weight(w, ctx.backend)))
                .collect::<Vec<_>>())
        })?;
        self.record(Role::Leader, Phase::Auxiliary, Some(self.id), nanos, roster.len());

        let view = Arc::new(plan.view(ctx.poly.clone()));
        let group = Some(self.id);
        for &member in &roster {
            ctx.send(
                out,
                self.me(),
                Party::Client(member),
                group,
                Body::PlanDistribution(PlanBody::Member(view.clone())),
            );
        }
        let server_plan = ServerPlan { roster, nodes: plan.nodes.clone(), k: cfg.k, t: cfg.t, deg_f: cfg.f_degree };
        ctx.send(out, self.me(), Party::Server, group, Body::PlanDistribution(PlanBody::Server(Arc::new(server_plan))));
        ctx.send(out, self.me(), Party::Server, group, Body::AuxProof(AuxBody::Weights(weight_sigs)));
        self.lead = Some(Lead { plan, quantized_weights, keys: BTreeMap::new(), teacher: None, outcome: None });
        Ok(())
    }

    fn join_group<B: PairingBackend, H: RoundHooks<B>>(
        &mut self,
        view: Arc<PlanView>,
        ctx: &Ctx<'_, B, H>,
        out: &mut Vec<Message<B>>,
    ) -> Result<()> {
        let cfg = ctx.cfg;
        let leader = view.leader;
        if view.slot(self.id).is_none() {
            return Err(Error::InvalidParameter(format!("{} got a plan for a group it is not in", self.id)));
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[TAG_MEMBER, self.id.0 as u64, leader.0 as u64]));
        let (bundle, nanos_split) =
            timed(|| split(&quantize_tensor(&self.input.logits, cfg.q)?, cfg.k, cfg.grain, Some(cfg.q), &mut rng))?;
        ctx.hooks.on_split(SplitContext { client: self.id, group: leader }, &bundle);
        let ((key, sigs), nanos_aux) = timed(|| {
            let digests = digest_units(&bundle, cfg.q)?;
            let key = PrivateKey::random(ctx.backend.order(), &mut rng);
            let sigs = sign_logits(&digests, &key, ctx.backend);
            Ok((key, sigs))
        })?;
        let (blinded, nanos_blind) =
            timed(|| blind(&bundle, NoiseParams { t: cfg.t, sigma: cfg.sigma, theta: cfg.theta }, &mut rng))?;
        let (shares, nanos_encode) = timed(|| encode(&blinded, self.id, &view))?;
        self.record(Role::Follower, Phase::Preprocess, Some(leader), nanos_split + nanos_blind, cfg.k + cfg.t);
        self.record(Role::Follower, Phase::Auxiliary, Some(leader), nanos_aux, sigs.len());
        self.record(Role::Follower, Phase::Encode, Some(leader), nanos_encode, shares.len());

        let group = Some(leader);
        for share in shares {
            ctx.send(out, self.me(), Party::Client(share.receiver), group, Body::Share(share));
        }
        ctx.send(out, self.me(), Party::Server, group, Body::AuxProof(AuxBody::Logits(sigs)));
        ctx.send(out, self.me(), Party::Client(leader), group, Body::KeyShare(key));
        let received = self.early_shares.remove(&leader).unwrap_or_default();
        self.memberships.insert(leader, Membership { view, bundle, received, aggregated: false });
        self.try_aggregate(leader, ctx, out)
    }

    fn try_aggregate<B: PairingBackend, H: RoundHooks<B>>(
        &mut self,
        leader: ClientId,
        ctx: &Ctx<'_, B, H>,
        out: &mut Vec<Message<B>>,
    ) -> Result<()> {
        let Some(m) = self.memberships.get_mut(&leader) else {
            return Ok(());
        };
        if m.aggregated || m.received.len() < m.view.members.len() {
            return Ok(());
        }
        m.aggregated = true;
        let holder = self.id;
        let (agg, nanos) = timed(|| {
            let quantized_weights = ctx.quantized_weights(m.view.members.len())?;
            let mut weights = m.view.blinded_weights.clone();
            let hook_ctx = AggregateContext {
                holder,
                group: leader,
                members: &m.view.members,
                quantized_weights: &quantized_weights,
                q: ctx.cfg.q,
            };
            ctx.hooks.on_aggregate(hook_ctx, &mut weights);
            local_aggregate_weighted(holder, &m.received, &m.view, &weights)
        })?;
        let count = m.received.len();
        self.record(Role::Follower, Phase::Aggregate, Some(leader), nanos, count);
        if !ctx.cfg.is_straggler(holder, leader) {
            ctx.send(out, self.me(), Party::Server, Some(leader), Body::AggregatedShare(agg));
        }
        Ok(())
    }

    fn close_group<B: PairingBackend, H: RoundHooks<B>>(
        &mut self,
        result: std::result::Result<Decoded<B>, Error>,
        ctx: &Ctx<'_, B, H>,
    ) -> Result<()> {
        let cfg = ctx.cfg;
        let lead =
            self.lead.as_mut().ok_or_else(|| Error::InvalidParameter("decoded result to a non-leader".into()))?;
        let decoded = match result {
            Ok(d) => d,
            Err(e) => {
                lead.outcome = Some(GroupOutcome::from_error(&e));
                return Ok(());
            }
        };
        let start = Instant::now();
        let teacher = match deblind_and_join(&decoded.slices, &lead.plan.blind_factor, cfg.grain) {
            Ok(t) => t,
            Err(e) => {
                lead.outcome = Some(GroupOutcome::from_error(&e));
                return Ok(());
            }
        };
        let outcome = match &decoded.proof {
            None => GroupOutcome::Unverified,
            Some(proof) => {
                let keys: std::result::Result<Vec<PrivateKey>, ClientId> =
                    lead.plan.members.iter().map(|m| lead.keys.get(m).cloned().ok_or(*m)).collect();
                match keys {
                    Err(member) => GroupOutcome::IncompleteAux { member },
                    Ok(keys) => {
                        match verify(
                            proof,
                            &teacher,
                            &lead.quantized_weights,
                            &keys,
                            cfg.k,
                            cfg.q,
                            cfg.probe_window,
                            ctx.backend,
                        ) {
                            Ok(v) if v.accepted() => GroupOutcome::Accepted,
                            Ok(crate::sigcrypto::Verdict::Reject { offset }) => GroupOutcome::Rejected { offset },
                            Ok(_) => unreachable!("accepted verdicts are handled above"),
                            Err(e) => GroupOutcome::from_error(&e),
                        }
                    }
                }
            }
        };
        let nanos = start.elapsed().as_nanos() as u64;
        lead.teacher = Some(teacher);
        lead.outcome = Some(outcome);
        let size = lead.plan.members.len();
        self.record(Role::Leader, Phase::Verify, Some(self.id), nanos, size);
        Ok(())
    }
}

struct ServerState<B: PairingBackend> {
    plans: BTreeMap<ClientId, Arc<ServerPlan>>,
    aggregates: BTreeMap<ClientId, Vec<AggregatedShare>>,
    aux: BTreeMap<ClientId, AuxProofs<B>>,
    timings: Vec<TimingSample>,
}

impl<B: PairingBackend> Default for ServerState<B> {
    fn default() -> Self {
        Self { plans: BTreeMap::new(), aggregates: BTreeMap::new(), aux: BTreeMap::new(), timings: Vec::new() }
    }
}

impl<B: PairingBackend> ServerState<B> {
    fn record(&mut self, phase: Phase, group: ClientId, nanos: u64, count: usize) {
        self.timings.push(TimingSample {
            party: Party::Server,
            role: Role::Server,
            phase,
            group: Some(group),
            nanos,
            count,
        });
    }

    fn start<H: RoundHooks<B>>(&mut self, stage: Stage, ctx: &Ctx<'_, B, H>) -> Result<Vec<Message<B>>> {
        let mut out = Vec::new();
        if stage != Stage::Verification {
            return Ok(out);
        }
        let plans: Vec<_> = self.plans.iter().map(|(&l, p)| (l, p.clone())).collect();
        for (leader, plan) in plans {
            let mut aggs = self.aggregates.remove(&leader).unwrap_or_default();
            aggs.sort_by_key(|a| plan.roster.iter().position(|&m| m == a.holder));
            let count = aggs.len();
            let decoded = timed(|| decode(&aggs, &plan.roster, &plan.nodes, plan.k, plan.t, plan.deg_f));
            let result = match decoded {
                Err(e) => Err(e),
                Ok((slices, nanos)) => {
                    self.record(Phase::Decode, leader, nanos, count);
                    if plan.deg_f == 1 {
                        let aux = self.aux.remove(&leader).unwrap_or_default();
                        match timed(|| aggregate_proof(&aux, &plan.roster, plan.k, ctx.backend)) {
                            Ok((proof, nanos)) => {
                                self.record(Phase::Proof, leader, nanos, plan.roster.len());
                                Ok(Decoded { slices, proof: Some(proof) })
                            }
                            Err(e) => Err(e),
                        }
                    } else {
                        Ok(Decoded { slices, proof: None })
                    }
                }
            };
            self.aggregates.insert(leader, aggs);
            ctx.send(&mut out, Party::Server, Party::Client(leader), Some(leader), Body::DecodedResult(result));
        }
        Ok(out)
    }

    fn handle<H: RoundHooks<B>>(&mut self, msg: Message<B>, _ctx: &Ctx<'_, B, H>) -> Result<Vec<Message<B>>> {
        let Party::Client(sender) = msg.from else {
            return Err(Error::InvalidParameter("server messaged itself".into()));
        };
        let leader = msg.group.ok_or_else(|| Error::InvalidParameter(format!("{:?} without a group", msg.kind())))?;
        match msg.body {
            Body::PlanDistribution(PlanBody::Server(plan)) => {
                self.plans.insert(leader, plan);
            }
            Body::AggregatedShare(agg) => self.aggregates.entry(leader).or_default().push(agg),
            Body::AuxProof(AuxBody::Logits(sigs)) => {
                self.aux.entry(leader).or_default().logits_sigs.insert(sender, sigs);
            }
            Body::AuxProof(AuxBody::Weights(sigs)) => {
                self.aux.entry(leader).or_default().weight_sigs.extend(sigs);
            }
            other => return Err(Error::InvalidParameter(format!("server received {:?}", other.kind()))),
        }
        Ok(Vec::new())
    }
}

fn assemble<B: PairingBackend, H: RoundHooks<B>>(
    cfg: &RoundConfig,
    ctx: &Ctx<'_, B, H>,
    actors: &[Actor<'_, B>],
    messages: Vec<MessageRecord>,
) -> Result<RoundTranscript> {
    let clients: Vec<&ClientState<'_>> = actors
        .iter()
        .filter_map(|a| match a {
            Actor::Client(c) => Some(&**c),
            Actor::Server(_) => None,
        })
        .collect();
    let Some(Actor::Server(server)) = actors.last() else {
        unreachable!("the server is the last actor");
    };
    let mut groups = BTreeMap::new();
    for c in &clients {
        let Some(lead) = &c.lead else { continue };
        let roster = lead.plan.members.clone();
        let bundles = roster
            .iter()
            .map(|m| {
                clients[m.0]
                    .memberships
                    .get(&c.id)
                    .map(|ms| ms.bundle.clone())
                    .ok_or_else(|| Error::InvalidParameter(format!("{m} never joined the group of {}", c.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let oracle = plaintext_oracle(&bundles, &lead.plan.weights, &ctx.poly, cfg.grain)?;
        let relative_error = match &lead.teacher {
            Some(t) => Some(relative_error(t, &oracle)?),
            None => None,
        };
        groups.insert(
            c.id,
            GroupRecord {
                leader: c.id,
                stragglers: roster.iter().copied().filter(|&m| cfg.is_straggler(m, c.id)).collect(),
                roster,
                aggregates_received: server.aggregates.get(&c.id).map_or(0, Vec::len),
                outcome: lead
                    .outcome
                    .clone()
                    .unwrap_or_else(|| GroupOutcome::Failed { reason: "no decoded result arrived".into() }),
                teacher: lead.teacher.as_ref().map(rows),
                oracle: rows(&oracle),
                relative_error,
            },
        );
    }
    Ok(RoundTranscript { config: cfg.clone(), selections: selections(actors), messages, groups })
}
