//! Adversaries and filtration metrics.
//!
//! Five client-side poisoning families rewrite a victim's local rows and
//! knowledge before the round starts. Three integrity tampers run as round
//! hooks inside the owning party's handler. The family names are this
//! crate's own choice of common poisoning patterns.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::Topology;
use crate::numerics::{RealTensor, C64};
use crate::protocol::{AggregateContext, Body, ClientInput, Message, Party, RoundHooks};
use crate::sigcrypto::PairingBackend;
use crate::workload::LOGIT_BOUND;
use crate::{derive_seed, ClientId, Grain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Uniform noise over the honest logit range.
    RandomLogits,
    /// Classes relabelled by a permutation.
    LabelFlip,
    /// Everything multiplied by a factor.
    Scale,
    /// Honest values plus Gaussian noise.
    AdditiveNoise,
    /// Every victim emits the same random knowledge.
    ColludingCopy,
    /// One entry of one outgoing share is shifted.
    ShareTamper,
    /// One aggregation weight is shifted by whole quantization units.
    WeightTamper,
    /// One entry of a decoded result is shifted by the server.
    ServerTamper,
}

impl AttackKind {
    pub const ALL: [AttackKind; 8] = [
        Self::RandomLogits,
        Self::LabelFlip,
        Self::Scale,
        Self::AdditiveNoise,
        Self::ColludingCopy,
        Self::ShareTamper,
        Self::WeightTamper,
        Self::ServerTamper,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RandomLogits => "random_logits",
            Self::LabelFlip => "label_flip",
            Self::Scale => "scale",
            Self::AdditiveNoise => "additive_noise",
            Self::ColludingCopy => "colluding_copy",
            Self::ShareTamper => "share_tamper",
            Self::WeightTamper => "weight_tamper",
            Self::ServerTamper => "server_tamper",
        }
    }

    /// Whether the attack rewrites inputs rather than hooking the round.
    pub fn is_poisoning(self) -> bool {
        !self.is_tamper()
    }

    pub fn is_tamper(self) -> bool {
        matches!(self, Self::ShareTamper | Self::WeightTamper | Self::ServerTamper)
    }

    /// Whether the attack runs at the server rather than at clients.
    pub fn server_side(self) -> bool {
        self == Self::ServerTamper
    }
}

/// Kind-specific parameters. Unused fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackParams {
    /// `label_flip`: class `i` is reported as `permutation[i]`.
    pub permutation: Option<Vec<usize>>,
    /// `scale`.
    pub factor: f64,
    /// `additive_noise`.
    pub sigma: f64,
    /// Tamper size: logits units for share and server tampers, quantized
    /// weight units for the weight tamper.
    pub delta: f64,
    /// Restricts a tamper to the group of this leader.
    pub group: Option<ClientId>,
    /// `share_tamper`: receiver of the tampered share (defaults to the
    /// victim itself). `weight_tamper`: member whose weight is shifted
    /// (defaults to the first roster member).
    pub target: Option<ClientId>,
    pub seed: u64,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self { permutation: None, factor: 1.0, sigma: 1.0, delta: 1.0, group: None, target: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    #[serde(default)]
    pub params: AttackParams,
    /// Attacking clients. Server tampers ignore this.
    #[serde(default)]
    pub victims: BTreeSet<ClientId>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, victims: impl IntoIterator<Item = usize>) -> Self {
        Self { kind, params: AttackParams::default(), victims: victims.into_iter().map(ClientId).collect() }
    }

    pub fn with_params(mut self, params: AttackParams) -> Self {
        self.params = params;
        self
    }

    fn flip(&self, classes: usize) -> Result<Vec<usize>> {
        let perm = self.params.permutation.clone().unwrap_or_else(|| (0..classes).rev().collect());
        let mut seen = vec![false; classes];
        if perm.len() != classes || perm.iter().any(|&p| p >= classes || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation of {classes} classes")));
        }
        Ok(perm)
    }
}

fn uniform_matrix<R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> RealTensor {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-LOGIT_BOUND..=LOGIT_BOUND))
}

/// Rewrites one client's rows and knowledge. `grain` says how the knowledge
/// matrix is laid out: class grain permutes rows under a label flip, sample
/// grain permutes class columns.
pub fn apply_attack(spec: &AttackSpec, client: ClientId, grain: Grain, honest: &ClientInput) -> Result<ClientInput> {
    if spec.kind.is_tamper() {
        return Err(Error::KindMismatch(format!("{:?} is a round tamper, not a poisoning attack", spec.kind)));
    }
    let d = honest.logits.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.params.seed, &[client.0 as u64]));
    let mut out = honest.clone();
    match spec.kind {
        AttackKind::RandomLogits => {
            out.logits = uniform_matrix(honest.logits.dim(), &mut rng);
            for (_, row) in &mut out.samples {
                row.iter_mut().for_each(|v| *v = rng.random_range(-LOGIT_BOUND..=LOGIT_BOUND));
            }
        }
        AttackKind::LabelFlip => {
            let perm = spec.flip(d)?;
            match grain {
                Grain::Class => {
                    for (i, row) in honest.logits.rows().into_iter().enumerate() {
                        out.logits.row_mut(perm[i]).assign(&row);
                    }
                }
                Grain::Sample => {
                    for (j, col) in honest.logits.columns().into_iter().enumerate() {
                        out.logits.column_mut(perm[j]).assign(&col);
                    }
                }
            }
            for (y, _) in &mut out.samples {
                *y = perm[*y];
            }
        }
        AttackKind::Scale => {
            let f = spec.params.factor;
            out.logits.mapv_inplace(|v| v * f);
            out.samples.iter_mut().for_each(|(_, r)| r.iter_mut().for_each(|v| *v *= f));
        }
        AttackKind::AdditiveNoise => {
            let normal = Normal::new(0.0, spec.params.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            out.logits.mapv_inplace(|v| v + normal.sample(&mut rng));
            for (_, row) in &mut out.samples {
                row.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
            }
        }
        AttackKind::ColludingCopy => {
            // Shared across victims: seeded by the attack alone.
            let mut shared = ChaCha8Rng::seed_from_u64(derive_seed(spec.params.seed, &[0xc0de]));
            let cal = uniform_matrix((d, d), &mut shared);
            out.logits = match grain {
                Grain::Class if honest.logits.nrows() == d => cal.clone(),
                _ => uniform_matrix(honest.logits.dim(), &mut shared),
            };
            out.samples = cal.rows().into_iter().enumerate().map(|(y, r)| (y, r.to_vec())).collect();
        }
        AttackKind::ShareTamper | AttackKind::WeightTamper | AttackKind::ServerTamper => unreachable!(),
    }
    Ok(out)
}

/// [`apply_attack`] on every victim of a population.
pub fn poison_population(spec: &AttackSpec, grain: Grain, inputs: &[ClientInput]) -> Result<Vec<ClientInput>> {
    inputs
        .iter()
        .enumerate()
        .map(|(i, input)| {
            if spec.victims.contains(&ClientId(i)) {
                apply_attack(spec, ClientId(i), grain, input)
            } else {
                Ok(input.clone())
            }
        })
        .collect()
}

/// Round hooks that carry out one tamper attack.
#[derive(Debug, Clone)]
pub struct TamperHooks {
    spec: AttackSpec,
}

impl TamperHooks {
    pub fn new(spec: AttackSpec) -> Result<Self> {
        if !spec.kind.is_tamper() {
            return Err(Error::KindMismatch(format!("{:?} is a poisoning attack, not a round tamper", spec.kind)));
        }
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &AttackSpec {
        &self.spec
    }

    fn in_scope(&self, group: Option<ClientId>) -> bool {
        self.spec.params.group.is_none_or(|g| group == Some(g))
    }

    fn is_victim(&self, party: Party) -> bool {
        matches!(party, Party::Client(c) if self.spec.victims.contains(&c))
    }
}

impl<B: PairingBackend> RoundHooks<B> for TamperHooks {
    fn on_send(&self, msg: &mut Message<B>) {
        if !self.in_scope(msg.group) {
            return;
        }
        let delta = self.spec.params.delta;
        match (&self.spec.kind, &mut msg.body) {
            (AttackKind::ShareTamper, Body::Share(share)) if self.is_victim(msg.from) => {
                let target = self.spec.params.target.map(Party::Client).unwrap_or(msg.from);
                if msg.to == target {
                    share.payload[[0, 0]] += C64::new(delta, 0.0);
                }
            }
            (AttackKind::ServerTamper, Body::DecodedResult(Ok(decoded))) if msg.from == Party::Server => {
                if let Some(first) = decoded.slices.first_mut() {
                    first[[0, 0]] += delta;
                }
            }
            _ => {}
        }
    }

    fn on_aggregate(&self, ctx: AggregateContext<'_>, blinded_weights: &mut [RealTensor]) {
        if self.spec.kind != AttackKind::WeightTamper
            || !self.spec.victims.contains(&ctx.holder)
            || !self.in_scope(Some(ctx.group))
        {
            return;
        }
        let slot = self.spec.params.target.and_then(|t| ctx.members.iter().position(|&m| m == t)).unwrap_or(0);
        let w = ctx.quantized_weights[slot] as f64;
        if w != 0.0 {
            let ratio = (w + self.spec.params.delta) / w;
            blinded_weights[slot].mapv_inplace(|v| v * ratio);
        }
    }
}

/// Selection quality over the groups led by benign clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiltrationMetrics {
    /// Benign member slots over all member slots. `None` when no benign
    /// client leads a group.
    pub benign_fraction_selected: Option<f64>,
    pub poisoner_selection_rate: Option<f64>,
    pub benign_groups: usize,
    pub member_slots: usize,
}

pub fn score_filtration(topology: &Topology, poisoners: &BTreeSet<ClientId>) -> FiltrationMetrics {
    let (mut groups, mut slots, mut benign) = (0, 0, 0);
    for (leader, members) in &topology.groups {
        if poisoners.contains(leader) {
            continue;
        }
        groups += 1;
        slots += members.len();
        benign += members.iter().filter(|m| !poisoners.contains(m)).count();
    }
    let fraction = (slots > 0).then(|| benign as f64 / slots as f64);
    FiltrationMetrics {
        benign_fraction_selected: fraction,
        poisoner_selection_rate: fraction.map(|f| 1.0 - f),
        benign_groups: groups,
        member_slots: slots,
    }
}
