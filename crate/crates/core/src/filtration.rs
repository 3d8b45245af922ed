//! Quality-aware knowledge filtration.
//!
//! Each client summarises its local knowledge as class-average logits (CAL),
//! hashes them with a shared Gaussian random projection, and ranks every
//! other client by the cosine similarity of the hashed values. The top `R`
//! candidates form the client's aggregation group, and the union of all groups
//! fixes which client pairs open a channel.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::RealTensor;
use crate::ClientId;

/// One labelled sample: `(label, logits row)`, labels zero based.
pub type Sample = (usize, Vec<f64>);

/// Per-class mean logits. Rows of classes without samples are zero and
/// flagged as absent.
#[derive(Debug, Clone, PartialEq)]
pub struct CalMatrix {
    means: RealTensor,
    counts: Vec<usize>,
}

impl CalMatrix {
    pub fn means(&self) -> &RealTensor {
        &self.means
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn is_absent(&self, class: usize) -> bool {
        self.counts[class] == 0
    }

    pub fn absent(&self) -> Vec<bool> {
        self.counts.iter().map(|&c| c == 0).collect()
    }

    /// Replaces the mean matrix while keeping the class counts, for
    /// adversaries that post-process their summary.
    pub fn with_means(&self, means: RealTensor) -> Result<Self> {
        crate::numerics::ensure_shape(self.means.dim(), means.dim())?;
        Ok(Self { means, counts: self.counts.clone() })
    }
}

pub fn compute_cal(samples: &[Sample]) -> Result<CalMatrix> {
    let Some((_, first)) = samples.first() else {
        return Err(Error::EmptyDataset);
    };
    let classes = first.len();
    let mut sums = Array2::<f64>::zeros((classes, classes));
    let mut counts = vec![0usize; classes];
    for (label, row) in samples {
        if *label >= classes {
            return Err(Error::InvalidLabel { label: *label, classes });
        }
        if row.len() != classes {
            return Err(Error::ShapeMismatch { expected: (1, classes), found: (1, row.len()) });
        }
        counts[*label] += 1;
        for (acc, v) in sums.row_mut(*label).iter_mut().zip(row) {
            *acc += v;
        }
    }
    for (mut row, &count) in sums.rows_mut().into_iter().zip(&counts) {
        if count > 0 {
            row /= count as f64;
        }
    }
    Ok(CalMatrix { means: sums, counts })
}

/// Parameters of the shared random projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LshConfig {
    pub projection_seed: u64,
    /// Columns of the hashed value.
    pub output_dim: usize,
}

impl LshConfig {
    pub const DEFAULT_OUTPUT_DIM: usize = 16;

    pub fn new(projection_seed: u64) -> Self {
        Self { projection_seed, output_dim: Self::DEFAULT_OUTPUT_DIM }
    }
}

/// A hashed CAL together with the absent-class mask of its source.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedCal {
    pub values: RealTensor,
    pub absent: Vec<bool>,
}

/// `D x P` matrix of i.i.d. standard normals drawn from the projection seed.
pub fn projection_matrix(cfg: &LshConfig, classes: usize) -> RealTensor {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.projection_seed);
    Array2::from_shape_simple_fn((classes, cfg.output_dim), || StandardNormal.sample(&mut rng))
}

pub fn lsh_project(cal: &CalMatrix, cfg: &LshConfig) -> Result<HashedCal> {
    if cfg.output_dim == 0 {
        return Err(Error::InvalidParameter("LSH output dimension must be at least 1".into()));
    }
    let projection = projection_matrix(cfg, cal.classes());
    Ok(HashedCal { values: cal.means().dot(&projection), absent: cal.absent() })
}

/// Cosine similarity of two equally shaped matrices, flattened. Zero when
/// either side is all zero.
pub fn cosine(a: &RealTensor, b: &RealTensor) -> Result<f64> {
    crate::numerics::ensure_shape(a.dim(), b.dim())?;
    Ok(cosine_filtered(a, b, |_| true))
}

fn cosine_filtered(a: &RealTensor, b: &RealTensor, keep_row: impl Fn(usize) -> bool) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (i, (ra, rb)) in a.rows().into_iter().zip(b.rows()).enumerate() {
        if !keep_row(i) {
            continue;
        }
        for (x, y) in ra.iter().zip(rb) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Cosine similarity of two hashed CALs over the classes present in both.
pub fn intimacy(a: &HashedCal, b: &HashedCal) -> Result<f64> {
    crate::numerics::ensure_shape(a.values.dim(), b.values.dim())?;
    Ok(cosine_filtered(&a.values, &b.values, |row| {
        !a.absent.get(row).copied().unwrap_or(false) && !b.absent.get(row).copied().unwrap_or(false)
    }))
}

/// A client's similarity to every other client.
#[derive(Debug, Clone, PartialEq)]
pub struct IntimacyList {
    pub owner: ClientId,
    pub scores: BTreeMap<ClientId, f64>,
}

/// Builds `owner`'s list from the gathered hashed values. The owner's own
/// entry is kept (as self-similarity) but never selected.
pub fn intimacy_list(owner: ClientId, hashed: &BTreeMap<ClientId, HashedCal>) -> Result<IntimacyList> {
    let mine = hashed.get(&owner).ok_or_else(|| Error::InvalidParameter(format!("no hashed CAL for {owner}")))?;
    let scores = hashed.iter().map(|(&id, other)| intimacy(mine, other).map(|s| (id, s))).collect::<Result<_>>()?;
    Ok(IntimacyList { owner, scores })
}

/// The `r` highest-scoring clients other than the owner, ties broken by
/// ascending id. Returned in selection order.
pub fn select_group(list: &IntimacyList, r: usize) -> Result<Vec<ClientId>> {
    let mut candidates: Vec<(ClientId, f64)> =
        list.scores.iter().filter(|(&id, _)| id != list.owner).map(|(&id, &s)| (id, s)).collect();
    if r > candidates.len() {
        return Err(Error::RTooLarge { r, available: candidates.len() });
    }
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(candidates.into_iter().take(r).map(|(id, _)| id).collect())
}

/// Clients, channels and groups of one round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Topology {
    pub nodes: BTreeSet<ClientId>,
    /// Unordered pairs stored as `(low, high)`.
    pub edges: BTreeSet<(ClientId, ClientId)>,
    pub groups: BTreeMap<ClientId, Vec<ClientId>>,
}

impl Topology {
    pub fn has_edge(&self, a: ClientId, b: ClientId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Checks that every node leads exactly one group of `r` followers.
    pub fn check_round(&self, r: usize) -> Result<()> {
        let leaders: BTreeSet<_> = self.groups.keys().copied().collect();
        if leaders != self.nodes {
            return Err(Error::InvalidParameter("some client does not lead a group".into()));
        }
        if let Some((leader, members)) = self.groups.iter().find(|(_, m)| m.len() != r) {
            return Err(Error::InvalidParameter(format!(
                "group of {leader} has {} members, expected {r}",
                members.len()
            )));
        }
        Ok(())
    }
}

/// Connects every pair of clients that share a group, leader included.
pub fn build_topology(groups: &BTreeMap<ClientId, Vec<ClientId>>) -> Result<Topology> {
    let mut topo = Topology { groups: groups.clone(), ..Topology::default() };
    for (&leader, members) in groups {
        if members.contains(&leader) {
            return Err(Error::InvalidParameter(format!("group of {leader} contains its leader")));
        }
        let clique: Vec<ClientId> = std::iter::once(leader).chain(members.iter().copied()).collect();
        topo.nodes.extend(clique.iter().copied());
        for (i, &a) in clique.iter().enumerate() {
            for &b in &clique[i + 1..] {
                if a != b {
                    topo.edges.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    Ok(topo)
}

/// The coordinator step: every gathered client selects its group and the
/// topology is built from the result. Independent of gathering order.
pub fn form_topology(hashed: &BTreeMap<ClientId, HashedCal>, r: usize) -> Result<Topology> {
    let mut groups = BTreeMap::new();
    for &owner in hashed.keys() {
        let list = intimacy_list(owner, hashed)?;
        groups.insert(owner, select_group(&list, r)?);
    }
    let mut topo = build_topology(&groups)?;
    topo.nodes.extend(hashed.keys().copied());
    Ok(topo)
}
