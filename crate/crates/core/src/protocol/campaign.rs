use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{
    blind, check_achievable, deblind_and_join, decode, encode, local_aggregate, plaintext_oracle, random_blind_factor,
    split, uniform_weights, AchievabilityConfig, ElementwisePoly, GroupPlan, NoiseParams,
};
use crate::error::{Error, Result};
use crate::numerics::{make_nodes_with, relative_error, NodeLayout, RealTensor};
use crate::workload::WorkloadConfig;
use crate::{derive_seed, ClientId, Grain};

/// One group's coded aggregation, run without the message bus.
#[derive(Debug, Clone)]
pub struct CodedGroup<'a> {
    /// One knowledge matrix per member, in evaluation-point order.
    pub logits: &'a [RealTensor],
    pub k: usize,
    pub noise: NoiseParams,
    pub radius: f64,
    pub layout: NodeLayout,
    pub f: ElementwisePoly,
    pub grain: Grain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodedResult {
    pub teacher: RealTensor,
    pub oracle: RealTensor,
    pub relative_error: f64,
    /// Wall time of each member's encode.
    pub encode_nanos: Vec<u64>,
}

impl CodedGroup<'_> {
    /// Every member splits, blinds and encodes; every member not in
    /// `dropped` aggregates; the rest decode and deblind. Uniform weights.
    pub fn run(&self, dropped: &BTreeSet<usize>, seed: u64) -> Result<CodedResult> {
        let r = self.logits.len();
        let t = self.noise.t;
        let members: Vec<ClientId> = (0..r).map(ClientId).collect();
        let nodes = make_nodes_with(r, self.k, t, self.radius, self.layout)?;
        let (rows, cols) = self.logits.first().ok_or(Error::EmptyDataset)?.dim();
        let block = match self.grain {
            Grain::Class => (rows, cols),
            Grain::Sample if rows % self.k != 0 => return Err(Error::IndivisibleO { rows, k: self.k }),
            Grain::Sample => (rows / self.k, cols),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x1ead]));
        let weights = uniform_weights(r);
        let plan = GroupPlan::new(
            ClientId(r),
            members.clone(),
            self.k,
            t,
            nodes.clone(),
            weights.clone(),
            random_blind_factor(block, &mut rng),
        )?;
        let view = plan.view(self.f.clone());
        let mut bundles = Vec::with_capacity(r);
        let mut inbox: Vec<Vec<_>> = vec![Vec::with_capacity(r); r];
        let mut encode_nanos = Vec::with_capacity(r);
        for (z, logits) in self.logits.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x3e3b, z as u64]));
            let bundle = split(logits, self.k, self.grain, None, &mut rng)?;
            let blinded = blind(&bundle, self.noise, &mut rng)?;
            let start = std::time::Instant::now();
            let shares = encode(&blinded, ClientId(z), &view)?;
            encode_nanos.push(start.elapsed().as_nanos() as u64);
            for share in shares {
                inbox[share.receiver.0].push(share);
            }
            bundles.push(bundle);
        }
        let aggregates = inbox
            .iter()
            .enumerate()
            .filter(|(x, _)| !dropped.contains(x))
            .map(|(x, received)| local_aggregate(ClientId(x), received, &view))
            .collect::<Result<Vec<_>>>()?;
        let decoded = decode(&aggregates, &members, &nodes, self.k, t, self.f.degree())?;
        let teacher = deblind_and_join(&decoded, &plan.blind_factor, self.grain)?;
        let oracle = plaintext_oracle(&bundles, &weights, &self.f, self.grain)?;
        let relative_error = relative_error(&teacher, &oracle)?;
        Ok(CodedResult { teacher, oracle, relative_error, encode_nanos })
    }
}

/// A sweep over `(N, K, T)`: each cell codes one group of `N` clients from
/// the synthetic workload and reports the mean `log10` relative error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSpec {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub t: Vec<usize>,
    pub reps: usize,
    pub sigma: f64,
    pub theta: f64,
    pub radius: f64,
    pub node_layout: NodeLayout,
    pub f_degree: usize,
    pub seed: u64,
    pub workload: WorkloadConfig,
    pub parallel: bool,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            n: vec![50, 75, 100],
            k: vec![10, 20, 30],
            t: vec![10, 20, 30],
            reps: 5,
            sigma: 1e3,
            theta: 6.0,
            radius: 1.0,
            node_layout: NodeLayout::Auto,
            f_degree: 1,
            seed: 0,
            workload: WorkloadConfig::default(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub k: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    /// `None` when the cell cannot decode at all.
    pub log10_re: Option<Vec<f64>>,
}

impl CellResult {
    pub fn feasible(&self) -> bool {
        self.log10_re.is_some()
    }

    pub fn mean_log10_re(&self) -> Option<f64> {
        self.log10_re.as_ref().map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Two decimals, or `N/A`.
    pub fn display(&self) -> String {
        self.mean_log10_re().map_or_else(|| "N/A".to_string(), |m| format!("{m:.2}"))
    }
}

impl CampaignSpec {
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells: Vec<Cell> = self
            .n
            .iter()
            .flat_map(|&n| self.k.iter().flat_map(move |&k| self.t.iter().map(move |&t| Cell { n, k, t })))
            .collect();
        cells.sort();
        cells.dedup();
        cells
    }

    pub fn feasible(&self, cell: Cell) -> bool {
        cell.k > 0
            && self.f_degree > 0
            && check_achievable(AchievabilityConfig { evaluators: cell.n, k: cell.k, t: cell.t, deg_f: self.f_degree })
                .feasible
    }

    /// `log10 RE` of one repetition of a feasible cell.
    pub fn run_rep(&self, cell: Cell, rep: usize) -> Result<f64> {
        let seed = derive_seed(self.seed, &[cell.n as u64, cell.k as u64, cell.t as u64, rep as u64]);
        let logits: Vec<RealTensor> =
            self.workload.population(cell.n, Grain::Class, seed)?.into_iter().map(|(_, d)| d.logits).collect();
        let group = CodedGroup {
            logits: &logits,
            k: cell.k,
            noise: NoiseParams { t: cell.t, sigma: self.sigma, theta: self.theta },
            radius: self.radius,
            layout: self.node_layout,
            f: ElementwisePoly::monomial(self.f_degree),
            grain: Grain::Class,
        };
        let re = group.run(&BTreeSet::new(), seed)?.relative_error;
        Ok(re.max(f64::MIN_POSITIVE).log10())
    }

    pub fn run_cell(&self, cell: Cell) -> Result<CellResult> {
        if !self.feasible(cell) {
            return Ok(CellResult { cell, log10_re: None });
        }
        let reps = (0..self.reps.max(1)).map(|rep| self.run_rep(cell, rep)).collect::<Result<Vec<_>>>()?;
        Ok(CellResult { cell, log10_re: Some(reps) })
    }
}

/// Runs every cell of the sweep, in parallel when asked. Results come back
/// sorted by `(N, K, T)` regardless of scheduling.
pub fn run_campaign(spec: &CampaignSpec) -> Result<Vec<CellResult>> {
    let cells = spec.cells();
    let mut out: Vec<CellResult> = if spec.parallel {
        cells.par_iter().map(|&c| spec.run_cell(c)).collect::<Result<_>>()?
    } else {
        cells.iter().map(|&c| spec.run_cell(c)).collect::<Result<_>>()?
    };
    out.sort_by_key(|r| r.cell);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CampaignSpec {
        CampaignSpec {
            n: vec![8, 4],
            k: vec![2, 3],
            t: vec![1, 2],
            reps: 2,
            workload: WorkloadConfig { samples: 40, ..WorkloadConfig::default() },
            ..CampaignSpec::default()
        }
    }

    #[test]
    fn cells_are_sorted_and_marked() {
        let spec = tiny();
        let rows = run_campaign(&spec).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.windows(2).all(|w| w[0].cell < w[1].cell));
        for r in &rows {
            assert_eq!(r.feasible(), r.cell.k + r.cell.t <= r.cell.n);
            if let Some(m) = r.mean_log10_re() {
                assert!(m <= -6.0, "{:?} {m}", r.cell);
            } else {
                assert_eq!(r.display(), "N/A");
            }
        }
    }

    #[test]
    fn schedule_does_not_change_results() {
        let spec = tiny();
        let a = run_campaign(&spec).unwrap();
        let b = run_campaign(&CampaignSpec { parallel: false, ..spec }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coded_group_tolerates_drops_up_to_threshold() {
        let logits: Vec<RealTensor> = WorkloadConfig { samples: 40, ..WorkloadConfig::default() }
            .population(7, Grain::Class, 1)
            .unwrap()
            .into_iter()
            .map(|(_, d)| d.logits)
            .collect();
        let group = CodedGroup {
            logits: &logits,
            k: 2,
            noise: NoiseParams { t: 2, sigma: 1e3, theta: 6.0 },
            radius: 1.0,
            layout: NodeLayout::Auto,
            f: ElementwisePoly::identity(),
            grain: Grain::Class,
        };
        assert!(group.run(&BTreeSet::from([0, 3, 6]), 5).unwrap().relative_error <= 1e-6);
        assert_eq!(
            group.run(&BTreeSet::from([0, 1, 3, 6]), 5).unwrap_err(),
            Error::InsufficientShares { have: 3, need: 4 }
        );
    }
}
