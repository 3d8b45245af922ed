//! Experiment driver: parses an [`ExperimentConfig`], runs rounds and
//! sweeps, and renders versioned CSV reports.
//!
//! Every renderer writes `# schema: svafd.<name>/1` as its first line.

mod attacks;
mod config;
mod csvout;
mod round;
mod table;
mod timing;

use anyhow::Result;
use svafd::protocol::{ClientInput, RoundConfig};

pub use attacks::{attack_suite, render_attack_suite, AttackRow, ATTACK_SUITE_SCHEMA};
pub use config::{ExperimentConfig, Overrides, Sweep, TimingSweep};
pub use round::{render_round, single_round, ROUND_SCHEMA};
pub use table::{render_table_error, table_error, TABLE_ERROR_SCHEMA};
pub use timing::{render_timing, timing, TimingRow, TIMING_SCHEMA};

/// Seed of repetition `rep`.
pub fn rep_seed(base: u64, rep: usize) -> u64 {
    svafd::derive_seed(base, &[0x5eed, rep as u64])
}

/// The workload's clients for a round.
pub fn population(cfg: &ExperimentConfig, round: &RoundConfig) -> Result<Vec<ClientInput>> {
    Ok(cfg.workload.population(round.n, round.grain, round.seed)?.into_iter().map(|(_, d)| d.into()).collect())
}
