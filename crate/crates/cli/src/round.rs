use anyhow::Result;
use svafd::protocol::{run_round, GroupOutcome, RoundOutcome};

use crate::config::ExperimentConfig;
use crate::csvout::CsvDoc;
use crate::population;

pub const ROUND_SCHEMA: &str = "svafd.round/1";

/// One round on the configured workload.
pub fn single_round(cfg: &ExperimentConfig) -> Result<RoundOutcome> {
    cfg.round.validate()?;
    Ok(run_round(&cfg.round, &population(cfg, &cfg.round)?)?)
}

/// One row per group: roster, verdict and relative error.
pub fn render_round(outcome: &RoundOutcome) -> Result<String> {
    let mut doc =
        CsvDoc::new(ROUND_SCHEMA, &["leader", "roster", "outcome", "offset", "aggregates", "relative_error"])?;
    for g in outcome.transcript.groups.values() {
        let (status, offset) = match &g.outcome {
            GroupOutcome::Accepted => ("accepted".to_string(), String::new()),
            GroupOutcome::Rejected { offset } => {
                ("rejected".to_string(), offset.map(|o| o.to_string()).unwrap_or_default())
            }
            GroupOutcome::Unverified => ("unverified".to_string(), String::new()),
            GroupOutcome::InsufficientShares { have, need } => {
                (format!("insufficient_shares {have}/{need}"), String::new())
            }
            GroupOutcome::IncompleteAux { member } => (format!("incomplete_aux {member}"), String::new()),
            GroupOutcome::Failed { reason } => (format!("failed: {reason}"), String::new()),
        };
        let roster: Vec<String> = g.roster.iter().map(ToString::to_string).collect();
        doc.row([
            g.leader.to_string(),
            roster.join(" "),
            status,
            offset,
            g.aggregates_received.to_string(),
            g.relative_error.map(|e| format!("{e:.3e}")).unwrap_or_default(),
        ])?;
    }
    doc.finish()
}
