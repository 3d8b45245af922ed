use std::collections::BTreeSet;

use anyhow::Result;
use svafd::protocol::{run_round, run_round_hooked, GroupOutcome, RoundConfig, RoundOutcome};
use svafd::threats::{poison_population, score_filtration, AttackSpec, TamperHooks};
use svafd::ClientId;

use crate::config::ExperimentConfig;
use crate::csvout::{opt2, opt4, CsvDoc};
use crate::{population, rep_seed};

pub const ATTACK_SUITE_SCHEMA: &str = "svafd.attack_suite/1";

/// Verdict counts and filtration quality of one attack over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    /// `none` for the honest control, else the attack kind.
    pub attack: String,
    pub victims: usize,
    pub rounds: usize,
    pub groups: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub insufficient: usize,
    pub other: usize,
    pub benign_fraction: Option<f64>,
    pub poisoner_rate: Option<f64>,
    /// Mean `log10` relative error over accepted groups.
    pub mean_log10_re_accepted: Option<f64>,
}

fn run_one(round: &RoundConfig, cfg: &ExperimentConfig, attack: Option<&AttackSpec>) -> Result<RoundOutcome> {
    let honest = population(cfg, round)?;
    Ok(match attack {
        None => run_round(round, &honest)?,
        Some(spec) if spec.kind.is_tamper() => run_round_hooked(round, &honest, &TamperHooks::new(spec.clone())?)?,
        Some(spec) => run_round(round, &poison_population(spec, round.grain, &honest)?)?,
    })
}

/// The honest control followed by one row per configured attack.
pub fn attack_suite(cfg: &ExperimentConfig) -> Result<Vec<AttackRow>> {
    let attacks: Vec<Option<&AttackSpec>> = std::iter::once(None).chain(cfg.attacks.iter().map(Some)).collect();
    attacks
        .into_iter()
        .map(|attack| {
            let poisoners: BTreeSet<ClientId> = match attack {
                Some(spec) if spec.kind.is_poisoning() => spec.victims.clone(),
                _ => BTreeSet::new(),
            };
            let mut row = AttackRow {
                attack: attack.map_or_else(|| "none".to_string(), |a| a.kind.as_str().to_string()),
                victims: attack.map_or(0, |a| a.victims.len()),
                rounds: cfg.reps(),
                groups: 0,
                accepted: 0,
                rejected: 0,
                insufficient: 0,
                other: 0,
                benign_fraction: None,
                poisoner_rate: None,
                mean_log10_re_accepted: None,
            };
            let (mut fractions, mut res) = (Vec::new(), Vec::new());
            for rep in 0..cfg.reps() {
                let round = RoundConfig { seed: rep_seed(cfg.round.seed, rep), ..cfg.round.clone() };
                let out = run_one(&round, cfg, attack)?;
                if let Some(f) = score_filtration(&out.topology, &poisoners).benign_fraction_selected {
                    fractions.push(f);
                }
                for g in out.transcript.groups.values() {
                    row.groups += 1;
                    match g.outcome {
                        GroupOutcome::Accepted => {
                            row.accepted += 1;
                            if let Some(re) = g.relative_error {
                                res.push(re.max(f64::MIN_POSITIVE).log10());
                            }
                        }
                        GroupOutcome::Rejected { .. } => row.rejected += 1,
                        GroupOutcome::InsufficientShares { .. } => row.insufficient += 1,
                        _ => row.other += 1,
                    }
                }
            }
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            row.benign_fraction = mean(&fractions);
            row.poisoner_rate = row.benign_fraction.map(|f| 1.0 - f);
            row.mean_log10_re_accepted = mean(&res);
            Ok(row)
        })
        .collect()
}

pub fn render_attack_suite(rows: &[AttackRow]) -> Result<String> {
    let mut doc = CsvDoc::new(
        ATTACK_SUITE_SCHEMA,
        &[
            "attack",
            "victims",
            "rounds",
            "groups",
            "accepted",
            "rejected",
            "insufficient",
            "other",
            "benign_fraction",
            "poisoner_rate",
            "mean_log10_re_accepted",
        ],
    )?;
    for r in rows {
        doc.row([
            r.attack.clone(),
            r.victims.to_string(),
            r.rounds.to_string(),
            r.groups.to_string(),
            r.accepted.to_string(),
            r.rejected.to_string(),
            r.insufficient.to_string(),
            r.other.to_string(),
            opt4(r.benign_fraction),
            opt4(r.poisoner_rate),
            opt2(r.mean_log10_re_accepted),
        ])?;
    }
    doc.finish()
}
