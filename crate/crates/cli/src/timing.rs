use std::collections::BTreeMap;

use anyhow::Result;
use svafd::protocol::{run_round, Phase, Role, RoundConfig};

use crate::config::ExperimentConfig;
use crate::csvout::CsvDoc;
use crate::{population, rep_seed};

pub const TIMING_SCHEMA: &str = "svafd.timing/1";

/// Wall time of one role in one phase at one `K`, over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub k: usize,
    pub role: Role,
    pub phase: Phase,
    /// Per-repetition mean over that round's samples.
    pub rep_means_ns: Vec<f64>,
    /// Median over every sample of every repetition.
    pub median_ns: f64,
    /// Mean items per sample; deterministic.
    pub count: f64,
}

impl TimingRow {
    pub fn mean_ns(&self) -> f64 {
        self.rep_means_ns.iter().sum::<f64>() / self.rep_means_ns.len() as f64
    }

    pub fn var_ns(&self) -> f64 {
        let n = self.rep_means_ns.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_ns();
        self.rep_means_ns.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
    }
}

/// Per-rep means, every sample, summed counts, sample total.
type Samples = (Vec<f64>, Vec<u64>, usize, usize);

fn median(v: &mut [u64]) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    }
}

/// Times full rounds for every `K` of the timing sweep. Infeasible values
/// are skipped with a warning.
pub fn timing(cfg: &ExperimentConfig) -> Result<Vec<TimingRow>> {
    let ks = if cfg.timing.k.is_empty() { vec![cfg.round.k] } else { cfg.timing.k.clone() };
    let mut rows = Vec::new();
    for k in ks {
        let base = RoundConfig { k, ..cfg.round.clone() };
        if let Err(e) = base.validate() {
            log::warn!("skipping K={k}: {e}");
            continue;
        }
        let mut samples: BTreeMap<(Role, Phase), Samples> = BTreeMap::new();
        for rep in 0..cfg.reps() {
            let round = RoundConfig { seed: rep_seed(base.seed, rep), ..base.clone() };
            let outcome = run_round(&round, &population(cfg, &round)?)?;
            let mut per_rep: BTreeMap<(Role, Phase), Vec<u64>> = BTreeMap::new();
            for t in &outcome.timings {
                if cfg.timing.stages.is_empty() || cfg.timing.stages.contains(&t.phase) {
                    per_rep.entry((t.role, t.phase)).or_default().push(t.nanos);
                    let e = samples.entry((t.role, t.phase)).or_default();
                    e.2 += t.count;
                    e.3 += 1;
                }
            }
            for (key, nanos) in per_rep {
                let e = samples.entry(key).or_default();
                e.0.push(nanos.iter().sum::<u64>() as f64 / nanos.len() as f64);
                e.1.extend(nanos);
            }
        }
        for ((role, phase), (rep_means_ns, mut all, counts, n)) in samples {
            rows.push(TimingRow {
                k,
                role,
                phase,
                rep_means_ns,
                median_ns: median(&mut all),
                count: counts as f64 / n as f64,
            });
        }
    }
    Ok(rows)
}

/// Without wall-clock columns the output is byte-deterministic.
pub fn render_timing(rows: &[TimingRow], with_times: bool) -> Result<String> {
    let header: &[&str] = if with_times {
        &["k", "role", "stage", "reps", "count", "mean_ns", "var_ns", "median_ns"]
    } else {
        &["k", "role", "stage", "reps", "count"]
    };
    let mut doc = CsvDoc::new(TIMING_SCHEMA, header)?;
    for r in rows {
        let mut fields = vec![
            r.k.to_string(),
            r.role.as_str().to_string(),
            r.phase.as_str().to_string(),
            r.rep_means_ns.len().to_string(),
            format!("{}", r.count),
        ];
        if with_times {
            fields.extend([format!("{:.0}", r.mean_ns()), format!("{:.0}", r.var_ns()), format!("{:.0}", r.median_ns)]);
        }
        doc.row(fields)?;
    }
    doc.finish()
}
