use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use svafd::protocol::{CampaignSpec, Phase, RoundConfig};
use svafd::sigcrypto::BackendKind;
use svafd::threats::AttackSpec;
use svafd::workload::WorkloadConfig;

/// The `(N, K, T)` grid of `table-error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub t: Vec<usize>,
    pub parallel: bool,
}

impl Default for Sweep {
    fn default() -> Self {
        Self { n: vec![50, 75, 100], k: vec![10, 20, 30], t: vec![10, 20, 30], parallel: true }
    }
}

/// Settings of the `timing` command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSweep {
    /// Values of `K` to time; empty means the round's own `K`.
    pub k: Vec<usize>,
    /// Phases to report; empty means all of them.
    pub stages: Vec<Phase>,
}

/// One experiment: a round, the data it runs on, and what to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub round: RoundConfig,
    pub workload: WorkloadConfig,
    pub sweep: Sweep,
    pub timing: TimingSweep,
    pub attacks: Vec<AttackSpec>,
    /// Repetitions of every run.
    pub reps: usize,
    /// Output directory.
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            round: RoundConfig::default(),
            workload: WorkloadConfig::default(),
            sweep: Sweep::default(),
            timing: TimingSweep::default(),
            attacks: Vec::new(),
            reps: 5,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub reps: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(seed) = o.seed {
            self.round.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(backend) = o.backend {
            self.round.backend = backend;
        }
        if let Some(reps) = o.reps {
            self.reps = reps;
        }
        self
    }

    pub fn reps(&self) -> usize {
        self.reps.max(1)
    }

    /// The coded-aggregation sweep behind `table-error`.
    pub fn campaign(&self) -> CampaignSpec {
        CampaignSpec {
            n: self.sweep.n.clone(),
            k: self.sweep.k.clone(),
            t: self.sweep.t.clone(),
            reps: self.reps(),
            sigma: self.round.sigma,
            theta: self.round.theta,
            radius: self.round.radius,
            node_layout: self.round.node_layout,
            f_degree: self.round.f_degree,
            seed: self.round.seed,
            workload: self.workload.clone(),
            parallel: self.sweep.parallel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            reps = 2
            [round]
            n = 10
            r = 4
            stragglers = ["3", "2@7"]
            [sweep]
            n = [20]
            [[attacks]]
            kind = "scale"
            victims = [1, 2]
            params = { factor = 3.0 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.round.n, 10);
        assert_eq!(cfg.round.stragglers.len(), 2);
        assert_eq!(cfg.sweep.n, vec![20]);
        assert_eq!(cfg.attacks[0].params.factor, 3.0);
        assert_eq!(cfg.campaign().reps, 2);
    }

    #[test]
    fn unknown_keys_fail() {
        assert!(ExperimentConfig::from_toml("rounds = 3").is_err());
        assert!(ExperimentConfig::from_toml("[round]\nfoo = 1").is_err());
    }

    #[test]
    fn overrides_win() {
        let o = Overrides { seed: Some(9), reps: Some(1), backend: Some(BackendKind::Pairing), out: None };
        let cfg = ExperimentConfig::default().with_overrides(&o);
        assert_eq!((cfg.round.seed, cfg.reps, cfg.round.backend), (9, 1, BackendKind::Pairing));
        assert_eq!(cfg.out, PathBuf::from("out"));
    }
}
