use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coding::{check_achievable, AchievabilityConfig, ElementwisePoly};
use crate::error::{Error, Result};
use crate::numerics::NodeLayout;
use crate::sigcrypto::{BackendKind, DEFAULT_PROBE_WINDOW};
use crate::{ClientId, Grain};

/// A client that withholds its aggregated share, either in every group it
/// belongs to or only in the group of one leader.
///
/// Written as `"3"` or `"3@5"` (client 3 straggles in the group led by 5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Straggler {
    pub client: ClientId,
    pub leader: Option<ClientId>,
}

impl Straggler {
    pub fn everywhere(client: usize) -> Self {
        Self { client: ClientId(client), leader: None }
    }

    pub fn in_group(client: usize, leader: usize) -> Self {
        Self { client: ClientId(client), leader: Some(ClientId(leader)) }
    }

    pub fn applies(&self, client: ClientId, leader: ClientId) -> bool {
        self.client == client && self.leader.is_none_or(|l| l == leader)
    }
}

impl FromStr for Straggler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("straggler entry {s:?} is not `id` or `id@leader`")))
        };
        match s.split_once('@') {
            Some((c, l)) => Ok(Self::in_group(parse(c)?, parse(l)?)),
            None => Ok(Self::everywhere(parse(s)?)),
        }
    }
}

impl TryFrom<String> for Straggler {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Straggler> for String {
    fn from(s: Straggler) -> String {
        match s.leader {
            Some(l) => format!("{}@{}", s.client.0, l.0),
            None => s.client.0.to_string(),
        }
    }
}

/// Every knob of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundConfig {
    /// Clients.
    pub n: usize,
    /// Followers each leader selects.
    pub r: usize,
    pub k: usize,
    pub t: usize,
    /// Quantization digits.
    pub q: u32,
    /// Hashed CAL width.
    pub lsh_dim: usize,
    pub sigma: f64,
    pub theta: f64,
    pub radius: f64,
    pub node_layout: NodeLayout,
    pub grain: Grain,
    /// `f(x) = x^f_degree`.
    pub f_degree: usize,
    pub seed: u64,
    pub stragglers: BTreeSet<Straggler>,
    pub backend: BackendKind,
    /// Whether a leader contributes its own logits to its group.
    pub include_leader: bool,
    pub probe_window: i64,
    /// Run the parties of each superstep on the rayon pool.
    pub parallel: bool,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            n: 6,
            r: 5,
            k: 2,
            t: 1,
            q: 3,
            lsh_dim: crate::filtration::LshConfig::DEFAULT_OUTPUT_DIM,
            sigma: 1e3,
            theta: 6.0,
            radius: 1.0,
            node_layout: NodeLayout::Auto,
            grain: Grain::Class,
            f_degree: 1,
            seed: 0,
            stragglers: BTreeSet::new(),
            backend: BackendKind::Mock,
            include_leader: false,
            probe_window: DEFAULT_PROBE_WINDOW,
            parallel: false,
        }
    }
}

impl RoundConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("round config serializes")
    }

    /// Members of every group, the leader counted when it takes part.
    pub fn group_size(&self) -> usize {
        self.r + usize::from(self.include_leader)
    }

    pub fn poly(&self) -> ElementwisePoly {
        ElementwisePoly::monomial(self.f_degree)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.r == 0 || self.r > self.n - 1 {
            return Err(Error::InfeasibleConfig(format!("need 1 <= R <= N-1, got N={} R={}", self.n, self.r)));
        }
        if self.f_degree == 0 {
            return Err(Error::InfeasibleConfig("f must have degree at least 1".into()));
        }
        let verdict = check_achievable(AchievabilityConfig {
            evaluators: self.group_size(),
            k: self.k,
            t: self.t,
            deg_f: self.f_degree,
        });
        if !verdict.feasible {
            return Err(Error::InfeasibleConfig(format!(
                "groups of {} cannot decode K={} T={} deg={} (need {})",
                self.group_size(),
                self.k,
                self.t,
                self.f_degree,
                verdict.required
            )));
        }
        if self.t > 0 && !(self.sigma > 0.0 && self.theta > 0.0) {
            return Err(Error::InfeasibleConfig("sigma and theta must be positive".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InfeasibleConfig("radius must be positive".into()));
        }
        if self.lsh_dim == 0 {
            return Err(Error::InfeasibleConfig("lsh_dim must be positive".into()));
        }
        if let Some(s) =
            self.stragglers.iter().find(|s| s.client.0 >= self.n || s.leader.is_some_and(|l| l.0 >= self.n))
        {
            return Err(Error::InfeasibleConfig(format!("straggler {} names an unknown client", String::from(*s))));
        }
        Ok(())
    }

    pub fn is_straggler(&self, client: ClientId, leader: ClientId) -> bool {
        self.stragglers.iter().any(|s| s.applies(client, leader))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RoundConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RoundConfig { n: 10, r: 4, seed: 99, ..RoundConfig::default() };
        cfg.stragglers.insert(Straggler::everywhere(3));
        cfg.stragglers.insert(Straggler::in_group(2, 7));
        let text = cfg.to_toml();
        assert!(text.contains("\"2@7\""));
        assert_eq!(RoundConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_takes_defaults() {
        let cfg = RoundConfig::from_toml("n = 8\nr = 6\nbackend = \"pairing\"\ngrain = \"sample\"").unwrap();
        assert_eq!((cfg.n, cfg.r, cfg.k), (8, 6, 2));
        assert_eq!(cfg.backend, BackendKind::Pairing);
        assert_eq!(cfg.grain, Grain::Sample);
        assert!(matches!(RoundConfig::from_toml("m = 1"), Err(Error::Config(_))));
        assert!(matches!(RoundConfig::from_toml("stragglers = [\"x@1\"]"), Err(Error::Config(_))));
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let bad = |cfg: RoundConfig| matches!(cfg.validate(), Err(Error::InfeasibleConfig(_)));
        assert!(bad(RoundConfig { r: 6, ..RoundConfig::default() }));
        assert!(bad(RoundConfig { r: 2, ..RoundConfig::default() }));
        assert!(bad(RoundConfig { f_degree: 3, ..RoundConfig::default() }));
        let mut cfg = RoundConfig::default();
        cfg.stragglers.insert(Straggler::everywhere(6));
        assert!(bad(cfg));
        // Including the leader adds an evaluator.
        assert!(!bad(RoundConfig { n: 4, r: 2, include_leader: true, ..RoundConfig::default() }));
    }

    #[test]
    fn straggler_scope() {
        let s: Straggler = "3@5".parse().unwrap();
        assert!(s.applies(ClientId(3), ClientId(5)));
        assert!(!s.applies(ClientId(3), ClientId(4)));
        assert!(Straggler::everywhere(3).applies(ClientId(3), ClientId(4)));
    }
}
