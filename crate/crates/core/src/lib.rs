//! Secure, verifiable co-aggregation of federated-distillation logits.
//!
//! Clients that exchange logits instead of model weights pick their
//! aggregation partners by comparing hashed class-average logits, split and
//! Lagrange-encode their knowledge so that every group member aggregates on
//! encoded shares only, and let a server decode the group's teacher knowledge
//! together with a pairing-based proof that the group leader checks.
//!
//! The crate is layered bottom-up:
//!
//! * [`numerics`]: complex tensors, Lagrange nodes, barycentric interpolation.
//! * [`filtration`]: class-average logits, random-projection hashing, group
//!   selection and the communication topology.
//! * [`coding`]: split, blind, encode, aggregate, decode and deblind.
//! * [`sigcrypto`]: quantization, pairing backends, signatures and proofs.
//! * [`protocol`]: the round engine over a deterministic message bus.
//! * [`threats`]: poisoning and tampering adversaries, filtration metrics.
//! * [`workload`]: synthetic client logits.
//!
//! The guide under `book/` walks through each stage; its code listings are
//! compiled and run as doc-tests of this crate.

pub mod coding;
pub mod error;
pub mod filtration;
pub mod numerics;
pub mod protocol;
pub mod sigcrypto;
pub mod threats;
pub mod workload;

mod seed;

pub use error::{Error, Result};
pub use seed::derive_seed;

use serde::{Deserialize, Serialize};

/// Identifier of a client within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub usize);

impl ClientId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for ClientId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// How a client's logits are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grain {
    /// `D x D` per-class averages; split additively.
    #[default]
    Class,
    /// `O x D` rows over a public sample pool; split into row blocks.
    Sample,
}

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $path))]
            pub struct $name;
        };
    }
    chapter!(Introduction, "introduction.md");
    chapter!(Filtration, "filtration.md");
    chapter!(Coding, "coding.md");
    chapter!(Verification, "verification.md");
    chapter!(Protocol, "protocol.md");
    chapter!(Adversaries, "adversaries.md");
    chapter!(Experiments, "experiments.md");

    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
}
