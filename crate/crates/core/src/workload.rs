//! Synthetic client knowledge.
//!
//! Each client draws a label distribution from a symmetric Dirichlet, samples
//! labels from it, and emits one logits row per sample that peaks at the label
//! and leans towards the classes the client sees most often. Class-grain
//! knowledge is the per-class mean of those rows; sample-grain knowledge is
//! one row per entry of a shared public pool.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{compute_cal, Sample};
use crate::numerics::RealTensor;
use crate::{derive_seed, Grain};

/// Every generated logit lies in `[-LOGIT_BOUND, LOGIT_BOUND]`.
pub const LOGIT_BOUND: f64 = 20.0;

/// One client's data-generating parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub label_dist: Vec<f64>,
    /// Height of the peak at the true label.
    pub confusion_sharpness: f64,
    /// Standard deviation of the per-entry Gaussian spread.
    pub spread: f64,
    /// Strength of the pull towards frequently seen classes: entry `j` of every
    /// row is shifted by `prior_weight · D · label_dist[j]`.
    pub prior_weight: f64,
    pub samples: usize,
    pub grain: Grain,
    /// Public pool size `O` for sample grain.
    pub public_pool: usize,
    /// Seed of the public pool labels, shared by all clients.
    pub public_seed: u64,
}

impl ClientProfile {
    pub fn classes(&self) -> usize {
        self.label_dist.len()
    }
}

/// A client's generated data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub samples: Vec<Sample>,
    /// `D x D` for class grain, `O x D` for sample grain.
    pub logits: RealTensor,
}

/// `Dirichlet(alpha, ..., alpha)` over `d` classes via normalised Gamma draws.
pub fn dirichlet<R: Rng + ?Sized>(d: usize, alpha: f64, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    loop {
        let draws: Vec<f64> = (0..d).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return Ok(draws.into_iter().map(|g| g / total).collect());
        }
    }
}

/// Labels of the public pool, uniform over `d` classes.
pub fn public_labels(pool: usize, d: usize, public_seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(public_seed);
    (0..pool).map(|_| rng.random_range(0..d)).collect()
}

fn logits_row<R: Rng + ?Sized>(
    label: usize,
    profile: &ClientProfile,
    normal: Option<&Normal<f64>>,
    rng: &mut R,
) -> Vec<f64> {
    let d = profile.classes() as f64;
    profile
        .label_dist
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let peak = if j == label { profile.confusion_sharpness } else { 0.0 };
            let noise = normal.map_or(0.0, |n| n.sample(rng));
            (peak + profile.prior_weight * d * p + noise).clamp(-LOGIT_BOUND, LOGIT_BOUND)
        })
        .collect()
}

pub fn gen_logits(profile: &ClientProfile, seed: u64) -> Result<ClientData> {
    let d = profile.classes();
    if d < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    if profile.samples == 0 {
        return Err(Error::EmptyDataset);
    }
    if profile.grain == Grain::Sample && profile.public_pool == 0 {
        return Err(Error::InvalidParameter("sample grain needs a public pool".into()));
    }
    let labels = WeightedIndex::new(&profile.label_dist).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let normal = if profile.spread > 0.0 {
        Some(Normal::new(0.0, profile.spread).map_err(|e| Error::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = (0..profile.samples)
        .map(|_| {
            let y = labels.sample(&mut rng);
            (y, logits_row(y, profile, normal.as_ref(), &mut rng))
        })
        .collect();
    let logits = match profile.grain {
        Grain::Class => compute_cal(&samples)?.means().clone(),
        Grain::Sample => {
            let pool = public_labels(profile.public_pool, d, profile.public_seed);
            let mut m = Array2::zeros((pool.len(), d));
            for (mut row, &y) in m.rows_mut().into_iter().zip(&pool) {
                for (v, x) in row.iter_mut().zip(logits_row(y, profile, normal.as_ref(), &mut rng)) {
                    *v = x;
                }
            }
            m
        }
    };
    Ok(ClientData { samples, logits })
}

/// Population-level generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub classes: usize,
    pub alpha: f64,
    pub samples: usize,
    pub sharpness: f64,
    pub spread: f64,
    pub prior_weight: f64,
    pub public_pool: usize,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self { classes: 10, alpha: 1.0, samples: 200, sharpness: 10.0, spread: 1.0, prior_weight: 1.0, public_pool: 20 }
    }
}

impl WorkloadConfig {
    /// Profile of client `index`, its label distribution drawn from `seed`.
    pub fn profile(&self, index: usize, grain: Grain, seed: u64) -> Result<ClientProfile> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x1abe1, index as u64]));
        Ok(ClientProfile {
            label_dist: dirichlet(self.classes, self.alpha, &mut rng)?,
            confusion_sharpness: self.sharpness,
            spread: self.spread,
            prior_weight: self.prior_weight,
            samples: self.samples,
            grain,
            public_pool: self.public_pool,
            public_seed: derive_seed(seed, &[0x9001]),
        })
    }

    /// Profiles and data for `n` clients.
    pub fn population(&self, n: usize, grain: Grain, seed: u64) -> Result<Vec<(ClientProfile, ClientData)>> {
        (0..n)
            .map(|i| {
                let p = self.profile(i, grain, seed)?;
                let data = gen_logits(&p, derive_seed(seed, &[0xda7a, i as u64]))?;
                Ok((p, data))
            })
            .collect()
    }
}
