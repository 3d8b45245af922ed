//! Multi-provider Lagrange coded co-aggregation.
//!
//! A follower splits its logits into `K` slices, appends `T` complex noise
//! blocks, and evaluates the Lagrange polynomial through those `K + T` blocks
//! at every member's evaluation point. Each member applies an elementwise
//! polynomial `f` to the shares it receives and sums them with the leader's
//! blinded weights. The server interpolates the resulting polynomial of degree
//! `deg(f)·(K+T-1)` from enough aggregated shares, evaluates it at the slice
//! anchors, and the leader removes the blind factor:
//!
//! ```text
//! Ŷ = R⁻¹ ⊙ Dec( Σ_z (w_z R) ⊙ f(Enc(ϑ_z)) ) = Σ_z w_z f(ϑ_z)
//! ```

mod decode;
mod encode;
mod plan;
mod split;

pub use decode::{deblind_and_join, decode, plaintext_oracle};
pub use encode::{encode, local_aggregate, local_aggregate_weighted, AggregatedShare, EncodedShare};
pub use plan::{noise_coefficient_det, random_blind_factor, uniform_weights, GroupPlan, PlanView};
pub use split::{blind, split, NoiseParams, SplitBundle};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// An elementwise polynomial `f(x) = Σ_i c_i x^i` with real coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementwisePoly {
    coefficients: Vec<f64>,
}

impl ElementwisePoly {
    pub fn new(mut coefficients: Vec<f64>) -> Self {
        while coefficients.len() > 1 && coefficients.last() == Some(&0.0) {
            coefficients.pop();
        }
        if coefficients.is_empty() {
            coefficients.push(0.0);
        }
        Self { coefficients }
    }

    pub fn identity() -> Self {
        Self::new(vec![0.0, 1.0])
    }

    pub fn square() -> Self {
        Self::new(vec![0.0, 0.0, 1.0])
    }

    /// `x^degree`.
    pub fn monomial(degree: usize) -> Self {
        let mut c = vec![0.0; degree + 1];
        c[degree] = 1.0;
        Self::new(c)
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.coefficients.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Inputs of the achievability test: `D + deg(f)(K+T-1) + 1 <= N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AchievabilityConfig {
    /// Available evaluators (clients, or group members).
    pub evaluators: usize,
    pub k: usize,
    pub t: usize,
    pub deg_f: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Achievability {
    pub feasible: bool,
    /// Aggregated shares needed to decode.
    pub required: usize,
    /// Stragglers that can be absorbed, when feasible.
    pub d_resilience: Option<usize>,
}

/// Aggregated shares needed to interpolate `f(u(·))`.
pub fn decode_threshold(k: usize, t: usize, deg_f: usize) -> usize {
    deg_f * (k + t).saturating_sub(1) + 1
}

pub fn check_achievable(cfg: AchievabilityConfig) -> Achievability {
    let required = decode_threshold(cfg.k, cfg.t, cfg.deg_f);
    let feasible = cfg.k >= 1 && required <= cfg.evaluators;
    Achievability { feasible, required, d_resilience: feasible.then(|| cfg.evaluators - required) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gate(evaluators: usize, k: usize, t: usize, deg_f: usize) -> Achievability {
        check_achievable(AchievabilityConfig { evaluators, k, t, deg_f })
    }

    #[test]
    fn achievability_examples() {
        assert_eq!(gate(50, 10, 10, 1), Achievability { feasible: true, required: 20, d_resilience: Some(30) });
        assert_eq!(gate(50, 30, 30, 1), Achievability { feasible: false, required: 60, d_resilience: None });
        assert_eq!(gate(60, 30, 30, 1), Achievability { feasible: true, required: 60, d_resilience: Some(0) });
    }

    #[test]
    fn higher_degree_needs_more_shares() {
        assert_eq!(gate(12, 2, 1, 2).required, 5);
        assert!(!gate(4, 2, 1, 2).feasible);
    }

    #[test]
    fn polynomial_evaluation() {
        let f = ElementwisePoly::new(vec![1.0, 0.0, 3.0, 0.0, 0.0]);
        assert_eq!(f.degree(), 2);
        assert_eq!(f.eval_real(2.0), 13.0);
        let z = Complex64::new(0.0, 1.0);
        assert_eq!(ElementwisePoly::square().eval(z), Complex64::new(-1.0, 0.0));
        assert_eq!(ElementwisePoly::monomial(3).eval_real(-2.0), -8.0);
        assert_eq!(ElementwisePoly::identity().degree(), 1);
    }
}
