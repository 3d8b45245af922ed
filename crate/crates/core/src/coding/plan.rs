use ndarray::Array2;
use rand::Rng;

use super::ElementwisePoly;
use crate::error::{Error, Result};
use crate::numerics::{ensure_shape, InterpolationNodes, RealTensor, C64};
use crate::ClientId;

/// Range of the leader's blind factor entries.
pub const BLIND_RANGE: (f64, f64) = (0.5, 2.0);

/// A leader's group: roster, Lagrange matrix, weights and blind factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPlan {
    pub leader: ClientId,
    /// Roster in evaluation-point order: member `x` owns `alpha_x`.
    pub members: Vec<ClientId>,
    pub k: usize,
    pub t: usize,
    pub nodes: InterpolationNodes,
    /// `l_j(alpha_x)`, shape `(K+T) x R`.
    pub lagrange: Array2<C64>,
    pub weights: Vec<f64>,
    pub blind_factor: RealTensor,
    pub blinded_weights: Vec<RealTensor>,
}

impl GroupPlan {
    pub fn new(
        leader: ClientId,
        members: Vec<ClientId>,
        k: usize,
        t: usize,
        nodes: InterpolationNodes,
        weights: Vec<f64>,
        blind_factor: RealTensor,
    ) -> Result<Self> {
        if nodes.group_size() != members.len() || nodes.anchors() != k + t {
            return Err(Error::InvalidParameter(format!(
                "nodes ({} x {}) do not match a group of {} with K+T={}",
                nodes.group_size(),
                nodes.anchors(),
                members.len(),
                k + t
            )));
        }
        if weights.len() != members.len() {
            return Err(Error::InvalidParameter(format!("{} weights for {} members", weights.len(), members.len())));
        }
        let lagrange = nodes.lagrange_matrix();
        let blinded_weights = weights.iter().map(|&w| &blind_factor * w).collect();
        Ok(Self { leader, members, k, t, nodes, lagrange, weights, blind_factor, blinded_weights })
    }

    pub fn group_size(&self) -> usize {
        self.members.len()
    }

    /// Evaluation-point index of a member.
    pub fn slot(&self, id: ClientId) -> Option<usize> {
        self.members.iter().position(|&m| m == id)
    }

    /// What followers receive: everything but the raw weights and blind factor.
    pub fn view(&self, f: ElementwisePoly) -> PlanView {
        PlanView {
            leader: self.leader,
            members: self.members.clone(),
            lagrange: self.lagrange.clone(),
            blinded_weights: self.blinded_weights.clone(),
            f,
            k: self.k,
        }
    }
}

/// The follower-side part of a plan: `(L_c, W̃_c)` plus roster and `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanView {
    pub leader: ClientId,
    pub members: Vec<ClientId>,
    pub lagrange: Array2<C64>,
    pub blinded_weights: Vec<RealTensor>,
    pub f: ElementwisePoly,
    pub k: usize,
}

impl PlanView {
    pub fn t(&self) -> usize {
        self.lagrange.nrows() - self.k
    }

    pub fn slot(&self, id: ClientId) -> Option<usize> {
        self.members.iter().position(|&m| m == id)
    }
}

/// `w_z = 1/R`.
pub fn uniform_weights(r: usize) -> Vec<f64> {
    vec![1.0 / r as f64; r]
}

/// Entries uniform in [`BLIND_RANGE`].
pub fn random_blind_factor<R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> RealTensor {
    Array2::from_shape_simple_fn(shape, || rng.random_range(BLIND_RANGE.0..=BLIND_RANGE.1))
}

/// Determinant of the `T x T` matrix `[l_{K+t}(alpha_x)]` over the chosen
/// member slots. A nonzero value means the noise blocks span whatever those
/// `T` members observe together.
pub fn noise_coefficient_det(lagrange: &Array2<C64>, k: usize, slots: &[usize]) -> Result<C64> {
    let t = lagrange.nrows() - k;
    if slots.len() != t {
        return Err(Error::InvalidParameter(format!("need {t} slots, got {}", slots.len())));
    }
    let mut m = Array2::from_shape_fn((t, t), |(row, col)| lagrange[[k + row, slots[col]]]);
    Ok(determinant(&mut m))
}

/// Gaussian elimination with partial pivoting; destroys `m`.
fn determinant(m: &mut Array2<C64>) -> C64 {
    let n = m.nrows();
    let mut det = C64::new(1.0, 0.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[[a, col]].norm().total_cmp(&m[[b, col]].norm())).unwrap();
        if m[[pivot, col]].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if pivot != col {
            for j in 0..n {
                m.swap([pivot, j], [col, j]);
            }
            det = -det;
        }
        let p = m[[col, col]];
        det *= p;
        for row in col + 1..n {
            let factor = m[[row, col]] / p;
            for j in col..n {
                let v = m[[col, j]];
                m[[row, j]] -= factor * v;
            }
        }
    }
    det
}

pub(super) fn check_block(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    ensure_shape(expected, found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{lagrange_coeff, make_nodes_with, NodeLayout};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plan(r: usize, k: usize, t: usize) -> GroupPlan {
        let nodes = make_nodes_with(r, k, t, 1.0, NodeLayout::Auto).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let members = (1..=r).map(ClientId).collect();
        GroupPlan::new(ClientId(0), members, k, t, nodes, uniform_weights(r), random_blind_factor((3, 3), &mut rng))
            .unwrap()
    }

    #[test]
    fn lagrange_matrix_matches_coefficients() {
        let p = plan(6, 2, 1);
        assert_eq!(p.lagrange.dim(), (3, 6));
        for j in 0..3 {
            for x in 0..6 {
                let direct = lagrange_coeff(&p.nodes, j, p.nodes.alphas()[x]);
                assert!((p.lagrange[[j, x]] - direct).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn blind_factor_and_blinded_weights() {
        let p = plan(4, 1, 1);
        assert!(p.blind_factor.iter().all(|&v| (0.5..=2.0).contains(&v)));
        for (w, bw) in p.weights.iter().zip(&p.blinded_weights) {
            assert_eq!(bw, &(&p.blind_factor * *w));
        }
        assert_eq!(p.slot(ClientId(3)), Some(2));
        assert_eq!(p.slot(ClientId(0)), None);
    }

    #[test]
    fn determinant_of_known_matrix() {
        let mut m = Array2::from_shape_vec(
            (3, 3),
            [2.0, 0.0, 1.0, 1.0, 3.0, 2.0, 1.0, 1.0, 2.0].iter().map(|&v| C64::new(v, 0.0)).collect(),
        )
        .unwrap();
        assert!((determinant(&mut m) - C64::new(6.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn noise_submatrix_is_nonsingular() {
        let p = plan(8, 2, 3);
        let det = noise_coefficient_det(&p.lagrange, 2, &[0, 3, 5]).unwrap();
        assert!(det.norm() > 1e-12);
        assert!(noise_coefficient_det(&p.lagrange, 2, &[0, 1]).is_err());
    }
}
