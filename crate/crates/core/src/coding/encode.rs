use ndarray::Zip;

use super::plan::check_block;
use super::{PlanView, SplitBundle};
use crate::error::{Error, Result};
use crate::numerics::{to_complex, ComplexTensor, RealTensor, C64};
use crate::ClientId;

/// `u_sender(alpha_receiver)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedShare {
    pub sender: ClientId,
    pub receiver: ClientId,
    pub payload: ComplexTensor,
}

/// `Σ_z w̃_z ⊙ f(u_z(alpha_holder))` over the holder's received shares.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedShare {
    pub holder: ClientId,
    pub payload: ComplexTensor,
}

/// One share per group member, in roster order.
pub fn encode(bundle: &SplitBundle, sender: ClientId, view: &PlanView) -> Result<Vec<EncodedShare>> {
    if bundle.k() != view.k || bundle.t() != view.t() {
        return Err(Error::InvalidParameter(format!(
            "bundle has K={} T={}, plan expects K={} T={}",
            bundle.k(),
            bundle.t(),
            view.k,
            view.t()
        )));
    }
    let shape = bundle.block_shape();
    for s in &bundle.slices {
        check_block(shape, s.dim())?;
    }
    for n in &bundle.noise {
        check_block(shape, n.dim())?;
    }
    let blocks: Vec<ComplexTensor> = bundle.slices.iter().map(to_complex).chain(bundle.noise.iter().cloned()).collect();
    Ok(view
        .members
        .iter()
        .enumerate()
        .map(|(x, &receiver)| {
            let mut payload = ComplexTensor::zeros(shape);
            for (j, block) in blocks.iter().enumerate() {
                payload.scaled_add(view.lagrange[[j, x]], block);
            }
            EncodedShare { sender, receiver, payload }
        })
        .collect())
}

/// Applies `f` to every received share and sums them with the blinded
/// weights. Needs exactly one share from each roster member.
pub fn local_aggregate(holder: ClientId, received: &[EncodedShare], view: &PlanView) -> Result<AggregatedShare> {
    local_aggregate_weighted(holder, received, view, &view.blinded_weights)
}

/// [`local_aggregate`] with the blinded weights supplied by the caller.
pub fn local_aggregate_weighted(
    holder: ClientId,
    received: &[EncodedShare],
    view: &PlanView,
    blinded_weights: &[RealTensor],
) -> Result<AggregatedShare> {
    if blinded_weights.len() != view.members.len() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} members",
            blinded_weights.len(),
            view.members.len()
        )));
    }
    if let Some(stray) = received.iter().find(|s| view.slot(s.sender).is_none()) {
        return Err(Error::InvalidParameter(format!("share from non-member {}", stray.sender)));
    }
    let shape =
        blinded_weights.first().map(|w| w.dim()).ok_or_else(|| Error::InvalidParameter("empty group".into()))?;
    let mut payload = ComplexTensor::zeros(shape);
    for (&member, weight) in view.members.iter().zip(blinded_weights) {
        let share = received.iter().find(|s| s.sender == member).ok_or(Error::MissingShare(member))?;
        check_block(shape, share.payload.dim())?;
        Zip::from(&mut payload).and(&share.payload).and(weight).for_each(|acc, &z, &w| {
            *acc += view.f.eval(z) * C64::new(w, 0.0);
        });
    }
    Ok(AggregatedShare { holder, payload })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{random_blind_factor, split, uniform_weights, ElementwisePoly, GroupPlan};
    use crate::numerics::{make_nodes_with, NodeLayout};
    use crate::Grain;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn view(weights: Vec<f64>, blind: RealTensor, k: usize, t: usize, f: ElementwisePoly) -> PlanView {
        let r = weights.len();
        let nodes = make_nodes_with(r, k, t, 1.0, NodeLayout::Auto).unwrap();
        let members = (0..r).map(ClientId).collect();
        GroupPlan::new(ClientId(99), members, k, t, nodes, weights, blind).unwrap().view(f)
    }

    fn share(sender: usize, v: f64) -> EncodedShare {
        EncodedShare { sender: ClientId(sender), receiver: ClientId(0), payload: array![[C64::new(v, 0.0)]] }
    }

    #[test]
    fn single_slice_without_noise_is_constant() {
        let v = view(uniform_weights(3), array![[1.0, 1.0]], 1, 0, ElementwisePoly::identity());
        let bundle = SplitBundle { grain: Grain::Class, slices: vec![array![[1.5, -2.0]]], noise: vec![] };
        for s in encode(&bundle, ClientId(0), &v).unwrap() {
            assert!((s.payload[[0, 0]] - C64::new(1.5, 0.0)).norm() < 1e-12);
            assert!((s.payload[[0, 1]] - C64::new(-2.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn encode_matches_direct_polynomial_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (k, t, r) = (2, 1, 6);
        let v = view(uniform_weights(r), Array2::ones((2, 3)), k, t, ElementwisePoly::identity());
        let slices: Vec<RealTensor> =
            (0..k).map(|_| Array2::from_shape_simple_fn((2, 3), || rng.random_range(-5.0..5.0))).collect();
        let noise = vec![Array2::from_shape_simple_fn((2, 3), || {
            C64::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0))
        })];
        let bundle = SplitBundle { grain: Grain::Class, slices: slices.clone(), noise: noise.clone() };
        let shares = encode(&bundle, ClientId(2), &v).unwrap();
        let nodes = make_nodes_with(r, k, t, 1.0, NodeLayout::Auto).unwrap();
        let betas = nodes.betas();
        for (x, s) in shares.iter().enumerate() {
            let a = nodes.alphas()[x];
            for ((i, j), got) in s.payload.indexed_iter() {
                let ys: Vec<C64> =
                    vec![C64::new(slices[0][[i, j]], 0.0), C64::new(slices[1][[i, j]], 0.0), noise[0][[i, j]]];
                // Direct product-form Lagrange evaluation, independent of the
                // plan's precomputed matrix.
                let mut want = C64::new(0.0, 0.0);
                for (m, y) in ys.iter().enumerate() {
                    let mut l = C64::new(1.0, 0.0);
                    for (n, b) in betas.iter().enumerate() {
                        if n != m {
                            l *= (a - b) / (betas[m] - b);
                        }
                    }
                    want += y * l;
                }
                assert!((got - want).norm() <= 1e-10 * want.norm().max(1.0));
            }
        }
    }

    #[test]
    fn encoded_polynomial_passes_through_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (k, t, r) = (3, 2, 5);
        let v = view(uniform_weights(r), Array2::ones((2, 2)), k, t, ElementwisePoly::identity());
        let logits = Array2::from_shape_simple_fn((2, 2), || rng.random_range(-1.0..1.0));
        let bundle = split(&logits, k, Grain::Class, None, &mut rng).unwrap();
        let bundle =
            crate::coding::blind(&bundle, crate::coding::NoiseParams { t, sigma: 10.0, theta: 6.0 }, &mut rng).unwrap();
        let shares = encode(&bundle, ClientId(0), &v).unwrap();
        let nodes = make_nodes_with(r, k, t, 1.0, NodeLayout::Auto).unwrap();
        let points: Vec<_> = nodes.alphas().iter().zip(&shares).map(|(&a, s)| (a, s.payload.clone())).collect();
        let at_betas = crate::numerics::interpolate(&points, &nodes.betas()[..k]).unwrap();
        for (got, want) in at_betas.iter().zip(&bundle.slices) {
            for (g, w) in got.iter().zip(want) {
                assert!((g - C64::new(*w, 0.0)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn encode_rejects_bundle_plan_mismatch() {
        let v = view(uniform_weights(3), array![[1.0]], 2, 0, ElementwisePoly::identity());
        let bundle = SplitBundle { grain: Grain::Class, slices: vec![array![[1.0]]], noise: vec![] };
        assert!(encode(&bundle, ClientId(0), &v).is_err());
        let ragged =
            SplitBundle { grain: Grain::Class, slices: vec![array![[1.0]], array![[1.0, 2.0]]], noise: vec![] };
        assert!(matches!(encode(&ragged, ClientId(0), &v), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn aggregation_examples() {
        let ones = array![[1.0]];
        let v = view(vec![1.0, 1.0], ones.clone(), 1, 0, ElementwisePoly::identity());
        let agg = local_aggregate(ClientId(0), &[share(0, 1.0), share(1, 2.0)], &v).unwrap();
        assert_eq!(agg.payload[[0, 0]], C64::new(3.0, 0.0));

        let v = view(vec![2.0, 0.0], ones.clone(), 1, 0, ElementwisePoly::identity());
        let agg = local_aggregate(ClientId(0), &[share(0, 1.0), share(1, 5.0)], &v).unwrap();
        assert_eq!(agg.payload[[0, 0]], C64::new(2.0, 0.0));

        let v = view(vec![1.0], ones, 1, 0, ElementwisePoly::square());
        let agg = local_aggregate(ClientId(0), &[share(0, 3.0)], &v).unwrap();
        assert_eq!(agg.payload[[0, 0]], C64::new(9.0, 0.0));
    }

    #[test]
    fn missing_share_is_reported() {
        let v = view(vec![0.5, 0.5], array![[1.0]], 1, 0, ElementwisePoly::identity());
        assert_eq!(local_aggregate(ClientId(0), &[share(0, 1.0)], &v).unwrap_err(), Error::MissingShare(ClientId(1)));
        assert!(local_aggregate(ClientId(0), &[share(0, 1.0), share(7, 1.0)], &v).is_err());
    }

    #[test]
    fn blind_factor_scales_aggregate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let blind = random_blind_factor((1, 1), &mut rng);
        let v = view(vec![1.0], blind.clone(), 1, 0, ElementwisePoly::identity());
        let agg = local_aggregate(ClientId(0), &[share(0, 4.0)], &v).unwrap();
        assert!((agg.payload[[0, 0]].re - 4.0 * blind[[0, 0]]).abs() < 1e-12);
    }
}
