use ndarray::{concatenate, Axis, Zip};

use super::{decode_threshold, AggregatedShare, ElementwisePoly, SplitBundle};
use crate::error::{Error, Result};
use crate::numerics::{interpolate, real_part, InterpolationNodes, RealTensor};
use crate::{ClientId, Grain};

/// Interpolates `f(u(·))` through the aggregated shares and returns the real
/// parts of its values at the `K` slice anchors.
///
/// `roster[x]` owns `alpha_x`. Every share that arrives is used; more points
/// than the threshold only improve the conditioning on the circle.
pub fn decode(
    aggregates: &[AggregatedShare],
    roster: &[ClientId],
    nodes: &InterpolationNodes,
    k: usize,
    t: usize,
    deg_f: usize,
) -> Result<Vec<RealTensor>> {
    if roster.len() != nodes.group_size() || nodes.anchors() != k + t {
        return Err(Error::InvalidParameter("roster and nodes disagree".into()));
    }
    let need = decode_threshold(k, t, deg_f);
    let mut points = Vec::with_capacity(aggregates.len());
    let mut seen = vec![false; roster.len()];
    for agg in aggregates {
        let slot = roster
            .iter()
            .position(|&m| m == agg.holder)
            .ok_or_else(|| Error::InvalidParameter(format!("aggregate from non-member {}", agg.holder)))?;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(Error::DuplicateNode(slot));
        }
        points.push((nodes.alphas()[slot], agg.payload.clone()));
    }
    if points.len() < need {
        return Err(Error::InsufficientShares { have: points.len(), need });
    }
    let values = interpolate(&points, &nodes.betas()[..k])?;
    Ok(values.iter().map(real_part).collect())
}

/// Removes the blind factor and reverses the split: class grain sums the
/// slices, sample grain stacks them in order.
pub fn deblind_and_join(decoded: &[RealTensor], blind_factor: &RealTensor, grain: Grain) -> Result<RealTensor> {
    if let Some(((i, j), _)) = blind_factor.indexed_iter().find(|(_, &v)| v == 0.0) {
        return Err(Error::ZeroBlindEntry(i, j));
    }
    let Some(first) = decoded.first() else {
        return Err(Error::InvalidParameter("nothing to join".into()));
    };
    let shape = blind_factor.dim();
    let unblind = |s: &RealTensor| -> Result<RealTensor> {
        crate::numerics::ensure_shape(shape, s.dim())?;
        let mut out = s.clone();
        Zip::from(&mut out).and(blind_factor).for_each(|v, &b| *v /= b);
        Ok(out)
    };
    match grain {
        Grain::Class => {
            let mut sum = RealTensor::zeros(first.dim());
            for s in decoded {
                crate::numerics::ensure_shape(first.dim(), s.dim())?;
                sum += s;
            }
            unblind(&sum)
        }
        Grain::Sample => {
            let parts = decoded.iter().map(unblind).collect::<Result<Vec<_>>>()?;
            let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
            concatenate(Axis(0), &views).map_err(|e| Error::InvalidParameter(e.to_string()))
        }
    }
}

/// What co-aggregation must reproduce: the per-slice weighted sums
/// `Σ_z w_z f(slice_z)`, joined according to `grain`.
pub fn plaintext_oracle(
    bundles: &[SplitBundle],
    weights: &[f64],
    f: &ElementwisePoly,
    grain: Grain,
) -> Result<RealTensor> {
    if bundles.len() != weights.len() || bundles.is_empty() {
        return Err(Error::InvalidParameter("need one weight per bundle".into()));
    }
    let k = bundles[0].k();
    let shape = bundles[0].block_shape();
    let mut per_slice = vec![RealTensor::zeros(shape); k];
    for (bundle, &w) in bundles.iter().zip(weights) {
        if bundle.k() != k {
            return Err(Error::InvalidParameter("bundles disagree on K".into()));
        }
        for (acc, s) in per_slice.iter_mut().zip(&bundle.slices) {
            crate::numerics::ensure_shape(shape, s.dim())?;
            Zip::from(acc).and(s).for_each(|a, &v| *a += w * f.eval_real(v));
        }
    }
    deblind_and_join(&per_slice, &RealTensor::ones(shape), grain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{blind, encode, local_aggregate, random_blind_factor, split, GroupPlan, NoiseParams, PlanView};
    use crate::numerics::{make_nodes_with, relative_error, NodeLayout, C64};
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Run {
        plan: GroupPlan,
        view: PlanView,
        bundles: Vec<SplitBundle>,
        aggregates: Vec<AggregatedShare>,
    }

    fn run(r: usize, k: usize, t: usize, f: ElementwisePoly, grain: Grain, sigma: f64, seed: u64) -> Run {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 3;
        let rows = if grain == Grain::Class { d } else { 2 * k };
        let nodes = make_nodes_with(r, k, t, 1.0, NodeLayout::Auto).unwrap();
        let members: Vec<ClientId> = (1..=r).map(ClientId).collect();
        let weights: Vec<f64> = (0..r).map(|_| rng.random_range(0.0..1.0)).collect();
        let block = if grain == Grain::Class { (d, d) } else { (2, d) };
        let blind_factor = random_blind_factor(block, &mut rng);
        let plan = GroupPlan::new(ClientId(0), members.clone(), k, t, nodes, weights, blind_factor).unwrap();
        let view = plan.view(f);
        let params = NoiseParams { t, sigma, theta: 6.0 };
        let bundles: Vec<SplitBundle> = (0..r)
            .map(|_| {
                let logits = Array2::from_shape_simple_fn((rows, d), || rng.random_range(-20.0..20.0));
                split(&logits, k, grain, None, &mut rng).unwrap()
            })
            .collect();
        let mut inbox: Vec<Vec<_>> = vec![Vec::new(); r];
        for (z, b) in bundles.iter().enumerate() {
            let blinded = blind(b, params, &mut rng).unwrap();
            for (x, s) in encode(&blinded, members[z], &view).unwrap().into_iter().enumerate() {
                inbox[x].push(s);
            }
        }
        let aggregates =
            inbox.iter().enumerate().map(|(x, shares)| local_aggregate(members[x], shares, &view).unwrap()).collect();
        Run { plan, view, bundles, aggregates }
    }

    fn result(run: &Run, aggregates: &[AggregatedShare], grain: Grain) -> Result<RealTensor> {
        let p = &run.plan;
        let decoded = decode(aggregates, &p.members, &p.nodes, p.k, p.t, run.view.f.degree())?;
        deblind_and_join(&decoded, &p.blind_factor, grain)
    }

    fn oracle(run: &Run, grain: Grain) -> RealTensor {
        plaintext_oracle(&run.bundles, &run.plan.weights, &run.view.f, grain).unwrap()
    }

    #[test]
    fn degree_zero_decode_returns_real_part() {
        let nodes = make_nodes_with(1, 1, 0, 1.0, NodeLayout::Auto).unwrap();
        let agg = AggregatedShare { holder: ClientId(4), payload: array![[C64::new(2.5, 7.0)]] };
        let out = decode(&[agg], &[ClientId(4)], &nodes, 1, 0, 1).unwrap();
        assert_eq!(out, vec![array![[2.5]]]);
    }

    #[test]
    fn noiseless_pipeline_reproduces_plain_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (r, k) = (5, 2);
        let nodes = make_nodes_with(r, k, 0, 1.0, NodeLayout::Auto).unwrap();
        let members: Vec<ClientId> = (0..r).map(ClientId).collect();
        let plan =
            GroupPlan::new(ClientId(9), members.clone(), k, 0, nodes, vec![1.0; r], RealTensor::ones((2, 2))).unwrap();
        let view = plan.view(ElementwisePoly::identity());
        let mut inbox: Vec<Vec<_>> = vec![Vec::new(); r];
        let mut want = RealTensor::zeros((2, 2));
        for &m in &members {
            // Inputs on the 1/8 grid are exact in binary.
            let logits = Array2::from_shape_simple_fn((2, 2), || rng.random_range(-80..80) as f64 / 8.0);
            want += &logits;
            let b = split(&logits, k, Grain::Class, None, &mut rng).unwrap();
            for (x, s) in encode(&b, m, &view).unwrap().into_iter().enumerate() {
                inbox[x].push(s);
            }
        }
        let aggs: Vec<_> =
            inbox.iter().enumerate().map(|(x, s)| local_aggregate(members[x], s, &view).unwrap()).collect();
        let decoded = decode(&aggs, &members, &plan.nodes, k, 0, 1).unwrap();
        let got = deblind_and_join(&decoded, &plan.blind_factor, Grain::Class).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn full_group_with_heavy_noise_matches_oracle() {
        let run = run(40, 6, 6, ElementwisePoly::identity(), Grain::Class, 1e3, 5);
        let re =
            relative_error(&result(&run, &run.aggregates, Grain::Class).unwrap(), &oracle(&run, Grain::Class)).unwrap();
        assert!(re < 1e-6, "relative error {re}");
    }

    #[test]
    fn sample_grain_pipeline_matches_oracle() {
        let run = run(8, 2, 1, ElementwisePoly::identity(), Grain::Sample, 10.0, 6);
        let re = relative_error(&result(&run, &run.aggregates, Grain::Sample).unwrap(), &oracle(&run, Grain::Sample))
            .unwrap();
        assert!(re < 1e-9, "relative error {re}");
    }

    #[test]
    fn too_few_aggregates_is_reported() {
        let run = run(6, 2, 1, ElementwisePoly::square(), Grain::Class, 1.0, 7);
        // deg 2 · (K+T-1) + 1 = 5.
        assert!(result(&run, &run.aggregates[..5], Grain::Class).is_ok());
        assert_eq!(
            result(&run, &run.aggregates[..4], Grain::Class).unwrap_err(),
            Error::InsufficientShares { have: 4, need: 5 }
        );
    }

    #[test]
    fn decode_rejects_strangers_and_repeats() {
        let run = run(4, 1, 1, ElementwisePoly::identity(), Grain::Class, 1.0, 8);
        let mut aggs = run.aggregates.clone();
        aggs.push(aggs[0].clone());
        assert_eq!(result(&run, &aggs, Grain::Class).unwrap_err(), Error::DuplicateNode(0));
        aggs.pop();
        aggs[0].holder = ClientId(77);
        assert!(matches!(result(&run, &aggs, Grain::Class), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn deblind_examples() {
        let ones = RealTensor::ones((1, 1));
        assert_eq!(deblind_and_join(&[array![[1.0]], array![[2.0]]], &ones, Grain::Class).unwrap(), array![[3.0]]);
        let row_ones = RealTensor::ones((1, 2));
        assert_eq!(
            deblind_and_join(&[array![[1.0, 2.0]], array![[3.0, 4.0]]], &row_ones, Grain::Sample).unwrap(),
            array![[1.0, 2.0], [3.0, 4.0]]
        );
        assert_eq!(deblind_and_join(&[array![[4.0]]], &(&ones * 2.0), Grain::Class).unwrap(), array![[2.0]]);
        assert_eq!(
            deblind_and_join(&[array![[4.0, 1.0]]], &array![[1.0, 0.0]], Grain::Class).unwrap_err(),
            Error::ZeroBlindEntry(0, 1)
        );
    }

    #[test]
    fn oracle_applies_weights_and_f() {
        let b = |v: f64| SplitBundle { grain: Grain::Class, slices: vec![array![[v]]], noise: vec![] };
        let got = plaintext_oracle(&[b(1.0), b(3.0)], &[0.5, 2.0], &ElementwisePoly::square(), Grain::Class).unwrap();
        assert_eq!(got, array![[18.5]]);
    }

    #[test]
    fn t_privacy_rank_condition_on_every_subset_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for &(r, k, t) in &[(10, 2, 3), (12, 4, 3), (30, 10, 3), (100, 10, 3)] {
            let nodes = make_nodes_with(r, k, t, 1.0, NodeLayout::Auto).unwrap();
            let lagrange = nodes.lagrange_matrix();
            let mut slots: Vec<usize> = (0..r).collect();
            for _ in 0..50 {
                slots.shuffle(&mut rng);
                let det = crate::coding::noise_coefficient_det(&lagrange, k, &slots[..t]).unwrap();
                assert!(det.norm() > 1e-12, "r={r} k={k} t={t} det={det}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn homomorphic_aggregation(
            r in 2usize..=12,
            k in 1usize..=4,
            t in 0usize..=3,
            square in any::<bool>(),
            sample in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let f = if square { ElementwisePoly::square() } else { ElementwisePoly::identity() };
            let needed = decode_threshold(k, t, f.degree());
            prop_assume!(needed <= r);
            let grain = if sample { Grain::Sample } else { Grain::Class };
            let run = run(r, k, t, f, grain, 1e3, seed);
            let re = relative_error(&result(&run, &run.aggregates, grain).unwrap(), &oracle(&run, grain)).unwrap();
            prop_assert!(re <= 1e-6, "relative error {}", re);
        }

        #[test]
        fn d_resilience(
            r in 4usize..=12,
            k in 1usize..=3,
            t in 0usize..=2,
            seed in any::<u64>(),
        ) {
            let need = decode_threshold(k, t, 1);
            prop_assume!(need <= r);
            let run = run(r, k, t, ElementwisePoly::identity(), Grain::Class, 1e3, seed);
            let truth = oracle(&run, Grain::Class);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let mut kept = run.aggregates.clone();
            kept.shuffle(&mut rng);
            let d = r - need;
            let survivors = &kept[..r - d];
            let re = relative_error(&result(&run, survivors, Grain::Class).unwrap(), &truth).unwrap();
            prop_assert!(re <= 1e-6, "relative error {}", re);
            let too_few = result(&run, &kept[..r - d - 1], Grain::Class);
            prop_assert_eq!(too_few.unwrap_err(), Error::InsufficientShares { have: need - 1, need });
        }
    }
}
