use svafd::protocol::{run_round, run_round_hooked, ClientInput, GroupOutcome, RoundConfig};
use svafd::threats::{AttackKind, AttackParams, AttackSpec, TamperHooks};
use svafd::workload::WorkloadConfig;
use svafd::ClientId;

fn setup(seed: u64) -> (RoundConfig, Vec<ClientInput>) {
    let cfg = RoundConfig { n: 6, r: 4, k: 2, t: 1, seed, ..RoundConfig::default() };
    let inputs = WorkloadConfig { samples: 60, ..WorkloadConfig::default() }
        .population(cfg.n, cfg.grain, seed)
        .unwrap()
        .into_iter()
        .map(|(_, d)| d.into())
        .collect();
    (cfg, inputs)
}

/// The tamper spec aimed at the group led by client 0.
fn aimed(kind: AttackKind, cfg: &RoundConfig, inputs: &[ClientInput], delta: f64) -> AttackSpec {
    let selection = run_round(cfg, inputs).unwrap().transcript.selections[&ClientId(0)].clone();
    let victim = selection[0];
    AttackSpec {
        kind,
        params: AttackParams { delta, group: Some(ClientId(0)), ..AttackParams::default() },
        victims: [victim].into(),
    }
}

fn outcomes(kind: AttackKind, delta: f64, seed: u64) -> Vec<(ClientId, GroupOutcome)> {
    let (cfg, inputs) = setup(seed);
    let hooks = TamperHooks::new(aimed(kind, &cfg, &inputs, delta)).unwrap();
    let out = run_round_hooked(&cfg, &inputs, &hooks).unwrap();
    out.transcript.groups.into_iter().map(|(l, g)| (l, g.outcome)).collect()
}

fn only_group_zero_rejects(kind: AttackKind, delta: f64) {
    for seed in 0..5 {
        for (leader, outcome) in outcomes(kind, delta, seed) {
            if leader == ClientId(0) {
                assert!(matches!(outcome, GroupOutcome::Rejected { .. }), "{kind:?} seed {seed}: {outcome:?}");
            } else {
                assert_eq!(outcome, GroupOutcome::Accepted, "{kind:?} seed {seed} group {leader}");
            }
        }
    }
}

#[test]
fn share_tamper_rejects_only_its_group() {
    only_group_zero_rejects(AttackKind::ShareTamper, 1e-3);
}

#[test]
fn weight_tamper_by_one_unit_rejects() {
    only_group_zero_rejects(AttackKind::WeightTamper, 1.0);
}

#[test]
fn server_tamper_by_one_grid_step_rejects() {
    only_group_zero_rejects(AttackKind::ServerTamper, 1e-3);
}

#[test]
fn zero_deltas_are_no_ops() {
    for kind in [AttackKind::ShareTamper, AttackKind::WeightTamper, AttackKind::ServerTamper] {
        assert!(outcomes(kind, 0.0, 1).iter().all(|(_, o)| o.accepted()), "{kind:?}");
    }
}

#[test]
fn server_tamper_without_scope_rejects_everything() {
    let (cfg, inputs) = setup(2);
    let spec = AttackSpec::new(AttackKind::ServerTamper, [])
        .with_params(AttackParams { delta: 1e-3, ..AttackParams::default() });
    let out = run_round_hooked(&cfg, &inputs, &TamperHooks::new(spec).unwrap()).unwrap();
    assert!(out.transcript.groups.values().all(|g| matches!(g.outcome, GroupOutcome::Rejected { .. })));
}
