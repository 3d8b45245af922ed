use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::filtration::{form_topology, HashedCal, Topology};
use crate::ClientId;

/// The topology of the next round after clients join or leave. Groups are
/// formed again from scratch over the surviving and joining clients;
/// `hashed` must hold every one of their hashed CALs.
pub fn membership_update(
    topology: &Topology,
    hashed: &BTreeMap<ClientId, HashedCal>,
    joins: &BTreeSet<ClientId>,
    leaves: &BTreeSet<ClientId>,
    r: usize,
) -> Result<Topology> {
    let clients: BTreeSet<ClientId> = topology.nodes.union(joins).copied().filter(|c| !leaves.contains(c)).collect();
    let current = clients
        .iter()
        .map(|&c| {
            hashed
                .get(&c)
                .cloned()
                .map(|h| (c, h))
                .ok_or_else(|| Error::InvalidParameter(format!("no hashed CAL for {c}")))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    form_topology(&current, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::{compute_cal, lsh_project, LshConfig};
    use crate::workload::WorkloadConfig;
    use crate::Grain;

    fn hashed(n: usize) -> BTreeMap<ClientId, HashedCal> {
        let lsh = LshConfig::new(3);
        WorkloadConfig { samples: 60, ..WorkloadConfig::default() }
            .population(n, Grain::Class, 4)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, (_, d))| (ClientId(i), lsh_project(&compute_cal(&d.samples).unwrap(), &lsh).unwrap()))
            .collect()
    }

    #[test]
    fn no_change_keeps_the_topology() {
        let h = hashed(8);
        let topo = form_topology(&h, 3).unwrap();
        let next = membership_update(&topo, &h, &BTreeSet::new(), &BTreeSet::new(), 3).unwrap();
        assert_eq!(next, topo);
    }

    #[test]
    fn departed_client_disappears() {
        let h = hashed(8);
        let topo = form_topology(&h, 3).unwrap();
        let gone = ClientId(5);
        let next = membership_update(&topo, &h, &BTreeSet::new(), &BTreeSet::from([gone]), 3).unwrap();
        assert!(!next.nodes.contains(&gone));
        assert!(next.edges.iter().all(|&(a, b)| a != gone && b != gone));
        assert!(next.groups.values().all(|g| !g.contains(&gone)));
        next.check_round(3).unwrap();
    }

    #[test]
    fn twin_joins_its_twins_neighbourhood() {
        let mut h = hashed(8);
        let present: BTreeMap<_, _> = h.iter().map(|(&c, v)| (c, v.clone())).collect();
        let topo = form_topology(&present, 3).unwrap();
        let twin = ClientId(8);
        h.insert(twin, h[&ClientId(2)].clone());
        let next = membership_update(&topo, &h, &BTreeSet::from([twin]), &BTreeSet::new(), 1).unwrap();
        assert_eq!(next.groups[&ClientId(2)], vec![twin]);
        assert_eq!(next.groups[&twin], vec![ClientId(2)]);
    }

    #[test]
    fn missing_hash_is_an_error() {
        let h = hashed(4);
        let topo = form_topology(&h, 2).unwrap();
        assert!(membership_update(&topo, &h, &BTreeSet::from([ClientId(9)]), &BTreeSet::new(), 2).is_err());
    }
}
