//! Node layout, routing, failure detection and takeover.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::power::PowerProfile;
use super::scenario::{HeartbeatConfig, Scenario};
use super::SimError;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Sensor,
    Computational,
    Intermediate,
    Office,
    EventWatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default)]
    pub zone: u32,
    #[serde(default)]
    pub links: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerProfile>,
}

impl NodeSpec {
    pub fn power_profile(&self) -> PowerProfile {
        self.power.unwrap_or_else(|| PowerProfile::default_for(self.kind))
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    nodes: BTreeMap<NodeId, NodeSpec>,
    office: NodeId,
    /// Computational node initially responsible for each zone.
    owners: BTreeMap<u32, NodeId>,
    heartbeat: HeartbeatConfig,
}

/// Instantiate and check the deployment described by `scenario`.
pub fn build_topology(scenario: &Scenario) -> Result<Network, SimError> {
    scenario.validate()?;
    let mut nodes = BTreeMap::new();
    for spec in &scenario.nodes {
        if nodes.insert(spec.id, spec.clone()).is_some() {
            return Err(SimError::DuplicateId(spec.id));
        }
    }
    for (i, spec) in scenario.nodes.iter().enumerate() {
        for (j, peer) in spec.links.iter().enumerate() {
            let path = format!("nodes[{i}].links[{j}]");
            let other = nodes.get(peer).ok_or_else(|| SimError::Invalid {
                path: path.clone(),
                message: format!("unknown node {peer}"),
            })?;
            if *peer == spec.id {
                return Err(SimError::Invalid {
                    path,
                    message: "a node cannot link to itself".into(),
                });
            }
            if !other.links.contains(&spec.id) {
                return Err(SimError::Invalid {
                    path,
                    message: format!("link {} -> {peer} has no matching {peer} -> {}", spec.id, spec.id),
                });
            }
        }
    }
    let office = nodes
        .values()
        .find(|n| n.kind == NodeKind::Office)
        .map(|n| n.id)
        .expect("validated: one office");

    let mut owners = BTreeMap::new();
    for n in nodes.values().filter(|n| n.kind == NodeKind::Computational) {
        owners.entry(n.zone).or_insert(n.id);
    }
    let network = Network {
        nodes,
        office,
        owners,
        heartbeat: scenario.heartbeat,
    };

    for n in network.nodes.values() {
        match n.kind {
            NodeKind::Computational => {
                if network.route(n.id, office, &BTreeSet::new()).is_none() {
                    return Err(SimError::DisconnectedTopology(n.id));
                }
            }
            NodeKind::Sensor | NodeKind::EventWatch => {
                let owner = network.owners.get(&n.zone).ok_or_else(|| SimError::Invalid {
                    path: "nodes".into(),
                    message: format!("zone {} has no computational node", n.zone),
                })?;
                if network.route(n.id, *owner, &BTreeSet::new()).is_none() {
                    return Err(SimError::DisconnectedTopology(n.id));
                }
            }
            NodeKind::Intermediate | NodeKind::Office => {}
        }
    }
    Ok(network)
}

impl Network {
    pub fn office(&self) -> NodeId {
        self.office
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.values()
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.values().filter(|n| n.kind == kind).count()
    }

    pub fn heartbeat(&self) -> HeartbeatConfig {
        self.heartbeat
    }

    pub fn initial_owners(&self) -> &BTreeMap<u32, NodeId> {
        &self.owners
    }

    pub fn sensor_of(&self, zone: u32) -> Option<NodeId> {
        self.nodes
            .values()
            .find(|n| n.kind == NodeKind::Sensor && n.zone == zone)
            .map(|n| n.id)
    }

    /// Hop counts from `from` over nodes not in `avoid`; neighbours are
    /// visited in id order.
    fn distances(&self, from: NodeId, avoid: &BTreeSet<NodeId>) -> BTreeMap<NodeId, usize> {
        let mut dist = BTreeMap::from([(from, 0)]);
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            let d = dist[&n];
            let mut links = self.nodes[&n].links.clone();
            links.sort();
            for peer in links {
                if avoid.contains(&peer) || dist.contains_key(&peer) {
                    continue;
                }
                dist.insert(peer, d + 1);
                queue.push_back(peer);
            }
        }
        dist
    }

    /// Shortest path `from -> to` avoiding `avoid` (the endpoints excepted);
    /// among equal-length paths, each hop takes the lowest-id candidate.
    pub fn route(&self, from: NodeId, to: NodeId, avoid: &BTreeSet<NodeId>) -> Option<Vec<NodeId>> {
        let mut avoid = avoid.clone();
        avoid.remove(&from);
        avoid.remove(&to);
        let to_dest = self.distances(to, &avoid);
        let mut d = *to_dest.get(&from)?;
        let mut path = vec![from];
        let mut here = from;
        while d > 0 {
            let mut links = self.nodes[&here].links.clone();
            links.sort();
            here = links
                .into_iter()
                .find(|p| to_dest.get(p) == Some(&(d - 1)))
                .expect("BFS distances are consistent");
            path.push(here);
            d -= 1;
        }
        Some(path)
    }

    /// Nearest computational node to `failed` by hop count, ties to the
    /// lowest id, skipping anything in `exclude`.
    pub fn takeover_peer(&self, failed: NodeId, exclude: &BTreeSet<NodeId>) -> Option<NodeId> {
        let dist = self.distances(failed, exclude);
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::Computational && n.id != failed && !exclude.contains(&n.id))
            .filter_map(|n| dist.get(&n.id).map(|d| (*d, n.id)))
            .min()
            .map(|(_, id)| id)
    }
}

/// Computational nodes whose last heartbeat (by send time, minutes) is at
/// least `miss_limit` periods old at `now`. Nodes never heard from count from
/// t = 0.
pub fn detect_failures(network: &Network, last_heartbeat: &BTreeMap<NodeId, f64>, now: f64) -> Vec<NodeId> {
    let hb = network.heartbeat();
    let window = f64::from(hb.miss_limit) * hb.period_min;
    network
        .nodes()
        .filter(|n| n.kind == NodeKind::Computational)
        .filter(|n| now - last_heartbeat.get(&n.id).copied().unwrap_or(0.0) >= window - 1e-9)
        .map(|n| n.id)
        .collect()
}
