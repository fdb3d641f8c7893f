//! Scenario files: topology, environment traces, channel, scripted events.
//!
//! Scenarios are TOML. Every validation failure names the offending field by
//! its path in the file, e.g. `zones[1].samples` or `channel.links[0].loss`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::channel::HopModel;
use super::topology::{NodeKind, NodeSpec};
use super::SimError;
use crate::predictor::{PredictorConfig, Reading};
use crate::regression::RobustFitConfig;
use crate::scheduler::TimeSet;
use crate::NodeId;

fn invalid(path: impl Into<String>, message: impl Into<String>) -> SimError {
    SimError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

/// Seed used when a scenario does not name one.
pub const DEFAULT_SEED: u64 = 20_130_415;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Simulated span in minutes, starting at t = 0.
    pub horizon_min: f64,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub heartbeat: HeartbeatConfig,
    #[serde(default)]
    pub sensing: SensingConfig,
    #[serde(default)]
    pub predictor: PredictorSettings,
    pub nodes: Vec<NodeSpec>,
    pub zones: Vec<ZoneTrace>,
    #[serde(default)]
    pub triggers: Vec<ScriptedTrigger>,
    #[serde(default)]
    pub failures: Vec<ScriptedFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub loss: f64,
    pub corruption: f64,
    /// Seconds per hop.
    pub hop_latency_s: u64,
    /// Directional per-link overrides.
    pub links: Vec<LinkOverride>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            loss: 0.0,
            corruption: 0.0,
            hop_latency_s: 2,
            links: Vec::new(),
        }
    }
}

impl ChannelConfig {
    pub fn hop(&self, from: NodeId, to: NodeId) -> HopModel {
        let mut model = HopModel {
            loss: self.loss,
            corruption: self.corruption,
        };
        if let Some(o) = self.links.iter().find(|l| l.from == from && l.to == to) {
            model.loss = o.loss.unwrap_or(model.loss);
            model.corruption = o.corruption.unwrap_or(model.corruption);
        }
        model
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOverride {
    pub from: NodeId,
    pub to: NodeId,
    pub loss: Option<f64>,
    pub corruption: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeartbeatConfig {
    pub period_min: f64,
    /// Consecutive missed heartbeats before a node is suspected.
    pub miss_limit: u32,
}

impl Default for HeartbeatConfig {
    fn default() -> Self {
        Self {
            period_min: 10.0,
            miss_limit: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    /// How long a sensor stays awake per sample, seconds.
    pub awake_s: u64,
    /// Delay between a resample request arriving and the new sample.
    pub resample_delay_s: u64,
    /// How often event-watch nodes compare levels, seconds.
    pub watch_period_s: u64,
    /// Level jump over one watch period that counts as an abrupt change.
    pub watch_jump_m: f64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            awake_s: 2,
            resample_delay_s: 10,
            watch_period_s: 60,
            watch_jump_m: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSettings {
    pub flood_line: f64,
    pub threshold: f64,
    pub capacity: usize,
    pub time_set: Vec<f64>,
    pub action_time: f64,
    pub reliability_period: Option<f64>,
    pub robust: RobustFitConfig,
}

impl Default for PredictorSettings {
    fn default() -> Self {
        let base = PredictorConfig::default();
        Self {
            flood_line: base.flood_line,
            threshold: base.threshold,
            capacity: base.capacity,
            time_set: base.time_set.intervals().to_vec(),
            action_time: base.time_set.action_time(),
            reliability_period: base.reliability_period,
            robust: base.robust,
        }
    }
}

impl PredictorSettings {
    pub fn to_config(&self) -> Result<PredictorConfig, SimError> {
        let time_set = TimeSet::new(self.time_set.clone(), self.action_time)
            .map_err(|e| invalid("predictor.time_set", e.to_string()))?;
        let config = PredictorConfig {
            flood_line: self.flood_line,
            threshold: self.threshold,
            reliability_period: self.reliability_period,
            capacity: self.capacity,
            time_set,
            robust: self.robust.clone(),
        };
        config
            .validate()
            .map_err(|e| invalid("predictor", e.to_string()))?;
        Ok(config)
    }
}

/// Environment of one zone as `[t_min, level_m, rainfall_mmhr, discharge_m3s]`
/// knots, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneTrace {
    pub zone: u32,
    pub samples: Vec<[f64; 4]>,
}

impl ZoneTrace {
    pub fn start(&self) -> f64 {
        self.samples.first().map_or(f64::NAN, |s| s[0])
    }

    pub fn end(&self) -> f64 {
        self.samples.last().map_or(f64::NAN, |s| s[0])
    }

    /// The true environment at `t`, or `None` outside the trace.
    pub fn at(&self, t: f64) -> Option<Reading> {
        if !(t >= self.start() && t <= self.end()) {
            return None;
        }
        let i = self.samples.partition_point(|s| s[0] <= t);
        let v = if i == self.samples.len() {
            self.samples[i - 1]
        } else if i == 0 {
            self.samples[0]
        } else {
            let (a, b) = (self.samples[i - 1], self.samples[i]);
            let f = (t - a[0]) / (b[0] - a[0]);
            [t, a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2]), a[3] + f * (b[3] - a[3])]
        };
        Some(Reading::new(t, v[1], v[2], v[3]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedTriggerKind {
    /// Exogenous event (e.g. a dam release) announced to the zone's
    /// computational node.
    Event,
    /// User query issued at the office.
    Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedTrigger {
    pub at_min: f64,
    pub kind: ScriptedTriggerKind,
    pub zone: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedFailure {
    pub node: NodeId,
    pub at_min: f64,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenarios always serialize")
    }

    pub fn trace(&self, zone: u32) -> Option<&ZoneTrace> {
        self.zones.iter().find(|z| z.zone == zone)
    }

    /// Field-level checks. Connectivity is checked when the network is built.
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon_min.is_finite() && self.horizon_min > 0.0) {
            return Err(invalid("horizon_min", "must be positive"));
        }
        let c = &self.channel;
        if !is_probability(c.loss) {
            return Err(invalid("channel.loss", "must lie in [0, 1]"));
        }
        if !is_probability(c.corruption) {
            return Err(invalid("channel.corruption", "must lie in [0, 1]"));
        }
        let ids: BTreeSet<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        for (i, l) in c.links.iter().enumerate() {
            if l.loss.is_some_and(|p| !is_probability(p)) {
                return Err(invalid(format!("channel.links[{i}].loss"), "must lie in [0, 1]"));
            }
            if l.corruption.is_some_and(|p| !is_probability(p)) {
                return Err(invalid(
                    format!("channel.links[{i}].corruption"),
                    "must lie in [0, 1]",
                ));
            }
            if !ids.contains(&l.from) || !ids.contains(&l.to) {
                return Err(invalid(format!("channel.links[{i}]"), "refers to an unknown node"));
            }
        }
        if !(self.heartbeat.period_min.is_finite() && self.heartbeat.period_min > 0.0) {
            return Err(invalid("heartbeat.period_min", "must be positive"));
        }
        if self.heartbeat.miss_limit == 0 {
            return Err(invalid("heartbeat.miss_limit", "must be at least 1"));
        }
        if self.sensing.watch_period_s == 0 {
            return Err(invalid("sensing.watch_period_s", "must be at least 1"));
        }
        if !(self.sensing.watch_jump_m.is_finite() && self.sensing.watch_jump_m > 0.0) {
            return Err(invalid("sensing.watch_jump_m", "must be positive"));
        }
        self.predictor.to_config()?;

        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = &n.power {
                if !p.is_valid() {
                    return Err(invalid(format!("nodes[{i}].power"), "draws must be finite and non-negative"));
                }
            }
        }
        let offices = self.nodes.iter().filter(|n| n.kind == NodeKind::Office).count();
        if offices != 1 {
            return Err(invalid("nodes", format!("expected exactly one office node, found {offices}")));
        }
        let mut sensors_per_zone: BTreeMap<u32, usize> = BTreeMap::new();
        for n in self.nodes.iter().filter(|n| n.kind == NodeKind::Sensor) {
            *sensors_per_zone.entry(n.zone).or_default() += 1;
        }
        for (zone, count) in &sensors_per_zone {
            if *count > 1 {
                return Err(invalid("nodes", format!("zone {zone} has {count} sensors; one per zone is supported")));
            }
        }

        let mut seen = BTreeSet::new();
        for (i, z) in self.zones.iter().enumerate() {
            let path = format!("zones[{i}].samples");
            if !seen.insert(z.zone) {
                return Err(invalid(format!("zones[{i}].zone"), format!("zone {} listed twice", z.zone)));
            }
            if z.samples.is_empty() {
                return Err(invalid(path, "no samples"));
            }
            for (j, s) in z.samples.iter().enumerate() {
                if s.iter().any(|v| !v.is_finite()) || s[1] < 0.0 {
                    return Err(invalid(format!("{path}[{j}]"), "values must be finite with a non-negative level"));
                }
                if j > 0 && s[0] <= z.samples[j - 1][0] {
                    return Err(invalid(format!("{path}[{j}]"), "times must strictly increase"));
                }
            }
            if z.start() > 0.0 || z.end() < self.horizon_min {
                return Err(invalid(
                    path,
                    format!(
                        "trace covers [{}, {}] min but the horizon needs [0, {}]",
                        z.start(),
                        z.end(),
                        self.horizon_min
                    ),
                ));
            }
        }
        for zone in sensors_per_zone.keys() {
            if !seen.contains(zone) {
                return Err(invalid("zones", format!("no environment trace for zone {zone}")));
            }
        }
        for (i, t) in self.triggers.iter().enumerate() {
            if !(t.at_min >= 0.0 && t.at_min <= self.horizon_min) {
                return Err(invalid(format!("triggers[{i}].at_min"), "outside the horizon"));
            }
            if !sensors_per_zone.contains_key(&t.zone) {
                return Err(invalid(format!("triggers[{i}].zone"), "zone has no sensor"));
            }
        }
        for (i, f) in self.failures.iter().enumerate() {
            if !ids.contains(&f.node) {
                return Err(invalid(format!("failures[{i}].node"), "unknown node"));
            }
            if !(f.at_min.is_finite() && f.at_min >= 0.0) {
                return Err(invalid(format!("failures[{i}].at_min"), "must be non-negative"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace() -> ZoneTrace {
        ZoneTrace {
            zone: 0,
            samples: vec![[0.0, 1.0, 0.0, 10.0], [10.0, 3.0, 5.0, 20.0]],
        }
    }

    #[test]
    fn interpolates_linearly() {
        let r = trace().at(2.5).unwrap();
        assert_eq!((r.level, r.rainfall, r.discharge), (1.5, 1.25, 12.5));
        assert_eq!(trace().at(10.0).unwrap().level, 3.0);
        assert!(trace().at(10.5).is_none());
        assert!(trace().at(-0.1).is_none());
    }

    #[test]
    fn link_overrides_are_directional() {
        let c = ChannelConfig {
            corruption: 0.1,
            links: vec![LinkOverride {
                from: NodeId(1),
                to: NodeId(2),
                loss: None,
                corruption: Some(1.0),
            }],
            ..ChannelConfig::default()
        };
        assert_eq!(c.hop(NodeId(1), NodeId(2)).corruption, 1.0);
        assert_eq!(c.hop(NodeId(2), NodeId(1)).corruption, 0.1);
    }
}
