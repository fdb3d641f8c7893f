//! Discrete-event simulation of a river-basin sensor network.
//!
//! Sensors sample their zone's environment trace when woken, readings travel
//! hop by hop to the zone's computational node, which runs the predictor and
//! forwards reading and output to the office. The office reruns the same
//! prediction as a cross-check and keeps the alarm log. The clock ticks in
//! seconds; everything reported is in minutes.

mod channel;
mod power;
mod scenario;
mod topology;
mod trace;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use channel::{HopModel, Message, Payload};
pub use power::{draw_mw, power_step, EnergyLedger, PowerProfile, PowerState};
pub use scenario::{
    ChannelConfig, HeartbeatConfig, DEFAULT_SEED, LinkOverride, PredictorSettings, Scenario, ScriptedFailure,
    ScriptedTrigger, ScriptedTriggerKind, SensingConfig, ZoneTrace,
};
pub use topology::{build_topology, detect_failures, Network, NodeKind, NodeSpec};
pub use trace::{
    AlarmRecord, MessageCounters, Role, SimEvent, SimEventKind, SimTrace, Suspicion, ZonePrediction,
};

use crate::predictor::{PredictionOutput, Predictor, PredictorConfig, PredictorError, Reading};
use crate::scheduler::{Trigger, TriggerKind};
use crate::NodeId;
use channel::{draw_hop, HopOutcome};

pub const TICKS_PER_MINUTE: u64 = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("node {0} has no route to where its data must go")]
    DisconnectedTopology(NodeId),
    #[error("environment trace for zone {zone} ends at {end} min but a sample was due at {needed} min")]
    HorizonExceeded { zone: u32, end: f64, needed: f64 },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

fn to_ticks(minutes: f64) -> u64 {
    (minutes * TICKS_PER_MINUTE as f64).round().max(0.0) as u64
}

fn to_min(tick: u64) -> f64 {
    tick as f64 / TICKS_PER_MINUTE as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    tick: u64,
    node: NodeId,
    seq: u64,
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Sample { zone: u32, generation: u64 },
    Deliver { msg: u64 },
    PowerIdle,
    Heartbeat,
    FailureCheck,
    Fail,
    Watch,
    Scripted { zone: u32, kind: ScriptedTriggerKind },
}

struct NodeRuntime {
    kind: NodeKind,
    zone: u32,
    profile: PowerProfile,
    state: PowerState,
    since: u64,
    busy_until: u64,
    failed_at: Option<u64>,
    frozen: bool,
    ledger: EnergyLedger,
}

struct ZoneRuntime {
    sensor: NodeId,
    owner: NodeId,
    generation: u64,
    fallback_ticks: u64,
    alarm_active: bool,
}

/// Run `scenario` on `network` (built from the same scenario) to its horizon.
pub fn run_simulation(network: &Network, scenario: &Scenario) -> Result<SimTrace, SimError> {
    Sim::new(network, scenario)?.run()
}

/// Parse, build and run in one go.
pub fn simulate(scenario: &Scenario) -> Result<SimTrace, SimError> {
    let network = build_topology(scenario)?;
    run_simulation(&network, scenario)
}

struct Sim<'a> {
    net: &'a Network,
    scenario: &'a Scenario,
    config: PredictorConfig,
    rng: ChaCha8Rng,
    horizon: u64,
    latency: u64,
    queue: BTreeMap<Key, Action>,
    seq: u64,
    events: Vec<SimEvent>,
    nodes: BTreeMap<NodeId, NodeRuntime>,
    zones: BTreeMap<u32, ZoneRuntime>,
    predictors: BTreeMap<(NodeId, u32), Predictor>,
    flight: BTreeMap<u64, (Message, NodeId)>,
    next_msg: u64,
    heartbeats: BTreeMap<NodeId, f64>,
    suspected: BTreeSet<NodeId>,
    predictions: BTreeMap<NodeId, Vec<ZonePrediction>>,
    alarms: Vec<AlarmRecord>,
    suspicions: Vec<Suspicion>,
    counters: MessageCounters,
}

impl<'a> Sim<'a> {
    fn new(net: &'a Network, scenario: &'a Scenario) -> Result<Self, SimError> {
        let config = scenario.predictor.to_config()?;
        let failures: BTreeMap<NodeId, u64> = scenario
            .failures
            .iter()
            .map(|f| (f.node, to_ticks(f.at_min)))
            .collect();
        let nodes = net
            .nodes()
            .map(|n| {
                let rt = NodeRuntime {
                    kind: n.kind,
                    zone: n.zone,
                    profile: n.power_profile(),
                    state: PowerState::Sleep,
                    since: 0,
                    busy_until: 0,
                    failed_at: failures.get(&n.id).copied(),
                    frozen: false,
                    ledger: EnergyLedger {
                        history: vec![(0.0, 0.0)],
                        ..EnergyLedger::default()
                    },
                };
                (n.id, rt)
            })
            .collect();
        let fallback_ticks = to_ticks(config.time_set.longest());
        let zones = net
            .initial_owners()
            .iter()
            .filter_map(|(zone, owner)| {
                net.sensor_of(*zone).map(|sensor| {
                    let rt = ZoneRuntime {
                        sensor,
                        owner: *owner,
                        generation: 0,
                        fallback_ticks,
                        alarm_active: false,
                    };
                    (*zone, rt)
                })
            })
            .collect();
        Ok(Self {
            net,
            scenario,
            config,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            horizon: to_ticks(scenario.horizon_min),
            latency: scenario.channel.hop_latency_s,
            queue: BTreeMap::new(),
            seq: 0,
            events: Vec::new(),
            nodes,
            zones,
            predictors: BTreeMap::new(),
            flight: BTreeMap::new(),
            next_msg: 0,
            heartbeats: BTreeMap::new(),
            suspected: BTreeSet::new(),
            predictions: BTreeMap::new(),
            alarms: Vec::new(),
            suspicions: Vec::new(),
            counters: MessageCounters::default(),
        })
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn schedule(&mut self, tick: u64, node: NodeId, action: Action) {
        if tick > self.horizon {
            return;
        }
        let seq = self.next_seq();
        self.queue.insert(Key { tick, node, seq }, action);
    }

    fn record(&mut self, tick: u64, node: NodeId, kind: SimEventKind) {
        let seq = self.next_seq();
        self.events.push(SimEvent {
            tick,
            t_min: to_min(tick),
            node,
            seq,
            kind,
        });
    }

    fn alive(&self, node: NodeId, tick: u64) -> bool {
        self.nodes[&node].failed_at.is_none_or(|f| tick <= f)
    }

    fn run(mut self) -> Result<SimTrace, SimError> {
        let zone_ids: Vec<(u32, NodeId)> = self.zones.iter().map(|(z, rt)| (*z, rt.sensor)).collect();
        for (zone, sensor) in zone_ids {
            self.schedule(0, sensor, Action::Sample { zone, generation: 0 });
        }
        let period = to_ticks(self.net.heartbeat().period_min).max(1);
        let office = self.net.office();
        let ids: Vec<(NodeId, NodeKind)> = self.nodes.iter().map(|(id, rt)| (*id, rt.kind)).collect();
        for (id, kind) in ids {
            match kind {
                NodeKind::Computational => self.schedule(0, id, Action::Heartbeat),
                NodeKind::EventWatch => {
                    self.schedule(self.scenario.sensing.watch_period_s, id, Action::Watch)
                }
                _ => {}
            }
            if let Some(f) = self.nodes[&id].failed_at {
                self.schedule(f, id, Action::Fail);
            }
        }
        self.schedule(period, office, Action::FailureCheck);
        for t in &self.scenario.triggers {
            self.schedule(
                to_ticks(t.at_min),
                office,
                Action::Scripted {
                    zone: t.zone,
                    kind: t.kind,
                },
            );
        }

        while let Some((key, action)) = self.queue.pop_first() {
            self.handle(key.tick, key.node, action)?;
        }

        let horizon = self.horizon;
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        for id in ids {
            let state = self.nodes[&id].state;
            self.set_state(id, state, horizon);
        }
        self.counters.in_flight = self.flight.len() as u64;
        self.events.sort_by_key(|e| (e.tick, e.node, e.seq));
        Ok(SimTrace {
            events: self.events,
            energy: self.nodes.into_iter().map(|(id, rt)| (id, rt.ledger)).collect(),
            predictions: self.predictions,
            alarms: self.alarms,
            suspected: self.suspicions,
            counters: self.counters,
        })
    }

    fn handle(&mut self, tick: u64, node: NodeId, action: Action) -> Result<(), SimError> {
        if let Action::Deliver { msg } = action {
            return self.deliver(tick, node, msg);
        }
        if let Action::Fail = action {
            self.set_state(node, self.nodes[&node].state, tick);
            self.nodes.get_mut(&node).expect("known node").frozen = true;
            self.record(tick, node, SimEventKind::Failed);
            return Ok(());
        }
        if !self.alive(node, tick) {
            return Ok(());
        }
        match action {
            Action::Sample { zone, generation } => self.sample(tick, node, zone, generation)?,
            Action::PowerIdle => {
                if tick >= self.nodes[&node].busy_until {
                    self.set_state(node, PowerState::Sleep, tick);
                }
            }
            Action::Heartbeat => {
                let office = self.net.office();
                let sent_at = to_min(tick);
                self.send(tick, node, office, Payload::Heartbeat { sent_at });
                let period = to_ticks(self.net.heartbeat().period_min).max(1);
                self.schedule(tick + period, node, Action::Heartbeat);
            }
            Action::FailureCheck => self.check_failures(tick, node),
            Action::Watch => self.watch(tick, node)?,
            Action::Scripted { zone, kind } => self.scripted(tick, zone, kind),
            Action::Deliver { .. } | Action::Fail => unreachable!("handled above"),
        }
        Ok(())
    }

    fn set_state(&mut self, node: NodeId, state: PowerState, tick: u64) {
        let rt = self.nodes.get_mut(&node).expect("known node");
        if rt.frozen {
            return;
        }
        let elapsed = tick.saturating_sub(rt.since);
        if elapsed > 0 {
            rt.ledger.total_mj += power_step(&rt.profile, rt.kind, rt.state, elapsed as f64);
            if rt.state == PowerState::Sleep {
                rt.ledger.sleep_s += elapsed;
            } else {
                rt.ledger.active_s += elapsed;
            }
            rt.since = tick;
        }
        if state != rt.state {
            rt.ledger.history.push((to_min(tick), rt.ledger.total_mj));
            rt.state = state;
        }
    }

    /// Hold `state` (or a more demanding one already active) for `duration`.
    fn busy(&mut self, node: NodeId, tick: u64, duration: u64, state: PowerState) {
        let current = self.nodes[&node].state;
        let next = if current == PowerState::Sample { current } else { state };
        self.set_state(node, next, tick);
        let until = tick + duration.max(1);
        let rt = self.nodes.get_mut(&node).expect("known node");
        if until > rt.busy_until {
            rt.busy_until = until;
            self.schedule(until, node, Action::PowerIdle);
        }
    }

    fn environment(&self, zone: u32, tick: u64) -> Result<Reading, SimError> {
        let trace = self.scenario.trace(zone).expect("validated: every sensor zone has a trace");
        let t = to_min(tick);
        trace.at(t).ok_or(SimError::HorizonExceeded {
            zone,
            end: trace.end(),
            needed: t,
        })
    }

    fn sample(&mut self, tick: u64, sensor: NodeId, zone: u32, generation: u64) -> Result<(), SimError> {
        if self.zones[&zone].generation != generation {
            return Ok(());
        }
        let reading = self.environment(zone, tick)?;
        self.record(
            tick,
            sensor,
            SimEventKind::Sample {
                zone,
                level: reading.level,
                rainfall: reading.rainfall,
                discharge: reading.discharge,
            },
        );
        self.busy(sensor, tick, self.scenario.sensing.awake_s, PowerState::Sample);
        let owner = self.zones[&zone].owner;
        self.send(tick, sensor, owner, Payload::Reading { zone, reading });
        // watchdog in case the reply never comes
        let z = self.zones.get_mut(&zone).expect("known zone");
        z.generation += 1;
        let (generation, at) = (z.generation, tick + z.fallback_ticks);
        self.schedule(at, sensor, Action::Sample { zone, generation });
        Ok(())
    }

    fn wake(&mut self, now: u64, zone: u32, at: u64) {
        let z = self.zones.get_mut(&zone).expect("known zone");
        z.generation += 1;
        let (sensor, generation) = (z.sensor, z.generation);
        self.record(
            now,
            sensor,
            SimEventKind::Wake {
                zone,
                at_min: to_min(at),
            },
        );
        self.schedule(at, sensor, Action::Sample { zone, generation });
    }

    fn send(&mut self, tick: u64, src: NodeId, dst: NodeId, payload: Payload) {
        let id = self.next_msg;
        self.next_msg += 1;
        self.counters.sent += 1;
        self.record(
            tick,
            src,
            SimEventKind::Send {
                msg: id,
                dst,
                payload: payload.kind(),
            },
        );
        let message = Message::new(id, src, dst, payload, to_min(tick));
        self.forward(tick, src, message);
    }

    fn drop_message(&mut self, tick: u64, at: NodeId, mut message: Message, reason: &'static str) {
        message.dropped = true;
        self.counters.dropped += 1;
        self.record(tick, at, SimEventKind::Drop { msg: message.id, reason });
    }

    fn forward(&mut self, tick: u64, from: NodeId, mut message: Message) {
        let Some(path) = self.net.route(from, message.dst, &self.suspected) else {
            self.drop_message(tick, from, message, "no_route");
            return;
        };
        let next = path[1];
        self.busy(from, tick, self.latency, PowerState::Transmit);
        let hop = self.scenario.channel.hop(from, next);
        match draw_hop(hop, &mut self.rng) {
            HopOutcome::Lost => self.drop_message(tick, from, message, "lost"),
            HopOutcome::Delivered { corrupted } => {
                if corrupted {
                    message.payload.corrupt(&mut self.rng);
                    message.corrupted = true;
                }
                let id = message.id;
                self.flight.insert(id, (message, next));
                self.schedule(tick + self.latency, next, Action::Deliver { msg: id });
            }
        }
    }

    fn deliver(&mut self, tick: u64, at: NodeId, id: u64) -> Result<(), SimError> {
        let (mut message, _) = self.flight.remove(&id).expect("scheduled deliveries are in flight");
        if !self.alive(at, tick) {
            self.drop_message(tick, at, message, "node_down");
            return Ok(());
        }
        if at != message.dst {
            self.forward(tick, at, message);
            return Ok(());
        }
        message.deliver_time = Some(to_min(tick));
        self.counters.delivered += 1;
        let ok = message.checksum_ok();
        if !ok {
            self.counters.corrupted_deliveries += 1;
        }
        self.record(
            tick,
            at,
            SimEventKind::Deliver {
                msg: id,
                src: message.src,
                payload: message.payload.kind(),
                checksum_ok: ok,
            },
        );
        self.receive(tick, at, message, ok)
    }

    fn predictor(&mut self, node: NodeId, zone: u32) -> &mut Predictor {
        let config = &self.config;
        self.predictors.entry((node, zone)).or_insert_with(|| {
            Predictor::new(config.clone())
                .expect("validated configuration")
                .with_origin(node)
        })
    }

    fn receive(&mut self, tick: u64, at: NodeId, message: Message, ok: bool) -> Result<(), SimError> {
        let diagnostic = |message: String| SimEventKind::Diagnostic { message };
        match message.payload.clone() {
            Payload::Reading { zone, mut reading } => {
                reading.corrupted = !ok;
                if !ok {
                    self.counters.corrupted_readings += 1;
                }
                match self.predictor(at, zone).step(&reading) {
                    Ok(output) => {
                        if message.corrupted {
                            self.counters.predictions_from_corrupted += 1;
                        }
                        self.after_prediction(tick, at, zone, reading, output);
                    }
                    Err(PredictorError::CorruptedReading { .. }) => {
                        self.counters.resample_requests += 1;
                        self.record(tick, at, SimEventKind::ResampleRequested { zone, msg: message.id });
                        self.send(tick, at, message.src, Payload::ResampleRequest { zone });
                    }
                    Err(e) => self.record(tick, at, diagnostic(e.to_string())),
                }
            }
            Payload::Forward { zone, reading, .. } => {
                if !ok {
                    self.record(tick, at, diagnostic("discarded corrupted forward".into()));
                    return Ok(());
                }
                match self.predictor(at, zone).step(&reading) {
                    Ok(output) => {
                        if message.corrupted {
                            self.counters.predictions_from_corrupted += 1;
                        }
                        self.office_prediction(tick, at, zone, output);
                    }
                    Err(e) => self.record(tick, at, diagnostic(e.to_string())),
                }
            }
            Payload::ResampleRequest { zone } => {
                if !ok {
                    self.record(tick, at, diagnostic("discarded corrupted resample request".into()));
                    return Ok(());
                }
                let delay = self.scenario.sensing.resample_delay_s;
                self.wake(tick, zone, tick + delay);
            }
            Payload::Heartbeat { sent_at } => {
                if ok {
                    let last = self.heartbeats.entry(message.src).or_insert(sent_at);
                    *last = last.max(sent_at);
                }
            }
            Payload::Trigger { zone, trigger } => {
                if ok && trigger.kind.interrupts() {
                    self.record(
                        tick,
                        at,
                        SimEventKind::Trigger {
                            zone,
                            kind: trigger.kind,
                        },
                    );
                    self.wake(tick, zone, tick);
                }
            }
        }
        Ok(())
    }

    fn after_prediction(&mut self, tick: u64, at: NodeId, zone: u32, reading: Reading, output: PredictionOutput) {
        self.record(
            tick,
            at,
            SimEventKind::Predict {
                zone,
                role: Role::Computational,
                output: output.clone(),
            },
        );
        self.predictions.entry(at).or_default().push(ZonePrediction {
            zone,
            output: output.clone(),
        });
        let mut interval = output.next_interval;
        if output.threshold_crossed {
            self.record(
                tick,
                at,
                SimEventKind::Trigger {
                    zone,
                    kind: TriggerKind::Event,
                },
            );
            interval = interval.min(self.predictor(at, zone).time_set().shortest());
        }
        let z = self.zones.get_mut(&zone).expect("known zone");
        z.fallback_ticks = to_ticks(interval).max(1);
        let next = (to_ticks(reading.t) + to_ticks(interval)).max(tick + 1);
        self.wake(tick, zone, next);
        let office = self.net.office();
        self.send(tick, at, office, Payload::Forward { zone, reading, output });
    }

    fn office_prediction(&mut self, tick: u64, at: NodeId, zone: u32, output: PredictionOutput) {
        self.record(
            tick,
            at,
            SimEventKind::Predict {
                zone,
                role: Role::Office,
                output: output.clone(),
            },
        );
        let z = self.zones.get_mut(&zone).expect("known zone");
        let raise = output.alarm && !z.alarm_active;
        z.alarm_active = output.alarm;
        if raise {
            self.alarms.push(AlarmRecord {
                t_min: to_min(tick),
                zone,
                node: at,
                predicted_flood_in: output.predicted_flood_in,
            });
            self.record(
                tick,
                at,
                SimEventKind::Alarm {
                    zone,
                    predicted_flood_in: output.predicted_flood_in,
                },
            );
        }
        self.predictions.entry(at).or_default().push(ZonePrediction { zone, output });
    }

    fn check_failures(&mut self, tick: u64, office: NodeId) {
        let now = to_min(tick);
        for suspect in detect_failures(self.net, &self.heartbeats, now) {
            if !self.suspected.insert(suspect) {
                continue;
            }
            let takeover = self.net.takeover_peer(suspect, &self.suspected);
            if let Some(peer) = takeover {
                for z in self.zones.values_mut().filter(|z| z.owner == suspect) {
                    z.owner = peer;
                }
            }
            self.suspicions.push(Suspicion {
                t_min: now,
                node: suspect,
                takeover,
            });
            self.record(tick, office, SimEventKind::Suspected { suspect, takeover });
        }
        let period = to_ticks(self.net.heartbeat().period_min).max(1);
        self.schedule(tick + period, office, Action::FailureCheck);
    }

    fn watch(&mut self, tick: u64, node: NodeId) -> Result<(), SimError> {
        let period = self.scenario.sensing.watch_period_s;
        let zone = self.nodes[&node].zone;
        if self.zones.contains_key(&zone) {
            let now = self.environment(zone, tick)?.level;
            let before = self.environment(zone, tick - period)?.level;
            if (now - before).abs() >= self.scenario.sensing.watch_jump_m {
                let owner = self.zones[&zone].owner;
                let trigger = Trigger {
                    kind: TriggerKind::Event,
                    issued_at: to_min(tick),
                    origin: node,
                };
                self.send(tick, node, owner, Payload::Trigger { zone, trigger });
            }
        }
        self.schedule(tick + period, node, Action::Watch);
        Ok(())
    }

    fn scripted(&mut self, tick: u64, zone: u32, kind: ScriptedTriggerKind) {
        let owner = self.zones[&zone].owner;
        match kind {
            ScriptedTriggerKind::Event => {
                if self.alive(owner, tick) {
                    self.record(
                        tick,
                        owner,
                        SimEventKind::Trigger {
                            zone,
                            kind: TriggerKind::Event,
                        },
                    );
                    self.wake(tick, zone, tick);
                }
            }
            ScriptedTriggerKind::Query => {
                let office = self.net.office();
                let trigger = Trigger {
                    kind: TriggerKind::Query,
                    issued_at: to_min(tick),
                    origin: office,
                };
                self.send(tick, office, owner, Payload::Trigger { zone, trigger });
            }
        }
    }
}

#[cfg(test)]
mod tests;
