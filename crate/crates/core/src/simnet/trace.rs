//! Simulation output and its line-delimited export.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

use super::power::EnergyLedger;
use crate::predictor::PredictionOutput;
use crate::scheduler::TriggerKind;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Computational,
    Office,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEventKind {
    Sample {
        zone: u32,
        level: f64,
        rainfall: f64,
        discharge: f64,
    },
    Send {
        msg: u64,
        dst: NodeId,
        payload: &'static str,
    },
    Deliver {
        msg: u64,
        src: NodeId,
        payload: &'static str,
        checksum_ok: bool,
    },
    Drop {
        msg: u64,
        reason: &'static str,
    },
    Predict {
        zone: u32,
        role: Role,
        output: PredictionOutput,
    },
    ResampleRequested {
        zone: u32,
        msg: u64,
    },
    Trigger {
        zone: u32,
        kind: TriggerKind,
    },
    Wake {
        zone: u32,
        at_min: f64,
    },
    Alarm {
        zone: u32,
        predicted_flood_in: Option<f64>,
    },
    Failed,
    Suspected {
        suspect: NodeId,
        takeover: Option<NodeId>,
    },
    Diagnostic {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEvent {
    pub tick: u64,
    pub t_min: f64,
    pub node: NodeId,
    pub seq: u64,
    #[serde(flatten)]
    pub kind: SimEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZonePrediction {
    pub zone: u32,
    pub output: PredictionOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlarmRecord {
    pub t_min: f64,
    pub zone: u32,
    pub node: NodeId,
    pub predicted_flood_in: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MessageCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    /// Deliveries whose checksum failed.
    pub corrupted_deliveries: u64,
    pub corrupted_readings: u64,
    pub resample_requests: u64,
    /// Predictions made from a payload that was corrupted in transit. The
    /// checksum makes this zero; it is counted from ground truth to prove it.
    pub predictions_from_corrupted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suspicion {
    pub t_min: f64,
    pub node: NodeId,
    pub takeover: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub events: Vec<SimEvent>,
    pub energy: BTreeMap<NodeId, EnergyLedger>,
    pub predictions: BTreeMap<NodeId, Vec<ZonePrediction>>,
    pub alarms: Vec<AlarmRecord>,
    pub suspected: Vec<Suspicion>,
    pub counters: MessageCounters,
}

impl SimTrace {
    /// One JSON object per event.
    pub fn write_events<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn events_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_events(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// `node,total_mj,sleep_s,active_s` rows.
    pub fn write_energy_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "node,total_mj,sleep_s,active_s")?;
        for (node, ledger) in &self.energy {
            writeln!(
                out,
                "{},{:.6},{},{}",
                node.0, ledger.total_mj, ledger.sleep_s, ledger.active_s
            )?;
        }
        Ok(())
    }

    pub fn write_alarms_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t_min,zone,node,predicted_flood_in_min")?;
        for a in &self.alarms {
            let eta = a.predicted_flood_in.map_or(String::new(), |v| format!("{v:.6}"));
            writeln!(out, "{:.6},{},{},{}", a.t_min, a.zone, a.node.0, eta)?;
        }
        Ok(())
    }

    pub fn predictions_for(&self, node: NodeId) -> &[ZonePrediction] {
        self.predictions.get(&node).map_or(&[], Vec::as_slice)
    }
}
