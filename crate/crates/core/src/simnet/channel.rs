//! Messages and the lossy, corrupting radio channel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::predictor::{PredictionOutput, Reading};
use crate::scheduler::Trigger;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Reading { zone: u32, reading: Reading },
    Forward {
        zone: u32,
        reading: Reading,
        output: PredictionOutput,
    },
    ResampleRequest { zone: u32 },
    Heartbeat { sent_at: f64 },
    Trigger { zone: u32, trigger: Trigger },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Reading { .. } => "reading",
            Payload::Forward { .. } => "forward",
            Payload::ResampleRequest { .. } => "resample_request",
            Payload::Heartbeat { .. } => "heartbeat",
            Payload::Trigger { .. } => "trigger",
        }
    }

    /// FNV-1a over the serialized payload.
    pub fn checksum(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("payloads always serialize");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash
    }

    /// Replace the payload's values with a spike. The checksum field is left
    /// alone so the receiver can tell.
    pub(crate) fn corrupt<R: Rng>(&mut self, rng: &mut R) {
        let spike = 5.0 + 10.0 * rng.random::<f64>();
        match self {
            Payload::Reading { reading, .. } => {
                reading.level += spike;
                reading.rainfall += spike;
            }
            Payload::Forward { reading, .. } => reading.level += spike,
            Payload::ResampleRequest { zone } => *zone = !*zone,
            Payload::Heartbeat { sent_at } => *sent_at += spike * 1e3,
            Payload::Trigger { trigger, .. } => trigger.issued_at += spike,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Message {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: Payload,
    pub checksum: u64,
    /// Minutes.
    pub send_time: f64,
    pub deliver_time: Option<f64>,
    /// Ground truth; receivers only see the checksum.
    pub corrupted: bool,
    pub dropped: bool,
}

impl Message {
    pub fn new(id: u64, src: NodeId, dst: NodeId, payload: Payload, send_time: f64) -> Self {
        let checksum = payload.checksum();
        Self {
            id,
            src,
            dst,
            payload,
            checksum,
            send_time,
            deliver_time: None,
            corrupted: false,
            dropped: false,
        }
    }

    pub fn checksum_ok(&self) -> bool {
        self.payload.checksum() == self.checksum
    }
}

/// Per-hop loss and corruption probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopModel {
    pub loss: f64,
    pub corruption: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum HopOutcome {
    Lost,
    Delivered { corrupted: bool },
}

/// Both draws are always taken so the random stream does not depend on
/// earlier outcomes.
pub(crate) fn draw_hop<R: Rng>(model: HopModel, rng: &mut R) -> HopOutcome {
    let lost = rng.random::<f64>() < model.loss;
    let corrupted = rng.random::<f64>() < model.corruption;
    if lost {
        HopOutcome::Lost
    } else {
        HopOutcome::Delivered { corrupted }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn corruption_breaks_checksum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let payloads = vec![
            Payload::Reading {
                zone: 0,
                reading: Reading::new(1.0, 2.0, 3.0, 4.0),
            },
            Payload::ResampleRequest { zone: 3 },
            Payload::Heartbeat { sent_at: 10.0 },
        ];
        for p in payloads {
            let mut m = Message::new(1, NodeId(1), NodeId(2), p, 0.0);
            assert!(m.checksum_ok());
            m.payload.corrupt(&mut rng);
            assert!(!m.checksum_ok());
        }
    }

    #[test]
    fn degenerate_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let clean = HopModel {
                loss: 0.0,
                corruption: 0.0,
            };
            assert_eq!(draw_hop(clean, &mut rng), HopOutcome::Delivered { corrupted: false });
            let bad = HopModel {
                loss: 0.0,
                corruption: 1.0,
            };
            assert_eq!(draw_hop(bad, &mut rng), HopOutcome::Delivered { corrupted: true });
            let dead = HopModel {
                loss: 1.0,
                corruption: 0.0,
            };
            assert_eq!(draw_hop(dead, &mut rng), HopOutcome::Lost);
        }
    }
}
