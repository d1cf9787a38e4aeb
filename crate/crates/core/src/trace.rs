//! Frame-indexed run record, serialized as JSONL: a header line, one tick
//! record per frame and interleaved event records. Traces are write-once;
//! metrics are recomputed from them bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::behavior::{BehaviorStatus, NodeSnapshot};
use crate::error::{CoreError, Result};
use crate::world::VehicleState;

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub trace_version: u32,
    pub map_id: String,
    pub seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub ego_id: String,
    pub adversaries: Vec<String>,
    pub all_pairs: bool,
}

/// Footprint-to-footprint shortest distance for one vehicle pair at one
/// tick, zero when overlapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairDistance {
    pub a: String,
    pub b: String,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub vehicles: Vec<VehicleState>,
    pub distances: Vec<PairDistance>,
    /// Root behavior status per adversary, in declaration order.
    pub statuses: Vec<(String, BehaviorStatus)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    Collision {
        a: String,
        b: String,
        relative_speed: f64,
    },
    BehaviorStatus {
        vehicle: String,
        snapshot: NodeSnapshot,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub t: f64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Tick(TickRecord),
    Event(EventRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl SimTrace {
    pub fn ticks(&self) -> impl Iterator<Item = &TickRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Tick(t) => Some(t),
            _ => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Event(e) => Some(e),
            _ => None,
        })
    }

    pub fn collisions(&self) -> impl Iterator<Item = &EventRecord> {
        self.events()
            .filter(|e| matches!(e.body, EventBody::Collision { .. }))
    }

    /// True when the ego was party to any collision event.
    pub fn ego_collided(&self) -> bool {
        self.collisions().any(|e| match &e.body {
            EventBody::Collision { a, b, .. } => {
                *a == self.header.ego_id || *b == self.header.ego_id
            }
            _ => false,
        })
    }

    /// The ego-to-adversary distance series for one adversary, one value
    /// per tick in tick order.
    pub fn pair_deltas(&self, adversary: &str) -> Vec<f64> {
        self.ticks()
            .filter_map(|tr| {
                tr.distances
                    .iter()
                    .find(|d| {
                        (d.a == self.header.ego_id && d.b == adversary)
                            || (d.b == self.header.ego_id && d.a == adversary)
                    })
                    .map(|d| d.delta)
            })
            .collect()
    }

    /// The ego's applied acceleration series, one value per tick.
    pub fn ego_accels(&self) -> Vec<f64> {
        self.ticks()
            .filter_map(|tr| {
                tr.vehicles
                    .iter()
                    .find(|v| v.id == self.header.ego_id)
                    .map(|v| v.accel)
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = TraceRecord::Header(self.header.clone());
        out.push_str(&serde_json::to_string(&header).expect("trace records serialize"));
        out.push('\n');
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<SimTrace> {
        let mut header: Option<TraceHeader> = None;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TraceRecord =
                serde_json::from_str(line).map_err(|e| CoreError::MalformedTrace {
                    line: lineno,
                    message: e.to_string(),
                })?;
            match rec {
                TraceRecord::Header(h) => {
                    if header.is_some() {
                        return Err(CoreError::MalformedTrace {
                            line: lineno,
                            message: "duplicate header record".to_string(),
                        });
                    }
                    if h.trace_version != TRACE_VERSION {
                        return Err(CoreError::MalformedTrace {
                            line: lineno,
                            message: format!("unsupported trace_version {}", h.trace_version),
                        });
                    }
                    header = Some(h);
                }
                other => {
                    if header.is_none() {
                        return Err(CoreError::MalformedTrace {
                            line: lineno,
                            message: "first record must be the header".to_string(),
                        });
                    }
                    records.push(other);
                }
            }
        }
        let header = header.ok_or(CoreError::MalformedTrace {
            line: 1,
            message: "empty trace".to_string(),
        })?;
        Ok(SimTrace { header, records })
    }
}
