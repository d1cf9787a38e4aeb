//! Per-tick world state shared by the behavior engine, the driving agents
//! and the simulator, plus the spatial queries agents rely on.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geom::{Obb, Vec2};
use crate::map::{LaneGraph, LanePosition};

/// Default vehicle actuation limits, scaled by the friction multiplier.
pub const MAX_ACCEL: f64 = 3.0;
pub const MAX_DECEL: f64 = 8.0;

/// Fixed lane-change duration, seconds.
pub const LANE_CHANGE_DURATION: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneChangeCmd {
    Keep,
    BeginLeft,
    BeginRight,
}

/// What an agent asks of its vehicle for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTarget {
    pub accel: f64,
    pub lane_change: LaneChangeCmd,
}

impl ControlTarget {
    pub fn accel(a: f64) -> Self {
        ControlTarget {
            accel: a,
            lane_change: LaneChangeCmd::Keep,
        }
    }
}

/// An in-progress lateral interpolation between two lane centerlines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeState {
    pub from: String,
    pub to: String,
    /// Fraction completed, [0, 1].
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: String,
    pub pos: Vec2,
    pub heading: f64,
    pub lane_id: String,
    pub s: f64,
    pub lateral_offset: f64,
    pub speed: f64,
    /// Acceleration applied during the last integration step.
    pub accel: f64,
    pub length: f64,
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_change: Option<LaneChangeState>,
    /// Distance travelled since spawn, metres.
    pub odometer: f64,
}

impl VehicleState {
    pub fn footprint(&self) -> Obb {
        Obb::new(self.pos, self.heading, self.length, self.width)
    }

    pub fn lane_position(&self) -> LanePosition {
        LanePosition {
            lane_id: self.lane_id.clone(),
            s: self.s,
            lateral_offset: self.lateral_offset,
        }
    }

    /// Lanes this vehicle currently occupies for corridor and collision
    /// queries: both lanes while a change is in progress.
    pub fn occupied_lanes(&self) -> Vec<&str> {
        match &self.lane_change {
            Some(lc) => vec![lc.from.as_str(), lc.to.as_str()],
            None => vec![self.lane_id.as_str()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub t: f64,
    pub tick: u64,
    pub dt: f64,
    pub friction: f64,
    pub vehicles: Vec<VehicleState>,
    pub map: Arc<LaneGraph>,
}

impl WorldState {
    pub fn vehicle(&self, id: &str) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn max_accel(&self) -> f64 {
        MAX_ACCEL * self.friction
    }

    pub fn max_decel(&self) -> f64 {
        MAX_DECEL * self.friction
    }

    /// Signed route gap between vehicle centers: positive when `to` lies
    /// ahead of `from` along drivable routes, negative when behind, `None`
    /// when unconnected.
    pub fn signed_gap(&self, from: &str, to: &str) -> Option<f64> {
        let a = self.vehicle(from)?;
        let b = self.vehicle(to)?;
        let pa = a.lane_position();
        let pb = b.lane_position();
        if let Some(d) = self.map.distance_along_route(&pa, &pb) {
            return Some(d);
        }
        self.map.distance_along_route(&pb, &pa).map(|d| -d)
    }

    /// Nearest vehicle ahead in the own travel corridor (own lane plus the
    /// successor chain), including vehicles mid-change into those lanes.
    /// Returns (leader id, center-to-center distance).
    pub fn corridor_leader(&self, self_id: &str, horizon: f64) -> Option<(&VehicleState, f64)> {
        let me = self.vehicle(self_id)?;
        let mut corridor: Vec<(String, f64)> = Vec::new(); // (lane, s offset of lane start)
        let mut lane_id = me.lane_id.clone();
        let mut offset = -me.s;
        loop {
            corridor.push((lane_id.clone(), offset));
            let lane = self.map.lane(&lane_id).ok()?;
            offset += lane.length();
            if offset > horizon {
                break;
            }
            match lane.successors.first() {
                Some(next) => lane_id = next.clone(),
                None => break,
            }
        }

        let mut best: Option<(&VehicleState, f64)> = None;
        for v in &self.vehicles {
            if v.id == self_id {
                continue;
            }
            for occ in v.occupied_lanes() {
                if let Some((_, off)) = corridor.iter().find(|(l, _)| l == occ) {
                    let s_on = if occ == v.lane_id {
                        v.s
                    } else {
                        match self.map.map_s(&v.lane_id, occ, v.s) {
                            Ok(s) => s,
                            Err(_) => continue,
                        }
                    };
                    let d = off + s_on;
                    if d > 0.1 && d <= horizon && best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((v, d));
                    }
                }
            }
        }
        best
    }

    /// Shortest footprint distance and closing rate towards another
    /// vehicle, used by the defensive override.
    pub fn approach_state(&self, self_id: &str, other_id: &str) -> Option<(f64, f64)> {
        let a = self.vehicle(self_id)?;
        let b = self.vehicle(other_id)?;
        let delta = crate::geom::obb_distance(&a.footprint(), &b.footprint());
        let r = (b.pos - a.pos).normalized();
        let va = Vec2::new(a.heading.cos(), a.heading.sin()) * a.speed;
        let vb = Vec2::new(b.heading.cos(), b.heading.sin()) * b.speed;
        let closing = (va - vb).dot(r);
        Some((delta, closing))
    }
}
