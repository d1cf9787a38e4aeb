//! Lane-graph world: map loading and validation, spawn-point search,
//! relative placement resolution, route distances and signalized
//! intersections. Maps are bundled TOML files (see `docs/map_format.md`);
//! three ship with the crate: a straight multi-lane highway, a curved
//! two-lane road and a signalized 4-way crossroad.

use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geom::Vec2;
use crate::rng::substream;
use crate::scenario::{PlacementQuery, Relation, RelativePlacement};

/// Ego spawn window upstream of a conflict zone, metres.
pub const APPROACH_WINDOW: (f64, f64) = (40.0, 80.0);
/// Stop-line margin upstream of the geometric conflict overlap, metres.
const STOP_LINE_MARGIN: f64 = 3.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub id: String,
    pub lanes: Vec<LaneFile>,
    #[serde(default)]
    pub intersections: Vec<IntersectionFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneFile {
    pub id: String,
    pub width: f64,
    pub speed_limit: f64,
    pub centerline: Vec<[f64; 2]>,
    #[serde(default)]
    pub successors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionFile {
    pub id: String,
    pub conflicts: Vec<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalFile {
    pub cycle: f64,
    pub phases: Vec<PhaseFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseFile {
    pub approach: String,
    /// Green window [start, end) within the cycle, seconds.
    pub green: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalColor {
    Red,
    Green,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanePosition {
    pub lane_id: String,
    /// Arc length along the centerline, metres.
    pub s: f64,
    pub lateral_offset: f64,
}

impl LanePosition {
    pub fn on(lane_id: &str, s: f64) -> Self {
        LanePosition {
            lane_id: lane_id.to_string(),
            s,
            lateral_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub id: String,
    pub width: f64,
    pub speed_limit: f64,
    pub points: Vec<Vec2>,
    /// Cumulative arc length at each point; last entry is the lane length.
    pub cum: Vec<f64>,
    pub successors: Vec<String>,
    pub left: Option<String>,
    pub right: Option<String>,
}

impl Lane {
    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => self.points[i],
            Err(i) => {
                let i = i.clamp(1, self.points.len() - 1);
                let seg = self.cum[i] - self.cum[i - 1];
                let t = (s - self.cum[i - 1]) / seg;
                self.points[i - 1].lerp(self.points[i], t)
            }
        }
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let i = match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.clamp(1, self.points.len() - 1),
            Err(i) => i.clamp(1, self.points.len() - 1),
        };
        (self.points[i] - self.points[i - 1]).angle()
    }

    /// Position including lateral offset (positive offset = to the left of
    /// the travel direction).
    pub fn pose_at(&self, s: f64, lateral: f64) -> (Vec2, f64) {
        let p = self.point_at(s);
        let h = self.heading_at(s);
        let left = Vec2::new(h.cos(), h.sin()).perp();
        (p + left * lateral, h)
    }

    /// Arc length of the closest centerline point to `p`.
    pub fn project(&self, p: Vec2) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for i in 1..self.points.len() {
            let a = self.points[i - 1];
            let b = self.points[i];
            let ab = b - a;
            let len2 = ab.dot(ab);
            let t = if len2 < 1e-18 {
                0.0
            } else {
                ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
            };
            let q = a + ab * t;
            let d = p.distance(q);
            if d < best.0 {
                best = (d, self.cum[i - 1] + ab.length() * t);
            }
        }
        best.1
    }

    /// Total absolute heading change over the centerline, radians.
    fn total_turn(&self) -> f64 {
        let mut total = 0.0;
        for i in 2..self.points.len() {
            let h1 = (self.points[i - 1] - self.points[i - 2]).angle();
            let h2 = (self.points[i] - self.points[i - 1]).angle();
            let mut d = h2 - h1;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            total += d.abs();
        }
        total
    }
}

#[derive(Debug, Clone)]
pub struct Intersection {
    pub id: String,
    pub conflicts: Vec<(String, String)>,
    pub signal: Option<SignalFile>,
}

/// Immutable after load; safe to share across parallel scenario runs.
#[derive(Debug, Clone)]
pub struct LaneGraph {
    pub id: String,
    lanes: BTreeMap<String, Lane>,
    pub intersections: Vec<Intersection>,
    /// Per signalized approach: arc length where the lane enters its first
    /// conflict overlap, minus the stop-line margin.
    conflict_entry: BTreeMap<String, f64>,
}

impl LaneGraph {
    pub fn load(text: &str) -> Result<LaneGraph> {
        let file: MapFile = toml::from_str(text).map_err(|e| CoreError::Syntax {
            what: "map file".to_string(),
            message: e.to_string(),
        })?;
        LaneGraph::from_file(file)
    }

    pub fn from_file(file: MapFile) -> Result<LaneGraph> {
        let mut lanes = BTreeMap::new();
        for lf in &file.lanes {
            if lf.centerline.len() < 2 {
                return Err(err(&file.id, format!("lane '{}' needs >= 2 points", lf.id)));
            }
            let points: Vec<Vec2> = lf.centerline.iter().map(|p| Vec2::new(p[0], p[1])).collect();
            let mut cum = vec![0.0];
            for i in 1..points.len() {
                let d = points[i].distance(points[i - 1]);
                if d < 1e-9 {
                    return Err(err(&file.id, format!("lane '{}' has a zero-length segment", lf.id)));
                }
                cum.push(cum[i - 1] + d);
            }
            let lane = Lane {
                id: lf.id.clone(),
                width: lf.width,
                speed_limit: lf.speed_limit,
                points,
                cum,
                successors: lf.successors.clone(),
                left: lf.left.clone(),
                right: lf.right.clone(),
            };
            if lanes.insert(lf.id.clone(), lane).is_some() {
                return Err(err(&file.id, format!("duplicate lane id '{}'", lf.id)));
            }
        }

        // reference resolution
        for lane in lanes.values() {
            for r in lane
                .successors
                .iter()
                .chain(lane.left.iter())
                .chain(lane.right.iter())
            {
                if !lanes.contains_key(r) {
                    return Err(err(
                        &file.id,
                        format!("lane '{}' references unknown lane '{r}'", lane.id),
                    ));
                }
            }
        }

        let intersections: Vec<Intersection> = file
            .intersections
            .iter()
            .map(|i| Intersection {
                id: i.id.clone(),
                conflicts: i
                    .conflicts
                    .iter()
                    .map(|c| (c[0].clone(), c[1].clone()))
                    .collect(),
                signal: i.signal.clone(),
            })
            .collect();

        let mut graph = LaneGraph {
            id: file.id,
            lanes,
            intersections,
            conflict_entry: BTreeMap::new(),
        };
        graph.compute_conflict_entries()?;
        graph.verify_signal_safety()?;
        Ok(graph)
    }

    fn compute_conflict_entries(&mut self) -> Result<()> {
        let mut entries: BTreeMap<String, f64> = BTreeMap::new();
        for inter in &self.intersections {
            for (a, b) in &inter.conflicts {
                let la = self.lane(a)?;
                let lb = self.lane(b)?;
                let reach = (la.width + lb.width) * 0.5;
                let ea = first_overlap_s(la, lb, reach);
                let eb = first_overlap_s(lb, la, reach);
                match (ea, eb) {
                    (Some(ea), Some(eb)) => {
                        for (id, e) in [(a, ea), (b, eb)] {
                            let v = (e - STOP_LINE_MARGIN).max(0.0);
                            entries
                                .entry(id.clone())
                                .and_modify(|cur| *cur = cur.min(v))
                                .or_insert(v);
                        }
                    }
                    _ => {
                        return Err(err(
                            &self.id,
                            format!(
                                "conflict pair ('{a}', '{b}') in intersection '{}' does not geometrically overlap",
                                inter.id
                            ),
                        ))
                    }
                }
            }
        }
        self.conflict_entry = entries;
        Ok(())
    }

    /// Exhaustive sweep over one signal cycle at tick resolution: two
    /// conflicting approaches must never be simultaneously green.
    fn verify_signal_safety(&self) -> Result<()> {
        for inter in &self.intersections {
            let Some(signal) = &inter.signal else { continue };
            for pf in &signal.phases {
                if !self.lanes.contains_key(&pf.approach) {
                    return Err(err(
                        &self.id,
                        format!("signal phase references unknown lane '{}'", pf.approach),
                    ));
                }
            }
            let mut t = 0.0;
            while t < signal.cycle {
                for (a, b) in &inter.conflicts {
                    let ga = phase_color(signal, a, t);
                    let gb = phase_color(signal, b, t);
                    if ga == Some(SignalColor::Green) && gb == Some(SignalColor::Green) {
                        return Err(err(
                            &self.id,
                            format!(
                                "conflicting approaches '{a}' and '{b}' are both green at t={t:.2}"
                            ),
                        ));
                    }
                }
                t += 0.05;
            }
        }
        Ok(())
    }

    pub fn lane(&self, id: &str) -> Result<&Lane> {
        self.lanes
            .get(id)
            .ok_or_else(|| CoreError::Other(format!("unknown lane '{id}' on map '{}'", self.id)))
    }

    pub fn lanes(&self) -> impl Iterator<Item = &Lane> {
        self.lanes.values()
    }

    /// True when the lane appears in any intersection's signal program.
    pub fn is_signalized_approach(&self, lane_id: &str) -> bool {
        self.intersections.iter().any(|i| {
            i.signal
                .as_ref()
                .is_some_and(|s| s.phases.iter().any(|p| p.approach == lane_id))
        })
    }

    /// Arc length at which a signalized approach reaches its stop line.
    pub fn stop_line(&self, lane_id: &str) -> Option<f64> {
        self.conflict_entry.get(lane_id).copied()
    }

    /// Lanes whose signal conflicts with the given approach.
    pub fn conflicting_lanes(&self, lane_id: &str) -> Vec<&str> {
        let mut out = Vec::new();
        for inter in &self.intersections {
            for (a, b) in &inter.conflicts {
                if a == lane_id {
                    out.push(b.as_str());
                } else if b == lane_id {
                    out.push(a.as_str());
                }
            }
        }
        out
    }

    fn lane_matches(&self, lane: &Lane, query: PlacementQuery) -> bool {
        match query {
            PlacementQuery::IntersectionApproach => self.conflict_entry.contains_key(&lane.id),
            PlacementQuery::Curve => lane.total_turn() > 0.3,
            PlacementQuery::StraightLane => {
                lane.total_turn() < 0.05
                    && !self.conflict_entry.contains_key(&lane.id)
                    && lane.length() >= 100.0
            }
        }
    }

    /// Deterministic spawn search. Candidate lanes are ranked by neighbor
    /// count (scenarios with lateral maneuvers need adjacent lanes), ties
    /// broken by id; the position within the window comes from the seed.
    pub fn find_ego_spawn(&self, query: PlacementQuery, seed: u64) -> Result<LanePosition> {
        let mut candidates: Vec<&Lane> = self
            .lanes
            .values()
            .filter(|l| self.lane_matches(l, query))
            .collect();
        if candidates.is_empty() {
            return Err(CoreError::NoSpawnMatch {
                map_id: self.id.clone(),
                query: query.to_string(),
            });
        }
        let nc = |l: &Lane| l.left.is_some() as usize + l.right.is_some() as usize;
        candidates.sort_by(|a, b| nc(b).cmp(&nc(a)).then(a.id.cmp(&b.id)));
        let best_nc = nc(candidates[0]);
        candidates.retain(|l| nc(l) == best_nc);

        let mut rng = substream(seed, "ego-spawn");
        let lane = candidates[rng.gen_range(0..candidates.len())];
        let (lo, hi) = match query {
            PlacementQuery::IntersectionApproach => {
                let entry = self.conflict_entry[&lane.id];
                ((entry - APPROACH_WINDOW.1).max(0.0), (entry - APPROACH_WINDOW.0).max(1.0))
            }
            _ => (0.10 * lane.length(), 0.35 * lane.length()),
        };
        let s = rng.gen_range(lo..hi.max(lo + 1e-6));
        Ok(LanePosition::on(&lane.id, s))
    }

    /// Map an arc length on one lane onto a neighbor lane by fraction, so
    /// parallel lanes of slightly different length stay abreast.
    pub fn map_s(&self, from: &str, to: &str, s: f64) -> Result<f64> {
        let a = self.lane(from)?;
        let b = self.lane(to)?;
        Ok((s / a.length()).clamp(0.0, 1.0) * b.length())
    }

    pub fn resolve_relative_placement(
        &self,
        ego: &LanePosition,
        rel: &RelativePlacement,
        min_gap: f64,
    ) -> Result<LanePosition> {
        let lane = self.lane(&ego.lane_id)?;
        let gap = rel.gap.max(min_gap);
        match rel.relation {
            Relation::Behind | Relation::Ahead => {
                let s = if rel.relation == Relation::Behind {
                    ego.s - gap
                } else {
                    ego.s + gap
                };
                if s < 0.0 || s > lane.length() {
                    return Err(CoreError::UnsatisfiableRelation {
                        relation: rel.relation.to_string(),
                        lane_id: lane.id.clone(),
                    });
                }
                Ok(LanePosition::on(&lane.id, s))
            }
            Relation::Left | Relation::Right => {
                let neighbor = if rel.relation == Relation::Left {
                    lane.left.as_ref()
                } else {
                    lane.right.as_ref()
                };
                let Some(n) = neighbor else {
                    return Err(CoreError::UnsatisfiableRelation {
                        relation: rel.relation.to_string(),
                        lane_id: lane.id.clone(),
                    });
                };
                // Adjacent lane, offset backwards by the requested gap so
                // footprints cannot overlap laterally at spawn.
                let s = (self.map_s(&ego.lane_id, n, ego.s)? - rel.gap).max(0.0);
                Ok(LanePosition::on(n, s))
            }
            Relation::OppositeApproach => {
                let conflicts = self.conflicting_lanes(&ego.lane_id);
                let Some(first) = conflicts.first() else {
                    return Err(CoreError::UnsatisfiableRelation {
                        relation: rel.relation.to_string(),
                        lane_id: lane.id.clone(),
                    });
                };
                let target = *first;
                let entry = self.conflict_entry.get(target).copied().unwrap_or(0.0);
                let back = gap.clamp(APPROACH_WINDOW.0, APPROACH_WINDOW.1);
                Ok(LanePosition::on(target, (entry - back).max(0.0)))
            }
        }
    }

    /// Shortest drivable arc-length distance a -> b following successors
    /// and neighbor lanes. `None` when b is unreachable from a.
    pub fn distance_along_route(&self, a: &LanePosition, b: &LanePosition) -> Option<f64> {
        if a.lane_id == b.lane_id && b.s >= a.s {
            return Some(b.s - a.s);
        }
        // Dijkstra over (lane, s) states; neighbor moves are free and keep
        // the fractional progress, successor moves consume the remainder.
        #[derive(PartialEq)]
        struct State {
            cost: f64,
            lane: String,
            s: f64,
        }
        impl Eq for State {}
        impl Ord for State {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                other.cost.partial_cmp(&self.cost).unwrap()
            }
        }
        impl PartialOrd for State {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }

        const MAX_SEARCH: f64 = 5000.0;
        let mut best: BTreeMap<String, f64> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        heap.push(State {
            cost: 0.0,
            lane: a.lane_id.clone(),
            s: a.s,
        });
        while let Some(State { cost, lane, s }) = heap.pop() {
            if cost > MAX_SEARCH {
                return None;
            }
            if lane == b.lane_id && s <= b.s {
                return Some(cost + (b.s - s));
            }
            if let Some(&prev) = best.get(&lane) {
                if prev <= cost {
                    continue;
                }
            }
            best.insert(lane.clone(), cost);
            let l = self.lane(&lane).ok()?;
            for succ in &l.successors {
                heap.push(State {
                    cost: cost + (l.length() - s),
                    lane: succ.clone(),
                    s: 0.0,
                });
            }
            for n in l.left.iter().chain(l.right.iter()) {
                let ns = self.map_s(&lane, n, s).ok()?;
                heap.push(State {
                    cost,
                    lane: n.clone(),
                    s: ns,
                });
            }
        }
        None
    }

    pub fn signal_color_at(&self, lane_id: &str, t: f64) -> Result<SignalColor> {
        for inter in &self.intersections {
            if let Some(signal) = &inter.signal {
                if let Some(color) = phase_color(signal, lane_id, t) {
                    return Ok(color);
                }
            }
        }
        Err(CoreError::NotSignalized(lane_id.to_string()))
    }
}

fn phase_color(signal: &SignalFile, lane_id: &str, t: f64) -> Option<SignalColor> {
    let phase = signal.phases.iter().find(|p| p.approach == lane_id)?;
    let tm = t.rem_euclid(signal.cycle);
    if tm >= phase.green[0] && tm < phase.green[1] {
        Some(SignalColor::Green)
    } else {
        Some(SignalColor::Red)
    }
}

/// First arc length along `lane` where its centerline comes within `reach`
/// of `other`'s centerline.
fn first_overlap_s(lane: &Lane, other: &Lane, reach: f64) -> Option<f64> {
    let step = 0.5;
    let mut s = 0.0;
    while s <= lane.length() {
        let p = lane.point_at(s);
        let q = other.point_at(other.project(p));
        if p.distance(q) < reach {
            return Some(s);
        }
        s += step;
    }
    None
}

fn err(map_id: &str, message: String) -> CoreError {
    CoreError::Syntax {
        what: format!("map '{map_id}'"),
        message,
    }
}

/// The bundled map set, loaded once and shared.
pub struct MapLibrary {
    maps: BTreeMap<String, Arc<LaneGraph>>,
}

pub const HIGHWAY_TOML: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/maps/highway.toml"));
pub const CURVE_TOML: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/maps/curve.toml"));
pub const CROSSROAD_TOML: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/maps/crossroad.toml"));

impl MapLibrary {
    pub fn builtin() -> MapLibrary {
        let mut maps = BTreeMap::new();
        for text in [HIGHWAY_TOML, CURVE_TOML, CROSSROAD_TOML] {
            let graph = LaneGraph::load(text).expect("bundled maps are valid");
            maps.insert(graph.id.clone(), Arc::new(graph));
        }
        MapLibrary { maps }
    }

    pub fn get(&self, id: &str) -> Result<Arc<LaneGraph>> {
        self.maps
            .get(id)
            .cloned()
            .ok_or_else(|| CoreError::UnknownMap(id.to_string()))
    }

    pub fn ids(&self) -> Vec<&str> {
        self.maps.keys().map(|s| s.as_str()).collect()
    }

    pub fn insert(&mut self, graph: LaneGraph) {
        self.maps.insert(graph.id.clone(), Arc::new(graph));
    }
}
