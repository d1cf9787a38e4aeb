//! Deterministic fixed-step simulation: spawns the world from a validated
//! scenario, ticks behavior trees, integrates kinematics, advances
//! signals, detects collisions and records the full trace.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agents;
use crate::behavior::{
    build_tree, snapshot, AtomicRuntime, BehaviorRegistry, NodeSnapshot, TreeNode,
};
use crate::error::{CoreError, Result};
use crate::geom::{obb_distance, Vec2};
use crate::map::{LaneGraph, MapLibrary};
use crate::rng::{substream, substream_indexed};
use crate::scenario::{Relation, ScenarioSpec, EGO_ID};
use crate::trace::{
    EventBody, EventRecord, PairDistance, SimTrace, TickRecord, TraceHeader, TraceRecord,
    TRACE_VERSION,
};
use crate::world::{
    ControlTarget, LaneChangeCmd, LaneChangeState, VehicleState, WorldState,
    LANE_CHANGE_DURATION,
};

/// Engine step, seconds (20 Hz).
pub const DT: f64 = 0.05;

pub const DEFAULT_DURATION: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub duration: f64,
    /// Record distances for every vehicle pair instead of only
    /// ego x adversary.
    pub all_pairs: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            duration: DEFAULT_DURATION,
            all_pairs: false,
        }
    }
}

struct Roamer {
    rng: ChaCha8Rng,
    target_speed: f64,
}

enum Role {
    Ego,
    Adversary(usize),
    Roamer(usize),
}

pub fn run_scenario(
    spec: &ScenarioSpec,
    library: &MapLibrary,
    registry: &BehaviorRegistry,
    opts: &RunOptions,
) -> Result<SimTrace> {
    if !(opts.duration > 0.0) {
        return Err(CoreError::Other("duration must be positive".to_string()));
    }
    let map = library.get(&spec.environment.map_id)?;

    // kind-level validation of every adversary tree
    let mut known: Vec<&str> = vec![EGO_ID];
    known.extend(spec.adversaries.iter().map(|a| a.id.as_str()));
    let mut violations = Vec::new();
    for adv in &spec.adversaries {
        violations.extend(registry.validate_tree(
            &adv.behavior,
            &known,
            &format!("adversaries.{}.behavior", adv.id),
        ));
    }
    if !violations.is_empty() {
        return Err(CoreError::Validation { violations });
    }

    let friction = spec.environment.weather.friction_multiplier;
    let mut vehicles = Vec::new();

    // ego
    let ego_pos = map.find_ego_spawn(spec.ego.placement, spec.seed)?;
    let ego_lane = map.lane(&ego_pos.lane_id)?;
    let ego_speed = spec.ego.target_speed.min(ego_lane.speed_limit * 1.2);
    vehicles.push(make_vehicle(&map, EGO_ID, &ego_pos.lane_id, ego_pos.s, ego_speed, (4.5, 1.9))?);

    // adversaries
    for adv in &spec.adversaries {
        let (length, width) = adv.vehicle_class.footprint();
        let min_gap = (vehicles[0].length + length) * 0.5 + 1.0;
        let pos = map.resolve_relative_placement(&ego_pos, &adv.placement, min_gap)?;
        let lane = map.lane(&pos.lane_id)?;
        let speed = if adv.placement.relation == Relation::OppositeApproach {
            lane.speed_limit
        } else {
            ego_speed.min(lane.speed_limit * 1.2)
        };
        vehicles.push(make_vehicle(&map, &adv.id, &pos.lane_id, pos.s, speed, (length, width))?);
    }

    // declared placements must not interpenetrate
    for i in 0..vehicles.len() {
        for j in (i + 1)..vehicles.len() {
            if obb_distance(&vehicles[i].footprint(), &vehicles[j].footprint()) < 0.3 {
                return Err(CoreError::SpawnInfeasible(format!(
                    "'{}' and '{}' overlap at spawn",
                    vehicles[i].id, vehicles[j].id
                )));
            }
        }
    }

    // background roamers
    let mut roamers = Vec::new();
    let mut spawn_rng = substream(spec.seed, "background");
    let ego_anchor = vehicles[0].pos;
    for i in 0..spec.background.count {
        let id = format!("bg_{i}");
        let spot = sample_spot(
            &map,
            &mut spawn_rng,
            ego_anchor,
            spec.background.spawn_radius,
            &vehicles,
        )
        .ok_or_else(|| {
            CoreError::SpawnInfeasible(format!(
                "no free spot for background vehicle {i} within {} m",
                spec.background.spawn_radius
            ))
        })?;
        let lane = map.lane(&spot.0)?;
        let target_speed = lane.speed_limit * (0.6 + 0.3 * spawn_rng.gen::<f64>());
        vehicles.push(make_vehicle(&map, &id, &spot.0, spot.1, target_speed * 0.8, (4.5, 1.9))?);
        roamers.push(Roamer {
            rng: substream_indexed(spec.seed, "roamer", i as u64),
            target_speed,
        });
    }

    // behavior trees, one per adversary
    let mut trees: Vec<TreeNode<AtomicRuntime>> = spec
        .adversaries
        .iter()
        .map(|a| build_tree(registry, &a.behavior))
        .collect::<Result<Vec<_>>>()?;
    let mut last_snapshots: Vec<Option<NodeSnapshot>> = vec![None; trees.len()];

    let roles: Vec<Role> = vehicles
        .iter()
        .enumerate()
        .map(|(i, _)| {
            if i == 0 {
                Role::Ego
            } else if i <= spec.adversaries.len() {
                Role::Adversary(i - 1)
            } else {
                Role::Roamer(i - 1 - spec.adversaries.len())
            }
        })
        .collect();

    let ego_params = agents::EgoParams {
        target_speed: spec.ego.target_speed,
        ..agents::EgoParams::default()
    };
    let ego_cautious = match spec.ego.controller.as_str() {
        "defensive" => false,
        "cautious" => true,
        other => {
            return Err(CoreError::Validation {
                violations: vec![crate::error::Violation::new(
                    "ego.controller",
                    format!("unknown controller '{other}'"),
                )],
            })
        }
    };

    let mut world = WorldState {
        t: 0.0,
        tick: 0,
        dt: DT,
        friction,
        vehicles,
        map: Arc::clone(&map),
    };

    let n_ticks = (opts.duration / DT).round().max(1.0) as u64;
    let mut records: Vec<TraceRecord> = Vec::with_capacity(n_ticks as usize);
    let mut collided: BTreeSet<(String, String)> = BTreeSet::new();

    for k in 0..n_ticks {
        // (1) behavior engine and controller ticks, all from the pre-step state
        let mut controls: Vec<ControlTarget> = Vec::with_capacity(world.vehicles.len());
        for (i, role) in roles.iter().enumerate() {
            let id = world.vehicles[i].id.clone();
            let ctrl = match role {
                Role::Ego => {
                    if ego_cautious {
                        agents::cautious_planner(
                            &world,
                            &id,
                            agents::CautiousParams {
                                target_speed: Some(spec.ego.target_speed),
                            },
                        )
                    } else {
                        agents::ego_defensive(&world, &id, ego_params)
                    }
                }
                Role::Adversary(a) => {
                    let mut emitted = None;
                    if !trees[*a].status.is_terminal() {
                        trees[*a].tick_with(&mut |leaf: &mut AtomicRuntime| {
                            leaf.tick(&world, &id, &mut emitted)
                        });
                    }
                    emitted.unwrap_or_else(|| agents::follow_route(&world, &id, None, 0.3))
                }
                Role::Roamer(r) => agents::background_roamer(&world, &id, roamers[*r].target_speed),
            };
            controls.push(ctrl);
        }

        // (2) kinematic integration, (3) signals are a pure function of t
        let tick = k + 1;
        let t = tick as f64 * DT;
        for (i, role) in roles.iter().enumerate() {
            let roamer = match role {
                Role::Roamer(r) => Some(*r),
                _ => None,
            };
            integrate_vehicle(&map, &mut world, i, &controls[i], roamer.map(|r| &mut roamers[r]))?;
        }
        // roamer respawn at dead ends, after everyone moved
        for (i, role) in roles.iter().enumerate() {
            if let Role::Roamer(r) = role {
                maybe_respawn(&map, &mut world, i, &mut roamers[*r], ego_anchor, spec.background.spawn_radius)?;
            }
        }
        world.tick = tick;
        world.t = t;

        // (4) collision detection, first overlap per pair
        let mut events: Vec<EventRecord> = Vec::new();
        let mut ego_crashed = false;
        for i in 0..world.vehicles.len() {
            for j in (i + 1)..world.vehicles.len() {
                let (a, b) = (&world.vehicles[i], &world.vehicles[j]);
                let key = if a.id < b.id {
                    (a.id.clone(), b.id.clone())
                } else {
                    (b.id.clone(), a.id.clone())
                };
                if collided.contains(&key) {
                    continue;
                }
                if a.footprint().overlaps(&b.footprint()) {
                    let va = Vec2::new(a.heading.cos(), a.heading.sin()) * a.speed;
                    let vb = Vec2::new(b.heading.cos(), b.heading.sin()) * b.speed;
                    events.push(EventRecord {
                        tick,
                        t,
                        body: EventBody::Collision {
                            a: a.id.clone(),
                            b: b.id.clone(),
                            relative_speed: (va - vb).length(),
                        },
                    });
                    if a.id == EGO_ID || b.id == EGO_ID {
                        ego_crashed = true;
                    }
                    collided.insert(key);
                }
            }
        }

        // behavior topology snapshots on every status change
        for (a, tree) in trees.iter().enumerate() {
            let snap = snapshot(tree);
            if last_snapshots[a].as_ref() != Some(&snap) {
                events.push(EventRecord {
                    tick,
                    t,
                    body: EventBody::BehaviorStatus {
                        vehicle: spec.adversaries[a].id.clone(),
                        snapshot: snap.clone(),
                    },
                });
                last_snapshots[a] = Some(snap);
            }
        }

        // (5) trace append
        let ego = &world.vehicles[0];
        let mut distances = Vec::new();
        if opts.all_pairs {
            for i in 0..world.vehicles.len() {
                for j in (i + 1)..world.vehicles.len() {
                    distances.push(PairDistance {
                        a: world.vehicles[i].id.clone(),
                        b: world.vehicles[j].id.clone(),
                        delta: obb_distance(
                            &world.vehicles[i].footprint(),
                            &world.vehicles[j].footprint(),
                        ),
                    });
                }
            }
        } else {
            for adv in &spec.adversaries {
                if let Some(v) = world.vehicle(&adv.id) {
                    distances.push(PairDistance {
                        a: EGO_ID.to_string(),
                        b: adv.id.clone(),
                        delta: obb_distance(&ego.footprint(), &v.footprint()),
                    });
                }
            }
        }
        records.push(TraceRecord::Tick(TickRecord {
            tick,
            t,
            vehicles: world.vehicles.clone(),
            distances,
            statuses: spec
                .adversaries
                .iter()
                .zip(trees.iter())
                .map(|(a, tr)| (a.id.clone(), tr.status))
                .collect(),
        }));
        records.extend(events.into_iter().map(TraceRecord::Event));

        // a crashed ego ends the run; the tick that recorded the first
        // ego collision is the last one in the trace
        if ego_crashed {
            break;
        }
    }

    Ok(SimTrace {
        header: TraceHeader {
            trace_version: TRACE_VERSION,
            map_id: spec.environment.map_id.clone(),
            seed: spec.seed,
            dt: DT,
            duration: opts.duration,
            ego_id: EGO_ID.to_string(),
            adversaries: spec.adversaries.iter().map(|a| a.id.clone()).collect(),
            all_pairs: opts.all_pairs,
        },
        records,
    })
}

fn make_vehicle(
    map: &LaneGraph,
    id: &str,
    lane_id: &str,
    s: f64,
    speed: f64,
    footprint: (f64, f64),
) -> Result<VehicleState> {
    let lane = map.lane(lane_id)?;
    let (pos, heading) = lane.pose_at(s, 0.0);
    Ok(VehicleState {
        id: id.to_string(),
        pos,
        heading,
        lane_id: lane_id.to_string(),
        s,
        lateral_offset: 0.0,
        speed,
        accel: 0.0,
        length: footprint.0,
        width: footprint.1,
        lane_change: None,
        odometer: 0.0,
    })
}

/// Random free spot near the ego for a background vehicle. Rejection
/// sampling; `None` after the attempt budget.
fn sample_spot(
    map: &LaneGraph,
    rng: &mut ChaCha8Rng,
    anchor: Vec2,
    radius: f64,
    vehicles: &[VehicleState],
) -> Option<(String, f64)> {
    let lanes: Vec<_> = map.lanes().collect();
    for _ in 0..400 {
        let lane = lanes[rng.gen_range(0..lanes.len())];
        let len = lane.length();
        if len < 60.0 {
            continue;
        }
        let s = rng.gen_range(5.0..len - 40.0);
        let (p, _) = lane.pose_at(s, 0.0);
        if (p - anchor).length() > radius {
            continue;
        }
        let clear = vehicles.iter().all(|v| {
            if v.occupied_lanes().contains(&lane.id.as_str()) && (v.s - s).abs() < 20.0 {
                return false;
            }
            (v.pos - p).length() > 8.0
        });
        if clear {
            return Some((lane.id.clone(), s));
        }
    }
    None
}

fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

fn integrate_vehicle(
    map: &LaneGraph,
    world: &mut WorldState,
    index: usize,
    ctrl: &ControlTarget,
    mut roamer: Option<&mut Roamer>,
) -> Result<()> {
    let (max_a, max_d) = (world.max_accel(), world.max_decel());
    let dt = world.dt;
    let v = &mut world.vehicles[index];

    let a = ctrl.accel.clamp(-max_d, max_a);
    v.accel = a;
    v.speed = (v.speed + a * dt).max(0.0);
    let ds = v.speed * dt;
    v.odometer += ds;

    // lane-change initiation before advancing, so the step lands on the
    // target lane's parametrization
    if v.lane_change.is_none() && ctrl.lane_change != LaneChangeCmd::Keep {
        let lane = map.lane(&v.lane_id)?;
        let target = match ctrl.lane_change {
            LaneChangeCmd::BeginLeft => lane.left.clone(),
            LaneChangeCmd::BeginRight => lane.right.clone(),
            LaneChangeCmd::Keep => None,
        };
        if let Some(target) = target {
            let s_to = map.map_s(&v.lane_id, &target, v.s)?;
            v.lane_change = Some(LaneChangeState {
                from: v.lane_id.clone(),
                to: target.clone(),
                progress: 0.0,
            });
            v.lane_id = target;
            v.s = s_to;
        }
    }

    v.s += ds;
    if let Some(lc) = &mut v.lane_change {
        lc.progress += dt / LANE_CHANGE_DURATION;
        if lc.progress >= 1.0 {
            v.lane_change = None;
        }
    }

    // lane-end transitions
    loop {
        let lane = map.lane(&v.lane_id)?;
        let len = lane.length();
        if v.s <= len {
            break;
        }
        let next = match &mut roamer {
            Some(r) if !lane.successors.is_empty() => {
                Some(lane.successors[r.rng.gen_range(0..lane.successors.len())].clone())
            }
            _ => lane.successors.first().cloned(),
        };
        match next {
            Some(next) => {
                v.s -= len;
                v.lane_id = next;
                v.lane_change = None;
            }
            None => {
                v.s = len;
                v.speed = 0.0;
                break;
            }
        }
    }

    set_pose(map, v)?;
    Ok(())
}

fn set_pose(map: &LaneGraph, v: &mut VehicleState) -> Result<()> {
    match &v.lane_change {
        None => {
            let lane = map.lane(&v.lane_id)?;
            let (p, h) = lane.pose_at(v.s, v.lateral_offset);
            v.pos = p;
            v.heading = h;
        }
        Some(lc) => {
            let from = map.lane(&lc.from)?;
            let to = map.lane(&lc.to)?;
            let s_from = map.map_s(&lc.to, &lc.from, v.s)?;
            let (p0, h0) = from.pose_at(s_from, 0.0);
            let (p1, h1) = to.pose_at(v.s, 0.0);
            let u = lc.progress.clamp(0.0, 1.0);
            v.pos = p0.lerp(p1, u);
            v.heading = h0 + wrap_angle(h1 - h0) * u;
        }
    }
    Ok(())
}

/// Teleport a roamer whose route dead-ended back to a free spot; holds in
/// place (retrying next tick) when nothing is free.
fn maybe_respawn(
    map: &LaneGraph,
    world: &mut WorldState,
    index: usize,
    roamer: &mut Roamer,
    anchor: Vec2,
    radius: f64,
) -> Result<()> {
    let (lane_id, s) = {
        let v = &world.vehicles[index];
        (v.lane_id.clone(), v.s)
    };
    let lane = map.lane(&lane_id)?;
    if !lane.successors.is_empty() || lane.length() - s > 30.0 {
        return Ok(());
    }
    let others: Vec<VehicleState> = world
        .vehicles
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != index)
        .map(|(_, v)| v.clone())
        .collect();
    if let Some((new_lane, new_s)) = sample_spot(map, &mut roamer.rng, anchor, radius, &others) {
        let v = &mut world.vehicles[index];
        v.lane_id = new_lane;
        v.s = new_s;
        v.speed = roamer.target_speed * 0.8;
        v.accel = 0.0;
        v.lane_change = None;
        set_pose(map, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        BackgroundSpec, BehaviorNodeSpec, ConfigMap, ConfigValue, DensityProfile,
        EgoSpec, EnvironmentSpec, IntentSpec, PlacementQuery, RelativePlacement,
        ScenarioSpec, VehicleClass, WeatherConfig, CriticalityBand, AdversarySpec,
        SCHEMA_VERSION,
    };

    fn empty_spec() -> ScenarioSpec {
        ScenarioSpec {
            schema_version: SCHEMA_VERSION,
            seed: 11,
            adversaries: vec![],
            environment: EnvironmentSpec {
                map_id: "highway".to_string(),
                weather: WeatherConfig::default(),
            },
            ego: EgoSpec {
                placement: PlacementQuery::StraightLane,
                target_speed: 20.0,
                controller: "defensive".to_string(),
            },
            background: BackgroundSpec {
                count: 0,
                spawn_radius: 120.0,
                density_profile: DensityProfile::None,
            },
            intent: IntentSpec {
                criticality_band: CriticalityBand::Safe,
                narrative: "empty road".to_string(),
            },
        }
    }

    fn run(spec: &ScenarioSpec, duration: f64) -> SimTrace {
        run_scenario(
            spec,
            &MapLibrary::builtin(),
            &BehaviorRegistry::builtin(),
            &RunOptions {
                duration,
                all_pairs: false,
            },
        )
        .unwrap()
    }

    #[test]
    fn empty_scenario_produces_600_clean_records() {
        let trace = run(&empty_spec(), 30.0);
        assert_eq!(trace.ticks().count(), 600);
        assert_eq!(trace.collisions().count(), 0);
        let last = trace.ticks().last().unwrap();
        assert!((last.vehicles[0].speed - 20.0).abs() < 0.5);
        assert_eq!(last.t, 600.0 * DT);
    }

    #[test]
    fn identical_specs_yield_byte_identical_traces() {
        let spec = {
            let mut s = empty_spec();
            s.background.count = 6;
            s.background.density_profile = DensityProfile::Sparse;
            s
        };
        let a = run(&spec, 15.0).to_jsonl();
        let b = run(&spec, 15.0).to_jsonl();
        assert_eq!(a, b);
    }

    #[test]
    fn finite_differences_of_s_match_recorded_speed() {
        let trace = run(&empty_spec(), 10.0);
        let ticks: Vec<_> = trace.ticks().collect();
        for w in ticks.windows(2) {
            let (prev, cur) = (&w[0].vehicles[0], &w[1].vehicles[0]);
            if prev.lane_id == cur.lane_id && cur.lane_change.is_none() {
                let fd = (cur.s - prev.s) / DT;
                assert!((fd - cur.speed).abs() < 1e-6, "fd {fd} vs {}", cur.speed);
            }
        }
    }

    #[test]
    fn tailgating_adversary_runs_and_reports_status() {
        let mut spec = empty_spec();
        let mut cfg = ConfigMap::new();
        cfg.insert("target".into(), ConfigValue::Text(EGO_ID.into()));
        cfg.insert("target_speed".into(), ConfigValue::Float(24.0));
        cfg.insert("aggressiveness".into(), ConfigValue::Float(0.8));
        spec.adversaries.push(AdversarySpec {
            id: "sedan_0".to_string(),
            vehicle_class: VehicleClass::Sedan,
            placement: RelativePlacement {
                relation: Relation::Behind,
                gap: 15.0,
            },
            behavior: BehaviorNodeSpec::atomic("follow_vehicle", cfg),
        });
        spec.intent.criticality_band = CriticalityBand::Moderate;
        let trace = run(&spec, 10.0);
        let first = trace.ticks().next().unwrap();
        assert_eq!(first.statuses.len(), 1);
        assert_eq!(first.distances.len(), 1);
        assert!(first.distances[0].delta > 0.0);
        assert!(trace
            .events()
            .any(|e| matches!(e.body, EventBody::BehaviorStatus { .. })));
    }

    #[test]
    fn roamers_never_cross_on_red() {
        let mut spec = empty_spec();
        spec.environment.map_id = "crossroad".to_string();
        spec.ego.placement = PlacementQuery::IntersectionApproach;
        spec.ego.target_speed = 12.0;
        spec.background.count = 6;
        spec.background.spawn_radius = 250.0;
        spec.background.density_profile = DensityProfile::Sparse;
        let trace = run(&spec, 30.0);
        let map = MapLibrary::builtin().get("crossroad").unwrap();
        let ticks: Vec<_> = trace.ticks().collect();
        for w in ticks.windows(2) {
            for cur in &w[1].vehicles {
                if !cur.id.starts_with("bg_") {
                    continue;
                }
                let Some(prev) = w[0].vehicles.iter().find(|p| p.id == cur.id) else {
                    continue;
                };
                if prev.lane_id != cur.lane_id {
                    continue; // respawned
                }
                let Some(stop) = map.stop_line(&cur.lane_id) else { continue };
                let crossed = prev.s < stop && cur.s >= stop && (cur.s - prev.s) < 5.0;
                if crossed {
                    let color = map.signal_color_at(&cur.lane_id, w[1].t).unwrap();
                    assert_eq!(
                        color,
                        crate::map::SignalColor::Green,
                        "roamer {} crossed on red at t={}",
                        cur.id,
                        w[1].t
                    );
                }
            }
        }
    }

    #[test]
    fn unknown_controller_is_a_validation_error() {
        let mut spec = empty_spec();
        spec.ego.controller = "teleport".to_string();
        let err = run_scenario(
            &spec,
            &MapLibrary::builtin(),
            &BehaviorRegistry::builtin(),
            &RunOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::Validation { .. }));
    }
}
