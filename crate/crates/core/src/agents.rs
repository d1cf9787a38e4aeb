//! Driving agents: the adversarial maneuver agents bound by atomic
//! behaviors, the cautious rule-based planner, the defensive ego
//! controller and the background roamer. Each maps world state to a
//! longitudinal acceleration plus a lane-change intent.
//!
//! The longitudinal law is IDM-shaped: a free-road term towards the
//! desired speed plus a gap-dependent interaction term. Aggressiveness in
//! [0, 1] linearly interpolates between the safe and aggressive parameter
//! extremes below.

use crate::map::SignalColor;
use crate::world::{ControlTarget, LaneChangeCmd, VehicleState, WorldState};

/// (safe, aggressive) extremes for the car-following knobs.
pub const HEADWAY_RANGE: (f64, f64) = (2.0, 0.25);
pub const MIN_GAP_RANGE: (f64, f64) = (4.0, 0.6);

/// Fraction of the physical braking limit an explicit follower is willing
/// to use at the aggressive extreme. Shallow late braking is what turns a
/// tailgater into a rear-end collision when the leader slams its brakes.
pub const BRAKE_WILLINGNESS_AGGR: f64 = 0.72;

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct FollowParams {
    /// Desired time headway, seconds.
    pub headway: f64,
    /// Standstill minimum gap, metres.
    pub min_gap: f64,
    /// Comfortable deceleration used in the IDM braking strategy.
    pub comfort_decel: f64,
}

impl FollowParams {
    pub fn from_aggressiveness(g: f64) -> Self {
        FollowParams {
            headway: lerp(HEADWAY_RANGE.0, HEADWAY_RANGE.1, g),
            min_gap: lerp(MIN_GAP_RANGE.0, MIN_GAP_RANGE.1, g),
            comfort_decel: lerp(2.0, 5.0, g),
        }
    }

    pub fn cautious() -> Self {
        FollowParams {
            headway: 2.2,
            min_gap: 5.0,
            comfort_decel: 2.0,
        }
    }
}

/// IDM acceleration. `gap` is the bumper-to-bumper gap to the leader,
/// `closing` the approach speed (self minus leader).
pub fn idm_accel(
    speed: f64,
    desired_speed: f64,
    leader: Option<(f64, f64)>,
    p: &FollowParams,
    a_max: f64,
) -> f64 {
    let v0 = desired_speed.max(0.1);
    let free = a_max * (1.0 - (speed / v0).powi(4));
    match leader {
        None => free,
        Some((gap, closing)) => {
            let desired_gap = p.min_gap
                + (speed * p.headway + speed * closing / (2.0 * (a_max * p.comfort_decel).sqrt()))
                    .max(0.0);
            let interaction = -a_max * (desired_gap / gap.max(0.1)).powi(2);
            free + interaction
        }
    }
}

fn clamp_accel(world: &WorldState, a: f64) -> f64 {
    a.clamp(-world.max_decel(), world.max_accel())
}

fn bumper_gap(me: &VehicleState, other: &VehicleState, center_gap: f64) -> f64 {
    center_gap - (me.length + other.length) * 0.5
}

/// ACC-style car following of an explicit target vehicle.
pub fn acc_follow(
    world: &WorldState,
    self_id: &str,
    target: &str,
    target_speed: f64,
    aggressiveness: f64,
) -> ControlTarget {
    let Some(me) = world.vehicle(self_id) else {
        return ControlTarget::accel(0.0);
    };
    let p = FollowParams::from_aggressiveness(aggressiveness);
    let brake_limit = world.max_decel() * lerp(1.0, BRAKE_WILLINGNESS_AGGR, aggressiveness);
    let leader = world.signed_gap(self_id, target).and_then(|d| {
        if d <= 0.0 {
            return None; // target not ahead
        }
        let tv = world.vehicle(target)?;
        Some((bumper_gap(me, tv, d), me.speed - tv.speed))
    });
    match leader {
        Some(l) => ControlTarget::accel(
            idm_accel(me.speed, target_speed, Some(l), &p, world.max_accel())
                .clamp(-brake_limit, world.max_accel()),
        ),
        // target lost or behind: hold a comfortable deceleration
        None => {
            if world.vehicle(target).is_some() && world.signed_gap(self_id, target).is_some() {
                ControlTarget::accel(clamp_accel(
                    world,
                    idm_accel(me.speed, target_speed, None, &p, world.max_accel()),
                ))
            } else {
                ControlTarget::accel(-p.comfort_decel.min(world.max_decel()))
            }
        }
    }
}

/// Accelerate past the victim on an adjacent lane; once the bumper lead
/// exceeds the (aggressiveness-shrunk) trigger gap, begin the lane change
/// into the victim's lane. Completion is detected by the behavior
/// engine's same-lane condition.
pub fn cut_in(
    world: &WorldState,
    self_id: &str,
    victim: &str,
    trigger_gap: f64,
    aggressiveness: f64,
    target_speed: Option<f64>,
) -> ControlTarget {
    let (Some(me), Some(v)) = (world.vehicle(self_id), world.vehicle(victim)) else {
        return ControlTarget::accel(0.0);
    };
    let chase_speed = target_speed.unwrap_or(v.speed + lerp(3.0, 7.0, aggressiveness));
    let p = FollowParams::from_aggressiveness(aggressiveness);
    // react to our own corridor leader so the maneuver stays drivable
    let leader = world
        .corridor_leader(self_id, 80.0)
        .map(|(l, d)| (bumper_gap(me, l, d), me.speed - l.speed));
    let accel = clamp_accel(world, idm_accel(me.speed, chase_speed, leader, &p, world.max_accel()));

    if me.lane_change.is_some() {
        return ControlTarget::accel(accel);
    }
    let lead = world
        .signed_gap(self_id, victim)
        .map(|d| bumper_gap(me, v, -d));
    let eff_trigger = trigger_gap * lerp(1.0, 0.25, aggressiveness);
    let mut cmd = LaneChangeCmd::Keep;
    if lead.is_some_and(|l| l >= eff_trigger) {
        let lane = world.map.lane(&me.lane_id).ok();
        if let Some(lane) = lane {
            if lane.right.as_deref() == Some(v.lane_id.as_str()) {
                cmd = LaneChangeCmd::BeginRight;
            } else if lane.left.as_deref() == Some(v.lane_id.as_str()) {
                cmd = LaneChangeCmd::BeginLeft;
            }
        }
    }
    ControlTarget {
        accel,
        lane_change: cmd,
    }
}

/// Brake at the requested deceleration (clamped to the friction-scaled
/// vehicle limit) until standstill, then hold.
pub fn sudden_brake(world: &WorldState, self_id: &str, decel: f64) -> ControlTarget {
    let Some(me) = world.vehicle(self_id) else {
        return ControlTarget::accel(0.0);
    };
    if me.speed <= 0.0 {
        ControlTarget::accel(0.0)
    } else {
        ControlTarget::accel(-decel.min(world.max_decel()))
    }
}

/// Follow the route at the target speed, blind to signals and conflict
/// traffic; still reacts to a direct leader in the corridor.
pub fn run_red_light(world: &WorldState, self_id: &str, target_speed: f64) -> ControlTarget {
    let Some(me) = world.vehicle(self_id) else {
        return ControlTarget::accel(0.0);
    };
    let p = FollowParams::from_aggressiveness(0.5);
    let leader = world
        .corridor_leader(self_id, 60.0)
        .map(|(l, d)| (bumper_gap(me, l, d), me.speed - l.speed));
    ControlTarget::accel(clamp_accel(world, idm_accel(me.speed, target_speed, leader, &p, world.max_accel())))
}

/// Plain route following with moderate car-following.
pub fn follow_route(
    world: &WorldState,
    self_id: &str,
    target_speed: Option<f64>,
    aggressiveness: f64,
) -> ControlTarget {
    let Some(me) = world.vehicle(self_id) else {
        return ControlTarget::accel(0.0);
    };
    let limit = world
        .map
        .lane(&me.lane_id)
        .map(|l| l.speed_limit)
        .unwrap_or(15.0);
    let v0 = target_speed.unwrap_or(limit).min(limit * 1.5);
    let p = FollowParams::from_aggressiveness(aggressiveness);
    let leader = world
        .corridor_leader(self_id, 80.0)
        .map(|(l, d)| (bumper_gap(me, l, d), me.speed - l.speed));
    ControlTarget::accel(clamp_accel(world, idm_accel(me.speed, v0, leader, &p, world.max_accel())))
}

#[derive(Debug, Clone, Copy)]
pub struct CautiousParams {
    pub target_speed: Option<f64>,
}

/// Rule-based cautious planner: obeys signals, yields to conflict traffic
/// with earlier arrival, conservative car-following, no lane changes.
pub fn cautious_planner(world: &WorldState, self_id: &str, params: CautiousParams) -> ControlTarget {
    let Some(me) = world.vehicle(self_id) else {
        return ControlTarget::accel(0.0);
    };
    let lane = match world.map.lane(&me.lane_id) {
        Ok(l) => l,
        Err(_) => return ControlTarget::accel(0.0),
    };
    let v0 = params.target_speed.unwrap_or(lane.speed_limit).min(lane.speed_limit);
    let p = FollowParams::cautious();

    // real leader in corridor
    let mut leader = world
        .corridor_leader(self_id, 100.0)
        .map(|(l, d)| (bumper_gap(me, l, d), me.speed - l.speed));

    // end of route: treat the lane end as a standing obstacle
    let mut lane_cursor = lane;
    let mut remaining = lane.length() - me.s;
    while lane_cursor.successors.first().is_some() && remaining < 120.0 {
        lane_cursor = match world.map.lane(&lane_cursor.successors[0]) {
            Ok(l) => l,
            Err(_) => break,
        };
        remaining += lane_cursor.length();
    }
    if lane_cursor.successors.is_empty() && remaining < 120.0 {
        let virt = (remaining - me.length * 0.5 - 1.0, me.speed);
        leader = Some(match leader {
            Some(l) if l.0 < virt.0 => l,
            _ => virt,
        });
    }

    // stop line on red, or when yielding to earlier conflict traffic
    if let Some(stop_s) = world.map.stop_line(&me.lane_id) {
        if me.s < stop_s {
            let red = matches!(
                world.map.signal_color_at(&me.lane_id, world.t),
                Ok(SignalColor::Red)
            );
            let yielding = !red && must_yield(world, me, stop_s);
            if red || yielding {
                let gap = stop_s - me.s - me.length * 0.5;
                let virt = (gap, me.speed);
                leader = Some(match leader {
                    Some(l) if l.0 < virt.0 => l,
                    _ => virt,
                });
            }
        }
    }

    ControlTarget::accel(clamp_accel(world, idm_accel(me.speed, v0, leader, &p, world.max_accel())))
}

/// Earlier-arrival yield rule at the conflict zone.
fn must_yield(world: &WorldState, me: &VehicleState, my_stop: f64) -> bool {
    let my_eta = (my_stop - me.s) / me.speed.max(0.5);
    if my_eta > 8.0 {
        return false;
    }
    for other in &world.vehicles {
        if other.id == me.id {
            continue;
        }
        for lane in other.occupied_lanes() {
            if !world
                .map
                .conflicting_lanes(&me.lane_id)
                .contains(&lane)
            {
                continue;
            }
            let Some(entry) = world.map.stop_line(lane) else { continue };
            let s_on = if lane == other.lane_id {
                other.s
            } else {
                match world.map.map_s(&other.lane_id, lane, other.s) {
                    Ok(s) => s,
                    Err(_) => continue,
                }
            };
            let dist = entry - s_on;
            if dist < -15.0 {
                continue; // already through
            }
            let eta = dist.max(0.0) / other.speed.max(0.5);
            if other.speed > 0.5 && eta < my_eta + 1.0 && eta < 6.0 {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, Copy)]
pub struct EgoParams {
    pub target_speed: f64,
    /// Emergency-brake threshold: brake at the limit once the footprint
    /// gap to a same-corridor threat falls below reaction_headway * speed.
    pub reaction_headway: f64,
}

impl Default for EgoParams {
    fn default() -> Self {
        EgoParams {
            target_speed: 15.0,
            reaction_headway: 0.9,
        }
    }
}

/// Cautious planning plus an emergency-brake override. The override is
/// physically limited: a cut-in at very small gap and high closing speed
/// can still end in contact.
pub fn ego_defensive(world: &WorldState, self_id: &str, params: EgoParams) -> ControlTarget {
    let base = cautious_planner(
        world,
        self_id,
        CautiousParams {
            target_speed: Some(params.target_speed),
        },
    );
    let Some(me) = world.vehicle(self_id) else { return base };

    for other in &world.vehicles {
        if other.id == me.id {
            continue;
        }
        // only vehicles in or entering our lane, ahead of us
        let threatens = other
            .occupied_lanes()
            .iter()
            .any(|l| *l == me.lane_id || me.occupied_lanes().contains(l));
        if !threatens {
            continue;
        }
        let ahead = {
            let fwd = crate::geom::Vec2::new(me.heading.cos(), me.heading.sin());
            (other.pos - me.pos).dot(fwd) > 0.0
        };
        if !ahead {
            continue;
        }
        if let Some((delta, closing)) = world.approach_state(self_id, &other.id) {
            if closing > 0.3 && delta < params.reaction_headway * me.speed {
                return ControlTarget::accel(-world.max_decel());
            }
        }
    }
    base
}

/// Cautious planner with a roamer's target speed; route choice and
/// respawning are handled by the simulator using the roamer's seeded
/// stream.
pub fn background_roamer(world: &WorldState, self_id: &str, target_speed: f64) -> ControlTarget {
    cautious_planner(
        world,
        self_id,
        CautiousParams {
            target_speed: Some(target_speed),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{LaneGraph, MapLibrary};
    use crate::geom::Vec2;
    use std::sync::Arc;

    fn world_with(vehicles: Vec<VehicleState>) -> WorldState {
        let map: Arc<LaneGraph> = MapLibrary::builtin().get("highway").unwrap();
        WorldState {
            t: 0.0,
            tick: 0,
            dt: 0.05,
            friction: 1.0,
            vehicles,
            map,
        }
    }

    fn vehicle(id: &str, lane: &str, s: f64, speed: f64) -> VehicleState {
        VehicleState {
            id: id.to_string(),
            pos: Vec2::new(s, 0.0),
            heading: 0.0,
            lane_id: lane.to_string(),
            s,
            lateral_offset: 0.0,
            speed,
            accel: 0.0,
            length: 4.5,
            width: 1.9,
            lane_change: None,
            odometer: 0.0,
        }
    }

    #[test]
    fn free_road_accelerates_below_target() {
        let w = world_with(vec![vehicle("a", "l0", 10.0, 5.0), vehicle("ego", "l0", 300.0, 10.0)]);
        let c = acc_follow(&w, "a", "ego", 15.0, 0.5);
        assert!(c.accel > 0.0);
    }

    #[test]
    fn stationary_leader_at_min_gap_forces_hard_braking() {
        let p = FollowParams::from_aggressiveness(0.0);
        let a = idm_accel(20.0, 20.0, Some((p.min_gap, 20.0)), &p, MAX_A);
        assert!(a < -8.0, "a = {a}");
    }
    const MAX_A: f64 = 3.0;

    #[test]
    fn sudden_brake_stops_in_v_over_a() {
        // 20 m/s at 8 m/s^2 -> 2.5 s = 50 ticks of 0.05 s
        let mut v = vehicle("a", "l0", 100.0, 20.0);
        let mut ticks = 0;
        while v.speed > 1e-6 {
            let w = world_with(vec![v.clone()]);
            let c = sudden_brake(&w, "a", 8.0);
            v.speed = (v.speed + c.accel * 0.05).max(0.0);
            ticks += 1;
            assert!(ticks < 1000);
        }
        assert_eq!(ticks, 50);
    }

    #[test]
    fn sudden_brake_halved_friction_doubles_stopping_time() {
        let mut v = vehicle("a", "l0", 100.0, 20.0);
        let mut ticks = 0;
        while v.speed > 1e-6 {
            let mut w = world_with(vec![v.clone()]);
            w.friction = 0.5;
            let c = sudden_brake(&w, "a", 8.0);
            v.speed = (v.speed + c.accel * 0.05).max(0.0);
            ticks += 1;
            assert!(ticks < 1000);
        }
        assert_eq!(ticks, 100);
    }

    #[test]
    fn sudden_brake_is_a_fixed_point_at_standstill() {
        let w = world_with(vec![vehicle("a", "l0", 100.0, 0.0)]);
        assert_eq!(sudden_brake(&w, "a", 8.0).accel, 0.0);
    }

    #[test]
    fn cut_in_triggers_lane_change_at_lead() {
        let mut truck = vehicle("truck", "l1", 140.0, 16.0);
        truck.length = 8.0;
        truck.width = 2.5;
        let ego = vehicle("ego", "l0", 100.0, 15.0);
        let w = world_with(vec![truck, ego]);
        // bumper lead = 40 - (8+4.5)/2 = 33.75 >= any reasonable trigger
        let c = cut_in(&w, "truck", "ego", 12.0, 1.0, None);
        assert_eq!(c.lane_change, LaneChangeCmd::BeginRight);
    }

    #[test]
    fn cut_in_keeps_lane_before_trigger() {
        let truck = vehicle("truck", "l1", 102.0, 16.0);
        let ego = vehicle("ego", "l0", 100.0, 15.0);
        let w = world_with(vec![truck, ego]);
        let c = cut_in(&w, "truck", "ego", 12.0, 0.0, None);
        assert_eq!(c.lane_change, LaneChangeCmd::Keep);
    }

    #[test]
    fn ego_overrides_to_max_brake_on_close_threat() {
        let mut lead = vehicle("lead", "l0", 112.0, 0.0);
        lead.pos = Vec2::new(112.0, 0.0);
        let ego = vehicle("ego", "l0", 100.0, 15.0);
        let w = world_with(vec![lead, ego]);
        let c = ego_defensive(&w, "ego", EgoParams::default());
        assert_eq!(c.accel, -w.max_decel());
    }
}
