//! Anticipated collision time checked against a brute-force oracle on
//! synthetic two-vehicle trajectories: an independently written polygon
//! distance and an independently written finite-differencing pass.

use rand::Rng;
use scenloop_core::geom::{obb_distance, Obb, Vec2};
use scenloop_core::metrics::act_series;
use scenloop_core::rng::substream_indexed;
use scenloop_core::trace::{PairDistance, SimTrace, TickRecord, TraceHeader, TraceRecord, TRACE_VERSION};
use scenloop_core::world::VehicleState;

const DT: f64 = 0.05;
const FRAMES: usize = 40;

fn vehicle(id: &str, pos: Vec2, heading: f64, length: f64, width: f64) -> VehicleState {
    VehicleState {
        id: id.to_string(),
        pos,
        heading,
        lane_id: "l0".to_string(),
        s: 0.0,
        lateral_offset: 0.0,
        speed: 0.0,
        accel: 0.0,
        length,
        width,
        lane_change: None,
        odometer: 0.0,
    }
}

/// Assemble a trace holding exactly the given footprint pairs, with the
/// deltas computed by the production geometry.
fn trace_from_poses(poses: &[(Obb, Obb)]) -> SimTrace {
    let mut records = Vec::new();
    for (k, (a, b)) in poses.iter().enumerate() {
        let ego = vehicle("ego", a.center, a.heading, a.half_length * 2.0, a.half_width * 2.0);
        let adv = vehicle("adv", b.center, b.heading, b.half_length * 2.0, b.half_width * 2.0);
        records.push(TraceRecord::Tick(TickRecord {
            tick: (k + 1) as u64,
            t: (k + 1) as f64 * DT,
            distances: vec![PairDistance {
                a: "ego".to_string(),
                b: "adv".to_string(),
                delta: obb_distance(a, b),
            }],
            statuses: Vec::new(),
            vehicles: vec![ego, adv],
        }));
    }
    SimTrace {
        header: TraceHeader {
            trace_version: TRACE_VERSION,
            map_id: "highway".to_string(),
            seed: 0,
            dt: DT,
            duration: FRAMES as f64 * DT,
            ego_id: "ego".to_string(),
            adversaries: vec!["adv".to_string()],
            all_pairs: false,
        },
        records,
    }
}

mod oracle {
    use super::Vec2;

    fn point_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
        let abx = b.x - a.x;
        let aby = b.y - a.y;
        let len2 = abx * abx + aby * aby;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0)
        };
        let cx = a.x + t * abx;
        let cy = a.y + t * aby;
        ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()
    }

    fn cross(ox: f64, oy: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
        (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)
    }

    fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
        let d1 = cross(c.x, c.y, d.x, d.y, a.x, a.y);
        let d2 = cross(c.x, c.y, d.x, d.y, b.x, b.y);
        let d3 = cross(a.x, a.y, b.x, b.y, c.x, c.y);
        let d4 = cross(a.x, a.y, b.x, b.y, d.x, d.y);
        ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0))
    }

    fn inside(poly: &[Vec2; 4], p: Vec2) -> bool {
        let mut winding = 0;
        for i in 0..4 {
            let (a, b) = (poly[i], poly[(i + 1) % 4]);
            if a.y <= p.y {
                if b.y > p.y && cross(a.x, a.y, b.x, b.y, p.x, p.y) > 0.0 {
                    winding += 1;
                }
            } else if b.y <= p.y && cross(a.x, a.y, b.x, b.y, p.x, p.y) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    /// Convex quad distance from first principles: 0 when one contains a
    /// corner of the other or edges cross, else the edge-pair minimum.
    pub fn quad_distance(a: &[Vec2; 4], b: &[Vec2; 4]) -> f64 {
        if a.iter().any(|&p| inside(b, p)) || b.iter().any(|&p| inside(a, p)) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for i in 0..4 {
            for j in 0..4 {
                let (a1, a2) = (a[i], a[(i + 1) % 4]);
                let (b1, b2) = (b[j], b[(j + 1) % 4]);
                if segments_cross(a1, a2, b1, b2) {
                    return 0.0;
                }
                best = best
                    .min(point_segment(a1, b1, b2))
                    .min(point_segment(a2, b1, b2))
                    .min(point_segment(b1, a1, a2))
                    .min(point_segment(b2, a1, a2));
            }
        }
        best
    }

    /// The Eq. (1) definition applied directly to a delta series.
    pub fn act_from_deltas(deltas: &[f64], dt: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(deltas.len());
        for k in 0..deltas.len() {
            if k == 0 {
                out.push(f64::INFINITY);
                continue;
            }
            let closing = (deltas[k - 1] - deltas[k]) / dt;
            out.push(if closing > 0.0 {
                deltas[k] / closing
            } else {
                f64::INFINITY
            });
        }
        out
    }
}

fn random_trajectory(seed: u64) -> Vec<(Obb, Obb)> {
    let mut rng = substream_indexed(909, "act-oracle", seed);
    let ego_speed = rng.gen_range(5.0..30.0);
    let adv_speed = rng.gen_range(5.0..30.0);
    let adv_y = rng.gen_range(-6.0..6.0);
    let adv_x = rng.gen_range(-40.0..40.0);
    let adv_heading: f64 = rng.gen_range(-0.3..0.3f64);
    let curve = rng.gen_range(-0.02..0.02);
    let mut poses = Vec::with_capacity(FRAMES);
    for k in 0..FRAMES {
        let t = k as f64 * DT;
        let ego = Obb::new(Vec2::new(ego_speed * t, 0.0), 0.0, 4.5, 1.9);
        let heading = adv_heading + curve * t;
        let adv = Obb::new(
            Vec2::new(
                adv_x + adv_speed * t * heading.cos(),
                adv_y + adv_speed * t * heading.sin(),
            ),
            heading,
            rng.gen_range(4.0..8.0),
            2.0,
        );
        poses.push((ego, adv));
    }
    poses
}

fn assert_series_match(poses: &[(Obb, Obb)], label: &str) {
    let trace = trace_from_poses(poses);

    // the recorded deltas must agree with the independent polygon distance
    let deltas = trace.pair_deltas("adv");
    for (k, (a, b)) in poses.iter().enumerate() {
        let oracle_d = oracle::quad_distance(&a.corners(), &b.corners());
        assert!(
            (deltas[k] - oracle_d).abs() <= 1e-9,
            "{label}: delta mismatch at frame {k}: {} vs {}",
            deltas[k],
            oracle_d
        );
    }

    // and the act series must agree with the directly-applied definition
    let production = act_series(&trace, "adv").unwrap();
    let expected = oracle::act_from_deltas(&deltas, DT);
    for (k, (p, e)) in production.iter().zip(expected.iter()).enumerate() {
        if p.act.is_infinite() || e.is_infinite() {
            assert_eq!(
                p.act.is_infinite(),
                e.is_infinite(),
                "{label}: infinity mismatch at frame {k}: {} vs {}",
                p.act,
                e
            );
        } else {
            assert!(
                (p.act - e).abs() <= 1e-6,
                "{label}: act mismatch at frame {k}: {} vs {}",
                p.act,
                e
            );
        }
    }
}

#[test]
pub fn act_matches_brute_force_on_1000_random_trajectories() {
    for seed in 0..1000 {
        let poses = random_trajectory(seed);
        assert_series_match(&poses, &format!("seed {seed}"));
    }
}

#[test]
pub fn constant_delta_is_infinite_everywhere() {
    // both vehicles travel side by side at the same speed
    let poses: Vec<(Obb, Obb)> = (0..FRAMES)
        .map(|k| {
            let x = 12.0 * k as f64 * DT;
            (
                Obb::new(Vec2::new(x, 0.0), 0.0, 4.5, 1.9),
                Obb::new(Vec2::new(x, 5.0), 0.0, 4.5, 1.9),
            )
        })
        .collect();
    assert_series_match(&poses, "constant");
    let trace = trace_from_poses(&poses);
    for frame in act_series(&trace, "adv").unwrap() {
        assert!(frame.act.is_infinite());
    }
}

#[test]
pub fn receding_delta_is_infinite_everywhere() {
    let poses: Vec<(Obb, Obb)> = (0..FRAMES)
        .map(|k| {
            let t = k as f64 * DT;
            (
                Obb::new(Vec2::new(10.0 * t, 0.0), 0.0, 4.5, 1.9),
                Obb::new(Vec2::new(20.0 + 18.0 * t, 0.0), 0.0, 4.5, 1.9),
            )
        })
        .collect();
    assert_series_match(&poses, "receding");
    let trace = trace_from_poses(&poses);
    for frame in act_series(&trace, "adv").unwrap() {
        assert!(frame.act.is_infinite(), "receding vehicles never close");
    }
}

#[test]
pub fn head_on_closing_act_shrinks_towards_zero() {
    let poses: Vec<(Obb, Obb)> = (0..FRAMES)
        .map(|k| {
            let t = k as f64 * DT;
            (
                Obb::new(Vec2::new(10.0 * t, 0.0), 0.0, 4.5, 1.9),
                Obb::new(Vec2::new(60.0 - 15.0 * t, 0.0), std::f64::consts::PI, 4.5, 1.9),
            )
        })
        .collect();
    assert_series_match(&poses, "head-on");
    let trace = trace_from_poses(&poses);
    let series = act_series(&trace, "adv").unwrap();
    let finite: Vec<f64> = series.iter().skip(1).map(|f| f.act).collect();
    for w in finite.windows(2) {
        assert!(w[1] < w[0], "act must shrink while closing at fixed speed");
    }
    // delta / closing-rate: 25 m/s closure from 55.5 m of bumper clearance
    let first = finite[0];
    assert!((first - (55.5 - 25.0 * DT) / 25.0).abs() < 1e-9);
}
