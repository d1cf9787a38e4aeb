//! Top-down SVG snapshots of a recorded trace, for quick visual checks
//! during replay.

use std::fmt::Write as _;

use crate::error::{CoreError, Result};
use crate::map::LaneGraph;
use crate::scenario::EGO_ID;
use crate::trace::{SimTrace, TickRecord};
use crate::world::VehicleState;

const MARGIN: f64 = 40.0;
const LANE_SAMPLE_STEP: f64 = 5.0;

fn nearest_tick<'a>(trace: &'a SimTrace, t: f64) -> Result<&'a TickRecord> {
    trace
        .ticks()
        .min_by(|a, b| {
            let da = (a.t - t).abs();
            let db = (b.t - t).abs();
            da.partial_cmp(&db).unwrap()
        })
        .ok_or_else(|| CoreError::Other("trace has no tick records".to_string()))
}

fn vehicle_rect(out: &mut String, v: &VehicleState, fill: &str) {
    let _ = write!(
        out,
        r#"<g transform="translate({:.2} {:.2}) rotate({:.2})"><rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="black" stroke-width="0.2"/><title>{} v={:.1} m/s</title></g>"#,
        v.pos.x,
        v.pos.y,
        v.heading.to_degrees(),
        -v.length / 2.0,
        -v.width / 2.0,
        v.length,
        v.width,
        fill,
        v.id,
        v.speed,
    );
    out.push('\n');
}

/// Render the tick nearest to `t` as a standalone SVG document. World
/// coordinates are metres; the viewport is fitted around the vehicles.
pub fn render_snapshot(trace: &SimTrace, map: &LaneGraph, t: f64) -> Result<String> {
    let tick = nearest_tick(trace, t)?;

    let xs: Vec<f64> = tick.vehicles.iter().map(|v| v.pos.x).collect();
    let ys: Vec<f64> = tick.vehicles.iter().map(|v| v.pos.y).collect();
    let min_x = xs.iter().cloned().fold(f64::INFINITY, f64::min) - MARGIN;
    let max_x = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + MARGIN;
    let min_y = ys.iter().cloned().fold(f64::INFINITY, f64::min) - MARGIN;
    let max_y = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + MARGIN;
    let (w, h) = (max_x - min_x, max_y - min_y);

    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="{:.2} {:.2} {:.2} {:.2}">"#,
        w * 4.0,
        h * 4.0,
        min_x,
        min_y,
        w,
        h,
    );
    out.push('\n');
    // flip y so +y in world coordinates points up on screen
    let _ = write!(
        out,
        r#"<g transform="translate(0 {:.2}) scale(1 -1)">"#,
        min_y + max_y
    );
    out.push('\n');
    let _ = write!(
        out,
        r##"<rect x="{min_x:.2}" y="{min_y:.2}" width="{w:.2}" height="{h:.2}" fill="#e8e8e8"/>"##
    );
    out.push('\n');

    for lane in map.lanes() {
        let mut points = String::new();
        let mut s = 0.0;
        while s <= lane.length() {
            let p = lane.point_at(s);
            let _ = write!(points, "{:.2},{:.2} ", p.x, p.y);
            s += LANE_SAMPLE_STEP;
        }
        let p = lane.point_at(lane.length());
        let _ = write!(points, "{:.2},{:.2}", p.x, p.y);
        let _ = write!(
            out,
            r##"<polyline points="{}" fill="none" stroke="#aaaaaa" stroke-width="3.5" stroke-linecap="round"><title>{}</title></polyline>"##,
            points.trim_end(),
            lane.id,
        );
        out.push('\n');
    }

    for v in &tick.vehicles {
        let fill = if v.id == EGO_ID {
            "#d33"
        } else if v.id.starts_with("bg_") {
            "#888"
        } else {
            "#36c"
        };
        vehicle_rect(&mut out, v, fill);
    }

    let _ = write!(
        out,
        r#"</g><text x="10" y="20" font-size="14" font-family="monospace">t={:.2}s tick={}</text></svg>"#,
        tick.t, tick.tick
    );
    out.push('\n');
    Ok(out)
}

/// Snapshot times for `--svg every N s` rendering: one per interval
/// boundary inside the recorded span, excluding t=0.
pub fn snapshot_times(trace: &SimTrace, every: f64) -> Vec<f64> {
    let Some(last) = trace.ticks().last() else {
        return Vec::new();
    };
    let mut times = Vec::new();
    let mut t = every;
    while t <= last.t + 1e-9 {
        times.push(t);
        t += every;
    }
    times
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::BehaviorRegistry;
    use crate::map::MapLibrary;
    use crate::nl::keyword::KeywordEngine;
    use crate::nl::generate_scenario;
    use crate::sim::{run_scenario, RunOptions};

    fn quick_trace() -> (SimTrace, std::sync::Arc<LaneGraph>) {
        let library = MapLibrary::builtin();
        let registry = BehaviorRegistry::builtin();
        let (spec, _) = generate_scenario(
            "a sedan follows the ego vehicle",
            3,
            &library,
            &registry,
            &KeywordEngine::default(),
        )
        .unwrap();
        let opts = RunOptions {
            duration: 10.0,
            ..Default::default()
        };
        let trace = run_scenario(&spec, &library, &registry, &opts).unwrap();
        let map = library.get(&spec.environment.map_id).unwrap();
        (trace, map)
    }

    #[test]
    fn snapshot_is_wellformed_svg_with_all_vehicles() {
        let (trace, map) = quick_trace();
        let svg = render_snapshot(&trace, &map, 5.0).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<title>ego"));
        assert!(svg.contains("<title>sedan_0"));
        assert!(svg.contains("t=5.00s"));
    }

    #[test]
    fn every_two_seconds_over_thirty_gives_fifteen() {
        let library = MapLibrary::builtin();
        let registry = BehaviorRegistry::builtin();
        let (spec, _) = generate_scenario(
            "a quiet empty street",
            1,
            &library,
            &registry,
            &KeywordEngine::default(),
        )
        .unwrap();
        let trace = run_scenario(&spec, &library, &registry, &RunOptions::default()).unwrap();
        assert_eq!(snapshot_times(&trace, 2.0).len(), 15);
    }
}
