//! Surrogate safety evaluation over recorded traces: anticipated collision
//! time, comfortability, collision record and batch crash rate. All
//! metrics are pure functions of the trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::trace::{EventBody, SimTrace};

/// Moving-average window for acceleration denoising, frames (0.25 s).
pub const DENOISE_WINDOW: usize = 5;

/// Frames with denoised accel magnitude at or below this are treated as
/// "no acceleration" and excluded from the comfortability mean.
pub const ACCEL_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePairState {
    pub t: f64,
    pub delta: f64,
    /// Rate of decrease of delta, m/s; positive while approaching.
    pub closing_rate: f64,
    /// Anticipated collision time, seconds; infinite unless approaching.
    pub act: f64,
}

/// Per-frame anticipated collision time for one ego-adversary pair.
/// The closing rate at frame k is (delta[k-1] - delta[k]) / dt; the first
/// frame has no predecessor and is infinite by convention.
pub fn act_series(trace: &SimTrace, adversary: &str) -> Result<Vec<FramePairState>> {
    if !trace.header.adversaries.iter().any(|a| a == adversary) {
        return Err(CoreError::Other(format!(
            "no ego pair for vehicle '{adversary}' in trace"
        )));
    }
    let deltas = trace.pair_deltas(adversary);
    let times: Vec<f64> = trace.ticks().map(|t| t.t).collect();
    let dt = trace.header.dt;
    let mut out = Vec::with_capacity(deltas.len());
    for k in 0..deltas.len() {
        let closing_rate = if k == 0 {
            0.0
        } else {
            (deltas[k - 1] - deltas[k]) / dt
        };
        let act = if k > 0 && closing_rate > 0.0 {
            deltas[k] / closing_rate
        } else {
            f64::INFINITY
        };
        out.push(FramePairState {
            t: times[k],
            delta: deltas[k],
            closing_rate,
            act,
        });
    }
    Ok(out)
}

pub fn min_of_series(series: &[FramePairState]) -> f64 {
    series.iter().map(|f| f.act).fold(f64::INFINITY, f64::min)
}

/// Minimum ACT across the whole timeline and all ego-adversary pairs.
pub fn min_act(trace: &SimTrace) -> Result<f64> {
    let mut min = f64::INFINITY;
    for adv in &trace.header.adversaries {
        min = min.min(min_of_series(&act_series(trace, adv)?));
    }
    Ok(min)
}

/// Centered moving average with edge truncation.
pub fn denoise(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Comfort score in (0, 1]: the mean of 1/(|a|+1) over frames with
/// non-negligible denoised acceleration, 1.0 when there are none.
pub fn comfortability(trace: &SimTrace) -> f64 {
    let mags: Vec<f64> = trace.ego_accels().iter().map(|a| a.abs()).collect();
    comfortability_of(&mags)
}

pub fn comfortability_of(accel_magnitudes: &[f64]) -> f64 {
    comfort_mean(&denoise(accel_magnitudes, DENOISE_WINDOW))
}

/// The raw score on an already-smoothed magnitude series: mean of
/// 1/(a+1) over entries above the negligibility threshold.
pub fn comfort_mean(accel_magnitudes: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &a in accel_magnitudes {
        if a > ACCEL_EPSILON {
            sum += 1.0 / (a + 1.0);
            n += 1;
        }
    }
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CollisionRecord {
    pub occurred: bool,
    /// Involved pairs in event order.
    pub parties: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// None encodes an unbounded (infinite) minimum ACT.
    pub min_act: Option<f64>,
    pub comfortability: f64,
    pub collision: CollisionRecord,
    /// Auxiliary: smallest ego-adversary distance seen, metres.
    pub min_delta: Option<f64>,
}

impl MetricsSummary {
    pub fn min_act_value(&self) -> f64 {
        self.min_act.unwrap_or(f64::INFINITY)
    }
}

pub fn evaluate(trace: &SimTrace) -> Result<MetricsSummary> {
    let ma = min_act(trace)?;
    let mut parties = Vec::new();
    for ev in trace.collisions() {
        if let EventBody::Collision { a, b, .. } = &ev.body {
            if *a == trace.header.ego_id || *b == trace.header.ego_id {
                parties.push((a.clone(), b.clone()));
            }
        }
    }
    let min_delta = trace
        .ticks()
        .flat_map(|t| t.distances.iter().map(|d| d.delta))
        .fold(f64::INFINITY, f64::min);
    Ok(MetricsSummary {
        min_act: if ma.is_finite() { Some(ma) } else { None },
        comfortability: comfortability(trace),
        collision: CollisionRecord {
            occurred: !parties.is_empty(),
            parties,
        },
        min_delta: if min_delta.is_finite() {
            Some(min_delta)
        } else {
            None
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub runs: usize,
    /// Mean of finite per-run minimum ACTs; None when every run was
    /// unbounded.
    pub mean_min_act: Option<f64>,
    pub finite_act_runs: usize,
    /// Global minimum ACT over all runs (None = unbounded everywhere).
    pub global_min_act: Option<f64>,
    pub mean_comfortability: f64,
    pub crash_rate: f64,
    /// How often each vehicle appeared in an ego collision.
    pub party_histogram: BTreeMap<String, usize>,
}

pub fn summarize_batch(summaries: &[MetricsSummary]) -> BatchSummary {
    let n = summaries.len();
    assert!(n >= 1, "batch must contain at least one run");
    let finite: Vec<f64> = summaries
        .iter()
        .filter_map(|s| s.min_act)
        .collect();
    let crashes = summaries.iter().filter(|s| s.collision.occurred).count();
    let mut hist: BTreeMap<String, usize> = BTreeMap::new();
    for s in summaries {
        for (a, b) in &s.collision.parties {
            *hist.entry(a.clone()).or_default() += 1;
            *hist.entry(b.clone()).or_default() += 1;
        }
    }
    BatchSummary {
        runs: n,
        mean_min_act: if finite.is_empty() {
            None
        } else {
            Some(finite.iter().sum::<f64>() / finite.len() as f64)
        },
        finite_act_runs: finite.len(),
        global_min_act: finite.iter().copied().fold(None, |acc: Option<f64>, x| {
            Some(acc.map_or(x, |a| a.min(x)))
        }),
        mean_comfortability: summaries.iter().map(|s| s.comfortability).sum::<f64>() / n as f64,
        crash_rate: crashes as f64 / n as f64,
        party_histogram: hist,
    }
}

/// Ratio as a one-decimal percentage, rounding halves away from zero, so
/// 0.0625 renders as "6.3%".
pub fn percent(ratio: f64) -> String {
    let scaled = (ratio * 1000.0).round() / 10.0;
    format!("{scaled:.1}%")
}

/// Batch ACT column: "∞ (32/32)" when every run is unbounded, otherwise
/// the mean of finite minima with the finite count.
pub fn format_batch_act(batch: &BatchSummary) -> String {
    match batch.mean_min_act {
        None => format!("∞ ({}/{})", batch.runs, batch.runs),
        Some(mean) => {
            if batch.finite_act_runs == batch.runs {
                format!("{mean:.3} s")
            } else {
                format!(
                    "{mean:.3} s ({} finite, {} ∞)",
                    batch.finite_act_runs,
                    batch.runs - batch.finite_act_runs
                )
            }
        }
    }
}
