//! Alignment checking and rule-based scenario refinement.
//!
//! A run's metrics are compared against the band declared in the scenario
//! intent; on a mismatch a bounded set of numeric knobs is nudged in the
//! safer or more aggressive direction and the scenario is re-simulated
//! with the same seed, up to a fixed episode budget.

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorRegistry;
use crate::error::{CoreError, Result};
use crate::map::MapLibrary;
use crate::metrics::{evaluate, MetricsSummary};
use crate::scenario::{validate_cross_references, ConfigValue, CriticalityBand, ScenarioSpec};
use crate::sim::{run_scenario, RunOptions};

pub const DEFAULT_BUDGET: u32 = 5;

const AGGRESSIVENESS_STEP: f64 = 0.2;
const GAP_FACTOR: f64 = 1.3;
const SPEED_STEP: f64 = 0.10;

// Knob bounds. Aggressiveness is contractually [0, 1]; the gap and speed
// bounds match the ranges the generation schemas accept.
const GAP_BOUNDS: (f64, f64) = (1.0, 100.0);
const SPEED_BOUNDS: (f64, f64) = (1.0, 35.0);

/// The numeric criticality band a scenario intent resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTarget {
    pub collision_allowed: bool,
    /// Closed interval for the run's minimum ACT, seconds. The upper edge
    /// is `f64::INFINITY` for the open-ended safe band.
    pub act_band: (f64, f64),
}

impl AlignmentTarget {
    pub fn for_band(band: CriticalityBand) -> Self {
        match band {
            CriticalityBand::Safe => AlignmentTarget {
                collision_allowed: false,
                act_band: (2.0, f64::INFINITY),
            },
            CriticalityBand::Moderate => AlignmentTarget {
                collision_allowed: false,
                act_band: (0.5, 2.0),
            },
            CriticalityBand::DangerousNoCollision => AlignmentTarget {
                collision_allowed: false,
                act_band: (0.05, 0.5),
            },
            CriticalityBand::CollisionExpected => AlignmentTarget {
                collision_allowed: true,
                act_band: (0.0, 0.5),
            },
        }
    }

    fn contains(&self, act: f64) -> bool {
        act >= self.act_band.0 && act <= self.act_band.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ReduceAggression,
    IncreaseAggression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolatedPredicate {
    Collision,
    ActAbove,
    ActBelow,
}

/// Emitted by the alignment check when a run misses its band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementGoal {
    pub direction: Direction,
    pub violated: ViolatedPredicate,
    /// How far outside the band the run landed, seconds. Infinite when the
    /// run never produced a closing pair; 0 for collision goals.
    pub magnitude: f64,
}

/// One knob adjustment, recorded for the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mutation {
    pub path: String,
    pub old: f64,
    pub new: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementEpisodeLog {
    pub episode: u32,
    pub goal: RefinementGoal,
    pub mutations: Vec<Mutation>,
    pub pre: MetricsSummary,
    pub post: MetricsSummary,
}

/// `None` means the run already matches the target band.
pub fn check_alignment(summary: &MetricsSummary, target: &AlignmentTarget) -> Option<RefinementGoal> {
    if summary.collision.occurred && !target.collision_allowed {
        return Some(RefinementGoal {
            direction: Direction::ReduceAggression,
            violated: ViolatedPredicate::Collision,
            magnitude: 0.0,
        });
    }
    let act = summary.min_act_value();
    if !target.contains(act) {
        if act > target.act_band.1 {
            return Some(RefinementGoal {
                direction: Direction::IncreaseAggression,
                violated: ViolatedPredicate::ActAbove,
                magnitude: act - target.act_band.1,
            });
        }
        return Some(RefinementGoal {
            direction: Direction::ReduceAggression,
            violated: ViolatedPredicate::ActBelow,
            magnitude: target.act_band.0 - act,
        });
    }
    None
}

/// How far a run's metrics sit from the target band; 0 when aligned,
/// infinite for a disallowed collision or a never-closing run chasing a
/// finite band.
fn band_distance(summary: &MetricsSummary, target: &AlignmentTarget) -> f64 {
    if summary.collision.occurred && !target.collision_allowed {
        return f64::INFINITY;
    }
    let act = summary.min_act_value();
    if target.contains(act) {
        0.0
    } else if act < target.act_band.0 {
        target.act_band.0 - act
    } else {
        act - target.act_band.1
    }
}

fn clamp_move(value: f64, next: f64, bounds: (f64, f64)) -> Option<f64> {
    let clamped = next.clamp(bounds.0, bounds.1);
    if (clamped - value).abs() < 1e-12 {
        None
    } else {
        Some(clamped)
    }
}

/// Apply one episode's worth of knob movement to every adversary. Knobs
/// already at their bound are left alone; if nothing can move at all the
/// scenario has no adjustment room left and `KnobsExhausted` is returned.
pub fn refine(
    spec: &ScenarioSpec,
    goal: &RefinementGoal,
    _episode: u32,
) -> Result<(ScenarioSpec, Vec<Mutation>)> {
    let mut next = spec.clone();
    let mut mutations = Vec::new();
    let reduce = goal.direction == Direction::ReduceAggression;

    // Knob 1: behavior aggressiveness parameters.
    for adv in next.adversaries.iter_mut() {
        let id = adv.id.clone();
        adv.behavior.visit_atomics_mut(&mut |path, _kind, config| {
            if let Some(value) = config.get("aggressiveness").and_then(|v| v.as_f64()) {
                let step = if reduce { -AGGRESSIVENESS_STEP } else { AGGRESSIVENESS_STEP };
                if let Some(new) = clamp_move(value, value + step, (0.0, 1.0)) {
                    config.insert("aggressiveness".to_string(), ConfigValue::Float(new));
                    mutations.push(Mutation {
                        path: format!("{id}.{path}.aggressiveness"),
                        old: value,
                        new,
                    });
                }
            }
        });
    }

    // Knob 2: placement gaps.
    for adv in next.adversaries.iter_mut() {
        let value = adv.placement.gap;
        let target = if reduce { value * GAP_FACTOR } else { value / GAP_FACTOR };
        if let Some(new) = clamp_move(value, target, GAP_BOUNDS) {
            adv.placement.gap = new;
            mutations.push(Mutation {
                path: format!("{}.placement.gap", adv.id),
                old: value,
                new,
            });
        }
    }

    // Knob 3: trigger gaps.
    for adv in next.adversaries.iter_mut() {
        let id = adv.id.clone();
        adv.behavior.visit_atomics_mut(&mut |path, _kind, config| {
            if let Some(value) = config.get("trigger_gap").and_then(|v| v.as_f64()) {
                let target = if reduce { value * GAP_FACTOR } else { value / GAP_FACTOR };
                if let Some(new) = clamp_move(value, target, GAP_BOUNDS) {
                    config.insert("trigger_gap".to_string(), ConfigValue::Float(new));
                    mutations.push(Mutation {
                        path: format!("{id}.{path}.trigger_gap"),
                        old: value,
                        new,
                    });
                }
            }
        });
    }

    // Knob 4: adversary target speeds.
    for adv in next.adversaries.iter_mut() {
        let id = adv.id.clone();
        adv.behavior.visit_atomics_mut(&mut |path, _kind, config| {
            if let Some(value) = config.get("target_speed").and_then(|v| v.as_f64()) {
                let factor = if reduce { 1.0 - SPEED_STEP } else { 1.0 + SPEED_STEP };
                if let Some(new) = clamp_move(value, value * factor, SPEED_BOUNDS) {
                    config.insert("target_speed".to_string(), ConfigValue::Float(new));
                    mutations.push(Mutation {
                        path: format!("{id}.{path}.target_speed"),
                        old: value,
                        new,
                    });
                }
            }
        });
    }

    if mutations.is_empty() {
        return Err(CoreError::KnobsExhausted);
    }
    Ok((next, mutations))
}

fn revalidate(spec: &ScenarioSpec, registry: &BehaviorRegistry) -> Result<()> {
    let mut violations = validate_cross_references(spec);
    let known: Vec<&str> = std::iter::once(crate::scenario::EGO_ID)
        .chain(spec.adversaries.iter().map(|a| a.id.as_str()))
        .collect();
    for adv in &spec.adversaries {
        violations.extend(registry.validate_tree(
            &adv.behavior,
            &known,
            &format!("adversaries.{}", adv.id),
        ));
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CoreError::Validation { violations })
    }
}

/// The closed loop: simulate, evaluate, and while the metrics miss the
/// intent band nudge the knobs and re-simulate with the same seed. Stops
/// at alignment, knob exhaustion, or after `budget` refinement episodes.
pub fn refine_until_aligned(
    spec: &ScenarioSpec,
    library: &MapLibrary,
    registry: &BehaviorRegistry,
    opts: &RunOptions,
    budget: u32,
) -> Result<(ScenarioSpec, Vec<RefinementEpisodeLog>, MetricsSummary)> {
    let target = AlignmentTarget::for_band(spec.intent.criticality_band);
    let mut current = spec.clone();
    let trace = run_scenario(&current, library, registry, opts)?;
    let mut summary = evaluate(&trace)?;
    let mut logs = Vec::new();
    let mut best = (current.clone(), summary.clone(), band_distance(&summary, &target));

    for episode in 1..=budget {
        let Some(goal) = check_alignment(&summary, &target) else {
            break;
        };
        let (next, mutations) = match refine(&current, &goal, episode) {
            Ok(out) => out,
            Err(CoreError::KnobsExhausted) => break,
            Err(e) => return Err(e),
        };
        revalidate(&next, registry)?;
        let trace = run_scenario(&next, library, registry, opts)?;
        let post = evaluate(&trace)?;
        logs.push(RefinementEpisodeLog {
            episode,
            goal,
            mutations,
            pre: summary,
            post: post.clone(),
        });
        current = next;
        summary = post;
        let distance = band_distance(&summary, &target);
        if distance < best.2 {
            best = (current.clone(), summary.clone(), distance);
        }
    }

    // the mutation response is not monotone, so an unaligned loop can end
    // farther from the band than it started; report the closest state seen
    if check_alignment(&summary, &target).is_some() && best.2 < band_distance(&summary, &target) {
        return Ok((best.0, logs, best.1));
    }

    Ok((current, logs, summary))
}
