//! Natural-language generation front end: a free-text description is
//! elaborated into four layer texts, then each layer is turned into its
//! scenario section by a dedicated step (weather, ego placement,
//! adversary placement, actions, background). Steps run against a
//! backend: the deterministic keyword engine (the reference
//! implementation) or a remote chat-completion model.

pub mod keyword;
pub mod remote;

use crate::behavior::BehaviorRegistry;
use crate::error::{CoreError, Result};
use crate::map::{LaneGraph, LanePosition, MapLibrary};
use crate::scenario::{
    validate_cross_references, AdversarySpec, BackgroundSpec, BehaviorNodeSpec, CriticalityBand,
    DensityProfile, EgoSpec, EnvironmentSpec, IntentSpec, PlacementQuery, Relation,
    RelativePlacement, ScenarioSpec, VehicleClass, WeatherConfig, EGO_ID, SCHEMA_VERSION,
};

pub use keyword::KeywordEngine;

/// The four-layer elaboration of a user description.
#[derive(Debug, Clone, PartialEq)]
pub struct ElaboratedDescription {
    pub general_environment: String,
    pub ego_context: String,
    pub adversarial_plan: String,
    pub background_plan: String,
    pub intent_band: CriticalityBand,
    /// Layer names whose content was improvised because the description
    /// did not mention them.
    pub improvised: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoHints {
    pub placement: PlacementQuery,
    pub target_speed: f64,
}

/// An adversary before map-level placement resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryDraft {
    pub vehicle_class: VehicleClass,
    pub relation: Relation,
    pub gap: f64,
    /// The description segment this adversary was extracted from; the
    /// action step parses maneuvers out of it.
    pub segment: String,
}

/// One generation step provider. Every method is total for the keyword
/// engine; the remote implementation can fail with backend errors.
pub trait GenerationBackend {
    fn interpret(&self, description: &str) -> Result<ElaboratedDescription>;
    fn weather_report(&self, environment_text: &str) -> Result<WeatherConfig>;
    fn locate_ego(&self, ego_text: &str) -> Result<EgoHints>;
    fn locate_adversaries(&self, adversarial_text: &str) -> Result<Vec<AdversaryDraft>>;
    fn generate_actions(
        &self,
        adversarial_text: &str,
        drafts: &[AdversaryDraft],
        ids: &[String],
    ) -> Result<Vec<BehaviorNodeSpec>>;
    fn make_chaos(&self, background_text: &str) -> Result<BackgroundSpec>;
}

/// Placement relaxation order when the requested relation cannot be
/// satisfied on the chosen map.
pub const RELATION_FALLBACK: [Relation; 4] =
    [Relation::Behind, Relation::Ahead, Relation::Left, Relation::Right];

pub fn map_for_placement(placement: PlacementQuery) -> &'static str {
    match placement {
        PlacementQuery::StraightLane => "highway",
        PlacementQuery::IntersectionApproach => "crossroad",
        PlacementQuery::Curve => "curve",
    }
}

/// A record of what the pipeline had to adjust to keep the scenario
/// feasible on the chosen map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationNotes {
    pub improvised_layers: Vec<String>,
    /// (adversary id, requested relation, applied relation)
    pub relaxed_placements: Vec<(String, Relation, Relation)>,
    /// Some((requested, applied)) when the background count was clamped.
    pub clamped_background: Option<(u32, u32)>,
}

/// Full pipeline: description text to a validated scenario document.
pub fn generate_scenario(
    description: &str,
    seed: u64,
    library: &MapLibrary,
    registry: &BehaviorRegistry,
    backend: &dyn GenerationBackend,
) -> Result<(ScenarioSpec, GenerationNotes)> {
    if description.trim().is_empty() {
        return Err(CoreError::Other("description must be nonempty".to_string()));
    }
    if seed > i64::MAX as u64 {
        // TOML integers are i64; larger seeds cannot be written back out
        return Err(CoreError::Other(format!(
            "seed {seed} exceeds the largest document-representable seed {}",
            i64::MAX
        )));
    }
    let parts = backend.interpret(description)?;
    let weather = backend.weather_report(&parts.general_environment)?;
    let ego_hints = backend.locate_ego(&parts.ego_context)?;
    let map_id = map_for_placement(ego_hints.placement);
    let map = library.get(map_id)?;
    let ego_pos = map.find_ego_spawn(ego_hints.placement, seed)?;

    let mut notes = GenerationNotes {
        improvised_layers: parts.improvised.clone(),
        ..GenerationNotes::default()
    };

    let mut drafts = backend.locate_adversaries(&parts.adversarial_plan)?;
    let mut ids = Vec::new();
    let mut counters = std::collections::BTreeMap::new();
    for d in &drafts {
        let base = match d.vehicle_class {
            VehicleClass::Sedan => "sedan",
            VehicleClass::Van => "van",
            VehicleClass::Truck => "truck",
        };
        let n = counters.entry(base).or_insert(0usize);
        ids.push(format!("{base}_{n}"));
        *n += 1;
    }
    for (d, id) in drafts.iter_mut().zip(&ids) {
        let applied = resolve_with_fallback(&map, &ego_pos, d)?;
        if applied != d.relation {
            notes
                .relaxed_placements
                .push((id.clone(), d.relation, applied));
            d.relation = applied;
        }
    }

    let behaviors = backend.generate_actions(&parts.adversarial_plan, &drafts, &ids)?;
    if behaviors.len() != drafts.len() {
        return Err(CoreError::Other(format!(
            "action step produced {} trees for {} adversaries",
            behaviors.len(),
            drafts.len()
        )));
    }

    let mut background = backend.make_chaos(&parts.background_plan)?;
    let cap = background_capacity(&map, &ego_pos, background.spawn_radius);
    if background.count > cap {
        notes.clamped_background = Some((background.count, cap));
        background.count = cap;
        if cap == 0 {
            background.density_profile = DensityProfile::None;
        }
    }

    let adversaries = drafts
        .into_iter()
        .zip(ids.iter())
        .zip(behaviors)
        .map(|((d, id), behavior)| AdversarySpec {
            id: id.clone(),
            vehicle_class: d.vehicle_class,
            placement: RelativePlacement {
                relation: d.relation,
                gap: d.gap,
            },
            behavior,
        })
        .collect();

    let spec = ScenarioSpec {
        schema_version: SCHEMA_VERSION,
        seed,
        adversaries,
        environment: EnvironmentSpec {
            map_id: map_id.to_string(),
            weather,
        },
        ego: EgoSpec {
            placement: ego_hints.placement,
            target_speed: ego_hints.target_speed,
            controller: "defensive".to_string(),
        },
        background,
        intent: IntentSpec {
            criticality_band: parts.intent_band,
            narrative: description.trim().to_string(),
        },
    };

    let mut violations = validate_cross_references(&spec);
    let known: Vec<&str> = std::iter::once(EGO_ID)
        .chain(spec.adversaries.iter().map(|a| a.id.as_str()))
        .collect();
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
    Ok((spec, notes))
}

fn resolve_with_fallback(
    map: &LaneGraph,
    ego_pos: &LanePosition,
    draft: &AdversaryDraft,
) -> Result<Relation> {
    let min_gap = (4.5 + draft.vehicle_class.footprint().0) * 0.5 + 1.0;
    let attempt = |relation: Relation| {
        map.resolve_relative_placement(
            ego_pos,
            &RelativePlacement {
                relation,
                gap: draft.gap,
            },
            min_gap,
        )
    };
    match attempt(draft.relation) {
        Ok(_) => Ok(draft.relation),
        Err(original) => {
            for relation in RELATION_FALLBACK {
                if relation == draft.relation {
                    continue;
                }
                if attempt(relation).is_ok() {
                    return Ok(relation);
                }
            }
            Err(original)
        }
    }
}

/// Rough feasible roamer count: reachable lane length near the ego at one
/// vehicle per 25 m.
fn background_capacity(map: &LaneGraph, ego_pos: &LanePosition, radius: f64) -> u32 {
    let anchor = match map.lane(&ego_pos.lane_id) {
        Ok(lane) => lane.point_at(ego_pos.s),
        Err(_) => return 0,
    };
    let mut total = 0.0;
    for lane in map.lanes() {
        let s = lane.project(anchor);
        if (lane.point_at(s) - anchor).length() <= radius {
            total += lane.length().min(2.0 * radius);
        }
    }
    (total / 25.0).floor() as u32
}
