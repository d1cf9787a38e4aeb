//! The four-layer scenario description, its on-disk TOML format and the
//! structural validation every other module relies on.
//!
//! The document format is documented in `docs/scenario_format.md`; the
//! golden corpus under `assets/scenarios/` is the reference for what a
//! well-formed document looks like.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result, Violation};

/// Reserved identifier for the vehicle under test.
pub const EGO_ID: &str = "ego";

/// Current major version of the scenario document schema. Parsers reject
/// documents with a newer major version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default)]
    pub adversaries: Vec<AdversarySpec>,
    pub environment: EnvironmentSpec,
    pub ego: EgoSpec,
    pub background: BackgroundSpec,
    pub intent: IntentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub map_id: String,
    pub weather: WeatherConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherConfig {
    pub precipitation: f64,
    pub fog_density: f64,
    /// Hour of day in [0, 24).
    pub time_of_day: f64,
    pub friction_multiplier: f64,
}

impl Default for WeatherConfig {
    fn default() -> Self {
        WeatherConfig {
            precipitation: 0.0,
            fog_density: 0.0,
            time_of_day: 12.0,
            friction_multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementQuery {
    StraightLane,
    IntersectionApproach,
    Curve,
}

impl std::fmt::Display for PlacementQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PlacementQuery::StraightLane => "straight-lane",
            PlacementQuery::IntersectionApproach => "intersection-approach",
            PlacementQuery::Curve => "curve",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    pub placement: PlacementQuery,
    pub target_speed: f64,
    pub controller: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Sedan,
    Van,
    Truck,
}

impl VehicleClass {
    /// Footprint as length x width in metres.
    pub fn footprint(self) -> (f64, f64) {
        match self {
            VehicleClass::Sedan => (4.5, 1.9),
            VehicleClass::Van => (5.2, 2.0),
            VehicleClass::Truck => (8.0, 2.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Left,
    Right,
    Behind,
    Ahead,
    OppositeApproach,
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Relation::Left => "left",
            Relation::Right => "right",
            Relation::Behind => "behind",
            Relation::Ahead => "ahead",
            Relation::OppositeApproach => "opposite-approach",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelativePlacement {
    pub relation: Relation,
    /// Longitudinal gap to the ego, metres.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub id: String,
    pub vehicle_class: VehicleClass,
    pub placement: RelativePlacement,
    pub behavior: BehaviorNodeSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityProfile {
    None,
    Sparse,
    Heavy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    pub count: u32,
    pub spawn_radius: f64,
    pub density_profile: DensityProfile,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec {
            count: 0,
            spawn_radius: 120.0,
            density_profile: DensityProfile::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalityBand {
    Safe,
    Moderate,
    DangerousNoCollision,
    CollisionExpected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentSpec {
    pub criticality_band: CriticalityBand,
    pub narrative: String,
}

/// A value inside a behavior configuration map. Vehicle references are
/// plain strings resolved against the declared vehicle ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl ConfigValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ConfigValue::Int(i) => Some(*i as f64),
            ConfigValue::Float(f) => Some(*f),
            ConfigValue::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ConfigValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

pub type ConfigMap = BTreeMap<String, ConfigValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum BehaviorNodeSpec {
    Atomic {
        kind: String,
        #[serde(default)]
        config: ConfigMap,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        success: Option<ConditionSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fail: Option<ConditionSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout: Option<f64>,
    },
    Sequential {
        children: Vec<BehaviorNodeSpec>,
    },
    Concurrent {
        policy: ConcurrentPolicy,
        children: Vec<BehaviorNodeSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcurrentPolicy {
    AllSucceed,
    AnySucceeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "when", rename_all = "snake_case")]
pub enum ConditionSpec {
    /// Own speed strictly below `limit` m/s.
    SpeedBelow { limit: f64 },
    /// Own lane binding equals the referenced vehicle's.
    SameLaneAs { vehicle: String },
    /// Signed route gap to `vehicle` (positive when it is ahead of us)
    /// strictly below `gap` metres.
    GapBelow { vehicle: String, gap: f64 },
    /// Distance travelled since the behavior started exceeds `distance`.
    PassedPosition { distance: f64 },
    /// Seconds since the behavior started.
    Elapsed { seconds: f64 },
    All { conditions: Vec<ConditionSpec> },
    Any { conditions: Vec<ConditionSpec> },
    Not { condition: Box<ConditionSpec> },
}

impl BehaviorNodeSpec {
    pub fn atomic(kind: &str, config: ConfigMap) -> Self {
        BehaviorNodeSpec::Atomic {
            kind: kind.to_string(),
            config,
            success: None,
            fail: None,
            timeout: None,
        }
    }

    pub fn with_success(self, cond: ConditionSpec) -> Self {
        match self {
            BehaviorNodeSpec::Atomic {
                kind,
                config,
                fail,
                timeout,
                ..
            } => BehaviorNodeSpec::Atomic {
                kind,
                config,
                success: Some(cond),
                fail,
                timeout,
            },
            other => other,
        }
    }

    pub fn with_timeout(self, seconds: f64) -> Self {
        match self {
            BehaviorNodeSpec::Atomic {
                kind,
                config,
                success,
                fail,
                ..
            } => BehaviorNodeSpec::Atomic {
                kind,
                config,
                success,
                fail,
                timeout: Some(seconds),
            },
            other => other,
        }
    }

    /// Depth-first visit of every atomic node, with its path.
    pub fn visit_atomics<'a>(&'a self, f: &mut dyn FnMut(&str, &'a str, &'a ConfigMap)) {
        fn walk<'a>(
            node: &'a BehaviorNodeSpec,
            path: String,
            f: &mut dyn FnMut(&str, &'a str, &'a ConfigMap),
        ) {
            match node {
                BehaviorNodeSpec::Atomic { kind, config, .. } => f(&path, kind, config),
                BehaviorNodeSpec::Sequential { children }
                | BehaviorNodeSpec::Concurrent { children, .. } => {
                    for (i, c) in children.iter().enumerate() {
                        walk(c, format!("{path}.children[{i}]"), f);
                    }
                }
            }
        }
        walk(self, "behavior".to_string(), f);
    }

    /// Mutable counterpart of [`Self::visit_atomics`], used by the refiner
    /// to adjust numeric knobs in place.
    pub fn visit_atomics_mut(&mut self, f: &mut dyn FnMut(&str, &str, &mut ConfigMap)) {
        fn walk(node: &mut BehaviorNodeSpec, path: String, f: &mut dyn FnMut(&str, &str, &mut ConfigMap)) {
            match node {
                BehaviorNodeSpec::Atomic { kind, config, .. } => f(&path, kind, config),
                BehaviorNodeSpec::Sequential { children }
                | BehaviorNodeSpec::Concurrent { children, .. } => {
                    for (i, c) in children.iter_mut().enumerate() {
                        walk(c, format!("{path}.children[{i}]"), f);
                    }
                }
            }
        }
        walk(self, "behavior".to_string(), f);
    }
}

impl ConditionSpec {
    /// Vehicle ids referenced anywhere in the condition.
    pub fn referenced_vehicles(&self) -> Vec<&str> {
        let mut out = Vec::new();
        fn walk<'a>(c: &'a ConditionSpec, out: &mut Vec<&'a str>) {
            match c {
                ConditionSpec::SameLaneAs { vehicle } | ConditionSpec::GapBelow { vehicle, .. } => {
                    out.push(vehicle.as_str())
                }
                ConditionSpec::All { conditions } | ConditionSpec::Any { conditions } => {
                    for c in conditions {
                        walk(c, out)
                    }
                }
                ConditionSpec::Not { condition } => walk(condition, out),
                _ => {}
            }
        }
        walk(self, &mut out);
        out
    }
}

/// Parse a scenario document, enforcing the schema version and all
/// structural invariants. Syntax errors carry the position reported by the
/// underlying TOML parser.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let spec: ScenarioSpec = toml::from_str(text).map_err(|e| CoreError::Syntax {
        what: "scenario document".to_string(),
        message: e.to_string(),
    })?;
    if spec.schema_version > SCHEMA_VERSION {
        return Err(CoreError::Syntax {
            what: "scenario document".to_string(),
            message: format!(
                "schema_version {} is newer than supported version {}",
                spec.schema_version, SCHEMA_VERSION
            ),
        });
    }
    let violations = validate_cross_references(&spec);
    if !violations.is_empty() {
        return Err(CoreError::Validation { violations });
    }
    Ok(spec)
}

/// Canonical serialization: stable field order, sorted config keys, so a
/// textual diff between two documents reflects their semantic diff.
pub fn serialize_scenario(spec: &ScenarioSpec) -> String {
    toml::to_string(spec).expect("invariant-satisfying specs always serialize")
}

/// Structural and range validation. Violations are data, not failures;
/// behavior-kind schemas are checked separately by the registry.
pub fn validate_cross_references(spec: &ScenarioSpec) -> Vec<Violation> {
    let mut out = Vec::new();

    let w = &spec.environment.weather;
    let frac = |v: f64| (0.0..=1.0).contains(&v);
    if !frac(w.precipitation) {
        out.push(Violation::new(
            "environment.weather.precipitation",
            "must be in [0, 1]",
        ));
    }
    if !frac(w.fog_density) {
        out.push(Violation::new(
            "environment.weather.fog_density",
            "must be in [0, 1]",
        ));
    }
    if !(0.0..24.0).contains(&w.time_of_day) {
        out.push(Violation::new(
            "environment.weather.time_of_day",
            "must be in [0, 24)",
        ));
    }
    if !(w.friction_multiplier > 0.0 && w.friction_multiplier <= 1.0) {
        out.push(Violation::new(
            "environment.weather.friction_multiplier",
            "must be in (0, 1]",
        ));
    }

    if !(spec.ego.target_speed > 0.0) {
        out.push(Violation::new("ego.target_speed", "must be > 0"));
    }

    // Unique ids, distinct from the reserved ego id.
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, adv) in spec.adversaries.iter().enumerate() {
        if adv.id == EGO_ID {
            out.push(Violation::new(
                format!("adversaries[{i}].id"),
                format!("'{EGO_ID}' is reserved for the ego vehicle"),
            ));
        }
        if let Some(prev) = seen.insert(adv.id.as_str(), i) {
            out.push(Violation::new(
                format!("adversaries[{i}].id"),
                format!("duplicate id '{}' (also declared at adversaries[{prev}])", adv.id),
            ));
        }
        if adv.placement.gap < 0.0 {
            out.push(Violation::new(
                format!("adversaries[{i}].placement.gap"),
                "must be >= 0",
            ));
        }
    }

    let known: Vec<&str> = std::iter::once(EGO_ID)
        .chain(spec.adversaries.iter().map(|a| a.id.as_str()))
        .collect();

    for (i, adv) in spec.adversaries.iter().enumerate() {
        validate_node(&adv.behavior, &format!("adversaries[{i}].behavior"), &known, &mut out);
    }

    let zero = spec.background.count == 0;
    let none = spec.background.density_profile == DensityProfile::None;
    if zero != none {
        out.push(Violation::new(
            "background.count",
            "count must be 0 exactly when density_profile is 'none'",
        ));
    }
    if spec.background.spawn_radius <= 0.0 {
        out.push(Violation::new("background.spawn_radius", "must be > 0"));
    }

    out
}

fn validate_node(
    node: &BehaviorNodeSpec,
    path: &str,
    known: &[&str],
    out: &mut Vec<Violation>,
) {
    match node {
        BehaviorNodeSpec::Atomic {
            config,
            success,
            fail,
            timeout,
            ..
        } => {
            if let Some(t) = timeout {
                if !(*t > 0.0) {
                    out.push(Violation::new(format!("{path}.timeout"), "must be > 0"));
                }
            }
            // Vehicle references in config values: any text value naming a
            // known vehicle is fine; the registry decides which keys must be
            // references. Here we only check conditions, which are explicit.
            for (label, cond) in [("success", success), ("fail", fail)] {
                if let Some(cond) = cond {
                    for v in cond.referenced_vehicles() {
                        if !known.contains(&v) {
                            out.push(Violation::new(
                                format!("{path}.{label}"),
                                format!("references undeclared vehicle '{v}'"),
                            ));
                        }
                    }
                }
            }
            let _ = config;
        }
        BehaviorNodeSpec::Sequential { children } => {
            if children.is_empty() {
                out.push(Violation::new(path.to_string(), "sequential node has no children"));
            }
            for (i, c) in children.iter().enumerate() {
                validate_node(c, &format!("{path}.children[{i}]"), known, out);
            }
        }
        BehaviorNodeSpec::Concurrent { children, .. } => {
            if children.is_empty() {
                out.push(Violation::new(path.to_string(), "concurrent node has no children"));
            }
            for (i, c) in children.iter().enumerate() {
                validate_node(c, &format!("{path}.children[{i}]"), known, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_doc() -> &'static str {
        r#"
schema_version = 1
seed = 7

[environment]
map_id = "highway"
[environment.weather]
precipitation = 0.0
fog_density = 0.0
time_of_day = 12.0
friction_multiplier = 1.0

[ego]
placement = "straight-lane"
target_speed = 15.0
controller = "defensive"

[background]
count = 0
spawn_radius = 120.0
density_profile = "none"

[intent]
criticality_band = "safe"
narrative = "empty road"
"#
    }

    #[test]
    fn minimal_document_parses() {
        let spec = parse_scenario(minimal_doc()).unwrap();
        assert!(spec.adversaries.is_empty());
        assert_eq!(spec.background.count, 0);
        assert_eq!(spec.seed, 7);
    }

    #[test]
    fn roundtrip_identity_on_minimal() {
        let spec = parse_scenario(minimal_doc()).unwrap();
        let text = serialize_scenario(&spec);
        let again = parse_scenario(&text).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn unknown_field_rejected() {
        let doc = minimal_doc().replace("[ego]", "[ego]\nwarp_drive = true");
        assert!(matches!(parse_scenario(&doc), Err(CoreError::Syntax { .. })));
    }

    #[test]
    fn newer_major_rejected() {
        let doc = minimal_doc().replace("schema_version = 1", "schema_version = 2");
        assert!(parse_scenario(&doc).is_err());
    }

    #[test]
    fn undeclared_vehicle_reference_is_reported() {
        let mut spec = parse_scenario(minimal_doc()).unwrap();
        spec.adversaries.push(AdversarySpec {
            id: "truck_1".to_string(),
            vehicle_class: VehicleClass::Truck,
            placement: RelativePlacement {
                relation: Relation::Left,
                gap: 10.0,
            },
            behavior: BehaviorNodeSpec::atomic("cut_in", ConfigMap::new())
                .with_success(ConditionSpec::SameLaneAs {
                    vehicle: "sedan_9".to_string(),
                }),
        });
        let violations = validate_cross_references(&spec);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("sedan_9"));
    }

    #[test]
    fn duplicate_adversary_id_names_both_declarations() {
        let mut spec = parse_scenario(minimal_doc()).unwrap();
        for _ in 0..2 {
            spec.adversaries.push(AdversarySpec {
                id: "truck_1".to_string(),
                vehicle_class: VehicleClass::Truck,
                placement: RelativePlacement {
                    relation: Relation::Behind,
                    gap: 10.0,
                },
                behavior: BehaviorNodeSpec::atomic("follow_route", ConfigMap::new()),
            });
        }
        let violations = validate_cross_references(&spec);
        let dup: Vec<_> = violations
            .iter()
            .filter(|v| v.message.contains("duplicate"))
            .collect();
        assert_eq!(dup.len(), 1);
        assert!(dup[0].message.contains("adversaries[0]"));
        assert!(dup[0].path.contains("adversaries[1]"));
    }

    #[test]
    fn negative_gap_is_a_range_violation() {
        let mut spec = parse_scenario(minimal_doc()).unwrap();
        spec.adversaries.push(AdversarySpec {
            id: "a".to_string(),
            vehicle_class: VehicleClass::Sedan,
            placement: RelativePlacement {
                relation: Relation::Behind,
                gap: -5.0,
            },
            behavior: BehaviorNodeSpec::atomic("follow_route", ConfigMap::new()),
        });
        let violations = validate_cross_references(&spec);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].path.contains("placement.gap"));
    }

    #[test]
    fn empty_adversaries_serialized_explicitly() {
        let spec = parse_scenario(minimal_doc()).unwrap();
        let text = serialize_scenario(&spec);
        assert!(text.contains("adversaries = []"), "{text}");
    }

    #[test]
    fn nested_behavior_tree_roundtrips() {
        let mut spec = parse_scenario(minimal_doc()).unwrap();
        let mut cfg = ConfigMap::new();
        cfg.insert("target".to_string(), ConfigValue::Text(EGO_ID.to_string()));
        cfg.insert("aggressiveness".to_string(), ConfigValue::Float(0.8));
        spec.adversaries.push(AdversarySpec {
            id: "truck_1".to_string(),
            vehicle_class: VehicleClass::Truck,
            placement: RelativePlacement {
                relation: Relation::Left,
                gap: 15.0,
            },
            behavior: BehaviorNodeSpec::Sequential {
                children: vec![
                    BehaviorNodeSpec::atomic("cut_in", cfg).with_success(
                        ConditionSpec::SameLaneAs {
                            vehicle: EGO_ID.to_string(),
                        },
                    ),
                    BehaviorNodeSpec::Concurrent {
                        policy: ConcurrentPolicy::AllSucceed,
                        children: vec![
                            BehaviorNodeSpec::atomic("sudden_brake", ConfigMap::new())
                                .with_success(ConditionSpec::SpeedBelow { limit: 0.01 }),
                        ],
                    },
                ],
            },
        });
        let text = serialize_scenario(&spec);
        let again = parse_scenario(&text).unwrap();
        assert_eq!(spec, again);
    }
}
