//! The deterministic keyword-template engine: a rule table over lowercase
//! substrings. It is the reference backend for CI and acceptance runs,
//! not a mock; every rule is an artifact constant.

use super::{AdversaryDraft, EgoHints, ElaboratedDescription, GenerationBackend};
use crate::error::Result;
use crate::scenario::{
    BackgroundSpec, BehaviorNodeSpec, ConditionSpec, ConfigMap, ConfigValue, CriticalityBand,
    DensityProfile, PlacementQuery, Relation, VehicleClass, WeatherConfig, EGO_ID,
};

#[derive(Debug, Clone, Default)]
pub struct KeywordEngine;

const DANGEROUS_CUES: [&str; 4] = ["aggressively", "suddenly", "ignores", "ignoring"];
const SAFE_CUES: [&str; 3] = ["decent", "remotely", "quiet"];

const ENV_CUES: [&str; 8] = [
    "rainy", "misty", "foggy", "beautiful", "sunny", "morning", "night", "day",
];
const EGO_CUES: [&str; 7] = [
    "crossroad", "intersection", "curved", "curve", "highway", "straight", "road",
];
const BACKGROUND_CUES: [&str; 4] = ["traffic", "no one", "quiet", "busy"];

fn clauses(text: &str) -> Vec<String> {
    text.split(|c| c == ',' || c == '.' || c == ';')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn matching(clauses: &[String], cues: &[&str]) -> Vec<String> {
    clauses
        .iter()
        .filter(|c| {
            let low = c.to_lowercase();
            cues.iter().any(|cue| low.contains(cue))
        })
        .cloned()
        .collect()
}

fn band_of(text: &str) -> CriticalityBand {
    let low = text.to_lowercase();
    if DANGEROUS_CUES.iter().any(|c| low.contains(c)) {
        CriticalityBand::DangerousNoCollision
    } else if SAFE_CUES.iter().any(|c| low.contains(c)) {
        CriticalityBand::Safe
    } else {
        CriticalityBand::Moderate
    }
}

fn cfg(entries: &[(&str, ConfigValue)]) -> ConfigMap {
    entries
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn num(x: f64) -> ConfigValue {
    ConfigValue::Float(x)
}

fn ego_ref() -> ConfigValue {
    ConfigValue::Text(EGO_ID.to_string())
}

impl GenerationBackend for KeywordEngine {
    fn interpret(&self, description: &str) -> Result<ElaboratedDescription> {
        let parts = clauses(description);
        let mut improvised = Vec::new();

        let env = matching(&parts, &ENV_CUES);
        let general_environment = if env.is_empty() {
            improvised.push("general_environment".to_string());
            "a clear day".to_string()
        } else {
            env.join(", ")
        };

        let ego = matching(&parts, &EGO_CUES);
        let ego_context = if ego.is_empty() {
            improvised.push("ego_context".to_string());
            "on a straight multi-lane road".to_string()
        } else {
            ego.join(", ")
        };

        // the adversarial plan runs from the first vehicle mention onwards
        let low = description.to_lowercase();
        let first_vehicle = ["sedan", "truck", "van"]
            .iter()
            .filter_map(|w| low.find(w))
            .min();
        let adversarial_plan = match first_vehicle {
            Some(i) => description[i..].trim().to_string(),
            None => {
                improvised.push("adversarial_plan".to_string());
                "no adversarial vehicles".to_string()
            }
        };

        let bg = matching(&parts, &BACKGROUND_CUES);
        let background_plan = if bg.is_empty() {
            improvised.push("background_plan".to_string());
            "sparse ordinary traffic".to_string()
        } else {
            bg.join(", ")
        };

        Ok(ElaboratedDescription {
            general_environment,
            ego_context,
            adversarial_plan,
            background_plan,
            intent_band: band_of(description),
            improvised,
        })
    }

    fn weather_report(&self, environment_text: &str) -> Result<WeatherConfig> {
        let low = environment_text.to_lowercase();
        let mut weather = WeatherConfig::default();
        // first matching rule wins
        if low.contains("rainy") {
            weather.precipitation = 0.8;
            weather.friction_multiplier = 0.7;
        } else if low.contains("misty") || low.contains("foggy") {
            weather.fog_density = 0.6;
        } else if low.contains("beautiful day") || low.contains("sunny") {
            weather.precipitation = 0.0;
            weather.friction_multiplier = 1.0;
        }
        if low.contains("morning") {
            weather.time_of_day = 8.0;
        } else if low.contains("night") {
            weather.time_of_day = 22.0;
        }
        Ok(weather)
    }

    fn locate_ego(&self, ego_text: &str) -> Result<EgoHints> {
        let low = ego_text.to_lowercase();
        let (placement, target_speed) = if low.contains("crossroad") || low.contains("intersection")
        {
            (PlacementQuery::IntersectionApproach, 12.0)
        } else if low.contains("curve") || low.contains("curved") {
            (PlacementQuery::Curve, 16.0)
        } else {
            (PlacementQuery::StraightLane, 20.0)
        };
        Ok(EgoHints {
            placement,
            target_speed,
        })
    }

    fn locate_adversaries(&self, adversarial_text: &str) -> Result<Vec<AdversaryDraft>> {
        let low = adversarial_text.to_lowercase();
        // one adversary per vehicle-class mention; its segment runs to the
        // next mention
        let mut mentions: Vec<(usize, VehicleClass)> = Vec::new();
        for (word, class) in [
            ("sedan", VehicleClass::Sedan),
            ("truck", VehicleClass::Truck),
            ("van", VehicleClass::Van),
        ] {
            let mut start = 0;
            while let Some(i) = low[start..].find(word) {
                mentions.push((start + i, class));
                start += i + word.len();
            }
        }
        mentions.sort_by_key(|(i, _)| *i);

        let mut drafts = Vec::new();
        for (k, (begin, class)) in mentions.iter().enumerate() {
            let end = mentions
                .get(k + 1)
                .map(|(i, _)| *i)
                .unwrap_or(low.len());
            let segment = low[*begin..end].to_string();
            let (relation, default_gap) = if segment.contains("entrance") {
                (Relation::OppositeApproach, 55.0)
            } else if segment.contains("behind") || segment.contains("follow") {
                (Relation::Behind, 12.0)
            } else if segment.contains("ahead") || segment.contains("in front") {
                (Relation::Ahead, 18.0)
            } else if segment.contains("on the left") {
                (Relation::Left, 8.0)
            } else if segment.contains("on the right") {
                (Relation::Right, 8.0)
            } else {
                (Relation::Behind, 15.0)
            };
            let gap = if segment.contains("very closely") {
                5.0
            } else if segment.contains("remotely") {
                25.0
            } else {
                default_gap
            };
            drafts.push(AdversaryDraft {
                vehicle_class: *class,
                relation,
                gap,
                segment,
            });
        }
        Ok(drafts)
    }

    fn generate_actions(
        &self,
        _adversarial_text: &str,
        drafts: &[AdversaryDraft],
        _ids: &[String],
    ) -> Result<Vec<BehaviorNodeSpec>> {
        Ok(drafts.iter().map(|d| actions_for(&d.segment)).collect())
    }

    fn make_chaos(&self, background_text: &str) -> Result<BackgroundSpec> {
        let low = background_text.to_lowercase();
        let (density_profile, count) = if low.contains("no one") {
            (DensityProfile::None, 0)
        } else if low.contains("heavy") {
            (DensityProfile::Heavy, 12)
        } else {
            (DensityProfile::Sparse, 4)
        };
        Ok(BackgroundSpec {
            count,
            spawn_radius: 120.0,
            density_profile,
        })
    }
}

fn aggressiveness_of(segment: &str) -> f64 {
    if segment.contains("aggressively") {
        1.0
    } else if segment.contains("decent") {
        0.0
    } else {
        0.5
    }
}

fn actions_for(segment: &str) -> BehaviorNodeSpec {
    let g = aggressiveness_of(segment);

    if segment.contains("red light") {
        return BehaviorNodeSpec::Sequential {
            children: vec![
                BehaviorNodeSpec::atomic("run_red_light", cfg(&[("target_speed", num(13.0))]))
                    .with_success(ConditionSpec::PassedPosition { distance: 120.0 }),
                BehaviorNodeSpec::atomic("follow_route", ConfigMap::new()),
            ],
        };
    }

    // "without fully overtaking" and similar negations skip the overtake
    // phase and go straight to the cut-in
    if segment.contains("overtak") && !segment.contains("without") {
        // calm drivers merge back early, with plenty of room, and keep
        // their speed up so the gap opens instead of closing
        let (trigger, merge_speed) = if g == 0.0 { (16.0, Some(26.0)) } else { (10.0, None) };
        let mut children = vec![
            BehaviorNodeSpec::atomic(
                "overtake",
                cfg(&[("target", ego_ref()), ("aggressiveness", num(g))]),
            )
            .with_success(ConditionSpec::GapBelow {
                vehicle: EGO_ID.to_string(),
                gap: -6.0,
            })
            .with_timeout(15.0),
            BehaviorNodeSpec::atomic(
                "cut_in",
                {
                    let mut c = cfg(&[
                        ("target", ego_ref()),
                        ("trigger_gap", num(trigger)),
                        ("aggressiveness", num(g)),
                    ]);
                    if let Some(speed) = merge_speed {
                        c.insert("target_speed".to_string(), num(speed));
                    }
                    c
                },
            )
            .with_success(ConditionSpec::SameLaneAs {
                vehicle: EGO_ID.to_string(),
            })
            .with_timeout(12.0),
        ];
        if segment.contains("brake") {
            children.push(
                BehaviorNodeSpec::atomic("sudden_brake", cfg(&[("deceleration", num(8.0))]))
                    .with_success(ConditionSpec::SpeedBelow { limit: 0.5 }),
            );
        }
        children.push(BehaviorNodeSpec::atomic("follow_route", ConfigMap::new()));
        return BehaviorNodeSpec::Sequential { children };
    }

    if segment.contains("brake") {
        let after = if segment.contains("idle") {
            BehaviorNodeSpec::atomic("idle_hold", ConfigMap::new())
        } else {
            BehaviorNodeSpec::atomic("follow_route", ConfigMap::new())
        };
        return BehaviorNodeSpec::Sequential {
            children: vec![
                BehaviorNodeSpec::atomic("follow_route", cfg(&[("target_speed", num(14.0))]))
                    .with_success(ConditionSpec::Elapsed { seconds: 6.0 }),
                BehaviorNodeSpec::atomic("sudden_brake", cfg(&[("deceleration", num(8.0))]))
                    .with_success(ConditionSpec::SpeedBelow { limit: 0.2 }),
                after,
            ],
        };
    }

    if segment.contains("turn") || segment.contains("cut") {
        let g = if segment.contains("ignor") { 1.0 } else { g };
        return BehaviorNodeSpec::Sequential {
            children: vec![
                BehaviorNodeSpec::atomic(
                    "cut_in",
                    cfg(&[
                        ("target", ego_ref()),
                        ("trigger_gap", num(4.0)),
                        ("aggressiveness", num(g)),
                    ]),
                )
                .with_success(ConditionSpec::SameLaneAs {
                    vehicle: EGO_ID.to_string(),
                })
                .with_timeout(15.0),
                BehaviorNodeSpec::atomic("follow_route", ConfigMap::new()),
            ],
        };
    }

    if segment.contains("follow") {
        let g = if segment.contains("very closely") {
            1.0
        } else if segment.contains("remotely") {
            0.1
        } else {
            0.5
        };
        return BehaviorNodeSpec::atomic(
            "follow_vehicle",
            cfg(&[
                ("target", ego_ref()),
                ("target_speed", num(24.0)),
                ("aggressiveness", num(g)),
            ]),
        );
    }

    BehaviorNodeSpec::atomic("follow_route", ConfigMap::new())
}
