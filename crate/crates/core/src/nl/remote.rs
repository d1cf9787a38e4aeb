//! Remote chat-completion backend: each generation step sends a prompt
//! template plus the layer text, requires a JSON answer matching the
//! step's schema, and retries a bounded number of times before failing
//! loudly. Model outputs are never trusted raw.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{AdversaryDraft, EgoHints, ElaboratedDescription, GenerationBackend};
use crate::error::{CoreError, Result};
use crate::scenario::{
    BackgroundSpec, BehaviorNodeSpec, CriticalityBand, DensityProfile, PlacementQuery, Relation,
    VehicleClass, WeatherConfig,
};

pub const PROMPT_INTERPRETER: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/prompts/interpreter.txt"));
pub const PROMPT_WEATHER: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/prompts/weather_report.txt"));
pub const PROMPT_EGO: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/prompts/ego_locator.txt"));
pub const PROMPT_ADVERSARIES: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../assets/prompts/adversary_locator.txt"
));
pub const PROMPT_ACTIONS: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../assets/prompts/action_generator.txt"
));
pub const PROMPT_CHAOS: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/prompts/chaos_maker.txt"));

pub const DEFAULT_MAX_RETRIES: u32 = 3;

/// Wire configuration for a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Bearer token; usually injected from the environment, never stored
    /// in run artifacts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_token: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_temperature() -> f64 {
    0.2
}

fn default_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}

/// Minimal chat interface: system prompt plus one user message, text out.
pub trait ChatModel {
    fn complete(&self, system: &str, user: &str) -> Result<String>;
}

/// Blocking HTTP client for an OpenAI-style chat-completions endpoint.
pub struct HttpChatModel {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<WireMessage<'a>>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    content: String,
}

impl HttpChatModel {
    pub fn new(config: RemoteConfig) -> Self {
        HttpChatModel {
            config,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl ChatModel for HttpChatModel {
    fn complete(&self, system: &str, user: &str) -> Result<String> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = WireRequest {
            model: &self.config.model,
            temperature: self.config.temperature,
            messages: vec![
                WireMessage {
                    role: "system",
                    content: system,
                },
                WireMessage {
                    role: "user",
                    content: user,
                },
            ],
        };
        let mut req = self.client.post(&url).json(&body);
        if let Some(token) = &self.config.api_token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| CoreError::BackendUnreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(CoreError::BackendUnreachable(format!(
                "{url} returned {}",
                resp.status()
            )));
        }
        let parsed: WireResponse = resp
            .json()
            .map_err(|e| CoreError::BackendUnreachable(e.to_string()))?;
        parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| CoreError::BackendUnreachable("empty choices".to_string()))
    }
}

/// Generation backend driving any [`ChatModel`] with schema-validated
/// retries.
pub struct RemoteBackend<M: ChatModel> {
    model: M,
    max_retries: u32,
}

impl<M: ChatModel> RemoteBackend<M> {
    pub fn new(model: M, max_retries: u32) -> Self {
        RemoteBackend {
            model,
            max_retries: max_retries.max(1),
        }
    }

    fn ask<T: DeserializeOwned>(
        &self,
        system: &str,
        user: &str,
        validate: impl Fn(&T) -> std::result::Result<(), String>,
    ) -> Result<T> {
        let mut last_error = String::new();
        for _ in 0..self.max_retries {
            let raw = self.model.complete(system, user)?;
            let text = extract_json(&raw);
            match serde_json::from_str::<T>(text) {
                Ok(value) => match validate(&value) {
                    Ok(()) => return Ok(value),
                    Err(e) => last_error = e,
                },
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(CoreError::SchemaViolation {
            attempts: self.max_retries,
            last_error,
        })
    }
}

/// Strips markdown code fences around an answer, if any.
fn extract_json(raw: &str) -> &str {
    let trimmed = raw.trim();
    let without_open = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .unwrap_or(trimmed);
    without_open
        .strip_suffix("```")
        .unwrap_or(without_open)
        .trim()
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterpreterOut {
    general_environment: String,
    ego_context: String,
    adversarial_plan: String,
    background_plan: String,
    intent_band: CriticalityBand,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgoOut {
    placement: PlacementQuery,
    target_speed: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdversaryOut {
    vehicle_class: VehicleClass,
    relation: Relation,
    gap: f64,
    #[serde(default)]
    segment: String,
}

impl<M: ChatModel> GenerationBackend for RemoteBackend<M> {
    fn interpret(&self, description: &str) -> Result<ElaboratedDescription> {
        let out: InterpreterOut = self.ask(PROMPT_INTERPRETER, description, |o: &InterpreterOut| {
            for (name, text) in [
                ("general_environment", &o.general_environment),
                ("ego_context", &o.ego_context),
                ("adversarial_plan", &o.adversarial_plan),
                ("background_plan", &o.background_plan),
            ] {
                if text.trim().is_empty() {
                    return Err(format!("{name} is empty"));
                }
            }
            Ok(())
        })?;
        Ok(ElaboratedDescription {
            general_environment: out.general_environment,
            ego_context: out.ego_context,
            adversarial_plan: out.adversarial_plan,
            background_plan: out.background_plan,
            intent_band: out.intent_band,
            improvised: Vec::new(),
        })
    }

    fn weather_report(&self, environment_text: &str) -> Result<WeatherConfig> {
        self.ask(PROMPT_WEATHER, environment_text, |w: &WeatherConfig| {
            if !unit(w.precipitation) || !unit(w.fog_density) {
                return Err("precipitation and fog_density must be in [0, 1]".to_string());
            }
            if !(0.0..24.0).contains(&w.time_of_day) {
                return Err("time_of_day must be in [0, 24)".to_string());
            }
            if !(0.3..=1.0).contains(&w.friction_multiplier) {
                return Err("friction_multiplier must be in [0.3, 1.0]".to_string());
            }
            Ok(())
        })
    }

    fn locate_ego(&self, ego_text: &str) -> Result<EgoHints> {
        let out: EgoOut = self.ask(PROMPT_EGO, ego_text, |o: &EgoOut| {
            if !(1.0..=35.0).contains(&o.target_speed) {
                return Err("target_speed must be in [1, 35] m/s".to_string());
            }
            Ok(())
        })?;
        Ok(EgoHints {
            placement: out.placement,
            target_speed: out.target_speed,
        })
    }

    fn locate_adversaries(&self, adversarial_text: &str) -> Result<Vec<AdversaryDraft>> {
        let out: Vec<AdversaryOut> =
            self.ask(PROMPT_ADVERSARIES, adversarial_text, |list: &Vec<AdversaryOut>| {
                for (i, a) in list.iter().enumerate() {
                    if !(1.0..=100.0).contains(&a.gap) {
                        return Err(format!("adversary {i}: gap must be in [1, 100] m"));
                    }
                }
                Ok(())
            })?;
        Ok(out
            .into_iter()
            .map(|a| AdversaryDraft {
                vehicle_class: a.vehicle_class,
                relation: a.relation,
                gap: a.gap,
                segment: a.segment,
            })
            .collect())
    }

    fn generate_actions(
        &self,
        adversarial_text: &str,
        drafts: &[AdversaryDraft],
        ids: &[String],
    ) -> Result<Vec<BehaviorNodeSpec>> {
        let roster: Vec<serde_json::Value> = drafts
            .iter()
            .zip(ids)
            .map(|(d, id)| {
                serde_json::json!({
                    "id": id,
                    "vehicle_class": d.vehicle_class,
                    "relation": d.relation,
                    "segment": d.segment,
                })
            })
            .collect();
        let user = format!(
            "Description:\n{adversarial_text}\n\nAdversaries:\n{}",
            serde_json::to_string_pretty(&roster).expect("roster serializes")
        );
        let expected = drafts.len();
        self.ask(PROMPT_ACTIONS, &user, |trees: &Vec<BehaviorNodeSpec>| {
            if trees.len() != expected {
                return Err(format!("expected {expected} trees, got {}", trees.len()));
            }
            Ok(())
        })
    }

    fn make_chaos(&self, background_text: &str) -> Result<BackgroundSpec> {
        self.ask(PROMPT_CHAOS, background_text, |b: &BackgroundSpec| {
            if b.count > 32 {
                return Err("count must be at most 32".to_string());
            }
            if !(50.0..=400.0).contains(&b.spawn_radius) {
                return Err("spawn_radius must be in [50, 400] m".to_string());
            }
            if (b.density_profile == DensityProfile::None) != (b.count == 0) {
                return Err("count must be 0 exactly when density_profile is 'none'".to_string());
            }
            Ok(())
        })
    }
}
