//! Behavior topology execution: atomic behaviors (agent binding +
//! configuration + optional success/fail conditions) composed by
//! sequential and concurrent nodes, ticked at the fixed engine frequency.
//!
//! The composite semantics live in [`TreeNode::tick_with`], generic over
//! the leaf so the same code drives both real agents and the scripted
//! leaves the test oracle uses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents;
use crate::error::{CoreError, Result, Violation};
use crate::scenario::{
    BehaviorNodeSpec, ConcurrentPolicy, ConditionSpec, ConfigMap, ConfigValue,
};
use crate::world::{ControlTarget, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorStatus {
    Running,
    Succeeded,
    Failed,
}

impl BehaviorStatus {
    pub fn is_terminal(self) -> bool {
        self != BehaviorStatus::Running
    }
}

// ---------------------------------------------------------------------------
// Registry

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamKind {
    VehicleRef,
    Number { min: f64, max: f64 },
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub required: bool,
}

#[derive(Debug, Clone)]
pub struct KindSchema {
    pub params: Vec<ParamSpec>,
}

impl KindSchema {
    fn check(&self, kind: &str, config: &ConfigMap, known_vehicles: &[&str], path: &str, out: &mut Vec<Violation>) {
        for p in &self.params {
            match config.get(p.name) {
                None if p.required => out.push(Violation::new(
                    format!("{path}.config.{}", p.name),
                    format!("missing required parameter for kind '{kind}'"),
                )),
                None => {}
                Some(v) => match p.kind {
                    ParamKind::VehicleRef => match v.as_str() {
                        Some(id) if known_vehicles.contains(&id) => {}
                        Some(id) => out.push(Violation::new(
                            format!("{path}.config.{}", p.name),
                            format!("references undeclared vehicle '{id}'"),
                        )),
                        None => out.push(Violation::new(
                            format!("{path}.config.{}", p.name),
                            "must be a vehicle id string",
                        )),
                    },
                    ParamKind::Number { min, max } => match v.as_f64() {
                        Some(x) if (min..=max).contains(&x) => {}
                        Some(x) => out.push(Violation::new(
                            format!("{path}.config.{}", p.name),
                            format!("value {x} outside [{min}, {max}]"),
                        )),
                        None => out.push(Violation::new(
                            format!("{path}.config.{}", p.name),
                            "must be a number",
                        )),
                    },
                },
            }
        }
        for key in config.keys() {
            if !self.params.iter().any(|p| p.name == key) {
                out.push(Violation::new(
                    format!("{path}.config.{key}"),
                    format!("unknown parameter for kind '{kind}'"),
                ));
            }
        }
    }
}

/// Builds the agent for an atomic behavior once its config validated.
pub type AgentFactory = fn(&ConfigMap) -> AgentBinding;

/// A configured driving agent bound to the behavior's vehicle.
#[derive(Debug, Clone)]
pub enum AgentBinding {
    FollowVehicle {
        target: String,
        target_speed: f64,
        aggressiveness: f64,
    },
    StopVehicle {
        deceleration: f64,
    },
    CutIn {
        target: String,
        trigger_gap: f64,
        aggressiveness: f64,
        target_speed: Option<f64>,
    },
    FollowRoute {
        target_speed: Option<f64>,
        aggressiveness: f64,
    },
    Overtake {
        target: String,
        aggressiveness: f64,
    },
    RunRedLight {
        target_speed: f64,
    },
    SuddenBrake {
        deceleration: f64,
    },
    IdleHold,
}

impl AgentBinding {
    fn control(&self, world: &WorldState, vehicle_id: &str) -> ControlTarget {
        match self {
            AgentBinding::FollowVehicle {
                target,
                target_speed,
                aggressiveness,
            } => agents::acc_follow(world, vehicle_id, target, *target_speed, *aggressiveness),
            AgentBinding::StopVehicle { deceleration } | AgentBinding::SuddenBrake { deceleration } => {
                agents::sudden_brake(world, vehicle_id, *deceleration)
            }
            AgentBinding::CutIn {
                target,
                trigger_gap,
                aggressiveness,
                target_speed,
            } => agents::cut_in(world, vehicle_id, target, *trigger_gap, *aggressiveness, *target_speed),
            AgentBinding::FollowRoute {
                target_speed,
                aggressiveness,
            } => agents::follow_route(world, vehicle_id, *target_speed, *aggressiveness),
            AgentBinding::Overtake {
                target,
                aggressiveness,
            } => {
                // chase past the target on the current lane
                let tv = world.vehicle(target);
                let chase = tv.map(|t| t.speed + 3.0 + 5.0 * aggressiveness);
                agents::follow_route(world, vehicle_id, chase, *aggressiveness)
            }
            AgentBinding::RunRedLight { target_speed } => {
                agents::run_red_light(world, vehicle_id, *target_speed)
            }
            AgentBinding::IdleHold => ControlTarget::accel(0.0),
        }
    }
}

fn num(config: &ConfigMap, key: &str, default: f64) -> f64 {
    config.get(key).and_then(ConfigValue::as_f64).unwrap_or(default)
}

fn text(config: &ConfigMap, key: &str) -> String {
    config
        .get(key)
        .and_then(ConfigValue::as_str)
        .unwrap_or_default()
        .to_string()
}

pub struct RegistryEntry {
    pub schema: KindSchema,
    pub factory: AgentFactory,
}

/// The retrieval database of behavior kinds available to the action
/// generator and the parser.
pub struct BehaviorRegistry {
    kinds: BTreeMap<String, RegistryEntry>,
}

impl BehaviorRegistry {
    pub fn empty() -> Self {
        BehaviorRegistry {
            kinds: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = BehaviorRegistry::empty();
        let num_p = |name: &'static str, min: f64, max: f64, required: bool| ParamSpec {
            name,
            kind: ParamKind::Number { min, max },
            required,
        };
        let ref_p = |name: &'static str| ParamSpec {
            name,
            kind: ParamKind::VehicleRef,
            required: true,
        };

        r.register(
            "follow_vehicle",
            KindSchema {
                params: vec![
                    ref_p("target"),
                    num_p("target_speed", 0.1, 60.0, true),
                    num_p("aggressiveness", 0.0, 1.0, true),
                ],
            },
            |c| AgentBinding::FollowVehicle {
                target: text(c, "target"),
                target_speed: num(c, "target_speed", 15.0),
                aggressiveness: num(c, "aggressiveness", 0.5),
            },
        )
        .unwrap();

        r.register(
            "stop_vehicle",
            KindSchema {
                params: vec![num_p("deceleration", 0.1, 12.0, false)],
            },
            |c| AgentBinding::StopVehicle {
                deceleration: num(c, "deceleration", 3.0),
            },
        )
        .unwrap();

        r.register(
            "cut_in",
            KindSchema {
                params: vec![
                    ref_p("target"),
                    num_p("trigger_gap", 0.1, 100.0, true),
                    num_p("aggressiveness", 0.0, 1.0, true),
                    num_p("target_speed", 0.1, 60.0, false),
                ],
            },
            |c| AgentBinding::CutIn {
                target: text(c, "target"),
                trigger_gap: num(c, "trigger_gap", 12.0),
                aggressiveness: num(c, "aggressiveness", 0.5),
                target_speed: c.get("target_speed").and_then(ConfigValue::as_f64),
            },
        )
        .unwrap();

        r.register(
            "follow_route",
            KindSchema {
                params: vec![
                    num_p("target_speed", 0.1, 60.0, false),
                    num_p("aggressiveness", 0.0, 1.0, false),
                ],
            },
            |c| AgentBinding::FollowRoute {
                target_speed: c.get("target_speed").and_then(ConfigValue::as_f64),
                aggressiveness: num(c, "aggressiveness", 0.3),
            },
        )
        .unwrap();

        r.register(
            "overtake",
            KindSchema {
                params: vec![ref_p("target"), num_p("aggressiveness", 0.0, 1.0, false)],
            },
            |c| AgentBinding::Overtake {
                target: text(c, "target"),
                aggressiveness: num(c, "aggressiveness", 0.5),
            },
        )
        .unwrap();

        r.register(
            "run_red_light",
            KindSchema {
                params: vec![num_p("target_speed", 0.1, 60.0, true)],
            },
            |c| AgentBinding::RunRedLight {
                target_speed: num(c, "target_speed", 13.0),
            },
        )
        .unwrap();

        r.register(
            "sudden_brake",
            KindSchema {
                params: vec![num_p("deceleration", 0.1, 12.0, false)],
            },
            |c| AgentBinding::SuddenBrake {
                deceleration: num(c, "deceleration", 8.0),
            },
        )
        .unwrap();

        r.register("idle_hold", KindSchema { params: vec![] }, |_| AgentBinding::IdleHold)
            .unwrap();

        r
    }

    pub fn register(&mut self, kind: &str, schema: KindSchema, factory: AgentFactory) -> Result<()> {
        if self.kinds.contains_key(kind) {
            return Err(CoreError::DuplicateKind(kind.to_string()));
        }
        self.kinds.insert(kind.to_string(), RegistryEntry { schema, factory });
        Ok(())
    }

    pub fn get(&self, kind: &str) -> Result<&RegistryEntry> {
        self.kinds
            .get(kind)
            .ok_or_else(|| CoreError::UnknownKind(kind.to_string()))
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.kinds.keys().map(|k| k.as_str())
    }

    /// Schema validation of a behavior tree, including the control
    /// ownership rule: within a concurrent node, at most one child subtree
    /// may contain control-emitting atomics (they all steer the same
    /// vehicle).
    pub fn validate_tree(
        &self,
        node: &BehaviorNodeSpec,
        known_vehicles: &[&str],
        path: &str,
    ) -> Vec<Violation> {
        let mut out = Vec::new();
        self.validate_node(node, known_vehicles, path, &mut out);
        out
    }

    fn validate_node(
        &self,
        node: &BehaviorNodeSpec,
        known: &[&str],
        path: &str,
        out: &mut Vec<Violation>,
    ) {
        match node {
            BehaviorNodeSpec::Atomic { kind, config, .. } => match self.kinds.get(kind) {
                Some(entry) => entry.schema.check(kind, config, known, path, out),
                None => out.push(Violation::new(path.to_string(), format!("unknown behavior kind '{kind}'"))),
            },
            BehaviorNodeSpec::Sequential { children } => {
                for (i, c) in children.iter().enumerate() {
                    self.validate_node(c, known, &format!("{path}.children[{i}]"), out);
                }
            }
            BehaviorNodeSpec::Concurrent { children, .. } => {
                let with_atomics = children.iter().filter(|c| contains_atomic(c)).count();
                if with_atomics > 1 {
                    out.push(Violation::new(
                        path.to_string(),
                        "concurrent children would control the same vehicle in the same tick",
                    ));
                }
                for (i, c) in children.iter().enumerate() {
                    self.validate_node(c, known, &format!("{path}.children[{i}]"), out);
                }
            }
        }
    }
}

fn contains_atomic(node: &BehaviorNodeSpec) -> bool {
    match node {
        BehaviorNodeSpec::Atomic { .. } => true,
        BehaviorNodeSpec::Sequential { children }
        | BehaviorNodeSpec::Concurrent { children, .. } => children.iter().any(contains_atomic),
    }
}

// ---------------------------------------------------------------------------
// Tree runtime

/// A behavior tree with per-node absorbing status, generic over the leaf.
#[derive(Debug, Clone)]
pub struct TreeNode<L> {
    pub kind: NodeKind<L>,
    pub status: BehaviorStatus,
}

#[derive(Debug, Clone)]
pub enum NodeKind<L> {
    Leaf(L),
    Sequential(Vec<TreeNode<L>>),
    Concurrent(ConcurrentPolicy, Vec<TreeNode<L>>),
}

impl<L> TreeNode<L> {
    pub fn leaf(leaf: L) -> Self {
        TreeNode {
            kind: NodeKind::Leaf(leaf),
            status: BehaviorStatus::Running,
        }
    }

    pub fn sequential(children: Vec<TreeNode<L>>) -> Self {
        TreeNode {
            kind: NodeKind::Sequential(children),
            status: BehaviorStatus::Running,
        }
    }

    pub fn concurrent(policy: ConcurrentPolicy, children: Vec<TreeNode<L>>) -> Self {
        TreeNode {
            kind: NodeKind::Concurrent(policy, children),
            status: BehaviorStatus::Running,
        }
    }

    /// One engine tick. Terminal statuses are absorbing: a terminal node
    /// (and everything under it) is never ticked again.
    pub fn tick_with(&mut self, tick_leaf: &mut impl FnMut(&mut L) -> BehaviorStatus) -> BehaviorStatus {
        if self.status.is_terminal() {
            return self.status;
        }
        self.status = match &mut self.kind {
            NodeKind::Leaf(leaf) => tick_leaf(leaf),
            NodeKind::Sequential(children) => {
                match children.iter_mut().find(|c| !c.status.is_terminal()) {
                    None => BehaviorStatus::Succeeded,
                    Some(child) => match child.tick_with(tick_leaf) {
                        BehaviorStatus::Failed => BehaviorStatus::Failed,
                        BehaviorStatus::Succeeded
                            if children.iter().all(|c| c.status == BehaviorStatus::Succeeded) =>
                        {
                            BehaviorStatus::Succeeded
                        }
                        _ => BehaviorStatus::Running,
                    },
                }
            }
            NodeKind::Concurrent(policy, children) => {
                for child in children.iter_mut() {
                    if !child.status.is_terminal() {
                        child.tick_with(tick_leaf);
                    }
                }
                let succeeded = children
                    .iter()
                    .filter(|c| c.status == BehaviorStatus::Succeeded)
                    .count();
                let failed = children
                    .iter()
                    .filter(|c| c.status == BehaviorStatus::Failed)
                    .count();
                match policy {
                    ConcurrentPolicy::AllSucceed => {
                        if failed > 0 {
                            BehaviorStatus::Failed
                        } else if succeeded == children.len() {
                            BehaviorStatus::Succeeded
                        } else {
                            BehaviorStatus::Running
                        }
                    }
                    ConcurrentPolicy::AnySucceeds => {
                        if succeeded > 0 {
                            BehaviorStatus::Succeeded
                        } else if failed == children.len() {
                            BehaviorStatus::Failed
                        } else {
                            BehaviorStatus::Running
                        }
                    }
                }
            }
        };
        self.status
    }
}

// ---------------------------------------------------------------------------
// Production leaf: a configured atomic behavior

#[derive(Debug, Clone)]
pub struct AtomicRuntime {
    pub kind: String,
    pub config: ConfigMap,
    pub agent: AgentBinding,
    pub success: Option<ConditionSpec>,
    pub fail: Option<ConditionSpec>,
    pub timeout: Option<f64>,
    started_at: Option<f64>,
    start_odometer: f64,
    pub fail_reason: Option<String>,
}

impl AtomicRuntime {
    /// Tick: agent control first, then fail, then success, then timeout.
    pub fn tick(
        &mut self,
        world: &WorldState,
        vehicle_id: &str,
        control_out: &mut Option<ControlTarget>,
    ) -> BehaviorStatus {
        let Some(me) = world.vehicle(vehicle_id) else {
            self.fail_reason = Some(format!("vehicle '{vehicle_id}' despawned"));
            return BehaviorStatus::Failed;
        };
        if self.started_at.is_none() {
            self.started_at = Some(world.t);
            self.start_odometer = me.odometer;
        }

        *control_out = Some(self.agent.control(world, vehicle_id));

        let ctx = CondCtx {
            world,
            vehicle_id,
            started_at: self.started_at.unwrap(),
            start_odometer: self.start_odometer,
        };
        if let Some(cond) = &self.fail {
            match eval_condition(cond, &ctx) {
                Ok(true) => {
                    self.fail_reason = Some("fail condition met".to_string());
                    return BehaviorStatus::Failed;
                }
                Ok(false) => {}
                Err(reason) => {
                    self.fail_reason = Some(reason);
                    return BehaviorStatus::Failed;
                }
            }
        }
        if let Some(cond) = &self.success {
            match eval_condition(cond, &ctx) {
                Ok(true) => return BehaviorStatus::Succeeded,
                Ok(false) => {}
                Err(reason) => {
                    self.fail_reason = Some(reason);
                    return BehaviorStatus::Failed;
                }
            }
        }
        if let Some(t) = self.timeout {
            if world.t - self.started_at.unwrap() >= t {
                self.fail_reason = Some("timeout".to_string());
                return BehaviorStatus::Failed;
            }
        }
        BehaviorStatus::Running
    }
}

struct CondCtx<'a> {
    world: &'a WorldState,
    vehicle_id: &'a str,
    started_at: f64,
    start_odometer: f64,
}

fn eval_condition(cond: &ConditionSpec, ctx: &CondCtx) -> std::result::Result<bool, String> {
    let me = ctx
        .world
        .vehicle(ctx.vehicle_id)
        .ok_or_else(|| format!("vehicle '{}' despawned", ctx.vehicle_id))?;
    match cond {
        ConditionSpec::SpeedBelow { limit } => Ok(me.speed < *limit),
        ConditionSpec::SameLaneAs { vehicle } => {
            let other = ctx
                .world
                .vehicle(vehicle)
                .ok_or_else(|| format!("vehicle '{vehicle}' despawned"))?;
            Ok(me.lane_id == other.lane_id && me.lane_change.is_none())
        }
        ConditionSpec::GapBelow { vehicle, gap } => {
            ctx.world
                .vehicle(vehicle)
                .ok_or_else(|| format!("vehicle '{vehicle}' despawned"))?;
            match ctx.world.signed_gap(ctx.vehicle_id, vehicle) {
                Some(d) => Ok(d < *gap),
                None => Ok(false),
            }
        }
        ConditionSpec::PassedPosition { distance } => {
            Ok(me.odometer - ctx.start_odometer >= *distance)
        }
        ConditionSpec::Elapsed { seconds } => Ok(ctx.world.t - ctx.started_at >= *seconds),
        ConditionSpec::All { conditions } => {
            for c in conditions {
                if !eval_condition(c, ctx)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ConditionSpec::Any { conditions } => {
            for c in conditions {
                if eval_condition(c, ctx)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        ConditionSpec::Not { condition } => Ok(!eval_condition(condition, ctx)?),
    }
}

/// Build the runtime tree for one adversary from its spec node.
pub fn build_tree(registry: &BehaviorRegistry, node: &BehaviorNodeSpec) -> Result<TreeNode<AtomicRuntime>> {
    match node {
        BehaviorNodeSpec::Atomic {
            kind,
            config,
            success,
            fail,
            timeout,
        } => {
            let entry = registry.get(kind)?;
            Ok(TreeNode::leaf(AtomicRuntime {
                kind: kind.clone(),
                config: config.clone(),
                agent: (entry.factory)(config),
                success: success.clone(),
                fail: fail.clone(),
                timeout: *timeout,
                started_at: None,
                start_odometer: 0.0,
                fail_reason: None,
            }))
        }
        BehaviorNodeSpec::Sequential { children } => Ok(TreeNode::sequential(
            children
                .iter()
                .map(|c| build_tree(registry, c))
                .collect::<Result<Vec<_>>>()?,
        )),
        BehaviorNodeSpec::Concurrent { policy, children } => Ok(TreeNode::concurrent(
            *policy,
            children
                .iter()
                .map(|c| build_tree(registry, c))
                .collect::<Result<Vec<_>>>()?,
        )),
    }
}

// ---------------------------------------------------------------------------
// Snapshots

/// Serializable topology description with per-node status, lossless with
/// respect to structure and configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub label: String,
    pub status: BehaviorStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigMap>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_reason: Option<String>,
}

pub fn snapshot(node: &TreeNode<AtomicRuntime>) -> NodeSnapshot {
    match &node.kind {
        NodeKind::Leaf(a) => NodeSnapshot {
            label: a.kind.clone(),
            status: node.status,
            config: Some(a.config.clone()),
            children: vec![],
            fail_reason: a.fail_reason.clone(),
        },
        NodeKind::Sequential(children) => NodeSnapshot {
            label: "sequential".to_string(),
            status: node.status,
            config: None,
            children: children.iter().map(snapshot).collect(),
            fail_reason: None,
        },
        NodeKind::Concurrent(policy, children) => NodeSnapshot {
            label: match policy {
                ConcurrentPolicy::AllSucceed => "concurrent:all_succeed".to_string(),
                ConcurrentPolicy::AnySucceeds => "concurrent:any_succeeds".to_string(),
            },
            status: node.status,
            config: None,
            children: children.iter().map(snapshot).collect(),
            fail_reason: None,
        },
    }
}
