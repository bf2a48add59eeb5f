//! Mission plan model.
//!
//! A plan is a set of per-vehicle missions. Each mission is a strictly
//! time-ordered command sequence; commands may carry a cross-mission
//! condition ("only after command N of another vehicle has completed").
//!
//! The JSON layout is
//!
//! ```json
//! {
//!   "plan_id": "p1",
//!   "missions": [
//!     { "vehicle_id": "ugv1",
//!       "commands": [
//!         { "id": 341, "t": 0, "kind": "start", "params": {} },
//!         { "id": 342, "t": 1, "kind": "driveTo",
//!           "params": { "pos_x": 2.0, "pos_y": 0.0, "vel": 2.0 },
//!           "condition": { "after": 356 } }
//!       ] }
//!   ]
//! }
//! ```
//!
//! [`parse_plan`] rejects documents that are syntactically broken (bad
//! schema, dangling condition targets, non-monotonic timestamps).
//! [`validate_plan`] re-checks every invariant on an already constructed
//! value and reports findings as [`Diagnostic`]s; the pair together is the
//! full invariant check for plans built programmatically.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::diag::Diagnostic;

/// Plan-unique integer identifier of a mission command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct CommandId(pub u32);

impl fmt::Display for CommandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CommandKind {
    #[serde(rename = "start")]
    Start,
    #[serde(rename = "stop")]
    Stop,
    #[serde(rename = "takeOff")]
    TakeOff,
    #[serde(rename = "land")]
    Land,
    #[serde(rename = "driveTo")]
    DriveTo,
    #[serde(rename = "flyTo")]
    FlyTo,
    #[serde(rename = "grab")]
    Grab,
    #[serde(rename = "drop")]
    Drop,
}

impl CommandKind {
    pub const ALL: [CommandKind; 8] = [
        CommandKind::Start,
        CommandKind::Stop,
        CommandKind::TakeOff,
        CommandKind::Land,
        CommandKind::DriveTo,
        CommandKind::FlyTo,
        CommandKind::Grab,
        CommandKind::Drop,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CommandKind::Start => "start",
            CommandKind::Stop => "stop",
            CommandKind::TakeOff => "takeOff",
            CommandKind::Land => "land",
            CommandKind::DriveTo => "driveTo",
            CommandKind::FlyTo => "flyTo",
            CommandKind::Grab => "grab",
            CommandKind::Drop => "drop",
        }
    }

    pub fn from_str(s: &str) -> Option<CommandKind> {
        CommandKind::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    /// Movement commands carry target coordinates.
    pub fn is_movement(&self) -> bool {
        matches!(self, CommandKind::DriveTo | CommandKind::FlyTo)
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cross-mission dependency: do not start until `after_command` has
/// completed in another vehicle's mission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConditionRef {
    #[serde(rename = "after")]
    pub after_command: CommandId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionCommand {
    pub id: CommandId,
    #[serde(rename = "t")]
    pub timestamp: u64,
    pub kind: CommandKind,
    pub params: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionRef>,
}

impl MissionCommand {
    pub fn param_f64(&self, name: &str) -> Option<f64> {
        self.params.get(name).and_then(Value::as_f64)
    }

    pub fn param_str(&self, name: &str) -> Option<&str> {
        self.params.get(name).and_then(Value::as_str)
    }

    /// Target (x, y, z) of a movement command; z only for flyTo.
    pub fn target(&self) -> Option<(f64, f64, Option<f64>)> {
        if !self.kind.is_movement() {
            return None;
        }
        Some((
            self.param_f64("pos_x")?,
            self.param_f64("pos_y")?,
            self.param_f64("pos_z"),
        ))
    }

    pub fn velocity(&self) -> Option<f64> {
        self.param_f64("vel")
    }

    pub fn object_id(&self) -> Option<&str> {
        self.param_str("object_id")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mission {
    pub vehicle_id: String,
    pub commands: Vec<MissionCommand>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionPlan {
    pub plan_id: String,
    pub missions: Vec<Mission>,
}

impl MissionPlan {
    pub fn command_count(&self) -> usize {
        self.missions.iter().map(|m| m.commands.len()).sum()
    }

    pub fn condition_count(&self) -> usize {
        self.missions
            .iter()
            .flat_map(|m| &m.commands)
            .filter(|c| c.condition.is_some())
            .count()
    }

    /// Looks up a command and the index of the mission that owns it.
    pub fn find_command(&self, id: CommandId) -> Option<(usize, &MissionCommand)> {
        for (i, mission) in self.missions.iter().enumerate() {
            if let Some(c) = mission.commands.iter().find(|c| c.id == id) {
                return Some((i, c));
            }
        }
        None
    }

    /// Serializes back to the plan JSON schema.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("plan serialization cannot fail")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("plan serialization cannot fail")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("condition references nonexistent command {0}")]
    DanglingCondition(CommandId),
    #[error("mission {vehicle}: timestamps are not strictly ascending")]
    NonMonotonicTimestamps { vehicle: String },
}

fn schema_err(path: &str, message: impl Into<String>) -> PlanError {
    PlanError::SchemaViolation {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Parses a plan document.
///
/// Rejects structural defects outright; invariants that leave the value
/// representable (such as a condition pointing into its own mission) are
/// left to [`validate_plan`] so they can be reported with context.
pub fn parse_plan(text: &str) -> Result<MissionPlan, PlanError> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| PlanError::MalformedJson(e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| schema_err("$", "expected an object"))?;

    let plan_id = obj
        .get("plan_id")
        .and_then(Value::as_str)
        .ok_or_else(|| schema_err("$.plan_id", "expected a string"))?
        .to_string();

    let missions_val = obj
        .get("missions")
        .and_then(Value::as_array)
        .ok_or_else(|| schema_err("$.missions", "expected an array"))?;
    if missions_val.is_empty() {
        return Err(schema_err("$.missions", "plan must contain at least one mission"));
    }

    let mut missions = Vec::with_capacity(missions_val.len());
    for (i, mv) in missions_val.iter().enumerate() {
        missions.push(parse_mission(mv, i)?);
    }

    // Vehicle ids must be unique across the plan.
    let mut vehicles = BTreeSet::new();
    for (i, m) in missions.iter().enumerate() {
        if !vehicles.insert(m.vehicle_id.clone()) {
            return Err(schema_err(
                &format!("$.missions[{i}].vehicle_id"),
                format!("duplicate vehicle id {:?}", m.vehicle_id),
            ));
        }
    }

    // Command ids must be unique across the plan; conditions must resolve.
    let mut ids = HashMap::new();
    for (i, m) in missions.iter().enumerate() {
        for (j, c) in m.commands.iter().enumerate() {
            if let Some(_prev) = ids.insert(c.id, (i, j)) {
                return Err(schema_err(
                    &format!("$.missions[{i}].commands[{j}].id"),
                    format!("duplicate command id {}", c.id),
                ));
            }
        }
    }
    for m in &missions {
        for c in &m.commands {
            if let Some(cond) = c.condition {
                if !ids.contains_key(&cond.after_command) {
                    return Err(PlanError::DanglingCondition(cond.after_command));
                }
            }
        }
    }

    Ok(MissionPlan { plan_id, missions })
}

fn parse_mission(value: &Value, index: usize) -> Result<Mission, PlanError> {
    let base = format!("$.missions[{index}]");
    let obj = value
        .as_object()
        .ok_or_else(|| schema_err(&base, "expected an object"))?;
    let vehicle_id = obj
        .get("vehicle_id")
        .and_then(Value::as_str)
        .ok_or_else(|| schema_err(&format!("{base}.vehicle_id"), "expected a string"))?
        .to_string();
    let commands_val = obj
        .get("commands")
        .and_then(Value::as_array)
        .ok_or_else(|| schema_err(&format!("{base}.commands"), "expected an array"))?;
    if commands_val.is_empty() {
        return Err(schema_err(
            &format!("{base}.commands"),
            "mission must contain at least one command",
        ));
    }

    let mut commands = Vec::with_capacity(commands_val.len());
    for (j, cv) in commands_val.iter().enumerate() {
        commands.push(parse_command(cv, &format!("{base}.commands[{j}]"))?);
    }

    // One command per time-point within a mission, strictly ascending.
    for pair in commands.windows(2) {
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(PlanError::NonMonotonicTimestamps {
                vehicle: vehicle_id.clone(),
            });
        }
    }

    Ok(Mission {
        vehicle_id,
        commands,
    })
}

fn parse_command(value: &Value, path: &str) -> Result<MissionCommand, PlanError> {
    let obj = value
        .as_object()
        .ok_or_else(|| schema_err(path, "expected an object"))?;

    let id = obj
        .get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema_err(&format!("{path}.id"), "expected a non-negative integer"))?;
    let id = u32::try_from(id)
        .map_err(|_| schema_err(&format!("{path}.id"), "command id out of range"))?;

    let timestamp = obj
        .get("t")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema_err(&format!("{path}.t"), "expected a non-negative integer"))?;

    let kind_str = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| schema_err(&format!("{path}.kind"), "expected a string"))?;
    let kind = CommandKind::from_str(kind_str)
        .ok_or_else(|| schema_err(&format!("{path}.kind"), format!("unknown kind {kind_str:?}")))?;

    let mut params = BTreeMap::new();
    if let Some(pv) = obj.get("params") {
        let pobj = pv
            .as_object()
            .ok_or_else(|| schema_err(&format!("{path}.params"), "expected an object"))?;
        for (k, v) in pobj {
            params.insert(k.clone(), v.clone());
        }
    }

    let condition = match obj.get("condition") {
        None | Some(Value::Null) => None,
        Some(cv) => {
            let after = cv
                .get("after")
                .and_then(Value::as_u64)
                .ok_or_else(|| {
                    schema_err(&format!("{path}.condition.after"), "expected a command id")
                })?;
            let after = u32::try_from(after).map_err(|_| {
                schema_err(&format!("{path}.condition.after"), "command id out of range")
            })?;
            Some(ConditionRef {
                after_command: CommandId(after),
            })
        }
    };

    let command = MissionCommand {
        id: CommandId(id),
        timestamp,
        kind,
        params,
        condition,
    };
    check_command_params(&command, path)?;
    Ok(command)
}

fn check_command_params(c: &MissionCommand, path: &str) -> Result<(), PlanError> {
    match c.kind {
        CommandKind::DriveTo | CommandKind::FlyTo => {
            for p in ["pos_x", "pos_y"] {
                if c.param_f64(p).is_none() {
                    return Err(schema_err(
                        &format!("{path}.params.{p}"),
                        format!("{} requires numeric parameter {p}", c.kind),
                    ));
                }
            }
            if c.kind == CommandKind::FlyTo && c.param_f64("pos_z").is_none() {
                return Err(schema_err(
                    &format!("{path}.params.pos_z"),
                    "flyTo requires numeric parameter pos_z",
                ));
            }
            match c.velocity() {
                Some(v) if v > 0.0 => {}
                Some(_) => {
                    return Err(schema_err(
                        &format!("{path}.params.vel"),
                        "vel must be positive",
                    ))
                }
                None => {
                    return Err(schema_err(
                        &format!("{path}.params.vel"),
                        format!("{} requires numeric parameter vel", c.kind),
                    ))
                }
            }
        }
        CommandKind::Grab | CommandKind::Drop => {
            if c.object_id().is_none() {
                return Err(schema_err(
                    &format!("{path}.params.object_id"),
                    format!("{} requires string parameter object_id", c.kind),
                ));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Checks every plan invariant and returns the findings.
///
/// An empty list means the plan is well formed. Cross-mission wait cycles
/// are *not* reported here: such plans are structurally valid and the
/// induced deadlock is found by state-space exploration.
pub fn validate_plan(plan: &MissionPlan) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    if plan.missions.is_empty() {
        diags.push(Diagnostic::error("$.missions", "plan has no missions"));
    }

    let mut vehicles = BTreeSet::new();
    for (i, m) in plan.missions.iter().enumerate() {
        if !vehicles.insert(m.vehicle_id.as_str()) {
            diags.push(Diagnostic::error(
                format!("$.missions[{i}].vehicle_id"),
                format!("duplicate vehicle id {:?}", m.vehicle_id),
            ));
        }
        if m.commands.is_empty() {
            diags.push(Diagnostic::error(
                format!("$.missions[{i}].commands"),
                "mission has no commands",
            ));
        }
        for (j, pair) in m.commands.windows(2).enumerate() {
            if pair[1].timestamp <= pair[0].timestamp {
                diags.push(Diagnostic::error(
                    format!("$.missions[{i}].commands[{}].t", j + 1),
                    "timestamps must be strictly ascending within a mission",
                ));
            }
        }
    }

    let mut owner: HashMap<CommandId, usize> = HashMap::new();
    for (i, m) in plan.missions.iter().enumerate() {
        for (j, c) in m.commands.iter().enumerate() {
            if let Some(prev) = owner.insert(c.id, i) {
                diags.push(Diagnostic::error(
                    format!("$.missions[{i}].commands[{j}].id"),
                    format!("command id {} already used in mission {prev}", c.id),
                ));
            }
        }
    }

    for (i, m) in plan.missions.iter().enumerate() {
        for (j, c) in m.commands.iter().enumerate() {
            let path = format!("$.missions[{i}].commands[{j}]");
            if let Err(PlanError::SchemaViolation { path, message }) =
                check_command_params(c, &path)
            {
                diags.push(Diagnostic::error(path, message));
            }
            if let Some(cond) = c.condition {
                match owner.get(&cond.after_command) {
                    None => diags.push(Diagnostic::error(
                        format!("{path}.condition.after"),
                        format!("condition references nonexistent command {}", cond.after_command),
                    )),
                    Some(&owning) if owning == i => diags.push(Diagnostic::error(
                        format!("{path}.condition.after"),
                        "condition targets its own mission",
                    )),
                    Some(_) => {}
                }
            }
        }
    }

    diags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parses_use_case_plan() {
        let plan = parse_plan(fixtures::HANDOVER_PLAN).unwrap();
        assert_eq!(plan.missions.len(), 2);
        assert_eq!(plan.missions[0].commands.len(), 7);
        assert_eq!(plan.missions[1].commands.len(), 7);
        assert_eq!(plan.condition_count(), 1);
        assert_eq!(
            plan.missions[1].commands[0].condition,
            Some(ConditionRef {
                after_command: CommandId(345)
            })
        );
        let kinds: Vec<_> = plan.missions[0].commands.iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            vec![
                CommandKind::Start,
                CommandKind::DriveTo,
                CommandKind::Grab,
                CommandKind::DriveTo,
                CommandKind::Drop,
                CommandKind::DriveTo,
                CommandKind::Stop
            ]
        );
    }

    #[test]
    fn parses_minimal_plan() {
        let plan = parse_plan(
            r#"{"plan_id":"min","missions":[{"vehicle_id":"v1","commands":[{"id":1,"t":0,"kind":"start"}]}]}"#,
        )
        .unwrap();
        assert_eq!(plan.missions.len(), 1);
        assert_eq!(plan.command_count(), 1);
        assert_eq!(plan.condition_count(), 0);
    }

    #[test]
    fn dangling_condition_is_rejected() {
        let text = r#"{"plan_id":"p","missions":[
            {"vehicle_id":"a","commands":[{"id":1,"t":0,"kind":"start"}]},
            {"vehicle_id":"b","commands":[{"id":2,"t":0,"kind":"start","condition":{"after":99}}]}
        ]}"#;
        assert_eq!(
            parse_plan(text).unwrap_err(),
            PlanError::DanglingCondition(CommandId(99))
        );
    }

    #[test]
    fn non_monotonic_timestamps_are_rejected() {
        let text = r#"{"plan_id":"p","missions":[{"vehicle_id":"a","commands":[
            {"id":1,"t":1,"kind":"start"},{"id":2,"t":1,"kind":"stop"}
        ]}]}"#;
        assert_eq!(
            parse_plan(text).unwrap_err(),
            PlanError::NonMonotonicTimestamps {
                vehicle: "a".into()
            }
        );
    }

    #[test]
    fn malformed_json_is_reported() {
        assert!(matches!(
            parse_plan("{nope"),
            Err(PlanError::MalformedJson(_))
        ));
    }

    #[test]
    fn missing_movement_params_are_schema_errors() {
        let text = r#"{"plan_id":"p","missions":[{"vehicle_id":"a","commands":[
            {"id":1,"t":0,"kind":"driveTo","params":{"pos_x":1.0}}
        ]}]}"#;
        match parse_plan(text).unwrap_err() {
            PlanError::SchemaViolation { path, .. } => {
                assert_eq!(path, "$.missions[0].commands[0].params.pos_y")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn zero_velocity_is_rejected() {
        let text = r#"{"plan_id":"p","missions":[{"vehicle_id":"a","commands":[
            {"id":1,"t":0,"kind":"driveTo","params":{"pos_x":1.0,"pos_y":0.0,"vel":0.0}}
        ]}]}"#;
        assert!(matches!(
            parse_plan(text),
            Err(PlanError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn validate_accepts_use_case_plan() {
        let plan = parse_plan(fixtures::HANDOVER_PLAN).unwrap();
        assert_eq!(validate_plan(&plan), Vec::new());
    }

    #[test]
    fn validate_flags_self_referencing_condition() {
        let mut plan = parse_plan(fixtures::HANDOVER_PLAN).unwrap();
        // Point the UAV takeOff condition at a command of its own mission.
        plan.missions[1].commands[0].condition = Some(ConditionRef {
            after_command: plan.missions[1].commands[3].id,
        });
        let diags = validate_plan(&plan);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].is_error());
        assert!(diags[0].message.contains("own mission"));
    }

    #[test]
    fn mutual_final_command_conditions_are_structurally_valid() {
        // Each mission waits on the other's final command. validate_plan
        // accepts this; the deadlock is discovered by exploration.
        let text = r#"{"plan_id":"cycle","missions":[
            {"vehicle_id":"a","commands":[
                {"id":1,"t":0,"kind":"start","condition":{"after":4}},
                {"id":2,"t":1,"kind":"stop"}]},
            {"vehicle_id":"b","commands":[
                {"id":3,"t":0,"kind":"start","condition":{"after":2}},
                {"id":4,"t":1,"kind":"stop"}]}
        ]}"#;
        let plan = parse_plan(text).unwrap();
        assert_eq!(validate_plan(&plan), Vec::new());
    }

    #[test]
    fn command_count_matches_document_entries() {
        let plan = parse_plan(fixtures::HANDOVER_PLAN).unwrap();
        let doc: Value = serde_json::from_str(fixtures::HANDOVER_PLAN).unwrap();
        let entries: usize = doc["missions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["commands"].as_array().unwrap().len())
            .sum();
        assert_eq!(plan.command_count(), entries);
    }

    #[test]
    fn serialization_round_trips() {
        let plan = parse_plan(fixtures::HANDOVER_PLAN).unwrap();
        let reparsed = parse_plan(&plan.to_json_string()).unwrap();
        assert_eq!(plan, reparsed);
    }
}
