//! Bundled demonstration scenario: a UGV hands a package over to a UAV
//! outside a fenced target zone, with a pylon-marked geofence between the
//! factory and the handover point.
//!
//! The same files live under `scenarios/` in the repository for use with
//! the command line tool.

/// Two-mission handover plan (UGV commands 341-347, UAV commands 352-358;
/// the UAV takeOff waits for the UGV drop).
pub const HANDOVER_PLAN: &str = include_str!("../../../scenarios/handover/plan.json");

/// World for the handover plan: two vehicles, one restricted area, one
/// package.
pub const HANDOVER_WORLD: &str = include_str!("../../../scenarios/handover/world.json");

/// Default rule library: slow down before entering a restricted area,
/// stop (UGV) or loiter (UAV) once inside.
pub const DEFAULT_RULES: &str = include_str!("../../../scenarios/handover/rules.json");

/// Structural requirements for the handover plan.
pub const HANDOVER_REQUIREMENTS: &str =
    include_str!("../../../scenarios/handover/requirements.json");

/// Extra user-defined properties for the handover plan.
pub const HANDOVER_PROPERTIES: &str =
    include_str!("../../../scenarios/handover/properties.json");

/// Mutated handover plan whose missions wait on each other's drop:
/// structurally valid, deadlocks at the initial configuration.
pub const DEADLOCK_PLAN: &str = include_str!("../../../scenarios/deadlock/plan.json");
