//! Verification and runtime-safety toolkit for multi-vehicle mission
//! plans.
//!
//! The toolkit covers two complementary stages:
//!
//! * **Before execution** — a timed plan ([`plan`]) is transformed into a
//!   GRAFCET model ([`grafcet`]), its reachable state graph is enumerated
//!   ([`semantics`]), and safety, ordering, liveness, and deadlock
//!   properties are model-checked in CTL ([`ctl`], [`properties`]).
//! * **During execution** — a tick-based simulator ([`sim`]) runs the plan
//!   with a condition-action rule engine ([`rules`]) in the loop that
//!   predicts impending geofence violations by dead reckoning and
//!   counteracts them by slowing or stopping the vehicle.
//!
//! [`pipeline`] glues the verification stage together, and
//! [`fixtures`] bundles a complete demonstration scenario. The `plancheck`
//! command line tool exposes both stages; the accompanying guide under
//! `book/` walks through every concept with runnable examples.

pub mod ctl;
pub mod diag;
pub mod fixtures;
pub mod geometry;
pub mod grafcet;
pub mod pipeline;
pub mod plan;
pub mod properties;
pub mod rules;
pub mod semantics;
pub mod sim;

pub use diag::{Diagnostic, Severity};
pub use plan::{parse_plan, validate_plan, MissionPlan};
