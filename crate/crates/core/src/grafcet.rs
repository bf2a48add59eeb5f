//! Plan-to-GRAFCET transformation.
//!
//! Every mission becomes one sequence of steps: an initial step (active at
//! start, no action), one step per command in time order, and a final
//! transition that closes the chain. While a command step is active, its
//! continuous action stands for the command being executed; the
//! environment reports completion through a `commandFinished` signal that
//! enables the downstream transition.
//!
//! A conditioned command `m` ("after n") adds an internal boolean variable
//! `cond<m>`, initially false. The transition upstream of `m`'s step is
//! extended with `∧ cond<m>`, and the step of the fulfilling command `n`
//! gets a stored action that latches `cond<m>` to true on deactivation.
//!
//! Step ids are `base·(i+1) + k` for the k-th command of mission i (k = 0
//! is the initial step), with `base = 10` as long as no mission has more
//! than 9 commands, so the ids match the usual two-digit convention
//! (13, 14, 23, 24, ...). Longer missions widen the base to the next power
//! of ten.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::diag::{has_errors, Diagnostic};
use crate::plan::{validate_plan, CommandId, CommandKind, MissionPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct StepId(pub u32);

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct TransitionId(pub u32);

impl fmt::Display for TransitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Continuous action of a command step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepAction {
    pub command: CommandId,
    pub kind: CommandKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub id: StepId,
    pub is_initial: bool,
    /// `None` for initial steps, which carry no action.
    pub action: Option<StepAction>,
    /// Condition variables latched to true when this step deactivates.
    pub stored_on_deactivation: Vec<String>,
}

/// Transition condition: a conjunction of at most one completion signal
/// and any number of condition variables. An empty conjunction is `true`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CondExpr {
    pub finished: Option<CommandId>,
    pub vars: Vec<String>,
}

impl CondExpr {
    pub fn always() -> Self {
        CondExpr::default()
    }

    pub fn finished(command: CommandId) -> Self {
        CondExpr {
            finished: Some(command),
            vars: Vec::new(),
        }
    }

    pub fn is_always(&self) -> bool {
        self.finished.is_none() && self.vars.is_empty()
    }
}

impl fmt::Display for CondExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_always() {
            return write!(f, "true");
        }
        let mut parts = Vec::new();
        if let Some(c) = self.finished {
            parts.push(format!("finished_{c}"));
        }
        parts.extend(self.vars.iter().cloned());
        write!(f, "{}", parts.join(" & "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub id: TransitionId,
    pub upstream: StepId,
    /// Absent for final transitions, which terminate a sequence.
    pub downstream: Option<StepId>,
    pub condition: CondExpr,
}

/// One mission's chain in the generated model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chain {
    pub vehicle_id: String,
    pub initial_step: StepId,
    /// Command steps in execution order.
    pub command_steps: Vec<StepId>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Grafcet {
    pub steps: BTreeMap<StepId, Step>,
    pub transitions: BTreeMap<TransitionId, Transition>,
    /// Condition variable names, all initially false.
    pub variables: Vec<String>,
    pub initial_steps: Vec<StepId>,
    pub chains: Vec<Chain>,
    /// Command id to step id, for property generation.
    pub command_steps: BTreeMap<CommandId, StepId>,
}

impl Grafcet {
    pub fn step(&self, id: StepId) -> Option<&Step> {
        self.steps.get(&id)
    }

    pub fn step_of_command(&self, id: CommandId) -> Option<StepId> {
        self.command_steps.get(&id).copied()
    }

    /// The step immediately downstream of `id` in its chain, if any.
    pub fn successor_step(&self, id: StepId) -> Option<StepId> {
        self.transitions
            .values()
            .find(|t| t.upstream == id)
            .and_then(|t| t.downstream)
    }

    /// Outgoing transitions of a step (exactly one for generated models).
    pub fn transitions_from(&self, id: StepId) -> impl Iterator<Item = &Transition> {
        self.transitions.values().filter(move |t| t.upstream == id)
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("plan is invalid: {}", format_diags(.0))]
    InvalidPlan(Vec<Diagnostic>),
}

fn format_diags(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn id_base(plan: &MissionPlan) -> u32 {
    let longest = plan
        .missions
        .iter()
        .map(|m| m.commands.len())
        .max()
        .unwrap_or(0) as u32;
    let mut base = 10;
    while base <= longest {
        base *= 10;
    }
    base
}

/// Name of the condition variable guarding command `conditioned`.
pub fn condition_var_name(conditioned: CommandId) -> String {
    format!("cond{conditioned}")
}

/// Applies the transformation rules to a validated plan.
pub fn build_grafcet(plan: &MissionPlan) -> Result<Grafcet, BuildError> {
    let diags = validate_plan(plan);
    if has_errors(&diags) {
        return Err(BuildError::InvalidPlan(diags));
    }

    let base = id_base(plan);
    let mut g = Grafcet::default();

    // Condition variable per conditioned command, guarding that command's
    // upstream transition; the fulfilling command's step latches it.
    let mut guards: BTreeMap<CommandId, String> = BTreeMap::new();
    let mut latches: BTreeMap<CommandId, Vec<String>> = BTreeMap::new();
    for mission in &plan.missions {
        for c in &mission.commands {
            if let Some(cond) = c.condition {
                let var = condition_var_name(c.id);
                guards.insert(c.id, var.clone());
                latches.entry(cond.after_command).or_default().push(var.clone());
                g.variables.push(var);
            }
        }
    }
    g.variables.sort();

    for (i, mission) in plan.missions.iter().enumerate() {
        let first = base * (i as u32 + 1);
        let initial = StepId(first);
        g.steps.insert(
            initial,
            Step {
                id: initial,
                is_initial: true,
                action: None,
                stored_on_deactivation: Vec::new(),
            },
        );
        g.initial_steps.push(initial);

        let mut chain = Chain {
            vehicle_id: mission.vehicle_id.clone(),
            initial_step: initial,
            command_steps: Vec::new(),
        };

        for (k, command) in mission.commands.iter().enumerate() {
            let step_id = StepId(first + k as u32 + 1);
            let mut stored = latches.remove(&command.id).unwrap_or_default();
            stored.sort();
            g.steps.insert(
                step_id,
                Step {
                    id: step_id,
                    is_initial: false,
                    action: Some(StepAction {
                        command: command.id,
                        kind: command.kind,
                    }),
                    stored_on_deactivation: stored,
                },
            );
            g.command_steps.insert(command.id, step_id);
            chain.command_steps.push(step_id);

            // Transition into this step: completion of the previous
            // command (or `true` out of the initial step), extended with
            // the condition variable if this command is conditioned.
            let upstream = StepId(first + k as u32);
            let mut condition = match k {
                0 => CondExpr::always(),
                _ => CondExpr::finished(mission.commands[k - 1].id),
            };
            if let Some(var) = guards.get(&command.id) {
                condition.vars.push(var.clone());
            }
            g.transitions.insert(
                TransitionId(upstream.0),
                Transition {
                    id: TransitionId(upstream.0),
                    upstream,
                    downstream: Some(step_id),
                    condition,
                },
            );
        }

        // Final transition: completion of the last command, no downstream.
        let last_step = *chain.command_steps.last().expect("mission is non-empty");
        let last_command = mission.commands.last().expect("mission is non-empty");
        g.transitions.insert(
            TransitionId(last_step.0),
            Transition {
                id: TransitionId(last_step.0),
                upstream: last_step,
                downstream: None,
                condition: CondExpr::finished(last_command.id),
            },
        );

        g.chains.push(chain);
    }

    Ok(g)
}

/// Renders the model as Graphviz DOT text: steps as boxes (initial steps
/// double-bordered), transitions as thin bars. Output is deterministic.
pub fn render_dot(g: &Grafcet) -> String {
    let mut out = String::from("digraph grafcet {\n  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n");
    for step in g.steps.values() {
        let label = match &step.action {
            Some(a) => format!("{}\\n{}", step.id, a.kind),
            None => format!("{}", step.id),
        };
        let peripheries = if step.is_initial { 2 } else { 1 };
        let mut attrs = format!("shape=box, peripheries={peripheries}, label=\"{label}\"");
        if !step.stored_on_deactivation.is_empty() {
            let stores = step.stored_on_deactivation.join(",");
            attrs.push_str(&format!(
                ", xlabel=\"{} := true on deactivation\"",
                stores
            ));
        }
        out.push_str(&format!("  s{} [{attrs}];\n", step.id));
    }
    for t in g.transitions.values() {
        out.push_str(&format!(
            "  t{} [shape=rect, style=filled, fillcolor=black, height=0.06, width=0.4, label=\"\", xlabel=\"{}\"];\n",
            t.id, t.condition
        ));
    }
    for t in g.transitions.values() {
        out.push_str(&format!("  s{} -> t{};\n", t.upstream, t.id));
        match t.downstream {
            Some(d) => out.push_str(&format!("  t{} -> s{};\n", t.id, d)),
            None => {
                // Final transition: render an invisible sink so the bar
                // keeps its place at the end of the sequence.
                out.push_str(&format!(
                    "  end{} [shape=point, style=invis];\n  t{} -> end{};\n",
                    t.id, t.id, t.id
                ));
            }
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::plan::parse_plan;

    fn use_case() -> Grafcet {
        build_grafcet(&parse_plan(fixtures::HANDOVER_PLAN).unwrap()).unwrap()
    }

    #[test]
    fn use_case_numbering_matches_two_digit_convention() {
        let g = use_case();
        let ids: Vec<u32> = g.steps.keys().map(|s| s.0).collect();
        assert_eq!(
            ids,
            vec![10, 11, 12, 13, 14, 15, 16, 17, 20, 21, 22, 23, 24, 25, 26, 27]
        );
        assert_eq!(g.initial_steps, vec![StepId(10), StepId(20)]);
        assert_eq!(g.variables, vec!["cond352".to_string()]);
    }

    #[test]
    fn use_case_guard_and_latch_placement() {
        let g = use_case();
        // The UAV takeOff step (21) is guarded by cond352 on the
        // transition leaving the initial step 20.
        let t20 = &g.transitions[&TransitionId(20)];
        assert_eq!(t20.upstream, StepId(20));
        assert_eq!(t20.downstream, Some(StepId(21)));
        assert_eq!(t20.condition.finished, None);
        assert_eq!(t20.condition.vars, vec!["cond352".to_string()]);
        // The UGV drop step (15) latches cond352 on deactivation.
        assert_eq!(
            g.steps[&StepId(15)].stored_on_deactivation,
            vec!["cond352".to_string()]
        );
        // No other step latches anything.
        let latching: Vec<_> = g
            .steps
            .values()
            .filter(|s| !s.stored_on_deactivation.is_empty())
            .map(|s| s.id)
            .collect();
        assert_eq!(latching, vec![StepId(15)]);
    }

    #[test]
    fn chains_are_simple_chains_with_final_transitions() {
        let g = use_case();
        for chain in &g.chains {
            let mut current = chain.initial_step;
            for &next in &chain.command_steps {
                let outgoing: Vec<_> = g.transitions_from(current).collect();
                assert_eq!(outgoing.len(), 1, "step {current} must have one transition");
                assert_eq!(outgoing[0].downstream, Some(next));
                current = next;
            }
            let last: Vec<_> = g.transitions_from(current).collect();
            assert_eq!(last.len(), 1);
            assert_eq!(last[0].downstream, None, "chain ends in a final transition");
        }
    }

    #[test]
    fn single_command_plan_builds_smallest_chain() {
        let plan = parse_plan(
            r#"{"plan_id":"min","missions":[{"vehicle_id":"v1","commands":[{"id":341,"t":0,"kind":"start"}]}]}"#,
        )
        .unwrap();
        let g = build_grafcet(&plan).unwrap();
        assert_eq!(g.steps.len(), 2);
        assert!(g.steps.contains_key(&StepId(10)));
        assert!(g.steps.contains_key(&StepId(11)));
        assert_eq!(g.transitions.len(), 2);
        assert!(g.transitions[&TransitionId(10)].condition.is_always());
        assert_eq!(
            g.transitions[&TransitionId(11)].condition,
            CondExpr::finished(CommandId(341))
        );
        assert_eq!(g.variables.len(), 0);
    }

    #[test]
    fn mutually_conditioned_missions_guard_each_other() {
        let text = r#"{"plan_id":"cycle","missions":[
            {"vehicle_id":"a","commands":[
                {"id":1,"t":0,"kind":"start","condition":{"after":4}},
                {"id":2,"t":1,"kind":"stop"}]},
            {"vehicle_id":"b","commands":[
                {"id":3,"t":0,"kind":"start","condition":{"after":2}},
                {"id":4,"t":1,"kind":"stop"}]}
        ]}"#;
        let g = build_grafcet(&parse_plan(text).unwrap()).unwrap();
        assert_eq!(g.variables, vec!["cond1".to_string(), "cond3".to_string()]);
        // Chain a: initial 10, steps 11 (start, guarded by cond1), 12 (stop, latches cond3).
        assert_eq!(
            g.transitions[&TransitionId(10)].condition.vars,
            vec!["cond1".to_string()]
        );
        assert_eq!(
            g.steps[&StepId(12)].stored_on_deactivation,
            vec!["cond3".to_string()]
        );
        // Chain b: initial 20, steps 21 (guarded by cond3), 22 (latches cond1).
        assert_eq!(
            g.transitions[&TransitionId(20)].condition.vars,
            vec!["cond3".to_string()]
        );
        assert_eq!(
            g.steps[&StepId(22)].stored_on_deactivation,
            vec!["cond1".to_string()]
        );
    }

    #[test]
    fn step_count_is_missions_plus_commands() {
        let plan = parse_plan(fixtures::HANDOVER_PLAN).unwrap();
        let g = build_grafcet(&plan).unwrap();
        assert_eq!(
            g.steps.len(),
            plan.missions.len() + plan.command_count()
        );
        assert_eq!(g.variables.len(), plan.condition_count());
    }

    #[test]
    fn every_variable_has_one_guard_and_one_latch() {
        let plan = parse_plan(fixtures::DEADLOCK_PLAN).unwrap();
        let g = build_grafcet(&plan).unwrap();
        for var in &g.variables {
            let guards = g
                .transitions
                .values()
                .filter(|t| t.condition.vars.contains(var))
                .count();
            let latches = g
                .steps
                .values()
                .filter(|s| s.stored_on_deactivation.contains(var))
                .count();
            assert_eq!((guards, latches), (1, 1), "variable {var}");
        }
    }

    #[test]
    fn build_is_deterministic() {
        let plan = parse_plan(fixtures::HANDOVER_PLAN).unwrap();
        assert_eq!(build_grafcet(&plan).unwrap(), build_grafcet(&plan).unwrap());
    }

    #[test]
    fn invalid_plan_is_rejected() {
        let mut plan = parse_plan(fixtures::HANDOVER_PLAN).unwrap();
        plan.missions[1].commands[0].condition = Some(crate::plan::ConditionRef {
            after_command: CommandId(353),
        });
        assert!(matches!(
            build_grafcet(&plan),
            Err(BuildError::InvalidPlan(_))
        ));
    }

    #[test]
    fn wide_missions_widen_the_id_base() {
        // 12 commands would collide with the next mission under base 10.
        let commands: Vec<String> = (0..12)
            .map(|i| format!(r#"{{"id":{},"t":{},"kind":"start"}}"#, i + 1, i))
            .collect();
        let text = format!(
            r#"{{"plan_id":"wide","missions":[
                {{"vehicle_id":"a","commands":[{}]}},
                {{"vehicle_id":"b","commands":[{{"id":100,"t":0,"kind":"start"}}]}}
            ]}}"#,
            commands.join(",")
        );
        let g = build_grafcet(&parse_plan(&text).unwrap()).unwrap();
        assert_eq!(g.chains[0].initial_step, StepId(100));
        assert_eq!(g.chains[1].initial_step, StepId(200));
        assert_eq!(g.steps.len(), 15);
    }

    #[test]
    fn dot_rendering_counts() {
        let g = use_case();
        let dot = render_dot(&g);
        assert_eq!(dot.matches("shape=box").count(), 16);
        assert_eq!(dot.matches("peripheries=2").count(), 2);
        assert_eq!(dot.matches("shape=rect").count(), 16);

        let empty = render_dot(&Grafcet::default());
        assert_eq!(empty, "digraph grafcet {\n  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n}\n");

        let single = parse_plan(
            r#"{"plan_id":"min","missions":[{"vehicle_id":"v1","commands":[{"id":1,"t":0,"kind":"start"}]}]}"#,
        )
        .unwrap();
        let dot = render_dot(&build_grafcet(&single).unwrap());
        assert_eq!(dot.matches("shape=box").count(), 2);
        assert_eq!(dot.matches("shape=rect").count(), 2);
    }
}
