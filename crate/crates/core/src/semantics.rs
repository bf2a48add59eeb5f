//! Operational semantics for generated models and state-graph
//! construction.
//!
//! A configuration is the set of active steps plus the condition variable
//! valuation. Command completion signals are environment inputs: an
//! evolution fires, simultaneously and exactly once, every transition
//! whose upstream step is active and whose condition holds under the
//! supplied signals and the current variable values. Deactivated steps
//! execute their stored actions (latching condition variables to true).
//!
//! [`build_state_graph`] explores all configurations reachable from the
//! initial one (all initial steps active, all variables false), branching
//! over every subset of the currently relevant completion signals. The
//! resulting graph is a Kripke structure: stutter successors are dropped
//! (some pending command always completes eventually), sink states get a
//! self-loop so the edge relation is total, and sinks with active steps
//! are recorded as deadlocks before the loop is added.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde_json::json;
use thiserror::Error;

use crate::ctl::Atom;
use crate::grafcet::{Grafcet, StepId, TransitionId};
use crate::plan::CommandId;

/// One GRAFCET configuration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GConfig {
    pub active_steps: BTreeSet<StepId>,
    pub vars: BTreeMap<String, bool>,
}

impl GConfig {
    /// Initial configuration of a model: initial steps active, variables
    /// false.
    pub fn initial(g: &Grafcet) -> GConfig {
        GConfig {
            active_steps: g.initial_steps.iter().copied().collect(),
            vars: g.variables.iter().map(|v| (v.clone(), false)).collect(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.active_steps.is_empty()
    }

    /// Human-readable summary, e.g. `{12, 20} cond352=false`.
    pub fn describe(&self) -> String {
        let steps: Vec<String> = self.active_steps.iter().map(|s| s.to_string()).collect();
        let mut out = format!("{{{}}}", steps.join(", "));
        for (var, val) in &self.vars {
            out.push_str(&format!(" {var}={val}"));
        }
        out
    }
}

/// Transitions enabled in `c` under the given completion signals.
pub fn enabled_transitions(
    g: &Grafcet,
    c: &GConfig,
    inputs: &BTreeSet<CommandId>,
) -> Vec<TransitionId> {
    g.transitions
        .values()
        .filter(|t| c.active_steps.contains(&t.upstream))
        .filter(|t| {
            t.condition
                .finished
                .map_or(true, |cmd| inputs.contains(&cmd))
                && t.condition
                    .vars
                    .iter()
                    .all(|v| c.vars.get(v).copied().unwrap_or(false))
        })
        .map(|t| t.id)
        .collect()
}

/// Fires all enabled transitions simultaneously, exactly once.
pub fn evolve(g: &Grafcet, c: &GConfig, inputs: &BTreeSet<CommandId>) -> GConfig {
    let fired = enabled_transitions(g, c, inputs);
    let mut next = c.clone();
    let mut deactivated = Vec::new();
    for tid in &fired {
        let t = &g.transitions[tid];
        if next.active_steps.remove(&t.upstream) {
            deactivated.push(t.upstream);
        }
    }
    for tid in &fired {
        if let Some(down) = g.transitions[tid].downstream {
            next.active_steps.insert(down);
        }
    }
    for step in deactivated {
        for var in &g.steps[&step].stored_on_deactivation {
            next.vars.insert(var.clone(), true);
        }
    }
    next
}

/// Completion signals that can influence `c`: signals appearing in
/// conditions of transitions with an active upstream step.
pub fn relevant_signals(g: &Grafcet, c: &GConfig) -> Vec<CommandId> {
    let mut signals: Vec<CommandId> = g
        .transitions
        .values()
        .filter(|t| c.active_steps.contains(&t.upstream))
        .filter_map(|t| t.condition.finished)
        .collect();
    signals.sort();
    signals.dedup();
    signals
}

/// Explicit Kripke structure over reachable configurations.
#[derive(Debug, Clone)]
pub struct StateGraph {
    pub states: Vec<GConfig>,
    /// Sorted successor lists; total (every state has a successor).
    pub edges: Vec<Vec<usize>>,
    pub initial: usize,
    /// Sink states with active steps, recorded before self-loops were
    /// added.
    pub deadlocks: Vec<usize>,
    pub step_alphabet: BTreeSet<StepId>,
    pub var_alphabet: BTreeSet<String>,
}

impl StateGraph {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn successors(&self, state: usize) -> &[usize] {
        &self.edges[state]
    }

    /// Whether an atomic proposition names a step or variable of this
    /// graph's alphabet.
    pub fn knows_atom(&self, atom: &Atom) -> bool {
        match atom {
            Atom::Step(id) => self.step_alphabet.contains(id),
            Atom::Var(name, _) => self.var_alphabet.contains(name),
        }
    }

    pub fn satisfies(&self, state: usize, atom: &Atom) -> bool {
        let c = &self.states[state];
        match atom {
            Atom::Step(id) => c.active_steps.contains(id),
            Atom::Var(name, value) => c.vars.get(name).copied().unwrap_or(false) == *value,
        }
    }

    /// Labels of a state: `step_<id>` per active step, `<var>==true` per
    /// true variable.
    pub fn labels(&self, state: usize) -> Vec<String> {
        let c = &self.states[state];
        let mut labels: Vec<String> =
            c.active_steps.iter().map(|s| format!("step_{s}")).collect();
        labels.extend(
            c.vars
                .iter()
                .filter(|(_, &v)| v)
                .map(|(name, _)| format!("{name}==true")),
        );
        labels
    }

    /// Debug dump: `{states, edges, labels}`.
    pub fn to_json(&self) -> serde_json::Value {
        let states: Vec<_> = self.states.iter().map(|c| c.describe()).collect();
        let edges: Vec<[usize; 2]> = self
            .edges
            .iter()
            .enumerate()
            .flat_map(|(i, succs)| succs.iter().map(move |&j| [i, j]))
            .collect();
        let labels: BTreeMap<String, Vec<String>> = (0..self.states.len())
            .map(|i| (i.to_string(), self.labels(i)))
            .collect();
        json!({
            "states": states,
            "edges": edges,
            "labels": labels,
            "initial": self.initial,
            "deadlocks": self.deadlocks,
        })
    }

    /// Builds a graph from explicit parts (used for tests and examples).
    /// States unreachable from `initial` are dropped, sinks are
    /// self-looped, and sinks with active steps are recorded as deadlocks.
    pub fn from_parts(states: Vec<GConfig>, edges: Vec<(usize, usize)>, initial: usize) -> Self {
        let mut adjacency = vec![Vec::new(); states.len()];
        for (a, b) in edges {
            adjacency[a].push(b);
        }
        // Keep only the reachable part.
        let mut keep = vec![false; states.len()];
        let mut queue = VecDeque::from([initial]);
        keep[initial] = true;
        while let Some(s) = queue.pop_front() {
            for &n in &adjacency[s] {
                if !keep[n] {
                    keep[n] = true;
                    queue.push_back(n);
                }
            }
        }
        let mut remap = vec![usize::MAX; states.len()];
        let mut kept_states = Vec::new();
        for (i, state) in states.into_iter().enumerate() {
            if keep[i] {
                remap[i] = kept_states.len();
                kept_states.push(state);
            }
        }
        let mut kept_edges = vec![Vec::new(); kept_states.len()];
        let mut deadlocks = Vec::new();
        for (i, succs) in adjacency.iter().enumerate() {
            if !keep[i] {
                continue;
            }
            let mut list: Vec<usize> = succs.iter().map(|&j| remap[j]).collect();
            list.sort_unstable();
            list.dedup();
            if list.is_empty() {
                if !kept_states[remap[i]].is_terminal() {
                    deadlocks.push(remap[i]);
                }
                list.push(remap[i]);
            }
            kept_edges[remap[i]] = list;
        }
        let mut graph = StateGraph {
            states: kept_states,
            edges: kept_edges,
            initial: remap[initial],
            deadlocks,
            step_alphabet: BTreeSet::new(),
            var_alphabet: BTreeSet::new(),
        };
        graph.step_alphabet = graph
            .states
            .iter()
            .flat_map(|c| c.active_steps.iter().copied())
            .collect();
        graph.var_alphabet = graph
            .states
            .iter()
            .flat_map(|c| c.vars.keys().cloned())
            .collect();
        graph
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExploreError {
    #[error("state space exceeds the configured limit of {0} states")]
    StateLimitExceeded(usize),
}

pub const DEFAULT_STATE_LIMIT: usize = 1_000_000;

/// Breadth-first exploration of all reachable configurations.
pub fn build_state_graph(g: &Grafcet, limit: usize) -> Result<StateGraph, ExploreError> {
    let initial = GConfig::initial(g);
    let mut index: HashMap<GConfig, usize> = HashMap::new();
    let mut states = vec![initial.clone()];
    index.insert(initial, 0);
    let mut edges: Vec<Vec<usize>> = Vec::new();
    let mut deadlocks = Vec::new();

    let mut queue = VecDeque::from([0usize]);
    while let Some(current) = queue.pop_front() {
        let config = states[current].clone();
        let signals = relevant_signals(g, &config);

        // Every subset of the relevant signals is a possible environment;
        // pure stutters are dropped (pending commands complete
        // eventually), so only genuine progress produces edges.
        let mut successors = BTreeSet::new();
        for mask in 0..(1u32 << signals.len()) {
            let inputs: BTreeSet<CommandId> = signals
                .iter()
                .enumerate()
                .filter(|(bit, _)| mask & (1 << bit) != 0)
                .map(|(_, &s)| s)
                .collect();
            let next = evolve(g, &config, &inputs);
            if next == config {
                continue;
            }
            let id = match index.get(&next) {
                Some(&id) => id,
                None => {
                    let id = states.len();
                    if id >= limit {
                        return Err(ExploreError::StateLimitExceeded(limit));
                    }
                    states.push(next.clone());
                    index.insert(next, id);
                    queue.push_back(id);
                    id
                }
            };
            successors.insert(id);
        }

        if successors.is_empty() {
            if !config.is_terminal() {
                deadlocks.push(current);
            }
            successors.insert(current);
        }
        debug_assert_eq!(edges.len(), current);
        edges.push(successors.into_iter().collect());
    }

    Ok(StateGraph {
        states,
        edges,
        initial: 0,
        deadlocks,
        step_alphabet: g.steps.keys().copied().collect(),
        var_alphabet: g.variables.iter().cloned().collect(),
    })
}
