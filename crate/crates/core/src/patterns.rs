//! The pattern catalog: design cards, expansion of a (subtask, pattern) pair
//! into its agent subgraph, worst-case call estimates and pseudo-time latency
//! profiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{
    agent_node_id, validate_assignment, validate_params, validate_workflow, AgentAssignment,
    AgentConfig, AgentNode, ConcreteWorkflow, GroupSpec, PatternKind, PatternParams, SubTask,
    TaskPlan, TurnOrder, ValidationReport, WorkflowEdge, WorkflowGraph,
};

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("invalid pattern parameters: {0}")]
    InvalidParams(ValidationReport),
    #[error("assignment does not match plan: {0}")]
    Mismatch(ValidationReport),
    #[error("invalid workflow: {0}")]
    InvalidWorkflow(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Low,
    Mid,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCard {
    pub kind: PatternKind,
    pub name: String,
    pub definition: String,
    pub example: String,
    pub typical_dimension_effects: BTreeMap<String, Position>,
}

fn card(
    kind: PatternKind,
    definition: &str,
    example: &str,
    effects: &[(&str, Position)],
) -> PatternCard {
    PatternCard {
        kind,
        name: kind.display_name().to_string(),
        definition: definition.to_string(),
        example: example.to_string(),
        typical_dimension_effects: effects
            .iter()
            .map(|(dim, pos)| (dim.to_string(), *pos))
            .collect(),
    }
}

/// The seven design cards, in catalog order.
pub fn catalog() -> Vec<PatternCard> {
    use Position::*;
    vec![
        card(
            PatternKind::Sequential,
            "Split the task into ordered steps; each step starts once the previous one has finished.",
            "Fix a chart by first reading its code, then locating the bug, then rewriting the code.",
            &[("latency", High), ("cost", Mid)],
        ),
        card(
            PatternKind::Parallel,
            "Split the task into independent subtasks that run at the same time to save wall-clock time.",
            "Brainstorm sightseeing, food and lodging options for a trip at once.",
            &[("latency", Low), ("cost", Mid)],
        ),
        card(
            PatternKind::Reflection,
            "A generator drafts an answer and a critic reviews it; the draft is revised until the critic approves or an iteration limit is hit. Mostly used for accuracy.",
            "A coding agent writes a function and a reviewer sends back comments until the code passes review.",
            &[("latency", Mid), ("cost", Mid), ("accuracy", High)],
        ),
        card(
            PatternKind::Redundant,
            "Several agents with different personas answer the same input at the same time; their answers can be merged by an aggregator. Mostly used for robustness and creativity.",
            "Physics, chemistry and biology experts each answer a science question and the answers are combined.",
            &[("latency", Low), ("cost", High), ("creativity", High)],
        ),
        card(
            PatternKind::Supervision,
            "A supervisor looks at the input and the progress so far and picks which worker acts next. Mostly used for complex tasks that need several specialties and quality control.",
            "A help-desk supervisor forwards each customer message to billing, returns or technical support.",
            &[("latency", High), ("cost", High), ("accuracy", High)],
        ),
        card(
            PatternKind::Discussion,
            "A group of agents converse over shared history, speaking in a fixed rotation, in random order, or all at once each round. Mostly used for open-ended tasks that need creativity.",
            "An author, a critic and a psychologist take turns judging an answer to an open question.",
            &[("latency", High), ("cost", High), ("creativity", High)],
        ),
        card(
            PatternKind::SingleAgent,
            "One LLM call, optionally augmented with retrieval, tools, prompting techniques and memory; the building block of every other pattern.",
            "A question-answering agent that can issue web searches.",
            &[("latency", Low), ("cost", Low)],
        ),
    ]
}

pub fn card_for(kind: PatternKind) -> PatternCard {
    catalog()
        .into_iter()
        .find(|c| c.kind == kind)
        .expect("catalog covers every kind")
}

/// Patterns recommended along a scatter axis. `running_time` is treated as
/// the measured form of latency.
pub fn axis_annotations(dimension: &str) -> Vec<(PatternKind, Position)> {
    match dimension {
        "latency" | crate::ir::dims::RUNNING_TIME => vec![
            (PatternKind::Redundant, Position::Low),
            (PatternKind::Reflection, Position::Mid),
            (PatternKind::Discussion, Position::High),
        ],
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptChannel {
    pub speakers: Vec<String>,
    pub num_rounds: u32,
    pub turn_order: TurnOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphEdge {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_bound: Option<u32>,
}

/// Role-level expansion of one subtask's pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSubgraph {
    pub subtask_id: String,
    pub kind: PatternKind,
    pub roles: Vec<String>,
    pub edges: Vec<SubgraphEdge>,
    /// Roles that receive the subtask input.
    pub entry: Vec<String>,
    /// Roles whose output leaves the group.
    pub exit: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<TranscriptChannel>,
}

fn check(params: &PatternParams) -> Result<(), PatternError> {
    validate_params(params.kind(), params)
        .into_result()
        .map_err(PatternError::InvalidParams)
}

fn flow(from: &str, to: &str) -> SubgraphEdge {
    SubgraphEdge {
        from: from.into(),
        to: to.into(),
        loop_bound: None,
    }
}

pub fn expand_pattern(params: &PatternParams, subtask: &SubTask) -> Result<AgentSubgraph, PatternError> {
    check(params)?;
    let roles = params.roles();
    let mut edges = Vec::new();
    let mut channel = None;
    let (entry, exit): (Vec<String>, Vec<String>) = match params {
        PatternParams::SingleAgent => (roles.clone(), roles.clone()),
        PatternParams::Reflection { max_iterations, .. } => {
            edges.push(flow("generator", "critic"));
            edges.push(SubgraphEdge {
                loop_bound: Some(*max_iterations),
                ..flow("critic", "generator")
            });
            (vec!["generator".into()], vec!["generator".into()])
        }
        PatternParams::Redundant { aggregate, .. } => {
            let workers: Vec<String> = roles.iter().filter(|r| r.starts_with("worker_")).cloned().collect();
            if *aggregate {
                edges.extend(workers.iter().map(|w| flow(w, "aggregator")));
                (workers, vec!["aggregator".into()])
            } else {
                (workers.clone(), workers)
            }
        }
        PatternParams::Supervision { max_rounds, .. } => {
            for worker in roles.iter().skip(1) {
                edges.push(flow("supervisor", worker));
                edges.push(SubgraphEdge {
                    loop_bound: Some(*max_rounds),
                    ..flow(worker, "supervisor")
                });
            }
            (vec!["supervisor".into()], vec!["supervisor".into()])
        }
        PatternParams::Discussion {
            num_rounds,
            turn_order,
            summarize,
            ..
        } => {
            let speakers: Vec<String> = roles.iter().filter(|r| r.starts_with("speaker_")).cloned().collect();
            channel = Some(TranscriptChannel {
                speakers: speakers.clone(),
                num_rounds: *num_rounds,
                turn_order: *turn_order,
            });
            if *summarize {
                edges.extend(speakers.iter().map(|s| flow(s, "summarizer")));
                (speakers, vec!["summarizer".into()])
            } else {
                (speakers.clone(), speakers)
            }
        }
    };
    Ok(AgentSubgraph {
        subtask_id: subtask.id.clone(),
        kind: params.kind(),
        roles,
        edges,
        entry,
        exit,
        channel,
    })
}

/// Worst-case number of LLM calls for one subtask.
pub fn estimate_calls(params: &PatternParams) -> Result<u64, PatternError> {
    check(params)?;
    Ok(match *params {
        PatternParams::SingleAgent => 1,
        PatternParams::Reflection { max_iterations, .. } => 2 * max_iterations as u64,
        PatternParams::Redundant {
            num_agents,
            aggregate,
        } => num_agents as u64 + aggregate as u64,
        PatternParams::Supervision { max_rounds, .. } => 2 * max_rounds as u64,
        PatternParams::Discussion {
            num_agents,
            num_rounds,
            summarize,
            ..
        } => num_agents as u64 * num_rounds as u64 + summarize as u64,
    })
}

/// Concurrent LLM calls per pseudo-time step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatencyProfile {
    pub steps: Vec<u32>,
}

impl LatencyProfile {
    pub fn total_calls(&self) -> u64 {
        self.steps.iter().map(|&h| h as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub fn latency_profile(params: &PatternParams) -> Result<LatencyProfile, PatternError> {
    check(params)?;
    let steps = match *params {
        PatternParams::SingleAgent => vec![1],
        PatternParams::Reflection { max_iterations, .. } => vec![1; 2 * max_iterations as usize],
        PatternParams::Redundant {
            num_agents,
            aggregate,
        } => {
            let mut steps = vec![num_agents];
            if aggregate {
                steps.push(1);
            }
            steps
        }
        PatternParams::Supervision { max_rounds, .. } => vec![1; 2 * max_rounds as usize],
        PatternParams::Discussion {
            num_agents,
            num_rounds,
            turn_order,
            summarize,
        } => {
            let mut steps = match turn_order {
                TurnOrder::Simultaneous => vec![num_agents; num_rounds as usize],
                TurnOrder::RoundRobin | TurnOrder::Random => {
                    vec![1; (num_agents * num_rounds) as usize]
                }
            };
            if summarize {
                steps.push(1);
            }
            steps
        }
    };
    Ok(LatencyProfile { steps })
}

/// Whole-workflow profile: every subtask starts as soon as all of its
/// predecessors have finished, and heights of overlapping subtasks add up.
pub fn compose_profiles(plan: &TaskPlan, assignment: &AgentAssignment) -> Result<LatencyProfile, PatternError> {
    validate_assignment(plan, assignment)
        .into_result()
        .map_err(PatternError::Mismatch)?;
    let order = plan.topological_order().ok_or_else(|| {
        PatternError::Mismatch(crate::ir::validate_plan(plan))
    })?;
    let mut finish: BTreeMap<&str, usize> = BTreeMap::new();
    let mut start: BTreeMap<&str, usize> = order.iter().map(|s| (s.id.as_str(), 0)).collect();
    let mut steps: Vec<u32> = Vec::new();
    for s in order {
        let profile = latency_profile(&assignment.assignments[&s.id])?;
        let begin = start[s.id.as_str()];
        let end = begin + profile.len();
        if steps.len() < end {
            steps.resize(end, 0);
        }
        for (offset, h) in profile.steps.iter().enumerate() {
            steps[begin + offset] += h;
        }
        finish.insert(&s.id, end);
        for t in &s.successors {
            let slot = start.get_mut(t.as_str()).expect("validated successor");
            *slot = (*slot).max(end);
        }
    }
    Ok(LatencyProfile { steps })
}

/// Sum of worst-case calls over the subtasks of an assignment.
pub fn total_estimated_calls(assignment: &AgentAssignment) -> Result<u64, PatternError> {
    assignment.assignments.values().map(estimate_calls).sum()
}

/// Sum of agent roles over all expansions.
pub fn total_agents(assignment: &AgentAssignment) -> u64 {
    assignment
        .assignments
        .values()
        .map(|p| p.roles().len() as u64)
        .sum()
}

/// Expands every subtask of `plan` with its assigned pattern and wires group
/// exits to successor entries, producing a validated workflow.
pub fn build_workflow(
    id: impl Into<String>,
    plan: &TaskPlan,
    assignment: &AgentAssignment,
    agent_groups: BTreeMap<String, Vec<AgentConfig>>,
) -> Result<ConcreteWorkflow, PatternError> {
    validate_assignment(plan, assignment)
        .into_result()
        .map_err(PatternError::Mismatch)?;
    let mut groups = Vec::new();
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut expansions = BTreeMap::new();
    for s in &plan.subtasks {
        let params = &assignment.assignments[&s.id];
        let sub = expand_pattern(params, s)?;
        for role in &sub.roles {
            nodes.push(AgentNode {
                id: agent_node_id(&s.id, role),
                group: s.id.clone(),
                role: role.clone(),
            });
        }
        for e in &sub.edges {
            edges.push(WorkflowEdge {
                from: agent_node_id(&s.id, &e.from),
                to: agent_node_id(&s.id, &e.to),
                loop_bound: e.loop_bound,
            });
        }
        groups.push(GroupSpec {
            subtask: s.clone(),
            pattern: params.clone(),
        });
        expansions.insert(s.id.as_str(), sub);
    }
    for s in &plan.subtasks {
        let from = &expansions[s.id.as_str()];
        for t in &s.successors {
            let to = &expansions[t.as_str()];
            for exit in &from.exit {
                for entry in &to.entry {
                    edges.push(WorkflowEdge {
                        from: agent_node_id(&s.id, exit),
                        to: agent_node_id(t, entry),
                        loop_bound: None,
                    });
                }
            }
        }
    }
    let workflow = ConcreteWorkflow {
        id: id.into(),
        assignment_id: assignment.id.clone(),
        agent_groups,
        graph: WorkflowGraph { groups, nodes, edges },
    };
    validate_workflow(&workflow)
        .into_result()
        .map_err(PatternError::InvalidWorkflow)?;
    Ok(workflow)
}
