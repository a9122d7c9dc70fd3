use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ir::{
    agent_node_id, validate_workflow, AgentConfig, ConcreteWorkflow, PatternParams, SubTask,
    ValidationReport, WorkflowEdge,
};
use crate::llm::role_marker;
use crate::patterns::{estimate_calls, expand_pattern, AgentSubgraph, PatternError};

pub const START: &str = "start";
pub const END: &str = "end";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)] // graphs hold few nodes
pub enum ExecNodeKind {
    Start,
    End,
    Fork,
    Join,
    Agent {
        group: String,
        role: String,
        /// Fixed part of every prompt this agent receives.
        prompt: String,
        config: AgentConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecNode {
    pub id: String,
    #[serde(flatten)]
    pub kind: ExecNodeKind,
}

impl ExecNode {
    pub fn is_virtual(&self) -> bool {
        matches!(self.kind, ExecNodeKind::Start | ExecNodeKind::End)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecGroup {
    pub subtask: SubTask,
    pub pattern: PatternParams,
    pub predecessors: Vec<String>,
}

/// A fork node and the subtasks it launches concurrently.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchGroup {
    pub fork: String,
    pub branches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutableGraph {
    pub workflow_id: String,
    pub nodes: Vec<ExecNode>,
    pub edges: Vec<WorkflowEdge>,
    pub groups: Vec<ExecGroup>,
    /// Node ids in an order that respects every non-loop edge.
    pub schedule: Vec<String>,
    pub branch_groups: Vec<BranchGroup>,
    /// Subtasks fed by the run input.
    pub entry: Vec<String>,
    /// Subtasks whose outputs form the final output.
    pub exit: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("workflow failed validation: {0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

impl ExecutableGraph {
    pub fn node(&self, id: &str) -> Option<&ExecNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn group(&self, subtask_id: &str) -> Option<&ExecGroup> {
        self.groups.iter().find(|g| g.subtask.id == subtask_id)
    }

    /// The resolved prompt header and configuration of one agent.
    pub fn agent(&self, subtask_id: &str, role: &str) -> Option<(&str, &AgentConfig)> {
        let id = agent_node_id(subtask_id, role);
        match &self.node(&id)?.kind {
            ExecNodeKind::Agent { prompt, config, .. } => Some((prompt.as_str(), config)),
            _ => None,
        }
    }

    /// Worst-case calls over all groups.
    pub fn estimated_calls(&self) -> u64 {
        self.groups
            .iter()
            .map(|g| estimate_calls(&g.pattern).unwrap_or(0))
            .sum()
    }
}

fn fork_id(after: &str) -> String {
    format!("fork:{after}")
}

fn join_id(before: &str) -> String {
    format!("join:{before}")
}

pub fn compile(workflow: &ConcreteWorkflow) -> Result<ExecutableGraph, CompileError> {
    let report = validate_workflow(workflow);
    if !report.is_valid() {
        return Err(CompileError::Invalid(report));
    }
    let plan = workflow.graph.plan(&workflow.id);
    let preds = plan.predecessors();
    let mut expansions: BTreeMap<&str, AgentSubgraph> = BTreeMap::new();
    for group in &workflow.graph.groups {
        expansions.insert(&group.subtask.id, expand_pattern(&group.pattern, &group.subtask)?);
    }

    let mut nodes = vec![ExecNode {
        id: START.into(),
        kind: ExecNodeKind::Start,
    }];
    let mut edges: Vec<WorkflowEdge> = Vec::new();
    let mut edge = |from: &str, to: &str, loop_bound: Option<u32>| {
        let e = WorkflowEdge {
            from: from.into(),
            to: to.into(),
            loop_bound,
        };
        if !edges.contains(&e) {
            edges.push(e);
        }
    };

    for group in &workflow.graph.groups {
        let sid = &group.subtask.id;
        let configs = &workflow.agent_groups[sid];
        let expansion = &expansions[sid.as_str()];
        for role in &expansion.roles {
            let config = configs
                .iter()
                .find(|c| &c.role_id == role)
                .expect("validated role set");
            nodes.push(ExecNode {
                id: agent_node_id(sid, role),
                kind: ExecNodeKind::Agent {
                    group: sid.clone(),
                    role: role.clone(),
                    prompt: resolve_prompt(&group.subtask, &group.pattern, role, config, configs),
                    config: config.clone(),
                },
            });
        }
        for e in &expansion.edges {
            edge(&agent_node_id(sid, &e.from), &agent_node_id(sid, &e.to), e.loop_bound);
        }
    }

    let entry = plan.entry_ids();
    let exit = plan.exit_ids();
    let mut branch_groups = Vec::new();
    let mut forks = Vec::new();
    let mut joins = Vec::new();

    // Where an edge into subtask `t` lands: its join node, or its entry agents.
    let inlets = |t: &str| -> Vec<String> {
        if preds[t].len() > 1 {
            vec![join_id(t)]
        } else {
            expansions[t].entry.iter().map(|r| agent_node_id(t, r)).collect()
        }
    };
    let outlets = |s: &str| -> Vec<String> {
        expansions[s].exit.iter().map(|r| agent_node_id(s, r)).collect()
    };

    if entry.len() > 1 {
        let fork = fork_id(START);
        edge(START, &fork, None);
        for t in &entry {
            for inlet in inlets(t) {
                edge(&fork, &inlet, None);
            }
        }
        branch_groups.push(BranchGroup {
            fork: fork.clone(),
            branches: entry.clone(),
        });
        forks.push(fork);
    } else {
        for inlet in inlets(&entry[0]) {
            edge(START, &inlet, None);
        }
    }

    for s in &plan.subtasks {
        let mut successors: Vec<&String> = s.successors.iter().collect::<BTreeSet<_>>().into_iter().collect();
        successors.sort();
        if preds[&s.id].len() > 1 {
            let join = join_id(&s.id);
            for inlet in expansions[s.id.as_str()].entry.iter().map(|r| agent_node_id(&s.id, r)) {
                edge(&join, &inlet, None);
            }
            joins.push(join);
        }
        match successors.len() {
            0 => {}
            1 => {
                for out in outlets(&s.id) {
                    for inlet in inlets(successors[0]) {
                        edge(&out, &inlet, None);
                    }
                }
            }
            _ => {
                let fork = fork_id(&s.id);
                for out in outlets(&s.id) {
                    edge(&out, &fork, None);
                }
                for t in &successors {
                    for inlet in inlets(t) {
                        edge(&fork, &inlet, None);
                    }
                }
                branch_groups.push(BranchGroup {
                    fork: fork.clone(),
                    branches: successors.iter().map(|t| t.to_string()).collect(),
                });
                forks.push(fork);
            }
        }
    }

    if exit.len() > 1 {
        let join = join_id(END);
        for s in &exit {
            for out in outlets(s) {
                edge(&out, &join, None);
            }
        }
        edge(&join, END, None);
        joins.push(join);
    } else {
        for out in outlets(&exit[0]) {
            edge(&out, END, None);
        }
    }

    nodes.extend(forks.into_iter().map(|id| ExecNode {
        id,
        kind: ExecNodeKind::Fork,
    }));
    nodes.extend(joins.into_iter().map(|id| ExecNode {
        id,
        kind: ExecNodeKind::Join,
    }));
    nodes.push(ExecNode {
        id: END.into(),
        kind: ExecNodeKind::End,
    });

    let schedule = schedule(&nodes, &edges);
    let groups = workflow
        .graph
        .groups
        .iter()
        .map(|g| ExecGroup {
            subtask: g.subtask.clone(),
            pattern: g.pattern.clone(),
            predecessors: preds[&g.subtask.id].clone(),
        })
        .collect();
    Ok(ExecutableGraph {
        workflow_id: workflow.id.clone(),
        nodes,
        edges,
        groups,
        schedule,
        branch_groups,
        entry,
        exit,
    })
}

/// Kahn's algorithm over non-loop edges; ties go to the earlier node.
fn schedule(nodes: &[ExecNode], edges: &[WorkflowEdge]) -> Vec<String> {
    let position: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut indegree = vec![0usize; nodes.len()];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for e in edges.iter().filter(|e| e.loop_bound.is_none()) {
        let (a, b) = (position[e.from.as_str()], position[e.to.as_str()]);
        out[a].push(b);
        indegree[b] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..nodes.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(i) = ready.pop_first() {
        order.push(nodes[i].id.clone());
        for &j in &out[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert(j);
            }
        }
    }
    order
}

fn resolve_prompt(
    subtask: &SubTask,
    pattern: &PatternParams,
    role: &str,
    config: &AgentConfig,
    group: &[AgentConfig],
) -> String {
    let mut p = role_marker(role);
    let _ = writeln!(p, "You are {}.", config.persona.trim());
    let _ = writeln!(p, "Goal: {}", config.goal.trim());
    let _ = writeln!(p, "Subtask: {}", subtask.label);
    if !subtask.description.is_empty() {
        let _ = writeln!(p, "Subtask description: {}", subtask.description);
    }
    if !config.input_format.is_empty() {
        let _ = writeln!(p, "You receive: {}", config.input_format);
    }
    if !config.output_format.is_empty() {
        let _ = writeln!(p, "Respond with: {}", config.output_format);
    } else if !subtask.output_format.is_empty() {
        let _ = writeln!(p, "Respond with: {}", subtask.output_format);
    }
    if !config.tools.is_empty() {
        let _ = writeln!(p, "Tools you may use: {}", config.tools.join(", "));
    }
    if let Some(source) = &config.retrieval_source {
        let _ = writeln!(p, "Ground your answer in the data source: {source}");
    }
    match (pattern, role) {
        (PatternParams::Reflection { criterion, .. }, "critic") => {
            let _ = writeln!(
                p,
                "Review the draft against this criterion: {criterion}\n\
                 End your reply with APPROVE if the draft meets it, or REVISE followed by concrete feedback."
            );
        }
        (PatternParams::Reflection { .. }, "generator") => {
            let _ = writeln!(p, "If reviewer feedback is given, revise your previous draft to address it.");
        }
        (PatternParams::Supervision { .. }, "supervisor") => {
            let _ = writeln!(p, "Workers you can delegate to:");
            for worker in group.iter().filter(|c| c.role_id.starts_with("worker_")) {
                let _ = writeln!(p, "- {}: {}", worker.role_id, worker.persona);
            }
            let _ = writeln!(
                p,
                "Reply with ROUTE:<worker role> followed by instructions for that worker, \
                 or FINISH:<final answer> when the subtask is complete."
            );
        }
        (PatternParams::Redundant { .. }, "aggregator") => {
            let _ = writeln!(p, "Combine the labeled responses into a single answer.");
        }
        (PatternParams::Discussion { num_agents, num_rounds, .. }, r) if r.starts_with("speaker_") => {
            let _ = writeln!(
                p,
                "You are one of {num_agents} participants in a discussion lasting {num_rounds} rounds. \
                 Build on what others said and contribute your own perspective."
            );
        }
        (PatternParams::Discussion { .. }, "summarizer") => {
            let _ = writeln!(p, "Summarize the discussion into the final answer for the subtask.");
        }
        _ => {}
    }
    p
}

/// Virtual-node-free view of an executable graph, used to compare against
/// imported exports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphShape {
    /// Node id to label (`agent:<group>/<role>`, `fork`, `join`).
    pub nodes: BTreeMap<String, String>,
    pub edges: BTreeSet<(String, String, Option<u32>)>,
}

impl ExecutableGraph {
    pub fn shape_without_virtual(&self) -> GraphShape {
        let nodes = self
            .nodes
            .iter()
            .filter(|n| !n.is_virtual())
            .map(|n| (n.id.clone(), shape_label(&n.kind)))
            .collect::<BTreeMap<_, _>>();
        let edges = self
            .edges
            .iter()
            .filter(|e| nodes.contains_key(&e.from) && nodes.contains_key(&e.to))
            .map(|e| (e.from.clone(), e.to.clone(), e.loop_bound))
            .collect();
        GraphShape { nodes, edges }
    }

    /// Nodes reached directly from the start node.
    pub fn entry_nodes(&self) -> Vec<String> {
        self.edges
            .iter()
            .filter(|e| e.from == START)
            .map(|e| e.to.clone())
            .collect()
    }

    /// Nodes leading directly into the end node.
    pub fn exit_nodes(&self) -> Vec<String> {
        self.edges
            .iter()
            .filter(|e| e.to == END)
            .map(|e| e.from.clone())
            .collect()
    }
}

pub fn shape_label(kind: &ExecNodeKind) -> String {
    match kind {
        ExecNodeKind::Start => "start".into(),
        ExecNodeKind::End => "end".into(),
        ExecNodeKind::Fork => "fork".into(),
        ExecNodeKind::Join => "join".into(),
        ExecNodeKind::Agent { group, role, .. } => format!("agent:{}", agent_node_id(group, role)),
    }
}
