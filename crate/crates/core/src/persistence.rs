//! Project documents and workflow export.
//!
//! A project serializes to one canonical JSON document. Workflows export to
//! a neutral interchange file or to a LangGraph Python module; both can be
//! read back into a [`GraphShape`] for comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::design_space::{ArtifactRef, DesignError, DesignSpace, DesignSpaceNode, Level};
use crate::executor::{compile, CompileError, ExecNode, ExecNodeKind, ExecutableGraph, GraphShape, END, START};
use crate::generator::ToolContext;
use crate::ids::IdGen;
use crate::ir::{
    validate_assignment, validate_plan, validate_workflow, AgentAssignment, ConcreteWorkflow, Dimension,
    DimensionSource, PatternParams, RunRecord, TaskDescription, TaskPlan, WorkflowEdge,
};
use crate::llm::{PromptLog, PromptLogEntry};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectDocument {
    pub schema_version: String,
    pub id: String,
    pub task: TaskDescription,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub tools: ToolContext,
    /// Next value of the id counter.
    pub id_counter: u64,
    pub nodes: Vec<DesignSpaceNode>,
    pub plans: Vec<TaskPlan>,
    pub assignments: Vec<AgentAssignment>,
    pub workflows: Vec<ConcreteWorkflow>,
    pub runs: Vec<RunRecord>,
    pub dimensions: Vec<Dimension>,
    pub prompt_log: Vec<PromptLogEntry>,
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("malformed project document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {found:?}, expected {SCHEMA_VERSION:?}")]
    Version { found: String },
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ProjectDocument {
    pub fn from_space(space: &DesignSpace) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            id: space.id.clone(),
            task: space.task.clone(),
            created_at: space.created_at,
            tools: space.tools.clone(),
            id_counter: space.ids.peek(),
            nodes: space.nodes.values().cloned().collect(),
            plans: space.plans.values().cloned().collect(),
            assignments: space.assignments.values().cloned().collect(),
            workflows: space.workflows.values().cloned().collect(),
            runs: space.runs.values().cloned().collect(),
            dimensions: space.dimensions.clone(),
            prompt_log: space.prompt_log.entries(),
        }
    }

    pub fn into_space(self) -> Result<DesignSpace, PersistError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(PersistError::Version {
                found: self.schema_version,
            });
        }
        let space = DesignSpace {
            ids: Arc::new(IdGen::with_counter(self.id.clone(), self.id_counter)),
            id: self.id,
            task: self.task,
            created_at: self.created_at,
            tools: self.tools,
            nodes: unique(self.nodes, |n| n.id.clone(), "node")?,
            plans: unique(self.plans, |p| p.id.clone(), "plan")?,
            assignments: unique(self.assignments, |a| a.id.clone(), "assignment")?,
            workflows: unique(self.workflows, |w| w.id.clone(), "workflow")?,
            runs: unique(self.runs, |r| r.id.clone(), "run")?,
            dimensions: self.dimensions,
            prompt_log: Arc::new(PromptLog::from_entries(self.prompt_log)),
        };
        check_integrity(&space)?;
        Ok(space)
    }
}

fn unique<T>(items: Vec<T>, key: impl Fn(&T) -> String, what: &str) -> Result<BTreeMap<String, T>, PersistError> {
    let mut map = BTreeMap::new();
    for item in items {
        let k = key(&item);
        if map.insert(k.clone(), item).is_some() {
            return Err(PersistError::Integrity(format!("duplicate {what} id {k}")));
        }
    }
    Ok(map)
}

fn check_integrity(space: &DesignSpace) -> Result<(), PersistError> {
    let fail = |msg: String| Err(PersistError::Integrity(msg));
    let mut referenced = BTreeSet::new();
    let mut runs_seen = BTreeSet::new();

    let mut names = BTreeSet::new();
    for d in &space.dimensions {
        if !names.insert(d.name.as_str()) {
            return fail(format!("dimension {} registered twice", d.name));
        }
    }

    for node in space.nodes.values() {
        if node.artifact_ref.level() != node.level {
            return fail(format!("node {} has level {} but a level-{} artifact", node.id, node.level.number(), node.artifact_ref.level().number()));
        }
        let parent_level = if node.parent_id == space.id {
            None
        } else {
            match space.nodes.get(&node.parent_id) {
                Some(p) => Some(p.level),
                None => return fail(format!("node {} has unknown parent {}", node.id, node.parent_id)),
            }
        };
        if parent_level != node.level.previous() {
            return fail(format!("node {} sits under a node of the wrong level", node.id));
        }
        if !referenced.insert(node.artifact_ref.id().to_string()) {
            return fail(format!("artifact {} referenced by more than one node", node.artifact_ref.id()));
        }
        let report = match &node.artifact_ref {
            ArtifactRef::Plan(id) => match space.plans.get(id) {
                Some(plan) => validate_plan(plan),
                None => return fail(format!("node {} references missing plan {id}", node.id)),
            },
            ArtifactRef::Assignment(id) => {
                let Some(a) = space.assignments.get(id) else {
                    return fail(format!("node {} references missing assignment {id}", node.id));
                };
                let parent = &space.nodes[&node.parent_id];
                if parent.artifact_ref != ArtifactRef::Plan(a.plan_id.clone()) {
                    return fail(format!("assignment {id} does not refine its parent's plan"));
                }
                validate_assignment(&space.plans[&a.plan_id], a)
            }
            ArtifactRef::Workflow(id) => {
                let Some(w) = space.workflows.get(id) else {
                    return fail(format!("node {} references missing workflow {id}", node.id));
                };
                let parent = &space.nodes[&node.parent_id];
                if parent.artifact_ref != ArtifactRef::Assignment(w.assignment_id.clone()) {
                    return fail(format!("workflow {id} does not refine its parent's assignment"));
                }
                validate_workflow(w)
            }
        };
        if !report.is_valid() {
            return fail(format!("artifact {} is invalid: {report}", node.artifact_ref.id()));
        }
        for run_id in &node.run_ids {
            let Some(run) = space.runs.get(run_id) else {
                return fail(format!("node {} references missing run {run_id}", node.id));
            };
            if node.level != Level::Workflow || run.workflow_id != node.artifact_ref.id() {
                return fail(format!("run {run_id} does not belong to node {}", node.id));
            }
            runs_seen.insert(run_id.clone());
        }
        for name in node.dims.keys() {
            match space.dimension(name) {
                Some(d) if d.source == DimensionSource::UserAnnotated => {}
                _ => return fail(format!("node {} annotates unregistered dimension {name}", node.id)),
            }
        }
    }

    let artifacts = space
        .plans
        .keys()
        .chain(space.assignments.keys())
        .chain(space.workflows.keys());
    for id in artifacts {
        if !referenced.contains(id) {
            return fail(format!("orphan artifact {id}"));
        }
    }
    for id in space.runs.keys() {
        if !runs_seen.contains(id) {
            return fail(format!("orphan run {id}"));
        }
    }
    Ok(())
}

/// Canonical bytes of the project document.
pub fn save_project(space: &DesignSpace) -> Vec<u8> {
    canonical::to_vec(&ProjectDocument::from_space(space)).expect("project document serializes")
}

/// Parses and validates a project document, rejecting dangling references,
/// orphan artifacts and unknown schema versions.
pub fn load_project(bytes: &[u8]) -> Result<DesignSpace, PersistError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    if let Some(version) = value.get("schema_version") {
        if version.as_str() != Some(SCHEMA_VERSION) {
            return Err(PersistError::Version {
                found: version.to_string(),
            });
        }
    }
    let document: ProjectDocument = serde_json::from_value(value)?;
    document.into_space()
}

pub fn save_project_file(space: &DesignSpace, path: &Path) -> Result<(), PersistError> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, save_project(space))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_project_file(path: &Path) -> Result<DesignSpace, PersistError> {
    load_project(&std::fs::read(path)?)
}

pub const FLOW_INTERCHANGE: &str = "flow-interchange/v1";
pub const LANGGRAPH_PYTHON: &str = "langgraph-python";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportFormat {
    pub id: &'static str,
    pub extension: &'static str,
    pub media_type: &'static str,
}

pub fn export_formats() -> Vec<ExportFormat> {
    vec![
        ExportFormat {
            id: FLOW_INTERCHANGE,
            extension: "flow.json",
            media_type: "application/json",
        },
        ExportFormat {
            id: LANGGRAPH_PYTHON,
            extension: "py",
            media_type: "text/x-python",
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportGroup {
    pub subtask_id: String,
    pub label: String,
    pub pattern: PatternParams,
    pub nodes: Vec<String>,
}

/// Format-neutral description of an executable workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportDocument {
    pub format_id: String,
    pub workflow_id: String,
    pub task: String,
    pub groups: Vec<ExportGroup>,
    pub nodes: Vec<ExecNode>,
    /// Edges with a `loop_bound` are bounded back edges.
    pub edges: Vec<WorkflowEdge>,
    pub entry: Vec<String>,
    pub exit: Vec<String>,
}

impl ExportDocument {
    pub fn from_graph(format_id: &str, task: &str, graph: &ExecutableGraph) -> Self {
        let groups = graph
            .groups
            .iter()
            .map(|g| ExportGroup {
                subtask_id: g.subtask.id.clone(),
                label: g.subtask.label.clone(),
                pattern: g.pattern.clone(),
                nodes: graph
                    .nodes
                    .iter()
                    .filter(|n| matches!(&n.kind, ExecNodeKind::Agent { group, .. } if *group == g.subtask.id))
                    .map(|n| n.id.clone())
                    .collect(),
            })
            .collect();
        Self {
            format_id: format_id.to_string(),
            workflow_id: graph.workflow_id.clone(),
            task: task.to_string(),
            groups,
            nodes: graph.nodes.clone(),
            edges: graph.edges.clone(),
            entry: graph.entry_nodes(),
            exit: graph.exit_nodes(),
        }
    }

    pub fn shape(&self) -> GraphShape {
        let as_graph = ExecutableGraph {
            workflow_id: self.workflow_id.clone(),
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            groups: Vec::new(),
            schedule: Vec::new(),
            branch_groups: Vec::new(),
            entry: Vec::new(),
            exit: Vec::new(),
        };
        as_graph.shape_without_virtual()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportArtifact {
    pub format_id: String,
    pub file_name: String,
    pub media_type: String,
    pub content: String,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("unknown export format {0}")]
    UnknownFormat(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("cannot import: {0}")]
    Import(String),
}

/// Exports the workflow of a level-3 node.
pub fn export_workflow(space: &DesignSpace, node_id: &str, format_id: &str) -> Result<ExportArtifact, ExportError> {
    let format = export_formats()
        .into_iter()
        .find(|f| f.id == format_id)
        .ok_or_else(|| ExportError::UnknownFormat(format_id.to_string()))?;
    let workflow = space.workflow_of(node_id)?;
    let graph = compile(workflow)?;
    let document = ExportDocument::from_graph(format_id, &space.task().text, &graph);
    let content = match format.id {
        FLOW_INTERCHANGE => canonical::to_string(&document).expect("export serializes"),
        _ => render_langgraph(&document),
    };
    Ok(ExportArtifact {
        format_id: format.id.to_string(),
        file_name: format!("{}.{}", workflow.id, format.extension),
        media_type: format.media_type.to_string(),
        content,
    })
}

pub fn import_flow(bytes: &[u8]) -> Result<GraphShape, ExportError> {
    let document: ExportDocument = serde_json::from_slice(bytes).map_err(|e| ExportError::Import(e.to_string()))?;
    if document.format_id != FLOW_INTERCHANGE {
        return Err(ExportError::UnknownFormat(document.format_id));
    }
    Ok(document.shape())
}

const LG_START: &str = "__start__";
const LG_END: &str = "__end__";

fn py_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn lg_endpoint(id: &str) -> String {
    match id {
        START => "START".into(),
        END => "END".into(),
        other => py_str(other),
    }
}

fn lg_name(id: &str) -> &str {
    match id {
        START => LG_START,
        END => LG_END,
        other => other,
    }
}

/// Renders an export document as a LangGraph Python module.
pub fn render_langgraph(doc: &ExportDocument) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Workflow {}\n", doc.workflow_id));
    out.push_str(&format!("# Task: {}\n", doc.task.lines().next().unwrap_or_default()));
    out.push_str(
        r#"import operator
from typing import Annotated, TypedDict

from langgraph.graph import END, START, StateGraph


class State(TypedDict, total=False):
    input: str
    outputs: Annotated[dict, operator.or_]
    iterations: Annotated[dict, operator.or_]


def call_llm(prompt: str, model: str, temperature: float) -> str:
    raise NotImplementedError("connect a chat model here")


"#,
    );
    out.push_str("AGENTS = {\n");
    for node in &doc.nodes {
        if let ExecNodeKind::Agent { prompt, config, .. } = &node.kind {
            let spec = serde_json::json!({
                "prompt": prompt,
                "model": config.model_id,
                "temperature": config.temperature,
            });
            out.push_str(&format!("    {}: {},\n", py_str(&node.id), spec));
        }
    }
    out.push_str("}\n\n");

    let (loops, forward): (Vec<&WorkflowEdge>, Vec<&WorkflowEdge>) = doc.edges.iter().partition(|e| e.loop_bound.is_some());
    let looping: BTreeSet<&str> = loops.iter().map(|e| e.from.as_str()).collect();
    out.push_str("LOOPS = {\n");
    for edge in &loops {
        let then: Vec<&str> = forward
            .iter()
            .filter(|e| e.from == edge.from)
            .map(|e| lg_name(&e.to))
            .collect();
        let spec = serde_json::json!({
            "target": lg_name(&edge.to),
            "max_iterations": edge.loop_bound,
            "then": then,
        });
        out.push_str(&format!("    {}: {},\n", py_str(&edge.from), spec));
    }
    out.push_str("}\n\n");

    out.push_str(
        r###"
def agent(node_id):
    spec = AGENTS[node_id]

    def run(state: State) -> State:
        upstream = "\n\n".join(f"## {k}\n{v}" for k, v in sorted(state.get("outputs", {}).items()))
        prompt = f"{spec['prompt']}\n## Input\n{state.get('input', '')}\n{upstream}"
        return {"outputs": {node_id: call_llm(prompt, spec["model"], spec["temperature"])}}

    return run


def fork_node(state: State) -> State:
    return {}


def join_node(state: State) -> State:
    return {}


def loop_router(node_id):
    spec = LOOPS[node_id]

    def route(state: State):
        done = state.get("iterations", {}).get(node_id, 0) + 1
        reply = state.get("outputs", {}).get(node_id, "")
        if done < spec["max_iterations"] and not reply.rstrip().endswith(("APPROVE", "FINISH")):
            return spec["target"]
        return spec["then"] or END

    return route


graph = StateGraph(State)
"###,
    );
    for node in &doc.nodes {
        let body = match node.kind {
            ExecNodeKind::Agent { .. } => format!("agent({})", py_str(&node.id)),
            ExecNodeKind::Fork => "fork_node".into(),
            ExecNodeKind::Join => "join_node".into(),
            ExecNodeKind::Start | ExecNodeKind::End => continue,
        };
        out.push_str(&format!("graph.add_node({}, {body})\n", py_str(&node.id)));
    }
    for edge in &forward {
        if looping.contains(edge.from.as_str()) {
            continue;
        }
        out.push_str(&format!("graph.add_edge({}, {})\n", lg_endpoint(&edge.from), lg_endpoint(&edge.to)));
    }
    for edge in &loops {
        let mut targets = vec![lg_name(&edge.to).to_string()];
        targets.extend(
            forward
                .iter()
                .filter(|e| e.from == edge.from)
                .map(|e| lg_name(&e.to).to_string()),
        );
        out.push_str(&format!(
            "graph.add_conditional_edges({}, loop_router({}), {})\n",
            py_str(&edge.from),
            py_str(&edge.from),
            serde_json::to_string(&targets).expect("targets serialize").replace(&py_str(LG_END), "END"),
        ));
    }
    out.push_str("\napp = graph.compile()\n");
    out
}

/// Reads the graph structure back out of a generated LangGraph module.
pub fn import_langgraph(source: &str) -> Result<GraphShape, ExportError> {
    let bad = |line: &str| ExportError::Import(format!("unrecognized line: {line}"));
    let mut nodes = BTreeMap::new();
    let mut edges = BTreeSet::new();
    let mut in_loops = false;
    for raw in source.lines() {
        let line = raw.trim();
        if line == "LOOPS = {" {
            in_loops = true;
            continue;
        }
        if in_loops {
            if line == "}" {
                in_loops = false;
                continue;
            }
            let entry: BTreeMap<String, serde_json::Value> =
                serde_json::from_str(&format!("{{{}}}", line.trim_end_matches(','))).map_err(|_| bad(line))?;
            for (from, spec) in entry {
                let target = spec["target"].as_str().ok_or_else(|| bad(line))?;
                let bound = spec["max_iterations"].as_u64().ok_or_else(|| bad(line))? as u32;
                edges.insert((from.clone(), target.to_string(), Some(bound)));
                for then in spec["then"].as_array().ok_or_else(|| bad(line))? {
                    let to = then.as_str().ok_or_else(|| bad(line))?;
                    if to != LG_END {
                        edges.insert((from.clone(), to.to_string(), None));
                    }
                }
            }
        } else if let Some(args) = line.strip_prefix("graph.add_node(").and_then(|s| s.strip_suffix(')')) {
            let (id, body) = args.split_once(", ").ok_or_else(|| bad(line))?;
            let id: String = serde_json::from_str(id).map_err(|_| bad(line))?;
            let label = if body.starts_with("agent(") {
                format!("agent:{id}")
            } else if body == "fork_node" {
                "fork".to_string()
            } else if body == "join_node" {
                "join".to_string()
            } else {
                return Err(bad(line));
            };
            nodes.insert(id, label);
        } else if let Some(args) = line.strip_prefix("graph.add_edge(").and_then(|s| s.strip_suffix(')')) {
            let endpoints: Vec<Option<String>> =
                serde_json::from_str(&format!("[{}]", args.replace("START", "null").replace("END", "null")))
                    .map_err(|_| bad(line))?;
            if let [from, to] = endpoints.as_slice() {
                if let (Some(from), Some(to)) = (from, to) {
                    edges.insert((from.clone(), to.clone(), None));
                }
            } else {
                return Err(bad(line));
            }
        }
    }
    Ok(GraphShape { nodes, edges })
}
