//! The exploration tree.
//!
//! A project owns a root plus candidate nodes on three levels: task plans
//! (level 1), agent assignments (level 2) and concrete workflows (level 3).
//! Each node refines its parent. The tree serves glyph descriptors, dimension
//! values and scatter-plot points.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{CandidateGenerator, GenerationError, ToolContext};
use crate::ids::IdGen;
use crate::ir::{
    dims, validate_assignment, validate_plan, validate_workflow, AgentAssignment, AgentConfig,
    ConcreteWorkflow, DimValue, Dimension, DimensionKind, DimensionSource, PatternParams, RunRecord,
    SubTask, TaskDescription, TaskPlan, ValidationReport, Violation,
};
use crate::llm::PromptLog;
use crate::patterns::{build_workflow, compose_profiles, total_agents, total_estimated_calls, LatencyProfile, PatternError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Level {
    Plan = 1,
    Assignment = 2,
    Workflow = 3,
}

impl Level {
    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn next(self) -> Option<Level> {
        match self {
            Level::Plan => Some(Level::Assignment),
            Level::Assignment => Some(Level::Workflow),
            Level::Workflow => None,
        }
    }

    pub fn previous(self) -> Option<Level> {
        match self {
            Level::Plan => None,
            Level::Assignment => Some(Level::Plan),
            Level::Workflow => Some(Level::Assignment),
        }
    }
}

impl TryFrom<u8> for Level {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Level::Plan),
            2 => Ok(Level::Assignment),
            3 => Ok(Level::Workflow),
            other => Err(format!("level must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<Level> for u8 {
    fn from(level: Level) -> u8 {
        level as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum ArtifactRef {
    Plan(String),
    Assignment(String),
    Workflow(String),
}

impl ArtifactRef {
    pub fn id(&self) -> &str {
        match self {
            ArtifactRef::Plan(id) | ArtifactRef::Assignment(id) | ArtifactRef::Workflow(id) => id,
        }
    }

    pub fn level(&self) -> Level {
        match self {
            ArtifactRef::Plan(_) => Level::Plan,
            ArtifactRef::Assignment(_) => Level::Assignment,
            ArtifactRef::Workflow(_) => Level::Workflow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpaceNode {
    pub id: String,
    pub level: Level,
    /// The project root for level-1 nodes.
    pub parent_id: String,
    pub artifact_ref: ArtifactRef,
    /// User-annotated dimension values.
    #[serde(default)]
    pub dims: BTreeMap<String, DimValue>,
    #[serde(default)]
    pub run_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Plan(TaskPlan),
    Assignment(AgentAssignment),
    Workflow(ConcreteWorkflow),
}

impl Artifact {
    pub fn level(&self) -> Level {
        match self {
            Artifact::Plan(_) => Level::Plan,
            Artifact::Assignment(_) => Level::Assignment,
            Artifact::Workflow(_) => Level::Workflow,
        }
    }

    fn id(&self) -> &str {
        match self {
            Artifact::Plan(p) => &p.id,
            Artifact::Assignment(a) => &a.id,
            Artifact::Workflow(w) => &w.id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "glyph", rename_all = "snake_case")]
pub enum GlyphDescriptor {
    /// Level 1: one arc per subtask, stacked where subtasks run in parallel.
    Arcs {
        depth: usize,
        widths: Vec<usize>,
        total_subtasks: usize,
    },
    /// Level 2: concurrent calls per pseudo-time step.
    Bars { profile: LatencyProfile },
    /// Level 3.
    File,
}

impl GlyphDescriptor {
    pub fn level(&self) -> Level {
        match self {
            GlyphDescriptor::Arcs { .. } => Level::Plan,
            GlyphDescriptor::Bars { .. } => Level::Assignment,
            GlyphDescriptor::File => Level::Workflow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Margin {
    None,
    XMargin,
    YMargin,
    Both,
}

impl Margin {
    pub fn from_undefined(x_undefined: bool, y_undefined: bool) -> Margin {
        match (x_undefined, y_undefined) {
            (false, false) => Margin::None,
            (true, false) => Margin::XMargin,
            (false, true) => Margin::YMargin,
            (true, true) => Margin::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub node_id: String,
    pub level: Level,
    pub x: Option<DimValue>,
    pub y: Option<DimValue>,
    pub margin: Margin,
    pub glyph: GlyphDescriptor,
}

/// Dimension values of one node; `None` is UNDEFINED.
pub type DimensionValues = BTreeMap<String, Option<DimValue>>;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("node {0} is already concrete")]
    AlreadyConcrete(String),
    #[error("node {0} is not a level-3 workflow")]
    NotExecutable(String),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("invalid artifact: {0}")]
    InvalidArtifact(ValidationReport),
    #[error("unknown dimension {0}")]
    UnknownDimension(String),
    #[error("reserved dimension {0}")]
    ReservedDimension(String),
    #[error("dimension {name} is {expected:?}, value is {found:?}")]
    DimensionKind {
        name: String,
        expected: DimensionKind,
        found: DimensionKind,
    },
    #[error("node {0} has derived children; edit a node without children")]
    HasChildren(String),
    #[error("edit does not apply to a level-{level} node")]
    EditLevel { level: u8 },
    #[error("run {run} belongs to workflow {found}, not {expected}")]
    RunMismatch {
        run: String,
        expected: String,
        found: String,
    },
    #[error("integrity violation: {0}")]
    Integrity(String),
}

impl From<PatternError> for DesignError {
    fn from(e: PatternError) -> Self {
        match e {
            PatternError::InvalidParams(r) | PatternError::Mismatch(r) | PatternError::InvalidWorkflow(r) => {
                DesignError::InvalidArtifact(r)
            }
        }
    }
}

/// Artifact edits accepted on an existing node, by level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeEdit {
    /// Level 1: replaces the subtask list.
    Plan { subtasks: Vec<SubTask> },
    /// Level 2: replaces the pattern of the listed subtasks.
    Assignment { assignments: BTreeMap<String, PatternParams> },
    /// Level 3: replaces the agent configs of the listed subtasks.
    Agents { agent_groups: BTreeMap<String, Vec<AgentConfig>> },
}

/// Everything needed to generate new candidates under one parent, captured
/// from a snapshot so generation can run without holding the tree.
#[derive(Debug, Clone)]
pub struct DerivationRequest {
    pub parent_id: String,
    pub level: Level,
    pub offset: usize,
    task: TaskDescription,
    existing_plans: Vec<TaskPlan>,
    plan: Option<TaskPlan>,
    assignment: Option<AgentAssignment>,
    tools: ToolContext,
    ids: Arc<IdGen>,
}

impl DerivationRequest {
    pub async fn generate(&self, generator: &dyn CandidateGenerator, k: usize) -> Result<Vec<Artifact>, GenerationError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        Ok(match self.level {
            Level::Plan => generator
                .task_plans(&self.task, k, &self.existing_plans, &self.ids)
                .await?
                .into_iter()
                .map(Artifact::Plan)
                .collect(),
            Level::Assignment => {
                let plan = self.plan.as_ref().expect("plan captured for level 2");
                generator
                    .assignments(plan, k, self.offset, &self.ids)
                    .await?
                    .into_iter()
                    .map(Artifact::Assignment)
                    .collect()
            }
            Level::Workflow => {
                let plan = self.plan.as_ref().expect("plan captured for level 3");
                let assignment = self.assignment.as_ref().expect("assignment captured for level 3");
                generator
                    .workflows(plan, assignment, k, self.offset, &self.tools, &self.ids)
                    .await?
                    .into_iter()
                    .map(Artifact::Workflow)
                    .collect()
            }
        })
    }
}

#[derive(Debug)]
pub struct DesignSpace {
    pub(crate) id: String,
    pub(crate) task: TaskDescription,
    pub(crate) created_at: DateTime<Utc>,
    pub(crate) tools: ToolContext,
    pub(crate) nodes: BTreeMap<String, DesignSpaceNode>,
    pub(crate) plans: BTreeMap<String, TaskPlan>,
    pub(crate) assignments: BTreeMap<String, AgentAssignment>,
    pub(crate) workflows: BTreeMap<String, ConcreteWorkflow>,
    pub(crate) runs: BTreeMap<String, RunRecord>,
    pub(crate) dimensions: Vec<Dimension>,
    pub(crate) prompt_log: Arc<PromptLog>,
    pub(crate) ids: Arc<IdGen>,
}

impl PartialEq for DesignSpace {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.task == other.task
            && self.created_at == other.created_at
            && self.tools == other.tools
            && self.nodes == other.nodes
            && self.plans == other.plans
            && self.assignments == other.assignments
            && self.workflows == other.workflows
            && self.runs == other.runs
            && self.dimensions == other.dimensions
            && *self.prompt_log == *other.prompt_log
            && *self.ids == *other.ids
    }
}

impl Clone for DesignSpace {
    fn clone(&self) -> Self {
        Self {
            id: self.id.clone(),
            task: self.task.clone(),
            created_at: self.created_at,
            tools: self.tools.clone(),
            nodes: self.nodes.clone(),
            plans: self.plans.clone(),
            assignments: self.assignments.clone(),
            workflows: self.workflows.clone(),
            runs: self.runs.clone(),
            dimensions: self.dimensions.clone(),
            prompt_log: Arc::new(PromptLog::from_entries(self.prompt_log.entries())),
            ids: Arc::new((*self.ids).clone()),
        }
    }
}

impl DesignSpace {
    /// A project with only its root. The project id doubles as the id scope.
    pub fn new(project_id: impl Into<String>, task: TaskDescription, created_at: DateTime<Utc>) -> Self {
        let id = project_id.into();
        Self {
            ids: Arc::new(IdGen::new(id.clone())),
            id,
            task,
            created_at,
            tools: ToolContext::default(),
            nodes: BTreeMap::new(),
            plans: BTreeMap::new(),
            assignments: BTreeMap::new(),
            workflows: BTreeMap::new(),
            runs: BTreeMap::new(),
            dimensions: Dimension::builtins(),
            prompt_log: Arc::new(PromptLog::new()),
        }
    }

    pub fn with_tools(mut self, tools: ToolContext) -> Self {
        self.tools = tools;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn root_id(&self) -> &str {
        &self.id
    }

    pub fn task(&self) -> &TaskDescription {
        &self.task
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn tools(&self) -> &ToolContext {
        &self.tools
    }

    pub fn ids(&self) -> &Arc<IdGen> {
        &self.ids
    }

    pub fn prompt_log(&self) -> &Arc<PromptLog> {
        &self.prompt_log
    }

    pub fn nodes(&self) -> impl Iterator<Item = &DesignSpaceNode> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: &str) -> Result<&DesignSpaceNode, DesignError> {
        self.nodes.get(id).ok_or_else(|| DesignError::UnknownNode(id.to_string()))
    }

    pub fn children(&self, id: &str) -> Vec<&DesignSpaceNode> {
        self.nodes.values().filter(|n| n.parent_id == id).collect()
    }

    pub fn plan(&self, id: &str) -> Option<&TaskPlan> {
        self.plans.get(id)
    }

    pub fn assignment(&self, id: &str) -> Option<&AgentAssignment> {
        self.assignments.get(id)
    }

    pub fn workflow(&self, id: &str) -> Option<&ConcreteWorkflow> {
        self.workflows.get(id)
    }

    pub fn run(&self, id: &str) -> Result<&RunRecord, DesignError> {
        self.runs.get(id).ok_or_else(|| DesignError::UnknownRun(id.to_string()))
    }

    pub fn runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.values()
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    /// The task plan a node of any level refines.
    pub fn plan_of(&self, node_id: &str) -> Result<&TaskPlan, DesignError> {
        let node = self.node(node_id)?;
        let missing = || DesignError::Integrity(format!("node {node_id} references a missing artifact"));
        match &node.artifact_ref {
            ArtifactRef::Plan(id) => self.plans.get(id).ok_or_else(missing),
            ArtifactRef::Assignment(id) => {
                let a = self.assignments.get(id).ok_or_else(missing)?;
                self.plans.get(&a.plan_id).ok_or_else(missing)
            }
            ArtifactRef::Workflow(id) => {
                let w = self.workflows.get(id).ok_or_else(missing)?;
                let a = self.assignments.get(&w.assignment_id).ok_or_else(missing)?;
                self.plans.get(&a.plan_id).ok_or_else(missing)
            }
        }
    }

    /// The assignment a level-2 or level-3 node carries or refines.
    pub fn assignment_of(&self, node_id: &str) -> Result<Option<&AgentAssignment>, DesignError> {
        let node = self.node(node_id)?;
        let missing = || DesignError::Integrity(format!("node {node_id} references a missing artifact"));
        Ok(match &node.artifact_ref {
            ArtifactRef::Plan(_) => None,
            ArtifactRef::Assignment(id) => Some(self.assignments.get(id).ok_or_else(missing)?),
            ArtifactRef::Workflow(id) => {
                let w = self.workflows.get(id).ok_or_else(missing)?;
                Some(self.assignments.get(&w.assignment_id).ok_or_else(missing)?)
            }
        })
    }

    pub fn workflow_of(&self, node_id: &str) -> Result<&ConcreteWorkflow, DesignError> {
        match &self.node(node_id)?.artifact_ref {
            ArtifactRef::Workflow(id) => self
                .workflows
                .get(id)
                .ok_or_else(|| DesignError::Integrity(format!("missing workflow {id}"))),
            _ => Err(DesignError::NotExecutable(node_id.to_string())),
        }
    }

    /// Level-3 node carrying the given workflow id (or the node id itself).
    pub fn resolve_workflow_node(&self, id: &str) -> Result<&DesignSpaceNode, DesignError> {
        if let Some(node) = self.nodes.get(id) {
            return Ok(node);
        }
        self.nodes
            .values()
            .find(|n| n.artifact_ref == ArtifactRef::Workflow(id.to_string()))
            .ok_or_else(|| DesignError::UnknownNode(id.to_string()))
    }

    /// Captures the inputs for `k` new level-1 plans under the root.
    pub fn prepare_plans(&self) -> DerivationRequest {
        self.request(self.root_id().to_string(), Level::Plan, None, None)
    }

    /// "Looks good, continue": inputs for children one level below `node_id`.
    pub fn prepare_children(&self, node_id: &str) -> Result<DerivationRequest, DesignError> {
        let node = self.node(node_id)?;
        let level = node.level.next().ok_or_else(|| DesignError::AlreadyConcrete(node_id.to_string()))?;
        let plan = self.plan_of(node_id)?.clone();
        let assignment = self.assignment_of(node_id)?.cloned();
        Ok(self.request(node_id.to_string(), level, Some(plan), assignment))
    }

    /// "Try another one": inputs for alternatives at the level of `node_id`.
    pub fn prepare_siblings(&self, node_id: &str) -> Result<DerivationRequest, DesignError> {
        let node = self.node(node_id)?;
        if node.level == Level::Plan {
            return Ok(self.prepare_plans());
        }
        self.prepare_children(&node.parent_id.clone())
    }

    fn request(
        &self,
        parent_id: String,
        level: Level,
        plan: Option<TaskPlan>,
        assignment: Option<AgentAssignment>,
    ) -> DerivationRequest {
        DerivationRequest {
            offset: self.children(&parent_id).len(),
            parent_id,
            level,
            task: self.task.clone(),
            existing_plans: self.plans.values().cloned().collect(),
            plan,
            assignment,
            tools: self.tools.clone(),
            ids: self.ids.clone(),
        }
    }

    /// Validates every artifact against the request's parent, then inserts
    /// them all as new nodes. Nothing is inserted if any artifact is rejected.
    pub fn attach(&mut self, request: &DerivationRequest, artifacts: Vec<Artifact>) -> Result<Vec<DesignSpaceNode>, DesignError> {
        let parent = &request.parent_id;
        let expected_level = if parent == self.root_id() {
            Level::Plan
        } else {
            self.node(parent)?
                .level
                .next()
                .ok_or_else(|| DesignError::AlreadyConcrete(parent.clone()))?
        };
        for artifact in &artifacts {
            if artifact.level() != expected_level {
                return Err(DesignError::Integrity(format!(
                    "level-{} artifact cannot be a child of {parent}",
                    artifact.level().number()
                )));
            }
            self.check_refines(parent, artifact)?;
        }
        let mut created = Vec::with_capacity(artifacts.len());
        for artifact in artifacts {
            let artifact_ref = match &artifact {
                Artifact::Plan(p) => ArtifactRef::Plan(p.id.clone()),
                Artifact::Assignment(a) => ArtifactRef::Assignment(a.id.clone()),
                Artifact::Workflow(w) => ArtifactRef::Workflow(w.id.clone()),
            };
            match artifact {
                Artifact::Plan(p) => self.plans.insert(p.id.clone(), p).map(|_| ()),
                Artifact::Assignment(a) => self.assignments.insert(a.id.clone(), a).map(|_| ()),
                Artifact::Workflow(w) => self.workflows.insert(w.id.clone(), w).map(|_| ()),
            };
            let node = DesignSpaceNode {
                id: self.ids.next("n"),
                level: expected_level,
                parent_id: parent.clone(),
                artifact_ref,
                dims: BTreeMap::new(),
                run_ids: Vec::new(),
            };
            self.nodes.insert(node.id.clone(), node.clone());
            created.push(node);
        }
        Ok(created)
    }

    fn check_refines(&self, parent: &str, artifact: &Artifact) -> Result<(), DesignError> {
        if self.plans.contains_key(artifact.id())
            || self.assignments.contains_key(artifact.id())
            || self.workflows.contains_key(artifact.id())
        {
            return Err(DesignError::Integrity(format!("artifact id {} already used", artifact.id())));
        }
        let report = match artifact {
            Artifact::Plan(plan) => validate_plan(plan),
            Artifact::Assignment(a) => validate_assignment(self.plan_of(parent)?, a),
            Artifact::Workflow(w) => {
                let plan = self.plan_of(parent)?;
                let assignment = self.assignment_of(parent)?.expect("level-2 parent");
                let mut report = validate_workflow(w);
                if w.assignment_id != assignment.id {
                    report.push(Violation::PlanMismatch {
                        expected: assignment.id.clone(),
                        found: w.assignment_id.clone(),
                    });
                }
                let subtasks: Vec<&SubTask> = w.graph.groups.iter().map(|g| &g.subtask).collect();
                if subtasks != plan.subtasks.iter().collect::<Vec<_>>() {
                    report.push(Violation::MissingAssignment("workflow groups differ from the plan".into()));
                }
                for group in &w.graph.groups {
                    if assignment.assignments.get(&group.subtask.id) != Some(&group.pattern) {
                        report.push(Violation::MissingAssignment(group.subtask.id.clone()));
                    }
                }
                report
            }
        };
        report.into_result().map_err(DesignError::InvalidArtifact)
    }

    pub async fn add_plans(&mut self, k: usize, generator: &dyn CandidateGenerator) -> Result<Vec<DesignSpaceNode>, DesignError> {
        let request = self.prepare_plans();
        let artifacts = request.generate(generator, k).await?;
        self.attach(&request, artifacts)
    }

    pub async fn derive_children(
        &mut self,
        node_id: &str,
        k: usize,
        generator: &dyn CandidateGenerator,
    ) -> Result<Vec<DesignSpaceNode>, DesignError> {
        let request = self.prepare_children(node_id)?;
        let artifacts = request.generate(generator, k).await?;
        self.attach(&request, artifacts)
    }

    pub async fn derive_siblings(
        &mut self,
        node_id: &str,
        k: usize,
        generator: &dyn CandidateGenerator,
    ) -> Result<Vec<DesignSpaceNode>, DesignError> {
        let request = self.prepare_siblings(node_id)?;
        let artifacts = request.generate(generator, k).await?;
        self.attach(&request, artifacts)
    }

    pub fn glyph_descriptor(&self, node_id: &str) -> Result<GlyphDescriptor, DesignError> {
        let node = self.node(node_id)?;
        Ok(match node.level {
            Level::Plan => {
                let plan = self.plan_of(node_id)?;
                let layers = plan
                    .layers()
                    .ok_or_else(|| DesignError::InvalidArtifact(validate_plan(plan)))?;
                GlyphDescriptor::Arcs {
                    depth: layers.len(),
                    widths: layers.iter().map(Vec::len).collect(),
                    total_subtasks: plan.subtasks.len(),
                }
            }
            Level::Assignment => {
                let plan = self.plan_of(node_id)?;
                let assignment = self.assignment_of(node_id)?.expect("level-2 assignment");
                GlyphDescriptor::Bars {
                    profile: compose_profiles(plan, assignment)?,
                }
            }
            Level::Workflow => GlyphDescriptor::File,
        })
    }

    /// Every registered dimension for one node, UNDEFINED where the level
    /// does not carry the information.
    pub fn compute_dimensions(&self, node_id: &str) -> Result<DimensionValues, DesignError> {
        let node = self.node(node_id)?;
        let mut values: DimensionValues = self.dimensions.iter().map(|d| (d.name.clone(), None)).collect();
        let plan = self.plan_of(node_id)?;
        values.insert(dims::NUMBER_OF_SUBTASKS.into(), Some(DimValue::Number(plan.subtasks.len() as f64)));
        if let Some(assignment) = self.assignment_of(node_id)? {
            values.insert(dims::NUMBER_OF_AGENTS.into(), Some(DimValue::Number(total_agents(assignment) as f64)));
            values.insert(
                dims::ESTIMATED_LLM_CALLS.into(),
                Some(DimValue::Number(total_estimated_calls(assignment)? as f64)),
            );
        }
        if node.level == Level::Workflow {
            let runs: Vec<&RunRecord> = node.run_ids.iter().filter_map(|id| self.runs.get(id)).collect();
            if let Some(latest) = runs.iter().rev().find(|r| r.complete) {
                values.insert(dims::RUNNING_TIME.into(), Some(DimValue::Number(latest.wall_time)));
                values.insert(dims::TOKENS.into(), Some(DimValue::Number(latest.tokens() as f64)));
            }
            let ratings: Vec<f64> = runs.iter().filter_map(|r| r.user_rating).collect();
            if !ratings.is_empty() {
                let mean = ratings.iter().sum::<f64>() / ratings.len() as f64;
                values.insert(dims::USER_RATING.into(), Some(DimValue::Number(mean)));
            }
        }
        for (name, value) in &node.dims {
            values.insert(name.clone(), Some(value.clone()));
        }
        Ok(values)
    }

    /// Points for every node on the selected node's level or the level above.
    pub fn scatter_points(&self, selected: &str, x_dim: &str, y_dim: &str) -> Result<Vec<ScatterPoint>, DesignError> {
        for name in [x_dim, y_dim] {
            if self.dimension(name).is_none() {
                return Err(DesignError::UnknownDimension(name.to_string()));
            }
        }
        let level = self.node(selected)?.level;
        let window = |l: Level| l == level || Some(l) == level.previous();
        let mut points = Vec::new();
        for node in self.nodes.values().filter(|n| window(n.level)) {
            let values = self.compute_dimensions(&node.id)?;
            let x = values.get(x_dim).cloned().flatten();
            let y = values.get(y_dim).cloned().flatten();
            points.push(ScatterPoint {
                node_id: node.id.clone(),
                level: node.level,
                margin: Margin::from_undefined(x.is_none(), y.is_none()),
                x,
                y,
                glyph: self.glyph_descriptor(&node.id)?,
            });
        }
        Ok(points)
    }

    pub fn annotate_dimension(&mut self, node_id: &str, name: &str, value: DimValue) -> Result<DesignSpaceNode, DesignError> {
        self.node(node_id)?;
        match self.dimension(name) {
            Some(d) if d.source != DimensionSource::UserAnnotated => {
                return Err(DesignError::ReservedDimension(name.to_string()));
            }
            Some(d) if d.kind != value.kind() => {
                return Err(DesignError::DimensionKind {
                    name: name.to_string(),
                    expected: d.kind,
                    found: value.kind(),
                });
            }
            Some(_) => {}
            None => {
                if name.trim().is_empty() {
                    return Err(DesignError::UnknownDimension(name.to_string()));
                }
                self.dimensions
                    .push(Dimension::new(name, value.kind(), DimensionSource::UserAnnotated));
            }
        }
        let node = self.nodes.get_mut(node_id).expect("checked above");
        node.dims.insert(name.to_string(), value);
        Ok(node.clone())
    }

    /// Stores a finished (or aborted) run under its level-3 node.
    pub fn record_run(&mut self, node_id: &str, record: RunRecord) -> Result<(), DesignError> {
        let workflow_id = self.workflow_of(node_id)?.id.clone();
        if record.workflow_id != workflow_id {
            return Err(DesignError::RunMismatch {
                run: record.id,
                expected: workflow_id,
                found: record.workflow_id,
            });
        }
        let node = self.nodes.get_mut(node_id).expect("resolved above");
        if !node.run_ids.contains(&record.id) {
            node.run_ids.push(record.id.clone());
        }
        self.runs.insert(record.id.clone(), record);
        Ok(())
    }

    pub fn rate_run(&mut self, run_id: &str, rating: f64) -> Result<RunRecord, DesignError> {
        if !rating.is_finite() {
            return Err(DesignError::DimensionKind {
                name: dims::USER_RATING.into(),
                expected: DimensionKind::Numeric,
                found: DimensionKind::Categorical,
            });
        }
        let run = self
            .runs
            .get_mut(run_id)
            .ok_or_else(|| DesignError::UnknownRun(run_id.to_string()))?;
        run.user_rating = Some(rating);
        Ok(run.clone())
    }

    /// Replaces a childless node's artifact with an edited version under the
    /// same artifact id.
    pub fn edit_node(&mut self, node_id: &str, edit: NodeEdit) -> Result<DesignSpaceNode, DesignError> {
        let node = self.node(node_id)?.clone();
        if !self.children(node_id).is_empty() {
            return Err(DesignError::HasChildren(node_id.to_string()));
        }
        let level = node.level.number();
        match (edit, &node.artifact_ref) {
            (NodeEdit::Plan { subtasks }, ArtifactRef::Plan(id)) => {
                let plan = TaskPlan::new(id.clone(), subtasks);
                validate_plan(&plan).into_result().map_err(DesignError::InvalidArtifact)?;
                self.plans.insert(id.clone(), plan);
            }
            (NodeEdit::Assignment { assignments }, ArtifactRef::Assignment(id)) => {
                let mut updated = self.assignments[id].clone();
                for (subtask, params) in assignments {
                    updated.rationales.remove(&subtask);
                    updated.assignments.insert(subtask, params);
                }
                validate_assignment(self.plan_of(node_id)?, &updated)
                    .into_result()
                    .map_err(DesignError::InvalidArtifact)?;
                self.assignments.insert(id.clone(), updated);
            }
            (NodeEdit::Agents { agent_groups }, ArtifactRef::Workflow(id)) => {
                let current = &self.workflows[id];
                let mut groups = current.agent_groups.clone();
                for (subtask, configs) in agent_groups {
                    if !groups.contains_key(&subtask) {
                        return Err(DesignError::InvalidArtifact(ValidationReport {
                            violations: vec![Violation::UnknownSubtask(subtask)],
                        }));
                    }
                    groups.insert(subtask, configs);
                }
                let plan = self.plan_of(node_id)?;
                let assignment = self.assignment_of(node_id)?.expect("level-3 assignment");
                let rebuilt = build_workflow(id.clone(), plan, assignment, groups)?;
                self.workflows.insert(id.clone(), rebuilt);
            }
            _ => return Err(DesignError::EditLevel { level }),
        }
        Ok(node)
    }

    /// Nodes with their glyphs and dimension values, in id order.
    pub fn tree(&self) -> Result<TreeView, DesignError> {
        let nodes = self
            .nodes
            .values()
            .map(|n| {
                Ok(TreeEntry {
                    node: n.clone(),
                    glyph: self.glyph_descriptor(&n.id)?,
                    dims: self.compute_dimensions(&n.id)?,
                })
            })
            .collect::<Result<_, DesignError>>()?;
        Ok(TreeView {
            root_id: self.id.clone(),
            nodes,
        })
    }

    pub fn node_detail(&self, node_id: &str) -> Result<NodeDetail, DesignError> {
        let node = self.node(node_id)?.clone();
        let artifact = match &node.artifact_ref {
            ArtifactRef::Plan(id) => serde_json::to_value(&self.plans[id]),
            ArtifactRef::Assignment(id) => serde_json::to_value(&self.assignments[id]),
            ArtifactRef::Workflow(id) => serde_json::to_value(&self.workflows[id]),
        }
        .map_err(|e| DesignError::Integrity(e.to_string()))?;
        Ok(NodeDetail {
            glyph: self.glyph_descriptor(node_id)?,
            dims: self.compute_dimensions(node_id)?,
            node,
            artifact,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeEntry {
    pub node: DesignSpaceNode,
    pub glyph: GlyphDescriptor,
    pub dims: DimensionValues,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeView {
    pub root_id: String,
    pub nodes: Vec<TreeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDetail {
    pub node: DesignSpaceNode,
    pub artifact: serde_json::Value,
    pub glyph: GlyphDescriptor,
    pub dims: DimensionValues,
}
