//! Validated data model for the three abstraction levels.
//!
//! * Level 1: [`TaskPlan`], a DAG of [`SubTask`]s.
//! * Level 2: [`AgentAssignment`], one collaboration pattern per subtask.
//! * Level 3: [`ConcreteWorkflow`], agent configurations bound to pattern roles
//!   plus the fully expanded agent graph.
//!
//! Values are plain data. Validators report violations as data rather than
//! failing, so callers can surface every problem at once.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize, Serializer};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const MAX_TEMPERATURE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescription {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<String>,
}

impl TaskDescription {
    pub fn new(text: impl Into<String>) -> Result<Self, Violation> {
        let task = Self {
            text: text.into(),
            constraints: None,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn with_constraints(mut self, constraints: impl Into<String>) -> Self {
        self.constraints = Some(constraints.into());
        self
    }

    pub fn validate(&self) -> Result<(), Violation> {
        if self.text.trim().is_empty() {
            return Err(Violation::EmptyTask);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTask {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub output_format: String,
    #[serde(default)]
    pub successors: Vec<String>,
}

impl SubTask {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            description: String::new(),
            output_format: String::new(),
            successors: Vec::new(),
        }
    }

    pub fn then(mut self, successor: impl Into<String>) -> Self {
        self.successors.push(successor.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub id: String,
    pub subtasks: Vec<SubTask>,
}

impl TaskPlan {
    pub fn new(id: impl Into<String>, subtasks: Vec<SubTask>) -> Self {
        Self {
            id: id.into(),
            subtasks,
        }
    }

    pub fn subtask(&self, id: &str) -> Option<&SubTask> {
        self.subtasks.iter().find(|s| s.id == id)
    }

    /// Subtasks without predecessors, in id order.
    pub fn entry_ids(&self) -> Vec<String> {
        let targets: BTreeSet<&str> = self
            .subtasks
            .iter()
            .flat_map(|s| s.successors.iter().map(String::as_str))
            .collect();
        let mut ids: Vec<String> = self
            .subtasks
            .iter()
            .filter(|s| !targets.contains(s.id.as_str()))
            .map(|s| s.id.clone())
            .collect();
        ids.sort();
        ids
    }

    /// Subtasks without successors, in id order.
    pub fn exit_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .subtasks
            .iter()
            .filter(|s| s.successors.is_empty())
            .map(|s| s.id.clone())
            .collect();
        ids.sort();
        ids
    }

    /// Predecessor ids of every subtask, each list sorted.
    pub fn predecessors(&self) -> BTreeMap<String, Vec<String>> {
        let mut preds: BTreeMap<String, Vec<String>> = self
            .subtasks
            .iter()
            .map(|s| (s.id.clone(), Vec::new()))
            .collect();
        for s in &self.subtasks {
            for t in &s.successors {
                if let Some(list) = preds.get_mut(t) {
                    if !list.contains(&s.id) {
                        list.push(s.id.clone());
                    }
                }
            }
        }
        for list in preds.values_mut() {
            list.sort();
        }
        preds
    }

    /// Kahn's algorithm with id-order tie breaking. `None` when the graph has a
    /// cycle or dangling references.
    pub fn topological_order(&self) -> Option<Vec<&SubTask>> {
        let index: HashMap<&str, &SubTask> =
            self.subtasks.iter().map(|s| (s.id.as_str(), s)).collect();
        if index.len() != self.subtasks.len() {
            return None;
        }
        let mut indegree: BTreeMap<&str, usize> = index.keys().map(|k| (*k, 0)).collect();
        for s in &self.subtasks {
            for t in dedup(&s.successors) {
                *indegree.get_mut(t.as_str())? += 1;
            }
        }
        let mut ready: BTreeSet<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(k, _)| *k)
            .collect();
        let mut order = Vec::with_capacity(self.subtasks.len());
        while let Some(id) = ready.pop_first() {
            let s = index[id];
            order.push(s);
            for t in dedup(&s.successors) {
                let d = indegree.get_mut(t.as_str())?;
                *d -= 1;
                if *d == 0 {
                    ready.insert(t.as_str());
                }
            }
        }
        (order.len() == self.subtasks.len()).then_some(order)
    }

    /// Longest distance from any entry, per subtask. `None` unless the plan is a DAG.
    pub fn longest_distances(&self) -> Option<BTreeMap<String, usize>> {
        let order = self.topological_order()?;
        let mut dist: BTreeMap<String, usize> =
            order.iter().map(|s| (s.id.clone(), 0)).collect();
        for s in order {
            let d = dist[&s.id];
            for t in &s.successors {
                let entry = dist.get_mut(t)?;
                *entry = (*entry).max(d + 1);
            }
        }
        Some(dist)
    }

    /// Subtasks grouped by longest distance from an entry; each layer is sorted by id.
    pub fn layers(&self) -> Option<Vec<Vec<String>>> {
        let dist = self.longest_distances()?;
        let depth = dist.values().copied().max().map_or(0, |d| d + 1);
        let mut layers = vec![Vec::new(); depth];
        for (id, d) in dist {
            layers[d].push(id);
        }
        Some(layers)
    }
}

fn dedup(ids: &[String]) -> BTreeSet<&String> {
    ids.iter().collect()
}

/// The seven design patterns. `Sequential` and `Parallel` describe plan
/// topology and are never assigned to a subtask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatternKind {
    Sequential,
    Parallel,
    Reflection,
    Redundant,
    Supervision,
    Discussion,
    SingleAgent,
}

impl PatternKind {
    pub const ALL: [PatternKind; 7] = [
        PatternKind::Sequential,
        PatternKind::Parallel,
        PatternKind::Reflection,
        PatternKind::Redundant,
        PatternKind::Supervision,
        PatternKind::Discussion,
        PatternKind::SingleAgent,
    ];

    /// Kinds that can be assigned to a subtask.
    pub const ASSIGNABLE: [PatternKind; 5] = [
        PatternKind::Reflection,
        PatternKind::Redundant,
        PatternKind::Supervision,
        PatternKind::Discussion,
        PatternKind::SingleAgent,
    ];

    pub fn is_structural(self) -> bool {
        matches!(self, PatternKind::Sequential | PatternKind::Parallel)
    }

    pub fn display_name(self) -> &'static str {
        match self {
            PatternKind::Sequential => "Sequential",
            PatternKind::Parallel => "Parallel",
            PatternKind::Reflection => "Reflection",
            PatternKind::Redundant => "Redundant",
            PatternKind::Supervision => "Supervision",
            PatternKind::Discussion => "Discussion",
            PatternKind::SingleAgent => "Single Agent",
        }
    }

    /// Lenient name lookup: case, spaces, dashes and underscores are ignored
    /// and a few common synonyms are accepted.
    pub fn from_name(name: &str) -> Option<PatternKind> {
        let key: String = name
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        Some(match key.as_str() {
            "sequential" => PatternKind::Sequential,
            "parallel" => PatternKind::Parallel,
            "reflection" => PatternKind::Reflection,
            "redundant" | "redundancy" => PatternKind::Redundant,
            "supervision" | "supervisor" => PatternKind::Supervision,
            "discussion" | "groupchat" => PatternKind::Discussion,
            "singleagent" | "single" => PatternKind::SingleAgent,
            _ => return None,
        })
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnOrder {
    RoundRobin,
    Random,
    Simultaneous,
}

/// Pattern parameters, tagged with their kind.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PatternParams {
    Reflection {
        max_iterations: u32,
        #[serde(default)]
        criterion: String,
    },
    Redundant {
        num_agents: u32,
        aggregate: bool,
    },
    Supervision {
        num_workers: u32,
        max_rounds: u32,
    },
    Discussion {
        num_agents: u32,
        num_rounds: u32,
        turn_order: TurnOrder,
        summarize: bool,
    },
    SingleAgent,
}

pub const DEFAULT_REFLECTION_CRITERION: &str =
    "The response completely addresses the subtask and follows the requested output format.";

impl PatternParams {
    pub fn kind(&self) -> PatternKind {
        match self {
            PatternParams::Reflection { .. } => PatternKind::Reflection,
            PatternParams::Redundant { .. } => PatternKind::Redundant,
            PatternParams::Supervision { .. } => PatternKind::Supervision,
            PatternParams::Discussion { .. } => PatternKind::Discussion,
            PatternParams::SingleAgent => PatternKind::SingleAgent,
        }
    }

    /// Default parameters for an assignable kind; `None` for plan topology kinds.
    pub fn defaults(kind: PatternKind) -> Option<PatternParams> {
        Some(match kind {
            PatternKind::Reflection => PatternParams::Reflection {
                max_iterations: 3,
                criterion: DEFAULT_REFLECTION_CRITERION.to_string(),
            },
            PatternKind::Redundant => PatternParams::Redundant {
                num_agents: 3,
                aggregate: true,
            },
            PatternKind::Supervision => PatternParams::Supervision {
                num_workers: 3,
                max_rounds: 3,
            },
            PatternKind::Discussion => PatternParams::Discussion {
                num_agents: 3,
                num_rounds: 3,
                turn_order: TurnOrder::RoundRobin,
                summarize: true,
            },
            PatternKind::SingleAgent => PatternParams::SingleAgent,
            PatternKind::Sequential | PatternKind::Parallel => return None,
        })
    }

    /// Role names of the expansion template, in canonical order.
    pub fn roles(&self) -> Vec<String> {
        fn numbered(prefix: &str, n: u32) -> impl Iterator<Item = String> + '_ {
            (1..=n).map(move |i| format!("{prefix}_{i}"))
        }
        match self {
            PatternParams::SingleAgent => vec!["agent".to_string()],
            PatternParams::Reflection { .. } => vec!["generator".into(), "critic".into()],
            PatternParams::Redundant {
                num_agents,
                aggregate,
            } => {
                let mut roles: Vec<String> = numbered("worker", *num_agents).collect();
                if *aggregate {
                    roles.push("aggregator".into());
                }
                roles
            }
            PatternParams::Supervision { num_workers, .. } => {
                let mut roles = vec!["supervisor".to_string()];
                roles.extend(numbered("worker", *num_workers));
                roles
            }
            PatternParams::Discussion {
                num_agents,
                summarize,
                ..
            } => {
                let mut roles: Vec<String> = numbered("speaker", *num_agents).collect();
                if *summarize {
                    roles.push("summarizer".into());
                }
                roles
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAssignment {
    pub id: String,
    pub plan_id: String,
    pub assignments: BTreeMap<String, PatternParams>,
    /// Why each pattern was suggested, when it came from the generator.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rationales: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub role_id: String,
    pub persona: String,
    pub goal: String,
    #[serde(default)]
    pub input_format: String,
    #[serde(default)]
    pub output_format: String,
    #[serde(default)]
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub tools: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_source: Option<String>,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

impl AgentConfig {
    pub fn new(role_id: impl Into<String>, persona: impl Into<String>, goal: impl Into<String>) -> Self {
        Self {
            role_id: role_id.into(),
            persona: persona.into(),
            goal: goal.into(),
            input_format: String::new(),
            output_format: String::new(),
            model_id: String::new(),
            temperature: DEFAULT_TEMPERATURE,
            tools: Vec::new(),
            retrieval_source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub subtask: SubTask,
    pub pattern: PatternParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentNode {
    pub id: String,
    pub group: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorkflowEdge {
    pub from: String,
    pub to: String,
    /// Present on loop edges: the maximum number of times the loop is taken.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_bound: Option<u32>,
}

/// Expanded node-link structure of a concrete workflow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowGraph {
    pub groups: Vec<GroupSpec>,
    pub nodes: Vec<AgentNode>,
    pub edges: Vec<WorkflowEdge>,
}

impl WorkflowGraph {
    pub fn group(&self, subtask_id: &str) -> Option<&GroupSpec> {
        self.groups.iter().find(|g| g.subtask.id == subtask_id)
    }

    /// The subtask-level plan the groups were expanded from.
    pub fn plan(&self, id: &str) -> TaskPlan {
        TaskPlan::new(id, self.groups.iter().map(|g| g.subtask.clone()).collect())
    }
}

pub fn agent_node_id(subtask_id: &str, role: &str) -> String {
    format!("{subtask_id}/{role}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteWorkflow {
    pub id: String,
    pub assignment_id: String,
    pub agent_groups: BTreeMap<String, Vec<AgentConfig>>,
    pub graph: WorkflowGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionSource {
    Computed,
    Measured,
    UserAnnotated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub kind: DimensionKind,
    pub source: DimensionSource,
}

pub mod dims {
    pub const NUMBER_OF_SUBTASKS: &str = "number_of_subtasks";
    pub const NUMBER_OF_AGENTS: &str = "number_of_agents";
    pub const ESTIMATED_LLM_CALLS: &str = "estimated_llm_calls";
    pub const RUNNING_TIME: &str = "running_time";
    pub const TOKENS: &str = "tokens";
    pub const USER_RATING: &str = "user_rating";
}

impl Dimension {
    pub fn new(name: impl Into<String>, kind: DimensionKind, source: DimensionSource) -> Self {
        Self {
            name: name.into(),
            kind,
            source,
        }
    }

    pub fn builtins() -> Vec<Dimension> {
        use DimensionKind::Numeric;
        vec![
            Dimension::new(dims::NUMBER_OF_SUBTASKS, Numeric, DimensionSource::Computed),
            Dimension::new(dims::NUMBER_OF_AGENTS, Numeric, DimensionSource::Computed),
            Dimension::new(dims::ESTIMATED_LLM_CALLS, Numeric, DimensionSource::Computed),
            Dimension::new(dims::RUNNING_TIME, Numeric, DimensionSource::Measured),
            Dimension::new(dims::TOKENS, Numeric, DimensionSource::Measured),
            Dimension::new(dims::USER_RATING, Numeric, DimensionSource::UserAnnotated),
        ]
    }
}

/// A dimension value. UNDEFINED is modelled as `Option::None` (JSON `null`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimValue {
    Number(f64),
    Text(String),
}

impl DimValue {
    pub fn kind(&self) -> DimensionKind {
        match self {
            DimValue::Number(_) => DimensionKind::Numeric,
            DimValue::Text(_) => DimensionKind::Categorical,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            DimValue::Number(v) => Some(*v),
            DimValue::Text(_) => None,
        }
    }
}

impl From<f64> for DimValue {
    fn from(v: f64) -> Self {
        DimValue::Number(v)
    }
}

impl From<&str> for DimValue {
    fn from(v: &str) -> Self {
        DimValue::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RunEvent {
    Call {
        node: String,
        call_index: u64,
        tokens_in: u64,
        tokens_out: u64,
    },
    SubtaskDone {
        subtask: String,
    },
    Aborted {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub workflow_id: String,
    pub started_at: DateTime<Utc>,
    /// Seconds.
    pub wall_time: f64,
    pub llm_calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub node_outputs: BTreeMap<String, String>,
    pub final_output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_rating: Option<f64>,
    #[serde(default)]
    pub custom_values: BTreeMap<String, DimValue>,
    /// False when the run was aborted before the end node.
    #[serde(default = "yes")]
    pub complete: bool,
    #[serde(default)]
    pub events: Vec<RunEvent>,
}

fn yes() -> bool {
    true
}

impl RunRecord {
    pub fn tokens(&self) -> u64 {
        self.tokens_in + self.tokens_out
    }
}

/// One broken invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyTask,
    EmptyPlan,
    DuplicateSubtask(String),
    SelfLoop(String),
    DanglingSuccessor(String),
    Cycle(BTreeSet<String>),
    Unreachable(String),
    NoExit,
    Bound { field: &'static str, message: String },
    KindMismatch { expected: PatternKind, found: PatternKind },
    StructuralKind(PatternKind),
    PlanMismatch { expected: String, found: String },
    MissingAssignment(String),
    UnknownSubtask(String),
    AgentField { role: String, message: String },
    GroupWithoutAgents(String),
    RoleMismatch { subtask: String, expected: Vec<String>, found: Vec<String> },
    UnknownGroup(String),
    DuplicateNode(String),
    UnknownNode(String),
    GraphCycle,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTask => write!(f, "task description is empty"),
            Violation::EmptyPlan => write!(f, "at least one subtask"),
            Violation::DuplicateSubtask(id) => write!(f, "duplicate subtask id {id}"),
            Violation::SelfLoop(id) => write!(f, "self-loop on {id}"),
            Violation::DanglingSuccessor(id) => write!(f, "dangling successor {id}"),
            Violation::Cycle(ids) => {
                let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
                write!(f, "cycle: {{{}}}", ids.join(","))
            }
            Violation::Unreachable(id) => write!(f, "subtask {id} unreachable from any entry"),
            Violation::NoExit => write!(f, "plan has no exit subtask"),
            Violation::Bound { message, .. } => f.write_str(message),
            Violation::KindMismatch { expected, found } => {
                write!(f, "parameters for {found} given where {expected} expected")
            }
            Violation::StructuralKind(kind) => {
                write!(f, "{kind} is plan topology and cannot be assigned to a subtask")
            }
            Violation::PlanMismatch { expected, found } => {
                write!(f, "assignment targets plan {found}, expected {expected}")
            }
            Violation::MissingAssignment(id) => write!(f, "subtask {id} has no pattern assigned"),
            Violation::UnknownSubtask(id) => write!(f, "unknown subtask {id}"),
            Violation::AgentField { role, message } => write!(f, "agent {role}: {message}"),
            Violation::GroupWithoutAgents(id) => write!(f, "subtask {id} has no agents"),
            Violation::RoleMismatch {
                subtask,
                expected,
                found,
            } => write!(
                f,
                "subtask {subtask}: roles [{}] do not match template [{}]",
                found.join(", "),
                expected.join(", ")
            ),
            Violation::UnknownGroup(id) => write!(f, "node references unknown group {id}"),
            Violation::DuplicateNode(id) => write!(f, "duplicate node id {id}"),
            Violation::UnknownNode(id) => write!(f, "edge references unknown node {id}"),
            Violation::GraphCycle => write!(f, "agent graph has a cycle outside loop edges"),
        }
    }
}

impl Serialize for Violation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, violation: Violation) {
        self.violations.push(violation);
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }

    pub fn into_result(self) -> Result<(), ValidationReport> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.messages().join("; "))
    }
}

impl std::error::Error for ValidationReport {}

pub fn validate_plan(plan: &TaskPlan) -> ValidationReport {
    let mut report = ValidationReport::default();
    if plan.subtasks.is_empty() {
        report.push(Violation::EmptyPlan);
        return report;
    }
    let mut seen = BTreeSet::new();
    for s in &plan.subtasks {
        if !seen.insert(s.id.as_str()) {
            report.push(Violation::DuplicateSubtask(s.id.clone()));
        }
    }
    let mut dangling = BTreeSet::new();
    for s in &plan.subtasks {
        for t in &s.successors {
            if t == &s.id {
                report.push(Violation::SelfLoop(s.id.clone()));
            } else if !seen.contains(t.as_str()) {
                dangling.insert(t.clone());
            }
        }
    }
    report
        .violations
        .extend(dangling.into_iter().map(Violation::DanglingSuccessor));

    let sccs = strongly_connected(plan);
    let mut cyclic = BTreeSet::new();
    for component in sccs.into_iter().filter(|c| c.len() > 1) {
        cyclic.extend(component.iter().cloned());
        report.push(Violation::Cycle(component));
    }

    let entries = plan.entry_ids();
    let mut reached: BTreeSet<&str> = BTreeSet::new();
    let mut stack: Vec<&str> = entries.iter().map(String::as_str).collect();
    while let Some(id) = stack.pop() {
        if !reached.insert(id) {
            continue;
        }
        if let Some(s) = plan.subtask(id) {
            stack.extend(s.successors.iter().map(String::as_str));
        }
    }
    for s in &plan.subtasks {
        if !reached.contains(s.id.as_str()) && !cyclic.contains(&s.id) {
            report.push(Violation::Unreachable(s.id.clone()));
        }
    }
    // Dangling successors are reported on their own; they do not count here.
    let has_exit = plan
        .subtasks
        .iter()
        .any(|s| s.successors.iter().all(|t| plan.subtask(t).is_none()));
    if !has_exit {
        report.push(Violation::NoExit);
    }
    report
}

/// Tarjan's algorithm over the subtask graph; dangling successors are ignored.
fn strongly_connected(plan: &TaskPlan) -> Vec<BTreeSet<String>> {
    struct State<'a> {
        index: HashMap<&'a str, usize>,
        low: HashMap<&'a str, usize>,
        on_stack: BTreeSet<&'a str>,
        stack: Vec<&'a str>,
        next: usize,
        out: Vec<BTreeSet<String>>,
    }
    fn visit<'a>(plan: &'a TaskPlan, v: &'a SubTask, st: &mut State<'a>) {
        st.index.insert(&v.id, st.next);
        st.low.insert(&v.id, st.next);
        st.next += 1;
        st.stack.push(&v.id);
        st.on_stack.insert(&v.id);
        for t in &v.successors {
            let Some(w) = plan.subtask(t) else { continue };
            if !st.index.contains_key(w.id.as_str()) {
                visit(plan, w, st);
                let lw = st.low[w.id.as_str()];
                let lv = st.low.get_mut(v.id.as_str()).unwrap();
                *lv = (*lv).min(lw);
            } else if st.on_stack.contains(w.id.as_str()) {
                let iw = st.index[w.id.as_str()];
                let lv = st.low.get_mut(v.id.as_str()).unwrap();
                *lv = (*lv).min(iw);
            }
        }
        if st.low[v.id.as_str()] == st.index[v.id.as_str()] {
            let mut component = BTreeSet::new();
            while let Some(w) = st.stack.pop() {
                st.on_stack.remove(w);
                component.insert(w.to_string());
                if w == v.id {
                    break;
                }
            }
            st.out.push(component);
        }
    }
    let mut st = State {
        index: HashMap::new(),
        low: HashMap::new(),
        on_stack: BTreeSet::new(),
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for s in &plan.subtasks {
        if !st.index.contains_key(s.id.as_str()) {
            visit(plan, s, &mut st);
        }
    }
    st.out
}

pub fn validate_params(kind: PatternKind, params: &PatternParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    if kind.is_structural() {
        report.push(Violation::StructuralKind(kind));
        return report;
    }
    if params.kind() != kind {
        report.push(Violation::KindMismatch {
            expected: kind,
            found: params.kind(),
        });
    }
    let mut bound = |ok: bool, field: &'static str, message: &str| {
        if !ok {
            report.push(Violation::Bound {
                field,
                message: message.to_string(),
            });
        }
    };
    match params {
        PatternParams::Reflection { max_iterations, .. } => {
            bound(*max_iterations >= 1, "max_iterations", "max_iterations < 1");
        }
        PatternParams::Redundant { num_agents, .. } => {
            bound(*num_agents >= 2, "num_agents", "num_agents < 2");
        }
        PatternParams::Supervision {
            num_workers,
            max_rounds,
        } => {
            bound(*num_workers >= 1, "num_workers", "num_workers < 1");
            bound(*max_rounds >= 1, "max_rounds", "max_rounds < 1");
        }
        PatternParams::Discussion {
            num_agents,
            num_rounds,
            ..
        } => {
            bound(*num_agents >= 2, "num_agents", "num_agents < 2");
            bound(*num_rounds >= 1, "num_rounds", "num_rounds < 1");
        }
        PatternParams::SingleAgent => {}
    }
    report
}

/// Checks that `assignment` covers `plan` exactly once with valid parameters.
pub fn validate_assignment(plan: &TaskPlan, assignment: &AgentAssignment) -> ValidationReport {
    let mut report = ValidationReport::default();
    if assignment.plan_id != plan.id {
        report.push(Violation::PlanMismatch {
            expected: plan.id.clone(),
            found: assignment.plan_id.clone(),
        });
    }
    for s in &plan.subtasks {
        match assignment.assignments.get(&s.id) {
            None => report.push(Violation::MissingAssignment(s.id.clone())),
            Some(params) => report.extend(validate_params(params.kind(), params)),
        }
    }
    for id in assignment.assignments.keys() {
        if plan.subtask(id).is_none() {
            report.push(Violation::UnknownSubtask(id.clone()));
        }
    }
    report
}

pub fn validate_agent(config: &AgentConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut field = |ok: bool, message: &str| {
        if !ok {
            report.push(Violation::AgentField {
                role: config.role_id.clone(),
                message: message.to_string(),
            });
        }
    };
    field(!config.role_id.trim().is_empty(), "role_id is empty");
    field(!config.persona.trim().is_empty(), "persona is empty");
    field(!config.goal.trim().is_empty(), "goal is empty");
    field(
        (0.0..=MAX_TEMPERATURE).contains(&config.temperature),
        "temperature outside [0, 2]",
    );
    report
}

pub fn validate_workflow(workflow: &ConcreteWorkflow) -> ValidationReport {
    let graph = &workflow.graph;
    let plan = graph.plan(&workflow.id);
    let mut report = validate_plan(&plan);

    for group in &graph.groups {
        let id = &group.subtask.id;
        report.extend(validate_params(group.pattern.kind(), &group.pattern));
        let Some(configs) = workflow.agent_groups.get(id).filter(|c| !c.is_empty()) else {
            report.push(Violation::GroupWithoutAgents(id.clone()));
            continue;
        };
        let expected = group.pattern.roles();
        let found: Vec<String> = configs.iter().map(|c| c.role_id.clone()).collect();
        let mut sorted_expected = expected.clone();
        let mut sorted_found = found.clone();
        sorted_expected.sort();
        sorted_found.sort();
        if sorted_expected != sorted_found {
            report.push(Violation::RoleMismatch {
                subtask: id.clone(),
                expected,
                found,
            });
        }
        for config in configs {
            report.extend(validate_agent(config));
        }
    }
    for id in workflow.agent_groups.keys() {
        if graph.group(id).is_none() {
            report.push(Violation::UnknownGroup(id.clone()));
        }
    }

    let mut node_ids = BTreeSet::new();
    let mut memberships = BTreeSet::new();
    for node in &graph.nodes {
        if !node_ids.insert(node.id.as_str()) {
            report.push(Violation::DuplicateNode(node.id.clone()));
        }
        let known = workflow
            .agent_groups
            .get(&node.group)
            .is_some_and(|configs| configs.iter().any(|c| c.role_id == node.role));
        if !known {
            report.push(Violation::UnknownGroup(node.group.clone()));
        }
        if !memberships.insert((node.group.as_str(), node.role.as_str())) {
            report.push(Violation::DuplicateNode(node.id.clone()));
        }
    }
    for (group, configs) in &workflow.agent_groups {
        for config in configs {
            if !memberships.contains(&(group.as_str(), config.role_id.as_str())) {
                report.push(Violation::UnknownNode(agent_node_id(group, &config.role_id)));
            }
        }
    }
    for edge in &graph.edges {
        for end in [&edge.from, &edge.to] {
            if !node_ids.contains(end.as_str()) {
                report.push(Violation::UnknownNode(end.clone()));
            }
        }
    }
    if !acyclic_without_loops(&graph.edges) {
        report.push(Violation::GraphCycle);
    }
    report
}

/// Depth-first cycle check over the edges that carry no loop bound.
pub fn acyclic_without_loops(edges: &[WorkflowEdge]) -> bool {
    let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in edges.iter().filter(|e| e.loop_bound.is_none()) {
        adjacency.entry(&e.from).or_default().push(&e.to);
        adjacency.entry(&e.to).or_default();
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks: BTreeMap<&str, Mark> = adjacency.keys().map(|k| (*k, Mark::New)).collect();
    for &root in adjacency.keys() {
        if marks[root] != Mark::New {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        marks.insert(root, Mark::Active);
        while let Some((node, child)) = stack.pop() {
            let next = adjacency[node].get(child).copied();
            match next {
                Some(succ) => {
                    stack.push((node, child + 1));
                    match marks[succ] {
                        Mark::Active => return false,
                        Mark::New => {
                            marks.insert(succ, Mark::Active);
                            stack.push((succ, 0));
                        }
                        Mark::Done => {}
                    }
                }
                None => {
                    marks.insert(node, Mark::Done);
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(edges: &[(&str, &[&str])]) -> TaskPlan {
        TaskPlan::new(
            "p",
            edges
                .iter()
                .map(|(id, succ)| SubTask {
                    successors: succ.iter().map(|s| s.to_string()).collect(),
                    ..SubTask::new(*id, id.to_uppercase())
                })
                .collect(),
        )
    }

    #[test]
    fn chain_is_valid() {
        let p = plan(&[("A", &["B"]), ("B", &["C"]), ("C", &[])]);
        assert!(validate_plan(&p).is_valid());
        let order: Vec<&str> = p.topological_order().unwrap().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(order, ["A", "B", "C"]);
    }

    #[test]
    fn two_cycle_is_reported() {
        let p = plan(&[("A", &["B"]), ("B", &["A"])]);
        let messages = validate_plan(&p).messages();
        assert!(messages.contains(&"cycle: {A,B}".to_string()), "{messages:?}");
        assert!(p.topological_order().is_none());
    }

    #[test]
    fn dangling_successor_is_reported() {
        let p = plan(&[("A", &["X"])]);
        assert_eq!(validate_plan(&p).messages(), ["dangling successor X"]);
    }

    #[test]
    fn structural_errors() {
        assert_eq!(
            validate_plan(&TaskPlan::new("p", vec![])).messages(),
            ["at least one subtask"]
        );
        let p = plan(&[("A", &["A"])]);
        assert!(validate_plan(&p).violations.contains(&Violation::SelfLoop("A".into())));
        let dup = plan(&[("A", &[]), ("A", &[])]);
        assert!(validate_plan(&dup)
            .violations
            .contains(&Violation::DuplicateSubtask("A".into())));
        // A cycle downstream of a valid entry leaves the plan without an exit.
        let tail = plan(&[("A", &["B"]), ("B", &["C"]), ("C", &["B"])]);
        let v = validate_plan(&tail).violations;
        assert!(v.contains(&Violation::Cycle(["B".to_string(), "C".to_string()].into())));
        assert!(v.contains(&Violation::NoExit));
    }

    #[test]
    fn multiple_entries_and_layers() {
        let p = plan(&[("A", &["B", "C"]), ("B", &["D"]), ("C", &["D"]), ("D", &[]), ("E", &["D"])]);
        assert!(validate_plan(&p).is_valid());
        assert_eq!(p.entry_ids(), ["A", "E"]);
        assert_eq!(
            p.layers().unwrap(),
            vec![vec!["A".to_string(), "E".into()], vec!["B".into(), "C".into()], vec!["D".into()]]
        );
    }

    #[test]
    fn parameter_bounds() {
        let discussion = PatternParams::Discussion {
            num_agents: 3,
            num_rounds: 2,
            turn_order: TurnOrder::RoundRobin,
            summarize: false,
        };
        assert!(validate_params(PatternKind::Discussion, &discussion).is_valid());
        let redundant = PatternParams::Redundant {
            num_agents: 1,
            aggregate: true,
        };
        assert_eq!(
            validate_params(PatternKind::Redundant, &redundant).messages(),
            ["num_agents < 2"]
        );
        let reflection = PatternParams::Reflection {
            max_iterations: 0,
            criterion: String::new(),
        };
        assert_eq!(
            validate_params(PatternKind::Reflection, &reflection).messages(),
            ["max_iterations < 1"]
        );
        assert!(!validate_params(PatternKind::Sequential, &PatternParams::SingleAgent).is_valid());
        assert!(!validate_params(PatternKind::Reflection, &PatternParams::SingleAgent).is_valid());
    }

    #[test]
    fn params_serialize_with_kind_tag() {
        let json = serde_json::to_value(PatternParams::defaults(PatternKind::Discussion).unwrap()).unwrap();
        assert_eq!(json["kind"], "Discussion");
        assert_eq!(json["turn_order"], "round_robin");
        let single: PatternParams = serde_json::from_str(r#"{"kind":"SingleAgent"}"#).unwrap();
        assert_eq!(single, PatternParams::SingleAgent);
        assert!(serde_json::from_str::<PatternParams>(r#"{"kind":"Parallel"}"#).is_err());
    }

    #[test]
    fn assignment_coverage() {
        let p = plan(&[("A", &["B"]), ("B", &[])]);
        let mut a = AgentAssignment {
            id: "a".into(),
            plan_id: "p".into(),
            assignments: [("A".to_string(), PatternParams::SingleAgent)].into(),
            rationales: BTreeMap::new(),
        };
        assert_eq!(
            validate_assignment(&p, &a).violations,
            [Violation::MissingAssignment("B".into())]
        );
        a.assignments.insert("B".into(), PatternParams::SingleAgent);
        a.assignments.insert("Z".into(), PatternParams::SingleAgent);
        assert_eq!(
            validate_assignment(&p, &a).violations,
            [Violation::UnknownSubtask("Z".into())]
        );
    }

    #[test]
    fn agent_fields() {
        let mut config = AgentConfig::new("agent", "analyst", "summarize");
        assert!(validate_agent(&config).is_valid());
        config.temperature = 2.5;
        config.persona = " ".into();
        assert_eq!(validate_agent(&config).violations.len(), 2);
        config.temperature = f64::NAN;
        config.persona = "x".into();
        assert!(!validate_agent(&config).is_valid());
    }

    #[test]
    fn task_text_must_not_be_blank() {
        assert!(TaskDescription::new("  \n").is_err());
        assert!(TaskDescription::new("write a report").is_ok());
    }

    #[test]
    fn loop_edges_are_excluded_from_cycle_check() {
        let edge = |a: &str, b: &str, bound| WorkflowEdge {
            from: a.into(),
            to: b.into(),
            loop_bound: bound,
        };
        assert!(acyclic_without_loops(&[edge("g", "c", None), edge("c", "g", Some(3))]));
        assert!(!acyclic_without_loops(&[edge("g", "c", None), edge("c", "g", None)]));
    }

    #[test]
    fn lenient_pattern_names() {
        assert_eq!(PatternKind::from_name("Single Agent"), Some(PatternKind::SingleAgent));
        assert_eq!(PatternKind::from_name("redundancy"), Some(PatternKind::Redundant));
        assert_eq!(PatternKind::from_name("Voting"), None);
    }
}
