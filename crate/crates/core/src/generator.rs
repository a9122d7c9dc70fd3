//! LLM-backed candidate generation for each abstraction level.
//!
//! Every prompt embeds the JSON shape it expects back. Replies are parsed
//! strictly; on failure the model is re-prompted with the parse error up to
//! `retries` times. Every prompt and raw reply lands in the [`PromptLog`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use async_trait::async_trait;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::IdGen;
use crate::ir::{
    validate_agent, validate_plan, AgentAssignment, AgentConfig, ConcreteWorkflow, PatternKind,
    PatternParams, SubTask, TaskDescription, TaskPlan, ValidationReport,
};
use crate::llm::{ClientError, CompletionClient, CompletionOptions, PromptLog};
use crate::patterns::{build_workflow, catalog, PatternCard, PatternError};

pub const DEFAULT_RETRIES: u32 = 2;
pub const DEFAULT_PLAN_CANDIDATES: usize = 5;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("{0}")]
    InvalidRequest(String),
    #[error("completion client failed: {0}")]
    Client(#[from] ClientError),
    #[error("{operation}: unusable reply after {attempts} attempts: {reason}")]
    Unparseable {
        operation: String,
        attempts: u32,
        reason: String,
        raw: String,
    },
    #[error("{operation}: unknown pattern {name:?}")]
    UnknownPattern {
        operation: String,
        name: String,
        raw: String,
    },
    #[error("{operation}: expected roles [{}], got [{}]", expected.join(", "), found.join(", "))]
    RoleMismatch {
        operation: String,
        expected: Vec<String>,
        found: Vec<String>,
        raw: String,
    },
    #[error("generated workflow is invalid: {0}")]
    Workflow(#[from] PatternError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOptions {
    pub completion: CompletionOptions,
    pub retries: u32,
    pub seed: u64,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            completion: CompletionOptions::default(),
            retries: DEFAULT_RETRIES,
            seed: 0,
        }
    }
}

/// A generated artifact and the number of repair retries it needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated<T> {
    pub value: T,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedPattern {
    pub kind: PatternKind,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternRanking {
    pub subtask_id: String,
    pub ranked: Vec<RankedPattern>,
}

/// Tools and external data sources agents may be configured with.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolContext {
    #[serde(default)]
    pub tools: Vec<String>,
    #[serde(default)]
    pub sources: Vec<String>,
}

/// Produces candidate artifacts for the design-space tree.
#[async_trait]
pub trait CandidateGenerator: Send + Sync {
    async fn task_plans(
        &self,
        task: &TaskDescription,
        k: usize,
        existing: &[TaskPlan],
        ids: &IdGen,
    ) -> Result<Vec<TaskPlan>, GenerationError>;

    /// `offset` counts alternatives already produced for this plan, so
    /// sibling requests yield different assignments.
    async fn assignments(
        &self,
        plan: &TaskPlan,
        k: usize,
        offset: usize,
        ids: &IdGen,
    ) -> Result<Vec<AgentAssignment>, GenerationError>;

    async fn workflows(
        &self,
        plan: &TaskPlan,
        assignment: &AgentAssignment,
        k: usize,
        offset: usize,
        context: &ToolContext,
        ids: &IdGen,
    ) -> Result<Vec<ConcreteWorkflow>, GenerationError>;
}

enum Failure {
    Invalid(String),
    UnknownPattern(String),
    Roles { expected: Vec<String>, found: Vec<String> },
}

impl Failure {
    fn reason(&self) -> String {
        match self {
            Failure::Invalid(reason) => reason.clone(),
            Failure::UnknownPattern(name) => {
                let known: Vec<&str> = PatternKind::ASSIGNABLE.iter().map(|k| k.display_name()).collect();
                format!("unknown pattern {name:?}; use one of: {}", known.join(", "))
            }
            Failure::Roles { expected, found } => format!(
                "expected exactly one agent for each role [{}], got [{}]",
                expected.join(", "),
                found.join(", ")
            ),
        }
    }
}

pub struct Generator {
    client: Arc<dyn CompletionClient>,
    log: Arc<PromptLog>,
    options: GenerationOptions,
}

impl Generator {
    pub fn new(client: Arc<dyn CompletionClient>, log: Arc<PromptLog>, options: GenerationOptions) -> Self {
        Self { client, log, options }
    }

    pub fn options(&self) -> &GenerationOptions {
        &self.options
    }

    pub fn log(&self) -> &Arc<PromptLog> {
        &self.log
    }

    async fn complete_parsed<T>(
        &self,
        operation: &str,
        prompt: &str,
        seed: u64,
        parse: impl Fn(&str) -> Result<T, Failure>,
    ) -> Result<Generated<T>, GenerationError> {
        let options = CompletionOptions {
            seed: Some(seed),
            ..self.options.completion.clone()
        };
        let mut current = prompt.to_string();
        let mut unknown_repairs = 0;
        let mut attempt = 0;
        loop {
            let reply = match self.client.complete(&current, &options).await {
                Ok(reply) => reply.text,
                Err(e) => {
                    self.log.append(operation, attempt, &current, Err(e.to_string()));
                    return Err(e.into());
                }
            };
            self.log.append(operation, attempt, &current, Ok(&reply));
            let failure = match parse(&reply) {
                Ok(value) => {
                    return Ok(Generated {
                        value,
                        retries: attempt,
                    })
                }
                Err(failure) => failure,
            };
            // Unknown pattern names get a single repair regardless of the budget.
            let exhausted = match &failure {
                Failure::UnknownPattern(_) => {
                    unknown_repairs += 1;
                    unknown_repairs > 1 || attempt >= self.options.retries
                }
                _ => attempt >= self.options.retries,
            };
            if exhausted {
                let operation = operation.to_string();
                return Err(match failure {
                    Failure::Invalid(reason) => GenerationError::Unparseable {
                        operation,
                        attempts: attempt + 1,
                        reason,
                        raw: reply,
                    },
                    Failure::UnknownPattern(name) => GenerationError::UnknownPattern {
                        operation,
                        name,
                        raw: reply,
                    },
                    Failure::Roles { expected, found } => GenerationError::RoleMismatch {
                        operation,
                        expected,
                        found,
                        raw: reply,
                    },
                });
            }
            current = repair_prompt(prompt, &reply, &failure.reason());
            attempt += 1;
        }
    }

    /// Generates `k` validated plans, each prompted to differ from the ones
    /// before it. A plan identical in labels and topology to an earlier one is
    /// regenerated once, then accepted.
    pub async fn generate_task_plans(
        &self,
        task: &TaskDescription,
        k: usize,
        existing: &[TaskPlan],
        ids: &IdGen,
    ) -> Result<Vec<Generated<TaskPlan>>, GenerationError> {
        if k == 0 {
            return Err(GenerationError::InvalidRequest("k must be at least 1".into()));
        }
        task.validate()
            .map_err(|v| GenerationError::InvalidRequest(v.to_string()))?;
        let mut seen: BTreeSet<Vec<(String, Vec<String>)>> = existing.iter().map(plan_signature).collect();
        let mut previous: Vec<TaskPlan> = existing.to_vec();
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let seed = self.options.seed.wrapping_add(i as u64);
            let prompt = plan_prompt(task, i, k, &previous, false);
            let mut generated = self
                .complete_parsed("task_plans", &prompt, seed, |reply| parse_plan(reply, "pending"))
                .await?;
            if seen.contains(&plan_signature(&generated.value)) {
                let prompt = plan_prompt(task, i, k, &previous, true);
                let retry = self
                    .complete_parsed("task_plans", &prompt, seed.wrapping_add(1_000), |reply| {
                        parse_plan(reply, "pending")
                    })
                    .await?;
                generated = Generated {
                    value: retry.value,
                    retries: generated.retries + retry.retries + 1,
                };
            }
            generated.value.id = ids.next("plan");
            seen.insert(plan_signature(&generated.value));
            previous.push(generated.value.clone());
            out.push(generated);
        }
        Ok(out)
    }

    /// Ranks the candidate patterns for one subtask. Cards are presented in a
    /// seed-determined shuffled order.
    pub async fn rank_patterns(
        &self,
        subtask: &SubTask,
        cards: &[PatternCard],
        seed: u64,
    ) -> Result<PatternRanking, GenerationError> {
        let mut shuffled: Vec<&PatternCard> = cards.iter().filter(|c| !c.kind.is_structural()).collect();
        if shuffled.is_empty() {
            return Err(GenerationError::InvalidRequest("no assignable pattern cards".into()));
        }
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let allowed: BTreeSet<PatternKind> = shuffled.iter().map(|c| c.kind).collect();
        let prompt = ranking_prompt(subtask, &shuffled);
        let ranked = self
            .complete_parsed("rank_patterns", &prompt, seed, |reply| parse_ranking(reply, &allowed))
            .await?;
        Ok(PatternRanking {
            subtask_id: subtask.id.clone(),
            ranked: ranked.value,
        })
    }

    /// One configuration per role of the pattern's expansion template, in
    /// template order.
    pub async fn generate_agent_configs(
        &self,
        subtask: &SubTask,
        params: &PatternParams,
        context: &ToolContext,
        seed: u64,
    ) -> Result<Vec<AgentConfig>, GenerationError> {
        crate::patterns::expand_pattern(params, subtask)?;
        let roles = params.roles();
        let prompt = agents_prompt(subtask, params, &roles, context);
        let default_model = self.options.completion.model_id.clone();
        let generated = self
            .complete_parsed("agent_configs", &prompt, seed, |reply| {
                parse_agents(reply, &roles, context, &default_model)
            })
            .await?;
        Ok(generated.value)
    }
}

#[async_trait]
impl CandidateGenerator for Generator {
    async fn task_plans(
        &self,
        task: &TaskDescription,
        k: usize,
        existing: &[TaskPlan],
        ids: &IdGen,
    ) -> Result<Vec<TaskPlan>, GenerationError> {
        let plans = self.generate_task_plans(task, k, existing, ids).await?;
        Ok(plans.into_iter().map(|g| g.value).collect())
    }

    async fn assignments(
        &self,
        plan: &TaskPlan,
        k: usize,
        offset: usize,
        ids: &IdGen,
    ) -> Result<Vec<AgentAssignment>, GenerationError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let cards: Vec<PatternCard> = catalog().into_iter().filter(|c| !c.kind.is_structural()).collect();
        let mut rankings = Vec::with_capacity(plan.subtasks.len());
        for (i, subtask) in plan.subtasks.iter().enumerate() {
            let seed = self.options.seed.wrapping_add(i as u64);
            rankings.push(self.rank_patterns(subtask, &cards, seed).await?);
        }
        Ok((offset..offset + k)
            .map(|choice| {
                let mut assignments = BTreeMap::new();
                let mut rationales = BTreeMap::new();
                for ranking in &rankings {
                    let pick = &ranking.ranked[choice % ranking.ranked.len()];
                    let params = PatternParams::defaults(pick.kind).expect("assignable kind");
                    assignments.insert(ranking.subtask_id.clone(), params);
                    rationales.insert(ranking.subtask_id.clone(), pick.explanation.clone());
                }
                AgentAssignment {
                    id: ids.next("asg"),
                    plan_id: plan.id.clone(),
                    assignments,
                    rationales,
                }
            })
            .collect())
    }

    async fn workflows(
        &self,
        plan: &TaskPlan,
        assignment: &AgentAssignment,
        k: usize,
        offset: usize,
        context: &ToolContext,
        ids: &IdGen,
    ) -> Result<Vec<ConcreteWorkflow>, GenerationError> {
        let mut out = Vec::with_capacity(k);
        for variant in offset..offset + k {
            let mut groups = BTreeMap::new();
            for subtask in &plan.subtasks {
                let params = assignment.assignments.get(&subtask.id).ok_or_else(|| {
                    GenerationError::InvalidRequest(format!("subtask {} has no pattern", subtask.id))
                })?;
                let seed = self.options.seed.wrapping_add(variant as u64);
                let configs = self.generate_agent_configs(subtask, params, context, seed).await?;
                groups.insert(subtask.id.clone(), configs);
            }
            out.push(build_workflow(ids.next("wf"), plan, assignment, groups)?);
        }
        Ok(out)
    }
}

fn repair_prompt(original: &str, reply: &str, reason: &str) -> String {
    format!(
        "{original}\n\nYour previous reply could not be used.\nProblem: {reason}\nPrevious reply:\n{reply}\n\nReply again with only the corrected JSON."
    )
}

/// Pulls a JSON object out of a reply that may wrap it in prose or a code fence.
pub fn extract_json(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (end > start).then(|| &reply[start..=end])
}

fn parse_json<'de, T: Deserialize<'de>>(reply: &'de str) -> Result<T, Failure> {
    let json = extract_json(reply).ok_or_else(|| Failure::Invalid("reply contains no JSON object".into()))?;
    serde_json::from_str(json).map_err(|e| Failure::Invalid(format!("JSON does not match the schema: {e}")))
}

const PLAN_SCHEMA: &str = r#"{"subtasks": [{"id": "short_id", "label": "short name", "description": "what this step does", "output_format": "shape of the result", "next": ["id of a following subtask"]}]}"#;

fn plan_prompt(task: &TaskDescription, index: usize, k: usize, previous: &[TaskPlan], duplicate: bool) -> String {
    let mut p = String::new();
    let _ = writeln!(p, "Decompose the task below into subtasks for a multi-agent LLM workflow.");
    let _ = writeln!(p, "\nTask:\n{}", task.text.trim());
    if let Some(constraints) = &task.constraints {
        let _ = writeln!(p, "\nConstraints:\n{}", constraints.trim());
    }
    let _ = writeln!(
        p,
        "\nThis is candidate {} of {k}. Candidates must differ from each other in complexity (number of subtasks), \
         structure (sequential or parallel) and perspective (the focus of the plan).",
        index + 1
    );
    if !previous.is_empty() {
        let _ = writeln!(p, "Earlier candidates, which this one must not repeat:");
        for plan in previous {
            let labels: Vec<&str> = plan.subtasks.iter().map(|s| s.label.as_str()).collect();
            let _ = writeln!(p, "- {}", labels.join(" -> "));
        }
    }
    if duplicate {
        let _ = writeln!(p, "Your previous answer duplicated an earlier candidate. Propose a different structure.");
    }
    let _ = writeln!(
        p,
        "\nEach subtask needs a label, a description, an output format and the ids of the subtasks that follow it. \
         Subtasks listed in \"next\" run after this one; subtasks with no shared dependency may run in parallel. \
         The graph must not contain cycles."
    );
    let _ = write!(p, "Reply with JSON only, shaped like:\n{PLAN_SCHEMA}");
    p
}

#[derive(Deserialize)]
struct PlanReply {
    subtasks: Vec<RawSubtask>,
}

#[derive(Deserialize)]
struct RawSubtask {
    #[serde(default)]
    id: Option<String>,
    label: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    output_format: String,
    #[serde(default, alias = "next")]
    successors: Vec<String>,
}

/// Parses a plan reply and renumbers subtasks `s1..sn` in reply order.
fn parse_plan(reply: &str, plan_id: &str) -> Result<TaskPlan, Failure> {
    let parsed: PlanReply = parse_json(reply)?;
    let mut renamed = BTreeMap::new();
    for (i, raw) in parsed.subtasks.iter().enumerate() {
        let key = raw.id.clone().unwrap_or_else(|| raw.label.clone());
        if renamed.insert(key.clone(), format!("s{}", i + 1)).is_some() {
            return Err(Failure::Invalid(format!("duplicate subtask id {key}")));
        }
    }
    let mut subtasks = Vec::with_capacity(parsed.subtasks.len());
    for (i, raw) in parsed.subtasks.into_iter().enumerate() {
        if raw.label.trim().is_empty() {
            return Err(Failure::Invalid(format!("subtask {} has an empty label", i + 1)));
        }
        subtasks.push(SubTask {
            id: format!("s{}", i + 1),
            label: raw.label,
            description: raw.description,
            output_format: raw.output_format,
            successors: raw
                .successors
                .iter()
                .map(|t| renamed.get(t).cloned().unwrap_or_else(|| t.clone()))
                .collect(),
        });
    }
    let plan = TaskPlan::new(plan_id, subtasks);
    let report: ValidationReport = validate_plan(&plan);
    if !report.is_valid() {
        return Err(Failure::Invalid(format!("invalid plan: {report}")));
    }
    Ok(plan)
}

/// Labels plus label-level topology; two plans with equal signatures are duplicates.
pub fn plan_signature(plan: &TaskPlan) -> Vec<(String, Vec<String>)> {
    let label = |id: &str| plan.subtask(id).map(|s| s.label.trim().to_lowercase()).unwrap_or_default();
    let mut sig: Vec<(String, Vec<String>)> = plan
        .subtasks
        .iter()
        .map(|s| {
            let mut next: Vec<String> = s.successors.iter().map(|t| label(t)).collect();
            next.sort();
            (s.label.trim().to_lowercase(), next)
        })
        .collect();
    sig.sort();
    sig
}

const RANKING_SCHEMA: &str =
    r#"{"ranking": [{"pattern": "pattern name", "explanation": "why it suits this subtask"}]}"#;

fn ranking_prompt(subtask: &SubTask, cards: &[&PatternCard]) -> String {
    let mut p = String::new();
    let _ = writeln!(p, "Rank the collaboration patterns below by how well they suit this subtask of a multi-agent workflow.");
    let _ = writeln!(p, "\nSubtask: {}", subtask.label);
    if !subtask.description.is_empty() {
        let _ = writeln!(p, "Description: {}", subtask.description);
    }
    let _ = writeln!(p, "\nPatterns:");
    for (i, card) in cards.iter().enumerate() {
        let _ = writeln!(p, "{}. {}: {} Example: {}", i + 1, card.name, card.definition, card.example);
    }
    let _ = writeln!(
        p,
        "\nList the suitable patterns from best to worst, using the names above, each with a short explanation."
    );
    let _ = write!(p, "Reply with JSON only, shaped like:\n{RANKING_SCHEMA}");
    p
}

#[derive(Deserialize)]
struct RankingReply {
    ranking: Vec<RawRank>,
}

#[derive(Deserialize)]
struct RawRank {
    pattern: String,
    #[serde(default)]
    explanation: String,
}

fn parse_ranking(reply: &str, allowed: &BTreeSet<PatternKind>) -> Result<Vec<RankedPattern>, Failure> {
    let parsed: RankingReply = parse_json(reply)?;
    if parsed.ranking.is_empty() {
        return Err(Failure::Invalid("ranking is empty".into()));
    }
    let mut seen = BTreeSet::new();
    let mut ranked = Vec::with_capacity(parsed.ranking.len());
    for raw in parsed.ranking {
        let kind = PatternKind::from_name(&raw.pattern)
            .filter(|k| allowed.contains(k))
            .ok_or_else(|| Failure::UnknownPattern(raw.pattern.clone()))?;
        if !seen.insert(kind) {
            return Err(Failure::Invalid(format!("{} is ranked twice", kind)));
        }
        if raw.explanation.trim().is_empty() {
            return Err(Failure::Invalid(format!("{} has no explanation", kind)));
        }
        ranked.push(RankedPattern {
            kind,
            explanation: raw.explanation,
        });
    }
    Ok(ranked)
}

fn role_description(role: &str) -> &'static str {
    match role {
        "agent" => "completes the subtask on its own",
        "generator" => "drafts the answer and revises it after feedback",
        "critic" => "reviews each draft against the acceptance criterion",
        "aggregator" => "merges the parallel answers into one",
        "supervisor" => "decides which worker acts next and when the subtask is finished",
        "summarizer" => "condenses the discussion into the final answer",
        r if r.starts_with("worker_") => "handles the part of the subtask it is given",
        r if r.starts_with("speaker_") => "takes part in the discussion",
        _ => "member of the group",
    }
}

const AGENTS_SCHEMA: &str = r#"{"agents": [{"role_id": "role from the list", "persona": "who the agent is", "goal": "what it must achieve", "input_format": "what it receives", "output_format": "what it returns", "tools": ["tool name"], "retrieval_source": null, "temperature": 0.7}]}"#;

fn agents_prompt(subtask: &SubTask, params: &PatternParams, roles: &[String], context: &ToolContext) -> String {
    let mut p = String::new();
    let _ = writeln!(p, "Configure the agents that carry out one subtask of a multi-agent workflow.");
    let _ = writeln!(p, "\nSubtask: {}", subtask.label);
    if !subtask.description.is_empty() {
        let _ = writeln!(p, "Description: {}", subtask.description);
    }
    if !subtask.output_format.is_empty() {
        let _ = writeln!(p, "Required output: {}", subtask.output_format);
    }
    let params_json = serde_json::to_string(params).unwrap_or_default();
    let _ = writeln!(p, "Pattern: {} {params_json}", params.kind());
    let _ = writeln!(p, "\nRoles (exactly one agent each):");
    for role in roles {
        let _ = writeln!(p, "- {role}: {}", role_description(role));
    }
    if roles.len() > 1 {
        let _ = writeln!(
            p,
            "Agents in this group should embody distinct perspectives that match real-world roles."
        );
    }
    if context.tools.is_empty() {
        let _ = writeln!(p, "No tools are available.");
    } else {
        let _ = writeln!(p, "Available tools: {}", context.tools.join(", "));
    }
    if !context.sources.is_empty() {
        let _ = writeln!(p, "Available data sources: {}", context.sources.join(", "));
    }
    let _ = writeln!(p, "\nFor each agent give a persona, a goal, and its input and output formats.");
    let _ = write!(p, "Reply with JSON only, shaped like:\n{AGENTS_SCHEMA}");
    p
}

#[derive(Deserialize)]
struct AgentsReply {
    agents: Vec<RawAgent>,
}

#[derive(Deserialize)]
struct RawAgent {
    role_id: String,
    persona: String,
    goal: String,
    #[serde(default)]
    input_format: String,
    #[serde(default)]
    output_format: String,
    #[serde(default)]
    model_id: Option<String>,
    #[serde(default)]
    temperature: Option<f64>,
    #[serde(default)]
    tools: Vec<String>,
    #[serde(default)]
    retrieval_source: Option<String>,
}

fn parse_agents(
    reply: &str,
    roles: &[String],
    context: &ToolContext,
    default_model: &str,
) -> Result<Vec<AgentConfig>, Failure> {
    let parsed: AgentsReply = parse_json(reply)?;
    let found: Vec<String> = parsed.agents.iter().map(|a| a.role_id.clone()).collect();
    let mut by_role: BTreeMap<String, RawAgent> = BTreeMap::new();
    for agent in parsed.agents {
        by_role.insert(agent.role_id.clone(), agent);
    }
    let expected: BTreeSet<&String> = roles.iter().collect();
    if found.len() != roles.len() || by_role.keys().collect::<BTreeSet<_>>() != expected {
        return Err(Failure::Roles {
            expected: roles.to_vec(),
            found,
        });
    }
    let mut configs = Vec::with_capacity(roles.len());
    for role in roles {
        let raw = by_role.remove(role).expect("role set checked");
        if let Some(tool) = raw.tools.iter().find(|t| !context.tools.contains(t)) {
            return Err(Failure::Invalid(format!("agent {role} uses unavailable tool {tool:?}")));
        }
        if let Some(source) = raw.retrieval_source.as_ref().filter(|s| !context.sources.contains(s)) {
            return Err(Failure::Invalid(format!("agent {role} uses unavailable data source {source:?}")));
        }
        let config = AgentConfig {
            role_id: raw.role_id,
            persona: raw.persona,
            goal: raw.goal,
            input_format: raw.input_format,
            output_format: raw.output_format,
            model_id: raw.model_id.filter(|m| !m.is_empty()).unwrap_or_else(|| default_model.to_string()),
            temperature: raw.temperature.unwrap_or(crate::ir::DEFAULT_TEMPERATURE),
            tools: raw.tools,
            retrieval_source: raw.retrieval_source,
        };
        let report = validate_agent(&config);
        if !report.is_valid() {
            return Err(Failure::Invalid(report.to_string()));
        }
        configs.push(config);
    }
    Ok(configs)
}
