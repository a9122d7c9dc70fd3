//! Deterministic artifacts for tests, fixtures and offline demos.
//!
//! [`SyntheticGenerator`] fills a design space without any LLM: plans,
//! assignments and agent configs are drawn from a seeded RNG.

use std::collections::BTreeMap;

use async_trait::async_trait;
use chrono::{DateTime, TimeZone, Utc};
use futures::executor::block_on;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design_space::{Artifact, DesignSpace, DesignSpaceNode, Level};
use crate::generator::{CandidateGenerator, GenerationError, ToolContext};
use crate::ids::IdGen;
use crate::ir::{
    AgentAssignment, AgentConfig, ConcreteWorkflow, DimValue, PatternKind, PatternParams, RunEvent, RunRecord, SubTask,
    TaskDescription, TaskPlan, TurnOrder, DEFAULT_REFLECTION_CRITERION,
};
use crate::patterns::build_workflow;

fn mix(seed: u64, salt: &str, n: usize) -> u64 {
    let mut h = seed ^ 0xcbf2_9ce4_8422_2325;
    for b in salt.bytes().chain((n as u64).to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A plan with 1..=`max_subtasks` subtasks `s1..sn`. Edges only go from
/// lower to higher index, so every draw is a valid DAG.
pub fn random_plan<R: Rng>(rng: &mut R, id: impl Into<String>, max_subtasks: usize) -> TaskPlan {
    let n = rng.random_range(1..=max_subtasks.max(1));
    let subtasks = (1..=n)
        .map(|i| {
            let mut s = SubTask::new(format!("s{i}"), format!("step {i}"));
            s.description = format!("Carry out step {i}.");
            s.successors = ((i + 1)..=n)
                .filter(|_| rng.random_bool(0.35))
                .map(|j| format!("s{j}"))
                .collect();
            s
        })
        .collect();
    TaskPlan::new(id, subtasks)
}

/// Parameters drawn from the legal range, each count in 1..=4.
pub fn random_params<R: Rng>(rng: &mut R) -> PatternParams {
    let kind = PatternKind::ASSIGNABLE[rng.random_range(0..PatternKind::ASSIGNABLE.len())];
    params_for(rng, kind)
}

pub fn params_for<R: Rng>(rng: &mut R, kind: PatternKind) -> PatternParams {
    match kind {
        PatternKind::Reflection => PatternParams::Reflection {
            max_iterations: rng.random_range(1..=4),
            criterion: DEFAULT_REFLECTION_CRITERION.to_string(),
        },
        PatternKind::Redundant => PatternParams::Redundant {
            num_agents: rng.random_range(2..=4),
            aggregate: rng.random_bool(0.5),
        },
        PatternKind::Supervision => PatternParams::Supervision {
            num_workers: rng.random_range(1..=4),
            max_rounds: rng.random_range(1..=4),
        },
        PatternKind::Discussion => PatternParams::Discussion {
            num_agents: rng.random_range(2..=4),
            num_rounds: rng.random_range(1..=4),
            turn_order: [TurnOrder::RoundRobin, TurnOrder::Random, TurnOrder::Simultaneous][rng.random_range(0..3)],
            summarize: rng.random_bool(0.5),
        },
        _ => PatternParams::SingleAgent,
    }
}

pub fn random_assignment<R: Rng>(rng: &mut R, plan: &TaskPlan, id: impl Into<String>) -> AgentAssignment {
    AgentAssignment {
        id: id.into(),
        plan_id: plan.id.clone(),
        assignments: plan
            .subtasks
            .iter()
            .map(|s| (s.id.clone(), random_params(rng)))
            .collect(),
        rationales: BTreeMap::new(),
    }
}

/// One config per template role. `variant` shifts temperatures so siblings differ.
pub fn default_agents(subtask: &SubTask, params: &PatternParams, variant: usize) -> Vec<AgentConfig> {
    params
        .roles()
        .into_iter()
        .enumerate()
        .map(|(i, role)| {
            let mut config = AgentConfig::new(
                role.clone(),
                format!("{role} for {}", subtask.label),
                format!("Produce the {} result as {role}.", subtask.label),
            );
            config.model_id = crate::llm::DEFAULT_MODEL.to_string();
            config.temperature = ((variant + i) % 10) as f64 / 10.0;
            config
        })
        .collect()
}

pub fn default_workflow(
    id: impl Into<String>,
    plan: &TaskPlan,
    assignment: &AgentAssignment,
    variant: usize,
) -> ConcreteWorkflow {
    let groups = plan
        .subtasks
        .iter()
        .map(|s| (s.id.clone(), default_agents(s, &assignment.assignments[&s.id], variant)))
        .collect();
    build_workflow(id.into(), plan, assignment, groups).expect("synthetic workflow is valid")
}

/// An assignment giving every subtask the same parameters.
pub fn uniform_assignment(plan: &TaskPlan, id: impl Into<String>, params: PatternParams) -> AgentAssignment {
    AgentAssignment {
        id: id.into(),
        plan_id: plan.id.clone(),
        assignments: plan.subtasks.iter().map(|s| (s.id.clone(), params.clone())).collect(),
        rationales: BTreeMap::new(),
    }
}

/// Plan from `(id, successors)` pairs, using the id as the label.
pub fn plan_from(id: &str, edges: &[(&str, &[&str])]) -> TaskPlan {
    TaskPlan::new(
        id,
        edges
            .iter()
            .map(|(s, next)| SubTask {
                successors: next.iter().map(|t| t.to_string()).collect(),
                ..SubTask::new(*s, *s)
            })
            .collect(),
    )
}

/// Offline candidate generator driven by a seed.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    pub seed: u64,
    pub max_subtasks: usize,
}

impl SyntheticGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed, max_subtasks: 5 }
    }
}

#[async_trait]
impl CandidateGenerator for SyntheticGenerator {
    async fn task_plans(
        &self,
        _task: &TaskDescription,
        k: usize,
        existing: &[TaskPlan],
        ids: &IdGen,
    ) -> Result<Vec<TaskPlan>, GenerationError> {
        Ok((0..k)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, "plan", existing.len() + i));
                random_plan(&mut rng, ids.next("plan"), self.max_subtasks)
            })
            .collect())
    }

    async fn assignments(
        &self,
        plan: &TaskPlan,
        k: usize,
        offset: usize,
        ids: &IdGen,
    ) -> Result<Vec<AgentAssignment>, GenerationError> {
        Ok((offset..offset + k)
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, &plan.id, j));
                random_assignment(&mut rng, plan, ids.next("asg"))
            })
            .collect())
    }

    async fn workflows(
        &self,
        plan: &TaskPlan,
        assignment: &AgentAssignment,
        k: usize,
        offset: usize,
        _context: &ToolContext,
        ids: &IdGen,
    ) -> Result<Vec<ConcreteWorkflow>, GenerationError> {
        Ok((offset..offset + k)
            .map(|j| default_workflow(ids.next("wf"), plan, assignment, j))
            .collect())
    }
}

fn attach_one(space: &mut DesignSpace, parent: Option<&str>, artifact: Artifact) -> DesignSpaceNode {
    let request = match parent {
        None => space.prepare_plans(),
        Some(p) => space.prepare_children(p).expect("parent exists"),
    };
    space.attach(&request, vec![artifact]).expect("synthetic artifact attaches").remove(0)
}

pub fn fixture_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 12, 0, 0).unwrap()
}

/// A completed run record with fixed timing, one call per agent node.
pub fn synthetic_run(space: &DesignSpace, node_id: &str, wall_time: f64) -> RunRecord {
    let workflow = space.workflow_of(node_id).expect("level-3 node");
    let mut events = Vec::new();
    let mut outputs = BTreeMap::new();
    for (i, node) in workflow.graph.nodes.iter().enumerate() {
        events.push(RunEvent::Call {
            node: node.id.clone(),
            call_index: i as u64 + 1,
            tokens_in: 40,
            tokens_out: 10,
        });
        outputs.insert(node.id.clone(), format!("output of {}", node.id));
    }
    let calls = events.len() as u64;
    RunRecord {
        id: space.ids().next("run"),
        workflow_id: workflow.id.clone(),
        started_at: fixture_time(),
        wall_time,
        llm_calls: calls,
        tokens_in: 40 * calls,
        tokens_out: 10 * calls,
        final_output: outputs.values().last().cloned().unwrap_or_default(),
        node_outputs: outputs,
        user_rating: None,
        custom_values: BTreeMap::new(),
        complete: true,
        events,
    }
}

/// The fixed sample project: two plans, three assignments, two workflows
/// (seven nodes) and one rated run.
pub fn sample_project() -> DesignSpace {
    let task = TaskDescription::new("Write a short market report on electric bicycles.").unwrap();
    let mut space = DesignSpace::new("pfixture", task, fixture_time()).with_tools(ToolContext {
        tools: vec!["web_search".into()],
        sources: vec!["reports.csv".into()],
    });

    let research = |id: String| {
        let mut plan = plan_from(&id, &[("s1", &["s2", "s3"]), ("s2", &["s4"]), ("s3", &["s4"]), ("s4", &[])]);
        for (s, label) in plan.subtasks.iter_mut().zip(["gather", "analyse", "compare", "write"]) {
            s.label = label.into();
            s.description = format!("{label} for the report");
        }
        plan
    };
    let p1 = research(space.ids().next("plan"));
    let p2 = plan_from(&space.ids().next("plan"), &[("s1", &["s2"]), ("s2", &[])]);
    let n1 = attach_one(&mut space, None, Artifact::Plan(p1.clone()));
    attach_one(&mut space, None, Artifact::Plan(p2));

    let mut a1 = uniform_assignment(&p1, space.ids().next("asg"), PatternParams::SingleAgent);
    a1.assignments.insert("s1".into(), PatternParams::defaults(PatternKind::Redundant).unwrap());
    a1.assignments.insert("s4".into(), PatternParams::defaults(PatternKind::Reflection).unwrap());
    a1.rationales.insert("s4".into(), "the draft benefits from critique".into());
    let mut a2 = uniform_assignment(&p1, space.ids().next("asg"), PatternParams::SingleAgent);
    a2.assignments.insert("s2".into(), PatternParams::defaults(PatternKind::Discussion).unwrap());
    let a3 = uniform_assignment(&p1, space.ids().next("asg"), PatternParams::defaults(PatternKind::Supervision).unwrap());
    let n2 = attach_one(&mut space, Some(&n1.id), Artifact::Assignment(a1.clone()));
    attach_one(&mut space, Some(&n1.id), Artifact::Assignment(a2));
    attach_one(&mut space, Some(&n1.id), Artifact::Assignment(a3));

    let w1 = default_workflow(space.ids().next("wf"), &p1, &a1, 0);
    let w2 = default_workflow(space.ids().next("wf"), &p1, &a1, 1);
    let n3 = attach_one(&mut space, Some(&n2.id), Artifact::Workflow(w1));
    attach_one(&mut space, Some(&n2.id), Artifact::Workflow(w2));

    let mut run = synthetic_run(&space, &n3.id, 4.25);
    run.user_rating = Some(4.0);
    space.record_run(&n3.id, run).unwrap();
    space
        .annotate_dimension(&n1.id, "creativity", DimValue::Number(3.0))
        .unwrap();
    space
        .annotate_dimension(&n2.id, "tone", DimValue::Text("formal".into()))
        .unwrap();
    space.prompt_log().append("plans", 0, "decompose the task", Ok("{\"subtasks\": []}"));
    space
}

/// A random tree for property tests: plans, assignments and workflows at
/// random fan-out, some runs, ratings and annotations.
pub fn random_project(seed: u64) -> DesignSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let task = TaskDescription::new(format!("Synthetic task {seed}")).unwrap();
    let mut space = DesignSpace::new(format!("pr{seed:x}"), task, fixture_time());
    let generator = SyntheticGenerator::new(seed);
    let ids = space.ids().clone();

    let plans = block_on(generator.task_plans(space.task(), rng.random_range(1..=3), &[], &ids)).unwrap();
    for plan in plans {
        let n1 = attach_one(&mut space, None, Artifact::Plan(plan.clone()));
        let k2 = rng.random_range(0..=2);
        for a in block_on(generator.assignments(&plan, k2, 0, &ids)).unwrap() {
            let n2 = attach_one(&mut space, Some(&n1.id), Artifact::Assignment(a.clone()));
            let k3 = rng.random_range(0..=2);
            for w in block_on(generator.workflows(&plan, &a, k3, 0, &ToolContext::default(), &ids)).unwrap() {
                let n3 = attach_one(&mut space, Some(&n2.id), Artifact::Workflow(w));
                for _ in 0..rng.random_range(0..=2) {
                    let mut run = synthetic_run(&space, &n3.id, rng.random_range(0.5..30.0));
                    if rng.random_bool(0.5) {
                        run.user_rating = Some(rng.random_range(1..=5) as f64);
                    }
                    space.record_run(&n3.id, run).unwrap();
                }
            }
        }
    }
    let node_ids: Vec<String> = space.nodes().map(|n| n.id.clone()).collect();
    for id in &node_ids {
        if rng.random_bool(0.3) {
            space
                .annotate_dimension(id, "creativity", DimValue::Number(rng.random_range(1..=5) as f64))
                .unwrap();
        }
    }
    space
}

/// Nodes on a given level, in id order.
pub fn nodes_at(space: &DesignSpace, level: Level) -> Vec<String> {
    space.nodes().filter(|n| n.level == level).map(|n| n.id.clone()).collect()
}
