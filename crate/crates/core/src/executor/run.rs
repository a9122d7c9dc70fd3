use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::pin::Pin;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use futures::future::join_all;
use futures::stream::{FuturesUnordered, StreamExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::compile::{ExecGroup, ExecutableGraph};
use super::status::RunHandle;
use crate::ir::{agent_node_id, PatternParams, RunEvent, RunRecord, TurnOrder};
use crate::llm::{ClientError, CompletionClient, CompletionOptions};

pub const DEFAULT_CALL_TIMEOUT_SECS: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub call_timeout_secs: f64,
    /// Hard bound on client invocations; defaults to the graph's worst-case estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_total_calls: Option<u64>,
    #[serde(default)]
    pub input_text: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_timeout() -> f64 {
    DEFAULT_CALL_TIMEOUT_SECS
}

fn default_max_tokens() -> u32 {
    2048
}

impl RunConfig {
    pub fn new(input_text: impl Into<String>) -> Self {
        Self {
            seed: 0,
            call_timeout_secs: DEFAULT_CALL_TIMEOUT_SECS,
            max_total_calls: None,
            input_text: input_text.into(),
            max_tokens: default_max_tokens(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_calls(mut self, max: u64) -> Self {
        self.max_total_calls = Some(max);
        self
    }

    pub fn call_limit(&self, graph: &ExecutableGraph) -> u64 {
        self.max_total_calls.unwrap_or_else(|| graph.estimated_calls())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new("")
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("call budget of {limit} exhausted")]
    BudgetExceeded { limit: u64, partial: Box<RunRecord> },
    #[error("call to {node} timed out")]
    Timeout { node: String, partial: Box<RunRecord> },
    #[error("call to {node} failed: {source}")]
    Client {
        node: String,
        source: ClientError,
        partial: Box<RunRecord>,
    },
}

impl RunError {
    pub fn partial(&self) -> &RunRecord {
        match self {
            RunError::BudgetExceeded { partial, .. }
            | RunError::Timeout { partial, .. }
            | RunError::Client { partial, .. } => partial,
        }
    }
}

enum Failure {
    Budget,
    Timeout(String),
    Client(String, ClientError),
}

struct Ctx<'a> {
    graph: &'a ExecutableGraph,
    client: &'a dyn CompletionClient,
    config: &'a RunConfig,
    handle: &'a RunHandle,
    limit: u64,
    calls: AtomicU64,
    tokens_in: AtomicU64,
    tokens_out: AtomicU64,
    outputs: Mutex<BTreeMap<String, String>>,
    events: Mutex<Vec<RunEvent>>,
}

impl Ctx<'_> {
    async fn call(&self, subtask: &str, role: &str, sections: &[(&str, &str)]) -> Result<String, Failure> {
        let node = agent_node_id(subtask, role);
        let (header, config) = self.graph.agent(subtask, role).expect("compiled agent");
        let call_index = self
            .calls
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| (c < self.limit).then_some(c + 1))
            .map_err(|_| Failure::Budget)?
            + 1;
        let mut prompt = header.to_string();
        for (title, body) in sections {
            prompt.push_str("\n## ");
            prompt.push_str(title);
            prompt.push('\n');
            prompt.push_str(body.trim_end());
            prompt.push('\n');
        }
        let options = CompletionOptions {
            model_id: config.model_id.clone(),
            temperature: config.temperature,
            max_tokens: self.config.max_tokens,
            seed: Some(self.config.seed),
        };
        let timeout = Duration::from_secs_f64(self.config.call_timeout_secs.max(0.0));
        let reply = tokio::time::timeout(timeout, self.client.complete(&prompt, &options))
            .await
            .map_err(|_| Failure::Timeout(node.clone()))?
            .map_err(|e| Failure::Client(node.clone(), e))?;
        self.tokens_in.fetch_add(reply.tokens_in, Ordering::SeqCst);
        self.tokens_out.fetch_add(reply.tokens_out, Ordering::SeqCst);
        self.events.lock().unwrap().push(RunEvent::Call {
            node: node.clone(),
            call_index,
            tokens_in: reply.tokens_in,
            tokens_out: reply.tokens_out,
        });
        self.outputs.lock().unwrap().insert(node.clone(), reply.text.clone());
        self.handle.record_call(self.calls.load(Ordering::SeqCst), &node, &reply.text);
        Ok(reply.text)
    }

    async fn run_group(&self, group: &ExecGroup, input: String) -> Result<String, Failure> {
        let sid = group.subtask.id.as_str();
        let input = input.as_str();
        match &group.pattern {
            PatternParams::SingleAgent => self.call(sid, "agent", &[("Input", input)]).await,
            PatternParams::Reflection { max_iterations, .. } => {
                let mut draft = String::new();
                let mut feedback: Option<String> = None;
                for _ in 0..*max_iterations {
                    draft = match &feedback {
                        None => self.call(sid, "generator", &[("Input", input)]).await?,
                        Some(fb) => {
                            self.call(
                                sid,
                                "generator",
                                &[("Input", input), ("Previous draft", &draft), ("Reviewer feedback", fb)],
                            )
                            .await?
                        }
                    };
                    let review = self.call(sid, "critic", &[("Input", input), ("Draft", &draft)]).await?;
                    if parse_verdict(&review) == Verdict::Approve {
                        break;
                    }
                    feedback = Some(review);
                }
                Ok(draft)
            }
            PatternParams::Redundant {
                num_agents,
                aggregate,
            } => {
                let roles: Vec<String> = (1..=*num_agents).map(|i| format!("worker_{i}")).collect();
                let replies = join_all(roles.iter().map(|r| async move { self.call(sid, r, &[("Input", input)]).await })).await;
                let mut labeled = Vec::with_capacity(roles.len());
                for (role, reply) in roles.iter().zip(replies) {
                    labeled.push(format!("[{role}]\n{}", reply?));
                }
                let labeled = labeled.join("\n\n");
                if *aggregate {
                    self.call(sid, "aggregator", &[("Input", input), ("Responses", &labeled)])
                        .await
                } else {
                    Ok(labeled)
                }
            }
            PatternParams::Supervision {
                num_workers,
                max_rounds,
            } => {
                let workers: Vec<String> = (1..=*num_workers).map(|i| format!("worker_{i}")).collect();
                let mut progress: Vec<String> = Vec::new();
                let mut last_result = String::new();
                for round in 1..=*max_rounds {
                    let history = if progress.is_empty() {
                        "No worker has acted yet.".to_string()
                    } else {
                        progress.join("\n\n")
                    };
                    let round_text = format!("{round} of {max_rounds}");
                    let reply = self
                        .call(
                            sid,
                            "supervisor",
                            &[("Input", input), ("Progress", &history), ("Round", &round_text)],
                        )
                        .await?;
                    match parse_decision(&reply, &workers) {
                        Decision::Finish(answer) => return Ok(answer),
                        Decision::Route { worker, instructions } => {
                            let result = self
                                .call(
                                    sid,
                                    &worker,
                                    &[("Input", input), ("Instructions from the supervisor", &instructions)],
                                )
                                .await?;
                            progress.push(format!("[{worker}] {instructions}\n{result}"));
                            last_result = result;
                        }
                    }
                }
                Ok(last_result)
            }
            PatternParams::Discussion {
                num_agents,
                num_rounds,
                turn_order,
                summarize,
            } => {
                let speakers: Vec<String> = (1..=*num_agents).map(|i| format!("speaker_{i}")).collect();
                let mut transcript: Vec<(String, String)> = Vec::new();
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ stable_hash(sid));
                for round in 1..=*num_rounds {
                    let round_text = format!("{round} of {num_rounds}");
                    match turn_order {
                        TurnOrder::Simultaneous => {
                            let snapshot = render_transcript(&transcript);
                            let (snapshot, round_text) = (&snapshot, &round_text);
                            let replies = join_all(speakers.iter().map(|s| async move {
                                self.call(
                                    sid,
                                    s,
                                    &[("Input", input), ("Discussion so far", snapshot), ("Round", round_text)],
                                )
                                .await
                            }))
                            .await;
                            for (speaker, reply) in speakers.iter().zip(replies) {
                                transcript.push((speaker.clone(), reply?));
                            }
                        }
                        TurnOrder::RoundRobin | TurnOrder::Random => {
                            let mut order: Vec<&String> = speakers.iter().collect();
                            if *turn_order == TurnOrder::Random {
                                order.shuffle(&mut rng);
                            }
                            for speaker in order {
                                let so_far = render_transcript(&transcript);
                                let reply = self
                                    .call(
                                        sid,
                                        speaker,
                                        &[("Input", input), ("Discussion so far", &so_far), ("Round", &round_text)],
                                    )
                                    .await?;
                                transcript.push((speaker.clone(), reply));
                            }
                        }
                    }
                }
                if *summarize {
                    let full = render_transcript(&transcript);
                    self.call(sid, "summarizer", &[("Input", input), ("Discussion", &full)])
                        .await
                } else {
                    Ok(transcript.pop().map(|(_, text)| text).unwrap_or_default())
                }
            }
        }
    }
}

fn render_transcript(transcript: &[(String, String)]) -> String {
    if transcript.is_empty() {
        return "Nobody has spoken yet.".to_string();
    }
    transcript
        .iter()
        .map(|(speaker, text)| format!("[{speaker}] {text}"))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// FNV-1a, so per-group seeds do not depend on the std hasher.
fn stable_hash(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x1000_0000_01b3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Approve,
    Revise,
}

/// The last APPROVE or REVISE token decides; anything else counts as REVISE.
pub fn parse_verdict(reply: &str) -> Verdict {
    reply
        .split(|c: char| !c.is_ascii_alphabetic())
        .rev()
        .find_map(|token| match token {
            "APPROVE" => Some(Verdict::Approve),
            "REVISE" => Some(Verdict::Revise),
            _ => None,
        })
        .unwrap_or(Verdict::Revise)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Route { worker: String, instructions: String },
    Finish(String),
}

/// Reads the first ROUTE:/FINISH: directive. Unknown workers and replies
/// without a directive finish with the raw text.
pub fn parse_decision(reply: &str, workers: &[String]) -> Decision {
    let route = reply.find("ROUTE:");
    let finish = reply.find("FINISH:");
    match (route, finish) {
        (Some(r), f) if f.is_none_or(|f| r < f) => {
            let rest = reply[r + "ROUTE:".len()..].trim_start();
            let end = rest
                .find(|c: char| !(c.is_alphanumeric() || c == '_'))
                .unwrap_or(rest.len());
            let worker = &rest[..end];
            if workers.iter().any(|w| w == worker) {
                Decision::Route {
                    worker: worker.to_string(),
                    instructions: rest[end..].trim().to_string(),
                }
            } else {
                Decision::Finish(reply.trim().to_string())
            }
        }
        (_, Some(f)) => Decision::Finish(reply[f + "FINISH:".len()..].trim().to_string()),
        _ => Decision::Finish(reply.trim().to_string()),
    }
}

fn join_outputs(graph: &ExecutableGraph, ids: &[String], outputs: &HashMap<String, String>) -> String {
    if ids.len() == 1 {
        return outputs.get(&ids[0]).cloned().unwrap_or_default();
    }
    ids.iter()
        .map(|id| {
            let label = graph.group(id).map(|g| g.subtask.label.as_str()).unwrap_or(id);
            format!("### {label}\n{}", outputs.get(id).map(String::as_str).unwrap_or(""))
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

type GroupFuture<'a> = Pin<Box<dyn Future<Output = (String, Result<String, Failure>)> + Send + 'a>>;

fn launch<'a>(ctx: &'a Ctx<'a>, group: &'a ExecGroup, input: String) -> GroupFuture<'a> {
    Box::pin(async move { (group.subtask.id.clone(), ctx.run_group(group, input).await) })
}

/// Runs with a fresh detached handle named `run`.
pub async fn run(
    graph: &ExecutableGraph,
    config: &RunConfig,
    client: &dyn CompletionClient,
) -> Result<RunRecord, RunError> {
    run_tracked(graph, config, client, &RunHandle::detached("run")).await
}

/// Executes the graph. A subtask starts as soon as all of its predecessors
/// have produced output; fan-out inside patterns runs concurrently.
pub async fn run_tracked(
    graph: &ExecutableGraph,
    config: &RunConfig,
    client: &dyn CompletionClient,
    handle: &RunHandle,
) -> Result<RunRecord, RunError> {
    handle.start();
    let started_at = chrono::Utc::now();
    let clock = tokio::time::Instant::now();
    let ctx = Ctx {
        graph,
        client,
        config,
        handle,
        limit: config.call_limit(graph),
        calls: AtomicU64::new(0),
        tokens_in: AtomicU64::new(0),
        tokens_out: AtomicU64::new(0),
        outputs: Mutex::new(BTreeMap::new()),
        events: Mutex::new(Vec::new()),
    };

    let mut waiting: HashMap<&str, usize> = graph
        .groups
        .iter()
        .map(|g| (g.subtask.id.as_str(), g.predecessors.len()))
        .collect();
    let mut results: HashMap<String, String> = HashMap::new();
    let mut running: FuturesUnordered<GroupFuture<'_>> = FuturesUnordered::new();
    for id in &graph.entry {
        let group = graph.group(id).expect("entry group");
        running.push(launch(&ctx, group, config.input_text.clone()));
    }

    let mut failure = None;
    while let Some((sid, result)) = running.next().await {
        let output = match result {
            Ok(output) => output,
            Err(f) => {
                failure = Some(f);
                break;
            }
        };
        results.insert(sid.clone(), output);
        ctx.events.lock().unwrap().push(RunEvent::SubtaskDone { subtask: sid.clone() });
        let group = graph.group(&sid).expect("known group");
        for succ in &group.subtask.successors {
            let remaining = waiting.get_mut(succ.as_str()).expect("known successor");
            *remaining -= 1;
            if *remaining == 0 {
                let next = graph.group(succ).expect("known group");
                let upstream = join_outputs(graph, &next.predecessors, &results);
                let input = format!("{}\n\n## Upstream results\n{upstream}", config.input_text.trim_end());
                running.push(launch(&ctx, next, input.trim_start().to_string()));
            }
        }
    }
    drop(running);

    let final_output = if failure.is_none() {
        join_outputs(graph, &graph.exit, &results)
    } else {
        String::new()
    };
    let mut events = ctx.events.into_inner().unwrap();
    if let Some(Failure::Budget) = &failure {
        events.push(RunEvent::Aborted {
            reason: format!("call budget of {} exhausted", ctx.limit),
        });
    }
    let record = RunRecord {
        id: handle.id(),
        workflow_id: graph.workflow_id.clone(),
        started_at,
        wall_time: clock.elapsed().as_secs_f64(),
        llm_calls: ctx.calls.load(Ordering::SeqCst),
        tokens_in: ctx.tokens_in.load(Ordering::SeqCst),
        tokens_out: ctx.tokens_out.load(Ordering::SeqCst),
        node_outputs: ctx.outputs.into_inner().unwrap(),
        final_output,
        user_rating: None,
        custom_values: BTreeMap::new(),
        complete: failure.is_none(),
        events,
    };
    match failure {
        None => {
            handle.finish(&record.id);
            Ok(record)
        }
        Some(Failure::Budget) => {
            let err = RunError::BudgetExceeded {
                limit: ctx.limit,
                partial: Box::new(record),
            };
            handle.abort(&err.partial().id, err.to_string());
            Err(err)
        }
        Some(Failure::Timeout(node)) => {
            let err = RunError::Timeout {
                node,
                partial: Box::new(record),
            };
            handle.fail(err.to_string());
            Err(err)
        }
        Some(Failure::Client(node, source)) => {
            let err = RunError::Client {
                node,
                source,
                partial: Box::new(record),
            };
            handle.fail(err.to_string());
            Err(err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("Looks fine.\nAPPROVE"), Verdict::Approve);
        assert_eq!(parse_verdict("APPROVE the idea but REVISE the tone"), Verdict::Revise);
        assert_eq!(parse_verdict("approve"), Verdict::Revise);
        assert_eq!(parse_verdict(""), Verdict::Revise);
    }

    #[test]
    fn decision_parsing() {
        let workers = vec!["worker_1".to_string(), "worker_2".to_string()];
        assert_eq!(
            parse_decision("ROUTE:worker_2 check the refund policy", &workers),
            Decision::Route {
                worker: "worker_2".into(),
                instructions: "check the refund policy".into()
            }
        );
        assert_eq!(parse_decision("FINISH: done", &workers), Decision::Finish("done".into()));
        assert_eq!(
            parse_decision("ROUTE:worker_9", &workers),
            Decision::Finish("ROUTE:worker_9".into())
        );
        assert_eq!(parse_decision("hmm", &workers), Decision::Finish("hmm".into()));
        assert_eq!(
            parse_decision("FINISH: ok. ROUTE:worker_1", &workers),
            Decision::Finish("ok. ROUTE:worker_1".into())
        );
    }
}
