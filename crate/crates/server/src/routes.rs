use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::Utc;
use flowspace_core::canonical;
use flowspace_core::design_space::{DerivationRequest, DesignSpace, NodeEdit};
use flowspace_core::executor::{compile, run_tracked, RunConfig};
use flowspace_core::generator::ToolContext;
use flowspace_core::ids::new_project_scope;
use flowspace_core::ir::{DimValue, TaskDescription};
use flowspace_core::patterns::{axis_annotations, catalog};
use flowspace_core::persistence::{export_formats, export_workflow, save_project, FLOW_INTERCHANGE};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::state::{AppState, Project};

type ApiResult = Result<Response, ApiError>;

pub fn canonical_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match canonical::to_vec(value) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn ok<T: Serialize>(value: &T) -> ApiResult {
    Ok(canonical_response(StatusCode::OK, value))
}

fn created<T: Serialize>(value: &T) -> ApiResult {
    Ok(canonical_response(StatusCode::CREATED, value))
}

/// Parses a JSON body; an empty body reads as `{}`.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/patterns", get(list_patterns))
        .route("/patterns/annotations", get(pattern_annotations))
        .route("/formats", get(list_formats))
        .route("/projects", post(create_project))
        .route("/projects/{p}", get(get_project))
        .route("/projects/{p}/tree", get(get_tree))
        .route("/projects/{p}/dimensions", get(get_dimension_registry))
        .route("/projects/{p}/scatter", get(get_scatter))
        .route("/projects/{p}/plans", post(create_plans))
        .route("/nodes/{n}", get(get_node).patch(patch_node))
        .route("/nodes/{n}/glyph", get(get_glyph))
        .route("/nodes/{n}/dimensions", get(get_dimensions).post(annotate))
        .route("/nodes/{n}/export", get(get_export))
        .route("/nodes/{n}/derive", post(derive_children))
        .route("/nodes/{n}/siblings", post(derive_siblings))
        .route("/workflows/{w}/runs", post(start_run))
        .route("/runs/{r}", get(get_run))
        .route("/runs/{r}/record", get(get_run_record))
        .route("/runs/{r}/rating", post(rate_run))
        .with_state(state)
}

async fn list_patterns() -> ApiResult {
    ok(&catalog())
}

#[derive(Deserialize)]
struct AnnotationQuery {
    dimension: String,
}

async fn pattern_annotations(Query(q): Query<AnnotationQuery>) -> ApiResult {
    ok(&axis_annotations(&q.dimension))
}

async fn list_formats() -> ApiResult {
    ok(&export_formats())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TaskInput {
    Text(String),
    Full(TaskDescription),
}

#[derive(Deserialize)]
struct CreateProject {
    task: TaskInput,
    #[serde(default)]
    tools: Vec<String>,
    #[serde(default)]
    sources: Vec<String>,
}

async fn create_project(State(state): State<Arc<AppState>>, bytes: Bytes) -> ApiResult {
    let request: CreateProject = body(&bytes)?;
    let task = match request.task {
        TaskInput::Text(text) => TaskDescription::new(text)?,
        TaskInput::Full(task) => task,
    };
    task.validate()?;
    let space = DesignSpace::new(new_project_scope(), task, Utc::now()).with_tools(ToolContext {
        tools: request.tools,
        sources: request.sources,
    });
    state.persist(&space)?;
    let document = save_project(&space);
    state.insert(space).await;
    Ok((StatusCode::CREATED, [(header::CONTENT_TYPE, "application/json")], document).into_response())
}

async fn get_project(State(state): State<Arc<AppState>>, Path(p): Path<String>) -> ApiResult {
    let project = state.project(&p).await?;
    let space = project.space.read().await;
    Ok(([(header::CONTENT_TYPE, "application/json")], save_project(&space)).into_response())
}

async fn get_tree(State(state): State<Arc<AppState>>, Path(p): Path<String>) -> ApiResult {
    let project = state.project(&p).await?;
    let space = project.space.read().await;
    ok(&space.tree()?)
}

async fn get_dimension_registry(State(state): State<Arc<AppState>>, Path(p): Path<String>) -> ApiResult {
    let project = state.project(&p).await?;
    let space = project.space.read().await;
    ok(&space.dimensions())
}

#[derive(Deserialize)]
struct ScatterQuery {
    x: String,
    y: String,
    selected: String,
}

async fn get_scatter(
    State(state): State<Arc<AppState>>,
    Path(p): Path<String>,
    Query(q): Query<ScatterQuery>,
) -> ApiResult {
    let project = state.project(&p).await?;
    let space = project.space.read().await;
    ok(&space.scatter_points(&q.selected, &q.x, &q.y)?)
}

#[derive(Deserialize)]
struct CountRequest {
    k: Option<usize>,
}

async fn generate_and_attach(
    state: &AppState,
    project: &Project,
    prepare: impl FnOnce(&DesignSpace) -> Result<DerivationRequest, ApiError>,
    k: usize,
) -> ApiResult {
    let _writer = project.writer.lock().await;
    let (request, generator) = {
        let space = project.space.read().await;
        (prepare(&space)?, state.generator(&space))
    };
    let artifacts = request.generate(&generator, k).await?;
    let mut space = project.space.write().await;
    let nodes = space.attach(&request, artifacts)?;
    state.persist(&space)?;
    created(&nodes)
}

async fn create_plans(State(state): State<Arc<AppState>>, Path(p): Path<String>, bytes: Bytes) -> ApiResult {
    let request: CountRequest = body(&bytes)?;
    let project = state.project(&p).await?;
    let k = request.k.unwrap_or(state.default_k);
    generate_and_attach(&state, &project, |space| Ok(space.prepare_plans()), k).await
}

async fn derive_children(State(state): State<Arc<AppState>>, Path(n): Path<String>, bytes: Bytes) -> ApiResult {
    let request: CountRequest = body(&bytes)?;
    let project = state.project_of("node", &n).await?;
    let k = request.k.unwrap_or(state.default_k);
    generate_and_attach(&state, &project, |space| Ok(space.prepare_children(&n)?), k).await
}

async fn derive_siblings(State(state): State<Arc<AppState>>, Path(n): Path<String>, bytes: Bytes) -> ApiResult {
    let request: CountRequest = body(&bytes)?;
    let project = state.project_of("node", &n).await?;
    let k = request.k.unwrap_or(state.default_k);
    generate_and_attach(&state, &project, |space| Ok(space.prepare_siblings(&n)?), k).await
}

async fn get_node(State(state): State<Arc<AppState>>, Path(n): Path<String>) -> ApiResult {
    let project = state.project_of("node", &n).await?;
    let space = project.space.read().await;
    ok(&space.node_detail(&n)?)
}

async fn patch_node(State(state): State<Arc<AppState>>, Path(n): Path<String>, bytes: Bytes) -> ApiResult {
    let edit: NodeEdit = body(&bytes)?;
    let project = state.project_of("node", &n).await?;
    let _writer = project.writer.lock().await;
    let mut space = project.space.write().await;
    space.edit_node(&n, edit)?;
    state.persist(&space)?;
    ok(&space.node_detail(&n)?)
}

async fn get_glyph(State(state): State<Arc<AppState>>, Path(n): Path<String>) -> ApiResult {
    let project = state.project_of("node", &n).await?;
    let space = project.space.read().await;
    ok(&space.glyph_descriptor(&n)?)
}

async fn get_dimensions(State(state): State<Arc<AppState>>, Path(n): Path<String>) -> ApiResult {
    let project = state.project_of("node", &n).await?;
    let space = project.space.read().await;
    ok(&space.compute_dimensions(&n)?)
}

#[derive(Deserialize)]
struct Annotation {
    name: String,
    value: DimValue,
}

async fn annotate(State(state): State<Arc<AppState>>, Path(n): Path<String>, bytes: Bytes) -> ApiResult {
    let annotation: Annotation = body(&bytes)?;
    let project = state.project_of("node", &n).await?;
    let _writer = project.writer.lock().await;
    let mut space = project.space.write().await;
    let node = space.annotate_dimension(&n, &annotation.name, annotation.value)?;
    state.persist(&space)?;
    ok(&node)
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn get_export(
    State(state): State<Arc<AppState>>,
    Path(n): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult {
    let project = state.project_of("node", &n).await?;
    let space = project.space.read().await;
    let artifact = export_workflow(&space, &n, q.format.as_deref().unwrap_or(FLOW_INTERCHANGE))?;
    let disposition = format!("attachment; filename=\"{}\"", artifact.file_name);
    Ok((
        [
            (header::CONTENT_TYPE, artifact.media_type),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        artifact.content,
    )
        .into_response())
}

#[derive(Deserialize)]
struct StartRun {
    #[serde(default)]
    config: Option<RunConfig>,
}

#[derive(Serialize)]
struct RunStarted {
    run_id: String,
    node_id: String,
}

/// Starts a run of the workflow with the given id (or of the level-3 node
/// with that id) and returns immediately; progress is polled on `/runs/{r}`.
async fn start_run(State(state): State<Arc<AppState>>, Path(w): Path<String>, bytes: Bytes) -> ApiResult {
    let request: StartRun = body(&bytes)?;
    let project = state.project_of("workflow", &w).await?;
    let (node_id, graph, run_id) = {
        let space = project.space.read().await;
        let node = space
            .resolve_workflow_node(&w)
            .map_err(|_| ApiError::not_found("workflow", &w))?;
        let graph = compile(space.workflow_of(&node.id)?)?;
        (node.id.clone(), graph, space.ids().next("run"))
    };
    let config = request.config.unwrap_or_default();
    let handle = state.runs.register(run_id.clone());
    let task_state = state.clone();
    let node = node_id.clone();
    tokio::spawn(async move {
        let record = match run_tracked(&graph, &config, task_state.client.as_ref(), &handle).await {
            Ok(record) => record,
            Err(e) => e.partial().clone(),
        };
        let _writer = project.writer.lock().await;
        let mut space = project.space.write().await;
        let stored = space
            .record_run(&node, record)
            .map_err(ApiError::from)
            .and_then(|_| task_state.persist(&space));
        if let Err(e) = stored {
            tracing::error!(run = %handle.id(), "failed to store run: {}", e.message);
            handle.fail(e.message);
        }
    });
    Ok(canonical_response(StatusCode::ACCEPTED, &RunStarted { run_id, node_id }))
}

async fn get_run(State(state): State<Arc<AppState>>, Path(r): Path<String>) -> ApiResult {
    let project = state.project_of("run", &r).await?;
    let space = project.space.read().await;
    let status = state
        .visible_status(&space, &r)
        .ok_or_else(|| ApiError::not_found("run", &r))?;
    ok(&status)
}

async fn get_run_record(State(state): State<Arc<AppState>>, Path(r): Path<String>) -> ApiResult {
    let project = state.project_of("run", &r).await?;
    let space = project.space.read().await;
    ok(space.run(&r)?)
}

#[derive(Deserialize)]
struct Rating {
    value: f64,
}

async fn rate_run(State(state): State<Arc<AppState>>, Path(r): Path<String>, bytes: Bytes) -> ApiResult {
    let rating: Rating = body(&bytes)?;
    let project = state.project_of("run", &r).await?;
    let _writer = project.writer.lock().await;
    let mut space = project.space.write().await;
    let record = space.rate_run(&r, rating.value)?;
    state.persist(&space)?;
    ok(&record)
}

/// Summary used by the command line `validate` subcommand.
#[derive(Debug, Serialize)]
pub struct ProjectSummary {
    pub id: String,
    pub nodes_per_level: BTreeMap<u8, usize>,
    pub runs: usize,
}

impl ProjectSummary {
    pub fn of(space: &DesignSpace) -> Self {
        let mut nodes_per_level = BTreeMap::new();
        for node in space.nodes() {
            *nodes_per_level.entry(node.level.number()).or_default() += 1;
        }
        Self {
            id: space.id().to_string(),
            nodes_per_level,
            runs: space.runs().count(),
        }
    }
}
