mod common;

use axum::http::{header, Method, StatusCode};
use flowspace_core::canonical;
use flowspace_core::design_space::Level;
use flowspace_core::patterns::{axis_annotations, catalog};
use flowspace_core::persistence::{export_formats, export_workflow, load_project, save_project, LANGGRAPH_PYTHON};
use flowspace_core::testkit::{nodes_at, sample_project};
use flowspace_server::AppState;
use serde_json::{json, Value};

use common::{app, call, demo_state, get, post, wait_for_run};

fn bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    canonical::to_vec(value).unwrap()
}

#[tokio::test]
async fn catalog_endpoints() {
    let (app, _) = app(demo_state());
    let patterns = get(&app, "/patterns").await;
    assert_eq!(patterns.status, StatusCode::OK);
    assert_eq!(patterns.json().as_array().unwrap().len(), 7);
    assert_eq!(patterns.body, bytes(&catalog()));
    assert_eq!(get(&app, "/formats").await.body, bytes(&export_formats()));
    let annotations = get(&app, "/patterns/annotations?dimension=latency").await;
    assert_eq!(annotations.body, bytes(&axis_annotations("latency")));
}

#[tokio::test]
async fn get_endpoints_match_library_serialization() {
    let space = sample_project();
    let state = demo_state();
    state.insert(space.clone()).await;
    let (app, _) = app(state);

    let p = space.id();
    assert_eq!(get(&app, &format!("/projects/{p}")).await.body, save_project(&space));
    assert_eq!(get(&app, &format!("/projects/{p}/tree")).await.body, bytes(&space.tree().unwrap()));
    assert_eq!(get(&app, &format!("/projects/{p}/dimensions")).await.body, bytes(&space.dimensions()));

    for node in space.nodes() {
        let n = &node.id;
        let detail = get(&app, &format!("/nodes/{n}")).await;
        assert_eq!(detail.status, StatusCode::OK);
        assert_eq!(detail.body, bytes(&space.node_detail(n).unwrap()), "{n}");
        assert_eq!(get(&app, &format!("/nodes/{n}/glyph")).await.body, bytes(&space.glyph_descriptor(n).unwrap()));
        assert_eq!(
            get(&app, &format!("/nodes/{n}/dimensions")).await.body,
            bytes(&space.compute_dimensions(n).unwrap())
        );
        for (x, y) in [("number_of_subtasks", "user_rating"), ("creativity", "number_of_agents"), ("running_time", "running_time")] {
            let scatter = get(&app, &format!("/projects/{p}/scatter?x={x}&y={y}&selected={n}")).await;
            assert_eq!(scatter.body, bytes(&space.scatter_points(n, x, y).unwrap()), "{n} {x} {y}");
        }
    }

    for n in nodes_at(&space, Level::Workflow) {
        let flow = get(&app, &format!("/nodes/{n}/export")).await;
        let expected = export_workflow(&space, &n, flowspace_core::persistence::FLOW_INTERCHANGE).unwrap();
        assert_eq!(flow.body, expected.content.as_bytes());
        assert_eq!(flow.headers[header::CONTENT_TYPE], "application/json");
        let py = get(&app, &format!("/nodes/{n}/export?format={LANGGRAPH_PYTHON}")).await;
        let expected = export_workflow(&space, &n, LANGGRAPH_PYTHON).unwrap();
        assert_eq!(py.body, expected.content.as_bytes());
        assert!(py.headers[header::CONTENT_DISPOSITION].to_str().unwrap().contains(&expected.file_name));
    }

    let run = space.runs().next().unwrap();
    assert_eq!(get(&app, &format!("/runs/{}/record", run.id)).await.body, bytes(run));
    let status = get(&app, &format!("/runs/{}", run.id)).await.json();
    assert_eq!(status["state"], "done");
    assert_eq!(status["record_id"], run.id.as_str());
}

#[tokio::test]
async fn error_statuses() {
    let space = sample_project();
    let state = demo_state();
    state.insert(space.clone()).await;
    let (app, _) = app(state);
    let l1 = nodes_at(&space, Level::Plan);
    let leaf_plan = l1.iter().find(|n| space.children(n).is_empty()).unwrap();
    let busy_plan = l1.iter().find(|n| !space.children(n).is_empty()).unwrap();
    let l2 = &nodes_at(&space, Level::Assignment)[0];
    let l3 = &nodes_at(&space, Level::Workflow)[0];

    let r = call(&app, Method::PATCH, &format!("/nodes/{leaf_plan}"), Some(r#"{"subtasks": []}"#)).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["code"], "validation_failed");
    assert!(String::from_utf8_lossy(&r.body).contains("at least one subtask"));

    let r = call(&app, Method::PATCH, &format!("/nodes/{busy_plan}"), Some(r#"{"subtasks": []}"#)).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["code"], "has_children");

    let r = call(&app, Method::PATCH, &format!("/nodes/{leaf_plan}"), Some("{\"subtasks\": [")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let r = post(&app, &format!("/nodes/{l3}/derive"), "{}").await;
    assert_eq!((r.status, r.json()["code"].clone()), (StatusCode::UNPROCESSABLE_ENTITY, json!("already_concrete")));

    let r = get(&app, &format!("/nodes/{l2}/export")).await;
    assert_eq!((r.status, r.json()["code"].clone()), (StatusCode::UNPROCESSABLE_ENTITY, json!("not_executable")));
    let r = get(&app, &format!("/nodes/{l3}/export?format=bpmn")).await;
    assert_eq!(r.json()["code"], "unknown_format");

    let r = post(&app, &format!("/nodes/{l3}/dimensions"), r#"{"name": "estimated_llm_calls", "value": 3}"#).await;
    assert_eq!(r.json()["code"], "reserved_dimension");
    let r = post(&app, &format!("/nodes/{l3}/dimensions"), r#"{"name": "creativity", "value": "high"}"#).await;
    assert_eq!(r.json()["code"], "dimension_kind");
    let r = get(&app, &format!("/projects/{}/scatter?x=nope&y=number_of_subtasks&selected={l3}", space.id())).await;
    assert_eq!(r.json()["code"], "unknown_dimension");

    for uri in ["/nodes/pfixture-n999999", "/nodes/elsewhere-n000001", "/projects/nope/tree", "/runs/pfixture-run424242"] {
        let r = get(&app, uri).await;
        assert_eq!(r.status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(r.json()["code"], "not_found");
    }
    assert_eq!(post(&app, "/workflows/unknown/runs", "{}").await.status, StatusCode::NOT_FOUND);
    assert_eq!(post(&app, "/workflows/pfixture-wf999999/runs", "{}").await.status, StatusCode::NOT_FOUND);

    let r = post(&app, "/projects", r#"{"task": "   "}"#).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let run = space.runs().next().unwrap();
    let r = post(&app, &format!("/runs/{}/rating", run.id), r#"{"value": "five"}"#).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn generation_walks_all_three_levels() {
    let (app, state) = app(demo_state());
    let created = post(&app, "/projects", r#"{"task": "Summarize recent work on soil microbes.", "tools": ["web_search"]}"#).await;
    assert_eq!(created.status, StatusCode::CREATED);
    let project = created.json();
    let p = project["id"].as_str().unwrap().to_string();
    assert_eq!(project["tools"]["tools"], json!(["web_search"]));

    let plans = post(&app, &format!("/projects/{p}/plans"), r#"{"k": 3}"#).await;
    assert_eq!(plans.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&plans.body));
    let plans = plans.json();
    assert_eq!(plans.as_array().unwrap().len(), 3);
    let first = plans[0]["id"].as_str().unwrap().to_string();

    let assignments = post(&app, &format!("/nodes/{first}/derive"), r#"{"k": 2}"#).await.json();
    assert_eq!(assignments.as_array().unwrap().len(), 2);
    assert!(assignments.as_array().unwrap().iter().all(|n| n["level"] == 2 && n["parent_id"] == first.as_str()));
    let l2 = assignments[0]["id"].as_str().unwrap().to_string();

    let workflows = post(&app, &format!("/nodes/{l2}/derive"), r#"{"k": 1}"#).await;
    assert_eq!(workflows.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&workflows.body));
    let l3 = workflows.json()[0]["id"].as_str().unwrap().to_string();
    let more = post(&app, &format!("/nodes/{l3}/siblings"), r#"{"k": 1}"#).await.json();
    assert_eq!(more[0]["parent_id"], l2.as_str());

    // The first plan is the diamond with Redundant on `gather`.
    let detail = get(&app, &format!("/nodes/{l2}")).await.json();
    assert_eq!(detail["artifact"]["assignments"]["s1"]["kind"], "Redundant");
    let glyph = get(&app, &format!("/nodes/{first}/glyph")).await.json();
    assert_eq!(glyph, json!({"glyph": "arcs", "depth": 3, "widths": [1, 2, 1], "total_subtasks": 4}));

    let tree = get(&app, &format!("/projects/{p}/tree")).await;
    let project = state.project(&p).await.unwrap();
    let space = project.space.read().await;
    assert_eq!(space.node_count(), 3 + 2 + 2);
    assert_eq!(tree.body, bytes(&space.tree().unwrap()));
    assert!(!space.prompt_log().is_empty());
}

#[tokio::test]
async fn run_lifecycle() {
    let space = sample_project();
    let state = demo_state();
    state.insert(space.clone()).await;
    let (app, state) = app(state);
    let node = &nodes_at(&space, Level::Workflow)[1];
    let workflow_id = space.workflow_of(node).unwrap().id.clone();

    let started = post(&app, &format!("/workflows/{workflow_id}/runs"), r#"{"config": {"input_text": "go"}}"#).await;
    assert_eq!(started.status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&started.body));
    let started = started.json();
    assert_eq!(started["node_id"], node.as_str());
    let run_id = started["run_id"].as_str().unwrap().to_string();

    let status = wait_for_run(&app, &run_id).await;
    assert_eq!(status["state"], "done", "{status}");
    let record = get(&app, &format!("/runs/{run_id}/record")).await.json();
    assert_eq!(record["complete"], true);
    assert_eq!(record["llm_calls"], status["calls_so_far"]);
    assert!(record["final_output"].as_str().is_some_and(|s| !s.is_empty()));

    let rated = post(&app, &format!("/runs/{run_id}/rating"), r#"{"value": 2.5}"#).await.json();
    assert_eq!(rated["user_rating"], 2.5);
    let dims = get(&app, &format!("/nodes/{node}/dimensions")).await.json();
    assert_eq!(dims["user_rating"], 2.5);
    assert_eq!(dims["running_time"], record["wall_time"]);

    // Runs are also addressable through the node id.
    let again = post(&app, &format!("/workflows/{node}/runs"), "").await.json();
    wait_for_run(&app, again["run_id"].as_str().unwrap()).await;
    let project = state.project(space.id()).await.unwrap();
    assert_eq!(project.space.read().await.runs().count(), 3);
}

#[tokio::test]
async fn storage_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (app1, _) = app(demo_state().with_storage(dir.path()).unwrap());
    let project: Value = post(&app1, "/projects", r#"{"task": {"text": "Plan a trip.", "constraints": "cheap"}}"#)
        .await
        .json();
    let p = project["id"].as_str().unwrap().to_string();
    let plans = post(&app1, &format!("/projects/{p}/plans"), r#"{"k": 2}"#).await.json();
    let n = plans[1]["id"].as_str().unwrap();
    post(&app1, &format!("/nodes/{n}/dimensions"), r#"{"name": "creativity", "value": 4}"#).await;
    let before = get(&app1, &format!("/projects/{p}")).await.body;

    let on_disk = std::fs::read(dir.path().join(format!("{p}.forge.json"))).unwrap();
    assert_eq!(on_disk, before);
    load_project(&on_disk).unwrap();

    let (app2, _) = app(AppState::new(
        std::sync::Arc::new(flowspace_core::llm::MockClient::echo()),
        Default::default(),
    )
    .with_storage(dir.path())
    .unwrap());
    assert_eq!(get(&app2, &format!("/projects/{p}")).await.body, before);
    // New ids continue after the stored counter.
    let next = post(&app2, &format!("/nodes/{n}/dimensions"), r#"{"name": "creativity", "value": 5}"#).await;
    assert_eq!(next.status, StatusCode::OK);
}
