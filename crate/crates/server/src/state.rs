use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flowspace_core::design_space::DesignSpace;
use flowspace_core::executor::{RunRegistry, RunState, RunStatus};
use flowspace_core::generator::{GenerationOptions, Generator};
use flowspace_core::ids::scope_of;
use flowspace_core::llm::CompletionClient;
use flowspace_core::persistence::{load_project_file, save_project_file};
use tokio::sync::{Mutex, RwLock};

use crate::error::ApiError;

/// One project plus its single-writer lock. Readers take `space.read()`;
/// mutations first take `writer`, so generation can run without blocking
/// readers while still serializing writes.
pub struct Project {
    pub space: RwLock<DesignSpace>,
    pub writer: Mutex<()>,
}

pub struct AppState {
    projects: RwLock<BTreeMap<String, Arc<Project>>>,
    pub runs: RunRegistry,
    pub client: Arc<dyn CompletionClient>,
    pub options: GenerationOptions,
    pub default_k: usize,
    storage: Option<PathBuf>,
}

pub const PROJECT_EXTENSION: &str = "forge.json";

impl AppState {
    pub fn new(client: Arc<dyn CompletionClient>, options: GenerationOptions) -> Self {
        Self {
            projects: RwLock::new(BTreeMap::new()),
            runs: RunRegistry::new(),
            client,
            options,
            default_k: flowspace_core::generator::DEFAULT_PLAN_CANDIDATES,
            storage: None,
        }
    }

    pub fn with_default_k(mut self, k: usize) -> Self {
        self.default_k = k;
        self
    }

    /// Persists projects under `dir`, loading any project files already there.
    pub fn with_storage(mut self, dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut projects = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let is_project = path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(&format!(".{PROJECT_EXTENSION}")));
            if !is_project {
                continue;
            }
            let space = load_project_file(&path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            projects.insert(space.id().to_string(), Arc::new(Project::new(space)));
        }
        self.projects = RwLock::new(projects);
        self.storage = Some(dir.to_path_buf());
        Ok(self)
    }

    pub async fn insert(&self, space: DesignSpace) -> Arc<Project> {
        let id = space.id().to_string();
        let project = Arc::new(Project::new(space));
        self.projects.write().await.insert(id, project.clone());
        project
    }

    pub async fn project(&self, id: &str) -> Result<Arc<Project>, ApiError> {
        self.projects
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("project", id))
    }

    /// Project owning a node, workflow or run id.
    pub async fn project_of(&self, what: &str, id: &str) -> Result<Arc<Project>, ApiError> {
        self.projects
            .read()
            .await
            .get(scope_of(id))
            .cloned()
            .ok_or_else(|| ApiError::not_found(what, id))
    }

    pub fn generator(&self, space: &DesignSpace) -> Generator {
        Generator::new(self.client.clone(), space.prompt_log().clone(), self.options.clone())
    }

    pub fn persist(&self, space: &DesignSpace) -> Result<(), ApiError> {
        if let Some(dir) = &self.storage {
            save_project_file(space, &dir.join(format!("{}.{PROJECT_EXTENSION}", space.id())))?;
        }
        Ok(())
    }

    /// Run progress as clients see it. A run reads as terminal only once its
    /// record is stored in the project; runs from earlier sessions are
    /// reconstructed from their record.
    pub fn visible_status(&self, space: &DesignSpace, run_id: &str) -> Option<RunStatus> {
        let record = space.run(run_id).ok();
        match self.runs.run_status(run_id) {
            Some(mut status) => {
                if status.state.is_terminal() && record.is_none() {
                    status.state = RunState::Running;
                    status.record_id = None;
                    status.incomplete = false;
                    status.error = None;
                }
                Some(status)
            }
            None => record.map(|r| RunStatus {
                run_id: r.id.clone(),
                state: if r.complete { RunState::Done } else { RunState::Aborted },
                calls_so_far: r.llm_calls,
                partial_outputs: r.node_outputs.clone(),
                record_id: Some(r.id.clone()),
                incomplete: !r.complete,
                error: None,
            }),
        }
    }
}

impl Project {
    pub fn new(space: DesignSpace) -> Self {
        Self {
            space: RwLock::new(space),
            writer: Mutex::new(()),
        }
    }
}
