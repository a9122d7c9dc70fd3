use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use flowspace_core::canonical;
use flowspace_core::executor::{compile, run_tracked, RunConfig, RunHandle};
use flowspace_core::generator::GenerationOptions;
use flowspace_core::persistence::{export_workflow, load_project_file, save_project_file, FLOW_INTERCHANGE};
use flowspace_server::config::LlmSettings;
use flowspace_server::routes::ProjectSummary;
use flowspace_server::{router, AppState, ServerConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "flowspace", version, about = "Explore, run and export multi-agent workflow designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the HTTP/JSON service.
    Serve {
        /// TOML config file.
        #[arg(long, env = "FLOWSPACE_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<SocketAddr>,
        /// Directory holding `*.forge.json` project files.
        #[arg(long)]
        storage: Option<PathBuf>,
        /// Use the mock LLM client, optionally with a fixture file.
        #[arg(long, num_args = 0..=1, default_missing_value = "")]
        mock: Option<PathBuf>,
    },
    /// Check a project file for schema and referential integrity.
    Validate { project: PathBuf },
    /// Export the workflow of a level-3 node.
    Export {
        project: PathBuf,
        node: String,
        #[arg(long, default_value = FLOW_INTERCHANGE)]
        format: String,
        /// Write to this file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Execute the workflow of a level-3 node and print the run record.
    Run {
        project: PathBuf,
        node: String,
        /// Use the mock LLM client, optionally with a fixture file.
        #[arg(long, num_args = 0..=1, default_missing_value = "")]
        mock: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_calls: Option<u64>,
        #[arg(long, default_value = "")]
        input: String,
        /// Store the run in the project file.
        #[arg(long)]
        save: bool,
    },
}

fn llm_settings(mock: Option<PathBuf>, base: LlmSettings) -> LlmSettings {
    match mock {
        Some(path) => LlmSettings {
            provider: "mock".into(),
            mock_fixture: (!path.as_os_str().is_empty()).then_some(path),
            ..base
        },
        None => base,
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve {
            config,
            listen,
            storage,
            mock,
        } => {
            let mut config = match config {
                Some(path) => ServerConfig::from_file(&path)?,
                None => ServerConfig::default(),
            };
            if let Some(listen) = listen {
                config.listen = listen;
            }
            if storage.is_some() {
                config.storage_dir = storage;
            }
            config.llm = llm_settings(mock, config.llm);
            let options = GenerationOptions {
                seed: config.seed,
                ..GenerationOptions::default()
            };
            let mut state = AppState::new(config.llm.client()?, options).with_default_k(config.default_k);
            if let Some(dir) = &config.storage_dir {
                state = state.with_storage(dir)?;
            }
            let app = router(Arc::new(state)).layer(config.cors());
            let listener = tokio::net::TcpListener::bind(config.listen)
                .await
                .with_context(|| format!("binding {}", config.listen))?;
            tracing::info!("listening on http://{}", listener.local_addr()?);
            axum::serve(listener, app).await?;
        }
        Command::Validate { project } => {
            let space = load_project_file(&project).with_context(|| format!("{}", project.display()))?;
            println!("{}", canonical::to_string(&ProjectSummary::of(&space))?.trim_end());
        }
        Command::Export {
            project,
            node,
            format,
            output,
        } => {
            let space = load_project_file(&project).with_context(|| format!("{}", project.display()))?;
            let artifact = export_workflow(&space, &node, &format)?;
            match output {
                Some(path) => std::fs::write(&path, artifact.content).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", artifact.content),
            }
        }
        Command::Run {
            project,
            node,
            mock,
            seed,
            max_calls,
            input,
            save,
        } => {
            let mut space = load_project_file(&project).with_context(|| format!("{}", project.display()))?;
            let client = llm_settings(mock, LlmSettings::default()).client()?;
            let graph = compile(space.workflow_of(&node)?)?;
            let config = RunConfig {
                seed,
                max_total_calls: max_calls,
                input_text: input,
                ..RunConfig::default()
            };
            let handle = RunHandle::detached(space.ids().next("run"));
            let (record, failure) = match run_tracked(&graph, &config, client.as_ref(), &handle).await {
                Ok(record) => (record, None),
                Err(e) => (e.partial().clone(), Some(e.to_string())),
            };
            println!("{}", canonical::to_string(&record)?.trim_end());
            if save {
                space.record_run(&node, record)?;
                save_project_file(&space, &project)?;
            }
            if let Some(reason) = failure {
                anyhow::bail!("run incomplete: {reason}");
            }
        }
    }
    Ok(())
}
