//! Compilation of concrete workflows into executable graphs and their
//! execution against a [`CompletionClient`](crate::llm::CompletionClient).

mod compile;
mod run;
mod status;

pub use compile::{
    compile, shape_label, BranchGroup, CompileError, ExecGroup, ExecNode, ExecNodeKind, ExecutableGraph,
    GraphShape, END, START,
};
pub use run::{parse_decision, parse_verdict, run, run_tracked, Decision, RunConfig, RunError, Verdict};
pub use status::{RunHandle, RunRegistry, RunState, RunStatus};
