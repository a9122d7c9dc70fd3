//! Engine for designing, exploring, costing, executing and exporting
//! multi-agent LLM workflows.
//!
//! Candidates live in a three-level tree ([`design_space`]): task plans,
//! per-subtask pattern assignments, and concrete agent workflows. The
//! [`patterns`] catalog expands and costs each collaboration pattern,
//! [`generator`] asks an LLM for candidates, [`executor`] runs concrete
//! workflows and [`persistence`] stores projects and exports workflows.

pub mod canonical;
pub mod design_space;
pub mod executor;
pub mod generator;
pub mod ids;
pub mod ir;
pub mod llm;
pub mod patterns;
pub mod persistence;
pub mod testkit;
