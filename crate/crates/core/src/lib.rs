//! Composable skill pipelines for LLM-driven agents.
//!
//! Skills declare the context keys they need and produce, compose
//! sequentially and in parallel, compile from DAGs, and run against any
//! backend implementing [`backend::Backend`].

pub mod backend;
pub mod compose;
pub mod config;
pub mod engine;
pub mod fixtures;
pub mod registry;
pub mod skill;
pub mod skills;
pub mod value;

pub use backend::{Backend, BackendError, GenerationConfig, LlmResponse, Usage};
pub use compose::{compile_graph, par, seq, validate_graph, LevelPlan, PipelineGraph};
pub use registry::{SkillRegistry, SkillFactory};
pub use skill::{execute_skill, Params, Skill, SkillDef, SkillError, SkillRef};
pub use value::{Context, Value};
