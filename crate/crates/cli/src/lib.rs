//! Library side of the `affordkit` command: each subcommand is a plain
//! function so it can be driven from tests.

pub mod commands;
pub mod config;
pub mod evaluate;

pub use commands::{
    cmd_annotate, cmd_gen_mini, cmd_lift, cmd_render, format_point3, AnnotateSummary, LiftArgs,
    RenderSummary,
};
pub use config::{PipelineSection, RunConfig};
pub use evaluate::{cmd_evaluate, render_table, write_report, EvalRunReport, RecordScore, RunError};

pub const TOOL_NAME: &str = "affordkit";
