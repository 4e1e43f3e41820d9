//! Command implementations behind the `ssdrank` binary.
//!
//! Each subcommand is a plain function over its argument struct so tests and
//! scripts can drive it without spawning a process.

pub mod commands;
pub mod report;

pub use commands::{
    cmd_build, cmd_gen, cmd_hit_rate, cmd_plan, cmd_query, run, BuildArgs, Cli, Command, GenArgs,
    HitRateArgs, PipelineArgs, PlanArgs, QueryArgs,
};
pub use report::{mask_timing, PlanReport, RunReport};
