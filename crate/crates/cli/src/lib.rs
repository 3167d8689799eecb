//! Headless driver for the remix pipeline: repository search and fetch,
//! scripted scene replays, slicing, and the HTTP service.

pub mod app;
pub mod script;

pub use app::{run, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE};
pub use script::{RemixScript, Replay, RunReport, ScriptOp};
