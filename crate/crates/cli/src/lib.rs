//! Scenario-driven front end for the `supercurrents` library.

pub mod run;
pub mod scenario;
pub mod tasks;

pub use run::{run, RunOptions, RunSummary, TaskSummary};
pub use scenario::{Objects, Scenario};
pub use tasks::{Op, Outcome, Task};

use serde_json::{json, Value};
use supercurrents::builtins::catalog;

/// The builtin corpus as JSON.
pub fn list_builtins() -> Value {
    json!(catalog())
}
