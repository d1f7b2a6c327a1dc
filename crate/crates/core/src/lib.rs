//! Coverage-guided unit test generation for complex Python methods.
//!
//! The crate drives a language model through a generate / validate / refine
//! dialogue and, whenever a round covers new lines, shrinks the code shown to
//! the model by eliminating every statement that cannot lie on an execution
//! path through a still-uncovered line.
//!
//! Module map:
//!
//! - [`frontend`]: parse Python source, enumerate target units, McCabe complexity
//! - [`cfg`]: statement-level control-flow graphs and bounded path enumeration
//! - [`eliminate`]: covered-code elimination and slice reconstruction
//! - [`context`]: intra-file slices and summarized external dependencies
//! - [`llm`]: dialogue state, token accounting, live / mock / replay clients
//! - [`prompt`]: prompt templates and test-code extraction
//! - [`validation`]: shim protocol, unit-scoped coverage, pass rates
//! - [`engine`]: the per-slice dialogue loop and the outer elimination loop
//! - [`store`]: run configuration, per-unit JSON records, reporting
//! - [`cli`]: subcommand implementations behind the `covelim` binary

pub mod cfg;
pub mod cli;
pub mod context;
pub mod eliminate;
pub mod engine;
pub mod frontend;
pub mod llm;
pub mod prompt;
pub mod store;
pub mod validation;

mod pyast;
mod text;

pub use cfg::{build_cfg, enumerate_paths, FineGrainedCfg};
pub use eliminate::{eliminate, necessities, EliminatedSlice, PreserveSet};
pub use frontend::{
    cyclomatic_complexity, enumerate_target_units, parse_source, LineSpan, SourceModule,
    TargetUnit,
};
