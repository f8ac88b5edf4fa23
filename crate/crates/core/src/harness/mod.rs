//! Run configuration, diagnostics output, the acceleration comparison and
//! the verification table behind the `langevin` command.

pub mod config;
pub mod figure;
pub mod run;
pub mod verify_table;

pub use config::{DiagnosticsMode, MomentumInit, PotentialKind, RunConfig, ScheduleMode, SEED_ENV};
pub use figure::{figure_accel, FigureConfig, FigureOutput};
pub use run::{run, ChainEnsemble, DiagnosticsRow, ResolvedRun, RunOutput};
pub use verify_table::{verify_all, VerifyGrid, VerifyRow, VerifyTable};
