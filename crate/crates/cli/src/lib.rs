//! Session files, orchestration and result rendering for the `sosmc`
//! command-line tool.

pub mod render;
pub mod run;
pub mod session;

pub use render::{render_results, RenderOptions, SCHEMA};
pub use run::{run_session, Failure, PropertyResult, ResultsObject, RunError, Stage};
pub use session::{load_session, parse_session, Format, LoadError, PropertyKind, PropertySpec, SessionConfig, SessionError};
