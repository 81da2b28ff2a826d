//! Pipeline core: scenarios, monitoring, sessions, distillation,
//! orchestration and the evaluation protocol.

pub mod distill;
pub mod eval;
pub mod operator;
pub mod orchestrator;
pub mod scenarios;
pub mod session;
pub mod telemetry;

pub use distill::{distill_session, inject_premission, DistillError};
pub use operator::{OperatorAction, OperatorChannel, ScriptedOperator, SessionView};
pub use orchestrator::{run_pipeline, Coordinator, Event, Phase, Pipeline, PipelineConfig, PipelineError, Snapshot};
pub use scenarios::UseCase;
pub use session::{record_metrics, terminate_check, SessionLog};
