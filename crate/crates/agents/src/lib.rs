//! The two advisory agents.
//!
//! Agent A ([`characterize`]) turns an anomaly signature into a problem
//! characterisation, context-informed when the case memory returns
//! precedents. Agent B ([`Dialogue`]) ranks root-cause hypotheses against
//! the local knowledge corpus and refines them with the operator.
//!
//! Both talk to a [`ChatBackend`] through fenced JSON. Neither has any way
//! to reach the vehicle: this crate does not depend on the simulator.

pub mod agent_a;
pub mod agent_b;
pub mod backend;
pub mod faithful;
pub mod message;
pub mod mock;
pub mod task;

pub use agent_a::{characterize, Mode, PrecedentRef, ProblemCharacterisation, AGENT_A_PROMPT};
pub use agent_b::{
    generate_hypotheses, ground_knowledge, Dialogue, Grounding, HypothesisSet, StepOutcome, GUARDRAIL_PROMPT, UNDIAGNOSED,
};
pub use backend::{llm_chat, BackendError, BackendKind, ChatBackend, HttpChat};
pub use message::{ChatMessage, Role};
pub use mock::{MockFailure, ScriptedMock};
pub use task::{CitedChannel, Hypothesis};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("dialogue session is closed")]
    SessionClosed,
}
