//! Desk-scale vehicle simulator run in lockstep with a fault-free digital twin.
//!
//! The "real" instance accepts injected faults; the twin receives the same
//! commands with no faults and independent sensor noise. Their paired
//! telemetry is the input to residual-based anomaly detection.

pub mod dynamics;
pub mod scenario;
pub mod sim;
pub mod state;

pub use dynamics::{step_vehicle, NoiseDraw, Step, VehicleParams, ALLOCATION, VERTICAL_THRUSTERS};
pub use scenario::{
    Axis, AxisDemand, CommandInput, FaultKind, FaultSpec, FaultTarget, NoiseStd, Scenario,
};
pub use sim::{run_scenario, write_ndjson, LockstepRun};
pub use state::{
    channel_values, residual, wrap_heading, wrap_signed, Channel, ChannelUnit, StateVector,
    TelemetryRecord, Velocity, RESIDUAL_CHANNELS, THRUSTER_COUNT,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid {kind:?} fault: {reason}")]
    InvalidFault { kind: FaultKind, reason: String },
}
