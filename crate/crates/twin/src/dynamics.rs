//! Per-axis first-order lag plant driven by proportional autopilot loops.
//!
//! The autopilot closes its loops on the true state. Sensor noise and
//! compass bias only affect what the vehicle reports, so a sensor fault never
//! feeds back into the plant.

use crate::scenario::{Axis, CommandInput, FaultKind, FaultSpec, FaultTarget};
use crate::state::{wrap_heading, wrap_signed, StateVector, Velocity, THRUSTER_COUNT};
use crate::SimError;

/// Thruster allocation, rows are thrusters, columns are (surge, sway, heave, yaw).
///
/// Four vectored horizontal thrusters at 45 degrees and two vertical
/// thrusters, in the usual six-thruster ROV layout.
pub const ALLOCATION: [[f64; 4]; THRUSTER_COUNT] = [
    [0.5, -0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0, -0.5],
    [0.5, 0.5, 0.0, 0.5],
    [0.5, -0.5, 0.0, -0.5],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
];

/// Indices of the vertical thrusters in [`ALLOCATION`].
pub const VERTICAL_THRUSTERS: [usize; 2] = [4, 5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Rigid-body plus added mass, kg.
    pub mass: f64,
    /// Yaw inertia, kg m^2.
    pub yaw_inertia: f64,
    pub surge_tau: f64,
    pub sway_tau: f64,
    pub heave_tau: f64,
    pub yaw_tau: f64,
    pub max_surge: f64,
    pub max_sway: f64,
    pub max_heave: f64,
    /// deg/s
    pub max_yaw_rate: f64,
    pub velocity_gain: f64,
    /// Per meter of depth error.
    pub depth_gain: f64,
    /// Per degree of heading error.
    pub heading_gain: f64,
    /// Per deg/s of yaw-rate error.
    pub yaw_rate_gain: f64,
    pub attitude_tau: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 20.0,
            yaw_inertia: 2.0,
            surge_tau: 1.0,
            sway_tau: 1.0,
            heave_tau: 1.0,
            yaw_tau: 0.5,
            max_surge: 1.0,
            max_sway: 0.8,
            max_heave: 0.6,
            max_yaw_rate: 60.0,
            velocity_gain: 2.0,
            depth_gain: 1.0,
            heading_gain: 0.02,
            yaw_rate_gain: 0.02,
            attitude_tau: 2.0,
        }
    }
}

/// Additive observation noise per residual channel, already scaled.
pub type NoiseDraw = [f64; 6];

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// Plant state fed to the next step.
    pub truth: StateVector,
    /// What the vehicle reports: truth plus noise and sensor faults.
    pub observed: StateVector,
}

#[derive(Debug, Clone, Copy)]
struct FaultEffects {
    thruster_efficiency: [f64; THRUSTER_COUNT],
    force: [f64; 4],
    heading_bias: f64,
    heave_damping: f64,
    yaw_damping: f64,
}

impl FaultEffects {
    fn collect(faults: &[FaultSpec]) -> Self {
        let mut fx = FaultEffects {
            thruster_efficiency: [1.0; THRUSTER_COUNT],
            force: [0.0; 4],
            heading_bias: 0.0,
            heave_damping: 1.0,
            yaw_damping: 1.0,
        };
        for f in faults {
            match (f.kind, f.target) {
                (FaultKind::ThrusterDegradation, Some(FaultTarget::Thruster(i))) => {
                    fx.thruster_efficiency[i] *= 1.0 - f.magnitude;
                }
                (FaultKind::ExternalForce, Some(FaultTarget::Axis(axis))) => {
                    let idx = match axis {
                        Axis::Surge => 0,
                        Axis::Sway => 1,
                        Axis::Heave => 2,
                        Axis::Yaw => 3,
                    };
                    fx.force[idx] += f.magnitude;
                }
                (FaultKind::HeadingBias, _) => fx.heading_bias += f.magnitude,
                (FaultKind::VerticalImpediment, _) => fx.heave_damping *= f.magnitude,
                (FaultKind::RotationalImpediment, _) => fx.yaw_damping *= f.magnitude,
                _ => {}
            }
        }
        fx
    }
}

impl VehicleParams {
    /// Autopilot output in (surge, sway, heave, yaw), each in [-1, 1].
    fn control(&self, s: &StateVector, cmd: &CommandInput) -> [f64; 4] {
        let d = cmd.thrust_demand;
        let surge_ref = d.surge * self.max_surge;
        let sway_ref = d.sway * self.max_sway;
        let u_surge = d.surge + self.velocity_gain * (surge_ref - s.velocity.surge);
        let u_sway = d.sway + self.velocity_gain * (sway_ref - s.velocity.sway);
        let u_heave = self.depth_gain * (cmd.target_depth - s.depth) + d.heave;
        let u_yaw = if cmd.target_yaw_rate != 0.0 {
            cmd.target_yaw_rate / self.max_yaw_rate
                + self.yaw_rate_gain * (cmd.target_yaw_rate - s.yaw_rate)
        } else {
            self.heading_gain * wrap_signed(cmd.target_heading - s.heading)
        };
        [u_surge, u_sway, u_heave, u_yaw].map(|u| u.clamp(-1.0, 1.0))
    }

    /// Advances the true state by `dt` and produces the reported state.
    pub fn step(
        &self,
        state: &StateVector,
        cmd: &CommandInput,
        dt: f64,
        active_faults: &[FaultSpec],
        noise: &NoiseDraw,
    ) -> Result<Step, SimError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::NonFinite("dt"));
        }
        if !state.is_finite() {
            return Err(SimError::NonFinite("state"));
        }
        if !cmd.is_finite() {
            return Err(SimError::NonFinite("command"));
        }
        if noise.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite("noise draw"));
        }
        if active_faults
            .iter()
            .any(|f| !(f.magnitude.is_finite() && f.onset_t.is_finite() && f.duration.is_finite()))
        {
            return Err(SimError::NonFinite("fault"));
        }

        let cmd = cmd.clamped();
        let fx = FaultEffects::collect(active_faults);
        let u = self.control(state, &cmd);

        let mut effort = [0.0; THRUSTER_COUNT];
        for (i, row) in ALLOCATION.iter().enumerate() {
            effort[i] = row
                .iter()
                .zip(u.iter())
                .map(|(a, ui)| a * ui)
                .sum::<f64>()
                .clamp(-1.0, 1.0);
        }

        // Generalised thrust actually delivered, normalised so a healthy
        // allocation returns the demand unchanged.
        let mut tau = [0.0; 4];
        for (j, tau_j) in tau.iter_mut().enumerate() {
            let norm: f64 = ALLOCATION.iter().map(|row| row[j] * row[j]).sum();
            let delivered: f64 = ALLOCATION
                .iter()
                .enumerate()
                .map(|(i, row)| row[j] * fx.thruster_efficiency[i] * effort[i])
                .sum();
            *tau_j = delivered / norm;
        }

        let v = state.velocity;
        let m = self.mass;
        let d_surge = (self.max_surge * tau[0] - v.surge) / self.surge_tau + fx.force[0] / m;
        let d_sway = (self.max_sway * tau[1] - v.sway) / self.sway_tau + fx.force[1] / m;
        let d_heave = (self.max_heave * tau[2] - fx.heave_damping * v.heave) / self.heave_tau
            + fx.force[2] / m;
        let d_yaw_rate = (self.max_yaw_rate * tau[3] - fx.yaw_damping * state.yaw_rate)
            / self.yaw_tau
            + (fx.force[3] / self.yaw_inertia).to_degrees();

        let mut depth = state.depth + dt * v.heave;
        let mut heave = v.heave + dt * d_heave;
        if depth < 0.0 {
            depth = 0.0;
            heave = heave.max(0.0);
        }

        let truth = StateVector {
            t: state.t + dt,
            depth,
            heading: wrap_heading(state.heading + dt * state.yaw_rate),
            pitch: wrap_signed(state.pitch - dt * state.pitch / self.attitude_tau),
            roll: wrap_signed(state.roll - dt * state.roll / self.attitude_tau),
            velocity: Velocity {
                surge: v.surge + dt * d_surge,
                sway: v.sway + dt * d_sway,
                heave,
            },
            yaw_rate: state.yaw_rate + dt * d_yaw_rate,
            thruster_effort: effort,
        };

        let observed = StateVector {
            depth: truth.depth + noise[0],
            heading: wrap_heading(truth.heading + fx.heading_bias + noise[1]),
            velocity: Velocity {
                surge: truth.velocity.surge + noise[2],
                sway: truth.velocity.sway + noise[3],
                heave: truth.velocity.heave + noise[4],
            },
            yaw_rate: truth.yaw_rate + noise[5],
            ..truth
        };

        Ok(Step { truth, observed })
    }
}

/// One step of the default vehicle model.
pub fn step_vehicle(
    state: &StateVector,
    cmd: &CommandInput,
    dt: f64,
    active_faults: &[FaultSpec],
    noise: &NoiseDraw,
) -> Result<Step, SimError> {
    VehicleParams::default().step(state, cmd, dt, active_faults, noise)
}
