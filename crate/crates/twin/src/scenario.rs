//! Scenario description: command script, injected faults and sensor noise.
//!
//! Scenarios are plain JSON documents. A scenario with the same `seed`
//! replays to a byte-identical telemetry stream.

use serde::{Deserialize, Serialize};

use crate::SimError;

/// Per-axis open-loop demand, each in [-1, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisDemand {
    #[serde(default)]
    pub surge: f64,
    #[serde(default)]
    pub sway: f64,
    #[serde(default)]
    pub heave: f64,
}

/// Setpoints sent identically to the real vehicle and the twin.
///
/// A non-zero `target_yaw_rate` selects the yaw-rate loop; otherwise the
/// heading loop holds `target_heading`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandInput {
    pub t: f64,
    #[serde(default)]
    pub target_depth: f64,
    #[serde(default)]
    pub target_heading: f64,
    #[serde(default)]
    pub target_yaw_rate: f64,
    #[serde(default)]
    pub thrust_demand: AxisDemand,
}

impl CommandInput {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.target_depth,
            self.target_heading,
            self.target_yaw_rate,
            self.thrust_demand.surge,
            self.thrust_demand.sway,
            self.thrust_demand.heave,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Copy with every demand clamped to [-1, 1].
    pub fn clamped(&self) -> Self {
        let c = |v: f64| v.clamp(-1.0, 1.0);
        Self {
            thrust_demand: AxisDemand {
                surge: c(self.thrust_demand.surge),
                sway: c(self.thrust_demand.sway),
                heave: c(self.thrust_demand.heave),
            },
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Fractional loss of thrust on one thruster, magnitude in [0, 1].
    ThrusterDegradation,
    /// Constant external force (N) or yaw moment (N·m) on one axis.
    ExternalForce,
    /// Sensor-side compass offset in degrees.
    HeadingBias,
    /// Heave damping multiplier, >= 1.
    VerticalImpediment,
    /// Yaw damping multiplier, >= 1.
    RotationalImpediment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Surge,
    Sway,
    Heave,
    Yaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultTarget {
    Thruster(usize),
    Axis(Axis),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub magnitude: f64,
    pub onset_t: f64,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<FaultTarget>,
}

const MAX_EXTERNAL_FORCE: f64 = 500.0;
const MAX_DAMPING_MULTIPLIER: f64 = 100.0;

impl FaultSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |reason: &str| {
            Err(SimError::InvalidFault {
                kind: self.kind,
                reason: reason.to_string(),
            })
        };
        if !(self.magnitude.is_finite() && self.onset_t.is_finite() && self.duration.is_finite()) {
            return bad("non-finite field");
        }
        if self.onset_t < 0.0 {
            return bad("onset_t must be >= 0");
        }
        if self.duration <= 0.0 {
            return bad("duration must be > 0");
        }
        match self.kind {
            FaultKind::ThrusterDegradation => {
                if !(0.0..=1.0).contains(&self.magnitude) {
                    return bad("degradation fraction must lie in [0, 1]");
                }
                match self.target {
                    Some(FaultTarget::Thruster(i)) if i < crate::THRUSTER_COUNT => {}
                    _ => return bad("target must be a thruster index in 0..6"),
                }
            }
            FaultKind::ExternalForce => {
                if self.magnitude.abs() > MAX_EXTERNAL_FORCE {
                    return bad("force magnitude exceeds 500");
                }
                if !matches!(self.target, Some(FaultTarget::Axis(_))) {
                    return bad("target must be an axis");
                }
            }
            FaultKind::HeadingBias => {
                if !(self.magnitude > -180.0 && self.magnitude <= 180.0) {
                    return bad("bias must lie in (-180, 180]");
                }
            }
            FaultKind::VerticalImpediment | FaultKind::RotationalImpediment => {
                if !(1.0..=MAX_DAMPING_MULTIPLIER).contains(&self.magnitude) {
                    return bad("damping multiplier must lie in [1, 100]");
                }
            }
        }
        Ok(())
    }

    /// Active over the half-open interval [onset_t, onset_t + duration).
    pub fn is_active(&self, t: f64) -> bool {
        const EPS: f64 = 1e-9;
        t + EPS >= self.onset_t && t + EPS < self.onset_t + self.duration
    }
}

/// Per-channel sensor noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseStd {
    pub depth: f64,
    pub heading: f64,
    pub surge: f64,
    pub sway: f64,
    pub heave: f64,
    pub yaw_rate: f64,
}

impl Default for NoiseStd {
    fn default() -> Self {
        Self {
            depth: 0.01,
            heading: 0.2,
            surge: 0.005,
            sway: 0.005,
            heave: 0.005,
            yaw_rate: 0.1,
        }
    }
}

impl NoiseStd {
    pub fn zero() -> Self {
        Self {
            depth: 0.0,
            heading: 0.0,
            surge: 0.0,
            sway: 0.0,
            heave: 0.0,
            yaw_rate: 0.0,
        }
    }

    /// In residual channel order.
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.depth,
            self.heading,
            self.surge,
            self.sway,
            self.heave,
            self.yaw_rate,
        ]
    }
}

fn default_dt() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub seed: u64,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub command_script: Vec<CommandInput>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub noise_std: NoiseStd,
}

impl Scenario {
    pub fn new(id: impl Into<String>, seed: u64, duration: f64) -> Self {
        Self {
            id: id.into(),
            seed,
            duration,
            dt: default_dt(),
            command_script: Vec::new(),
            faults: Vec::new(),
            noise_std: NoiseStd::default(),
        }
    }

    pub fn with_command(mut self, cmd: CommandInput) -> Self {
        self.command_script.push(cmd);
        self
    }

    pub fn with_fault(mut self, fault: FaultSpec) -> Self {
        self.faults.push(fault);
        self
    }

    pub fn with_noise(mut self, noise: NoiseStd) -> Self {
        self.noise_std = noise;
        self
    }

    /// Number of ticks emitted by [`crate::run_scenario`].
    pub fn tick_count(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |reason: String| Err(SimError::InvalidScenario(reason));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return invalid(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return invalid(format!(
                "duration must be >= dt, got {} < {}",
                self.duration, self.dt
            ));
        }
        let noise = self.noise_std.as_array();
        if noise.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return invalid("noise standard deviations must be finite and >= 0".into());
        }
        let mut last_t = f64::NEG_INFINITY;
        for (i, cmd) in self.command_script.iter().enumerate() {
            if !cmd.is_finite() {
                return invalid(format!("command {i} has non-finite fields"));
            }
            if cmd.t < last_t {
                return invalid(format!("command {i} is out of time order"));
            }
            last_t = cmd.t;
        }
        for fault in &self.faults {
            fault.validate()?;
        }
        Ok(())
    }

    /// The command in force at time `t`: the last scripted command with `cmd.t <= t`.
    pub fn command_at(&self, t: f64) -> CommandInput {
        self.command_script
            .iter()
            .take_while(|c| c.t <= t + 1e-9)
            .last()
            .map(|c| CommandInput { t, ..c.clamped() })
            .unwrap_or(CommandInput {
                t,
                ..CommandInput::default()
            })
    }

    pub fn active_faults(&self, t: f64) -> Vec<FaultSpec> {
        self.faults.iter().filter(|f| f.is_active(t)).copied().collect()
    }

    /// Earliest fault onset, if any fault is scripted.
    pub fn first_onset(&self) -> Option<f64> {
        self.faults.iter().map(|f| f.onset_t).reduce(f64::min)
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let sc: Scenario =
            serde_json::from_str(s).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }
}
