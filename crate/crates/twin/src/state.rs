//! Telemetry records exchanged between the simulator, the twin and the detector.

use serde::{Deserialize, Serialize};

pub const THRUSTER_COUNT: usize = 6;

/// Body-frame linear velocity, m/s. Heave is positive down.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Velocity {
    pub surge: f64,
    pub sway: f64,
    pub heave: f64,
}

/// Timestamped vehicle state as reported by the navigation stack.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub t: f64,
    /// Meters, positive down.
    pub depth: f64,
    /// Degrees in [0, 360).
    pub heading: f64,
    /// Degrees in [-180, 180).
    pub pitch: f64,
    /// Degrees in [-180, 180).
    pub roll: f64,
    pub velocity: Velocity,
    /// Degrees per second.
    pub yaw_rate: f64,
    /// Commanded effort per thruster, each in [-1, 1].
    pub thruster_effort: [f64; THRUSTER_COUNT],
}

impl StateVector {
    pub fn at_rest(t: f64) -> Self {
        Self {
            t,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.depth,
            self.heading,
            self.pitch,
            self.roll,
            self.velocity.surge,
            self.velocity.sway,
            self.velocity.heave,
            self.yaw_rate,
        ]
        .iter()
        .chain(self.thruster_effort.iter())
        .all(|v| v.is_finite())
    }
}

/// Wraps an angle in degrees into [0, 360).
pub fn wrap_heading(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360.0 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Wraps an angle in degrees into [-180, 180).
pub fn wrap_signed(deg: f64) -> f64 {
    let w = wrap_heading(deg + 180.0) - 180.0;
    if w >= 180.0 {
        -180.0
    } else {
        w
    }
}

/// Physical unit of a residual channel. Drives display precision downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelUnit {
    Meters,
    Degrees,
    MetersPerSecond,
    DegreesPerSecond,
}

impl ChannelUnit {
    pub fn symbol(self) -> &'static str {
        match self {
            ChannelUnit::Meters => "m",
            ChannelUnit::Degrees => "deg",
            ChannelUnit::MetersPerSecond => "m/s",
            ChannelUnit::DegreesPerSecond => "deg/s",
        }
    }

    pub fn decimals(self) -> usize {
        match self {
            ChannelUnit::Meters => 2,
            ChannelUnit::Degrees | ChannelUnit::DegreesPerSecond => 1,
            ChannelUnit::MetersPerSecond => 3,
        }
    }
}

/// A residual channel: one scalar projection of the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channel {
    pub name: &'static str,
    pub unit: ChannelUnit,
    /// Differences on this channel wrap to the shortest signed angle.
    pub angular: bool,
}

/// Channels compared between the real vehicle and the twin, in residual order.
pub const RESIDUAL_CHANNELS: [Channel; 6] = [
    Channel {
        name: "depth",
        unit: ChannelUnit::Meters,
        angular: false,
    },
    Channel {
        name: "heading",
        unit: ChannelUnit::Degrees,
        angular: true,
    },
    Channel {
        name: "surge",
        unit: ChannelUnit::MetersPerSecond,
        angular: false,
    },
    Channel {
        name: "sway",
        unit: ChannelUnit::MetersPerSecond,
        angular: false,
    },
    Channel {
        name: "heave",
        unit: ChannelUnit::MetersPerSecond,
        angular: false,
    },
    Channel {
        name: "yaw_rate",
        unit: ChannelUnit::DegreesPerSecond,
        angular: false,
    },
];

/// Projects a state onto the residual channels.
pub fn channel_values(s: &StateVector) -> [f64; 6] {
    [
        s.depth,
        s.heading,
        s.velocity.surge,
        s.velocity.sway,
        s.velocity.heave,
        s.yaw_rate,
    ]
}

/// Real-minus-twin difference per residual channel, angles wrapped to [-180, 180).
pub fn residual(real: &StateVector, twin: &StateVector) -> [f64; 6] {
    let r = channel_values(real);
    let e = channel_values(twin);
    let mut out = [0.0; 6];
    for (i, ch) in RESIDUAL_CHANNELS.iter().enumerate() {
        let d = r[i] - e[i];
        out[i] = if ch.angular { wrap_signed(d) } else { d };
    }
    out
}

/// One lockstep tick: the real vehicle and its twin at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub t: f64,
    pub real: StateVector,
    pub twin: StateVector,
}

impl TelemetryRecord {
    pub fn residual(&self) -> [f64; 6] {
        residual(&self.real, &self.twin)
    }
}
