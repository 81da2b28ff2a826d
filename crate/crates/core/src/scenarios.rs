//! Shipped scenarios: a nominal mission profile for fitting, and one
//! family per fault use case.

use aura_twin::{Axis, AxisDemand, CommandInput, FaultKind, FaultSpec, FaultTarget, Scenario};
use serde::{Deserialize, Serialize};

pub const FAULT_ONSET: f64 = 30.0;
pub const FAULT_RUN: f64 = 45.0;
pub const NOMINAL_RUN: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UseCase {
    /// Lateral pull from a snagged tether.
    ThrusterDisturbance,
    /// Impeded commanded turn.
    RotationalMotion,
    /// Impeded commanded descent.
    VerticalMotion,
    /// Compass offset near a steel structure.
    CompassHeading,
}

impl UseCase {
    pub const EVALUATED: [UseCase; 3] = [
        UseCase::ThrusterDisturbance,
        UseCase::RotationalMotion,
        UseCase::VerticalMotion,
    ];

    pub fn root_cause(self) -> &'static str {
        match self {
            UseCase::ThrusterDisturbance => "tether entanglement",
            UseCase::RotationalMotion => "thruster fouling",
            UseCase::VerticalMotion => "ballast trim imbalance",
            UseCase::CompassHeading => "magnetic interference",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            UseCase::ThrusterDisturbance => "thruster_disturbance",
            UseCase::RotationalMotion => "rotational_motion",
            UseCase::VerticalMotion => "vertical_motion",
            UseCase::CompassHeading => "compass_heading",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            UseCase::ThrusterDisturbance,
            UseCase::RotationalMotion,
            UseCase::VerticalMotion,
            UseCase::CompassHeading,
        ]
        .into_iter()
        .find(|u| u.label() == s)
    }
}

fn cmd(t: f64) -> CommandInput {
    CommandInput {
        t,
        ..CommandInput::default()
    }
}

fn fault(kind: FaultKind, magnitude: f64, target: Option<FaultTarget>) -> FaultSpec {
    FaultSpec {
        kind,
        magnitude,
        onset_t: FAULT_ONSET,
        duration: 1e6,
        target,
    }
}

/// Fault-free mission profile exercising every loop: descent, transit,
/// a turn and a lateral move.
pub fn nominal(seed: u64) -> Scenario {
    Scenario::new(format!("nominal-{seed}"), seed, NOMINAL_RUN)
        .with_command(CommandInput {
            target_depth: 10.0,
            target_heading: 2.0,
            ..cmd(0.0)
        })
        .with_command(CommandInput {
            target_depth: 10.0,
            target_heading: 2.0,
            thrust_demand: AxisDemand {
                surge: 0.4,
                ..AxisDemand::default()
            },
            ..cmd(15.0)
        })
        .with_command(CommandInput {
            target_depth: 12.0,
            target_yaw_rate: 15.0,
            ..cmd(30.0)
        })
        .with_command(CommandInput {
            target_depth: 12.0,
            target_heading: 90.0,
            thrust_demand: AxisDemand {
                sway: 0.3,
                ..AxisDemand::default()
            },
            ..cmd(40.0)
        })
}

/// Compass offset: the vehicle holds 2 degrees while the compass reads 2 + `bias`.
pub fn compass_heading(seed: u64, bias: f64) -> Scenario {
    Scenario::new(format!("compass-{seed}"), seed, FAULT_RUN)
        .with_command(CommandInput {
            target_depth: 8.0,
            target_heading: 2.0,
            thrust_demand: AxisDemand {
                surge: 0.3,
                ..AxisDemand::default()
            },
            ..cmd(0.0)
        })
        .with_fault(fault(FaultKind::HeadingBias, bias, None))
}

/// Tether snag: a lateral pull of `force` newtons while transiting.
pub fn thruster_disturbance(seed: u64, force: f64) -> Scenario {
    Scenario::new(format!("tether-{seed}"), seed, FAULT_RUN)
        .with_command(CommandInput {
            target_depth: 15.0,
            target_heading: 2.0,
            thrust_demand: AxisDemand {
                surge: 0.5,
                ..AxisDemand::default()
            },
            ..cmd(0.0)
        })
        .with_fault(fault(
            FaultKind::ExternalForce,
            force,
            Some(FaultTarget::Axis(Axis::Sway)),
        ))
}

/// Fouled thrusters during a commanded turn at `rate` deg/s; yaw damping
/// rises by `factor`.
pub fn rotational_motion(seed: u64, rate: f64, factor: f64) -> Scenario {
    Scenario::new(format!("rotation-{seed}"), seed, FAULT_RUN)
        .with_command(CommandInput {
            target_depth: 10.0,
            target_heading: 2.0,
            ..cmd(0.0)
        })
        .with_command(CommandInput {
            target_depth: 10.0,
            target_yaw_rate: rate,
            ..cmd(FAULT_ONSET - 10.0)
        })
        .with_fault(fault(FaultKind::RotationalImpediment, factor, None))
}

/// Trim problem during a commanded descent to `target` metres; heave
/// damping rises by `factor`.
pub fn vertical_motion(seed: u64, target: f64, factor: f64) -> Scenario {
    Scenario::new(format!("descent-{seed}"), seed, FAULT_RUN)
        .with_command(CommandInput {
            target_depth: 2.0,
            target_heading: 2.0,
            ..cmd(0.0)
        })
        .with_command(CommandInput {
            target_depth: target,
            target_heading: 2.0,
            ..cmd(FAULT_ONSET - 5.0)
        })
        .with_fault(fault(FaultKind::VerticalImpediment, factor, None))
}

/// A representative scenario for `use_case`. `variant` selects among a few
/// magnitudes so repeated encounters are not identical.
pub fn for_use_case(use_case: UseCase, seed: u64, variant: usize) -> Scenario {
    let mut sc = match use_case {
        UseCase::ThrusterDisturbance => thruster_disturbance(seed, [40.0, 60.0, 50.0][variant % 3]),
        UseCase::RotationalMotion => {
            rotational_motion(seed, [20.0, -20.0, 25.0][variant % 3], [4.0, 6.0, 5.0][variant % 3])
        }
        UseCase::VerticalMotion => vertical_motion(seed, [30.0, 35.0, 28.0][variant % 3], [4.0, 6.0, 5.0][variant % 3]),
        UseCase::CompassHeading => compass_heading(seed, [33.0, -25.0, 40.0][variant % 3]),
    };
    sc.id = format!("{}-v{}-s{}", use_case.label(), variant, seed);
    sc
}

/// Looks up a shipped scenario by id: `nominal-<seed>` or
/// `<use_case>-v<variant>-s<seed>`.
pub fn by_id(id: &str) -> Option<Scenario> {
    if let Some(seed) = id.strip_prefix("nominal-") {
        return seed.parse().ok().map(nominal);
    }
    let (head, seed) = id.rsplit_once("-s")?;
    let (label, variant) = head.rsplit_once("-v")?;
    Some(for_use_case(
        UseCase::parse(label)?,
        seed.parse().ok()?,
        variant.parse().ok()?,
    ))
}

/// Seeds used to fit the shipped normative model.
pub const NOMINAL_FIT_SEEDS: std::ops::Range<u64> = 1000..1020;
