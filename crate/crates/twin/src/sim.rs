//! Lockstep execution of the real vehicle and its digital twin.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{NoiseDraw, VehicleParams};
use crate::scenario::Scenario;
use crate::state::{StateVector, TelemetryRecord};
use crate::SimError;

const REAL_STREAM: u64 = 1;
const TWIN_STREAM: u64 = 2;

struct NoiseSource {
    rng: ChaCha8Rng,
    std: [f64; 6],
}

impl NoiseSource {
    fn new(seed: u64, stream: u64, std: [f64; 6]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, std }
    }

    fn draw(&mut self) -> NoiseDraw {
        let mut out = [0.0; 6];
        for (o, s) in out.iter_mut().zip(self.std) {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *o = z * s;
        }
        out
    }
}

/// Iterator over paired ticks. The twin sees the same commands, no faults,
/// and an independent noise stream.
pub struct LockstepRun {
    scenario: Scenario,
    params: VehicleParams,
    real: StateVector,
    twin: StateVector,
    real_noise: NoiseSource,
    twin_noise: NoiseSource,
    tick: usize,
    ticks: usize,
}

impl LockstepRun {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        Self::with_params(scenario, VehicleParams::default())
    }

    pub fn with_params(scenario: Scenario, params: VehicleParams) -> Result<Self, SimError> {
        scenario.validate()?;
        let std = scenario.noise_std.as_array();
        Ok(Self {
            real_noise: NoiseSource::new(scenario.seed, REAL_STREAM, std),
            twin_noise: NoiseSource::new(scenario.seed, TWIN_STREAM, std),
            ticks: scenario.tick_count(),
            real: StateVector::at_rest(0.0),
            twin: StateVector::at_rest(0.0),
            tick: 0,
            params,
            scenario,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn len(&self) -> usize {
        self.ticks
    }

    pub fn is_empty(&self) -> bool {
        self.ticks == 0
    }

    fn advance(&mut self) -> Result<TelemetryRecord, SimError> {
        let dt = self.scenario.dt;
        let t0 = self.tick as f64 * dt;
        let t1 = (self.tick + 1) as f64 * dt;
        let cmd = self.scenario.command_at(t0);
        let faults = self.scenario.active_faults(t0);

        let mut real = self
            .params
            .step(&self.real, &cmd, dt, &faults, &self.real_noise.draw())?;
        let mut twin = self
            .params
            .step(&self.twin, &cmd, dt, &[], &self.twin_noise.draw())?;
        // Index-derived time avoids accumulated rounding drift.
        real.truth.t = t1;
        real.observed.t = t1;
        twin.truth.t = t1;
        twin.observed.t = t1;

        self.real = real.truth;
        self.twin = twin.truth;
        self.tick += 1;
        Ok(TelemetryRecord {
            t: t1,
            real: real.observed,
            twin: twin.observed,
        })
    }
}

impl Iterator for LockstepRun {
    type Item = TelemetryRecord;

    fn next(&mut self) -> Option<Self::Item> {
        if self.tick >= self.ticks {
            return None;
        }
        // Inputs were validated up front and the plant is bounded, so a
        // failure here means a broken invariant rather than bad input.
        Some(self.advance().expect("validated scenario produced a non-finite state"))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.ticks - self.tick;
        (rest, Some(rest))
    }
}

/// Runs a scenario to completion and collects every paired tick.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<TelemetryRecord>, SimError> {
    Ok(LockstepRun::new(scenario.clone())?.collect())
}

/// Writes telemetry as NDJSON: one `{t, real, twin}` object per line.
pub fn write_ndjson<W: Write>(mut out: W, records: &[TelemetryRecord]) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
