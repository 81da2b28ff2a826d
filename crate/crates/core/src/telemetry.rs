//! From paired telemetry to anomaly signatures.

use std::collections::VecDeque;
use std::sync::Arc;

use aura_detect::{
    build_anomaly_signature, fit_normative_model, AnomalySignature, ChannelSpec, DetectError, Detector,
    NormativeModel, Regularization, Residual, WindowSample,
};
use aura_twin::{channel_values, run_scenario, Scenario, SimError, TelemetryRecord, RESIDUAL_CHANNELS};

use crate::scenarios::{nominal, NOMINAL_FIT_SEEDS};

pub fn channel_specs() -> Vec<ChannelSpec> {
    RESIDUAL_CHANNELS
        .iter()
        .map(|c| ChannelSpec {
            name: c.name.to_owned(),
            unit: c.unit.symbol().to_owned(),
            decimals: c.unit.decimals(),
        })
        .collect()
}

pub fn channel_names() -> Vec<String> {
    RESIDUAL_CHANNELS.iter().map(|c| c.name.to_owned()).collect()
}

pub fn window_sample(r: &TelemetryRecord) -> WindowSample {
    WindowSample {
        t: r.t,
        observed: channel_values(&r.real).to_vec(),
        expected: channel_values(&r.twin).to_vec(),
        residual: r.residual().to_vec(),
    }
}

pub fn residual_of(r: &TelemetryRecord) -> Residual {
    Residual::new(r.t, r.residual().to_vec())
}

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// Fits a normative model on the residuals of every tick of `scenarios`.
pub fn fit_from_scenarios(
    scenarios: &[Scenario],
    p_level: f64,
    reg: Regularization,
) -> Result<NormativeModel, FitError> {
    let mut residuals = Vec::new();
    for sc in scenarios {
        residuals.extend(run_scenario(sc)?.iter().map(residual_of));
    }
    Ok(fit_normative_model(&residuals, p_level, reg)?.with_channels(channel_names())?)
}

/// The model used by the shipped evaluation: twenty nominal missions.
pub fn fit_default_model(p_level: f64) -> Result<NormativeModel, FitError> {
    let scenarios: Vec<Scenario> = NOMINAL_FIT_SEEDS.map(nominal).collect();
    fit_from_scenarios(&scenarios, p_level, Regularization::default())
}

/// Streaming detector with a context window. After an event it stays
/// latched; it re-arms once `window` consecutive ticks score below the
/// threshold, so a persistent fault yields one signature, not one per tick.
#[derive(Debug, Clone)]
pub struct Monitor {
    model: Arc<NormativeModel>,
    channels: Vec<ChannelSpec>,
    detector: Detector,
    window: usize,
    buffer: VecDeque<WindowSample>,
    quiet_run: usize,
}

impl Monitor {
    pub fn new(model: Arc<NormativeModel>, debounce: usize, window: usize) -> Result<Self, DetectError> {
        if window == 0 {
            return Err(DetectError::EmptyWindow);
        }
        Ok(Self {
            detector: Detector::new(model.clone(), debounce)?,
            model,
            channels: channel_specs(),
            window,
            buffer: VecDeque::with_capacity(window),
            quiet_run: 0,
        })
    }

    pub fn model(&self) -> &Arc<NormativeModel> {
        &self.model
    }

    pub fn last_md2(&self) -> Option<f64> {
        self.detector.last_md2()
    }

    pub fn rejected(&self) -> usize {
        self.detector.rejected()
    }

    pub fn latched(&self) -> bool {
        self.detector.fired().is_some()
    }

    pub fn ingest(&mut self, r: &TelemetryRecord) -> Result<Option<AnomalySignature>, DetectError> {
        let sample = window_sample(r);
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample);

        let event = self.detector.push(&residual_of(r))?;
        if self.latched() && event.is_none() {
            if self.detector.current_run() == 0 {
                self.quiet_run += 1;
            } else {
                self.quiet_run = 0;
            }
            if self.quiet_run >= self.window {
                self.detector.reset();
                self.quiet_run = 0;
            }
        }
        let Some(event) = event else { return Ok(None) };
        self.quiet_run = 0;
        let samples: Vec<WindowSample> = self.buffer.iter().cloned().collect();
        build_anomaly_signature(&self.model, &self.channels, &samples, &event, self.window).map(Some)
    }
}
