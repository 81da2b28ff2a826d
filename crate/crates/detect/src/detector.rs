//! Debounced MD² thresholding over a residual stream.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{NormativeModel, Residual};
use crate::DetectError;

pub const DEFAULT_DEBOUNCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    pub trigger_t: f64,
    pub md2_at_trigger: f64,
    pub threshold: f64,
    pub consecutive_count: usize,
}

/// Streaming detector. Fires once when MD² stays at or above the threshold
/// for `debounce` consecutive ticks, then stays latched until [`Detector::reset`].
#[derive(Debug, Clone)]
pub struct Detector {
    model: Arc<NormativeModel>,
    debounce: usize,
    run: usize,
    fired: Option<AnomalyEvent>,
    rejected: usize,
    last_md2: Option<f64>,
}

impl Detector {
    pub fn new(model: Arc<NormativeModel>, debounce: usize) -> Result<Self, DetectError> {
        if debounce == 0 {
            return Err(DetectError::InvalidDebounce);
        }
        Ok(Self {
            model,
            debounce,
            run: 0,
            fired: None,
            rejected: 0,
            last_md2: None,
        })
    }

    pub fn model(&self) -> &Arc<NormativeModel> {
        &self.model
    }

    /// Scores one residual. Returns the event on the tick that completes the
    /// debounce run. Non-finite residuals are counted and skipped; they do
    /// not break an ongoing run.
    pub fn push(&mut self, r: &Residual) -> Result<Option<AnomalyEvent>, DetectError> {
        if !r.is_finite() {
            self.rejected += 1;
            return Ok(None);
        }
        let md2 = self.model.mahalanobis_sq(&r.values)?;
        self.last_md2 = Some(md2);
        if md2 >= self.model.threshold() {
            self.run += 1;
        } else {
            self.run = 0;
        }
        if self.fired.is_none() && self.run >= self.debounce {
            let event = AnomalyEvent {
                trigger_t: r.t,
                md2_at_trigger: md2,
                threshold: self.model.threshold(),
                consecutive_count: self.run,
            };
            self.fired = Some(event);
            return Ok(Some(event));
        }
        Ok(None)
    }

    pub fn reset(&mut self) {
        self.run = 0;
        self.fired = None;
    }

    pub fn fired(&self) -> Option<&AnomalyEvent> {
        self.fired.as_ref()
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn last_md2(&self) -> Option<f64> {
        self.last_md2
    }

    /// Length of the current run of above-threshold ticks.
    pub fn current_run(&self) -> usize {
        self.run
    }
}

/// Folds a whole residual stream; returns the first event, if any.
pub fn detect<'a, I>(
    model: Arc<NormativeModel>,
    stream: I,
    debounce: usize,
) -> Result<Option<AnomalyEvent>, DetectError>
where
    I: IntoIterator<Item = &'a Residual>,
{
    let mut det = Detector::new(model, debounce)?;
    for r in stream {
        if let Some(ev) = det.push(r)? {
            return Ok(Some(ev));
        }
    }
    Ok(None)
}
