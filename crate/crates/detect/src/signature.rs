//! Anomaly signatures: the numerical evidence handed to characterisation.
//!
//! A signature has a JSON form and a canonical plain-text form. The text
//! form is what characterisation consumes and what the case memory embeds,
//! so its layout is fixed:
//!
//! ```text
//! anomaly signature
//! trigger_t: 30.300 s
//! md2: 27186.214 threshold: 16.812 dof: 6 p_level: 0.990 consecutive: 3
//! anomalous channels:
//! - heading: observed 34.8 deg, expected 2.1 deg, deviation +32.7 deg, z +115.63
//! ```
//!
//! Only `top_channels` get a line. Channel values use the channel's display
//! precision, z-scores two decimals.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detector::AnomalyEvent;
use crate::model::NormativeModel;
use crate::DetectError;

pub const DEFAULT_WINDOW: usize = 50;

/// |z| at or above which a channel is listed as anomalous.
pub const TOP_Z: f64 = 3.0;
/// Upper bound on the number of listed channels.
pub const MAX_TOP_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub unit: String,
    pub decimals: usize,
}

/// One tick of context: channel projections of the real and twin states and
/// their residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub t: f64,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    pub residual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub channel: String,
    pub unit: String,
    pub decimals: usize,
    pub observed: f64,
    pub expected: f64,
    pub deviation: f64,
    pub z: f64,
}

impl ChannelSummary {
    pub fn fmt_value(&self, v: f64) -> String {
        format!("{:.*}", self.decimals, v)
    }

    pub fn fmt_signed(&self, v: f64) -> String {
        format!("{:+.*}", self.decimals, v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySignature {
    pub event: AnomalyEvent,
    pub dof: usize,
    pub p_level: f64,
    pub window: Vec<WindowSample>,
    pub per_channel_summary: Vec<ChannelSummary>,
    /// Sorted by descending |z|.
    pub top_channels: Vec<String>,
}

/// Assembles a signature from the samples leading up to (and including) the
/// trigger tick. At most `window_len` samples are kept.
pub fn build_anomaly_signature(
    model: &NormativeModel,
    channels: &[ChannelSpec],
    samples: &[WindowSample],
    event: &AnomalyEvent,
    window_len: usize,
) -> Result<AnomalySignature, DetectError> {
    if samples.is_empty() || window_len == 0 {
        return Err(DetectError::EmptyWindow);
    }
    if channels.len() != model.dof() {
        return Err(DetectError::DimensionMismatch {
            expected: model.dof(),
            got: channels.len(),
        });
    }
    let trigger_idx = samples
        .iter()
        .rposition(|s| (s.t - event.trigger_t).abs() < 1e-9)
        .ok_or(DetectError::TriggerNotInWindow(event.trigger_t))?;
    let start = (trigger_idx + 1).saturating_sub(window_len);
    let window: Vec<WindowSample> = samples[start..=trigger_idx].to_vec();
    let at = window.last().expect("non-empty by construction");
    for s in &window {
        for v in [&s.observed, &s.expected, &s.residual] {
            if v.len() != model.dof() {
                return Err(DetectError::DimensionMismatch {
                    expected: model.dof(),
                    got: v.len(),
                });
            }
        }
    }

    let per_channel_summary: Vec<ChannelSummary> = channels
        .iter()
        .enumerate()
        .map(|(i, ch)| ChannelSummary {
            channel: ch.name.clone(),
            unit: ch.unit.clone(),
            decimals: ch.decimals,
            observed: at.observed[i],
            expected: at.expected[i],
            deviation: at.residual[i],
            z: (at.residual[i] - model.mu()[i]) / model.channel_std(i),
        })
        .collect();

    let mut order: Vec<usize> = (0..channels.len()).collect();
    order.sort_by(|&a, &b| {
        per_channel_summary[b]
            .z
            .abs()
            .total_cmp(&per_channel_summary[a].z.abs())
            .then(a.cmp(&b))
    });
    let top_channels: Vec<String> = order
        .iter()
        .enumerate()
        .take_while(|(rank, &i)| *rank == 0 || per_channel_summary[i].z.abs() >= TOP_Z)
        .take(MAX_TOP_CHANNELS)
        .map(|(_, &i)| per_channel_summary[i].channel.clone())
        .collect();

    Ok(AnomalySignature {
        event: *event,
        dof: model.dof(),
        p_level: model.p_level(),
        window,
        per_channel_summary,
        top_channels,
    })
}

impl AnomalySignature {
    pub fn channel(&self, name: &str) -> Option<&ChannelSummary> {
        self.per_channel_summary.iter().find(|c| c.channel == name)
    }

    pub fn top_summaries(&self) -> impl Iterator<Item = &ChannelSummary> {
        self.top_channels
            .iter()
            .filter_map(move |name| self.channel(name))
    }

    /// Canonical text rendering; see the module docs for the layout.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let e = &self.event;
        out.push_str("anomaly signature\n");
        let _ = writeln!(out, "trigger_t: {:.3} s", e.trigger_t);
        let _ = writeln!(
            out,
            "md2: {:.3} threshold: {:.3} dof: {} p_level: {:.3} consecutive: {}",
            e.md2_at_trigger, e.threshold, self.dof, self.p_level, e.consecutive_count
        );
        out.push_str("anomalous channels:\n");
        for c in self.top_summaries() {
            let _ = writeln!(
                out,
                "- {}: observed {} {u}, expected {} {u}, deviation {} {u}, z {:+.2}",
                c.channel,
                c.fmt_value(c.observed),
                c.fmt_value(c.expected),
                c.fmt_signed(c.deviation),
                c.z,
                u = c.unit
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("signature serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, DetectError> {
        serde_json::from_str(s).map_err(|e| DetectError::Corrupt(e.to_string()))
    }

    /// Every number a faithful description may quote.
    pub fn numeric_facts(&self) -> Vec<f64> {
        let e = &self.event;
        let mut facts = vec![
            e.trigger_t,
            e.md2_at_trigger,
            e.threshold,
            self.dof as f64,
            self.p_level,
            e.consecutive_count as f64,
        ];
        for c in &self.per_channel_summary {
            facts.extend([c.observed, c.expected, c.deviation, c.deviation.abs(), c.z, c.z.abs()]);
        }
        facts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> NormativeModel {
        NormativeModel::from_parts(
            vec![0.0, 0.0],
            vec![vec![0.04, 0.0], vec![0.0, 0.01]],
            0.99,
            100,
        )
        .unwrap()
    }

    fn channels() -> Vec<ChannelSpec> {
        vec![
            ChannelSpec {
                name: "heading".into(),
                unit: "deg".into(),
                decimals: 1,
            },
            ChannelSpec {
                name: "depth".into(),
                unit: "m".into(),
                decimals: 2,
            },
        ]
    }

    fn sample(t: f64, heading_obs: f64, heading_exp: f64) -> WindowSample {
        WindowSample {
            t,
            observed: vec![heading_obs, 1.0],
            expected: vec![heading_exp, 1.0],
            residual: vec![heading_obs - heading_exp, 0.0],
        }
    }

    fn event(t: f64) -> AnomalyEvent {
        AnomalyEvent {
            trigger_t: t,
            md2_at_trigger: 27225.0,
            threshold: 9.21,
            consecutive_count: 3,
        }
    }

    #[test]
    fn heading_event_summary() {
        let samples: Vec<_> = (0..60)
            .map(|i| {
                let t = i as f64 * 0.1;
                if i < 57 {
                    sample(t, 2.0, 2.0)
                } else {
                    sample(t, 35.0, 2.0)
                }
            })
            .collect();
        let sig = build_anomaly_signature(&model(), &channels(), &samples, &event(5.9), 50).unwrap();
        assert_eq!(sig.window.len(), 50);
        assert_eq!(sig.top_channels, vec!["heading".to_string()]);
        let h = sig.channel("heading").unwrap();
        assert_eq!(h.observed, 35.0);
        assert_eq!(h.expected, 2.0);
        assert_eq!(h.deviation, 33.0);
        assert!((h.z - 165.0).abs() < 1e-9);
        let text = sig.to_text();
        assert!(text.contains(
            "- heading: observed 35.0 deg, expected 2.0 deg, deviation +33.0 deg, z +165.00"
        ));
        assert!(!text.contains("- depth"));
    }

    #[test]
    fn window_truncated_at_trigger() {
        let samples: Vec<_> = (0..20).map(|i| sample(i as f64, 2.0, 2.0)).collect();
        let sig = build_anomaly_signature(&model(), &channels(), &samples, &event(9.0), 50).unwrap();
        assert_eq!(sig.window.len(), 10);
        assert_eq!(sig.window.last().unwrap().t, 9.0);
    }

    #[test]
    fn empty_window_rejected() {
        assert!(matches!(
            build_anomaly_signature(&model(), &channels(), &[], &event(0.0), 50),
            Err(DetectError::EmptyWindow)
        ));
    }

    #[test]
    fn missing_trigger_tick_rejected() {
        let samples = vec![sample(0.0, 2.0, 2.0)];
        assert!(build_anomaly_signature(&model(), &channels(), &samples, &event(3.0), 50).is_err());
    }

    #[test]
    fn json_round_trip() {
        let samples = vec![sample(0.0, 35.0, 2.0)];
        let sig = build_anomaly_signature(&model(), &channels(), &samples, &event(0.0), 50).unwrap();
        let back = AnomalySignature::from_json(&sig.to_json()).unwrap();
        assert_eq!(back, sig);
        assert_eq!(back.to_text(), sig.to_text());
    }
}
