#![allow(dead_code)]

use aura_detect::*;
use aura_memory::{DistilledLesson, MockEmbedder, Origin, RetrievalHit, MemoryStore};
use std::sync::Arc;

pub const CHANNELS: [(&str, &str, usize, f64); 6] = [
    ("depth", "m", 2, 0.014),
    ("heading", "deg", 1, 0.28),
    ("surge", "m/s", 3, 0.007),
    ("sway", "m/s", 3, 0.007),
    ("heave", "m/s", 3, 0.007),
    ("yaw_rate", "deg/s", 1, 0.14),
];

pub fn model() -> NormativeModel {
    let sigma: Vec<Vec<f64>> = (0..6)
        .map(|i| (0..6).map(|j| if i == j { CHANNELS[i].3 * CHANNELS[i].3 } else { 0.0 }).collect())
        .collect();
    NormativeModel::from_parts(vec![0.0; 6], sigma, 0.99, 12000).unwrap()
}

pub fn specs() -> Vec<ChannelSpec> {
    CHANNELS
        .iter()
        .map(|(n, u, d, _)| ChannelSpec {
            name: n.to_string(),
            unit: u.to_string(),
            decimals: *d,
        })
        .collect()
}

/// Signature with the given (observed, expected) per channel at t=30.3.
pub fn signature(values: [(f64, f64); 6]) -> AnomalySignature {
    let m = model();
    let obs: Vec<f64> = values.iter().map(|v| v.0).collect();
    let exp: Vec<f64> = values.iter().map(|v| v.1).collect();
    let res: Vec<f64> = values.iter().map(|v| v.0 - v.1).collect();
    let md2 = m.mahalanobis_sq(&res).unwrap();
    let ev = AnomalyEvent {
        trigger_t: 30.3,
        md2_at_trigger: md2,
        threshold: m.threshold(),
        consecutive_count: 3,
    };
    let samples = vec![WindowSample {
        t: 30.3,
        observed: obs,
        expected: exp,
        residual: res,
    }];
    build_anomaly_signature(&m, &specs(), &samples, &ev, 50).unwrap()
}

pub fn heading_signature() -> AnomalySignature {
    signature([(8.0, 8.0), (35.0, 2.0), (0.3, 0.3), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)])
}

pub fn magnetic_lesson() -> DistilledLesson {
    DistilledLesson {
        id: "lesson-compass-1".into(),
        created_t: 30.3,
        anomaly_text: heading_signature().to_text(),
        validated_characterisation: "Symptoms: heading offset from the twin. Confirmed cause: magnetic interference. Verification: compare compass and gyro heading.".into(),
        root_cause: "magnetic interference".into(),
        source_session: "s-compass-1".into(),
        origin: Origin::Live,
        validated: true,
        operator_confidence: 0.95,
        embedding: Vec::new(),
    }
}

pub fn hits_for(sig: &AnomalySignature, lessons: Vec<DistilledLesson>) -> Vec<RetrievalHit> {
    let store = MemoryStore::new(Arc::new(MockEmbedder::new()));
    for l in lessons {
        store.insert(l).unwrap();
    }
    store.query(&sig.to_text(), 3, 0.35).unwrap()
}
