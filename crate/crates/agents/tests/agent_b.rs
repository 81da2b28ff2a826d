mod common;

use std::sync::{Arc, Mutex};

use aura_agents::agent_a::precedent_briefs;
use aura_agents::*;
use aura_knowledge::CorpusIndex;
use common::*;

struct Spy {
    inner: ScriptedMock,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
}

impl Spy {
    fn new() -> Arc<Self> {
        Arc::new(Self {
            inner: ScriptedMock::new(),
            requests: Mutex::new(Vec::new()),
        })
    }
}

impl ChatBackend for Spy {
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }
    fn chat(&self, m: &[ChatMessage]) -> Result<ChatMessage, BackendError> {
        self.requests.lock().unwrap().push(m.to_vec());
        self.inner.chat(m)
    }
}

fn open_heading(backend: Arc<dyn ChatBackend>, with_precedent: bool) -> Dialogue {
    let sig = heading_signature();
    let hits = if with_precedent { hits_for(&sig, vec![magnetic_lesson()]) } else { vec![] };
    let ch = characterize(&ScriptedMock::new(), &sig, &hits);
    let corpus = CorpusIndex::bundled();
    let g = ground_knowledge(Some(&corpus), &ch, 4);
    Dialogue::open(backend, &ch, &precedent_briefs(&hits), &g, Some(&corpus), 30.3)
}

#[test]
fn compass_query_grounds_on_magnetic_document() {
    let sig = heading_signature();
    let ch = characterize(&ScriptedMock::new(), &sig, &[]);
    let corpus = CorpusIndex::bundled();
    let g = ground_knowledge(Some(&corpus), &ch, 4);
    assert!(!g.ungrounded);
    assert_eq!(g.hits[0].doc.id, "kb-magnetic-interference");
    let none = ground_knowledge(None, &ch, 4);
    assert!(none.ungrounded && none.hits.is_empty());
}

#[test]
fn context_informed_heading_ranks_magnetic_interference_first() {
    let d = open_heading(Arc::new(ScriptedMock::new()), true);
    let top = d.top().unwrap();
    assert_eq!(top.cause, "magnetic interference");
    assert!(d.hypotheses()[1..].iter().all(|h| h.confidence < top.confidence));
    assert!(top.evidence.contains(&"lesson-compass-1".to_string()));
    for h in d.hypotheses() {
        assert!(!h.evidence.is_empty());
        assert!(h.evidence.iter().all(|e| d.known_ids().contains(e)));
    }
}

#[test]
fn ungrounded_characterisation_is_flagged() {
    let sig = heading_signature();
    let ch = characterize(&ScriptedMock::new(), &sig, &[]);
    let g = ground_knowledge(None, &ch, 4);
    let set = generate_hypotheses(Arc::new(ScriptedMock::new()), &ch, &[], &g, None);
    assert!(set.ungrounded);
    assert_eq!(set.hypotheses.len(), 1);
    assert_eq!(set.hypotheses[0].cause, UNDIAGNOSED);
    assert!(!set.degraded);
}

#[test]
fn backend_failure_yields_undiagnosed() {
    let d = open_heading(Arc::new(ScriptedMock::failing(MockFailure::Unreachable)), false);
    assert!(d.degraded());
    assert_eq!(d.hypotheses().len(), 1);
    assert_eq!(d.top().unwrap().cause, UNDIAGNOSED);
    assert!(d.top().unwrap().confidence < 0.2);
}

#[test]
fn rule_out_lowers_and_resorts() {
    let mut d = open_heading(Arc::new(ScriptedMock::new()), false);
    let top = d.top().unwrap().clone();
    let out = d.step(&format!("rule out: {}", top.cause)).unwrap();
    assert!(out.counted);
    let after = out.hypotheses.iter().find(|h| h.cause == top.cause).unwrap();
    assert!(after.confidence < top.confidence);
    assert!(out.hypotheses.windows(2).all(|w| w[0].confidence >= w[1].confidence));
    assert_ne!(out.hypotheses[0].cause, top.cause);
    assert_eq!(d.turn_count(), 1);
}

#[test]
fn empty_input_asks_for_clarification() {
    let mut d = open_heading(Arc::new(ScriptedMock::new()), false);
    let before = d.hypotheses().to_vec();
    let out = d.step("   ").unwrap();
    assert!(!out.counted);
    assert_eq!(out.hypotheses, before);
    assert_eq!(d.turn_count(), 0);
}

#[test]
fn observation_raises_matching_cause() {
    let mut d = open_heading(Arc::new(ScriptedMock::new()), false);
    let before = d.hypotheses().iter().find(|h| h.cause == "magnetic interference").unwrap().confidence;
    let out = d.step("we are right next to a steel pier").unwrap();
    let after = out.hypotheses.iter().find(|h| h.cause == "magnetic interference").unwrap().confidence;
    assert!((after - (before + (1.0 - before) * 0.25)).abs() < 1e-12);
}

#[test]
fn confirm_sets_agreed_cause_and_closed_session_rejects_input() {
    let mut d = open_heading(Arc::new(ScriptedMock::new()), true);
    let out = d.step("confirm: magnetic interference (confidence 0.95)").unwrap();
    assert_eq!(out.agreed_cause.as_deref(), Some("magnetic interference"));
    assert_eq!(d.agreed_cause(), Some("magnetic interference"));
    d.close();
    assert_eq!(d.step("more"), Err(AgentError::SessionClosed));
}

#[test]
fn every_agent_b_request_starts_with_guardrail() {
    let spy = Spy::new();
    let mut d = open_heading(spy.clone(), false);
    for input in ["heading jumps near the hull", "rule out: thruster fouling", "", "confirm: magnetic interference"] {
        d.step(input).unwrap();
    }
    let reqs = spy.requests.lock().unwrap();
    assert_eq!(reqs.len(), 4, "one opening request plus three counted turns");
    for r in reqs.iter() {
        assert_eq!(r[0].role, Role::System);
        assert_eq!(r[0].content.as_bytes(), GUARDRAIL_PROMPT.as_bytes());
    }
    assert_eq!(d.transcript()[0].content, GUARDRAIL_PROMPT);
    let operator_msgs = d.transcript().iter().filter(|m| m.role == Role::Operator).count();
    assert_eq!(operator_msgs, d.turn_count());
}

#[test]
fn dialogue_is_reproducible() {
    let run = || {
        let mut d = open_heading(Arc::new(ScriptedMock::new()), false);
        for input in ["compass swings near steel", "rule out: tether entanglement", "confirm: magnetic interference"] {
            d.step(input).unwrap();
        }
        serde_json::to_string(d.transcript()).unwrap()
    };
    assert_eq!(run(), run());
}
