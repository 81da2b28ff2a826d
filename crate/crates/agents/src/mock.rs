//! Deterministic stand-in for a chat model. It reads the fenced task at
//! the end of the request and answers by fixed rules:
//!
//! * characterise: the template rendering (transcription, or context
//!   when precedents are supplied);
//! * hypothesise: each retrieved document with a cause scores
//!   `0.15 + 0.35 * score / max_score`; each precedent scores
//!   `0.55 + 0.4 * similarity`; the higher wins per cause;
//! * dialog: `rule out: X` multiplies X by 0.2; `confirm: X` agrees on X;
//!   any other text is an observation, and every cause whose document tags
//!   it mentions gains a quarter of its remaining headroom.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use aura_knowledge::terms;

use crate::agent_a::template_reply;
use crate::backend::{BackendError, BackendKind, ChatBackend};
use crate::message::{fence, fenced_json, ChatMessage, Role};
use crate::task::{DialogReply, DocBrief, Hypothesis, HypothesesReply, PrecedentBrief, Task};
use crate::agent_b::{sort_hypotheses, UNDIAGNOSED};

pub const RULE_OUT_FACTOR: f64 = 0.2;
pub const OBSERVATION_GAIN: f64 = 0.25;
const NEW_CAUSE_CONFIDENCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockFailure {
    /// Every call fails at the transport level.
    Unreachable,
    /// Every reply lacks a usable block.
    Garbled,
    /// The first `n` replies are garbled, later ones are normal.
    GarbledFirst(usize),
}

#[derive(Debug, Default)]
pub struct ScriptedMock {
    failure: Option<MockFailure>,
    calls: AtomicUsize,
}

impl ScriptedMock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn failing(failure: MockFailure) -> Self {
        Self {
            failure: Some(failure),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedMock {
    fn kind(&self) -> BackendKind {
        BackendKind::ScriptedMock
    }

    fn chat(&self, messages: &[ChatMessage]) -> Result<ChatMessage, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let t = messages.last().map_or(0.0, |m| m.t);
        match self.failure {
            Some(MockFailure::Unreachable) => return Err(BackendError::Transport("mock unreachable".into())),
            Some(MockFailure::Garbled) => return Ok(ChatMessage::new(Role::Agent, "I am not sure.", t)),
            Some(MockFailure::GarbledFirst(k)) if n < k => {
                return Ok(ChatMessage::new(Role::Agent, "```json\n{\"oops\": 1}\n```", t))
            }
            _ => {}
        }
        // The task is the last fenced block sent to us (retries append a
        // rejection note after it).
        let task: Task = messages
            .iter()
            .rev()
            .filter(|m| m.role != Role::Agent)
            .find_map(|m| serde_json::from_str(fenced_json(&m.content)?).ok())
            .ok_or_else(|| BackendError::BadReply("no task in request".into()))?;
        Ok(ChatMessage::new(Role::Agent, answer(&task), t))
    }
}

fn answer(task: &Task) -> String {
    match task {
        Task::Characterise { signature, precedents } => fence(&template_reply(signature, precedents)),
        Task::Hypothesise {
            channels,
            documents,
            precedents,
            ..
        } => {
            let hypotheses = initial_ranking(channels, documents, precedents);
            fence(&HypothesesReply {
                reply: ranking_text("Initial assessment.", &hypotheses, documents),
                hypotheses,
            })
        }
        Task::Dialog {
            hypotheses,
            documents,
            operator_input,
        } => fence(&dialog(hypotheses.clone(), documents, operator_input)),
    }
}

fn initial_ranking(channels: &[String], docs: &[DocBrief], precedents: &[PrecedentBrief]) -> Vec<Hypothesis> {
    let mut hs: Vec<Hypothesis> = Vec::new();
    let s_max = docs.iter().map(|d| d.score).fold(0.0, f64::max);
    for p in precedents {
        let conf = 0.55 + 0.4 * p.similarity.clamp(0.0, 1.0);
        let mut evidence = vec![p.lesson_id.clone()];
        evidence.extend(docs.iter().filter(|d| d.cause.as_ref() == Some(&p.root_cause)).map(|d| d.id.clone()));
        merge(
            &mut hs,
            Hypothesis {
                cause: p.root_cause.clone(),
                rationale: format!(
                    "validated precedent {} (similarity {:.2}) was diagnosed as {}",
                    p.lesson_id, p.similarity, p.root_cause
                ),
                evidence,
                confidence: conf,
            },
        );
    }
    if s_max > 0.0 {
        for d in docs {
            let Some(cause) = &d.cause else { continue };
            merge(
                &mut hs,
                Hypothesis {
                    cause: cause.clone(),
                    rationale: format!("{} covers symptoms on {}", d.title, channels.join(", ")),
                    evidence: vec![d.id.clone()],
                    confidence: 0.15 + 0.35 * d.score / s_max,
                },
            );
        }
    }
    if hs.is_empty() {
        hs.push(Hypothesis {
            cause: UNDIAGNOSED.into(),
            rationale: "no document or precedent matches this anomaly; any cause would be a guess".into(),
            evidence: Vec::new(),
            confidence: 0.1,
        });
    }
    sort_hypotheses(&mut hs);
    hs
}

fn merge(hs: &mut Vec<Hypothesis>, h: Hypothesis) {
    match hs.iter_mut().find(|x| x.cause == h.cause) {
        Some(x) => {
            for e in h.evidence {
                if !x.evidence.contains(&e) {
                    x.evidence.push(e);
                }
            }
            if h.confidence > x.confidence {
                x.confidence = h.confidence;
                x.rationale = h.rationale;
            }
        }
        None => hs.push(h),
    }
}

fn ranking_text(lead: &str, hs: &[Hypothesis], docs: &[DocBrief]) -> String {
    let mut out = String::from(lead);
    if let Some(top) = hs.first() {
        if top.cause == UNDIAGNOSED {
            out.push_str(" I have no grounded explanation yet; please describe what you see.");
            return out;
        }
        let _ = write!(
            out,
            " Leading hypothesis: {} (confidence {:.2}; evidence: {}).",
            top.cause,
            top.confidence,
            top.evidence.join(", ")
        );
        let others: Vec<String> = hs[1..]
            .iter()
            .map(|h| format!("{} ({:.2})", h.cause, h.confidence))
            .collect();
        if !others.is_empty() {
            let _ = write!(out, " Alternatives: {}.", others.join(", "));
        }
        if let Some(check) = docs
            .iter()
            .find(|d| d.cause.as_ref() == Some(&top.cause))
            .and_then(|d| d.check.as_ref())
        {
            let _ = write!(out, " Suggested check: {check}");
        }
    }
    out.push_str(" You can report an observation, rule a cause out, or confirm one.");
    out
}

fn find_cause<'a>(hs: &'a mut [Hypothesis], name: &str) -> Option<&'a mut Hypothesis> {
    hs.iter_mut().find(|h| h.cause.eq_ignore_ascii_case(name))
}

/// `confirm: cause (confidence 0.95)` → `cause`.
fn command_arg<'a>(input: &'a str, prefix: &str) -> Option<&'a str> {
    let lower = input.to_lowercase();
    if !lower.starts_with(prefix) {
        return None;
    }
    let arg = input[prefix.len()..].trim();
    Some(arg.split('(').next().unwrap_or(arg).trim())
}

fn dialog(mut hs: Vec<Hypothesis>, docs: &[DocBrief], input: &str) -> DialogReply {
    let mut agreed = None;
    let lead;
    if let Some(cause) = command_arg(input, "rule out:") {
        match find_cause(&mut hs, cause) {
            Some(h) => {
                h.confidence *= RULE_OUT_FACTOR;
                lead = format!("Understood, {} is now unlikely.", h.cause);
            }
            None => lead = format!("{cause} is not among my hypotheses."),
        }
    } else if let Some(cause) = command_arg(input, "confirm:") {
        if find_cause(&mut hs, cause).is_none() {
            if let Some(d) = docs.iter().find(|d| d.cause.as_deref().is_some_and(|c| c.eq_ignore_ascii_case(cause))) {
                hs.push(Hypothesis {
                    cause: d.cause.clone().unwrap_or_default(),
                    rationale: format!("confirmed by the operator; see {}", d.title),
                    evidence: vec![d.id.clone()],
                    confidence: NEW_CAUSE_CONFIDENCE,
                });
            }
        }
        match find_cause(&mut hs, cause) {
            Some(h) => {
                agreed = Some(h.cause.clone());
                lead = format!("Agreed: the diagnosis is {} (evidence: {}).", h.cause, h.evidence.join(", "));
            }
            None => lead = format!("I have no grounds for {cause}; can you tell me what you observed?"),
        }
    } else {
        let words: Vec<String> = terms(input).collect();
        let mut matched = Vec::new();
        for d in docs {
            let Some(cause) = &d.cause else { continue };
            let hit: Vec<&String> = d.tags.iter().filter(|t| words.contains(t)).collect();
            if hit.is_empty() {
                continue;
            }
            matched.push(cause.clone());
            match find_cause(&mut hs, cause) {
                Some(h) => {
                    h.confidence += (1.0 - h.confidence) * OBSERVATION_GAIN;
                    if !h.evidence.contains(&d.id) {
                        h.evidence.push(d.id.clone());
                    }
                }
                None => hs.push(Hypothesis {
                    cause: cause.clone(),
                    rationale: format!("operator observation mentions {}", hit.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")),
                    evidence: vec![d.id.clone()],
                    confidence: NEW_CAUSE_CONFIDENCE,
                }),
            }
        }
        lead = if matched.is_empty() {
            "Noted; that does not change the ranking.".to_owned()
        } else {
            format!("Noted; this is consistent with {}.", matched.join(" and "))
        };
    }
    sort_hypotheses(&mut hs);
    DialogReply {
        reply: ranking_text(&lead, &hs, docs),
        hypotheses: hs,
        clarification: false,
        agreed_cause: agreed,
    }
}
