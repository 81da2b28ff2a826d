//! Agent A: turns an anomaly signature (plus any retrieved precedents) into
//! a problem characterisation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use aura_detect::AnomalySignature;
use aura_memory::RetrievalHit;

use crate::backend::{llm_chat, ChatBackend};
use crate::faithful::{invented_numbers, numbers_in};
use crate::message::{fence, fenced_json, ChatMessage, Role};
use crate::task::{CharacterisationReply, CitedChannel, PrecedentBrief, SignatureBrief, Task};

pub const AGENT_A_PROMPT: &str = "\
You describe vehicle telemetry anomalies for a human operator. You receive a \
numerical anomaly signature and, sometimes, validated precedents from earlier \
incidents. Describe what the signals show using only numbers present in the \
input. If precedents are given, relate the anomaly to them and list their root \
causes as candidate causes; otherwise list no causes. Reply with exactly one \
```json block: {\"summary_text\": string, \"cited_channels\": \
[{\"channel\", \"observed\", \"expected\"}], \"candidate_causes\": [string]}.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Transcription,
    ContextInformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecedentRef {
    pub lesson_id: String,
    pub similarity: f64,
    pub root_cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemCharacterisation {
    pub summary_text: String,
    pub cited_channels: Vec<CitedChannel>,
    pub matched_precedents: Vec<PrecedentRef>,
    pub candidate_causes: Vec<String>,
    pub mode: Mode,
    /// Set when the backend failed and the template rendering was used.
    #[serde(default)]
    pub degraded: bool,
}

pub fn precedent_briefs(hits: &[RetrievalHit]) -> Vec<PrecedentBrief> {
    hits.iter()
        .map(|h| PrecedentBrief {
            lesson_id: h.lesson.id.clone(),
            similarity: h.similarity,
            root_cause: h.lesson.root_cause.clone(),
            characterisation: h.lesson.validated_characterisation.clone(),
        })
        .collect()
}

/// Plain description of the top channels and the detector state.
pub fn render_transcription(sig: &SignatureBrief) -> String {
    let mut out = String::new();
    for c in &sig.channels {
        let _ = write!(
            out,
            "{} deviates {} {u} from the twin (reported {} {u}, twin {} {u}, z {:+.2}). ",
            c.channel,
            c.fmt_signed(c.deviation),
            c.fmt_value(c.observed),
            c.fmt_value(c.expected),
            c.z,
            u = c.unit
        );
    }
    let _ = write!(
        out,
        "MD2 {:.3} has stayed above the threshold {:.3} for {} consecutive ticks as of t = {:.3} s.",
        sig.md2, sig.threshold, sig.consecutive, sig.trigger_t
    );
    out
}

/// Text after `Verification:` in a stored characterisation.
pub fn verification_hint(characterisation: &str) -> Option<&str> {
    let (_, hint) = characterisation.split_once("Verification:")?;
    let hint = hint.trim();
    (!hint.is_empty()).then_some(hint)
}

/// Root causes of the precedents, most similar first, without repeats.
pub fn candidate_causes(precedents: &[PrecedentBrief]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for p in precedents {
        if !out.contains(&p.root_cause) {
            out.push(p.root_cause.clone());
        }
    }
    out
}

/// Transcription followed by the precedents it resembles.
pub fn render_context(sig: &SignatureBrief, precedents: &[PrecedentBrief]) -> String {
    let mut out = render_transcription(sig);
    for p in precedents {
        let _ = write!(
            out,
            " Pattern matches validated precedent {} (root cause: {}, similarity {:.2}).",
            p.lesson_id, p.root_cause, p.similarity
        );
    }
    let _ = write!(out, " Candidate causes: {}.", candidate_causes(precedents).join(", "));
    if let Some(hint) = precedents.iter().find_map(|p| verification_hint(&p.characterisation)) {
        let _ = write!(out, " Suggested check: {hint}");
    }
    out
}

fn cited(sig: &SignatureBrief) -> Vec<CitedChannel> {
    sig.channels
        .iter()
        .map(|c| CitedChannel {
            channel: c.channel.clone(),
            observed: c.observed,
            expected: c.expected,
        })
        .collect()
}

/// What the template produces; also what the scripted mock replies.
pub fn template_reply(sig: &SignatureBrief, precedents: &[PrecedentBrief]) -> CharacterisationReply {
    if precedents.is_empty() {
        CharacterisationReply {
            summary_text: render_transcription(sig),
            cited_channels: cited(sig),
            candidate_causes: Vec::new(),
        }
    } else {
        CharacterisationReply {
            summary_text: render_context(sig, precedents),
            cited_channels: cited(sig),
            candidate_causes: candidate_causes(precedents),
        }
    }
}

/// Numbers a characterisation may quote.
pub fn allowed_numbers(sig: &AnomalySignature, precedents: &[PrecedentBrief]) -> Vec<f64> {
    let mut facts = sig.numeric_facts();
    for p in precedents {
        facts.push(p.similarity);
        facts.extend(numbers_in(&p.characterisation).into_iter().map(|(v, _)| v));
    }
    facts
}

/// Checks a backend reply against the signature it describes.
pub fn validate_reply(
    reply: &CharacterisationReply,
    sig: &AnomalySignature,
    precedents: &[PrecedentBrief],
) -> Result<(), String> {
    if reply.summary_text.trim().is_empty() {
        return Err("empty summary".into());
    }
    if reply.cited_channels.is_empty() {
        return Err("no cited channels".into());
    }
    for c in &reply.cited_channels {
        let s = sig
            .channel(&c.channel)
            .ok_or_else(|| format!("cited channel {} is not in the signature", c.channel))?;
        let tol = 0.5 * 10f64.powi(-(s.decimals as i32)) + 1e-9;
        if (s.observed - c.observed).abs() > tol || (s.expected - c.expected).abs() > tol {
            return Err(format!("cited values for {} do not match the signature", c.channel));
        }
    }
    for s in sig.top_summaries() {
        for v in [s.observed, s.expected] {
            if !reply.summary_text.contains(&s.fmt_value(v)) {
                return Err(format!("summary omits {} value {}", s.channel, s.fmt_value(v)));
            }
        }
    }
    if precedents.is_empty() {
        if !reply.candidate_causes.is_empty() {
            return Err("candidate causes without precedents".into());
        }
    } else {
        if reply.candidate_causes.is_empty() {
            return Err("precedents given but no candidate causes".into());
        }
        if let Some(c) = reply
            .candidate_causes
            .iter()
            .find(|c| !precedents.iter().any(|p| &p.root_cause == *c))
        {
            return Err(format!("candidate cause {c} not drawn from precedents"));
        }
        if let Some(p) = precedents
            .iter()
            .find(|p| !reply.summary_text.contains(&p.root_cause))
        {
            return Err(format!("summary does not mention precedent cause {}", p.root_cause));
        }
    }
    let invented = invented_numbers(&reply.summary_text, &allowed_numbers(sig, precedents));
    if !invented.is_empty() {
        return Err(format!("numbers not in the input: {invented:?}"));
    }
    Ok(())
}

fn parse_reply(msg: &ChatMessage) -> Result<CharacterisationReply, String> {
    let block = fenced_json(&msg.content).ok_or("no fenced json block")?;
    serde_json::from_str(block).map_err(|e| e.to_string())
}

pub fn request_messages(sig: &AnomalySignature, precedents: &[PrecedentBrief]) -> Vec<ChatMessage> {
    let t = sig.event.trigger_t;
    let mut body = format!("{}\n", sig.to_text());
    if !precedents.is_empty() {
        body.push_str("validated precedents:\n");
        for p in precedents {
            let _ = writeln!(
                body,
                "- {} (similarity {:.2}, root cause {}): {}",
                p.lesson_id, p.similarity, p.root_cause, p.characterisation
            );
        }
    }
    body.push_str(&fence(&Task::Characterise {
        signature: SignatureBrief::of(sig),
        precedents: precedents.to_vec(),
    }));
    vec![
        ChatMessage::new(Role::System, AGENT_A_PROMPT, t),
        ChatMessage::new(Role::Tool, body, t),
    ]
}

/// Characterises `sig`. Retrieval hits switch the output to
/// context-informed mode. An invalid reply is re-requested once; after that,
/// or on backend failure, the template rendering is used and the result is
/// marked degraded.
pub fn characterize(
    backend: &dyn ChatBackend,
    sig: &AnomalySignature,
    hits: &[RetrievalHit],
) -> ProblemCharacterisation {
    let precedents = precedent_briefs(hits);
    let mut messages = request_messages(sig, &precedents);
    let mut accepted = None;
    for _attempt in 0..2 {
        let reply = match llm_chat(backend, &messages) {
            Ok(r) => r,
            Err(_) => break,
        };
        match parse_reply(&reply).and_then(|r| validate_reply(&r, sig, &precedents).map(|_| r)) {
            Ok(r) => {
                accepted = Some(r);
                break;
            }
            Err(reason) => {
                let t = reply.t;
                messages.push(reply);
                messages.push(ChatMessage::new(
                    Role::Tool,
                    format!("Reply rejected: {reason}. Answer again with one ```json block in the required schema."),
                    t,
                ));
            }
        }
    }

    let degraded = accepted.is_none();
    // Fallback is the plain transcription: a broken backend must not be
    // able to assert causes.
    let (reply, precedents) = match accepted {
        Some(r) => (r, precedents),
        None => (template_reply(&SignatureBrief::of(sig), &[]), Vec::new()),
    };
    let matched_precedents: Vec<PrecedentRef> = precedents
        .iter()
        .map(|p| PrecedentRef {
            lesson_id: p.lesson_id.clone(),
            similarity: p.similarity,
            root_cause: p.root_cause.clone(),
        })
        .collect();
    ProblemCharacterisation {
        summary_text: reply.summary_text,
        cited_channels: reply.cited_channels,
        mode: if matched_precedents.is_empty() {
            Mode::Transcription
        } else {
            Mode::ContextInformed
        },
        matched_precedents,
        candidate_causes: reply.candidate_causes,
        degraded,
    }
}
