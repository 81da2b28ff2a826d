//! Agent B: knowledge-grounded hypothesis ranking and the operator dialogue.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use aura_knowledge::{CorpusIndex, KnowledgeDoc, SearchHit};

use crate::agent_a::ProblemCharacterisation;
use crate::backend::{llm_chat, ChatBackend};
use crate::message::{fence, fenced_json, ChatMessage, Role};
use crate::task::{DialogReply, DocBrief, Hypothesis, HypothesesReply, PrecedentBrief, Task};
use crate::AgentError;

/// First message of every Agent B request, byte for byte.
pub const GUARDRAIL_PROMPT: &str = "\
You are a diagnostic assistant supporting the pilot of an underwater vehicle. \
You are advisory only. You cannot operate the vehicle and you must never issue, \
schedule or imply commands to it; the operator decides and acts. Rank possible \
root causes of the reported anomaly, cite only the document ids and lesson ids \
supplied to you as evidence, and say plainly when you lack grounding. Update \
your ranking from what the operator reports, rules out or confirms. Reply with \
exactly one ```json block in the schema requested.";

pub const DEFAULT_DOCS: usize = 4;
pub const UNDIAGNOSED: &str = "undiagnosed";

/// Phrases that would mean the agent claims to act on the vehicle.
const ACTION_PHRASES: &[&str] = &[
    "i am commanding",
    "i have commanded",
    "i will command",
    "executing",
    "command sent",
    "sending command",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Grounding {
    pub hits: Vec<SearchHit>,
    /// No corpus, or nothing in it relevant.
    pub ungrounded: bool,
}

/// Searches the corpus for the characterisation's channels and candidate
/// causes.
pub fn ground_knowledge(corpus: Option<&CorpusIndex>, ch: &ProblemCharacterisation, n: usize) -> Grounding {
    let Some(corpus) = corpus else {
        return Grounding {
            hits: Vec::new(),
            ungrounded: true,
        };
    };
    let mut query: Vec<&str> = ch.cited_channels.iter().map(|c| c.channel.as_str()).collect();
    query.extend(ch.candidate_causes.iter().map(String::as_str));
    let hits = corpus.search(&query.join(" "), n);
    Grounding {
        ungrounded: hits.is_empty(),
        hits,
    }
}

/// First bullet under a `Checks` heading.
pub fn first_check(body: &str) -> Option<String> {
    let mut lines = body.lines().map(str::trim);
    lines.by_ref().find(|l| l.eq_ignore_ascii_case("checks"))?;
    let first = lines.find(|l| !l.is_empty())?;
    let mut text = first.strip_prefix("- ")?.to_owned();
    for l in lines.take_while(|l| !l.is_empty() && !l.starts_with("- ")) {
        text.push(' ');
        text.push_str(l);
    }
    Some(text)
}

pub fn doc_brief(doc: &KnowledgeDoc, score: f64) -> DocBrief {
    DocBrief {
        id: doc.id.clone(),
        title: doc.title.clone(),
        cause: doc.cause.clone(),
        tags: doc.tags.clone(),
        score,
        check: first_check(&doc.body),
    }
}

/// Orders by confidence (descending), then cause.
pub fn sort_hypotheses(hs: &mut [Hypothesis]) {
    hs.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.cause.cmp(&b.cause)));
}

fn validate_hypotheses(hs: &[Hypothesis], known_ids: &BTreeSet<String>, ungrounded: bool) -> Result<(), String> {
    if hs.is_empty() {
        return Err("no hypotheses".into());
    }
    for h in hs {
        if h.cause.trim().is_empty() {
            return Err("hypothesis without a cause".into());
        }
        if !(0.0..=1.0).contains(&h.confidence) {
            return Err(format!("confidence {} outside [0, 1]", h.confidence));
        }
        if h.evidence.is_empty() && !(ungrounded || h.cause == UNDIAGNOSED) {
            return Err(format!("{} cites no evidence", h.cause));
        }
        if let Some(bad) = h.evidence.iter().find(|e| !known_ids.contains(*e)) {
            return Err(format!("unknown evidence id {bad}"));
        }
        if contains_action(&h.rationale) {
            return Err("rationale proposes an action".into());
        }
    }
    Ok(())
}

fn contains_action(text: &str) -> bool {
    let lower = text.to_lowercase();
    ACTION_PHRASES.iter().any(|p| lower.contains(p))
}

fn parse<T: for<'de> Deserialize<'de>>(msg: &ChatMessage) -> Result<T, String> {
    let block = fenced_json(&msg.content).ok_or("no fenced json block")?;
    serde_json::from_str(block).map_err(|e| e.to_string())
}

/// Sends `messages` (+ the task) and validates the reply with `check`. One
/// re-request on an invalid reply. `None` means the caller must fall back.
fn ask<T, F>(backend: &dyn ChatBackend, mut messages: Vec<ChatMessage>, check: F) -> Option<T>
where
    T: for<'de> Deserialize<'de>,
    F: Fn(&T) -> Result<(), String>,
{
    for _attempt in 0..2 {
        let reply = llm_chat(backend, &messages).ok()?;
        match parse::<T>(&reply).and_then(|r| check(&r).map(|_| r)) {
            Ok(r) => return Some(r),
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
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub reply: String,
    pub hypotheses: Vec<Hypothesis>,
    pub ungrounded: bool,
    pub degraded: bool,
}

fn undiagnosed(reason: &str) -> Vec<Hypothesis> {
    vec![Hypothesis {
        cause: UNDIAGNOSED.into(),
        rationale: reason.into(),
        evidence: Vec::new(),
        confidence: 0.1,
    }]
}

/// Initial ranking only: opens a dialogue and reports its first answer.
pub fn generate_hypotheses(
    backend: Arc<dyn ChatBackend>,
    ch: &ProblemCharacterisation,
    precedents: &[PrecedentBrief],
    grounding: &Grounding,
    corpus: Option<&CorpusIndex>,
) -> HypothesisSet {
    let d = Dialogue::open(backend, ch, precedents, grounding, corpus, 0.0);
    HypothesisSet {
        reply: d.transcript.last().map(|m| m.content.clone()).unwrap_or_default(),
        hypotheses: d.hypotheses,
        ungrounded: d.ungrounded,
        degraded: d.degraded,
    }
}

/// What happened on one dialogue step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reply: ChatMessage,
    pub hypotheses: Vec<Hypothesis>,
    /// False for clarification requests, which do not count as a turn.
    pub counted: bool,
    pub agreed_cause: Option<String>,
    pub degraded: bool,
}

/// One diagnostic conversation. The transcript starts with the guardrail
/// prompt and a context message, followed by the agent's opening ranking.
pub struct Dialogue {
    backend: Arc<dyn ChatBackend>,
    documents: Vec<DocBrief>,
    known_ids: BTreeSet<String>,
    transcript: Vec<ChatMessage>,
    hypotheses: Vec<Hypothesis>,
    turn_count: usize,
    closed: bool,
    ungrounded: bool,
    degraded: bool,
    agreed_cause: Option<String>,
    t0: f64,
}

impl std::fmt::Debug for Dialogue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dialogue")
            .field("turn_count", &self.turn_count)
            .field("closed", &self.closed)
            .field("hypotheses", &self.hypotheses)
            .finish()
    }
}

impl Dialogue {
    /// Opens the dialogue and asks for the initial ranking.
    pub fn open(
        backend: Arc<dyn ChatBackend>,
        ch: &ProblemCharacterisation,
        precedents: &[PrecedentBrief],
        grounding: &Grounding,
        corpus: Option<&CorpusIndex>,
        t0: f64,
    ) -> Self {
        // Every corpus document is available for re-ranking; retrieved ones
        // carry their score.
        let mut documents: Vec<DocBrief> = corpus
            .map(|c| c.docs().iter().map(|d| doc_brief(d, 0.0)).collect())
            .unwrap_or_default();
        for h in &grounding.hits {
            match documents.iter_mut().find(|d| d.id == h.doc.id) {
                Some(d) => d.score = h.score,
                None => documents.push(doc_brief(&h.doc, h.score)),
            }
        }
        let mut known_ids: BTreeSet<String> = documents.iter().map(|d| d.id.clone()).collect();
        known_ids.extend(precedents.iter().map(|p| p.lesson_id.clone()));

        let mut context = format!("problem characterisation ({:?} mode):\n{}\n", ch.mode, ch.summary_text);
        if grounding.ungrounded {
            context.push_str("no knowledge documents matched this anomaly.\n");
        } else {
            context.push_str("retrieved documents:\n");
            for h in &grounding.hits {
                let _ = writeln!(context, "- {} ({:.3}): {}", h.doc.id, h.score, h.doc.title);
            }
        }

        let mut dlg = Self {
            backend,
            documents,
            known_ids,
            transcript: vec![
                ChatMessage::new(Role::System, GUARDRAIL_PROMPT, t0),
                ChatMessage::new(Role::Tool, context, t0),
            ],
            hypotheses: Vec::new(),
            turn_count: 0,
            closed: false,
            ungrounded: grounding.ungrounded,
            degraded: false,
            agreed_cause: None,
            t0,
        };

        let retrieved: Vec<DocBrief> = dlg.documents.iter().filter(|d| d.score > 0.0).cloned().collect();
        let task = Task::Hypothesise {
            channels: ch.cited_channels.iter().map(|c| c.channel.clone()).collect(),
            candidate_causes: ch.candidate_causes.clone(),
            documents: retrieved,
            precedents: precedents.to_vec(),
        };
        let set = dlg.hypothesise(task);
        dlg.degraded = set.degraded;
        dlg.hypotheses = set.hypotheses;
        let t = dlg.clock();
        dlg.transcript.push(ChatMessage::new(Role::Agent, set.reply, t));
        dlg
    }

    fn clock(&self) -> f64 {
        self.t0 + self.transcript.len() as f64
    }

    fn request(&self, task: &Task) -> Vec<ChatMessage> {
        let mut messages = self.transcript.clone();
        messages.push(ChatMessage::new(Role::Tool, fence(task), self.clock()));
        messages
    }

    fn hypothesise(&self, task: Task) -> HypothesisSet {
        let ungrounded = self.ungrounded;
        let known = &self.known_ids;
        let reply: Option<HypothesesReply> = ask(self.backend.as_ref(), self.request(&task), |r: &HypothesesReply| {
            validate_hypotheses(&r.hypotheses, known, ungrounded)?;
            if contains_action(&r.reply) {
                return Err("reply proposes an action".into());
            }
            Ok(())
        });
        match reply {
            Some(mut r) => {
                sort_hypotheses(&mut r.hypotheses);
                HypothesisSet {
                    reply: r.reply,
                    hypotheses: r.hypotheses,
                    ungrounded,
                    degraded: false,
                }
            }
            None => HypothesisSet {
                reply: "The diagnostic backend is unavailable; no grounded hypothesis can be offered.".into(),
                hypotheses: undiagnosed("backend unavailable"),
                ungrounded,
                degraded: true,
            },
        }
    }

    /// Handles one operator input. Empty input yields a clarification
    /// request that changes nothing and is not counted as a turn.
    pub fn step(&mut self, operator_input: &str) -> Result<StepOutcome, AgentError> {
        if self.closed {
            return Err(AgentError::SessionClosed);
        }
        let input = operator_input.trim();
        if input.is_empty() {
            let reply = ChatMessage::new(
                Role::Agent,
                "Could you describe what you observe, rule a cause out, or confirm one?",
                self.clock(),
            );
            self.transcript.push(reply.clone());
            return Ok(StepOutcome {
                reply,
                hypotheses: self.hypotheses.clone(),
                counted: false,
                agreed_cause: None,
                degraded: false,
            });
        }

        let t = self.clock();
        self.transcript.push(ChatMessage::new(Role::Operator, input, t));
        self.turn_count += 1;
        let task = Task::Dialog {
            hypotheses: self.hypotheses.clone(),
            documents: self.documents.clone(),
            operator_input: input.to_owned(),
        };
        let ungrounded = self.ungrounded;
        let known = &self.known_ids;
        let reply: Option<DialogReply> = ask(self.backend.as_ref(), self.request(&task), |r: &DialogReply| {
            validate_hypotheses(&r.hypotheses, known, ungrounded)?;
            if contains_action(&r.reply) {
                return Err("reply proposes an action".into());
            }
            if let Some(c) = &r.agreed_cause {
                if !r.hypotheses.iter().any(|h| &h.cause == c) {
                    return Err(format!("agreed cause {c} is not a hypothesis"));
                }
            }
            Ok(())
        });
        let (text, degraded, agreed) = match reply {
            Some(mut r) => {
                sort_hypotheses(&mut r.hypotheses);
                self.hypotheses = r.hypotheses;
                (r.reply, false, r.agreed_cause)
            }
            None => {
                self.degraded = true;
                ("The diagnostic backend did not answer; the ranking is unchanged.".to_owned(), true, None)
            }
        };
        if agreed.is_some() {
            self.agreed_cause = agreed.clone();
        }
        let reply = ChatMessage::new(Role::Agent, text, self.clock());
        self.transcript.push(reply.clone());
        Ok(StepOutcome {
            reply,
            hypotheses: self.hypotheses.clone(),
            counted: true,
            agreed_cause: agreed,
            degraded,
        })
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn transcript(&self) -> &[ChatMessage] {
        &self.transcript
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn top(&self) -> Option<&Hypothesis> {
        self.hypotheses.first()
    }

    pub fn turn_count(&self) -> usize {
        self.turn_count
    }

    pub fn ungrounded(&self) -> bool {
        self.ungrounded
    }

    pub fn degraded(&self) -> bool {
        self.degraded
    }

    pub fn agreed_cause(&self) -> Option<&str> {
        self.agreed_cause.as_deref()
    }

    /// The evidence ids the agent may cite.
    pub fn known_ids(&self) -> &BTreeSet<String> {
        &self.known_ids
    }
}
