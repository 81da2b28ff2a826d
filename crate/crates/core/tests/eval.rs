mod common;

use std::sync::Arc;

use aura_agents::{Mode, ScriptedMock};
use aura_core::eval::*;
use aura_core::orchestrator::PipelineConfig;
use aura_core::scenarios::UseCase;
use common::*;

fn setup() -> EvalSetup {
    EvalSetup {
        model: model(),
        corpus: Some(corpus()),
        backend: Arc::new(ScriptedMock::new()),
        config: PipelineConfig::default(),
    }
}

#[test]
fn priming_stores_exactly_five_lessons() {
    let p1 = run_phase1(&setup(), empty_memory()).unwrap();
    assert_eq!(p1.memory.len(), 5);
    assert_eq!(p1.sessions.len(), 5);
    let causes: Vec<String> = p1.memory.lessons().into_iter().map(|l| l.root_cause).collect();
    let count = |c: &str| causes.iter().filter(|x| *x == c).count();
    assert_eq!(count("tether entanglement"), 2);
    assert_eq!(count("thruster fouling"), 2);
    assert_eq!(count("ballast trim imbalance"), 1);
}

#[test]
fn priming_is_deterministic() {
    let a = run_phase1(&setup(), empty_memory()).unwrap();
    let b = run_phase1(&setup(), empty_memory()).unwrap();
    assert_eq!(a.memory.to_ndjson(), b.memory.to_ndjson());
}

#[test]
fn priming_fails_if_any_session_is_not_validated() {
    let mut s = setup();
    // Too few turns for a first encounter to reach a confident diagnosis.
    s.config.max_turns = 2;
    assert!(matches!(run_phase1(&s, empty_memory()), Err(EvalError::Protocol(_))));
}

#[test]
fn priming_refuses_a_non_empty_memory() {
    let p1 = run_phase1(&setup(), empty_memory()).unwrap();
    assert!(matches!(run_phase1(&setup(), p1.memory), Err(EvalError::Protocol(_))));
}

#[test]
fn post_distillation_needs_fewer_turns_for_every_use_case() {
    let (_, rows) = run_full(&setup(), empty_memory(), 5).unwrap();
    let report = summarize(&rows);
    assert_eq!(report.lines.len(), 3);
    for line in &report.lines {
        let (f, p) = (line.first.unwrap(), line.post.unwrap());
        assert_eq!((f.n, p.n), (5, 5));
        assert!(p.mean_turns < f.mean_turns, "{:?}", line);
        assert!(p.mean_css.unwrap() >= f.mean_css.unwrap());
    }
    let r = report.turn_reduction.unwrap();
    assert!(r > 0.0);
    let table = report.to_table();
    assert!(table.contains("Turn reduction"));
    assert!(table.contains(&format!("{REFERENCE_TURN_REDUCTION:.0}%")));
}

#[test]
fn improvement_holds_scenario_by_scenario() {
    let (_, rows) = run_full(&setup(), empty_memory(), 2).unwrap();
    let mut strict = false;
    for first in rows.iter().filter(|r| r.condition == Condition::First) {
        let post = rows
            .iter()
            .find(|r| r.condition == Condition::Post && r.scenario_id == first.scenario_id)
            .unwrap();
        assert!(post.turns <= first.turns);
        assert!(post.css >= first.css);
        strict |= post.turns < first.turns || post.css > first.css;
        assert_eq!(first.mode, Mode::Transcription);
        assert_eq!(post.mode, Mode::ContextInformed);
        assert!(first.validated && post.validated);
        assert_eq!(post.root_cause.as_deref(), Some(first.use_case.root_cause()));
    }
    assert!(strict);
}

#[test]
fn first_encounters_start_empty_even_after_priming() {
    let s = setup();
    let _primed = run_phase1(&s, empty_memory()).unwrap();
    let rows = run_phase2(&s, Condition::First, None, 1).unwrap();
    assert!(rows.iter().all(|r| r.mode == Mode::Transcription));
}

#[test]
fn post_runs_leave_the_primed_memory_untouched() {
    let s = setup();
    let p1 = run_phase1(&s, empty_memory()).unwrap();
    let before = p1.memory.to_ndjson();
    run_phase2(&s, Condition::Post, Some(&p1.memory), 2).unwrap();
    assert_eq!(p1.memory.to_ndjson(), before);
}

#[test]
fn post_condition_without_primed_memory_is_an_error() {
    assert!(run_phase2(&setup(), Condition::Post, None, 1).is_err());
    assert!(run_phase2(&setup(), Condition::First, None, 0).is_err());
}

#[test]
fn one_repetition_gives_the_same_means_as_five() {
    let s = setup();
    let p1 = run_phase1(&s, empty_memory()).unwrap();
    let mean = |n| {
        let mut rows = run_phase2(&s, Condition::First, None, n).unwrap();
        rows.extend(run_phase2(&s, Condition::Post, Some(&p1.memory), n).unwrap());
        let r = summarize(&rows);
        r.lines
            .iter()
            .map(|l| (l.first.unwrap().mean_turns, l.first.unwrap().mean_css, l.post.unwrap().mean_turns, l.post.unwrap().mean_css))
            .collect::<Vec<_>>()
    };
    assert_eq!(mean(1), mean(5));
}

#[test]
fn rows_are_ordered_and_csv_has_one_line_per_run() {
    let rows = run_phase2(&setup(), Condition::First, None, 2).unwrap();
    let order: Vec<(UseCase, usize)> = rows.iter().map(|r| (r.use_case, r.rep)).collect();
    let mut sorted = order.clone();
    sorted.sort_by_key(|(u, r)| (UseCase::EVALUATED.iter().position(|x| x == u), *r));
    assert_eq!(order, sorted);

    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), rows.len() + 1);
    assert!(lines[0].starts_with("use_case,condition,rep,scenario_id"));
    assert!(lines[1].starts_with("thruster_disturbance,first,0,"));
}

#[test]
fn full_protocol_is_fast() {
    let t = std::time::Instant::now();
    run_full(&setup(), empty_memory(), 5).unwrap();
    assert!(t.elapsed().as_secs_f64() < 120.0);
}
