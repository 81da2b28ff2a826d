//! Acceptance suite. Each criterion prints one `PASS` / `FAIL` line; the
//! process exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use aura_agents::agent_a::{Mode, AGENT_A_PROMPT};
use aura_agents::agent_b::GUARDRAIL_PROMPT;
use aura_agents::{BackendError, BackendKind, ChatBackend, ChatMessage, Role, ScriptedMock};
use aura_core::eval::{self, Condition, EvalSetup};
use aura_core::orchestrator::PipelineConfig;
use aura_core::scenarios::{compass_heading, for_use_case, nominal, UseCase, FAULT_ONSET, NOMINAL_FIT_SEEDS};
use aura_core::telemetry::{fit_from_scenarios, residual_of};
use aura_core::{inject_premission, SessionLog};
use aura_detect::{chi2_quantile, detect, NormativeModel, Regularization, DEFAULT_DEBOUNCE};
use aura_memory::{DistilledLesson, MemoryStore, MockEmbedder, Origin};
use aura_twin::run_scenario;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("detector calibration", calibration),
        ("chi-squared quantile oracle", chi2_oracle),
        ("mahalanobis examples and affine invariance", mahalanobis),
        ("detection latency and fault-free silence", latency),
        ("learning loop per use case", learning_loop),
        ("phase protocol", phase_protocol),
        ("safeguard gates", safeguards),
        ("persistence", persistence),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1} s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn calibration() -> Outcome {
    let t0 = Instant::now();
    let fit: Vec<_> = NOMINAL_FIT_SEEDS.map(nominal).collect();
    let m = fit_from_scenarios(&fit, 0.99, Regularization::default()).map_err(|e| e.to_string())?;
    ensure!(m.sample_count() >= 10_000, "only {} fit samples", m.sample_count());
    let (mut over, mut total) = (0usize, 0usize);
    for seed in 2000..2020 {
        for rec in run_scenario(&nominal(seed)).map_err(|e| e.to_string())? {
            let r = residual_of(&rec);
            total += 1;
            over += usize::from(m.mahalanobis_sq(&r.values).unwrap() > m.threshold());
        }
    }
    let rate = over as f64 / total as f64;
    let took = t0.elapsed();
    ensure!((rate - 0.01).abs() <= 0.003, "held-out exceedance {:.3}%", rate * 100.0);
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!(
        "fit on {} samples, held-out exceedance {:.2}% over {total} ticks",
        m.sample_count(),
        rate * 100.0
    ))
}

const P_LEVELS: [f64; 4] = [0.9, 0.95, 0.99, 0.999];

/// Rows are dof 1..=12, columns follow `P_LEVELS`; values from an
/// independent statistics package, matching printed tables.
const CHI2_TABLE: [[f64; 4]; 12] = [
    [2.7055434541, 3.8414588207, 6.6348966010, 10.8275661707],
    [4.6051701860, 5.9914645471, 9.2103403720, 13.8155105580],
    [6.2513886312, 7.8147279033, 11.3448667301, 16.2662361962],
    [7.7794403397, 9.4877290368, 13.2767041360, 18.4668269529],
    [9.2363568998, 11.0704976935, 15.0862724694, 20.5150056524],
    [10.6446406757, 12.5915872437, 16.8118938298, 22.4577444848],
    [12.0170366238, 14.0671404493, 18.4753069066, 24.3218863479],
    [13.3615661365, 15.5073130559, 20.0902350297, 26.1244815584],
    [14.6836565733, 16.9189776046, 21.6659943335, 27.8771648713],
    [15.9871791721, 18.3070380533, 23.2092511590, 29.5882984451],
    [17.2750085175, 19.6751375727, 24.7249703113, 31.2641336202],
    [18.5493477867, 21.0260698175, 26.2169673055, 32.9094904074],
];

fn chi2_oracle() -> Outcome {
    let mut worst = 0f64;
    for (row, dof) in CHI2_TABLE.iter().zip(1usize..) {
        for (&expected, &p) in row.iter().zip(P_LEVELS.iter()) {
            let q = chi2_quantile(dof, p).map_err(|e| e.to_string())?;
            let rel = (q - expected).abs() / expected;
            ensure!(rel <= 1e-4, "dof={dof} p={p}: {q} vs {expected}");
            worst = worst.max(rel);
        }
    }
    Ok(format!("48 quantiles, worst relative error {worst:.1e}"))
}

fn model(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> NormativeModel {
    let n = mu.len();
    let rows = (0..n).map(|i| (0..n).map(|j| sigma[(i, j)]).collect()).collect();
    NormativeModel::from_parts(mu.iter().copied().collect(), rows, 0.99, 100).unwrap()
}

fn mahalanobis() -> Outcome {
    let m = NormativeModel::from_parts(vec![1.5, -2.0], vec![vec![3.0, 0.5], vec![0.5, 1.0]], 0.99, 10).unwrap();
    let d0 = m.mahalanobis_sq(&[1.5, -2.0]).unwrap();
    ensure!(d0.abs() <= 1e-9, "x = mu gave {d0}");
    let id = NormativeModel::from_parts(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.99, 10).unwrap();
    let d25 = id.mahalanobis_sq(&[3.0, 4.0]).unwrap();
    ensure!((d25 - 25.0).abs() <= 1e-9, "identity example gave {d25}");
    let corr = NormativeModel::from_parts(vec![0.0, 0.0], vec![vec![2.0, 1.0], vec![1.0, 2.0]], 0.99, 10).unwrap();
    let d23 = corr.mahalanobis_sq(&[1.0, 1.0]).unwrap();
    ensure!((d23 - 2.0 / 3.0).abs() <= 1e-9, "correlated example gave {d23}");

    // MD² is unchanged under x -> Ax + b applied to data, mean and covariance.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0f64;
    for _ in 0..100 {
        let n = 6;
        let l = DMatrix::from_fn(n, n, |i, j| if i >= j { rng.gen_range(-1.0..1.0) } else { 0.0 });
        let sigma = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
        let mu = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
        let a = loop {
            let a: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
            if a.determinant().abs() > 0.1 {
                break a;
            }
        };
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
        let before = model(&mu, &sigma).mahalanobis_sq(x.as_slice()).unwrap();
        let mut s2 = &a * &sigma * a.transpose();
        s2 = (&s2 + s2.transpose()) * 0.5;
        let after = model(&(&a * &mu + &b), &s2)
            .mahalanobis_sq((&a * &x + &b).as_slice())
            .unwrap();
        let rel = (before - after).abs() / before.max(1.0);
        ensure!(rel <= 1e-6, "affine transform changed MD2 {before} -> {after}");
        worst = worst.max(rel);
    }
    Ok(format!("0 / 25 / 2/3 exact; 100 transforms, worst relative drift {worst:.1e}"))
}

fn latency() -> Outcome {
    let m = common::model();
    let mut lat = Vec::new();
    for (name, sc) in [
        ("heading +33", compass_heading(7, 33.0)),
        ("vertical", for_use_case(UseCase::VerticalMotion, 7, 0)),
        ("rotational", for_use_case(UseCase::RotationalMotion, 7, 0)),
    ] {
        let res: Vec<_> = run_scenario(&sc).unwrap().iter().map(residual_of).collect();
        let ev = detect(m.clone(), &res, DEFAULT_DEBOUNCE)
            .unwrap()
            .ok_or_else(|| format!("{name}: no trigger"))?;
        let l = ev.trigger_t - FAULT_ONSET;
        ensure!((0.0..=1.0).contains(&l), "{name}: latency {l:.2} s");
        lat.push(format!("{name} {l:.1} s"));
    }
    let fired: Vec<u64> = (0..100)
        .filter(|&seed| {
            let res: Vec<_> = run_scenario(&nominal(seed)).unwrap().iter().map(residual_of).collect();
            detect(m.clone(), &res, DEFAULT_DEBOUNCE).unwrap().is_some()
        })
        .collect();
    ensure!(fired.is_empty(), "fault-free seeds triggered: {fired:?}");
    Ok(format!("{}; 0/100 fault-free triggers", lat.join(", ")))
}

fn learning_loop() -> Outcome {
    let mut out = Vec::new();
    for uc in UseCase::EVALUATED {
        let p = common::pipeline(common::empty_memory());
        let first = common::session(&p, uc, 0, 41);
        let t1 = first.log.turn_count;
        ensure!(first.log.characterisation.mode == Mode::Transcription, "{uc:?}: first session not transcription");
        ensure!(first.lesson_id.is_some(), "{uc:?}: first session not distilled: {:?}", first.rejected);
        let second = common::session(&p, uc, 1, 42);
        let ch = &second.log.characterisation;
        let t2 = second.log.turn_count;
        ensure!(ch.mode == Mode::ContextInformed, "{uc:?}: second session not context-informed");
        ensure!(
            ch.summary_text.contains(uc.root_cause()),
            "{uc:?}: characterisation does not name {}",
            uc.root_cause()
        );
        ensure!(t2 < t1 && t2 <= 2, "{uc:?}: T1={t1} T2={t2}");
        out.push(format!("{} T1={t1} T2={t2}", uc.label()));
    }
    Ok(out.join(", "))
}

fn setup(backend: Arc<dyn ChatBackend>) -> EvalSetup {
    EvalSetup {
        model: common::model(),
        corpus: Some(common::corpus()),
        backend,
        config: PipelineConfig::default(),
    }
}

fn phase_protocol() -> Outcome {
    let t0 = Instant::now();
    let s = setup(Arc::new(ScriptedMock::new()));
    let (p1, rows) = eval::run_full(&s, common::empty_memory(), 5).map_err(|e| e.to_string())?;
    let took = t0.elapsed();
    ensure!(p1.memory.len() == 5, "phase 1 stored {} lessons", p1.memory.len());
    let report = eval::summarize(&rows);
    let mut out = Vec::new();
    for uc in UseCase::EVALUATED {
        let line = report
            .lines
            .iter()
            .find(|l| l.use_case == Some(uc))
            .ok_or_else(|| format!("{uc:?} missing from report"))?;
        let (f, p) = match (&line.first, &line.post) {
            (Some(f), Some(p)) => (f.mean_turns, p.mean_turns),
            _ => return Err(format!("{uc:?}: missing condition")),
        };
        ensure!(p < f, "{uc:?}: post {p} not below first {f}");
        out.push(format!("{} {f:.1}->{p:.1}", uc.label()));
    }
    ensure!(took < Duration::from_secs(120), "full eval took {took:?}");
    let n_first = rows.iter().filter(|r| r.condition == Condition::First).count();
    Ok(format!(
        "5 lessons; mean turns {}; {n_first}+{} runs in {:.1} s",
        out.join(", "),
        rows.len() - n_first,
        took.as_secs_f64()
    ))
}

/// Records every request, then answers like the scripted mock.
struct Spy {
    inner: ScriptedMock,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
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

fn gate_lesson(validated: bool, confidence: f64) -> DistilledLesson {
    DistilledLesson {
        id: "gate".into(),
        created_t: 1.0,
        anomaly_text: "heading deviates from the twin".into(),
        validated_characterisation: "compass disturbed".into(),
        root_cause: "magnetic interference".into(),
        source_session: "s".into(),
        origin: Origin::Live,
        validated,
        operator_confidence: confidence,
        embedding: Vec::new(),
    }
}

fn safeguards() -> Outcome {
    // Gate, on the store directly and through session distillation.
    let template = common::session(&common::pipeline(common::empty_memory()), UseCase::ThrusterDisturbance, 0, 43).log;
    let mut runner = TestRunner::new(PropConfig {
        cases: 512,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner
        .run(&(any::<bool>(), -0.5f64..1.5, 0.0f64..=1.0), |(validated, conf, log_conf)| {
            let store = MemoryStore::new(Arc::new(MockEmbedder::new()));
            let ok = store.insert(gate_lesson(validated, conf)).is_ok();
            prop_assert_eq!(ok, validated && conf > 0.9 && conf <= 1.0);
            prop_assert_eq!(store.len(), usize::from(ok));

            let store = MemoryStore::new(Arc::new(MockEmbedder::new()));
            let mut log = template.clone();
            log.operator_validated = validated;
            log.operator_confidence = log_conf;
            let ok = inject_premission(&log, &store, None).is_ok();
            prop_assert_eq!(ok, validated && log_conf > 0.9);
            prop_assert_eq!(store.len(), usize::from(ok));
            Ok(())
        })
        .map_err(|e| format!("memory gate: {e}"))?;

    // Guardrail prompt on every diagnostic-agent call, across both conditions.
    let spy = Arc::new(Spy {
        inner: ScriptedMock::new(),
        requests: Mutex::new(Vec::new()),
    });
    eval::run_full(&setup(spy.clone()), common::empty_memory(), 1).map_err(|e| e.to_string())?;
    let reqs = spy.requests.lock().unwrap();
    let (mut a_calls, mut b_calls) = (0usize, 0usize);
    for r in reqs.iter() {
        let sys = r.first().filter(|m| m.role == Role::System).map(|m| m.content.as_str());
        match sys {
            Some(s) if s == AGENT_A_PROMPT => a_calls += 1,
            Some(s) if s == GUARDRAIL_PROMPT => b_calls += 1,
            _ => return Err("a diagnostic call went out without the guardrail prompt".into()),
        }
    }
    ensure!(b_calls > 0 && a_calls > 0, "no agent traffic observed");

    // No dependency path from the agents to the vehicle command types.
    let out = Command::new(env!("CARGO"))
        .args(["metadata", "--format-version", "1", "--no-deps", "--offline"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "cargo metadata failed");
    let meta: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let mut graph: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for p in meta["packages"].as_array().unwrap() {
        let deps = p["dependencies"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|d| d["kind"].is_null() || d["kind"] == "build")
            .map(|d| d["name"].as_str().unwrap().to_owned())
            .collect();
        graph.insert(p["name"].as_str().unwrap().to_owned(), deps);
    }
    ensure!(graph.contains_key("aura-twin"), "simulator crate not found");
    let mut seen = BTreeSet::new();
    let mut stack = vec!["aura-agents".to_owned()];
    while let Some(name) = stack.pop() {
        if seen.insert(name.clone()) {
            stack.extend(graph.get(&name).cloned().unwrap_or_default());
        }
    }
    ensure!(!seen.contains("aura-twin"), "agents reach the simulator via {seen:?}");

    Ok(format!(
        "gate holds over 512 cases; guardrail on {b_calls}/{b_calls} diagnostic calls ({a_calls} characterisation calls); agents -> {} crates, none the simulator",
        seen.len() - 1
    ))
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let memory = common::empty_memory();
    let p = common::pipeline_with(memory.clone(), Arc::new(ScriptedMock::new()), Some(d.join("sessions")));
    let mut logs = Vec::new();
    for (i, uc) in UseCase::EVALUATED.into_iter().enumerate() {
        logs.push(common::session(&p, uc, 0, 50 + i as u64));
    }

    let m1 = d.join("m1.ndjson");
    memory.persist(&m1).map_err(|e| e.to_string())?;
    let loaded = MemoryStore::load(&m1, Arc::new(MockEmbedder::new())).map_err(|e| e.to_string())?;
    ensure!(loaded.lessons() == memory.lessons(), "memory reload differs");
    let m2 = d.join("m2.ndjson");
    loaded.persist(&m2).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&m1).unwrap();
    ensure!(bytes == std::fs::read(&m2).unwrap(), "memory re-persist not byte-identical");

    for s in &logs {
        let path = s.log_path.as_ref().ok_or("session log not persisted")?;
        let back = SessionLog::load(path).map_err(|e| e.to_string())?;
        ensure!(back == s.log, "session {} reload differs", s.log.session_id);
        let again = back.persist(&d.join("again")).map_err(|e| e.to_string())?;
        ensure!(
            std::fs::read(path).unwrap() == std::fs::read(&again).unwrap(),
            "session {} re-persist not byte-identical",
            s.log.session_id
        );
    }

    // Corruption: every truncation fails whole, and nothing half-loaded escapes.
    let mut cuts = 0;
    for cut in (1..bytes.len() - 1).step_by(97) {
        let bad = d.join("bad.ndjson");
        std::fs::write(&bad, &bytes[..cut]).unwrap();
        ensure!(
            MemoryStore::load(&bad, Arc::new(MockEmbedder::new())).is_err(),
            "memory truncated at byte {cut} loaded"
        );
        cuts += 1;
    }
    let log_path = logs[0].log_path.clone().unwrap();
    let log_bytes = std::fs::read(&log_path).unwrap();
    for cut in (1..log_bytes.len() - 2).step_by(61) {
        let bad = d.join("bad.json");
        std::fs::write(&bad, &log_bytes[..cut]).unwrap();
        ensure!(SessionLog::load(&bad).is_err(), "session truncated at byte {cut} loaded");
        cuts += 1;
    }
    // A failed open leaves the file untouched for a retry.
    let bad = d.join("keep.ndjson");
    std::fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
    ensure!(MemoryStore::open(&bad, Arc::new(MockEmbedder::new())).is_err(), "half file opened");
    ensure!(std::fs::read(&bad).unwrap() == bytes[..bytes.len() / 2], "failed open modified the file");

    Ok(format!(
        "{} lessons and {} sessions byte-stable; {cuts} truncations rejected",
        memory.len(),
        logs.len()
    ))
}
