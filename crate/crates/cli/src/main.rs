//! `aura` command line. Failures print one line, `error[<code>]: <message>`,
//! and exit with status 1.

mod config;

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use aura_agents::{ChatBackend, HttpChat, Role, ScriptedMock};
use aura_core::eval::{self, Condition, EvalSetup};
use aura_core::operator::{ConsoleOperator, OperatorChannel};
use aura_core::orchestrator::{run_pipeline, Pipeline, PipelineConfig};
use aura_core::scenarios::{self, nominal, UseCase, NOMINAL_FIT_SEEDS};
use aura_core::telemetry::fit_from_scenarios;
use aura_core::{inject_premission, record_metrics, ScriptedOperator, SessionLog};
use aura_detect::{NormativeModel, Regularization};
use aura_knowledge::CorpusIndex;
use aura_memory::{Embedder, HttpEmbedder, MemoryStore, MockEmbedder};
use aura_twin::{run_scenario, write_ndjson, Scenario};

use config::{Config, Kind};

#[derive(Parser)]
#[command(name = "aura", version, about = "Residual monitoring with agent-assisted diagnosis")]
struct Cli {
    /// Configuration file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the normative residual model on nominal missions.
    Fit {
        /// Nominal mission seeds, as START..END.
        #[arg(long, default_value = "1000..1020")]
        seeds: String,
        /// Override the mission length in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Fit on these scenarios (ids or JSON files) instead.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Output path; defaults to paths.model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and write paired telemetry as NDJSON.
    Simulate {
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline on one scenario.
    Run {
        scenario: String,
        /// Answer with the scripted operator for the scenario's use case
        /// instead of prompting.
        #[arg(long)]
        scripted: bool,
    },
    /// Serve the console API over a live scenario.
    Serve {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        tick_ms: Option<u64>,
    },
    /// Print a stored session transcript.
    Replay { session: PathBuf },
    /// Distill a validated historical session into memory.
    Premission { log: PathBuf },
    /// Evaluation protocol.
    Eval(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Prime paths.memory with the five priming sessions.
    #[arg(long, conflicts_with = "phase2")]
    phase1: bool,
    /// Compare conditions on novel scenarios.
    #[arg(long)]
    phase2: bool,
    /// first | post; both when omitted.
    #[arg(long, requires = "phase2")]
    condition: Option<String>,
    #[arg(short = 'n', default_value_t = 5)]
    n: usize,
    /// CSV of per-run rows.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing memory file in phase 1.
    #[arg(long)]
    force: bool,
}

struct Failure {
    code: &'static str,
    message: String,
}

fn fail(code: &'static str, message: impl ToString) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

macro_rules! code {
    ($code:literal) => {
        |e| fail($code, e)
    };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = Config::load(cli.config.as_deref())
        .map_err(code!("config"))
        .and_then(|cfg| dispatch(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let one_line = f.message.replace('\n', " ");
            eprintln!("error[{}]: {one_line}", f.code);
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command, cfg: &Config) -> Result<(), Failure> {
    match cmd {
        Command::Fit {
            seeds,
            duration,
            scenarios,
            out,
        } => cmd_fit(cfg, &seeds, duration, &scenarios, out),
        Command::Simulate { scenario, out } => cmd_simulate(&scenario, out),
        Command::Run { scenario, scripted } => cmd_run(cfg, &scenario, scripted),
        Command::Serve { scenario, bind, tick_ms } => cmd_serve(cfg, scenario, bind, tick_ms),
        Command::Replay { session } => cmd_replay(&session),
        Command::Premission { log } => cmd_premission(cfg, &log),
        Command::Eval(args) => cmd_eval(cfg, args),
    }
}

/// A shipped scenario id, or a scenario JSON file.
fn load_scenario(spec: &str) -> Result<Scenario, Failure> {
    if spec.ends_with(".json") {
        let text = std::fs::read_to_string(spec).map_err(|e| fail("io", format!("{spec}: {e}")))?;
        return Scenario::from_json(&text).map_err(code!("scenario"));
    }
    scenarios::by_id(spec).ok_or_else(|| fail("scenario", format!("unknown scenario id {spec}")))
}

fn parse_range(s: &str) -> Result<std::ops::Range<u64>, Failure> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| fail("usage", format!("seed range {s} is not START..END")))?;
    let a: u64 = a.parse().map_err(code!("usage"))?;
    let b: u64 = b.parse().map_err(code!("usage"))?;
    if a >= b {
        return Err(fail("usage", format!("empty seed range {s}")));
    }
    Ok(a..b)
}

fn write_atomic(path: &Path, text: &str) -> Result<(), Failure> {
    let io = |e: io::Error| fail("io", format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

fn cmd_fit(
    cfg: &Config,
    seeds: &str,
    duration: Option<f64>,
    ids: &[String],
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut runs: Vec<Scenario> = if ids.is_empty() {
        parse_range(seeds)?.map(nominal).collect()
    } else {
        ids.iter().map(|s| load_scenario(s)).collect::<Result<_, _>>()?
    };
    if let Some(d) = duration {
        runs.iter_mut().for_each(|s| s.duration = d);
    }
    let reg = Regularization::TraceScaled(cfg.detector.epsilon);
    let model = fit_from_scenarios(&runs, cfg.detector.p_level, reg).map_err(code!("fit"))?;
    let path = out.unwrap_or_else(|| cfg.paths.model.clone());
    write_atomic(&path, &model.to_json())?;
    println!(
        "fitted {} samples from {} runs; threshold {:.3} at p={} -> {}",
        model.sample_count(),
        runs.len(),
        model.threshold(),
        model.p_level(),
        path.display()
    );
    Ok(())
}

fn cmd_simulate(spec: &str, out: Option<PathBuf>) -> Result<(), Failure> {
    let sc = load_scenario(spec)?;
    let records = run_scenario(&sc).map_err(code!("sim"))?;
    match out {
        Some(p) => {
            let f = std::fs::File::create(&p).map_err(|e| fail("io", format!("{}: {e}", p.display())))?;
            write_ndjson(BufWriter::new(f), &records).map_err(code!("io"))?;
            eprintln!("{} ticks -> {}", records.len(), p.display());
        }
        // A closed downstream pipe (`| head`) is not a failure.
        None => match write_ndjson(BufWriter::new(io::stdout().lock()), &records) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(fail("io", e)),
            _ => {}
        },
    }
    Ok(())
}

fn model(cfg: &Config) -> Result<Arc<NormativeModel>, Failure> {
    let path = &cfg.paths.model;
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| fail("io", format!("{}: {e}", path.display())))?;
        return NormativeModel::from_json(&text).map(Arc::new).map_err(code!("model"));
    }
    let runs: Vec<Scenario> = NOMINAL_FIT_SEEDS.map(nominal).collect();
    let reg = Regularization::TraceScaled(cfg.detector.epsilon);
    fit_from_scenarios(&runs, cfg.detector.p_level, reg)
        .map(Arc::new)
        .map_err(code!("fit"))
}

fn backend(cfg: &Config) -> Result<Arc<dyn ChatBackend>, Failure> {
    Ok(match cfg.backend.kind {
        Kind::Mock => Arc::new(ScriptedMock::new()),
        Kind::Http => Arc::new(
            HttpChat::new(
                cfg.backend.endpoint.clone(),
                cfg.backend.model.clone(),
                Duration::from_secs(cfg.backend.timeout_secs),
            )
            .map_err(code!("backend"))?,
        ),
    })
}

fn embedder(cfg: &Config) -> Result<Arc<dyn Embedder>, Failure> {
    Ok(match cfg.embedder.kind {
        Kind::Mock => Arc::new(MockEmbedder::new()),
        Kind::Http => Arc::new(
            HttpEmbedder::new(
                cfg.embedder.endpoint.clone(),
                cfg.embedder.model.clone(),
                cfg.embedder.dimension,
                Duration::from_secs(cfg.embedder.timeout_secs),
            )
            .map_err(code!("embedder"))?,
        ),
    })
}

fn corpus(cfg: &Config) -> Result<Arc<CorpusIndex>, Failure> {
    match &cfg.paths.corpus {
        Some(dir) => CorpusIndex::load_dir(dir).map(Arc::new).map_err(code!("corpus")),
        None => Ok(Arc::new(CorpusIndex::bundled())),
    }
}

/// The lesson store at paths.memory, created empty if missing.
fn memory(cfg: &Config) -> Result<Arc<MemoryStore>, Failure> {
    MemoryStore::open(&cfg.paths.memory, embedder(cfg)?)
        .map(Arc::new)
        .map_err(code!("memory"))
}

fn pipeline_config(cfg: &Config) -> PipelineConfig {
    PipelineConfig {
        debounce: cfg.detector.debounce,
        window: cfg.detector.window,
        ..PipelineConfig::default()
    }
}

fn pipeline(cfg: &Config) -> Result<Pipeline, Failure> {
    Ok(Pipeline {
        model: model(cfg)?,
        memory: memory(cfg)?,
        corpus: Some(corpus(cfg)?),
        backend: backend(cfg)?,
        config: pipeline_config(cfg),
        sessions_dir: Some(cfg.paths.sessions.clone()),
    })
}

fn use_case_of(scenario_id: &str) -> Option<UseCase> {
    UseCase::parse(scenario_id.split("-v").next()?)
}

fn cmd_run(cfg: &Config, spec: &str, scripted: bool) -> Result<(), Failure> {
    let sc = load_scenario(spec)?;
    let p = pipeline(cfg)?;
    let mut operator: Box<dyn OperatorChannel> = if scripted {
        let uc = use_case_of(&sc.id)
            .ok_or_else(|| fail("usage", format!("no operator script for scenario {}", sc.id)))?;
        Box::new(ScriptedOperator::for_use_case(uc))
    } else {
        Box::new(ConsoleOperator::new(io::BufReader::new(io::stdin()), io::stdout()))
    };
    let run = run_pipeline(&p, &sc, operator.as_mut()).map_err(|e| fail("pipeline", e))?;
    if run.sessions.is_empty() {
        println!("{}: {} ticks, no anomaly", run.scenario_id, run.ticks);
    }
    for s in &run.sessions {
        let m = record_metrics(&s.log);
        println!(
            "session {}: mode={:?} turns={} css={} validated={} diagnosis={}",
            s.log.session_id,
            s.log.characterisation.mode,
            m.turns,
            m.css.map_or("-".into(), |c| c.to_string()),
            s.log.operator_validated,
            s.log.final_diagnosis.as_ref().map_or("-", |d| d.cause.as_str()),
        );
        if let Some(p) = &s.log_path {
            println!("  log: {}", p.display());
        }
        match (&s.lesson_id, &s.rejected) {
            (Some(id), _) => println!("  lesson stored: {id}"),
            (None, Some(why)) => println!("  no lesson: {why}"),
            _ => {}
        }
    }
    Ok(())
}

fn cmd_serve(cfg: &Config, scenario: Option<String>, bind: Option<String>, tick_ms: Option<u64>) -> Result<(), Failure> {
    let _ = tracing_subscriber::fmt().with_writer(io::stderr).try_init();
    let sc = load_scenario(scenario.as_deref().unwrap_or(&cfg.service.scenario))?;
    let addr: std::net::SocketAddr = bind
        .as_deref()
        .unwrap_or(&cfg.service.bind)
        .parse()
        .map_err(code!("config"))?;
    let svc = aura_service::Service::start(
        pipeline(cfg)?,
        aura_service::ServiceConfig {
            scenario: sc,
            tick_interval: Duration::from_millis(tick_ms.unwrap_or(cfg.service.tick_ms)),
        },
    )
    .map_err(code!("service"))?;
    let rt = tokio::runtime::Runtime::new().map_err(code!("service"))?;
    rt.block_on(svc.serve(addr)).map_err(code!("service"))
}

fn load_log(path: &Path) -> Result<SessionLog, Failure> {
    SessionLog::load(path).map_err(code!("session"))
}

fn cmd_replay(path: &Path) -> Result<(), Failure> {
    let log = load_log(path)?;
    match replay(&log) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(fail("io", e)),
        _ => Ok(()),
    }
}

fn replay(log: &SessionLog) -> io::Result<()> {
    let mut out = io::stdout().lock();
    let w = |out: &mut io::StdoutLock, s: String| writeln!(out, "{s}");
    w(&mut out, format!("session {} (scenario {})", log.session_id, log.scenario_id))?;
    w(&mut out, format!("signature: {}", log.signature.to_text()))?;
    w(&mut out, format!("characterisation [{:?}]: {}", log.characterisation.mode, log.characterisation.summary_text))?;
    for m in &log.transcript {
        let who = match m.role {
            Role::System => continue,
            Role::Tool => "context",
            Role::Agent => "agent",
            Role::Operator => "operator",
        };
        w(&mut out, format!("[t={:.1}] {who}: {}", m.t, m.content))?;
    }
    let m = record_metrics(&log);
    w(
        &mut out,
        format!(
            "turns={} css={} confidence={:.2} validated={} diagnosis={}",
            m.turns,
            m.css.map_or("-".into(), |c| c.to_string()),
            log.operator_confidence,
            log.operator_validated,
            log.final_diagnosis.as_ref().map_or("-", |d| d.cause.as_str())
        ),
    )
}

fn cmd_premission(cfg: &Config, path: &Path) -> Result<(), Failure> {
    let log = load_log(path)?;
    let store = memory(cfg)?;
    let corpus = corpus(cfg)?;
    let lesson = inject_premission(&log, &store, Some(&corpus)).map_err(code!("distill"))?;
    println!("stored {} ({}) in {}", lesson.id, lesson.root_cause, cfg.paths.memory.display());
    Ok(())
}

fn eval_setup(cfg: &Config) -> Result<EvalSetup, Failure> {
    Ok(EvalSetup {
        model: model(cfg)?,
        corpus: Some(corpus(cfg)?),
        backend: backend(cfg)?,
        config: pipeline_config(cfg),
    })
}

fn cmd_eval(cfg: &Config, args: EvalArgs) -> Result<(), Failure> {
    if args.phase1 == args.phase2 {
        return Err(fail("usage", "choose one of --phase1 or --phase2"));
    }
    let setup = eval_setup(cfg)?;
    let path = &cfg.paths.memory;
    if args.phase1 {
        if path.exists() && !args.force {
            return Err(fail(
                "usage",
                format!("{} exists; priming needs a fresh memory (use --force to replace)", path.display()),
            ));
        }
        if path.exists() {
            std::fs::remove_file(path).map_err(|e| fail("io", format!("{}: {e}", path.display())))?;
        }
        let p1 = eval::run_phase1(&setup, memory(cfg)?).map_err(code!("eval"))?;
        for s in &p1.sessions {
            println!(
                "{}: turns={} css={} -> {}",
                s.log.session_id,
                s.log.turn_count,
                s.log.css.map_or("-".into(), |c| c.to_string()),
                s.lesson_id.as_deref().unwrap_or("-")
            );
        }
        println!("primed {} lessons in {}", p1.memory.len(), path.display());
        return Ok(());
    }

    let conditions = match args.condition.as_deref() {
        None => vec![Condition::First, Condition::Post],
        Some(c) => vec![Condition::parse(c).ok_or_else(|| fail("usage", format!("unknown condition {c}")))?],
    };
    let primed = if conditions.contains(&Condition::Post) {
        if !path.exists() {
            return Err(fail(
                "eval",
                format!("{} not found; run `aura eval --phase1` first", path.display()),
            ));
        }
        Some(MemoryStore::load(path, embedder(cfg)?).map_err(code!("memory"))?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for c in conditions {
        rows.extend(eval::run_phase2(&setup, c, primed.as_ref(), args.n).map_err(code!("eval"))?);
    }
    if let Some(out) = &args.out {
        eval::write_csv_file(&rows, out).map_err(code!("io"))?;
    }
    print!("{}", eval::summarize(&rows).to_table());
    Ok(())
}
