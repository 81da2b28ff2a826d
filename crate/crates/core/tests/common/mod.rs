#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use aura_agents::{ChatBackend, ScriptedMock};
use aura_core::orchestrator::{run_pipeline, Pipeline, PipelineConfig, SessionOutcome};
use aura_core::scenarios::{for_use_case, UseCase};
use aura_core::telemetry::fit_default_model;
use aura_core::ScriptedOperator;
use aura_detect::NormativeModel;
use aura_knowledge::CorpusIndex;
use aura_memory::{MemoryStore, MockEmbedder};

pub fn model() -> Arc<NormativeModel> {
    static M: OnceLock<Arc<NormativeModel>> = OnceLock::new();
    M.get_or_init(|| Arc::new(fit_default_model(0.99).unwrap())).clone()
}

pub fn corpus() -> Arc<CorpusIndex> {
    Arc::new(CorpusIndex::bundled())
}

pub fn empty_memory() -> Arc<MemoryStore> {
    Arc::new(MemoryStore::new(Arc::new(MockEmbedder::new())))
}

pub fn pipeline_with(memory: Arc<MemoryStore>, backend: Arc<dyn ChatBackend>, dir: Option<PathBuf>) -> Pipeline {
    Pipeline {
        model: model(),
        memory,
        corpus: Some(corpus()),
        backend,
        config: PipelineConfig::default(),
        sessions_dir: dir,
    }
}

pub fn pipeline(memory: Arc<MemoryStore>) -> Pipeline {
    pipeline_with(memory, Arc::new(ScriptedMock::new()), None)
}

/// One scripted session of `uc`.
pub fn session(p: &Pipeline, uc: UseCase, variant: usize, seed: u64) -> SessionOutcome {
    let mut op = ScriptedOperator::for_use_case(uc);
    let run = run_pipeline(p, &for_use_case(uc, seed, variant), &mut op).unwrap();
    assert_eq!(run.sessions.len(), 1, "{}", run.scenario_id);
    run.sessions.into_iter().next().unwrap()
}
