//! `aura.toml`. Every key is optional; endpoints can be overridden from the
//! environment (`AURA_BACKEND_ENDPOINT`, `AURA_BACKEND_MODEL`,
//! `AURA_EMBEDDER_ENDPOINT`, `AURA_EMBEDDER_MODEL`, `AURA_BIND`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backend {
    pub kind: Kind,
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
}

impl Default for Backend {
    fn default() -> Self {
        Self {
            kind: Kind::Mock,
            endpoint: "http://127.0.0.1:11434/api/chat".into(),
            model: "llama3".into(),
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Embedder {
    pub kind: Kind,
    pub endpoint: String,
    pub model: String,
    pub dimension: usize,
    pub timeout_secs: u64,
}

impl Default for Embedder {
    fn default() -> Self {
        Self {
            kind: Kind::Mock,
            endpoint: "http://127.0.0.1:11434/api/embed".into(),
            model: "nomic-embed-text".into(),
            dimension: aura_memory::MOCK_DIMENSION,
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub memory: PathBuf,
    pub sessions: PathBuf,
    /// Normative model file; fitted on the fly when absent.
    pub model: PathBuf,
    /// Knowledge corpus directory; the bundled corpus when unset.
    pub corpus: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            memory: "data/lessons.ndjson".into(),
            sessions: "data/sessions".into(),
            model: "data/model.json".into(),
            corpus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Detector {
    pub p_level: f64,
    pub debounce: usize,
    pub epsilon: f64,
    pub window: usize,
}

impl Default for Detector {
    fn default() -> Self {
        Self {
            p_level: 0.99,
            debounce: aura_detect::DEFAULT_DEBOUNCE,
            epsilon: 1e-6,
            window: aura_detect::DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: String,
    pub tick_ms: u64,
    pub scenario: String,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            tick_ms: 100,
            scenario: "compass_heading-v0-s1".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: Backend,
    pub embedder: Embedder,
    pub paths: Paths,
    pub detector: Detector,
    pub service: ServiceSection,
}

impl Config {
    /// Reads `path`, or the defaults when `path` is None. Relative paths in
    /// the file resolve against the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut cfg = match path {
            None => Config::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                let mut cfg: Config = toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?;
                if let Some(base) = p.parent() {
                    cfg.resolve(base);
                }
                cfg
            }
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.memory);
        fix(&mut self.paths.sessions);
        fix(&mut self.paths.model);
        if let Some(c) = &mut self.paths.corpus {
            fix(c);
        }
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("AURA_BACKEND_ENDPOINT") {
            self.backend.endpoint = v;
        }
        if let Some(v) = get("AURA_BACKEND_MODEL") {
            self.backend.model = v;
        }
        if let Some(v) = get("AURA_EMBEDDER_ENDPOINT") {
            self.embedder.endpoint = v;
        }
        if let Some(v) = get("AURA_EMBEDDER_MODEL") {
            self.embedder.model = v;
        }
        if let Some(v) = get("AURA_BIND") {
            self.service.bind = v;
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let d = &self.detector;
        if !(d.p_level > 0.0 && d.p_level < 1.0) {
            return Err(format!("detector.p_level {} outside (0, 1)", d.p_level));
        }
        if d.debounce == 0 || d.window == 0 {
            return Err("detector.debounce and detector.window must be >= 1".into());
        }
        if !(d.epsilon >= 0.0) {
            return Err("detector.epsilon must be >= 0".into());
        }
        if self.embedder.dimension == 0 {
            return Err("embedder.dimension must be >= 1".into());
        }
        if let Some(c) = &self.paths.corpus {
            if !c.is_dir() {
                return Err(format!("paths.corpus {} is not a directory", c.display()));
            }
        }
        Ok(())
    }
}
