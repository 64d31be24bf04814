use std::path::{Path, PathBuf};

use congen::decode::DecodeConfig;
use congen::geometry::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Beam,
    /// Penalty-steered constrained beam search.
    Nl,
    Smc,
    /// Returns the first reference; eval only, for checking the harness.
    Echo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Abs,
    Cnf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgramBackend {
    /// Training sentences, one per line.
    pub corpus: PathBuf,
    pub order: usize,
    pub lambda: f64,
}

impl Default for NgramBackend {
    fn default() -> Self {
        NgramBackend { corpus: "data/corpus.txt".into(), order: 3, lambda: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpBackend {
    pub url: String,
    pub timeout_secs: f64,
    pub retries: usize,
}

impl Default for HttpBackend {
    fn default() -> Self {
        HttpBackend { url: "http://127.0.0.1:8080".into(), timeout_secs: 10.0, retries: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Ngram(NgramBackend),
    Http(HttpBackend),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Ngram(NgramBackend::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub style: Style,
    pub shots: Option<PathBuf>,
    pub n_shots: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig { style: Style::Abs, shots: Some("data/shots.jsonl".into()), n_shots: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckerConfig {
    pub lambda: f64,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig { lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Evaluate only the first rows of the dataset.
    pub limit: Option<usize>,
    /// Exit with an error when more rows than this fraction fail.
    pub max_failure_rate: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { limit: None, max_failure_rate: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub lexicon: PathBuf,
    pub ontology: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    /// Directory for reports and embedding dumps.
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: Some("data/dataset.jsonl".into()),
            lexicon: "data/lexicon.json".into(),
            ontology: Some("data/ontology.json".into()),
            gazetteer: Some("data/gazetteer.json".into()),
            output: "out".into(),
        }
    }
}

/// Everything a run needs. Relative paths resolve against the working
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendConfig,
    pub strategy: Strategy,
    pub decode: DecodeConfig,
    pub prompt: PromptConfig,
    pub checker: CheckerConfig,
    pub geometry: TrainConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
    /// Worker threads; 0 means one per core for eval and one elsewhere.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendConfig::default(),
            strategy: Strategy::Smc,
            decode: DecodeConfig::default(),
            prompt: PromptConfig::default(),
            checker: CheckerConfig::default(),
            geometry: TrainConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            if at == "." {
                CliError::Config(format!("{origin}: {}", e.inner()))
            } else {
                CliError::Config(format!("{origin}: key `{at}`: {}", e.inner()))
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.decode.validate().map_err(|e| CliError::Config(format!("decode: {e}")))?;
        self.geometry.validate().map_err(|e| CliError::Config(format!("geometry: {e}")))?;
        if !(self.checker.lambda >= 0.0 && self.checker.lambda.is_finite()) {
            return Err(CliError::Config("checker.lambda must be finite and ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.max_failure_rate) {
            return Err(CliError::Config("eval.max_failure_rate must lie in [0, 1]".into()));
        }
        if self.prompt.n_shots > 0 && self.prompt.shots.is_none() {
            return Err(CliError::Config("prompt.n_shots > 0 needs prompt.shots".into()));
        }
        match &self.backend {
            BackendConfig::Ngram(n) if n.order == 0 => {
                Err(CliError::Config("backend.ngram.order must be at least 1".into()))
            }
            BackendConfig::Http(h) if !(h.timeout_secs > 0.0 && h.timeout_secs.is_finite()) => {
                Err(CliError::Config("backend.http.timeout_secs must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialize")
    }
}
