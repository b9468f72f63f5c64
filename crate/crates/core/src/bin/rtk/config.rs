use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use rtk_core::analyzer::AnalyzerConfig;
use rtk_core::scoring::{Bm25Params, QlParams, QltOptions};
use rtk_core::thesaurus::CandidateSpec;

use crate::UsageError;

pub const CONFIG_ENV: &str = "RTK_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub analyzer: AnalyzerSettings,
    pub bm25: Bm25Params,
    pub ql: QlParams,
    pub qlt: QltOptions,
    pub candidates: CandidateSpec,
    pub paths: Paths,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 42,
            threads: None,
            analyzer: AnalyzerSettings::default(),
            bm25: Bm25Params::default(),
            ql: QlParams::default(),
            qlt: QltOptions::default(),
            candidates: CandidateSpec::default(),
            paths: Paths::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerSettings {
    pub lowercase: bool,
    pub stem: bool,
    /// Word-list file replacing the built-in stopwords.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    pub no_stopwords: bool,
}

impl Default for AnalyzerSettings {
    fn default() -> Self {
        AnalyzerSettings {
            lowercase: true,
            stem: true,
            stopwords: None,
            no_stopwords: false,
        }
    }
}

impl AnalyzerSettings {
    pub fn build(&self) -> anyhow::Result<AnalyzerConfig> {
        let mut cfg = AnalyzerConfig::default().with_stemming(self.stem);
        cfg.lowercase = self.lowercase;
        if let Some(path) = &self.stopwords {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading stopwords {}", path.display()))?;
            cfg = cfg.with_stopwords_text(&text);
        }
        if self.no_stopwords {
            cfg = cfg.without_stopwords();
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thesaurus: Option<PathBuf>,
}

impl Config {
    /// Reads the file named by `--config`, else by `RTK_CONFIG`, else
    /// returns defaults.
    pub fn load(explicit: Option<&Path>) -> anyhow::Result<Config> {
        let from_env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        let Some(path) = explicit.map(Path::to_path_buf).or(from_env) else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.bm25.validate().map_err(|e| UsageError(e.to_string()))?;
        self.ql.validate().map_err(|e| UsageError(e.to_string()))?;
        self.candidates.validate().map_err(|e| UsageError(e.to_string()))?;
        if self.threads == Some(0) {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        Ok(())
    }

    /// Settings that shape results, as one JSON line. Thread count is
    /// omitted because it never changes output.
    pub fn header_json(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn echo(&self) {
        eprintln!("effective config: {}", serde_json::to_string(self).expect("config serializes"));
    }

    pub fn require_index(&self, flag: Option<&PathBuf>) -> anyhow::Result<PathBuf> {
        flag.or(self.paths.index.as_ref())
            .cloned()
            .ok_or_else(|| UsageError("missing required flag --index".into()).into())
    }

    pub fn thesaurus_path(&self, flag: Option<&PathBuf>) -> Option<PathBuf> {
        flag.or(self.paths.thesaurus.as_ref()).cloned()
    }
}
