//! Platform configuration: agent instructions, guardrail lists, the scripted
//! rule table and engine settings. A copy is compiled in; a directory with
//! the same layout overrides it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{default_profiles, AgentProfile, Guardrail, Limits, SUPERVISOR};
use crate::job_engine::EngineConstants;
use crate::model::{RuleLoadError, ScriptedModel};
use crate::observability::{config_payload, roster_table, ConfigPayload, LineageError};
use crate::tools::roster::Specialist;

pub const ENGINE_FILE: &str = "engine.json";
pub const RULES_FILE: &str = "scripted_rules.txt";
pub const INJECTION_FILE: &str = "guardrails/injection.txt";
pub const UNSAFE_FILE: &str = "guardrails/unsafe.txt";
pub const TOPICS_FILE: &str = "guardrails/topics.txt";

const BUNDLED: [(&str, &str); 10] = [
    (
        "agents/supervisor.md",
        include_str!("../config/agents/supervisor.md"),
    ),
    (
        "agents/molecule.md",
        include_str!("../config/agents/molecule.md"),
    ),
    ("agents/lab.md", include_str!("../config/agents/lab.md")),
    (
        "agents/analysis.md",
        include_str!("../config/agents/analysis.md"),
    ),
    (
        "agents/report.md",
        include_str!("../config/agents/report.md"),
    ),
    (
        INJECTION_FILE,
        include_str!("../config/guardrails/injection.txt"),
    ),
    (UNSAFE_FILE, include_str!("../config/guardrails/unsafe.txt")),
    (TOPICS_FILE, include_str!("../config/guardrails/topics.txt")),
    (ENGINE_FILE, include_str!("../config/engine.json")),
    (RULES_FILE, include_str!("../config/scripted_rules.txt")),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file '{0}' is missing")]
    Missing(String),
    #[error("{file}: {message}")]
    Invalid { file: String, message: String },
    #[error(transparent)]
    Rules(#[from] RuleLoadError),
    #[error(transparent)]
    Read(#[from] LineageError),
}

/// Tunable numbers, from `engine.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub jitter_fraction: f64,
    pub hplc_noise: f64,
    pub approval_ttl_s: f64,
    pub context_budget_tokens: usize,
    pub max_steps: usize,
    pub max_handoff_depth: usize,
    pub memory_top_k: usize,
    pub memory_min_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformConfig {
    files: BTreeMap<String, String>,
    settings: Settings,
}

impl PlatformConfig {
    pub fn bundled() -> Self {
        let files = BUNDLED
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self::from_files(files).expect("bundled config is valid")
    }

    /// Reads every file under `dir`; all bundled files must be present.
    pub fn load(dir: &Path) -> Result<Self, ConfigError> {
        Self::from_files(config_payload(dir)?.files)
    }

    pub fn from_files(files: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some((missing, _)) = BUNDLED.iter().find(|(k, _)| !files.contains_key(*k)) {
            return Err(ConfigError::Missing(missing.to_string()));
        }
        let settings: Settings =
            serde_json::from_str(&files[ENGINE_FILE]).map_err(|e| ConfigError::Invalid {
                file: ENGINE_FILE.into(),
                message: e.to_string(),
            })?;
        if settings.max_steps == 0
            || settings.context_budget_tokens == 0
            || !(0.0..1.0).contains(&settings.jitter_fraction)
        {
            return Err(ConfigError::Invalid {
                file: ENGINE_FILE.into(),
                message: "max_steps and context_budget_tokens must be positive and jitter_fraction in [0, 1)".into(),
            });
        }
        ScriptedModel::parse(&files[RULES_FILE])?;
        Ok(Self { files, settings })
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    pub fn file(&self, rel: &str) -> Option<&str> {
        self.files.get(rel).map(String::as_str)
    }

    pub fn settings(&self) -> Settings {
        self.settings
    }

    pub fn instructions(&self) -> BTreeMap<String, String> {
        std::iter::once(SUPERVISOR)
            .chain(Specialist::ALL.iter().map(|s| s.as_str()))
            .map(|a| (a.to_string(), self.files[&format!("agents/{a}.md")].clone()))
            .collect()
    }

    pub fn profiles(&self) -> BTreeMap<String, AgentProfile> {
        default_profiles(&self.instructions())
    }

    pub fn guardrail(&self) -> Guardrail {
        Guardrail::from_rules(
            &self.files[INJECTION_FILE],
            &self.files[UNSAFE_FILE],
            &self.files[TOPICS_FILE],
        )
    }

    pub fn scripted_model(&self) -> ScriptedModel {
        ScriptedModel::parse(&self.files[RULES_FILE]).expect("rules validated on load")
    }

    pub fn limits(&self) -> Limits {
        Limits {
            max_steps: self.settings.max_steps,
            max_handoff_depth: self.settings.max_handoff_depth,
            context_budget_tokens: self.settings.context_budget_tokens,
            memory_top_k: self.settings.memory_top_k,
            memory_min_score: self.settings.memory_min_score,
        }
    }

    pub fn engine_constants(&self) -> EngineConstants {
        EngineConstants {
            jitter_fraction: self.settings.jitter_fraction,
            hplc_noise: self.settings.hplc_noise,
            approval_ttl_s: self.settings.approval_ttl_s,
        }
    }

    /// The content that config lineage hashes: every file plus the rosters.
    pub fn payload(&self) -> ConfigPayload {
        ConfigPayload {
            files: self.files.clone(),
            rosters: roster_table(),
        }
    }
}
