//! The JSON configuration file and the policy flag.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use sqlveil::gateway::{
    Backend, BackendProfile, HttpTransport, MockTransport, Role, TemplateId, TemplateSet, Transport,
};
use sqlveil::schema::{Ranker, SidecarClient};
use sqlveil::sql::Pipeline;
use sqlveil::{PipelineConfig, PrivacyPolicy};

use crate::CliError;

fn default_timeout_secs() -> u64 {
    60
}

/// One model endpoint. `endpoint` is an `http(s)://` chat-completion URL,
/// `mock:echo`, or `mock:<file.jsonl>` resolved against the config file's
/// directory. API keys come from the environment only.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    /// Defaults to the pipeline temperature.
    pub temperature: Option<f64>,
    /// Defaults to the pipeline retry budget.
    pub max_retries: Option<u32>,
    pub backoff_ms: Option<u64>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    pub untrusted: Option<BackendConfig>,
    pub trusted: Option<BackendConfig>,
    pub attacker: Option<BackendConfig>,
    /// Base URL of the ranking sidecar; the lexical ranker is used without it.
    pub ranker_url: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub backends: BackendsConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    pub policy: Option<PrivacyPolicy>,
    /// Template overrides keyed by template name.
    #[serde(default)]
    pub templates: BTreeMap<String, String>,
}

/// A loaded configuration together with the directory mock fixtures are
/// resolved against.
#[derive(Debug, Clone, Default)]
pub struct Config {
    pub file: ConfigFile,
    pub base: PathBuf,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Config {
                file: ConfigFile::default(),
                base: PathBuf::from("."),
            });
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: ConfigFile = serde_json::from_str(&text).map_err(|e| CliError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        file.pipeline
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        Ok(Config { file, base })
    }

    pub fn backend(&self, role: Role) -> Result<Option<Backend>, CliError> {
        let backends = &self.file.backends;
        let entry = match role {
            Role::UntrustedLlm => &backends.untrusted,
            Role::TrustedSlm => &backends.trusted,
            Role::Attacker => &backends.attacker,
        };
        entry
            .as_ref()
            .map(|b| self.build_backend(role, b))
            .transpose()
    }

    pub fn require_backend(&self, role: Role) -> Result<Backend, CliError> {
        self.backend(role)?.ok_or_else(|| {
            let name = match role {
                Role::UntrustedLlm => "untrusted",
                Role::TrustedSlm => "trusted",
                Role::Attacker => "attacker",
            };
            CliError::Config(format!("no `backends.{name}` entry in the configuration"))
        })
    }

    fn build_backend(&self, role: Role, config: &BackendConfig) -> Result<Backend, CliError> {
        let pipeline = &self.file.pipeline;
        let mut profile = BackendProfile::new(role, config.endpoint.clone(), config.model.clone());
        profile.temperature = config.temperature.unwrap_or(pipeline.temperature);
        profile.max_retries = config.max_retries.unwrap_or(pipeline.max_retries);
        if let Some(ms) = config.backoff_ms {
            profile.backoff = Duration::from_millis(ms);
        }
        let transport: Arc<dyn Transport> = match config.endpoint.strip_prefix("mock:") {
            Some("echo") => Arc::new(MockTransport::echo()),
            Some(file) => {
                let path = self.base.join(file);
                Arc::new(MockTransport::from_jsonl(&path).map_err(|e| CliError::io(&path, e))?)
            }
            None if config.endpoint.starts_with("http://")
                || config.endpoint.starts_with("https://") =>
            {
                Arc::new(
                    HttpTransport::from_env(role, Duration::from_secs(config.timeout_secs))
                        .map_err(|e| CliError::Config(e.to_string()))?,
                )
            }
            None => {
                return Err(CliError::Config(format!(
                    "unsupported endpoint `{}`",
                    config.endpoint
                )))
            }
        };
        Ok(Backend::new(profile, transport))
    }

    pub fn templates(&self) -> Result<TemplateSet, CliError> {
        let mut set = TemplateSet::default();
        for (name, text) in &self.file.templates {
            let id = TemplateId::from_name(name)
                .ok_or_else(|| CliError::Config(format!("unknown template `{name}`")))?;
            set = set.with_override(id, text.clone());
        }
        Ok(set)
    }

    pub fn ranker(&self) -> Result<Ranker, CliError> {
        match &self.file.backends.ranker_url {
            None => Ok(Ranker::Lexical),
            Some(url) => {
                let timeout = Duration::from_secs(self.file.pipeline.sidecar_timeout_secs);
                SidecarClient::new(url.clone(), timeout)
                    .map(Ranker::Sidecar)
                    .map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }

    /// A pipeline over `untrusted`, with the trusted backend, ranker,
    /// templates, pipeline knobs and `policy` taken from the configuration.
    pub fn pipeline(
        &self,
        untrusted: Backend,
        policy: PrivacyPolicy,
        ablate: &[String],
    ) -> Result<Pipeline, CliError> {
        let mut pipeline = Pipeline::new(untrusted);
        pipeline.config = self.file.pipeline.clone();
        for stage in ablate {
            pipeline.config.disable(stage);
        }
        pipeline.policy = policy;
        pipeline.templates = self.templates()?;
        pipeline.trusted = self.backend(Role::TrustedSlm)?;
        pipeline.ranker = self.ranker()?;
        Ok(pipeline)
    }

    /// The policy named on the command line, else the configured one, else
    /// the full policy.
    pub fn policy(&self, flag: Option<&PolicyArg>) -> Result<PrivacyPolicy, CliError> {
        match flag {
            None => Ok(self.file.policy.clone().unwrap_or_else(PrivacyPolicy::full)),
            Some(PolicyArg::Full) => Ok(PrivacyPolicy::full()),
            Some(PolicyArg::Category(None)) => Ok(PrivacyPolicy::default_categories()),
            Some(PolicyArg::Category(Some(list))) => Ok(PrivacyPolicy::category_based(list)),
            Some(PolicyArg::Custom(path)) => custom_policy(path),
        }
    }
}

/// A placeholder for commands that never reach the untrusted model: every
/// call fails.
pub fn unused_untrusted() -> Backend {
    Backend::new(
        BackendProfile::new(Role::UntrustedLlm, "none", "none"),
        Arc::new(MockTransport::new()),
    )
}

/// Value of `--policy`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyArg {
    Full,
    /// `category` uses the default categories; `category:a,b` names them.
    Category(Option<Vec<String>>),
    Custom(PathBuf),
}

pub fn parse_policy(arg: &str) -> Result<PolicyArg, String> {
    match arg.split_once(':') {
        None if arg == "full" => Ok(PolicyArg::Full),
        None if arg == "category" => Ok(PolicyArg::Category(None)),
        Some(("category", list)) => {
            let names: Vec<String> = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            if names.is_empty() {
                Err("`category:` needs at least one category".to_string())
            } else {
                Ok(PolicyArg::Category(Some(names)))
            }
        }
        Some(("custom", path)) if !path.is_empty() => Ok(PolicyArg::Custom(PathBuf::from(path))),
        _ => Err(format!(
            "expected `full`, `category[:a,b]` or `custom:<file>`, got `{arg}`"
        )),
    }
}

/// Fields of a custom policy file; every field is optional.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomPolicyFile {
    #[serde(default)]
    tables: Vec<String>,
    /// `"table.column"` strings.
    #[serde(default)]
    columns: Vec<String>,
    #[serde(default)]
    literal_values: bool,
}

fn custom_policy(path: &Path) -> Result<PrivacyPolicy, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: CustomPolicyFile = serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut columns = Vec::new();
    for qualified in file.columns {
        let (t, c) = qualified.split_once('.').ok_or_else(|| {
            CliError::Config(format!("policy column `{qualified}` is not `table.column`"))
        })?;
        columns.push((t.to_string(), c.to_string()));
    }
    Ok(PrivacyPolicy::custom(
        file.tables,
        columns,
        file.literal_values,
    ))
}

pub fn parse_stage(arg: &str) -> Result<String, String> {
    let stage = arg.trim();
    if sqlveil::model::STAGES.contains(&stage) {
        Ok(stage.to_string())
    } else {
        Err(format!(
            "unknown stage `{stage}`; expected one of {}",
            sqlveil::model::STAGES.join(", ")
        ))
    }
}
