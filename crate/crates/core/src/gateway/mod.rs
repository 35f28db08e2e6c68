//! Model backends behind one `complete` call.
//!
//! A [`Backend`] pairs a [`BackendProfile`] (role, endpoint, model, trust
//! label) with a [`Transport`]. Untrusted backends only accept prompts that
//! pass a [`LeakGuard`](crate::masking::LeakGuard); this is the single egress
//! path to untrusted endpoints.

mod http;
mod mock;
pub mod templates;
mod trace;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpTransport;
pub use mock::{FixtureEntry, MockTransport, RecordingTransport};
pub use templates::{
    render_prompt, RenderedPrompt, Template, TemplateError, TemplateId, TemplateSet,
};
pub use trace::{Event, Exchange, TokenSource, Trace, UsageLedger, UsageRecord, UsageTotals};

use crate::masking::LeakGuard;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    TrustedSlm,
    UntrustedLlm,
    Attacker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustLabel {
    Trusted,
    Untrusted,
}

impl Role {
    pub fn trust(self) -> TrustLabel {
        match self {
            Role::TrustedSlm => TrustLabel::Trusted,
            Role::UntrustedLlm | Role::Attacker => TrustLabel::Untrusted,
        }
    }

    /// Environment variable holding the API key for this role.
    pub fn api_key_var(self) -> &'static str {
        match self {
            Role::TrustedSlm => "SQLVEIL_TRUSTED_API_KEY",
            Role::UntrustedLlm => "SQLVEIL_UNTRUSTED_API_KEY",
            Role::Attacker => "SQLVEIL_ATTACKER_API_KEY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    pub role: Role,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff", with = "millis")]
    pub backoff: Duration,
}

fn default_backoff() -> Duration {
    Duration::from_millis(500)
}

impl BackendProfile {
    pub fn new(role: Role, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            role,
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            max_retries: 2,
            backoff: default_backoff(),
        }
    }

    /// Derived from the role, so a trusted-SLM profile can never be
    /// labelled untrusted or vice versa.
    pub fn trust(&self) -> TrustLabel {
        self.role.trust()
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// Token counts reported by the provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProviderUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<ProviderUsage>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
}

/// Wire-level delivery of one prompt.
pub trait Transport: Send + Sync {
    fn send(
        &self,
        profile: &BackendProfile,
        prompt: &RenderedPrompt,
    ) -> Result<Completion, TransportError>;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("refused to send prompt to untrusted backend: leaks {}", .leaked.join(", "))]
    Refused { leaked: Vec<String> },
    #[error("untrusted call without a leak guard")]
    MissingGuard,
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("backend error: {0}")]
    Fatal(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl GatewayError {
    pub fn is_leak_refusal(&self) -> bool {
        matches!(
            self,
            GatewayError::Refused { .. } | GatewayError::MissingGuard
        )
    }
}

#[derive(Clone)]
pub struct Backend {
    profile: BackendProfile,
    transport: Arc<dyn Transport>,
    require_guard: bool,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend")
            .field("profile", &self.profile)
            .field("require_guard", &self.require_guard)
            .finish_non_exhaustive()
    }
}

impl Backend {
    pub fn new(profile: BackendProfile, transport: Arc<dyn Transport>) -> Self {
        Self {
            profile,
            transport,
            require_guard: true,
        }
    }

    /// Allow untrusted calls with no guard at all. Only for experiments
    /// that deliberately measure leakage.
    pub fn without_guard_requirement(mut self) -> Self {
        self.require_guard = false;
        self
    }

    pub fn profile(&self) -> &BackendProfile {
        &self.profile
    }

    pub fn role(&self) -> Role {
        self.profile.role
    }

    /// Send `prompt` and return the first completion.
    ///
    /// Untrusted prompts are scanned by `guard` first: a strict guard refuses
    /// the call on any hit, a permissive one records a
    /// [`Event::LeakViolation`] and proceeds. Transient transport failures
    /// are retried up to `max_retries` times with exponential backoff; every
    /// attempt lands in the usage ledger.
    pub fn complete(
        &self,
        prompt: &RenderedPrompt,
        guard: Option<&LeakGuard>,
        trace: &Trace,
    ) -> Result<String, GatewayError> {
        let role = self.profile.role;
        if self.profile.trust() == TrustLabel::Untrusted {
            match guard {
                None if self.require_guard => {
                    trace.event(Event::LeakViolation {
                        role,
                        template: prompt.template,
                        leaked: vec![],
                        blocked: true,
                    });
                    return Err(GatewayError::MissingGuard);
                }
                None => {}
                Some(guard) => {
                    let leaked = guard.scan_prompt(prompt);
                    if !leaked.is_empty() {
                        trace.event(Event::LeakViolation {
                            role,
                            template: prompt.template,
                            leaked: leaked.clone(),
                            blocked: guard.is_strict(),
                        });
                        if guard.is_strict() {
                            return Err(GatewayError::Refused { leaked });
                        }
                    }
                }
            }
        }

        let attempts = self.profile.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            let started = Instant::now();
            let result = self.transport.send(&self.profile, prompt);
            let latency = started.elapsed();
            match result {
                Ok(completion) => {
                    trace.ledger.record(UsageRecord::for_completion(
                        role,
                        prompt.text(),
                        &completion,
                        latency,
                    ));
                    trace.exchange(Exchange {
                        role,
                        trust: role.trust(),
                        template: prompt.template,
                        prompt: prompt.text().to_string(),
                        completion: Some(completion.text.clone()),
                        error: None,
                    });
                    return Ok(completion.text);
                }
                Err(err) => {
                    trace
                        .ledger
                        .record(UsageRecord::for_failure(role, prompt.text(), latency));
                    trace.exchange(Exchange {
                        role,
                        trust: role.trust(),
                        template: prompt.template,
                        prompt: prompt.text().to_string(),
                        completion: None,
                        error: Some(err.to_string()),
                    });
                    match err {
                        TransportError::Fatal(msg) => return Err(GatewayError::Fatal(msg)),
                        TransportError::Transient(msg) => {
                            last = msg;
                            if attempt + 1 < attempts && !self.profile.backoff.is_zero() {
                                std::thread::sleep(
                                    self.profile.backoff * 2u32.saturating_pow(attempt),
                                );
                            }
                        }
                    }
                }
            }
        }
        Err(GatewayError::Unavailable { attempts, last })
    }
}
