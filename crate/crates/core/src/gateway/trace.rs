use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::templates::TemplateId;
use super::{Completion, Role, TrustLabel};

/// Where token counts came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenSource {
    Provider,
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub role: Role,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub source: TokenSource,
    pub ok: bool,
    /// Wall-clock latency; kept out of serialized reports so they stay
    /// reproducible.
    #[serde(skip)]
    pub latency: Duration,
}

fn words(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl UsageRecord {
    pub fn for_completion(
        role: Role,
        prompt: &str,
        completion: &Completion,
        latency: Duration,
    ) -> Self {
        match completion.usage {
            Some(u) => Self {
                role,
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
                source: TokenSource::Provider,
                ok: true,
                latency,
            },
            None => Self {
                role,
                prompt_tokens: words(prompt),
                completion_tokens: words(&completion.text),
                source: TokenSource::Whitespace,
                ok: true,
                latency,
            },
        }
    }

    pub fn for_failure(role: Role, prompt: &str, latency: Duration) -> Self {
        Self {
            role,
            prompt_tokens: words(prompt),
            completion_tokens: 0,
            source: TokenSource::Whitespace,
            ok: false,
            latency,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Any record counted by whitespace splitting rather than the provider.
    pub approximate: bool,
}

impl UsageTotals {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn merge(self, other: UsageTotals) -> UsageTotals {
        UsageTotals {
            calls: self.calls + other.calls,
            prompt_tokens: self.prompt_tokens + other.prompt_tokens,
            completion_tokens: self.completion_tokens + other.completion_tokens,
            approximate: self.approximate || other.approximate,
        }
    }
}

/// Append-only record of model calls.
#[derive(Debug, Default)]
pub struct UsageLedger {
    records: Mutex<Vec<UsageRecord>>,
}

impl UsageLedger {
    pub fn record(&self, record: UsageRecord) {
        self.records.lock().unwrap().push(record);
    }

    pub fn records(&self) -> Vec<UsageRecord> {
        self.records.lock().unwrap().clone()
    }

    pub fn totals(&self) -> UsageTotals {
        self.totals_where(|_| true)
    }

    pub fn totals_where(&self, keep: impl Fn(&UsageRecord) -> bool) -> UsageTotals {
        self.records
            .lock()
            .unwrap()
            .iter()
            .filter(|r| keep(r))
            .fold(UsageTotals::default(), |acc, r| UsageTotals {
                calls: acc.calls + 1,
                prompt_tokens: acc.prompt_tokens + r.prompt_tokens,
                completion_tokens: acc.completion_tokens + r.completion_tokens,
                approximate: acc.approximate || r.source == TokenSource::Whitespace,
            })
    }
}

/// One prompt/response pair as sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: Role,
    pub trust: TrustLabel,
    pub template: TemplateId,
    pub prompt: String,
    pub completion: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// A stage fell back to a weaker path.
    Degradation { stage: String, reason: String },
    LeakViolation {
        role: Role,
        template: TemplateId,
        leaked: Vec<String>,
        blocked: bool,
    },
}

/// Per-question record of calls, usage and notable events.
#[derive(Debug, Default)]
pub struct Trace {
    pub ledger: UsageLedger,
    exchanges: Mutex<Vec<Exchange>>,
    events: Mutex<Vec<Event>>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn exchange(&self, exchange: Exchange) {
        self.exchanges.lock().unwrap().push(exchange);
    }

    pub fn event(&self, event: Event) {
        self.events.lock().unwrap().push(event);
    }

    pub fn degrade(&self, stage: &str, reason: impl Into<String>) {
        self.event(Event::Degradation {
            stage: stage.to_string(),
            reason: reason.into(),
        });
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.exchanges.lock().unwrap().clone()
    }

    pub fn events(&self) -> Vec<Event> {
        self.events.lock().unwrap().clone()
    }
}
