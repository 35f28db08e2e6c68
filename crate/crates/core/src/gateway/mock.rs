use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::templates::{RenderedPrompt, TemplateId};
use super::{BackendProfile, Completion, Transport, TransportError};

type Responder = Arc<dyn Fn(&RenderedPrompt) -> Option<String> + Send + Sync>;

/// One line of a mock fixture file.
///
/// `prompt_sha256` keys on the exact rendered prompt. `prompt_contains`
/// (optionally restricted to one `template`) matches by substring and is
/// consulted only when no hash matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateId>,
    pub completion: String,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Deterministic backend for tests and offline runs.
#[derive(Clone, Default)]
pub struct MockTransport {
    by_hash: HashMap<String, String>,
    rules: Vec<FixtureEntry>,
    responder: Option<Responder>,
}

impl MockTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Answers with the prompt's `sql` binding when it has one, otherwise
    /// with the whole prompt.
    pub fn echo() -> Self {
        Self::new().with_responder(|p| Some(p.binding("sql").unwrap_or(p.text()).to_string()))
    }

    pub fn with_fixture(mut self, prompt: &str, completion: impl Into<String>) -> Self {
        self.by_hash.insert(sha256_hex(prompt), completion.into());
        self
    }

    pub fn with_entry(mut self, entry: FixtureEntry) -> Self {
        match &entry.prompt_sha256 {
            Some(h) => {
                self.by_hash.insert(h.to_lowercase(), entry.completion);
            }
            None => self.rules.push(entry),
        }
        self
    }

    pub fn with_responder(
        mut self,
        f: impl Fn(&RenderedPrompt) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.responder = Some(Arc::new(f));
        self
    }

    /// Load a JSONL fixture file.
    pub fn from_jsonl(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut mock = Self::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), n + 1),
                )
            })?;
            mock = mock.with_entry(entry);
        }
        Ok(mock)
    }

    fn lookup(&self, prompt: &RenderedPrompt) -> Option<String> {
        if let Some(hit) = self.by_hash.get(&sha256_hex(prompt.text())) {
            return Some(hit.clone());
        }
        let rule = self.rules.iter().find(|r| {
            r.template.is_none_or(|t| t == prompt.template)
                && r.prompt_contains
                    .as_deref()
                    .is_none_or(|needle| prompt.text().contains(needle))
        });
        if let Some(rule) = rule {
            return Some(rule.completion.clone());
        }
        self.responder.as_ref().and_then(|f| f(prompt))
    }
}

impl Transport for MockTransport {
    fn send(
        &self,
        _: &BackendProfile,
        prompt: &RenderedPrompt,
    ) -> Result<Completion, TransportError> {
        self.lookup(prompt).map(Completion::text).ok_or_else(|| {
            TransportError::Fatal(format!(
                "no fixture for {} prompt sha256={}",
                prompt.template,
                sha256_hex(prompt.text())
            ))
        })
    }
}

/// Wraps a transport and keeps every prompt that reached it.
pub struct RecordingTransport<T> {
    inner: T,
    sent: Mutex<Vec<(BackendProfile, RenderedPrompt)>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            sent: Mutex::new(Vec::new()),
        }
    }

    pub fn sent(&self) -> Vec<(BackendProfile, RenderedPrompt)> {
        self.sent.lock().unwrap().clone()
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(
        &self,
        profile: &BackendProfile,
        prompt: &RenderedPrompt,
    ) -> Result<Completion, TransportError> {
        self.sent
            .lock()
            .unwrap()
            .push((profile.clone(), prompt.clone()));
        self.inner.send(profile, prompt)
    }
}
