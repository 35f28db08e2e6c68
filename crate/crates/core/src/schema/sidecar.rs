use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("ranker request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("ranker answered HTTP {0}")]
    Status(u16),
    #[error("ranker returned {got} scores for {expected} candidates")]
    Length { expected: usize, got: usize },
    #[error("ranker returned a non-finite score")]
    NonFinite,
}

#[derive(Serialize)]
struct RankRequest<'a> {
    question: &'a str,
    candidates: &'a [String],
}

#[derive(Deserialize)]
struct RankResponse {
    scores: Vec<f64>,
}

/// Client for an external relevance scorer speaking `POST /rank`.
#[derive(Debug, Clone)]
pub struct SidecarClient {
    base_url: String,
    client: Client,
}

impl SidecarClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Result<Self, SidecarError> {
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client: Client::builder().timeout(timeout).build()?,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Scores for `candidates` (`"table"` or `"table.column: type"`), in
    /// the same order, clamped to `[0, 1]`.
    pub fn rank(&self, question: &str, candidates: &[String]) -> Result<Vec<f64>, SidecarError> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self
            .client
            .post(format!("{}/rank", self.base_url))
            .json(&RankRequest {
                question,
                candidates,
            })
            .send()?;
        if !resp.status().is_success() {
            return Err(SidecarError::Status(resp.status().as_u16()));
        }
        let body: RankResponse = resp.json()?;
        if body.scores.len() != candidates.len() {
            return Err(SidecarError::Length {
                expected: candidates.len(),
                got: body.scores.len(),
            });
        }
        if body.scores.iter().any(|s| !s.is_finite()) {
            return Err(SidecarError::NonFinite);
        }
        Ok(body.scores.into_iter().map(|s| s.clamp(0.0, 1.0)).collect())
    }
}
