//! Blocking HTTP access shared by the live registry, repository and provider backends.
//!
//! Every outbound request goes through [`HttpClient`], which keeps a process-wide
//! request counter. Offline (mock) runs assert that the counter never moves.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use thiserror::Error;

static REQUESTS_ISSUED: AtomicU64 = AtomicU64::new(0);

/// Number of HTTP requests issued by this process so far.
pub fn requests_issued() -> u64 {
    REQUESTS_ISSUED.load(Ordering::SeqCst)
}

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("HTTP {status} from {url}")]
    Status { url: String, status: u16 },
    #[error("transport failure for {url}: {message}")]
    Transport { url: String, message: String },
}

impl HttpError {
    pub fn status(&self) -> Option<u16> {
        match self {
            HttpError::Status { status, .. } => Some(*status),
            HttpError::Transport { .. } => None,
        }
    }

    /// Transport failures, throttling and server errors are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            HttpError::Transport { .. } => true,
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
        }
    }
}

#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    user_agent: String,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("user_agent", &self.user_agent).finish()
    }
}

impl Default for HttpClient {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl HttpClient {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: config.into(),
            user_agent: concat!("cveforge/", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }

    pub fn get_text(&self, url: &str, headers: &[(&str, &str)]) -> Result<String, HttpError> {
        let bytes = self.get_bytes(url, headers)?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    pub fn get_bytes(&self, url: &str, headers: &[(&str, &str)]) -> Result<Vec<u8>, HttpError> {
        REQUESTS_ISSUED.fetch_add(1, Ordering::SeqCst);
        let mut req = self.agent.get(url).header("User-Agent", &self.user_agent);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let mut resp = req.call().map_err(|e| map_err(url, e))?;
        resp.body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| map_err(url, e))
    }

    pub fn post_json(
        &self,
        url: &str,
        headers: &[(&str, &str)],
        body: &serde_json::Value,
    ) -> Result<String, HttpError> {
        REQUESTS_ISSUED.fetch_add(1, Ordering::SeqCst);
        let mut req = self
            .agent
            .post(url)
            .header("User-Agent", &self.user_agent)
            .header("Content-Type", "application/json");
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let mut resp = req.send(body.to_string()).map_err(|e| map_err(url, e))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| map_err(url, e))
    }
}

fn map_err(url: &str, err: ureq::Error) -> HttpError {
    match err {
        ureq::Error::StatusCode(status) => HttpError::Status {
            url: url.to_string(),
            status,
        },
        other => HttpError::Transport {
            url: url.to_string(),
            message: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retryable_classification() {
        let s = |status| HttpError::Status {
            url: "u".into(),
            status,
        };
        assert!(s(503).is_retryable());
        assert!(s(429).is_retryable());
        assert!(!s(404).is_retryable());
        assert!(HttpError::Transport {
            url: "u".into(),
            message: "reset".into()
        }
        .is_retryable());
    }
}
