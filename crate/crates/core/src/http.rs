//! Minimal blocking JSON-over-HTTP client shared by the generation and
//! embedding clients.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HttpError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned status {0}")]
    Status(u16),
    #[error("response body violates schema: {0}")]
    Schema(String),
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    retries: u32,
}

impl JsonClient {
    pub fn new(timeout: Duration, retries: u32) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, retries }
    }

    /// POST a JSON body and decode a JSON reply. Transport failures and 5xx
    /// replies are retried; 4xx and schema errors are not.
    pub fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        body: &B,
    ) -> Result<R, HttpError> {
        let mut last = HttpError::Transport("no attempt made".into());
        for _ in 0..=self.retries {
            match self.agent.post(url).send_json(body) {
                Err(e) => last = HttpError::Transport(e.to_string()),
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status != 200 {
                        last = HttpError::Status(status);
                        if status < 500 {
                            break;
                        }
                        continue;
                    }
                    let text = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| HttpError::Transport(e.to_string()))?;
                    return serde_json::from_str(&text)
                        .map_err(|e| HttpError::Schema(e.to_string()));
                }
            }
        }
        Err(last)
    }
}
