//! Blocking JSON-over-HTTP with bounded retries, shared by the remote embedder
//! and the live oracle.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Endpoint {
    pub url: String,
    /// Name of the environment variable holding the bearer token.
    pub key_env: Option<String>,
    pub max_attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Endpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Endpoint {
            url: url.into(),
            key_env: None,
            max_attempts: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }

    fn api_key(&self) -> Result<Option<String>> {
        match &self.key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| Error::Transport {
                message: format!("environment variable `{var}` is not set"),
                status: None,
                attempts: 0,
                retriable: false,
            }),
        }
    }

    /// POSTs `body` as JSON and decodes the JSON response. 429 and 5xx
    /// responses and connection failures are retried with doubling backoff.
    pub fn post_json<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R> {
        let key = self.api_key()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let attempts = self.max_attempts.max(1);
        let mut delay = self.backoff;
        let mut last: Option<Error> = None;
        for attempt in 1..=attempts {
            let mut req = agent.post(&self.url).header("Content-Type", "application/json");
            if let Some(k) = &key {
                req = req.header("Authorization", &format!("Bearer {k}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    return resp.body_mut().read_json::<R>().map_err(|e| Error::Transport {
                        message: format!("undecodable response body: {e}"),
                        status: Some(resp.status().as_u16()),
                        attempts: attempt,
                        retriable: false,
                    });
                }
                Err(ureq::Error::StatusCode(code)) => {
                    let retriable = code == 429 || code >= 500;
                    let err = Error::Transport {
                        message: format!("endpoint {} answered with an error status", self.url),
                        status: Some(code),
                        attempts: attempt,
                        retriable,
                    };
                    if !retriable {
                        return Err(err);
                    }
                    last = Some(err);
                }
                Err(e) => {
                    last = Some(Error::Transport {
                        message: e.to_string(),
                        status: None,
                        attempts: attempt,
                        retriable: true,
                    });
                }
            }
            if attempt < attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
