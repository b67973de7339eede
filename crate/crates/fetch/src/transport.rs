use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}{message}", status.map(|s| format!("HTTP {s}: ")).unwrap_or_default())]
pub struct TransportError {
    pub status: Option<u16>,
    pub message: String,
}

impl TransportError {
    pub fn status(code: u16) -> Self {
        Self {
            status: Some(code),
            message: "request failed".into(),
        }
    }

    pub fn network(message: impl Into<String>) -> Self {
        Self {
            status: None,
            message: message.into(),
        }
    }

    /// Network failures, rate limiting and server errors are retried;
    /// other client errors are not.
    pub fn is_retryable(&self) -> bool {
        match self.status {
            None => true,
            Some(s) => s == 408 || s == 429 || s >= 500,
        }
    }
}

/// Minimal HTTP surface used by the fetchers.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, timeout: Duration) -> Result<Vec<u8>, TransportError>;
    fn post_form(&self, url: &str, form: &[(&str, &str)], timeout: Duration) -> Result<Vec<u8>, TransportError>;
}

#[derive(Debug, Clone, Default)]
pub struct HttpTransport;

const MAX_BODY_BYTES: u64 = 2 << 30;

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .user_agent(concat!("gert/", env!("CARGO_PKG_VERSION")))
        .build()
        .into()
}

fn convert(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::StatusCode(s) => TransportError::status(s),
        other => TransportError::network(other.to_string()),
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str, timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let mut resp = agent(timeout).get(url).call().map_err(convert)?;
        resp.body_mut().with_config().limit(MAX_BODY_BYTES).read_to_vec().map_err(convert)
    }

    fn post_form(&self, url: &str, form: &[(&str, &str)], timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let mut resp = agent(timeout).post(url).send_form(form.iter().copied()).map_err(convert)?;
        resp.body_mut().with_config().limit(MAX_BODY_BYTES).read_to_vec().map_err(convert)
    }
}
