use std::time::Duration;

use super::remote::{RemoteError, Response, Transport};

/// Blocking HTTP transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, RemoteError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| RemoteError::Unreachable(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Response, RemoteError> {
        let response = self
            .client
            .get(url)
            .send()
            .map_err(|e| RemoteError::Unreachable(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| RemoteError::Unreachable(e.to_string()))?;
        Ok(Response { status, body })
    }
}
