use anyhow::{anyhow, Context};
use borelog_core::api::SERVICE_PATH;
use borelog_core::log::{LogError, ResourceSource};
use serde_json::Value;

const MAX_BODY: u64 = 1 << 30;

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

pub fn basic_header(user: &str, pass: &str) -> String {
    borelog_core::api::ApiRequest::get("").basic_auth(user, pass).authorization.expect("basic_auth sets the header")
}

/// `http://host:port` or `http://host:port/v1.1`, to the service root.
fn service_root(endpoint: &str) -> String {
    let base = endpoint.trim_end_matches('/');
    let base = base.strip_suffix(SERVICE_PATH).unwrap_or(base);
    format!("{base}{SERVICE_PATH}")
}

fn decode(status: u16, text: &str) -> (u16, Option<Value>) {
    (status, serde_json::from_str(text).ok())
}

/// POSTs a batch document; returns the id summary.
pub fn post_batch(endpoint: &str, authorization: Option<&str>, doc: &Value) -> anyhow::Result<Value> {
    let url = format!("{}/$batch", service_root(endpoint));
    let mut req = agent().post(&url).header("Content-Type", "application/json");
    if let Some(h) = authorization {
        req = req.header("Authorization", h);
    }
    let mut resp = req.send(serde_json::to_vec(doc)?).with_context(|| format!("POST {url}"))?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().with_config().limit(MAX_BODY).read_to_string()?;
    match decode(status, &text) {
        (201, Some(v)) => Ok(v),
        (status, body) => {
            let detail = body.map_or(text, |b| b["error"].to_string());
            Err(anyhow!("batch rejected with status {status}: {detail}"))
        }
    }
}

/// Reads from a running server.
pub struct HttpSource {
    root: String,
    authorization: Option<String>,
    agent: ureq::Agent,
}

impl HttpSource {
    pub fn new(endpoint: &str, authorization: Option<String>) -> Self {
        Self { root: service_root(endpoint), authorization, agent: agent() }
    }
}

impl ResourceSource for HttpSource {
    fn get(&mut self, target: &str) -> Result<Value, LogError> {
        let url = format!("{}/{target}", self.root);
        let mut req = self.agent.get(&url);
        if let Some(h) = &self.authorization {
            req = req.header("Authorization", h);
        }
        let mut resp = req.call().map_err(|e| LogError::Transport(format!("GET {url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_string()
            .map_err(|e| LogError::Transport(format!("GET {url}: {e}")))?;
        match decode(status, &text) {
            (200, Some(v)) => Ok(v),
            (200, None) => Err(LogError::Malformed(format!("GET {url} returned non-JSON"))),
            (status, body) => Err(LogError::from_status(status, body.as_ref())),
        }
    }
}
