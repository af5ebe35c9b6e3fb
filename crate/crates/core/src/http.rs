//! Blocking JSON POST shared by the live LLM and embedding clients.

use std::time::Duration;

use serde_json::Value;

pub(crate) fn post_json(url: &str, bearer: Option<&str>, body: &Value, timeout: Duration) -> Result<Value, String> {
    let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
    let mut req = agent.post(url);
    if let Some(key) = bearer {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(|e| format!("request to {url} failed: {e}"))?;
    resp.body_mut().read_json::<Value>().map_err(|e| format!("response from {url} is not JSON: {e}"))
}
