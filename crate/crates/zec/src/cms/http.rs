//! Networked mode for the community monitor: a small JSON-over-HTTP server
//! wrapping a [`SharedCms`], and a client that implements
//! [`CommunityMonitor`] against it. Floats are printed in shortest
//! round-trip form, so wire values carry well beyond the guaranteed nine
//! significant digits — in practice they survive bit-exactly.

use super::{CmsError, CommunityMonitor, MembershipToken, SharedCms, StatusReport, PROTOCOL_VERSION};
use serde_json::{json, Value};
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;
use tiny_http::{Header, Method, Request, Response, Server};

/// Ceiling on any single client call; turns a dead or wedged peer into a
/// transport error instead of an indefinite block.
const CALL_TIMEOUT: Duration = Duration::from_secs(10);

/// Listening HTTP front end; dropping it stops the worker thread.
pub struct CmsServer {
    server: Arc<Server>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl CmsServer {
    /// Binds 127.0.0.1:`port` (0 picks a free port) and serves `cms`.
    pub fn start(cms: SharedCms, port: u16) -> Result<CmsServer, CmsError> {
        let server =
            Arc::new(Server::http(("127.0.0.1", port)).map_err(|e| CmsError::Transport(e.to_string()))?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| CmsError::Transport("server has no ip listen address".into()))?;
        let worker = std::thread::spawn({
            let server = Arc::clone(&server);
            let mut cms = cms;
            move || {
                for request in server.incoming_requests() {
                    serve_one(&mut cms, request);
                }
            }
        });
        Ok(CmsServer { server, addr, worker: Some(worker) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for CmsServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn serve_one(cms: &mut SharedCms, mut request: Request) {
    let method = request.method().clone();
    let url = request.url().to_string();
    let mut body = String::new();
    let _ = request.as_reader().read_to_string(&mut body);
    let (status, payload) = dispatch(cms, &method, &url, &body);
    let header: Header = "Content-Type: application/json".parse().expect("static header is valid");
    let response = Response::from_string(payload.to_string()).with_status_code(status).with_header(header);
    let _ = request.respond(response);
}

fn dispatch(cms: &mut SharedCms, method: &Method, url: &str, body: &str) -> (u16, Value) {
    let (path, query) = url.split_once('?').unwrap_or((url, ""));
    match (method, path) {
        (Method::Post, "/agents") => {
            let Some(agent_id) = parse_json(body).and_then(|v| v["agent_id"].as_str().map(String::from))
            else {
                return bad_request("body must be a JSON object with a string `agent_id`");
            };
            respond(cms.join(&agent_id).map(|t| json!({ "agent_id": t.agent_id, "joined_at": t.joined_at })))
        }
        (Method::Get, "/agents") => respond(cms.list().map(|agents| json!({ "agents": agents }))),
        (Method::Delete, _) if path.starts_with("/agents/") => {
            let agent_id = &path["/agents/".len()..];
            respond(cms.leave(agent_id).map(|()| json!({ "agent_id": agent_id })))
        }
        (Method::Post, "/status") => {
            let Some(report) = parse_json(body).and_then(|v| serde_json::from_value::<StatusReport>(v).ok())
            else {
                return bad_request("body must be a JSON status report");
            };
            respond(cms.post_status(&report).map(|()| json!({ "agent_id": report.agent_id, "slot": report.slot })))
        }
        (Method::Get, "/community/status") => match slot_param(query) {
            Some(slot) => respond(
                cms.community_status(slot).map(|s| json!({ "slot": slot, "community_status_kwh": s })),
            ),
            None => bad_request("missing or malformed `slot` query parameter"),
        },
        (Method::Get, "/community/reward") => match slot_param(query) {
            Some(slot) => respond(cms.global_reward(slot).map(|r| json!({ "slot": slot, "reward_kwh": r }))),
            None => bad_request("missing or malformed `slot` query parameter"),
        },
        _ => (404, envelope_err("not_found", &format!("no route for {method} {path}"), json!({}))),
    }
}

fn parse_json(body: &str) -> Option<Value> {
    serde_json::from_str(body).ok()
}

fn slot_param(query: &str) -> Option<u64> {
    query.split('&').find_map(|kv| kv.strip_prefix("slot=")).and_then(|v| v.parse().ok())
}

fn respond(result: Result<Value, CmsError>) -> (u16, Value) {
    match result {
        Ok(payload) => {
            let mut map = serde_json::Map::new();
            map.insert("protocol_version".into(), json!(PROTOCOL_VERSION));
            map.insert("ok".into(), json!(true));
            if let Value::Object(fields) = payload {
                map.extend(fields);
            }
            (200, Value::Object(map))
        }
        Err(e) => {
            let (status, code, fields) = match &e {
                CmsError::DuplicateJoin(id) => (409, "duplicate_join", json!({ "agent_id": id })),
                CmsError::UnknownAgent(id) => (404, "unknown_agent", json!({ "agent_id": id })),
                CmsError::InvalidAgentId(id) => (400, "invalid_agent_id", json!({ "agent_id": id })),
                CmsError::SlotRegression { agent, slot, last } => {
                    (409, "slot_regression", json!({ "agent_id": agent, "slot": slot, "last": last }))
                }
                CmsError::ConflictingReport { agent, slot } => {
                    (409, "conflicting_report", json!({ "agent_id": agent, "slot": slot }))
                }
                CmsError::NoData(slot) => (404, "no_data", json!({ "slot": slot })),
                CmsError::InvalidReport(_) => (400, "invalid_report", json!({})),
                CmsError::Transport(_) => (502, "transport", json!({})),
            };
            (status, envelope_err(code, &e.to_string(), fields))
        }
    }
}

fn bad_request(message: &str) -> (u16, Value) {
    (400, envelope_err("bad_request", message, json!({})))
}

fn envelope_err(code: &str, message: &str, fields: Value) -> Value {
    let mut error = serde_json::Map::new();
    error.insert("code".into(), json!(code));
    error.insert("message".into(), json!(message));
    if let Value::Object(extra) = fields {
        error.extend(extra);
    }
    json!({ "protocol_version": PROTOCOL_VERSION, "ok": false, "error": error })
}

/// HTTP client presenting the remote service through [`CommunityMonitor`].
pub struct HttpCms {
    agent: ureq::Agent,
    base: String,
}

impl HttpCms {
    pub fn connect(base_url: &str) -> HttpCms {
        // Non-2xx responses carry a structured error envelope; keep them as
        // responses instead of transport errors so the body can be decoded.
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(CALL_TIMEOUT))
            .build()
            .new_agent();
        HttpCms { agent, base: base_url.trim_end_matches('/').to_string() }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn get(&self, path: &str) -> Result<Value, CmsError> {
        decode(self.agent.get(self.url(path)).call())
    }

    fn delete(&self, path: &str) -> Result<Value, CmsError> {
        decode(self.agent.delete(self.url(path)).call())
    }

    fn post(&self, path: &str, body: &impl serde::Serialize) -> Result<Value, CmsError> {
        decode(self.agent.post(self.url(path)).send_json(body))
    }
}

fn decode(result: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<Value, CmsError> {
    let mut response = result.map_err(|e| CmsError::Transport(e.to_string()))?;
    let status = response.status().as_u16();
    let value: Value = response
        .body_mut()
        .read_json()
        .map_err(|e| CmsError::Transport(format!("undecodable response body: {e}")))?;
    match value["protocol_version"].as_u64() {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        other => return Err(CmsError::Transport(format!("unsupported protocol version {other:?}"))),
    }
    if value["ok"].as_bool() == Some(true) {
        return Ok(value);
    }
    let error = &value["error"];
    let message = error["message"].as_str().unwrap_or("unexplained failure");
    let agent_id = || error["agent_id"].as_str().unwrap_or_default().to_string();
    let slot = || error["slot"].as_u64().unwrap_or_default();
    Err(match error["code"].as_str().unwrap_or_default() {
        "duplicate_join" => CmsError::DuplicateJoin(agent_id()),
        "unknown_agent" => CmsError::UnknownAgent(agent_id()),
        "invalid_agent_id" => CmsError::InvalidAgentId(agent_id()),
        "slot_regression" => CmsError::SlotRegression {
            agent: agent_id(),
            slot: slot(),
            last: error["last"].as_u64().unwrap_or_default(),
        },
        "conflicting_report" => CmsError::ConflictingReport { agent: agent_id(), slot: slot() },
        "no_data" => CmsError::NoData(slot()),
        "invalid_report" => CmsError::InvalidReport(message.to_string()),
        _ => CmsError::Transport(format!("HTTP {status}: {message}")),
    })
}

fn field_f64(value: &Value, key: &str) -> Result<f64, CmsError> {
    value[key].as_f64().ok_or_else(|| CmsError::Transport(format!("response is missing numeric `{key}`")))
}

impl CommunityMonitor for HttpCms {
    fn join(&mut self, agent_id: &str) -> Result<MembershipToken, CmsError> {
        let value = self.post("/agents", &json!({ "agent_id": agent_id }))?;
        let joined_at = value["joined_at"]
            .as_u64()
            .ok_or_else(|| CmsError::Transport("join response is missing `joined_at`".into()))?;
        Ok(MembershipToken { agent_id: agent_id.to_string(), joined_at })
    }

    fn leave(&mut self, agent_id: &str) -> Result<(), CmsError> {
        self.delete(&format!("/agents/{agent_id}")).map(|_| ())
    }

    fn list(&self) -> Result<Vec<String>, CmsError> {
        let value = self.get("/agents")?;
        value["agents"]
            .as_array()
            .map(|ids| ids.iter().filter_map(|v| v.as_str().map(String::from)).collect())
            .ok_or_else(|| CmsError::Transport("list response is missing `agents`".into()))
    }

    fn post_status(&mut self, report: &StatusReport) -> Result<(), CmsError> {
        self.post("/status", report).map(|_| ())
    }

    fn community_status(&self, slot: u64) -> Result<f64, CmsError> {
        field_f64(&self.get(&format!("/community/status?slot={slot}"))?, "community_status_kwh")
    }

    fn global_reward(&self, slot: u64) -> Result<f64, CmsError> {
        field_f64(&self.get(&format!("/community/reward?slot={slot}"))?, "reward_kwh")
    }
}
