//! Model Context Protocol server for the geocard catalog.
//!
//! Messages are JSON-RPC 2.0 objects, one per line, read from an input stream
//! and answered in arrival order on an output stream. Tool arguments are
//! validated against each tool's advertised input schema before any handler
//! runs; domain failures come back as tool results flagged `isError`.

mod schema;
mod tools;

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::SystemTime;

use geocard_core::catalog::Catalog;
use geocard_core::skills::SkillIndex;
use serde_json::{json, Map, Value};

pub use schema::validate;
pub use tools::{descriptors, ToolDescriptor, ToolError, DEFAULT_SESSION};

pub const SERVER_NAME: &str = "geocard";
pub const SERVER_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Protocol revisions this server can speak; the first is preferred.
pub const PROTOCOL_VERSIONS: [&str; 3] = ["2025-06-18", "2025-03-26", "2024-11-05"];

pub const INSTRUCTIONS: &str = "geocard exposes verified geotechnical method cards. \
Before using any calculation tool, call geo_recommend_skills with a short description of the problem, \
then read the best match with geo_get_skill and follow its workflow. \
Use geo_get_method to inspect a card's variables and units before calling geo_evaluate or geo_evaluate_with_units. \
Report results together with the trace steps and the card sources.";

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;

/// Per-session defaults, kept in memory for the life of the server.
#[derive(Debug, Clone)]
pub struct Session {
    pub created: SystemTime,
    pub defaults: BTreeMap<String, Value>,
}

impl Session {
    fn new() -> Self {
        Session {
            created: SystemTime::now(),
            defaults: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RpcError {
    code: i64,
    message: String,
    data: Option<Value>,
}

impl RpcError {
    fn new(code: i64, message: impl Into<String>) -> Self {
        RpcError {
            code,
            message: message.into(),
            data: None,
        }
    }
}

pub struct Server {
    catalog: Catalog,
    skills: SkillIndex,
    sessions: BTreeMap<String, Session>,
}

impl Server {
    pub fn new(catalog: Catalog, skills: SkillIndex) -> Self {
        Server {
            catalog,
            skills,
            sessions: BTreeMap::new(),
        }
    }

    /// Bundled content plus the directories named by the environment.
    pub fn from_env() -> Self {
        Server::new(Catalog::from_env(), SkillIndex::from_env())
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    /// Handles one line of input. Returns the response line, or `None` for
    /// notifications and blank lines.
    pub fn handle_line(&mut self, line: &str) -> Option<String> {
        if line.trim().is_empty() {
            return None;
        }
        let response = match serde_json::from_str::<Value>(line) {
            Ok(message) => self.handle_message(message)?,
            Err(e) => error_response(Value::Null, RpcError::new(PARSE_ERROR, format!("parse error: {e}"))),
        };
        Some(serde_json::to_string(&response).expect("responses serialize"))
    }

    /// Reads requests until end of input, writing one response line each.
    pub fn serve(&mut self, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
        for line in input.lines() {
            if let Some(response) = self.handle_line(&line?) {
                writeln!(output, "{response}")?;
                output.flush()?;
            }
        }
        Ok(())
    }

    fn handle_message(&mut self, message: Value) -> Option<Value> {
        let Value::Object(mut msg) = message else {
            return Some(error_response(
                Value::Null,
                RpcError::new(INVALID_REQUEST, "request must be a JSON object"),
            ));
        };
        let id = msg.remove("id");
        let valid_id = matches!(id, None | Some(Value::Null | Value::Number(_) | Value::String(_)));
        let echo = if valid_id { id.clone().unwrap_or(Value::Null) } else { Value::Null };
        if msg.get("jsonrpc").and_then(Value::as_str) != Some("2.0") || !valid_id {
            return Some(error_response(
                echo,
                RpcError::new(INVALID_REQUEST, "expected a JSON-RPC 2.0 request"),
            ));
        }
        let Some(Value::String(method)) = msg.remove("method") else {
            // a message with a result or error is a response to us; ignore it
            if id.is_some() && !msg.contains_key("result") && !msg.contains_key("error") {
                return Some(error_response(echo, RpcError::new(INVALID_REQUEST, "missing method")));
            }
            return None;
        };
        let params = match msg.remove("params") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(p)) => p,
            Some(_) => {
                return id.map(|_| error_response(echo, RpcError::new(INVALID_PARAMS, "params must be an object")));
            }
        };
        let outcome = catch_unwind(AssertUnwindSafe(|| self.dispatch(&method, &params)))
            .unwrap_or_else(|_| Err(RpcError::new(INTERNAL_ERROR, "internal error")));
        // notifications never get a response, even on error
        id?;
        Some(match outcome {
            Ok(result) => json!({ "jsonrpc": "2.0", "id": echo, "result": result }),
            Err(e) => error_response(echo, e),
        })
    }

    fn dispatch(&mut self, method: &str, params: &Map<String, Value>) -> Result<Value, RpcError> {
        match method {
            "initialize" => Ok(initialize(params)),
            "notifications/initialized" | "notifications/cancelled" | "ping" => Ok(json!({})),
            "tools/list" => Ok(json!({ "tools": descriptors() })),
            "tools/call" => self.call_tool(params),
            other => Err(RpcError::new(METHOD_NOT_FOUND, format!("method not found: {other}"))),
        }
    }

    fn call_tool(&mut self, params: &Map<String, Value>) -> Result<Value, RpcError> {
        let Some(name) = params.get("name").and_then(Value::as_str) else {
            return Err(RpcError::new(INVALID_PARAMS, "tools/call requires a string `name`"));
        };
        let descriptor = descriptors()
            .into_iter()
            .find(|d| d.name == name)
            .ok_or_else(|| RpcError::new(INVALID_PARAMS, format!("unknown tool `{name}`")))?;
        let empty = Value::Object(Map::new());
        let args = params.get("arguments").unwrap_or(&empty);
        let violations = schema::validate(&descriptor.input_schema, args);
        if !violations.is_empty() {
            return Err(RpcError {
                code: INVALID_PARAMS,
                message: format!("invalid arguments for `{name}`"),
                data: Some(json!({ "tool": name, "errors": violations })),
            });
        }
        let args = args.as_object().expect("schema requires an object");
        let ctx = tools::Context {
            catalog: &self.catalog,
            skills: &self.skills,
            sessions: &mut self.sessions,
        };
        let (body, is_error) = match tools::call(ctx, name, args) {
            Ok(body) => (body, false),
            Err(e) => (e.to_value(), true),
        };
        let text = serde_json::to_string(&body).map_err(|e| RpcError::new(INTERNAL_ERROR, e.to_string()))?;
        Ok(json!({
            "content": [{ "type": "text", "text": text }],
            "structuredContent": body,
            "isError": is_error
        }))
    }
}

fn initialize(params: &Map<String, Value>) -> Value {
    let requested = params.get("protocolVersion").and_then(Value::as_str);
    let version = requested
        .and_then(|r| PROTOCOL_VERSIONS.iter().find(|v| **v == r))
        .unwrap_or(&PROTOCOL_VERSIONS[0]);
    json!({
        "protocolVersion": version,
        "capabilities": { "tools": { "listChanged": false } },
        "serverInfo": { "name": SERVER_NAME, "version": SERVER_VERSION },
        "instructions": INSTRUCTIONS
    })
}

fn error_response(id: Value, e: RpcError) -> Value {
    let mut error = Map::new();
    error.insert("code".into(), json!(e.code));
    error.insert("message".into(), json!(e.message));
    if let Some(data) = e.data {
        error.insert("data".into(), data);
    }
    json!({ "jsonrpc": "2.0", "id": id, "error": error })
}
