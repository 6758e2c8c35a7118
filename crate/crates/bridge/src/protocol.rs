//! Wire format: parsing of inbound ops and construction of outbound frames.
//!
//! Every frame is a JSON object with an `op` field. Requests may carry an
//! `id` of any JSON type; it is echoed on the `status` reply.

use serde_json::{json, Map, Value};
use thiserror::Error;

/// Ops from the rosbridge v2 vocabulary that this bridge deliberately does
/// not implement.
pub const UNSUPPORTED_OPS: [&str; 11] = [
    "call_service",
    "service_response",
    "advertise_service",
    "unadvertise_service",
    "fragment",
    "png",
    "auth",
    "set_level",
    "send_action_goal",
    "cancel_action_goal",
    "advertise_action",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Advertise { topic: String, ty: String },
    Unadvertise { topic: String },
    Publish { topic: String, msg: Value },
    Subscribe { topic: String, ty: Option<String>, queue_length: Option<usize> },
    Unsubscribe { topic: String },
    RunProgram { program: Value },
    StopProgram,
    Key { key: String },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Advertise { .. } => "advertise",
            Op::Unadvertise { .. } => "unadvertise",
            Op::Publish { .. } => "publish",
            Op::Subscribe { .. } => "subscribe",
            Op::Unsubscribe { .. } => "unsubscribe",
            Op::RunProgram { .. } => "x_run_program",
            Op::StopProgram => "x_stop_program",
            Op::Key { .. } => "x_key",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: Option<Value>,
    pub op: Op,
}

/// Reasons a request is refused. The `Display` text becomes the `msg` of
/// the status reply.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BridgeError {
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error("frame must be a JSON object")]
    NotAnObject,
    #[error("missing field: {0}")]
    MissingField(&'static str),
    #[error("field `{field}` must be {expected}")]
    BadField { field: &'static str, expected: &'static str },
    #[error("unknown op: {0}")]
    UnknownOp(String),
    #[error("unsupported op: {0}")]
    UnsupportedOp(String),
    #[error("unsupported compression: {0}")]
    UnsupportedCompression(String),
    #[error("binary frames are not supported")]
    Binary,
    #[error("invalid topic name: {0}")]
    InvalidTopic(String),
    #[error("unknown message type: {0}")]
    UnknownType(String),
    #[error("type conflict on {topic}: registered as {registered}, got {requested}")]
    TypeConflict { topic: String, registered: String, requested: String },
    #[error("unknown topic type for {0}; pass `type` to subscribe")]
    UntypedTopic(String),
    #[error("publish before advertise")]
    PublishBeforeAdvertise,
    #[error("invalid message on {topic}: {reason}")]
    InvalidMessage { topic: String, reason: String },
    #[error("not advertised: {0}")]
    NotAdvertised(String),
    #[error("not subscribed: {0}")]
    NotSubscribed(String),
    #[error("program already running")]
    ProgramRunning,
    #[error("no program running")]
    NoProgram,
    /// Carries the first diagnostic's message.
    #[error("{0}")]
    InvalidProgram(String),
    #[error("unknown key: {0}")]
    UnknownKey(String),
}

/// Parses one text frame. On failure the request id (if recoverable) comes
/// back with the error so the status reply can echo it.
pub fn parse_request(text: &str) -> Result<Request, (Option<Value>, BridgeError)> {
    let value: Value = serde_json::from_str(text).map_err(|e| (None, BridgeError::Malformed(e.to_string())))?;
    let Value::Object(mut obj) = value else {
        return Err((None, BridgeError::NotAnObject));
    };
    let id = obj.remove("id");
    parse_op(&mut obj).map(|op| Request { id: id.clone(), op }).map_err(|e| (id, e))
}

fn parse_op(obj: &mut Map<String, Value>) -> Result<Op, BridgeError> {
    let op = match obj.get("op") {
        None => return Err(BridgeError::MissingField("op")),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(BridgeError::BadField { field: "op", expected: "a string" }),
    };
    Ok(match op.as_str() {
        "advertise" => Op::Advertise { topic: string(obj, "topic")?, ty: string(obj, "type")? },
        "unadvertise" => Op::Unadvertise { topic: string(obj, "topic")? },
        "publish" => {
            let topic = string(obj, "topic")?;
            let msg = obj.remove("msg").ok_or(BridgeError::MissingField("msg"))?;
            Op::Publish { topic, msg }
        }
        "subscribe" => {
            if let Some(c) = obj.get("compression") {
                match c.as_str() {
                    Some("none") => {}
                    Some(other) => return Err(BridgeError::UnsupportedCompression(other.to_string())),
                    None => return Err(BridgeError::BadField { field: "compression", expected: "a string" }),
                }
            }
            let queue_length = match obj.get("queue_length") {
                None | Some(Value::Null) => None,
                Some(v) => match v.as_u64() {
                    Some(n) if n > 0 => Some(n.min(10_000) as usize),
                    _ => return Err(BridgeError::BadField { field: "queue_length", expected: "a positive integer" }),
                },
            };
            Op::Subscribe { topic: string(obj, "topic")?, ty: opt_string(obj, "type")?, queue_length }
        }
        "unsubscribe" => Op::Unsubscribe { topic: string(obj, "topic")? },
        "x_run_program" => {
            Op::RunProgram { program: obj.remove("program").ok_or(BridgeError::MissingField("program"))? }
        }
        "x_stop_program" => Op::StopProgram,
        "x_key" => Op::Key { key: string(obj, "key")? },
        "status" | "x_program_event" => return Err(BridgeError::UnsupportedOp(op)),
        other if UNSUPPORTED_OPS.contains(&other) => return Err(BridgeError::UnsupportedOp(op)),
        _ => return Err(BridgeError::UnknownOp(op)),
    })
}

fn string(obj: &Map<String, Value>, field: &'static str) -> Result<String, BridgeError> {
    opt_string(obj, field)?.ok_or(BridgeError::MissingField(field))
}

fn opt_string(obj: &Map<String, Value>, field: &'static str) -> Result<Option<String>, BridgeError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(BridgeError::BadField { field, expected: "a string" }),
    }
}

pub fn status(level: &str, msg: &str, id: Option<&Value>) -> Value {
    let mut v = json!({"op": "status", "level": level, "msg": msg});
    if let Some(id) = id {
        v["id"] = id.clone();
    }
    v
}

pub fn publish(topic: &str, msg: Value) -> Value {
    json!({"op": "publish", "topic": topic, "msg": msg})
}

pub fn program_event(kind: &str, data: Value) -> Value {
    json!({"op": "x_program_event", "kind": kind, "data": data})
}

pub fn key(name: &str) -> Value {
    json!({"op": "x_key", "key": name})
}
