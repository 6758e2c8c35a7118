//! Block-program interpreter.
//!
//! The interpreter talks to the robot through a [`Link`]: advertise,
//! publish, subscribe, plus a blocking [`Link::wait_tick`] that returns once
//! per control period (50 ms of simulated time). Every statement that needs
//! the robot to move waits on ticks; everything else runs between them.

mod direct;
mod laws;
mod machine;

use std::fmt;
use std::sync::atomic::AtomicBool;

use serde::Serialize;
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::msg::{json_number, MsgType, RosMessage};
use crate::program::{BlockProgram, Mode, NodePath};

pub use direct::{DirectLink, Logged};
pub use laws::{teleop_key, teleop_twist, wander_twist, Key, TeleopParams, WanderParams};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("not connected")]
    NotConnected,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("connection lost: {0}")]
    Closed(String),
    /// The server answered with a status error.
    #[error("{0}")]
    Rejected(String),
}

/// Messages and key events received since the previous poll.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inbound {
    pub messages: Vec<(String, RosMessage)>,
    pub keys: Vec<Key>,
}

/// The interpreter's view of a bridge session.
pub trait Link {
    /// Opens the connection (standalone mode). Bound links are already
    /// connected and ignore this.
    fn connect(&mut self, url: &str) -> Result<(), LinkError>;
    fn advertise(&mut self, topic: &str, ty: MsgType) -> Result<(), LinkError>;
    fn publish(&mut self, topic: &str, msg: &RosMessage) -> Result<(), LinkError>;
    fn subscribe(&mut self, topic: &str, ty: MsgType) -> Result<(), LinkError>;
    /// Non-blocking drain of everything delivered so far.
    fn poll(&mut self) -> Inbound;
    /// Blocks until the next control tick; returns the simulated time.
    fn wait_tick(&mut self) -> Result<f64, LinkError>;
    /// Simulated time of the latest tick.
    fn now(&self) -> f64;
}

/// Closed-loop manoeuvre tuning for the basic movement blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionParams {
    pub linear_speed: f64,
    pub angular_speed: f64,
    /// Stop commanding once within this distance of the goal (m).
    pub distance_tolerance: f64,
    /// Stop commanding once within this angle of the goal (deg).
    pub angle_tolerance_deg: f64,
    /// Speed below which the robot counts as stopped (m/s and rad/s).
    pub rest_speed: f64,
    /// Final-approach slow-down: commanded speed is `gain × remaining`,
    /// clamped to `[min, max]`.
    pub linear_gain: f64,
    pub angular_gain: f64,
    pub min_linear_speed: f64,
    pub min_angular_speed: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            linear_speed: 0.3,
            angular_speed: 1.0,
            distance_tolerance: 0.01,
            angle_tolerance_deg: 1.0,
            rest_speed: 0.01,
            linear_gain: 2.0,
            angular_gain: 3.0,
            min_linear_speed: 0.04,
            min_angular_speed: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    /// Simulated seconds after which the program is stopped.
    pub max_sim_seconds: f64,
    /// How long to wait for a first (or fresh) sensor message.
    pub sensor_timeout: f64,
    /// Pending messages kept per `on_message` handler (oldest dropped).
    pub handler_queue: usize,
    pub motion: MotionParams,
    pub teleop: TeleopParams,
    pub wander: WanderParams,
    /// Let wander also consider the infrared sensors.
    pub wander_use_ir: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Bound,
            max_sim_seconds: 300.0,
            sensor_timeout: 2.0,
            handler_queue: 10,
            motion: MotionParams::default(),
            teleop: TeleopParams::default(),
            wander: WanderParams::default(),
            wander_use_ir: false,
        }
    }
}

/// Runtime value of an expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Str(String),
    Msg(RosMessage),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Str(_) => "string",
            Value::Msg(_) => "message",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => match json_number(*x) {
                Some(v) => write!(f, "{v}"),
                None => write!(f, "{x}"),
            },
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => f.write_str(s),
            Value::Msg(m) => match m.to_json() {
                Ok(v) => write!(f, "{v}"),
                Err(_) => write!(f, "{m:?}"),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    DivisionByZero,
    Connection,
    UnknownSelector,
    SensorTimeout,
    TypeError,
    InvalidArgument,
    Undeclared,
    /// The bridge refused an operation (e.g. a topic type conflict).
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    pub path: NodePath,
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Stop flag raised by the host.
    Requested,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Finished,
    Stopped(StopReason),
    Error(RunError),
}

impl Termination {
    /// `(kind, data)` of the final `x_program_event`.
    pub fn event(&self) -> (&'static str, Json) {
        match self {
            Termination::Finished => ("finished", json!({"reason": "completed"})),
            Termination::Stopped(StopReason::Requested) => ("finished", json!({"reason": "stopped"})),
            Termination::Stopped(StopReason::TimeLimit) => ("finished", json!({"reason": "time_limit"})),
            Termination::Error(e) => {
                ("error", json!({"path": e.path.to_string(), "code": e.kind, "message": e.message}))
            }
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Termination::Error(_))
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Finished => f.write_str("finished"),
            Termination::Stopped(StopReason::Requested) => f.write_str("stopped"),
            Termination::Stopped(StopReason::TimeLimit) => f.write_str("stopped (time limit)"),
            Termination::Error(e) => write!(f, "error at {e}"),
        }
    }
}

/// Runs `program` to termination. `print` receives the text of every
/// `print` block; `stop` may be raised from any thread and is honoured at
/// the next block boundary or tick. If any motion command was sent, a zero
/// Twist is published before returning.
pub fn execute<L: Link + ?Sized>(
    program: &BlockProgram,
    link: &mut L,
    options: &RunOptions,
    stop: &AtomicBool,
    print: &mut dyn FnMut(&str),
) -> Termination {
    machine::Machine::new(link, options, stop, print).run(program)
}
