//! Typed message vocabulary shared by the simulator, the bridge and the
//! interpreter, with its JSON wire encoding.
//!
//! Encoding rules:
//! - field names match the wire layout exactly (`{"linear":{"x":..}}` etc.);
//! - integral floats are written without a fractional part (`0`, not `0.0`),
//!   everything else uses the shortest representation that round-trips;
//! - non-finite numbers are refused;
//! - on decode, unknown fields are ignored and missing fields take the zero
//!   value of their type.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde_json::{Map, Number, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MsgError {
    #[error("non-finite number at `{0}`")]
    NonFinite(String),
    #[error("type mismatch at `{path}`: expected {expected}")]
    TypeMismatch { path: String, expected: &'static str },
    #[error("invalid value at `{path}`: {reason}")]
    InvalidValue { path: String, reason: String },
    #[error("unsupported message type: {0}")]
    UnsupportedType(String),
    #[error("field not found: `{selector}` (valid: {})", valid.join(", "))]
    FieldNotFound { selector: String, valid: Vec<String> },
    #[error("malformed JSON: {0}")]
    Json(String),
}

pub type Result<T, E = MsgError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vector3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vector3 {
    pub const ZERO: Vector3 = Vector3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    /// Rotation about +z by `yaw` radians.
    pub fn from_yaw(yaw: f64) -> Self {
        let half = 0.5 * yaw;
        Self { x: 0.0, y: 0.0, z: half.sin(), w: half.cos() }
    }

    /// Heading in (-π, π].
    pub fn yaw(&self) -> f64 {
        let siny = 2.0 * (self.w * self.z + self.x * self.y);
        let cosy = 1.0 - 2.0 * (self.y * self.y + self.z * self.z);
        let yaw = siny.atan2(cosy);
        if yaw <= -PI {
            PI
        } else {
            yaw
        }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TwistMsg {
    pub linear: Vector3,
    pub angular: Vector3,
}

impl TwistMsg {
    /// Planar command: forward speed and yaw rate.
    pub fn planar(v: f64, omega: f64) -> Self {
        Self { linear: Vector3::new(v, 0.0, 0.0), angular: Vector3::new(0.0, 0.0, omega) }
    }

    pub fn is_zero(&self) -> bool {
        *self == TwistMsg::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiationType {
    #[default]
    Ultrasound = 0,
    Infrared = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RangeMsg {
    pub radiation_type: RadiationType,
    pub field_of_view: f64,
    pub min_range: f64,
    pub max_range: f64,
    pub range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseMsg {
    pub position: Vector3,
    pub orientation: Quaternion,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdometryMsg {
    pub pose: PoseMsg,
    pub twist: TwistMsg,
}

impl OdometryMsg {
    pub fn planar(x: f64, y: f64, theta: f64, v: f64, omega: f64) -> Self {
        Self {
            pose: PoseMsg { position: Vector3::new(x, y, 0.0), orientation: Quaternion::from_yaw(theta) },
            twist: TwistMsg::planar(v, omega),
        }
    }

    pub fn theta(&self) -> f64 {
        self.pose.orientation.yaw()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BumperMsg {
    pub left: bool,
    pub right: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClockMsg {
    pub secs: u64,
    pub nsecs: u32,
}

impl ClockMsg {
    pub fn from_nanos(nanos: u64) -> Self {
        Self { secs: nanos / 1_000_000_000, nsecs: (nanos % 1_000_000_000) as u32 }
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.secs as f64 + self.nsecs as f64 * 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, PartialOrd, Ord, Hash)]
pub enum LedColor {
    #[default]
    Red,
    Green,
    Blue,
    Yellow,
    Cyan,
    Magenta,
    White,
}

impl LedColor {
    pub const ALL: [LedColor; 7] = [
        LedColor::Red,
        LedColor::Green,
        LedColor::Blue,
        LedColor::Yellow,
        LedColor::Cyan,
        LedColor::Magenta,
        LedColor::White,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LedColor::Red => "red",
            LedColor::Green => "green",
            LedColor::Blue => "blue",
            LedColor::Yellow => "yellow",
            LedColor::Cyan => "cyan",
            LedColor::Magenta => "magenta",
            LedColor::White => "white",
        }
    }
}

impl FromStr for LedColor {
    type Err = MsgError;

    fn from_str(s: &str) -> Result<Self> {
        LedColor::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| MsgError::InvalidValue { path: "color".into(), reason: format!("unknown LED color `{s}`") })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LedMsg {
    pub on: bool,
    pub color: LedColor,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl WheelGains {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self { kp, ki, kd }
    }

    pub fn is_valid(&self) -> bool {
        [self.kp, self.ki, self.kd].iter().all(|g| g.is_finite() && *g >= 0.0)
    }
}

/// Gains for both wheels, carried on `/set_pid`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidGainsMsg {
    pub left: WheelGains,
    pub right: WheelGains,
}

/// Closed set of wire type names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MsgType {
    Twist,
    Range,
    Odometry,
    Bumper,
    Clock,
    Led,
    PidGains,
}

impl MsgType {
    pub const ALL: [MsgType; 7] = [
        MsgType::Twist,
        MsgType::Range,
        MsgType::Odometry,
        MsgType::Bumper,
        MsgType::Clock,
        MsgType::Led,
        MsgType::PidGains,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MsgType::Twist => "geometry_msgs/Twist",
            MsgType::Range => "sensor_msgs/Range",
            MsgType::Odometry => "nav_msgs/Odometry",
            MsgType::Bumper => "impc_msgs/Bumper",
            MsgType::Clock => "rosgraph_msgs/Clock",
            MsgType::Led => "evarobot_msgs/Led",
            MsgType::PidGains => "evarobot_msgs/PidGains",
        }
    }

    /// Every concrete leaf selector of this type, in wire order.
    pub fn leaf_paths(&self) -> &'static [&'static str] {
        match self {
            MsgType::Twist => &["linear.x", "linear.y", "linear.z", "angular.x", "angular.y", "angular.z"],
            MsgType::Range => &["radiation_type", "field_of_view", "min_range", "max_range", "range"],
            MsgType::Odometry => &[
                "pose.position.x",
                "pose.position.y",
                "pose.position.z",
                "pose.orientation.x",
                "pose.orientation.y",
                "pose.orientation.z",
                "pose.orientation.w",
                "twist.linear.x",
                "twist.linear.y",
                "twist.linear.z",
                "twist.angular.x",
                "twist.angular.y",
                "twist.angular.z",
            ],
            MsgType::Bumper => &["left", "right"],
            MsgType::Clock => &["clock.secs", "clock.nsecs"],
            MsgType::Led => &["on", "color"],
            MsgType::PidGains => &["left.kp", "left.ki", "left.kd", "right.kp", "right.ki", "right.kd"],
        }
    }

    /// Selectors accepted by [`RosMessage::extract_field`]: the leaves plus
    /// virtual ones (`theta` on odometry).
    pub fn selectors(&self) -> Vec<&'static str> {
        let mut out = self.leaf_paths().to_vec();
        if *self == MsgType::Odometry {
            out.push("theta");
        }
        out
    }

    /// Kind of scalar a selector yields, `None` if the selector is invalid.
    pub fn selector_kind(&self, selector: &str) -> Option<ScalarKind> {
        if !self.selectors().contains(&selector) {
            return None;
        }
        Some(match (self, selector) {
            (MsgType::Bumper, _) | (MsgType::Led, "on") => ScalarKind::Bool,
            (MsgType::Led, "color") => ScalarKind::Text,
            _ => ScalarKind::Num,
        })
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MsgType {
    type Err = MsgError;

    fn from_str(s: &str) -> Result<Self> {
        MsgType::ALL.iter().copied().find(|t| t.name() == s).ok_or_else(|| MsgError::UnsupportedType(s.to_string()))
    }
}

/// Name plus type of a topic.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopicSpec {
    pub name: String,
    pub msg_type: MsgType,
}

impl TopicSpec {
    pub fn new(name: &str, msg_type: MsgType) -> Result<Self> {
        if !is_valid_topic_name(name) {
            return Err(MsgError::InvalidValue {
                path: "topic".into(),
                reason: format!("invalid topic name `{name}`"),
            });
        }
        Ok(Self { name: name.to_string(), msg_type })
    }
}

/// `(/[A-Za-z_][A-Za-z0-9_]*)+`
pub fn is_valid_topic_name(name: &str) -> bool {
    let Some(rest) = name.strip_prefix('/') else {
        return false;
    };
    rest.split('/').all(|seg| {
        let mut chars = seg.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
            _ => false,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Num(f64),
    Bool(bool),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    Num,
    Bool,
    Text,
}

impl Scalar {
    pub fn kind(&self) -> ScalarKind {
        match self {
            Scalar::Num(_) => ScalarKind::Num,
            Scalar::Bool(_) => ScalarKind::Bool,
            Scalar::Text(_) => ScalarKind::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RosMessage {
    Twist(TwistMsg),
    Range(RangeMsg),
    Odometry(OdometryMsg),
    Bumper(BumperMsg),
    Clock(ClockMsg),
    Led(LedMsg),
    PidGains(PidGainsMsg),
}

impl RosMessage {
    pub fn msg_type(&self) -> MsgType {
        match self {
            RosMessage::Twist(_) => MsgType::Twist,
            RosMessage::Range(_) => MsgType::Range,
            RosMessage::Odometry(_) => MsgType::Odometry,
            RosMessage::Bumper(_) => MsgType::Bumper,
            RosMessage::Clock(_) => MsgType::Clock,
            RosMessage::Led(_) => MsgType::Led,
            RosMessage::PidGains(_) => MsgType::PidGains,
        }
    }

    /// Encodes as a JSON tree.
    pub fn to_json(&self) -> Result<Value> {
        let mut w = Writer::default();
        let tree = match self {
            RosMessage::Twist(t) => w.twist("", t),
            RosMessage::Range(r) => {
                let mut m = Map::new();
                m.insert("radiation_type".into(), Value::from(r.radiation_type as u8));
                m.insert("field_of_view".into(), w.num("field_of_view", r.field_of_view));
                m.insert("min_range".into(), w.num("min_range", r.min_range));
                m.insert("max_range".into(), w.num("max_range", r.max_range));
                m.insert("range".into(), w.num("range", r.range));
                Value::Object(m)
            }
            RosMessage::Odometry(o) => {
                let q = &o.pose.orientation;
                let mut orientation = Map::new();
                orientation.insert("x".into(), w.num("pose.orientation.x", q.x));
                orientation.insert("y".into(), w.num("pose.orientation.y", q.y));
                orientation.insert("z".into(), w.num("pose.orientation.z", q.z));
                orientation.insert("w".into(), w.num("pose.orientation.w", q.w));
                let mut pose = Map::new();
                pose.insert("position".into(), w.vec3("pose.position", &o.pose.position));
                pose.insert("orientation".into(), Value::Object(orientation));
                let mut m = Map::new();
                m.insert("pose".into(), Value::Object(pose));
                m.insert("twist".into(), w.twist("twist.", &o.twist));
                Value::Object(m)
            }
            RosMessage::Bumper(b) => {
                let mut m = Map::new();
                m.insert("left".into(), Value::Bool(b.left));
                m.insert("right".into(), Value::Bool(b.right));
                Value::Object(m)
            }
            RosMessage::Clock(c) => {
                if c.nsecs >= 1_000_000_000 {
                    return Err(MsgError::InvalidValue {
                        path: "clock.nsecs".into(),
                        reason: "must be below 1e9".into(),
                    });
                }
                let mut inner = Map::new();
                inner.insert("secs".into(), Value::from(c.secs));
                inner.insert("nsecs".into(), Value::from(c.nsecs));
                let mut m = Map::new();
                m.insert("clock".into(), Value::Object(inner));
                Value::Object(m)
            }
            RosMessage::Led(l) => {
                let mut m = Map::new();
                m.insert("on".into(), Value::Bool(l.on));
                m.insert("color".into(), Value::String(l.color.as_str().into()));
                Value::Object(m)
            }
            RosMessage::PidGains(g) => {
                let mut m = Map::new();
                m.insert("left".into(), w.gains("left", &g.left));
                m.insert("right".into(), w.gains("right", &g.right));
                Value::Object(m)
            }
        };
        w.finish(tree)
    }

    /// Encodes as compact JSON text.
    pub fn serialize(&self) -> Result<String> {
        Ok(self.to_json()?.to_string())
    }

    /// Decodes JSON text as a message of the named type.
    pub fn parse(msg_type: &str, text: &str) -> Result<Self> {
        let ty: MsgType = msg_type.parse()?;
        let value: Value = serde_json::from_str(text).map_err(|e| MsgError::Json(e.to_string()))?;
        Self::from_json(ty, &value)
    }

    /// Decodes a JSON tree as a message of type `ty`.
    pub fn from_json(ty: MsgType, value: &Value) -> Result<Self> {
        let root = Reader::root(value)?;
        Ok(match ty {
            MsgType::Twist => RosMessage::Twist(root.twist()?),
            MsgType::Range => {
                let radiation_type = match root.uint("radiation_type")? {
                    0 => RadiationType::Ultrasound,
                    1 => RadiationType::Infrared,
                    other => {
                        return Err(MsgError::InvalidValue {
                            path: "radiation_type".into(),
                            reason: format!("expected 0 or 1, got {other}"),
                        })
                    }
                };
                RosMessage::Range(RangeMsg {
                    radiation_type,
                    field_of_view: root.num("field_of_view")?,
                    min_range: root.num("min_range")?,
                    max_range: root.num("max_range")?,
                    range: root.num("range")?,
                })
            }
            MsgType::Odometry => {
                let pose = root.child("pose")?;
                let q = pose.child("orientation")?;
                RosMessage::Odometry(OdometryMsg {
                    pose: PoseMsg {
                        position: pose.child("position")?.vec3()?,
                        orientation: Quaternion { x: q.num("x")?, y: q.num("y")?, z: q.num("z")?, w: q.num("w")? },
                    },
                    twist: root.child("twist")?.twist()?,
                })
            }
            MsgType::Bumper => {
                RosMessage::Bumper(BumperMsg { left: root.boolean("left")?, right: root.boolean("right")? })
            }
            MsgType::Clock => {
                let clock = root.child("clock")?;
                let secs = clock.uint("secs")?;
                let nsecs = clock.uint("nsecs")?;
                if nsecs >= 1_000_000_000 {
                    return Err(MsgError::InvalidValue {
                        path: "clock.nsecs".into(),
                        reason: "must be below 1e9".into(),
                    });
                }
                RosMessage::Clock(ClockMsg { secs, nsecs: nsecs as u32 })
            }
            MsgType::Led => {
                let color = match root.text("color")? {
                    Some(s) => s.parse().map_err(|_| MsgError::InvalidValue {
                        path: "color".into(),
                        reason: format!("unknown LED color `{s}`"),
                    })?,
                    None => LedColor::default(),
                };
                RosMessage::Led(LedMsg { on: root.boolean("on")?, color })
            }
            MsgType::PidGains => {
                let gains = |r: Reader<'_>| -> Result<WheelGains> {
                    Ok(WheelGains { kp: r.num("kp")?, ki: r.num("ki")?, kd: r.num("kd")? })
                };
                RosMessage::PidGains(PidGainsMsg {
                    left: gains(root.child("left")?)?,
                    right: gains(root.child("right")?)?,
                })
            }
        })
    }

    /// Every leaf selector with its value.
    pub fn leaves(&self) -> Vec<(&'static str, Scalar)> {
        let paths = self.msg_type().leaf_paths();
        let values: Vec<Scalar> = match self {
            RosMessage::Twist(t) => twist_values(t),
            RosMessage::Range(r) => vec![
                Scalar::Num(r.radiation_type as u8 as f64),
                Scalar::Num(r.field_of_view),
                Scalar::Num(r.min_range),
                Scalar::Num(r.max_range),
                Scalar::Num(r.range),
            ],
            RosMessage::Odometry(o) => {
                let p = &o.pose.position;
                let q = &o.pose.orientation;
                let mut v: Vec<Scalar> = [p.x, p.y, p.z, q.x, q.y, q.z, q.w].into_iter().map(Scalar::Num).collect();
                v.extend(twist_values(&o.twist));
                v
            }
            RosMessage::Bumper(b) => vec![Scalar::Bool(b.left), Scalar::Bool(b.right)],
            RosMessage::Clock(c) => vec![Scalar::Num(c.secs as f64), Scalar::Num(c.nsecs as f64)],
            RosMessage::Led(l) => vec![Scalar::Bool(l.on), Scalar::Text(l.color.as_str().into())],
            RosMessage::PidGains(g) => {
                [g.left, g.right].iter().flat_map(|w| [w.kp, w.ki, w.kd]).map(Scalar::Num).collect()
            }
        };
        paths.iter().copied().zip(values).collect()
    }

    /// Reads one leaf by dot path. Odometry also accepts `theta` (yaw in
    /// (-π, π]).
    pub fn extract_field(&self, selector: &str) -> Result<Scalar> {
        if let (RosMessage::Odometry(o), "theta") = (self, selector) {
            return Ok(Scalar::Num(o.theta()));
        }
        self.leaves().into_iter().find(|(p, _)| *p == selector).map(|(_, v)| v).ok_or_else(|| MsgError::FieldNotFound {
            selector: selector.to_string(),
            valid: self.msg_type().selectors().iter().map(|s| s.to_string()).collect(),
        })
    }
}

fn twist_values(t: &TwistMsg) -> Vec<Scalar> {
    [t.linear.x, t.linear.y, t.linear.z, t.angular.x, t.angular.y, t.angular.z].into_iter().map(Scalar::Num).collect()
}

/// Renders a float the way the wire format wants it. `None` for NaN/Inf.
pub fn json_number(x: f64) -> Option<Value> {
    if !x.is_finite() {
        return None;
    }
    // 2^53: beyond this not every integer is representable
    if x.fract() == 0.0 && x.abs() < 9_007_199_254_740_992.0 {
        Some(Value::from(x as i64))
    } else {
        Number::from_f64(x).map(Value::Number)
    }
}

/// Collects the first non-finite field while building a tree.
#[derive(Default)]
struct Writer {
    bad: Option<String>,
}

impl Writer {
    fn num(&mut self, path: &str, x: f64) -> Value {
        json_number(x).unwrap_or_else(|| {
            self.bad.get_or_insert_with(|| path.to_string());
            Value::Null
        })
    }

    fn vec3(&mut self, prefix: &str, v: &Vector3) -> Value {
        let mut m = Map::new();
        m.insert("x".into(), self.num(&format!("{prefix}.x"), v.x));
        m.insert("y".into(), self.num(&format!("{prefix}.y"), v.y));
        m.insert("z".into(), self.num(&format!("{prefix}.z"), v.z));
        Value::Object(m)
    }

    fn twist(&mut self, prefix: &str, t: &TwistMsg) -> Value {
        let mut m = Map::new();
        m.insert("linear".into(), self.vec3(&format!("{prefix}linear"), &t.linear));
        m.insert("angular".into(), self.vec3(&format!("{prefix}angular"), &t.angular));
        Value::Object(m)
    }

    fn gains(&mut self, prefix: &str, g: &WheelGains) -> Value {
        let mut m = Map::new();
        m.insert("kp".into(), self.num(&format!("{prefix}.kp"), g.kp));
        m.insert("ki".into(), self.num(&format!("{prefix}.ki"), g.ki));
        m.insert("kd".into(), self.num(&format!("{prefix}.kd"), g.kd));
        Value::Object(m)
    }

    fn finish(self, v: Value) -> Result<Value> {
        match self.bad {
            Some(path) => Err(MsgError::NonFinite(path)),
            None => Ok(v),
        }
    }
}

/// Path-tracking view of a JSON object.
struct Reader<'a> {
    obj: Option<&'a Map<String, Value>>,
    path: String,
}

impl<'a> Reader<'a> {
    fn root(value: &'a Value) -> Result<Self> {
        match value {
            Value::Object(m) => Ok(Reader { obj: Some(m), path: String::new() }),
            _ => Err(MsgError::TypeMismatch { path: "<root>".into(), expected: "object" }),
        }
    }

    fn full(&self, name: &str) -> String {
        if self.path.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.path)
        }
    }

    fn get(&self, name: &str) -> Option<&'a Value> {
        self.obj.and_then(|m| m.get(name)).filter(|v| !v.is_null())
    }

    fn child(&self, name: &str) -> Result<Reader<'a>> {
        let path = self.full(name);
        match self.get(name) {
            None => Ok(Reader { obj: None, path }),
            Some(Value::Object(m)) => Ok(Reader { obj: Some(m), path }),
            Some(_) => Err(MsgError::TypeMismatch { path, expected: "object" }),
        }
    }

    fn num(&self, name: &str) -> Result<f64> {
        match self.get(name) {
            None => Ok(0.0),
            Some(Value::Number(n)) => {
                n.as_f64().ok_or_else(|| MsgError::TypeMismatch { path: self.full(name), expected: "number" })
            }
            Some(_) => Err(MsgError::TypeMismatch { path: self.full(name), expected: "number" }),
        }
    }

    fn uint(&self, name: &str) -> Result<u64> {
        match self.get(name) {
            None => Ok(0),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| MsgError::TypeMismatch { path: self.full(name), expected: "non-negative integer" }),
        }
    }

    fn boolean(&self, name: &str) -> Result<bool> {
        match self.get(name) {
            None => Ok(false),
            Some(Value::Bool(b)) => Ok(*b),
            Some(_) => Err(MsgError::TypeMismatch { path: self.full(name), expected: "boolean" }),
        }
    }

    fn text(&self, name: &str) -> Result<Option<&'a str>> {
        match self.get(name) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(MsgError::TypeMismatch { path: self.full(name), expected: "string" }),
        }
    }

    fn vec3(&self) -> Result<Vector3> {
        Ok(Vector3 { x: self.num("x")?, y: self.num("y")?, z: self.num("z")? })
    }

    fn twist(&self) -> Result<TwistMsg> {
        Ok(TwistMsg { linear: self.child("linear")?.vec3()?, angular: self.child("angular")?.vec3()? })
    }
}
