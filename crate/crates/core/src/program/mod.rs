//! The block language: document format, AST and static validation.
//!
//! Documents are JSON (`.blocks.json`). Every statement and expression is an
//! object tagged by `"type"`:
//!
//! ```json
//! {"version":1,"name":"square","blocks":[
//!   {"type":"repeat","count":{"type":"num","value":4},"body":[
//!     {"type":"move_forward","distance_m":{"type":"num","value":1}},
//!     {"type":"turn_left","angle_deg":{"type":"num","value":90}}]}]}
//! ```

mod decode;
mod encode;
mod validate;

use std::fmt;

use serde::Serialize;

pub use decode::{parse_document, parse_value};
pub use validate::{validate, validate_with, Mode};

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockProgram {
    pub version: u32,
    pub name: String,
    pub blocks: Vec<Stmt>,
}

impl BlockProgram {
    pub fn new(name: &str, blocks: Vec<Stmt>) -> Self {
        Self { version: DOCUMENT_VERSION, name: name.to_string(), blocks }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainExprs {
    pub kp: Expr,
    pub ki: Expr,
    pub kd: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    MoveForward { distance_m: Expr },
    MoveBackward { distance_m: Expr },
    TurnLeft { angle_deg: Expr },
    TurnRight { angle_deg: Expr },
    LedOn { color: Expr },
    LedOff,
    Repeat { count: Expr, body: Vec<Stmt> },
    While { cond: Expr, body: Vec<Stmt> },
    If { cond: Expr, then: Vec<Stmt>, otherwise: Vec<Stmt> },
    Wait { seconds: Expr },
    SetVar { name: String, value: Expr },
    Print { value: Expr },
    RosConnect { url: Expr },
    CreatePublisher { id: String, topic: Expr, msg_type: Expr },
    Publish { id: String, value: Expr },
    CreateSubscriber { id: String, topic: Expr, msg_type: Expr },
    OnMessage { id: String, var: String, body: Vec<Stmt> },
    Teleop,
    Wander { threshold_m: Option<Expr>, forward_speed: Option<Expr>, turn_speed: Option<Expr> },
    SetPid { left: GainExprs, right: GainExprs },
}

impl Stmt {
    pub fn tag(&self) -> &'static str {
        match self {
            Stmt::MoveForward { .. } => "move_forward",
            Stmt::MoveBackward { .. } => "move_backward",
            Stmt::TurnLeft { .. } => "turn_left",
            Stmt::TurnRight { .. } => "turn_right",
            Stmt::LedOn { .. } => "led_on",
            Stmt::LedOff => "led_off",
            Stmt::Repeat { .. } => "repeat",
            Stmt::While { .. } => "while",
            Stmt::If { .. } => "if",
            Stmt::Wait { .. } => "wait",
            Stmt::SetVar { .. } => "set_var",
            Stmt::Print { .. } => "print",
            Stmt::RosConnect { .. } => "ros_connect",
            Stmt::CreatePublisher { .. } => "create_publisher",
            Stmt::Publish { .. } => "publish",
            Stmt::CreateSubscriber { .. } => "create_subscriber",
            Stmt::OnMessage { .. } => "on_message",
            Stmt::Teleop => "teleop",
            Stmt::Wander { .. } => "wander",
            Stmt::SetPid { .. } => "set_pid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub const ALL: [BinOp; 12] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::And,
        BinOp::Or,
    ];

    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    /// Canonical symbol or one of the typographic aliases (`×`, `÷`, `≤`,
    /// `≥`, `=`, `≠`, `−`).
    pub fn from_symbol(s: &str) -> Option<BinOp> {
        Some(match s {
            "+" => BinOp::Add,
            "-" | "−" => BinOp::Sub,
            "*" | "×" => BinOp::Mul,
            "/" | "÷" => BinOp::Div,
            "<" => BinOp::Lt,
            "<=" | "≤" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" | "≥" => BinOp::Ge,
            "==" | "=" => BinOp::Eq,
            "!=" | "≠" => BinOp::Ne,
            "and" => BinOp::And,
            "or" => BinOp::Or,
            _ => return None,
        })
    }

    pub fn is_arithmetic(&self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div)
    }

    pub fn is_ordering(&self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn is_logical(&self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensorKey {
    SonarLeft,
    SonarRight,
    IrLeft,
    IrRight,
    BumperLeft,
    BumperRight,
}

impl SensorKey {
    pub const ALL: [SensorKey; 6] = [
        SensorKey::SonarLeft,
        SensorKey::SonarRight,
        SensorKey::IrLeft,
        SensorKey::IrRight,
        SensorKey::BumperLeft,
        SensorKey::BumperRight,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SensorKey::SonarLeft => "sonar_left",
            SensorKey::SonarRight => "sonar_right",
            SensorKey::IrLeft => "ir_left",
            SensorKey::IrRight => "ir_right",
            SensorKey::BumperLeft => "bumper_left",
            SensorKey::BumperRight => "bumper_right",
        }
    }

    pub fn from_name(s: &str) -> Option<SensorKey> {
        SensorKey::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    pub fn is_bumper(&self) -> bool {
        matches!(self, SensorKey::BumperLeft | SensorKey::BumperRight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Bool(bool),
    Var(String),
    Binop { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    GetSensor(SensorKey),
    FieldGet { var: String, selector: String },
    MakeTwist { lx: Box<Expr>, ly: Box<Expr>, lz: Box<Expr>, ax: Box<Expr>, ay: Box<Expr>, az: Box<Expr> },
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn str(s: &str) -> Expr {
        Expr::Str(s.to_string())
    }

    pub fn var(s: &str) -> Expr {
        Expr::Var(s.to_string())
    }

    pub fn binop(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binop { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn twist(lx: f64, az: f64) -> Expr {
        let n = |v| Box::new(Expr::Num(v));
        Expr::MakeTwist { lx: n(lx), ly: n(0.0), lz: n(0.0), ax: n(0.0), ay: n(0.0), az: n(az) }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Expr::Num(_) => "num",
            Expr::Str(_) => "str",
            Expr::Bool(_) => "bool",
            Expr::Var(_) => "var",
            Expr::Binop { .. } => "binop",
            Expr::GetSensor(_) => "get_sensor",
            Expr::FieldGet { .. } => "field_get",
            Expr::MakeTwist { .. } => "make_twist",
        }
    }
}

/// One step of a location inside a document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathSeg {
    Index(usize),
    Field(String),
}

/// Location of a node, displayed as `blocks[0].body[1].distance_m`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodePath(pub Vec<PathSeg>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn field(&self, name: &str) -> Self {
        let mut p = self.clone();
        p.0.push(PathSeg::Field(name.to_string()));
        p
    }

    pub fn index(&self, i: usize) -> Self {
        let mut p = self.clone();
        p.0.push(PathSeg::Index(i));
        p
    }

    /// Parses the display form back into segments.
    pub fn parse(s: &str) -> Option<Self> {
        let mut out = Vec::new();
        if s.is_empty() || s == "<root>" {
            return Some(NodePath(out));
        }
        for part in s.split('.') {
            let (name, mut rest) = match part.find('[') {
                Some(i) => (&part[..i], &part[i..]),
                None => (part, ""),
            };
            if !name.is_empty() {
                out.push(PathSeg::Field(name.to_string()));
            }
            while let Some(r) = rest.strip_prefix('[') {
                let end = r.find(']')?;
                out.push(PathSeg::Index(r[..end].parse().ok()?));
                rest = &r[end + 1..];
            }
        }
        Some(NodePath(out))
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("<root>");
        }
        for (i, seg) in self.0.iter().enumerate() {
            match seg {
                PathSeg::Index(n) => write!(f, "[{n}]")?,
                PathSeg::Field(name) if i == 0 => f.write_str(name)?,
                PathSeg::Field(name) => write!(f, ".{name}")?,
            }
        }
        Ok(())
    }
}

impl Serialize for NodePath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagCode {
    ParseError,
    UnsupportedVersion,
    UnknownBlock,
    UnknownExpr,
    UnknownField,
    MissingField,
    BadField,
    TypeMismatch,
    UndeclaredId,
    UndeclaredVar,
    DuplicateId,
    UnknownMsgType,
    InvalidSelector,
    InvalidTopic,
    InvalidLiteral,
    DivisionByZero,
    BehaviorConflict,
    NotConnected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: NodePath,
    pub code: DiagCode,
    pub message: String,
}

impl Diagnostic {
    pub fn new(path: NodePath, code: DiagCode, message: impl Into<String>) -> Self {
        Self { path, code, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for Diagnostic {}

/// Canonical JSON form of a program.
pub fn to_json(p: &BlockProgram) -> serde_json::Value {
    encode::program(p)
}

/// Canonical compact text of a program.
pub fn serialize_document(p: &BlockProgram) -> String {
    to_json(p).to_string()
}

/// Parses then validates; the first diagnostic wins.
pub fn load(text: &str, mode: Mode) -> Result<BlockProgram, Vec<Diagnostic>> {
    let program = parse_document(text).map_err(|d| vec![d])?;
    let diags = validate_with(&program, mode);
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_display_and_parse() {
        let p = NodePath::root().field("blocks").index(0).field("body").index(1).field("distance_m");
        assert_eq!(p.to_string(), "blocks[0].body[1].distance_m");
        assert_eq!(NodePath::parse(&p.to_string()), Some(p));
        assert_eq!(NodePath::root().to_string(), "<root>");
    }

    #[test]
    fn path_order_is_numeric() {
        let a = NodePath::root().field("blocks").index(2);
        let b = NodePath::root().field("blocks").index(10);
        assert!(a < b);
    }

    #[test]
    fn operator_aliases() {
        assert_eq!(BinOp::from_symbol("×"), Some(BinOp::Mul));
        assert_eq!(BinOp::from_symbol("≠"), Some(BinOp::Ne));
        assert_eq!(BinOp::from_symbol("="), Some(BinOp::Eq));
        assert_eq!(BinOp::from_symbol("%"), None);
        for op in BinOp::ALL {
            assert_eq!(BinOp::from_symbol(op.symbol()), Some(op));
        }
    }
}
