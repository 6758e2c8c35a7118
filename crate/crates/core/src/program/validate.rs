//! Static checks: expression types, id and variable declaration before use,
//! the closed message-type set, field selectors, literal ranges, behaviour
//! exclusivity and connection requirements.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::*;
use crate::msg::{is_valid_topic_name, LedColor, MsgType, ScalarKind};

/// How a program reaches the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Launched by a server: an in-process session is provided.
    #[default]
    Bound,
    /// Run on its own: the program must `ros_connect` before touching the
    /// robot.
    Standalone,
}

/// Validates for bound mode.
pub fn validate(p: &BlockProgram) -> Vec<Diagnostic> {
    validate_with(p, Mode::Bound)
}

/// All diagnostics, sorted by path. Empty means valid.
pub fn validate_with(p: &BlockProgram, mode: Mode) -> Vec<Diagnostic> {
    let mut c = Checker { mode, ..Checker::default() };
    if p.version != DOCUMENT_VERSION {
        c.report(
            NodePath::root().field("version"),
            DiagCode::UnsupportedVersion,
            format!("unsupported document version: {}", p.version),
        );
    }
    c.block(&p.blocks, &NodePath::root().field("blocks"));
    let mut out = c.diags;
    out.sort_by(|a, b| (&a.path, a.code).cmp(&(&b.path, b.code)));
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ty {
    Num,
    Bool,
    Str,
    Msg(Option<MsgType>),
    Any,
}

impl Ty {
    fn describe(&self) -> String {
        match self {
            Ty::Num => "number".into(),
            Ty::Bool => "boolean".into(),
            Ty::Str => "string".into(),
            Ty::Msg(Some(t)) => format!("{t} message"),
            Ty::Msg(None) => "message".into(),
            Ty::Any => "any".into(),
        }
    }

    fn accepts(&self, actual: Ty) -> bool {
        match (self, actual) {
            (Ty::Any, _) | (_, Ty::Any) => true,
            (Ty::Msg(a), Ty::Msg(b)) => a.is_none() || b.is_none() || a == &b,
            (a, b) => *a == b,
        }
    }

    fn merge(self, other: Ty) -> Ty {
        if self == other {
            self
        } else {
            Ty::Any
        }
    }

    fn from_scalar(k: ScalarKind) -> Ty {
        match k {
            ScalarKind::Num => Ty::Num,
            ScalarKind::Bool => Ty::Bool,
            ScalarKind::Text => Ty::Str,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Publisher,
    Subscriber,
}

#[derive(Default)]
struct Checker {
    mode: Mode,
    connected: bool,
    ids: BTreeMap<String, (Role, Option<MsgType>)>,
    vars: BTreeMap<String, Ty>,
    scoped: Vec<(String, Ty)>,
    behaviour: bool,
    diags: Vec<Diagnostic>,
}

impl Checker {
    fn report(&mut self, path: NodePath, code: DiagCode, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(path, code, msg));
    }

    fn needs_robot(&mut self, path: &NodePath, what: &str) {
        if self.mode == Mode::Standalone && !self.connected {
            self.report(path.clone(), DiagCode::NotConnected, format!("{what} needs a preceding ros_connect"));
        }
    }

    fn block(&mut self, list: &[Stmt], path: &NodePath) {
        for (i, s) in list.iter().enumerate() {
            self.stmt(s, &path.index(i));
        }
    }

    fn expect(&mut self, e: &Expr, path: &NodePath, want: Ty) -> Ty {
        let got = self.infer(e, path);
        if !want.accepts(got) {
            self.report(
                path.clone(),
                DiagCode::TypeMismatch,
                format!("expected {}, found {}", want.describe(), got.describe()),
            );
        }
        got
    }

    /// Number input; a literal must satisfy `ok`.
    fn number(&mut self, e: &Expr, path: &NodePath, ok: fn(f64) -> bool, rule: &str) {
        self.expect(e, path, Ty::Num);
        if let Expr::Num(x) = e {
            if !(x.is_finite() && ok(*x)) {
                self.report(path.clone(), DiagCode::InvalidLiteral, format!("{x} is out of range: {rule}"));
            }
        }
    }

    fn declare(&mut self, id: &str, role: Role, topic: &Expr, msg_type: &Expr, path: &NodePath) {
        self.expect(topic, &path.field("topic"), Ty::Str);
        if let Expr::Str(t) = topic {
            if !is_valid_topic_name(t) {
                self.report(path.field("topic"), DiagCode::InvalidTopic, format!("invalid topic name: {t}"));
            }
        }
        self.expect(msg_type, &path.field("msg_type"), Ty::Str);
        let ty = match msg_type {
            Expr::Str(name) => match MsgType::from_str(name) {
                Ok(t) => Some(t),
                Err(_) => {
                    let known: Vec<&str> = MsgType::ALL.iter().map(|t| t.name()).collect();
                    self.report(
                        path.field("msg_type"),
                        DiagCode::UnknownMsgType,
                        format!("unsupported message type: {name} (known: {})", known.join(", ")),
                    );
                    None
                }
            },
            _ => None,
        };
        if id.is_empty() {
            self.report(path.field("id"), DiagCode::BadField, "id must not be empty");
        } else if self.ids.contains_key(id) {
            self.report(path.field("id"), DiagCode::DuplicateId, format!("id already declared: {id}"));
        } else {
            self.ids.insert(id.to_string(), (role, ty));
        }
    }

    fn lookup(&self, id: &str, role: Role) -> Result<Option<MsgType>, String> {
        match self.ids.get(id) {
            Some((r, t)) if *r == role => Ok(*t),
            Some(_) => {
                Err(format!("{id} is not a {}", if role == Role::Publisher { "publisher" } else { "subscriber" }))
            }
            None => Err(format!("undeclared id: {id}")),
        }
    }

    fn var_type(&self, name: &str) -> Option<Ty> {
        self.scoped.iter().rev().find(|(n, _)| n == name).map(|(_, t)| *t).or_else(|| self.vars.get(name).copied())
    }

    fn stmt(&mut self, s: &Stmt, path: &NodePath) {
        match s {
            Stmt::MoveForward { distance_m } | Stmt::MoveBackward { distance_m } => {
                self.needs_robot(path, s.tag());
                self.number(distance_m, &path.field("distance_m"), |x| x >= 0.0, "distance must be >= 0");
            }
            Stmt::TurnLeft { angle_deg } | Stmt::TurnRight { angle_deg } => {
                self.needs_robot(path, s.tag());
                self.number(angle_deg, &path.field("angle_deg"), |x| x >= 0.0, "angle must be >= 0");
            }
            Stmt::LedOn { color } => {
                self.needs_robot(path, s.tag());
                self.expect(color, &path.field("color"), Ty::Str);
                if let Expr::Str(c) = color {
                    if LedColor::from_str(c).is_err() {
                        let known: Vec<&str> = LedColor::ALL.iter().map(|c| c.as_str()).collect();
                        self.report(
                            path.field("color"),
                            DiagCode::InvalidLiteral,
                            format!("unknown color: {c} (known: {})", known.join(", ")),
                        );
                    }
                }
            }
            Stmt::LedOff => self.needs_robot(path, s.tag()),
            Stmt::Repeat { count, body } => {
                self.number(
                    count,
                    &path.field("count"),
                    |x| x >= 0.0 && x.fract() == 0.0,
                    "count must be a whole number >= 0",
                );
                self.block(body, &path.field("body"));
            }
            Stmt::While { cond, body } => {
                self.expect(cond, &path.field("cond"), Ty::Bool);
                self.block(body, &path.field("body"));
            }
            Stmt::If { cond, then, otherwise } => {
                self.expect(cond, &path.field("cond"), Ty::Bool);
                self.block(then, &path.field("then"));
                self.block(otherwise, &path.field("else"));
            }
            Stmt::Wait { seconds } => {
                self.number(seconds, &path.field("seconds"), |x| x >= 0.0, "seconds must be >= 0");
            }
            Stmt::SetVar { name, value } => {
                let ty = self.infer(value, &path.field("value"));
                if name.is_empty() {
                    self.report(path.field("name"), DiagCode::BadField, "variable name must not be empty");
                    return;
                }
                let merged = self.vars.get(name).map_or(ty, |old| old.merge(ty));
                self.vars.insert(name.clone(), merged);
            }
            Stmt::Print { value } => {
                self.infer(value, &path.field("value"));
            }
            Stmt::RosConnect { url } => {
                self.expect(url, &path.field("url"), Ty::Str);
                if let Expr::Str(u) = url {
                    if !(u.starts_with("ws://") || u.starts_with("wss://")) {
                        self.report(path.field("url"), DiagCode::InvalidLiteral, format!("not a ws:// url: {u}"));
                    }
                }
                self.connected = true;
            }
            Stmt::CreatePublisher { id, topic, msg_type } => {
                self.needs_robot(path, s.tag());
                self.declare(id, Role::Publisher, topic, msg_type, path);
            }
            Stmt::CreateSubscriber { id, topic, msg_type } => {
                self.needs_robot(path, s.tag());
                self.declare(id, Role::Subscriber, topic, msg_type, path);
            }
            Stmt::Publish { id, value } => {
                self.needs_robot(path, s.tag());
                let want = match self.lookup(id, Role::Publisher) {
                    Ok(t) => Ty::Msg(t),
                    Err(m) => {
                        self.report(path.field("id"), DiagCode::UndeclaredId, m);
                        Ty::Msg(None)
                    }
                };
                self.expect(value, &path.field("value"), want);
            }
            Stmt::OnMessage { id, var, body } => {
                self.needs_robot(path, s.tag());
                let ty = match self.lookup(id, Role::Subscriber) {
                    Ok(t) => Ty::Msg(t),
                    Err(m) => {
                        self.report(path.field("id"), DiagCode::UndeclaredId, m);
                        Ty::Msg(None)
                    }
                };
                if var.is_empty() {
                    self.report(path.field("var"), DiagCode::BadField, "variable name must not be empty");
                }
                self.scoped.push((var.clone(), ty));
                self.block(body, &path.field("body"));
                self.scoped.pop();
            }
            Stmt::Teleop => self.behaviour(path, s.tag()),
            Stmt::Wander { threshold_m, forward_speed, turn_speed } => {
                self.behaviour(path, s.tag());
                let positive = |x: f64| x > 0.0;
                if let Some(e) = threshold_m {
                    self.number(e, &path.field("threshold_m"), positive, "threshold must be > 0");
                }
                if let Some(e) = forward_speed {
                    self.number(e, &path.field("forward_speed"), positive, "speed must be > 0");
                }
                if let Some(e) = turn_speed {
                    self.number(e, &path.field("turn_speed"), positive, "speed must be > 0");
                }
            }
            Stmt::SetPid { left, right } => {
                self.needs_robot(path, s.tag());
                for (side, g) in [("left", left), ("right", right)] {
                    let p = path.field(side);
                    for (k, e) in [("kp", &g.kp), ("ki", &g.ki), ("kd", &g.kd)] {
                        self.number(e, &p.field(k), |x| x >= 0.0, "gains must be >= 0");
                    }
                }
            }
        }
    }

    fn behaviour(&mut self, path: &NodePath, what: &str) {
        self.needs_robot(path, what);
        if self.behaviour {
            self.report(
                path.clone(),
                DiagCode::BehaviorConflict,
                "only one teleop or wander block may appear in a program",
            );
        }
        self.behaviour = true;
    }

    fn infer(&mut self, e: &Expr, path: &NodePath) -> Ty {
        match e {
            Expr::Num(_) => Ty::Num,
            Expr::Str(_) => Ty::Str,
            Expr::Bool(_) => Ty::Bool,
            Expr::Var(name) => match self.var_type(name) {
                Some(t) => t,
                None => {
                    self.report(path.clone(), DiagCode::UndeclaredVar, format!("variable used before set: {name}"));
                    Ty::Any
                }
            },
            Expr::Binop { op, lhs, rhs } => {
                let (lp, rp) = (path.field("lhs"), path.field("rhs"));
                if op.is_arithmetic() || op.is_ordering() {
                    self.expect(lhs, &lp, Ty::Num);
                    self.expect(rhs, &rp, Ty::Num);
                    if *op == BinOp::Div && matches!(**rhs, Expr::Num(z) if z == 0.0) {
                        self.report(path.clone(), DiagCode::DivisionByZero, "division by literal zero");
                    }
                    if op.is_arithmetic() {
                        Ty::Num
                    } else {
                        Ty::Bool
                    }
                } else if op.is_logical() {
                    self.expect(lhs, &lp, Ty::Bool);
                    self.expect(rhs, &rp, Ty::Bool);
                    Ty::Bool
                } else {
                    let a = self.infer(lhs, &lp);
                    let b = self.infer(rhs, &rp);
                    if !a.accepts(b) {
                        self.report(
                            path.clone(),
                            DiagCode::TypeMismatch,
                            format!("cannot compare {} with {}", a.describe(), b.describe()),
                        );
                    }
                    Ty::Bool
                }
            }
            Expr::GetSensor(k) => {
                self.needs_robot(path, "get_sensor");
                if k.is_bumper() {
                    Ty::Bool
                } else {
                    Ty::Num
                }
            }
            Expr::FieldGet { var, selector } => {
                let source = match self.var_type(var) {
                    Some(Ty::Msg(t)) => Ok(t),
                    Some(Ty::Any) => Ok(None),
                    Some(other) => {
                        Err((DiagCode::TypeMismatch, format!("{var} holds a {}, not a message", other.describe())))
                    }
                    None => match self.lookup(var, Role::Subscriber) {
                        Ok(t) => Ok(t),
                        Err(_) => {
                            Err((DiagCode::UndeclaredVar, format!("no message variable or subscriber named {var}")))
                        }
                    },
                };
                match source {
                    Ok(Some(t)) => match t.selector_kind(selector) {
                        Some(k) => Ty::from_scalar(k),
                        None => {
                            self.report(
                                path.field("selector"),
                                DiagCode::InvalidSelector,
                                format!("{t} has no field {selector} (valid: {})", t.selectors().join(", ")),
                            );
                            Ty::Any
                        }
                    },
                    Ok(None) => Ty::Any,
                    Err((code, m)) => {
                        self.report(path.field("var"), code, m);
                        Ty::Any
                    }
                }
            }
            Expr::MakeTwist { lx, ly, lz, ax, ay, az } => {
                for (k, c) in [("lx", lx), ("ly", ly), ("lz", lz), ("ax", ax), ("ay", ay), ("az", az)] {
                    self.expect(c, &path.field(k), Ty::Num);
                }
                Ty::Msg(Some(MsgType::Twist))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diags(text: &str) -> Vec<(String, DiagCode)> {
        let p = parse_document(text).unwrap();
        validate(&p).into_iter().map(|d| (d.path.to_string(), d.code)).collect()
    }

    fn doc(blocks: &str) -> String {
        format!(r#"{{"version":1,"name":"t","blocks":[{blocks}]}}"#)
    }

    #[test]
    fn square_is_clean() {
        let text = doc(r#"{"type":"repeat","count":{"type":"num","value":4},"body":[
                {"type":"move_forward","distance_m":{"type":"num","value":1}},
                {"type":"turn_left","angle_deg":{"type":"num","value":90}}]}"#);
        assert!(diags(&text).is_empty());
    }

    #[test]
    fn undeclared_publisher() {
        let d = diags(&doc(r#"{"type":"publish","id":"p","value":{"type":"make_twist"}}"#));
        assert_eq!(d, vec![("blocks[0].id".into(), DiagCode::UndeclaredId)]);
    }

    #[test]
    fn publish_before_declaration_is_flagged() {
        let d = diags(&doc(r#"{"type":"publish","id":"p","value":{"type":"make_twist"}},
               {"type":"create_publisher","id":"p","topic":{"type":"str","value":"/cmd_vel"},"msg_type":{"type":"str","value":"geometry_msgs/Twist"}}"#));
        assert_eq!(d, vec![("blocks[0].id".into(), DiagCode::UndeclaredId)]);
    }

    #[test]
    fn bad_selector_on_odometry_subscriber() {
        let d = diags(&doc(
            r#"{"type":"create_subscriber","id":"o","topic":{"type":"str","value":"/odom"},"msg_type":{"type":"str","value":"nav_msgs/Odometry"}},
               {"type":"print","value":{"type":"field_get","var":"o","selector":"range"}}"#,
        ));
        assert_eq!(d, vec![("blocks[1].value.selector".into(), DiagCode::InvalidSelector)]);
        let ok = diags(&doc(
            r#"{"type":"create_subscriber","id":"o","topic":{"type":"str","value":"/odom"},"msg_type":{"type":"str","value":"nav_msgs/Odometry"}},
               {"type":"on_message","id":"o","var":"m","body":[{"type":"print","value":{"type":"field_get","var":"m","selector":"theta"}}]}"#,
        ));
        assert!(ok.is_empty(), "{ok:?}");
    }

    #[test]
    fn typing_and_literals() {
        let d = diags(&doc(r#"{"type":"while","cond":{"type":"num","value":1},"body":[]},
               {"type":"print","value":{"type":"binop","op":"/","lhs":{"type":"num","value":1},"rhs":{"type":"num","value":0}}},
               {"type":"led_on","color":{"type":"str","value":"pink"}},
               {"type":"repeat","count":{"type":"num","value":2.5},"body":[]},
               {"type":"print","value":{"type":"var","name":"nope"}}"#));
        assert_eq!(
            d,
            vec![
                ("blocks[0].cond".into(), DiagCode::TypeMismatch),
                ("blocks[1].value".into(), DiagCode::DivisionByZero),
                ("blocks[2].color".into(), DiagCode::InvalidLiteral),
                ("blocks[3].count".into(), DiagCode::InvalidLiteral),
                ("blocks[4].value".into(), DiagCode::UndeclaredVar),
            ]
        );
    }

    #[test]
    fn closed_type_set_and_duplicates() {
        let d = diags(&doc(
            r#"{"type":"create_subscriber","id":"a","topic":{"type":"str","value":"/x"},"msg_type":{"type":"str","value":"std_msgs/String"}},
               {"type":"create_publisher","id":"a","topic":{"type":"str","value":"bad topic"},"msg_type":{"type":"str","value":"geometry_msgs/Twist"}}"#,
        ));
        assert_eq!(
            d,
            vec![
                ("blocks[0].msg_type".into(), DiagCode::UnknownMsgType),
                ("blocks[1].id".into(), DiagCode::DuplicateId),
                ("blocks[1].topic".into(), DiagCode::InvalidTopic),
            ]
        );
    }

    #[test]
    fn behaviours_are_exclusive() {
        let d = diags(&doc(r#"{"type":"teleop"},{"type":"wander"}"#));
        assert_eq!(d, vec![("blocks[1]".into(), DiagCode::BehaviorConflict)]);
    }

    #[test]
    fn publish_type_must_match() {
        let d = diags(&doc(
            r#"{"type":"create_publisher","id":"l","topic":{"type":"str","value":"/led"},"msg_type":{"type":"str","value":"evarobot_msgs/Led"}},
               {"type":"publish","id":"l","value":{"type":"make_twist"}},
               {"type":"publish","id":"l","value":{"type":"num","value":1}}"#,
        ));
        assert_eq!(
            d,
            vec![
                ("blocks[1].value".into(), DiagCode::TypeMismatch),
                ("blocks[2].value".into(), DiagCode::TypeMismatch)
            ]
        );
    }

    #[test]
    fn standalone_needs_connection() {
        let text = doc(
            r#"{"type":"led_off"},{"type":"ros_connect","url":{"type":"str","value":"ws://localhost:9090"}},{"type":"led_off"}"#,
        );
        let p = parse_document(&text).unwrap();
        assert!(validate(&p).is_empty());
        let d: Vec<_> = validate_with(&p, Mode::Standalone).into_iter().map(|d| d.path.to_string()).collect();
        assert_eq!(d, vec!["blocks[0]"]);
    }

    #[test]
    fn sorted_by_structured_path() {
        let blocks: Vec<String> =
            (0..12).map(|_| r#"{"type":"wait","seconds":{"type":"bool","value":true}}"#.to_string()).collect();
        let d = diags(&doc(&blocks.join(",")));
        let idx: Vec<usize> = d
            .iter()
            .map(|(p, _)| p.trim_start_matches("blocks[").split(']').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(idx, (0..12).collect::<Vec<_>>());
    }
}
