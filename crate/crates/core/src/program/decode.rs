//! Strict document decoding. Unknown tags and fields are errors; the first
//! offending node is reported with its path.

use serde_json::{Map, Value};

use super::*;

type Res<T> = Result<T, Diagnostic>;

/// Parses document text into an AST.
pub fn parse_document(text: &str) -> Res<BlockProgram> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| Diagnostic::new(NodePath::root(), DiagCode::ParseError, format!("invalid JSON: {e}")))?;
    parse_value(&v)
}

/// Decodes an already-parsed JSON tree.
pub fn parse_value(v: &Value) -> Res<BlockProgram> {
    let root = NodePath::root();
    let obj = Obj::new(v, &root, "document")?;
    obj.only(&["version", "name", "blocks"])?;
    let version = obj.req("version")?;
    let vpath = root.field("version");
    let version = match version.as_u64() {
        Some(n) if n == DOCUMENT_VERSION as u64 => n as u32,
        _ => {
            return Err(Diagnostic::new(
                vpath,
                DiagCode::UnsupportedVersion,
                format!("unsupported document version: {version}"),
            ))
        }
    };
    let name = obj.string("name")?;
    let blocks = stmts(obj.req("blocks")?, &root.field("blocks"))?;
    Ok(BlockProgram { version, name, blocks })
}

struct Obj<'a> {
    map: &'a Map<String, Value>,
    path: &'a NodePath,
}

impl<'a> Obj<'a> {
    fn new(v: &'a Value, path: &'a NodePath, what: &str) -> Res<Self> {
        match v {
            Value::Object(map) => Ok(Self { map, path }),
            _ => Err(Diagnostic::new(path.clone(), DiagCode::BadField, format!("expected {what} object"))),
        }
    }

    fn only(&self, allowed: &[&str]) -> Res<()> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Diagnostic::new(self.path.field(k), DiagCode::UnknownField, format!("unknown field: {k}"))),
            None => Ok(()),
        }
    }

    fn opt(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    fn req(&self, key: &str) -> Res<&'a Value> {
        self.map.get(key).ok_or_else(|| {
            Diagnostic::new(self.path.field(key), DiagCode::MissingField, format!("missing field: {key}"))
        })
    }

    fn string(&self, key: &str) -> Res<String> {
        match self.req(key)? {
            Value::String(s) => Ok(s.clone()),
            _ => Err(Diagnostic::new(self.path.field(key), DiagCode::BadField, format!("{key} must be a string"))),
        }
    }

    fn expr(&self, key: &str) -> Res<Expr> {
        expr(self.req(key)?, &self.path.field(key))
    }

    fn opt_expr(&self, key: &str) -> Res<Option<Expr>> {
        self.opt(key).map(|v| expr(v, &self.path.field(key))).transpose()
    }

    fn body(&self, key: &str) -> Res<Vec<Stmt>> {
        stmts(self.req(key)?, &self.path.field(key))
    }
}

fn stmts(v: &Value, path: &NodePath) -> Res<Vec<Stmt>> {
    let Value::Array(items) = v else {
        return Err(Diagnostic::new(path.clone(), DiagCode::BadField, "expected a list of blocks"));
    };
    items.iter().enumerate().map(|(i, item)| stmt(item, &path.index(i))).collect()
}

fn tag<'a>(obj: &Obj<'a>) -> Res<&'a str> {
    match obj.req("type")? {
        Value::String(s) => Ok(s),
        _ => Err(Diagnostic::new(obj.path.field("type"), DiagCode::BadField, "type must be a string")),
    }
}

fn stmt(v: &Value, path: &NodePath) -> Res<Stmt> {
    let o = Obj::new(v, path, "block")?;
    let t = tag(&o)?;
    let fields: &[&str] = match t {
        "move_forward" | "move_backward" => &["distance_m"],
        "turn_left" | "turn_right" => &["angle_deg"],
        "led_on" => &["color"],
        "led_off" | "teleop" => &[],
        "repeat" => &["count", "body"],
        "while" => &["cond", "body"],
        "if" => &["cond", "then", "else"],
        "wait" => &["seconds"],
        "set_var" => &["name", "value"],
        "print" => &["value"],
        "ros_connect" => &["url"],
        "create_publisher" | "create_subscriber" => &["id", "topic", "msg_type"],
        "publish" => &["id", "value"],
        "on_message" => &["id", "var", "body"],
        "wander" => &["threshold_m", "forward_speed", "turn_speed"],
        "set_pid" => &["left", "right"],
        other => {
            return Err(Diagnostic::new(path.clone(), DiagCode::UnknownBlock, format!("unknown block type: {other}")))
        }
    };
    let mut allowed = vec!["type"];
    allowed.extend_from_slice(fields);
    o.only(&allowed)?;
    Ok(match t {
        "move_forward" => Stmt::MoveForward { distance_m: o.expr("distance_m")? },
        "move_backward" => Stmt::MoveBackward { distance_m: o.expr("distance_m")? },
        "turn_left" => Stmt::TurnLeft { angle_deg: o.expr("angle_deg")? },
        "turn_right" => Stmt::TurnRight { angle_deg: o.expr("angle_deg")? },
        "led_on" => Stmt::LedOn { color: o.expr("color")? },
        "led_off" => Stmt::LedOff,
        "teleop" => Stmt::Teleop,
        "repeat" => Stmt::Repeat { count: o.expr("count")?, body: o.body("body")? },
        "while" => Stmt::While { cond: o.expr("cond")?, body: o.body("body")? },
        "if" => Stmt::If {
            cond: o.expr("cond")?,
            then: o.body("then")?,
            otherwise: match o.opt("else") {
                Some(v) => stmts(v, &path.field("else"))?,
                None => Vec::new(),
            },
        },
        "wait" => Stmt::Wait { seconds: o.expr("seconds")? },
        "set_var" => Stmt::SetVar { name: o.string("name")?, value: o.expr("value")? },
        "print" => Stmt::Print { value: o.expr("value")? },
        "ros_connect" => Stmt::RosConnect { url: o.expr("url")? },
        "create_publisher" => {
            Stmt::CreatePublisher { id: o.string("id")?, topic: o.expr("topic")?, msg_type: o.expr("msg_type")? }
        }
        "create_subscriber" => {
            Stmt::CreateSubscriber { id: o.string("id")?, topic: o.expr("topic")?, msg_type: o.expr("msg_type")? }
        }
        "publish" => Stmt::Publish { id: o.string("id")?, value: o.expr("value")? },
        "on_message" => Stmt::OnMessage { id: o.string("id")?, var: o.string("var")?, body: o.body("body")? },
        "wander" => Stmt::Wander {
            threshold_m: o.opt_expr("threshold_m")?,
            forward_speed: o.opt_expr("forward_speed")?,
            turn_speed: o.opt_expr("turn_speed")?,
        },
        "set_pid" => Stmt::SetPid {
            left: gains(o.req("left")?, &path.field("left"))?,
            right: gains(o.req("right")?, &path.field("right"))?,
        },
        _ => unreachable!("tag checked above"),
    })
}

fn gains(v: &Value, path: &NodePath) -> Res<GainExprs> {
    let o = Obj::new(v, path, "gains")?;
    o.only(&["kp", "ki", "kd"])?;
    Ok(GainExprs { kp: o.expr("kp")?, ki: o.expr("ki")?, kd: o.expr("kd")? })
}

fn expr(v: &Value, path: &NodePath) -> Res<Expr> {
    let o = Obj::new(v, path, "expression")?;
    let t = tag(&o)?;
    let fields: &[&str] = match t {
        "num" | "str" | "bool" => &["value"],
        "var" => &["name"],
        "binop" => &["op", "lhs", "rhs"],
        "get_sensor" => &["which"],
        "field_get" => &["var", "selector"],
        "make_twist" => &["lx", "ly", "lz", "ax", "ay", "az"],
        other => {
            return Err(Diagnostic::new(
                path.clone(),
                DiagCode::UnknownExpr,
                format!("unknown expression type: {other}"),
            ))
        }
    };
    let mut allowed = vec!["type"];
    allowed.extend_from_slice(fields);
    o.only(&allowed)?;
    let bad = |key: &str, msg: String| Diagnostic::new(path.field(key), DiagCode::BadField, msg);
    Ok(match t {
        "num" => match o.req("value")?.as_f64() {
            Some(x) => Expr::Num(x),
            None => return Err(bad("value", "num value must be a number".into())),
        },
        "str" => Expr::Str(o.string("value")?),
        "bool" => match o.req("value")? {
            Value::Bool(b) => Expr::Bool(*b),
            _ => return Err(bad("value", "bool value must be true or false".into())),
        },
        "var" => Expr::Var(o.string("name")?),
        "binop" => {
            let sym = o.string("op")?;
            let op = BinOp::from_symbol(&sym).ok_or_else(|| bad("op", format!("unknown operator: {sym}")))?;
            Expr::Binop { op, lhs: Box::new(o.expr("lhs")?), rhs: Box::new(o.expr("rhs")?) }
        }
        "get_sensor" => {
            let which = o.string("which")?;
            let key = SensorKey::from_name(&which).ok_or_else(|| bad("which", format!("unknown sensor: {which}")))?;
            Expr::GetSensor(key)
        }
        "field_get" => Expr::FieldGet { var: o.string("var")?, selector: o.string("selector")? },
        "make_twist" => {
            // omitted components are zero
            let c = |k: &str| -> Res<Box<Expr>> { Ok(Box::new(o.opt_expr(k)?.unwrap_or(Expr::Num(0.0)))) };
            Expr::MakeTwist { lx: c("lx")?, ly: c("ly")?, lz: c("lz")?, ax: c("ax")?, ay: c("ay")?, az: c("az")? }
        }
        _ => unreachable!("tag checked above"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(text: &str) -> Diagnostic {
        parse_document(text).unwrap_err()
    }

    #[test]
    fn parses_square() {
        let p = parse_document(
            r#"{"version":1,"name":"square","blocks":[{"type":"repeat","count":{"type":"num","value":4},"body":[
                {"type":"move_forward","distance_m":{"type":"num","value":1}},
                {"type":"turn_left","angle_deg":{"type":"num","value":90}}]}]}"#,
        )
        .unwrap();
        assert_eq!(p.name, "square");
        let Stmt::Repeat { count, body } = &p.blocks[0] else { panic!() };
        assert_eq!(*count, Expr::Num(4.0));
        assert_eq!(body[1], Stmt::TurnLeft { angle_deg: Expr::Num(90.0) });
    }

    #[test]
    fn unknown_block_reported_at_node() {
        let d = err(r#"{"version":1,"name":"x","blocks":[{"type":"fly"}]}"#);
        assert_eq!(d.code, DiagCode::UnknownBlock);
        assert_eq!(d.message, "unknown block type: fly");
        assert_eq!(d.path.to_string(), "blocks[0]");
    }

    #[test]
    fn nested_errors_carry_full_path() {
        let d = err(
            r#"{"version":1,"name":"x","blocks":[{"type":"led_off"},{"type":"repeat","count":{"type":"num","value":2},
                "body":[{"type":"move_forward","distance_m":{"type":"num","value":"far"}}]}]}"#,
        );
        assert_eq!(d.path.to_string(), "blocks[1].body[0].distance_m.value");
        let d = err(r#"{"version":1,"name":"x","blocks":[{"type":"led_off","colour":"red"}]}"#);
        assert_eq!((d.code, d.path.to_string()), (DiagCode::UnknownField, "blocks[0].colour".into()));
        let d = err(r#"{"version":1,"name":"x","blocks":[{"type":"wait"}]}"#);
        assert_eq!((d.code, d.path.to_string()), (DiagCode::MissingField, "blocks[0].seconds".into()));
        let d = err(r#"{"version":1,"name":"x","blocks":[{"type":"print","value":{"type":"sqrt"}}]}"#);
        assert_eq!(d.code, DiagCode::UnknownExpr);
    }

    #[test]
    fn document_level_errors() {
        assert_eq!(err("{").code, DiagCode::ParseError);
        assert_eq!(err(r#"{"version":2,"name":"x","blocks":[]}"#).code, DiagCode::UnsupportedVersion);
        assert_eq!(err(r#"{"version":1,"blocks":[]}"#).code, DiagCode::MissingField);
        assert_eq!(err(r#"[]"#).code, DiagCode::BadField);
    }

    #[test]
    fn twist_components_default_to_zero() {
        let p = parse_document(
            r#"{"version":1,"name":"t","blocks":[{"type":"print","value":{"type":"make_twist","lx":{"type":"num","value":0.2}}}]}"#,
        )
        .unwrap();
        assert_eq!(p.blocks[0], Stmt::Print { value: Expr::twist(0.2, 0.0) });
    }

    #[test]
    fn operator_alias_accepted() {
        let p = parse_document(
            r#"{"version":1,"name":"t","blocks":[{"type":"print","value":{"type":"binop","op":"×",
                "lhs":{"type":"num","value":2},"rhs":{"type":"num","value":3}}}]}"#,
        )
        .unwrap();
        assert_eq!(p.blocks[0], Stmt::Print { value: Expr::binop(BinOp::Mul, Expr::num(2.0), Expr::num(3.0)) });
    }
}
